"""Exception hierarchy shared by all modules."""


class MorphError(Exception):
    """Base class for data and configuration errors raised by the toolkit."""


class ConlluParseError(MorphError):
    def __init__(self, message, line_number=None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class ConlluEncodingError(MorphError):
    pass


class RuleParseError(MorphError):
    def __init__(self, message, position=None):
        self.position = position
        if position is not None:
            message = f"position {position}: {message}"
        super().__init__(message)


class InapplicableRuleError(MorphError):
    pass


class InvalidInputError(MorphError, ValueError):
    pass


class BundleFormatError(MorphError):
    pass


class EmbeddingFormatError(MorphError):
    pass


class AlignmentError(MorphError):
    pass


class ConfigError(MorphError):
    pass


class TrainingDivergence(MorphError):
    pass


class ModelFormatError(MorphError):
    pass


class VersionMismatchError(ModelFormatError):
    pass


class ChecksumError(ModelFormatError):
    pass


class MaskError(MorphError):
    pass


class EnsembleError(MorphError):
    pass
