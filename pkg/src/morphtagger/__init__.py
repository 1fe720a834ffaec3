"""Contextual lemmatization and morphological tagging with lemma-rule classification."""

__version__ = "0.1.0"
