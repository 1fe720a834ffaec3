"""Reading and writing shared-task CoNLL-U files.

Only columns 3 (lemma) and 6 (feature bundle) are interpreted; every other
column is carried through verbatim so an untouched file serializes back
byte-for-byte.  Multiword range lines (``1-2``) and empty nodes (``1.1``)
are kept as raw text in their original position and never become
prediction targets.
"""

from __future__ import annotations

import io
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterator, Optional, Union

from .errors import BundleFormatError, ConlluEncodingError, ConlluParseError
from .tagset import FeatureBundle, parse_bundle

N_COLUMNS = 10
LEMMA_COL = 2
FEATS_COL = 5

_SPLIT_SUFFIX = re.compile(r"-um-(train|dev|test|covered-test)$")
_SENT_ID = re.compile(r"^#\s*sent[-_]id\s*=\s*(.*?)\s*$")


class Token:
    """A regular (integer-indexed) token line."""

    __slots__ = ("index", "form", "_lemma", "_bundle", "raw_columns")

    def __init__(self, index: int, form: str, lemma: Optional[str],
                 bundle: Optional[FeatureBundle], raw_columns: list[str]):
        self.index = index
        self.form = form
        self._lemma = lemma
        self._bundle = bundle
        self.raw_columns = list(raw_columns)

    @classmethod
    def make(cls, index: int, form: str, lemma: Optional[str] = None,
             bundle: Optional[Union[FeatureBundle, str]] = None) -> "Token":
        if isinstance(bundle, str):
            bundle = parse_bundle(bundle)
        cols = [str(index), form, "_", "_", "_", "_", "_", "_", "_", "_"]
        tok = cls(index, form, None, None, cols)
        tok.lemma = lemma
        tok.bundle = bundle
        return tok

    @property
    def lemma(self) -> Optional[str]:
        return self._lemma

    @lemma.setter
    def lemma(self, value: Optional[str]) -> None:
        if value == "":
            raise ValueError("empty lemma is not representable in CoNLL-U")
        self._lemma = value
        self.raw_columns[LEMMA_COL] = "_" if value is None else value

    @property
    def bundle(self) -> Optional[FeatureBundle]:
        return self._bundle

    @bundle.setter
    def bundle(self, value: Optional[FeatureBundle]) -> None:
        self._bundle = value
        self.raw_columns[FEATS_COL] = "_" if value is None else value.canonical_text

    def line(self) -> str:
        return "\t".join(self.raw_columns)

    def copy(self) -> "Token":
        return Token(self.index, self.form, self._lemma, self._bundle, self.raw_columns)

    def __eq__(self, other):
        if not isinstance(other, Token):
            return NotImplemented
        return (self.index == other.index and self.form == other.form
                and self._lemma == other._lemma and self._bundle == other._bundle
                and self.raw_columns == other.raw_columns)

    def __repr__(self):
        return f"Token({self.index}, {self.form!r}, lemma={self._lemma!r}, bundle={self._bundle})"


@dataclass
class Sentence:
    comments: list[str] = field(default_factory=list)
    # Tokens interleaved with raw range / empty-node lines, in file order.
    lines: list[Union[Token, str]] = field(default_factory=list)
    treebank_id: str = ""
    # Per-token contextual vectors attached from a sidecar; never serialized.
    contextual: Optional[object] = field(default=None, compare=False, repr=False)

    @property
    def tokens(self) -> list[Token]:
        return [x for x in self.lines if isinstance(x, Token)]

    @property
    def sent_id(self) -> Optional[str]:
        for c in self.comments:
            m = _SENT_ID.match(c)
            if m:
                return m.group(1)
        return None

    def copy(self) -> "Sentence":
        return Sentence(list(self.comments),
                        [x.copy() if isinstance(x, Token) else x for x in self.lines],
                        self.treebank_id, self.contextual)


@dataclass
class Corpus:
    sentences: list[Sentence] = field(default_factory=list)
    treebank_id: str = ""
    language_id: str = ""

    def tokens(self) -> Iterator[Token]:
        for s in self.sentences:
            yield from s.tokens

    @property
    def token_count(self) -> int:
        return sum(len(s.tokens) for s in self.sentences)

    def copy(self) -> "Corpus":
        return Corpus([s.copy() for s in self.sentences], self.treebank_id, self.language_id)

    def __len__(self):
        return len(self.sentences)


def language_of(treebank_id: str) -> str:
    """``UD_English-EWT`` and ``English-EWT`` give ``English``; ``en_ewt`` gives ``en``."""
    name = Path(treebank_id).name
    if name.startswith("UD_"):
        name = name[3:]
    head = name.split("-", 1)[0]
    return head.split("_", 1)[0] if "_" in head else head


def _parse_token(cols: list[str], lineno: int) -> Token:
    try:
        index = int(cols[0])
    except ValueError:
        raise ConlluParseError(f"bad token index {cols[0]!r}", lineno) from None
    form = cols[1]
    if not form:
        raise ConlluParseError("empty form", lineno)
    lemma_col = cols[LEMMA_COL]
    lemma = None if lemma_col == "_" and form != "_" else lemma_col
    if lemma == "":
        raise ConlluParseError("empty lemma column", lineno)
    feats = cols[FEATS_COL]
    bundle = None
    if feats != "_":
        try:
            bundle = parse_bundle(feats)
        except BundleFormatError as e:
            raise ConlluParseError(str(e), lineno) from None
    return Token(index, form, lemma, bundle, cols)


def _finish(sentence: Sentence, lineno: int) -> Sentence:
    for expected, tok in enumerate(sentence.tokens, start=1):
        if tok.index != expected:
            raise ConlluParseError(f"token index {tok.index}, expected {expected}", lineno)
    return sentence


def parse_conllu(data: Union[bytes, BinaryIO], treebank_id: str = "",
                 language_id: Optional[str] = None) -> Corpus:
    """Parse UTF-8 CoNLL-U bytes (or a binary stream) into a :class:`Corpus`."""
    raw = data if isinstance(data, (bytes, bytearray)) else data.read()
    try:
        text = bytes(raw).decode("utf-8")
    except UnicodeDecodeError as e:
        raise ConlluEncodingError(f"invalid UTF-8 at byte {e.start}") from None
    if language_id is None:
        language_id = language_of(treebank_id) if treebank_id else ""

    sentences: list[Sentence] = []
    current: Optional[Sentence] = None
    lineno = 0
    for lineno, line in enumerate(text.split("\n"), start=1):
        if line.endswith("\r"):
            line = line[:-1]
        if not line.strip():
            if current is not None:
                sentences.append(_finish(current, lineno))
                current = None
            continue
        if current is None:
            current = Sentence(treebank_id=treebank_id)
        if line.startswith("#"):
            if current.lines:
                # comment inside a sentence body: keep it in place
                current.lines.append(line)
            else:
                current.comments.append(line)
            continue
        cols = line.split("\t")
        if len(cols) != N_COLUMNS:
            raise ConlluParseError(f"expected {N_COLUMNS} columns, got {len(cols)}", lineno)
        head = cols[0]
        if "-" in head or "." in head:
            current.lines.append(line)
        else:
            current.lines.append(_parse_token(cols, lineno))
    if current is not None:
        sentences.append(_finish(current, lineno))
    return Corpus(sentences, treebank_id, language_id)


def serialize_conllu(corpus: Corpus) -> bytes:
    out = io.StringIO()
    for sentence in corpus.sentences:
        for c in sentence.comments:
            out.write(c)
            out.write("\n")
        for item in sentence.lines:
            out.write(item.line() if isinstance(item, Token) else item)
            out.write("\n")
        out.write("\n")
    return out.getvalue().encode("utf-8")


def read_conllu(path, treebank_id: Optional[str] = None) -> Corpus:
    path = Path(path)
    if treebank_id is None:
        treebank_id = _SPLIT_SUFFIX.sub("", path.name.split(".")[0])
        # shared-task files are named like en_ewt-um-train.conllu inside UD_English-EWT/
        if path.parent.name.startswith("UD_"):
            treebank_id = path.parent.name
    with open(path, "rb") as f:
        return parse_conllu(f, treebank_id)


def write_conllu(corpus: Corpus, path) -> None:
    with open(path, "wb") as f:
        f.write(serialize_conllu(corpus))
