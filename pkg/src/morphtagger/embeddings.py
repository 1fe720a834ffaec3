"""Frozen input vectors: pretrained word embeddings and contextual sidecars.

Contextual vectors are produced outside this package.  They arrive either in
the binary ``MFV1`` container::

    b"MFV1"
    repeated until EOF:
        uint32 id_length, id bytes (UTF-8)
        uint32 token_count, uint32 dimension
        token_count * dimension float32, row-major
    (all integers and floats little-endian)

or as TSV lines ``sentence_id<TAB>token_index<TAB>v1 v2 ...`` with 1-based
token indices.
"""

from __future__ import annotations

import io
import os
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Optional, Sequence, Union

import numpy as np

from .errors import AlignmentError, EmbeddingFormatError

SIDECAR_MAGIC = b"MFV1"
DEFAULT_LAST_LAYERS = 4


class WordVectorTable:
    """Read-only word -> vector lookup; unknown words get the zero vector."""

    def __init__(self, words: Sequence[str], vectors: np.ndarray):
        vectors = np.asarray(vectors, dtype=np.float32)
        if vectors.ndim != 2 or len(words) != len(vectors):
            raise EmbeddingFormatError("need one vector row per word")
        self.index = {}
        for i, w in enumerate(words):
            self.index.setdefault(w, i)
        self.vectors = vectors
        self.vectors.setflags(write=False)
        self.dimension = vectors.shape[1]
        self._zero = np.zeros(self.dimension, dtype=np.float32)
        self._zero.setflags(write=False)

    def __len__(self):
        return len(self.index)

    def __contains__(self, word):
        return word in self.index or word.lower() in self.index

    def lookup(self, word: str) -> np.ndarray:
        i = self.index.get(word)
        if i is None:
            i = self.index.get(word.lower())
        return self._zero if i is None else self.vectors[i]

    def lookup_many(self, words: Sequence[str]) -> np.ndarray:
        if not words:
            return np.zeros((0, self.dimension), dtype=np.float32)
        return np.stack([self.lookup(w) for w in words])


def load_word_vectors(stream: Union[io.TextIOBase, BinaryIO, str]) -> WordVectorTable:
    """Parse the word2vec/FastText text format (``count dim`` header line)."""
    if isinstance(stream, (str, os.PathLike)):
        with open(stream, "rb") as f:
            return load_word_vectors(f)
    data = stream.read()
    text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    lines = text.split("\n")
    header = lines[0].split()
    if len(header) != 2:
        raise EmbeddingFormatError("header must be '<count> <dimension>'")
    try:
        dim = int(header[1])
    except ValueError:
        raise EmbeddingFormatError(f"bad dimension {header[1]!r}") from None
    words, rows, seen = [], [], set()
    for lineno, line in enumerate(lines[1:], start=2):
        line = line.rstrip("\r").rstrip(" ")
        if not line:
            continue
        parts = line.split(" ")
        if len(parts) != dim + 1:
            raise EmbeddingFormatError(f"line {lineno}: expected {dim} values, got {len(parts) - 1}")
        if parts[0] in seen:
            continue
        seen.add(parts[0])
        try:
            rows.append([float(x) for x in parts[1:]])
        except ValueError:
            raise EmbeddingFormatError(f"line {lineno}: non-numeric value") from None
        words.append(parts[0])
    vectors = np.array(rows, dtype=np.float32).reshape(len(rows), dim)
    return WordVectorTable(words, vectors)


def average_last_layers(layers, k: int = DEFAULT_LAST_LAYERS) -> np.ndarray:
    """Mean of the final ``k`` layers; ``layers`` has the layer axis first."""
    layers = np.asarray(layers, dtype=np.float64)
    if k < 1 or k > len(layers):
        raise ValueError(f"cannot average last {k} of {len(layers)} layers")
    return layers[-k:].mean(axis=0)


def pool_subwords(subword_vectors, alignment: Sequence[int]) -> np.ndarray:
    """Average consecutive subword vectors into one vector per word."""
    subword_vectors = np.asarray(subword_vectors, dtype=np.float64)
    if any(c < 1 for c in alignment):
        raise AlignmentError("every word needs at least one subword")
    if sum(alignment) != len(subword_vectors):
        raise AlignmentError(f"alignment covers {sum(alignment)} subwords, "
                             f"got {len(subword_vectors)}")
    if not len(alignment):
        return np.zeros((0, subword_vectors.shape[-1]))
    bounds = np.cumsum([0, *alignment])
    return np.stack([subword_vectors[a:b].mean(axis=0) for a, b in zip(bounds, bounds[1:])])


def contextual_word_vectors(layer_outputs, alignment: Sequence[int],
                            k: int = DEFAULT_LAST_LAYERS) -> np.ndarray:
    """Layer outputs ``(layers, subwords, dim)`` -> word vectors ``(words, dim)``.

    Layers are averaged first, then subwords are pooled.
    """
    return pool_subwords(average_last_layers(layer_outputs, k), alignment)


@dataclass
class ContextualSidecar:
    vectors: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def dimension(self) -> Optional[int]:
        for v in self.vectors.values():
            return v.shape[1]
        return None

    def __len__(self):
        return len(self.vectors)

    def __getitem__(self, sentence_id: str) -> np.ndarray:
        return self.vectors[sentence_id]


def sentence_key(sentence, ordinal: int) -> str:
    """The ``sent_id`` comment if present, else the 1-based position."""
    sid = sentence.sent_id
    return sid if sid is not None else str(ordinal)


def write_sidecar(sidecar: ContextualSidecar, stream: BinaryIO) -> None:
    stream.write(SIDECAR_MAGIC)
    for sid, mat in sidecar.vectors.items():
        key = sid.encode("utf-8")
        mat = np.ascontiguousarray(mat, dtype="<f4")
        stream.write(struct.pack("<I", len(key)))
        stream.write(key)
        stream.write(struct.pack("<II", mat.shape[0], mat.shape[1]))
        stream.write(mat.tobytes())


def read_sidecar(stream: Union[BinaryIO, str]) -> ContextualSidecar:
    if isinstance(stream, (str, os.PathLike)):
        with open(stream, "rb") as f:
            return read_sidecar(f)
    data = stream.read()
    if data[:4] != SIDECAR_MAGIC:
        return _read_sidecar_tsv(data)
    vectors = {}
    pos = 4

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise EmbeddingFormatError("truncated sidecar")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    while pos < len(data):
        (n,) = struct.unpack("<I", take(4))
        sid = take(n).decode("utf-8")
        count, dim = struct.unpack("<II", take(8))
        mat = np.frombuffer(take(4 * count * dim), dtype="<f4").reshape(count, dim)
        if sid in vectors:
            raise EmbeddingFormatError(f"duplicate sentence id {sid!r} in sidecar")
        vectors[sid] = mat.astype(np.float32)
    return ContextualSidecar(vectors)


def _read_sidecar_tsv(data: bytes) -> ContextualSidecar:
    rows: dict[str, dict[int, list[float]]] = {}
    for lineno, line in enumerate(data.decode("utf-8").splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise EmbeddingFormatError(f"sidecar line {lineno}: expected 3 tab-separated fields")
        try:
            rows.setdefault(parts[0], {})[int(parts[1])] = [float(x) for x in parts[2].split()]
        except ValueError:
            raise EmbeddingFormatError(f"sidecar line {lineno}: bad number") from None
    vectors = {}
    dim = None
    for sid, by_index in rows.items():
        if sorted(by_index) != list(range(1, len(by_index) + 1)):
            raise EmbeddingFormatError(f"sentence {sid!r}: token indices must be 1..n")
        mat = np.array([by_index[i] for i in range(1, len(by_index) + 1)], dtype=np.float32)
        if dim is not None and mat.shape[1] != dim:
            raise EmbeddingFormatError(f"sentence {sid!r}: dimension {mat.shape[1]} != {dim}")
        dim = mat.shape[1]
        vectors[sid] = mat
    return ContextualSidecar(vectors)


def attach_contextual(corpus, sidecar: ContextualSidecar) -> None:
    """Store each sentence's vectors on ``sentence.contextual``."""
    dim = sidecar.dimension
    for k, sentence in enumerate(corpus.sentences, start=1):
        key = sentence_key(sentence, k)
        if key not in sidecar.vectors:
            raise AlignmentError(f"sidecar has no vectors for sentence {key!r}")
        mat = sidecar.vectors[key]
        if len(mat) != len(sentence.tokens):
            raise AlignmentError(f"sentence {key!r}: {len(mat)} vectors for "
                                 f"{len(sentence.tokens)} tokens")
        if mat.shape[1] != dim:
            raise AlignmentError(f"sentence {key!r}: inconsistent vector dimension")
        sentence.contextual = mat
