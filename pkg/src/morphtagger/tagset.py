"""UniMorph feature bundles and their decomposition into categories."""

from __future__ import annotations

import warnings
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Iterable, Mapping, Optional

from .errors import BundleFormatError

UNK_CATEGORY = "UNK"


class CategoryConflictWarning(UserWarning):
    """Two values of one bundle fall into the same category."""


@dataclass(frozen=True)
class FeatureBundle:
    values: tuple[str, ...]

    def __post_init__(self):
        if not self.values:
            raise BundleFormatError("feature bundle needs at least one value")

    @property
    def canonical_text(self) -> str:
        return ";".join(self.values)

    def __str__(self):
        return self.canonical_text


def parse_bundle(text: str) -> FeatureBundle:
    if not text:
        raise BundleFormatError("empty feature bundle")
    values = text.split(";")
    for i, v in enumerate(values):
        if not v:
            raise BundleFormatError(f"empty feature value at component {i} of {text!r}")
    return FeatureBundle(tuple(values))


class CategoryTable:
    """Maps feature values to UniMorph categories.

    Values ending in ``*`` in the table are prefix patterns.  Composite values
    such as ``IN+ESS`` or ``NOM/ACC`` take the category of their first part.
    Anything else lands in the synthetic ``UNK`` category.
    """

    def __init__(self, mapping: Optional[Mapping[str, str]] = None):
        self.exact: dict[str, str] = {}
        self.prefixes: list[tuple[str, str]] = []
        self.categories: list[str] = []
        self._cache: dict[str, str] = {}
        for value, category in (mapping or {}).items():
            self.add(value, category)

    def add(self, value: str, category: str) -> None:
        self._cache.clear()
        if value.endswith("*"):
            self.prefixes.append((value[:-1], category))
            self.prefixes.sort(key=lambda p: -len(p[0]))
        else:
            if value in self.exact and self.exact[value] != category:
                raise BundleFormatError(f"value {value!r} mapped to two categories")
            self.exact[value] = category
        if category not in self.categories:
            self.categories.append(category)

    @classmethod
    def from_text(cls, text: str) -> "CategoryTable":
        table = cls()
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.rstrip("\r")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise BundleFormatError(f"category table line {lineno}: expected value<TAB>category")
            table.add(parts[0], parts[1])
        return table

    @classmethod
    def load(cls, path) -> "CategoryTable":
        with open(path, encoding="utf-8") as f:
            return cls.from_text(f.read())

    @classmethod
    def default(cls) -> "CategoryTable":
        return _default_table()

    def category_of(self, value: str) -> str:
        cat = self._cache.get(value)
        if cat is None:
            cat = self._cache[value] = self._lookup(value)
        return cat

    def _lookup(self, value: str) -> str:
        cat = self.exact.get(value)
        if cat is not None:
            return cat
        for prefix, cat in self.prefixes:
            if value.startswith(prefix) and len(value) > len(prefix):
                return cat
        for sep in ("+", "/"):
            if sep in value:
                head = value.strip("{}").split(sep, 1)[0]
                if head and head != value:
                    cat = self._lookup(head)
                    if cat != UNK_CATEGORY:
                        return cat
        return UNK_CATEGORY


@lru_cache(maxsize=1)
def _default_table() -> CategoryTable:
    text = resources.files("morphtagger").joinpath("data/unimorph_categories.tsv").read_text("utf-8")
    return CategoryTable.from_text(text)


def decompose(bundle: FeatureBundle, table: CategoryTable,
              categories: Optional[Iterable[str]] = None) -> dict[str, Optional[str]]:
    """Split a bundle into ``category -> value``; absent categories map to None.

    ``categories`` fixes the key set (e.g. a corpus' used categories); by
    default all table categories plus ``UNK`` are reported.
    """
    if categories is None:
        categories = list(table.categories) + [UNK_CATEGORY]
    result: dict[str, Optional[str]] = {c: None for c in categories}
    for value in bundle.values:
        cat = table.category_of(value)
        if result.get(cat) is not None:
            warnings.warn(f"bundle {bundle.canonical_text!r}: {value!r} conflicts with "
                          f"{result[cat]!r} in category {cat}; keeping the first",
                          CategoryConflictWarning, stacklevel=2)
            continue
        result[cat] = value
    return result


def recompose(categories: Mapping[str, Optional[str]], order: Iterable[str]) -> FeatureBundle:
    """Inverse of :func:`decompose`: drop Nones, order values as in ``order``."""
    present = {v for v in categories.values() if v is not None}
    rank = {v: i for i, v in enumerate(order)}
    return FeatureBundle(tuple(sorted(present, key=lambda v: (rank.get(v, len(rank)), v))))


@dataclass
class TagInventory:
    bundles: list[str] = field(default_factory=list)
    bundle_counts: dict[str, int] = field(default_factory=dict)
    features: set[str] = field(default_factory=set)
    # category -> values seen, each set including None
    categories: dict[str, set] = field(default_factory=dict)

    @property
    def n_bundles(self) -> int:
        return len(self.bundles)

    @property
    def n_features(self) -> int:
        return len(self.features)

    @property
    def n_categories(self) -> int:
        return len(self.categories)


def build_inventory(corpus, table: CategoryTable) -> TagInventory:
    counts: Counter = Counter()
    features: set[str] = set()
    cats: dict[str, set] = {}
    for tok in corpus.tokens():
        if tok.bundle is None:
            continue
        counts[tok.bundle.canonical_text] += 1
        for value in tok.bundle.values:
            features.add(value)
            cats.setdefault(table.category_of(value), {None}).add(value)
    bundles = sorted(counts, key=lambda b: (-counts[b], b))
    ordered = {c: cats[c] for c in sorted(cats)}
    return TagInventory(bundles, dict(counts), features, ordered)
