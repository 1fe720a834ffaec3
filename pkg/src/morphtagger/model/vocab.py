from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional

from ..errors import MorphError
from ..lemma_rules import rule_inventory
from ..tagset import CategoryTable, build_inventory

UNK = "<unk>"
NONE = "None"


class Index:
    """Bijection between items and integers; index 0 is the reserved UNK slot."""

    def __init__(self, items: Iterable[str] = ()):
        self.items: list[str] = [UNK]
        self.ids: dict[str, int] = {UNK: 0}
        for item in items:
            self.add(item)

    def add(self, item: str) -> int:
        i = self.ids.get(item)
        if i is None:
            i = self.ids[item] = len(self.items)
            self.items.append(item)
        return i

    def get(self, item: str, default: int = 0) -> int:
        return self.ids.get(item, default)

    def __getitem__(self, i: int) -> str:
        return self.items[i]

    def __contains__(self, item) -> bool:
        return item in self.ids

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def __eq__(self, other):
        return isinstance(other, Index) and self.items == other.items

    def to_list(self) -> list[str]:
        return self.items[1:]

    @classmethod
    def from_list(cls, items: list[str]) -> "Index":
        return cls(items)


def char_ngrams(form: str, max_n: int) -> list[str]:
    """Boundary n-grams: ``^ab`` style prefixes and ``ab$`` style suffixes."""
    out = []
    for n in range(1, min(max_n, len(form)) + 1):
        out.append("^" + form[:n])
        out.append(form[-n:] + "$")
    return out


@dataclass
class Vocabulary:
    forms: Index = field(default_factory=Index)
    chars: Index = field(default_factory=Index)
    ngrams: Index = field(default_factory=Index)
    rules: Index = field(default_factory=Index)
    bundles: Index = field(default_factory=Index)
    categories: list[str] = field(default_factory=list)
    # category -> Index whose slot 1 is the None value
    category_values: dict[str, Index] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "forms": self.forms.to_list(),
            "chars": self.chars.to_list(),
            "ngrams": self.ngrams.to_list(),
            "rules": self.rules.to_list(),
            "bundles": self.bundles.to_list(),
            "categories": {c: self.category_values[c].to_list() for c in self.categories},
        }

    @classmethod
    def from_json(cls, data: dict) -> "Vocabulary":
        cats = list(data["categories"])
        return cls(Index(data["forms"]), Index(data["chars"]), Index(data["ngrams"]),
                   Index(data["rules"]), Index(data["bundles"]), cats,
                   {c: Index(data["categories"][c]) for c in cats})


def build_vocabulary(corpus, table: Optional[CategoryTable] = None, max_ngram: int = 3) -> Vocabulary:
    """Label and input vocabularies from a gold-annotated training corpus."""
    if table is None:
        table = CategoryTable.default()
    if corpus.token_count == 0:
        raise MorphError("cannot build a vocabulary from an empty corpus")
    forms: Counter = Counter()
    chars: Counter = Counter()
    ngrams: Counter = Counter()
    for tok in corpus.tokens():
        forms[tok.form] += 1
        chars.update(tok.form)
        ngrams.update(char_ngrams(tok.form, max_ngram))

    def by_freq(counter):
        return sorted(counter, key=lambda x: (-counter[x], x))

    inventory = build_inventory(corpus, table)
    vocab = Vocabulary(Index(by_freq(forms)), Index(by_freq(chars)), Index(by_freq(ngrams)),
                       Index(rule_inventory(corpus)), Index(inventory.bundles))
    for cat, values in inventory.categories.items():
        vocab.categories.append(cat)
        vocab.category_values[cat] = Index([NONE] + sorted(v for v in values if v is not None))
    return vocab
