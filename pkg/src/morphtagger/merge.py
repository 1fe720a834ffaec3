"""Merging same-language corpora and restricting merged-model output.

A model trained on a merged corpus may emit lemma rules or bundles that
never occur in the target treebank.  A restriction mask lists what the target
treebank's own training data contains; prediction ignores everything else.
"""

from __future__ import annotations

from dataclasses import dataclass

from .conllu import Corpus
from .errors import MaskError, MorphError
from .lemma_rules import rule_inventory
from .tagset import build_inventory, CategoryTable


def merge_corpora(corpora: list[Corpus]) -> Corpus:
    """Concatenate corpora of one language; sentences keep their treebank id."""
    if not corpora:
        raise MorphError("nothing to merge")
    languages = {c.language_id for c in corpora}
    if len(languages) > 1:
        raise MorphError(f"cannot merge corpora of different languages: {sorted(languages)}")
    sentences = []
    for corpus in corpora:
        for s in corpus.sentences:
            if not s.treebank_id:
                s = s.copy()
                s.treebank_id = corpus.treebank_id
            sentences.append(s)
    ids = [c.treebank_id for c in corpora]
    merged_id = ids[0] if len(set(ids)) == 1 else "+".join(dict.fromkeys(ids))
    return Corpus(sentences, merged_id, languages.pop())


def sentences_of(corpus: Corpus, treebank_id: str) -> Corpus:
    """The sub-corpus contributed by one member treebank."""
    return Corpus([s for s in corpus.sentences if s.treebank_id == treebank_id],
                  treebank_id, corpus.language_id)


@dataclass(frozen=True)
class RestrictionMask:
    """Allowed lemma rules and bundles, as canonical strings."""

    rules: frozenset
    bundles: frozenset
    treebank_id: str = ""

    def rule_ids(self, vocab) -> set[int]:
        return {vocab.rules.get(r) for r in self.rules} - {0}

    def bundle_ids(self, vocab) -> set[int]:
        return {vocab.bundles.get(b) for b in self.bundles} - {0}

    def to_text(self) -> str:
        lines = [f"# treebank = {self.treebank_id}", "[rules]", *sorted(self.rules),
                 "", "[bundles]", *sorted(self.bundles)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RestrictionMask":
        section = None
        rules, bundles = set(), set()
        treebank = ""
        for lineno, line in enumerate(text.splitlines(), start=1):
            if line.startswith("# treebank = "):
                treebank = line[len("# treebank = "):].strip()
                continue
            if not line.strip() or line.startswith("#"):
                continue
            if line in ("[rules]", "[bundles]"):
                section = line
            elif section == "[rules]":
                rules.add(line)
            elif section == "[bundles]":
                bundles.add(line)
            else:
                raise MaskError(f"mask line {lineno}: entry outside [rules]/[bundles]")
        if not rules or not bundles:
            raise MaskError("mask needs at least one rule and one bundle")
        return cls(frozenset(rules), frozenset(bundles), treebank)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_text())

    @classmethod
    def load(cls, path) -> "RestrictionMask":
        with open(path, encoding="utf-8") as f:
            return cls.from_text(f.read())


def build_mask(merged_vocab, target_training: Corpus,
               table: CategoryTable | None = None) -> RestrictionMask:
    """Rules and bundles of ``target_training`` that the merged model knows."""
    table = table if table is not None else CategoryTable.default()
    rules = {r for r in rule_inventory(target_training) if r in merged_vocab.rules}
    bundles = {b for b in build_inventory(target_training, table).bundles
               if b in merged_vocab.bundles}
    if not rules or not bundles:
        raise MaskError(f"restriction mask for {target_training.treebank_id!r} would be empty")
    return RestrictionMask(frozenset(rules), frozenset(bundles), target_training.treebank_id)


def full_mask(vocab) -> RestrictionMask:
    return RestrictionMask(frozenset(vocab.rules.to_list()), frozenset(vocab.bundles.to_list()))
