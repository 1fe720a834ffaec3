"""Probability-averaging ensembles and development-set model selection.

Members may have been trained on different data (a per-treebank model next
to a merged one), so their label indices differ.  Distributions are first
projected into a shared space keyed by the canonical rule / bundle strings,
labels a member does not know receiving probability 0, and then averaged.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence, Union

import numpy as np

from .errors import EnsembleError
from .metrics import EvalReport, evaluate
from .model.tagger import TaggerModel
from .model.training import allowed_vector, choose_rules, fill_corpus, restrict
from .model.vocab import UNK

CONFIGURATIONS = ("regular", "merged", "no_contextual")
METHODS = ("any_subset", "configuration", "manual")


@dataclass(frozen=True, order=True)
class ModelConfigurationId:
    configuration: str
    replica: int

    def __post_init__(self):
        if self.configuration not in CONFIGURATIONS:
            raise EnsembleError(f"unknown configuration {self.configuration!r}")
        if not 1 <= self.replica <= 3:
            raise EnsembleError("replica index must be 1, 2 or 3")

    @property
    def name(self) -> str:
        return f"{self.configuration}-{self.replica}"

    @classmethod
    def parse(cls, name: str) -> "ModelConfigurationId":
        configuration, _, replica = name.rpartition("-")
        try:
            return cls(configuration, int(replica))
        except ValueError:
            raise EnsembleError(f"bad model configuration name {name!r}") from None

    def __str__(self):
        return self.name


GRID = tuple(ModelConfigurationId(c, r) for c in CONFIGURATIONS for r in (1, 2, 3))


@dataclass
class EnsembleSpec:
    members: tuple
    method: str
    score: Optional[float] = None
    mask: Optional[str] = None

    def __post_init__(self):
        if not self.members:
            raise EnsembleError("an ensemble needs at least one member")
        if self.method not in METHODS:
            raise EnsembleError(f"unknown selection method {self.method!r}")

    def to_text(self, header: str = "") -> str:
        lines = [header.rstrip("\n")] if header else []
        lines.append(f"method = {self.method}")
        if self.score is not None:
            lines.append(f"score = {self.score!r}")
        if self.mask is not None:
            lines.append(f"mask = {self.mask}")
        lines += [f"member = {m}" for m in self.members]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "EnsembleSpec":
        method, score, mask, members = None, None, None, []
        for line in text.splitlines():
            if not line.strip() or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not sep:
                raise EnsembleError(f"bad ensemble spec line {line!r}")
            if key == "method":
                method = value
            elif key == "score":
                score = float(value)
            elif key == "mask":
                mask = value
            elif key == "member":
                members.append(value)
            else:
                raise EnsembleError(f"unknown ensemble spec key {key!r}")
        if method is None:
            raise EnsembleError("ensemble spec has no method")
        return cls(tuple(members), method, score, mask)

    def member_paths(self, base: Union[str, Path]) -> list[Path]:
        base = Path(base)
        return [p if p.is_absolute() else base / p for p in map(Path, self.members)]

    def mask_path(self, base: Union[str, Path]) -> Optional[Path]:
        if self.mask is None:
            return None
        p = Path(self.mask)
        return p if p.is_absolute() else Path(base) / p


@dataclass
class LabelSpace:
    rules: list[str] = field(default_factory=lambda: [UNK])
    bundles: list[str] = field(default_factory=lambda: [UNK])

    @classmethod
    def union(cls, models: Sequence[TaggerModel]) -> "LabelSpace":
        rules = dict.fromkeys([UNK])
        bundles = dict.fromkeys([UNK])
        for m in models:
            rules.update(dict.fromkeys(m.vocab.rules.to_list()))
            bundles.update(dict.fromkeys(m.vocab.bundles.to_list()))
        return cls(list(rules), list(bundles))


def _projection(member_labels: Sequence[str], space_labels: Sequence[str]) -> np.ndarray:
    where = {lab: i for i, lab in enumerate(space_labels)}
    return np.array([where.get(lab, 0) for lab in member_labels], dtype=np.int64)


def _project(probs: np.ndarray, member_labels, space_labels) -> np.ndarray:
    if list(member_labels) == list(space_labels):
        return probs
    out = np.zeros((probs.shape[0], len(space_labels)))
    target = _projection(member_labels, space_labels)
    # the member's own UNK slot stays in the shared UNK slot
    np.add.at(out, (slice(None), target), probs)
    return out


@dataclass
class MemberOutput:
    rule_probs: np.ndarray
    bundle_probs: np.ndarray


def member_outputs(models: Sequence[TaggerModel], corpus, space: LabelSpace,
                   word_vectors=None, batch_size: int = 64) -> list[MemberOutput]:
    """Each member's full distributions on ``corpus``, projected into ``space``."""
    sentences = [s for s in corpus.sentences if s.tokens]
    outputs = []
    for model in models:
        rps, tps = [], []
        for i in range(0, len(sentences), batch_size):
            feats = [model.featurize(s, word_vectors, gold=False)
                     for s in sentences[i:i + batch_size]]
            rp, tp = model.distributions(model.make_batch(feats))
            rps.append(rp)
            tps.append(tp)
        if not rps:
            rp = np.zeros((0, len(model.vocab.rules)))
            tp = np.zeros((0, len(model.vocab.bundles)))
        else:
            rp, tp = np.concatenate(rps), np.concatenate(tps)
        outputs.append(MemberOutput(_project(rp, model.vocab.rules.items, space.rules),
                                    _project(tp, model.vocab.bundles.items, space.bundles)))
    return outputs


def average(outputs: Sequence[MemberOutput]) -> MemberOutput:
    k = len(outputs)
    rp = np.sum([o.rule_probs for o in outputs], axis=0) / k
    tp = np.sum([o.bundle_probs for o in outputs], axis=0) / k
    return MemberOutput(rp, tp)


def decode(avg: MemberOutput, space: LabelSpace, forms: Sequence[str], mask=None):
    """Masked argmax with the applicability fallback; returns (lemmas, bundles, ids)."""
    rule_ok = allowed_vector(space.rules, None if mask is None else set(mask.rules))
    tag_ok = allowed_vector(space.bundles, None if mask is None else set(mask.bundles))
    if not tag_ok.any():
        raise EnsembleError("mask leaves no bundle in the ensemble's label space")
    rp = restrict(avg.rule_probs, rule_ok)
    tp = restrict(avg.bundle_probs, tag_ok)
    rule_ids, lemmas, _ = choose_rules(rp, rule_ok, forms, space.rules)
    tag_ids = np.flatnonzero(tag_ok)[np.argmax(tp[:, tag_ok], axis=1)]
    return lemmas, [space.bundles[i] for i in tag_ids], rule_ids, tag_ids


def _forms(corpus) -> list[str]:
    return [t.form for t in corpus.tokens()]


def ensemble_predict(models: Sequence[TaggerModel], corpus, mask=None, word_vectors=None,
                     align: str = "union"):
    """Average member distributions, apply ``mask``, decode into a corpus copy.

    ``align="strict"`` refuses members whose label vocabularies differ
    instead of projecting them into the union space.
    """
    if not models:
        raise EnsembleError("an ensemble needs at least one member")
    if align == "strict":
        first = models[0].vocab
        for m in models[1:]:
            if m.vocab.rules != first.rules or m.vocab.bundles != first.bundles:
                raise EnsembleError("members have incompatible label spaces")
    elif align != "union":
        raise EnsembleError(f"unknown alignment {align!r}")
    space = LabelSpace.union(models)
    outputs = member_outputs(models, corpus, space, word_vectors)
    lemmas, bundles, _, _ = decode(average(outputs), space, _forms(corpus), mask)
    return fill_corpus(corpus, lemmas, bundles)


def default_objective(report: EvalReport) -> float:
    return (report.lemma_accuracy + report.morph_accuracy) / 2


class _SubsetScorer:
    def __init__(self, models, dev, mask, word_vectors, objective):
        self.space = LabelSpace.union(models)
        self.outputs = member_outputs(models, dev, self.space, word_vectors)
        self.dev = dev
        self.forms = _forms(dev)
        self.mask = mask
        self.objective = objective

    def score(self, subset: Sequence[int]) -> tuple[float, EvalReport]:
        avg = average([self.outputs[i] for i in subset])
        lemmas, bundles, _, _ = decode(avg, self.space, self.forms, self.mask)
        report = evaluate(self.dev, fill_corpus(self.dev, lemmas, bundles))
        return self.objective(report), report


def _as_items(models) -> tuple[list, list]:
    if isinstance(models, Mapping):
        return list(models.keys()), list(models.values())
    return list(range(len(models))), list(models)


def select_any_subset(models, dev, mask=None, word_vectors=None,
                      objective: Callable[[EvalReport], float] = default_objective) -> EnsembleSpec:
    """Try every non-empty subset on ``dev`` and keep the best.

    Ties go to the smaller subset, then to the lexicographically first one (by
    member position).  With many members and a small dev set this picks
    subsets that win by noise.
    """
    refs, members = _as_items(models)
    if not members:
        raise EnsembleError("no candidate models")
    scorer = _SubsetScorer(members, dev, mask, word_vectors, objective)
    best, best_subset = -np.inf, None
    for size in range(1, len(members) + 1):
        for subset in itertools.combinations(range(len(members)), size):
            s, _ = scorer.score(subset)
            if s > best:
                best, best_subset = s, subset
    return EnsembleSpec(tuple(refs[i] for i in best_subset), "any_subset", float(best))


def configuration_candidates(refs: Sequence[ModelConfigurationId]) -> list[tuple[str, list[int]]]:
    out = []
    for conf in CONFIGURATIONS:
        idx = sorted((i for i, r in enumerate(refs) if r.configuration == conf),
                     key=lambda i: refs[i].replica)
        if idx:
            out.append((conf, idx))
    return out


def select_configuration(models: Mapping, dev, mask=None, word_vectors=None,
                         objective: Callable[[EvalReport], float] = default_objective) -> EnsembleSpec:
    """Ensemble the replicas of each configuration and keep the best ensemble.

    Keys of ``models`` are :class:`ModelConfigurationId` (or their names);
    ties resolve in the order regular, merged, no_contextual.
    """
    refs, members = _as_items(models)
    refs = [r if isinstance(r, ModelConfigurationId) else ModelConfigurationId.parse(str(r))
            for r in refs]
    candidates = configuration_candidates(refs)
    if not candidates:
        raise EnsembleError("no candidate models")
    scorer = _SubsetScorer(members, dev, mask, word_vectors, objective)
    best, best_members = -np.inf, None
    for _, idx in candidates:
        s, _ = scorer.score(idx)
        if s > best:
            best, best_members = s, tuple(refs[i] for i in idx)
    return EnsembleSpec(best_members, "configuration", float(best))
