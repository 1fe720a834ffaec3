"""Lemma accuracy, lemma Levenshtein distance, morph accuracy and morph F1."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Optional

from .errors import AlignmentError

REPORT_KEYS = ("lemma_acc", "lemma_lev", "morph_acc", "morph_f1", "tokens")


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance over code points."""
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            current.append(min(previous[j] + 1, current[j - 1] + 1,
                               previous[j - 1] + (ca != cb)))
        previous = current
    return previous[-1]


def feature_matches(gold: tuple[str, ...], pred: tuple[str, ...]) -> tuple[int, int, int]:
    """(true positives, false positives, false negatives) for one token.

    Values are compared as multisets of exact strings.
    """
    if gold == pred:
        return len(gold), 0, 0
    g, p = Counter(gold), Counter(pred)
    tp = sum((g & p).values())
    return tp, sum(p.values()) - tp, sum(g.values()) - tp


def _f1(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    return 1.0 if denom == 0 else 2 * tp / denom


@dataclass
class EvalReport:
    lemma_accuracy: float
    lemma_levenshtein: float
    morph_accuracy: float
    morph_f1: float
    token_count: int

    def as_dict(self) -> dict:
        return dict(zip(REPORT_KEYS, (self.lemma_accuracy, self.lemma_levenshtein,
                                      self.morph_accuracy, self.morph_f1, self.token_count)))

    def to_text(self) -> str:
        rows = [("Lemma accuracy", f"{self.lemma_accuracy:.2f}"),
                ("Lemma Levenshtein", f"{self.lemma_levenshtein:.3f}"),
                ("Morph accuracy", f"{self.morph_accuracy:.2f}"),
                ("Morph F1", f"{self.morph_f1:.2f}"),
                ("Tokens", str(self.token_count))]
        table = "\n".join(f"{name:<20}{value:>10}" for name, value in rows)
        block = "\n".join(f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}"
                          for k, v in self.as_dict().items())
        return table + "\n\n" + block + "\n"


def parse_report(text: str) -> dict:
    """Read the ``key=value`` block written by :meth:`EvalReport.to_text`."""
    out = {}
    for line in text.splitlines():
        key, sep, value = line.partition("=")
        if sep and key in REPORT_KEYS:
            out[key] = int(value) if key == "tokens" else float(value)
    return out


def _bundle_values(tok) -> tuple[str, ...]:
    return () if tok.bundle is None else tok.bundle.values


def _bundle_text(tok) -> Optional[str]:
    return None if tok.bundle is None else tok.bundle.canonical_text


def aligned_tokens(gold, pred):
    if len(gold.sentences) != len(pred.sentences):
        raise AlignmentError(f"gold has {len(gold.sentences)} sentences, "
                             f"prediction {len(pred.sentences)}")
    for k, (gs, ps) in enumerate(zip(gold.sentences, pred.sentences), start=1):
        gt, pt = gs.tokens, ps.tokens
        if len(gt) != len(pt):
            raise AlignmentError(f"sentence {k}: gold has {len(gt)} tokens, prediction {len(pt)}")
        for g, p in zip(gt, pt):
            if g.form != p.form:
                raise AlignmentError(f"sentence {k}, token {g.index}: {g.form!r} vs {p.form!r}")
            yield g, p


def evaluate(gold, pred, macro_f1: bool = False) -> EvalReport:
    """Compare a predicted corpus against gold; percentages in [0, 100].

    Morph F1 is micro-averaged over feature values unless ``macro_f1``, which
    averages per-token F1 instead.
    """
    n = lemma_ok = morph_ok = lev_total = 0
    tp = fp = fn = 0
    token_f1 = 0.0
    for g, p in aligned_tokens(gold, pred):
        n += 1
        gl, pl = g.lemma or "", p.lemma or ""
        lemma_ok += gl == pl
        lev_total += levenshtein(gl, pl)
        morph_ok += _bundle_text(g) == _bundle_text(p)
        t, f_p, f_n = feature_matches(_bundle_values(g), _bundle_values(p))
        tp, fp, fn = tp + t, fp + f_p, fn + f_n
        token_f1 += _f1(t, f_p, f_n)
    if n == 0:
        return EvalReport(100.0, 0.0, 100.0, 100.0, 0)
    f1 = token_f1 / n if macro_f1 else _f1(tp, fp, fn)
    return EvalReport(100.0 * lemma_ok / n, lev_total / n, 100.0 * morph_ok / n, 100.0 * f1, n)
