from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import ConfigError, MaskError, MorphError, TrainingDivergence
from ..lemma_rules import IDENTITY_RULE, apply_rule, is_applicable, parse_rule
from ..metrics import EvalReport, evaluate
from ..tagset import CategoryTable, parse_bundle
from . import layers as L
from .tagger import LossParts, ModelConfig, TaggerModel, round_to_float32
from .vocab import build_vocabulary

log = logging.getLogger(__name__)

IDENTITY_TEXT = str(IDENTITY_RULE)


@dataclass
class EpochLog:
    epoch: int
    loss: float
    lemma_loss: float
    bundle_loss: float
    category_loss: float
    dev: Optional[EvalReport] = None

    def line(self) -> str:
        s = (f"epoch={self.epoch} loss={self.loss:.6f} lemma_ce={self.lemma_loss:.6f} "
             f"bundle_ce={self.bundle_loss:.6f} category_ce={self.category_loss:.6f}")
        if self.dev is not None:
            s += f" dev_lemma_acc={self.dev.lemma_accuracy:.2f} dev_morph_acc={self.dev.morph_accuracy:.2f}"
        return s


@dataclass
class TrainResult:
    model: TaggerModel
    history: list[EpochLog] = field(default_factory=list)
    best_epoch: int = 0


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    for i in range(0, n, batch_size):
        yield order[i:i + batch_size]


def _selection_score(report: EvalReport) -> float:
    return (report.lemma_accuracy + report.morph_accuracy) / 2


def train(corpus, config: ModelConfig, dev=None, table: Optional[CategoryTable] = None,
          word_vectors=None, vocab=None,
          on_epoch: Optional[Callable[[EpochLog], None]] = None) -> TrainResult:
    """Minibatch Adam training; keeps the parameters of the best dev epoch."""
    if table is None:
        table = CategoryTable.default()
    if vocab is None:
        vocab = build_vocabulary(corpus, table, config.max_ngram)
    if config.use_pretrained and not config.pretrained_dim:
        if word_vectors is None:
            raise ConfigError("use_pretrained requires word vectors")
        config.pretrained_dim = word_vectors.dimension
    if config.use_contextual and not config.contextual_dim:
        first = next((s.contextual for s in corpus.sentences if s.contextual is not None), None)
        if first is None:
            raise ConfigError("use_contextual requires contextual vectors on the training corpus")
        config.contextual_dim = int(np.shape(first)[1])
    config.validate()

    model = TaggerModel(config, vocab, table=table)
    feats = [model.featurize(s, word_vectors) for s in corpus.sentences if s.tokens]
    if not feats:
        raise MorphError("training corpus has no tokens")
    rng = np.random.default_rng(config.seed + 1)
    opt = L.Adam(model.params, lr=config.learning_rate)
    result = TrainResult(model)
    best_score, best_params = -math.inf, None

    for epoch in range(1, config.epochs + 1):
        sums = np.zeros(4)
        n_tok = 0
        for idx in _batches(len(feats), config.batch_size, rng):
            batch = model.make_batch([feats[i] for i in idx])
            parts, grads = model.loss(batch, train=True, rng=rng)
            if not math.isfinite(parts.total):
                raise TrainingDivergence(
                    f"non-finite loss at epoch {epoch}: lemma={parts.lemma} bundle={parts.bundle} "
                    f"category={parts.category}")
            L.clip_by_global_norm(grads, config.clip_norm)
            opt.step(model.params, grads)
            k = batch.n_tokens
            sums += k * np.array([parts.total, parts.lemma, parts.bundle, parts.category])
            n_tok += k
        sums /= max(n_tok, 1)
        entry = EpochLog(epoch, *sums)
        if dev is not None:
            entry.dev = evaluate(dev, predict(dev, model, word_vectors=word_vectors))
            score = _selection_score(entry.dev)
            if score > best_score:
                best_score, best_params = score, {k: v.copy() for k, v in model.params.items()}
                result.best_epoch = epoch
        result.history.append(entry)
        log.info(entry.line())
        if on_epoch is not None:
            on_epoch(entry)

    if best_params is None:
        best_params = model.params
        result.best_epoch = config.epochs
    model.params = round_to_float32(best_params)
    return result


# -- prediction -------------------------------------------------------------------

@dataclass
class Prediction:
    rule_probs: np.ndarray
    bundle_probs: np.ndarray
    rule_ids: np.ndarray  # -1 marks the identity fallback outside the label space
    bundle_ids: np.ndarray
    lemmas: list[str]
    fallback: np.ndarray  # True where the top-ranked rule was not applicable


def allowed_vector(labels: Sequence[str], allowed: Optional[set]) -> np.ndarray:
    """Boolean mask over a label list; slot 0 (UNK) is never allowed."""
    ok = np.ones(len(labels), dtype=bool) if allowed is None else \
        np.array([lab in allowed for lab in labels], dtype=bool)
    ok[0] = False
    return ok


def restrict(probs: np.ndarray, allowed: np.ndarray) -> np.ndarray:
    """Zero disallowed labels and renormalize (same argmax as excluding logits)."""
    p = probs * allowed
    z = p.sum(axis=1, keepdims=True)
    uniform = allowed / max(allowed.sum(), 1)
    return np.where(z > 0, p / np.where(z > 0, z, 1.0), uniform)


def choose_rules(probs: np.ndarray, allowed: np.ndarray, forms: Sequence[str],
                 labels: Sequence[str]):
    """Pick the most probable allowed rule that applies to each form.

    Ties go to the lowest index.  If no allowed rule applies, the identity
    rule ``↓0;d¦`` is used and the id is reported as -1.
    """
    ids = np.empty(len(forms), dtype=np.int64)
    lemmas = []
    fallback = np.zeros(len(forms), dtype=bool)
    allowed_idx = np.flatnonzero(allowed)
    for i, form in enumerate(forms):
        row = probs[i]
        best = int(allowed_idx[np.argmax(row[allowed_idx])]) if len(allowed_idx) else -1
        chosen = -1
        if best >= 0 and is_applicable(parse_rule(labels[best]), form):
            chosen = best
        else:
            fallback[i] = True
            order = allowed_idx[np.argsort(-row[allowed_idx], kind="stable")]
            for j in order:
                if is_applicable(parse_rule(labels[j]), form):
                    chosen = int(j)
                    break
        rule = parse_rule(labels[chosen]) if chosen >= 0 else IDENTITY_RULE
        ids[i] = chosen
        lemmas.append(apply_rule(rule, form))
    return ids, lemmas, fallback


def _mask_sets(mask):
    if mask is None:
        return None, None
    return set(mask.rules), set(mask.bundles)


def predict_distributions(corpus, model: TaggerModel, mask=None, word_vectors=None,
                          batch_size: int = 64) -> Prediction:
    v = model.vocab
    rule_probs, tag_probs, forms = [], [], []
    sentences = [s for s in corpus.sentences if s.tokens]
    for i in range(0, len(sentences), batch_size):
        chunk = sentences[i:i + batch_size]
        feats = [model.featurize(s, word_vectors, gold=False) for s in chunk]
        rp, tp = model.distributions(model.make_batch(feats))
        rule_probs.append(rp)
        tag_probs.append(tp)
        forms.extend(t.form for s in chunk for t in s.tokens)
    if not forms:
        empty = np.zeros(0, dtype=np.int64)
        return Prediction(np.zeros((0, len(v.rules))), np.zeros((0, len(v.bundles))),
                          empty, empty, [], np.zeros(0, dtype=bool))
    allowed_rules, allowed_bundles = _mask_sets(mask)
    rule_ok = allowed_vector(v.rules.items, allowed_rules)
    tag_ok = allowed_vector(v.bundles.items, allowed_bundles)
    if not tag_ok.any():
        raise MaskError("mask leaves no bundle in the model's label space")
    rp = restrict(np.concatenate(rule_probs), rule_ok)
    tp = restrict(np.concatenate(tag_probs), tag_ok)
    rule_ids, lemmas, fallback = choose_rules(rp, rule_ok, forms, v.rules.items)
    tag_ids = np.flatnonzero(tag_ok)[np.argmax(tp[:, tag_ok], axis=1)]
    return Prediction(rp, tp, rule_ids, tag_ids, lemmas, fallback)


def fill_corpus(corpus, lemmas: Sequence[str], bundles: Sequence[str]):
    """Copy of ``corpus`` with columns 3 and 6 replaced token by token."""
    out = corpus.copy()
    k = 0
    for sentence in out.sentences:
        for tok in sentence.tokens:
            tok.lemma = lemmas[k]
            tok.bundle = parse_bundle(bundles[k])
            k += 1
    return out


def predict(corpus, model: TaggerModel, mask=None, word_vectors=None):
    """Fill lemma and feature columns of a copy of ``corpus``."""
    pred = predict_distributions(corpus, model, mask, word_vectors)
    bundles = [model.vocab.bundles[i] for i in pred.bundle_ids]
    return fill_corpus(corpus, pred.lemmas, bundles)
