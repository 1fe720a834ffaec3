"""Multi-task tagger: shared encoder, lemma-rule head, bundle head, category heads.

Token representation is the concatenation of a learned word embedding, a
character-level representation and (optionally) frozen pretrained and
contextual vectors.  The encoder is either a stack of bidirectional LSTM
layers or a context-window feedforward network.  The lemma-rule softmax reads
the encoder state concatenated with the character representation; the bundle
softmax and the per-category softmaxes read the encoder state only.  Category
heads enter the training loss as ``w * mean(category cross-entropies)`` and
are never consulted at inference.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass, field, fields
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from ..errors import AlignmentError, ConfigError
from ..lemma_rules import rule_text
from ..tagset import CategoryTable, decompose
from . import layers as L
from .vocab import NONE, Vocabulary, char_ngrams

log = logging.getLogger(__name__)

ENCODERS = ("bilstm", "window")
CHAR_MODES = ("bag", "bigru")


@dataclass
class ModelConfig:
    encoder: str = "bilstm"
    layers: int = 1
    hidden_dim: int = 128
    word_dim: int = 64
    char_dim: int = 64
    char_mode: str = "bag"
    max_ngram: int = 3
    window: int = 2
    use_pretrained: bool = False
    pretrained_dim: int = 0
    use_contextual: bool = False
    contextual_dim: int = 0
    w: float = 1.0
    dropout: float = 0.0
    word_dropout: float = 0.0
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 20
    clip_norm: float = 5.0
    seed: int = 42

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.encoder not in ENCODERS:
            raise ConfigError(f"encoder must be one of {ENCODERS}")
        if self.char_mode not in CHAR_MODES:
            raise ConfigError(f"char_mode must be one of {CHAR_MODES}")
        for name in ("layers", "hidden_dim", "word_dim", "char_dim", "batch_size"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.encoder == "bilstm" and self.hidden_dim % 2:
            raise ConfigError("bilstm hidden_dim must be even")
        if self.char_mode == "bigru" and self.char_dim % 2:
            raise ConfigError("bigru char_dim must be even")
        if self.use_pretrained and self.pretrained_dim <= 0:
            raise ConfigError("use_pretrained needs pretrained_dim > 0")
        if self.use_contextual and self.contextual_dim <= 0:
            raise ConfigError("use_contextual needs contextual_dim > 0")
        if self.w < 0:
            raise ConfigError("regularization weight w must be nonnegative")
        if not 0 <= self.dropout < 1 or not 0 <= self.word_dropout < 1:
            raise ConfigError("dropout rates must lie in [0, 1)")

    @property
    def aux_dim(self) -> int:
        return ((self.pretrained_dim if self.use_pretrained else 0)
                + (self.contextual_dim if self.use_contextual else 0))

    @property
    def input_dim(self) -> int:
        return self.word_dim + self.char_dim + self.aux_dim

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        known = {f.name: f.type for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SentenceFeatures:
    word_ids: np.ndarray
    char_ids: list
    ngram_ids: list
    aux: Optional[np.ndarray]
    rule_ids: np.ndarray
    rule_known: np.ndarray
    bundle_ids: np.ndarray
    bundle_known: np.ndarray
    cat_ids: np.ndarray  # (T, n_categories)

    def __len__(self):
        return len(self.word_ids)


@dataclass
class Batch:
    lengths: np.ndarray
    tok_b: np.ndarray
    tok_t: np.ndarray
    word_ids: np.ndarray  # flat, one per real token
    char_matrix: object  # sparse (N x chars) mean weights, or padded ids for bigru
    char_lengths: Optional[np.ndarray]
    ngram_matrix: object
    aux: Optional[np.ndarray]
    rule_ids: np.ndarray
    rule_known: np.ndarray
    bundle_ids: np.ndarray
    bundle_known: np.ndarray
    cat_ids: np.ndarray

    @property
    def n_tokens(self) -> int:
        return len(self.word_ids)


@dataclass
class LossParts:
    lemma: float
    bundle: float
    category: float
    per_category: list = field(default_factory=list)
    w: float = 1.0

    @property
    def total(self) -> float:
        return self.lemma + self.bundle + self.w * self.category


def _glorot(rng, shape):
    limit = math.sqrt(6.0 / (shape[0] + shape[-1]))
    return rng.uniform(-limit, limit, size=shape)


class TaggerModel:
    def __init__(self, config: ModelConfig, vocab: Vocabulary,
                 params: Optional[dict] = None, table: Optional[CategoryTable] = None):
        self.config = config
        self.vocab = vocab
        self.table = table if table is not None else CategoryTable.default()
        self.params: dict[str, np.ndarray] = params if params is not None else self.init_params(
            np.random.default_rng(config.seed))

    # -- parameters ------------------------------------------------------------

    def param_shapes(self) -> dict:
        c, v = self.config, self.vocab
        shapes = {"word_emb": (len(v.forms), c.word_dim),
                  "char_emb": (len(v.chars), c.char_dim)}
        if c.char_mode == "bag":
            shapes["ngram_emb"] = (len(v.ngrams), c.char_dim)
        else:
            hc = c.char_dim // 2
            for d in ("f", "b"):
                shapes[f"char_gru_{d}.W"] = (c.char_dim, 3 * hc)
                shapes[f"char_gru_{d}.Uzr"] = (hc, 2 * hc)
                shapes[f"char_gru_{d}.Un"] = (hc, hc)
                shapes[f"char_gru_{d}.b"] = (3 * hc,)
        din = c.input_dim
        for layer in range(c.layers):
            if c.encoder == "bilstm":
                h = c.hidden_dim // 2
                for d in ("f", "b"):
                    shapes[f"enc{layer}_{d}.Wx"] = (din, 4 * h)
                    shapes[f"enc{layer}_{d}.Wh"] = (h, 4 * h)
                    shapes[f"enc{layer}_{d}.b"] = (4 * h,)
            else:
                shapes[f"enc{layer}.W"] = ((2 * c.window + 1) * din, c.hidden_dim)
                shapes[f"enc{layer}.b"] = (c.hidden_dim,)
            din = c.hidden_dim
        shapes["rule.W"] = (c.hidden_dim + c.char_dim, len(v.rules))
        shapes["rule.b"] = (len(v.rules),)
        shapes["tag.W"] = (c.hidden_dim, len(v.bundles))
        shapes["tag.b"] = (len(v.bundles),)
        for cat in v.categories:
            shapes[f"cat.{cat}.W"] = (c.hidden_dim, len(v.category_values[cat]))
            shapes[f"cat.{cat}.b"] = (len(v.category_values[cat]),)
        return shapes

    def init_params(self, rng) -> dict:
        params = {}
        for name, shape in self.param_shapes().items():
            if name.endswith("_emb"):
                p = rng.normal(0.0, 0.1, size=shape)
            elif len(shape) == 1:
                p = np.zeros(shape)
                if name.endswith(".b") and name.startswith("enc") and self.config.encoder == "bilstm":
                    h = shape[0] // 4
                    p[h:2 * h] = 1.0  # forget gate
            else:
                p = _glorot(rng, shape)
            params[name] = p
        return round_to_float32(params)

    @property
    def n_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def without_category_heads(self) -> "TaggerModel":
        vocab = Vocabulary(self.vocab.forms, self.vocab.chars, self.vocab.ngrams,
                           self.vocab.rules, self.vocab.bundles, [], {})
        params = {k: v for k, v in self.params.items() if not k.startswith("cat.")}
        return TaggerModel(self.config, vocab, params, self.table)

    # -- featurization -----------------------------------------------------------

    def aux_vectors(self, sentence, word_vectors=None) -> Optional[np.ndarray]:
        c = self.config
        parts = []
        forms = [t.form for t in sentence.tokens]
        if c.use_pretrained:
            if word_vectors is None:
                raise ConfigError("model uses pretrained word vectors; none supplied")
            if word_vectors.dimension != c.pretrained_dim:
                raise ConfigError(f"word vectors have dimension {word_vectors.dimension}, "
                                  f"model expects {c.pretrained_dim}")
            parts.append(word_vectors.lookup_many(forms))
        if c.use_contextual:
            ctx = sentence.contextual
            if ctx is None:
                raise ConfigError("model uses contextual vectors; sentence has none attached")
            ctx = np.asarray(ctx)
            if ctx.shape != (len(forms), c.contextual_dim):
                raise AlignmentError(f"contextual vectors {ctx.shape} do not match "
                                     f"({len(forms)}, {c.contextual_dim})")
            parts.append(ctx)
        if not parts:
            return None
        return np.concatenate(parts, axis=1).astype(np.float64)

    def featurize(self, sentence, word_vectors=None, aux=None, gold=True) -> SentenceFeatures:
        v = self.vocab
        toks = sentence.tokens
        T = len(toks)
        if aux is None:
            aux = self.aux_vectors(sentence, word_vectors)
        elif self.config.aux_dim == 0 or np.shape(aux) != (T, self.config.aux_dim):
            raise ConfigError(f"aux vectors of shape {np.shape(aux)} do not match "
                              f"({T}, {self.config.aux_dim})")
        rule_ids = np.zeros(T, dtype=np.int64)
        rule_known = np.zeros(T)
        bundle_ids = np.zeros(T, dtype=np.int64)
        bundle_known = np.zeros(T)
        cat_ids = np.zeros((T, len(v.categories)), dtype=np.int64)
        if gold:
            for i, tok in enumerate(toks):
                if tok.lemma is not None:
                    rt = rule_text(tok.form, tok.lemma)
                    rule_ids[i] = v.rules.get(rt)
                    rule_known[i] = 1.0
                    if rule_ids[i] == 0:
                        warnings.warn(f"lemma rule {rt} unseen in vocabulary; using UNK")
                if tok.bundle is not None:
                    bt = tok.bundle.canonical_text
                    bundle_ids[i] = v.bundles.get(bt)
                    bundle_known[i] = 1.0
                    if bundle_ids[i] == 0:
                        warnings.warn(f"bundle {bt} unseen in vocabulary; using UNK")
                    if v.categories:
                        parts = decompose(tok.bundle, self.table, v.categories)
                        for j, cat in enumerate(v.categories):
                            value = parts.get(cat)
                            cat_ids[i, j] = v.category_values[cat].get(NONE if value is None else value)
        return SentenceFeatures(
            np.array([v.forms.get(t.form) for t in toks], dtype=np.int64),
            [np.array([v.chars.get(ch) for ch in t.form], dtype=np.int64) for t in toks],
            [np.array([v.ngrams.get(g) for g in char_ngrams(t.form, self.config.max_ngram)],
                      dtype=np.int64) for t in toks],
            aux, rule_ids, rule_known, bundle_ids, bundle_known, cat_ids)

    def make_batch(self, feats: Sequence[SentenceFeatures]) -> Batch:
        lengths = np.array([len(f) for f in feats], dtype=np.int64)
        tok_b = np.repeat(np.arange(len(feats)), lengths)
        tok_t = np.concatenate([np.arange(n) for n in lengths]) if len(feats) else np.zeros(0, int)
        tok_t = tok_t.astype(np.int64)
        chars = [c for f in feats for c in f.char_ids]
        N = len(chars)
        if self.config.char_mode == "bag":
            rows = np.repeat(np.arange(N), [len(c) for c in chars])
            cols = np.concatenate(chars) if N else np.zeros(0, int)
            weights = np.repeat([1.0 / len(c) for c in chars], [len(c) for c in chars])
            char_matrix = sp.csr_matrix((weights, (rows, cols)), shape=(N, len(self.vocab.chars)))
            ngrams = [g for f in feats for g in f.ngram_ids]
            rows = np.repeat(np.arange(N), [len(g) for g in ngrams])
            cols = np.concatenate(ngrams) if N else np.zeros(0, int)
            ngram_matrix = sp.csr_matrix((np.ones(len(cols)), (rows, cols)),
                                         shape=(N, len(self.vocab.ngrams)))
            char_lengths = None
        else:
            char_lengths = np.array([len(c) for c in chars], dtype=np.int64)
            char_matrix = np.zeros((N, int(char_lengths.max()) if N else 0), dtype=np.int64)
            for i, c in enumerate(chars):
                char_matrix[i, :len(c)] = c
            ngram_matrix = None
        aux = None
        if self.config.aux_dim:
            aux = np.concatenate([f.aux for f in feats], axis=0)

        def cat(name, dtype=None):
            arrs = [getattr(f, name) for f in feats]
            return np.concatenate(arrs) if arrs else np.zeros(0, dtype=dtype)

        cat_ids = (np.concatenate([f.cat_ids for f in feats], axis=0) if feats
                   else np.zeros((0, len(self.vocab.categories)), dtype=np.int64))
        return Batch(lengths, tok_b, tok_t, cat("word_ids", np.int64), char_matrix, char_lengths,
                     ngram_matrix, aux, cat("rule_ids", np.int64), cat("rule_known"),
                     cat("bundle_ids", np.int64), cat("bundle_known"), cat_ids)

    # -- forward ----------------------------------------------------------------

    def _char_forward(self, batch: Batch):
        p = self.params
        if self.config.char_mode == "bag":
            cle = batch.char_matrix @ p["char_emb"] + batch.ngram_matrix @ p["ngram_emb"]
            return cle, None
        ids, lengths = batch.char_matrix, batch.char_lengths
        X = p["char_emb"][ids]
        rev = L.reverse_index(lengths, ids.shape[1])
        last = lengths - 1
        rows = np.arange(len(ids))
        Hf, cf = L.gru_forward(X, p["char_gru_f.W"], p["char_gru_f.Uzr"], p["char_gru_f.Un"],
                               p["char_gru_f.b"])
        Hb, cb = L.gru_forward(L.gather_time(X, rev), p["char_gru_b.W"], p["char_gru_b.Uzr"],
                               p["char_gru_b.Un"], p["char_gru_b.b"])
        cle = np.concatenate([Hf[rows, last], Hb[rows, last]], axis=1)
        return cle, (ids, rev, last, cf, cb, Hf.shape)

    def _char_backward(self, dcle, batch, cache, grads):
        if self.config.char_mode == "bag":
            grads["char_emb"] += batch.char_matrix.T @ dcle
            grads["ngram_emb"] += batch.ngram_matrix.T @ dcle
            return
        ids, rev, last, cf, cb, shape = cache
        hc = self.config.char_dim // 2
        rows = np.arange(len(ids))
        dHf = np.zeros(shape)
        dHf[rows, last] = dcle[:, :hc]
        dHb = np.zeros(shape)
        dHb[rows, last] = dcle[:, hc:]
        dX = L.gru_backward(dHf, cf, grads, "char_gru_f.")
        dX += L.scatter_time(L.gru_backward(dHb, cb, grads, "char_gru_b."), rev)
        np.add.at(grads["char_emb"], ids, dX)

    def _encoder_forward(self, X, lengths, mask):
        c, p = self.config, self.params
        caches = []
        rev = L.reverse_index(lengths, X.shape[1])
        for layer in range(c.layers):
            if c.encoder == "bilstm":
                pre = f"enc{layer}_"
                Hf, cf = L.lstm_forward(X, p[pre + "f.Wx"], p[pre + "f.Wh"], p[pre + "f.b"])
                Hb, cb = L.lstm_forward(L.gather_time(X, rev), p[pre + "b.Wx"], p[pre + "b.Wh"],
                                        p[pre + "b.b"])
                H = np.concatenate([Hf, L.scatter_time(Hb, rev)], axis=2) * mask
                cache = (cf, cb)
            else:
                pre = f"enc{layer}."
                S = L.window_stack(X, c.window)
                H = np.tanh(S @ p[pre + "W"] + p[pre + "b"]) * mask
                cache = (S, H, X.shape[2])
            if layer > 0:
                H = H + X
            caches.append(cache)
            X = H
        return X, (caches, rev, mask)

    def _encoder_backward(self, dH, cache, grads):
        c, p = self.config, self.params
        caches, rev, mask = cache
        for layer in reversed(range(c.layers)):
            lc = caches[layer]
            if c.encoder == "bilstm":
                cf, cb = lc
                h = c.hidden_dim // 2
                dHm = dH * mask
                dX = L.lstm_backward(dHm[:, :, :h], cf, grads, f"enc{layer}_f.")
                dX += L.scatter_time(L.lstm_backward(L.gather_time(dHm[:, :, h:], rev), cb, grads,
                                                     f"enc{layer}_b."), rev)
            else:
                S, H, D = lc
                pre = f"enc{layer}."
                dZ = dH * mask * (1.0 - H * H)
                grads[pre + "W"] += S.reshape(-1, S.shape[2]).T @ dZ.reshape(-1, dZ.shape[2])
                grads[pre + "b"] += dZ.sum(axis=(0, 1))
                dX = L.window_unstack(dZ @ p[pre + "W"].T, c.window, D)
            if layer > 0:
                dX = dX + dH
            dH = dX
        return dH

    def forward(self, batch: Batch, train: bool = False, rng=None):
        """Run encoder and all heads; returns ``(outputs, cache)``."""
        c, p = self.config, self.params
        N = batch.n_tokens
        B, T = len(batch.lengths), int(batch.lengths.max()) if len(batch.lengths) else 0
        word_ids = batch.word_ids
        if train and c.word_dropout > 0:
            word_ids = np.where(rng.random(N) < c.word_dropout, 0, word_ids)
        cle, char_cache = self._char_forward(batch)
        parts = [p["word_emb"][word_ids], cle]
        if c.aux_dim:
            parts.append(batch.aux)
        x_tok = np.concatenate(parts, axis=1)
        in_drop = out_drop = None
        if train and c.dropout > 0:
            keep = 1.0 - c.dropout
            in_drop = (rng.random(x_tok.shape) < keep) / keep
            x_tok = x_tok * in_drop
        X = np.zeros((B, T, c.input_dim))
        X[batch.tok_b, batch.tok_t] = x_tok
        mask = np.zeros((B, T, 1))
        mask[batch.tok_b, batch.tok_t] = 1.0
        Hs, enc_cache = self._encoder_forward(X, batch.lengths, mask)
        states = Hs[batch.tok_b, batch.tok_t]
        head_in = states
        if train and c.dropout > 0:
            keep = 1.0 - c.dropout
            out_drop = (rng.random(states.shape) < keep) / keep
            head_in = states * out_drop
        rule_in = np.concatenate([head_in, cle], axis=1)
        logits = {"rule": rule_in @ p["rule.W"] + p["rule.b"],
                  "tag": head_in @ p["tag.W"] + p["tag.b"]}
        for cat in self.vocab.categories:
            logits["cat." + cat] = head_in @ p[f"cat.{cat}.W"] + p[f"cat.{cat}.b"]
        out = {"states": states, "cle": cle, "logits": logits}
        cache = (batch, word_ids, char_cache, in_drop, out_drop, X.shape, enc_cache,
                 head_in, rule_in)
        return out, cache

    def backward(self, dlogits: dict, cache, grads: dict) -> None:
        c, p = self.config, self.params
        batch, word_ids, char_cache, in_drop, out_drop, xshape, enc_cache, head_in, rule_in = cache
        grads["rule.W"] += rule_in.T @ dlogits["rule"]
        grads["rule.b"] += dlogits["rule"].sum(axis=0)
        d_rule_in = dlogits["rule"] @ p["rule.W"].T
        d_head = d_rule_in[:, :c.hidden_dim].copy()
        dcle = d_rule_in[:, c.hidden_dim:].copy()
        grads["tag.W"] += head_in.T @ dlogits["tag"]
        grads["tag.b"] += dlogits["tag"].sum(axis=0)
        d_head += dlogits["tag"] @ p["tag.W"].T
        for cat in self.vocab.categories:
            d = dlogits.get("cat." + cat)
            if d is None:
                continue
            grads[f"cat.{cat}.W"] += head_in.T @ d
            grads[f"cat.{cat}.b"] += d.sum(axis=0)
            d_head += d @ p[f"cat.{cat}.W"].T
        if out_drop is not None:
            d_head *= out_drop
        dHs = np.zeros(xshape[:2] + (c.hidden_dim,))
        dHs[batch.tok_b, batch.tok_t] = d_head
        dX = self._encoder_backward(dHs, enc_cache, grads)
        dx_tok = dX[batch.tok_b, batch.tok_t]
        if in_drop is not None:
            dx_tok = dx_tok * in_drop
        np.add.at(grads["word_emb"], word_ids, dx_tok[:, :c.word_dim])
        dcle += dx_tok[:, c.word_dim:c.word_dim + c.char_dim]
        self._char_backward(dcle, batch, char_cache, grads)

    # -- loss ---------------------------------------------------------------------

    def loss(self, batch: Batch, w: Optional[float] = None, compute_grads: bool = True,
             train: bool = False, rng=None):
        """Composite loss ``CE(rule) + CE(bundle) + w * mean_c CE(category c)``.

        Returns ``(LossParts, grads)``; ``grads`` is None unless requested.
        """
        if w is None:
            w = self.config.w
        out, cache = self.forward(batch, train=train, rng=rng)
        logits = out["logits"]
        lemma_ce, d_rule = L.cross_entropy(logits["rule"], batch.rule_ids, batch.rule_known)
        bundle_ce, d_tag = L.cross_entropy(logits["tag"], batch.bundle_ids, batch.bundle_known)
        dlogits = {"rule": d_rule, "tag": d_tag}
        per_cat = []
        cats = self.vocab.categories
        for j, cat in enumerate(cats):
            ce, d = L.cross_entropy(logits["cat." + cat], batch.cat_ids[:, j], batch.bundle_known)
            per_cat.append(ce)
            dlogits["cat." + cat] = d * (w / len(cats))
        cat_ce = float(np.mean(per_cat)) if per_cat else 0.0
        parts = LossParts(lemma_ce, bundle_ce, cat_ce, per_cat, w)
        if not compute_grads:
            return parts, None
        grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.backward(dlogits, cache, grads)
        return parts, grads

    # -- inference helpers ---------------------------------------------------------

    def distributions(self, batch: Batch):
        """Softmax over the full rule and bundle vocabularies (no masking)."""
        out, _ = self.forward(batch)
        return L.softmax(out["logits"]["rule"]), L.softmax(out["logits"]["tag"])

    def category_distributions(self, batch: Batch) -> dict:
        out, _ = self.forward(batch)
        return {cat: L.softmax(out["logits"]["cat." + cat]) for cat in self.vocab.categories}


def round_to_float32(params: dict) -> dict:
    return {k: np.asarray(v, dtype=np.float32).astype(np.float64) for k, v in params.items()}


def encode(sentence, model: TaggerModel, aux=None, word_vectors=None) -> np.ndarray:
    """Per-token encoder states ``(tokens, hidden_dim)`` for one sentence."""
    feats = model.featurize(sentence, word_vectors=word_vectors, aux=aux, gold=False)
    out, _ = model.forward(model.make_batch([feats]))
    return out["states"]


def forward_heads(states: np.ndarray, cle: np.ndarray, model: TaggerModel) -> dict:
    """Head distributions from precomputed states and character representations."""
    p = model.params
    rule_in = np.concatenate([states, cle], axis=1)
    result = {"rule": L.softmax(rule_in @ p["rule.W"] + p["rule.b"]),
              "tag": L.softmax(states @ p["tag.W"] + p["tag.b"])}
    for cat in model.vocab.categories:
        result["cat." + cat] = L.softmax(states @ p[f"cat.{cat}.W"] + p[f"cat.{cat}.b"])
    return result
