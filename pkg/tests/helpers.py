"""Small-model fixtures and a finite-difference gradient checker."""

import numpy as np

from morphtagger.conllu import Corpus, Sentence, Token
from morphtagger.model import ModelConfig, TaggerModel, build_vocabulary


def toy_corpus(contextual_dim: int = 0, seed: int = 0) -> Corpus:
    s1 = Sentence(["# sent_id = 1"], [Token.make(1, "They", "they", "PRO;NOM;PL"),
                                      Token.make(2, "buy", "buy", "V;SG;1;PRS"),
                                      Token.make(3, "books", "book", "N;PL"),
                                      Token.make(4, ".", ".", "PUNCT")])
    s2 = Sentence(["# sent_id = 2"], [Token.make(1, "Bush", "Bush", "PROPN;SG"),
                                      Token.make(2, "has", "have", "V;SG;3;PRS")])
    if contextual_dim:
        rng = np.random.default_rng(seed)
        s1.contextual = rng.normal(size=(4, contextual_dim))
        s2.contextual = rng.normal(size=(2, contextual_dim))
    return Corpus([s1, s2], "xx_toy")


def toy_model(encoder="bilstm", char_mode="bag", layers=1, contextual_dim=2, w=1.0, seed=1,
              scale=0.5):
    """A randomly initialised model with a few hundred parameters."""
    corpus = toy_corpus(contextual_dim)
    vocab = build_vocabulary(corpus)
    cfg = ModelConfig(encoder=encoder, char_mode=char_mode, layers=layers, hidden_dim=4,
                      word_dim=2, char_dim=2, window=1, use_contextual=bool(contextual_dim),
                      contextual_dim=contextual_dim, w=w)
    model = TaggerModel(cfg, vocab)
    rng = np.random.default_rng(seed)
    model.params = {k: rng.normal(0, scale, size=v.shape) for k, v in model.params.items()}
    batch = model.make_batch([model.featurize(s) for s in corpus.sentences])
    return model, batch


def gradient_check(model, batch, h=1e-5) -> float:
    """Max relative error |a - n| / max(|a|, |n|, 1e-6) over every parameter."""
    _, grads = model.loss(batch)
    worst = 0.0
    for name, p in model.params.items():
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            plus = model.loss(batch, compute_grads=False)[0].total
            p[idx] = old - h
            minus = model.loss(batch, compute_grads=False)[0].total
            p[idx] = old
            num = (plus - minus) / (2 * h)
            ana = grads[name][idx]
            worst = max(worst, abs(num - ana) / max(abs(num), abs(ana), 1e-6))
    return worst


# -- scripted ensemble members ----------------------------------------------------------

WRONG_RULE = "↓0;awrong"
WRONG_BUNDLE = "X;WRONG"


class ScriptedModel:
    """Stands in for a TaggerModel: puts ``confidence`` on a scripted label per token.

    ``wrong`` is a set of flat token positions where the model guesses the
    deliberately wrong rule and bundle instead of the gold ones.
    """

    def __init__(self, corpus, vocab, wrong=(), confidence=0.9):
        from morphtagger.lemma_rules import rule_text
        self.vocab = vocab
        vocab.rules.add(WRONG_RULE)
        vocab.bundles.add(WRONG_BUNDLE)
        self.confidence = confidence
        self.rows = {}
        k = 0
        for s in corpus.sentences:
            rows = []
            for t in s.tokens:
                if k in wrong:
                    rows.append((vocab.rules.get(WRONG_RULE), vocab.bundles.get(WRONG_BUNDLE)))
                else:
                    rows.append((vocab.rules.get(rule_text(t.form, t.lemma)),
                                 vocab.bundles.get(t.bundle.canonical_text)))
                k += 1
            self.rows[s.sent_id] = rows

    def featurize(self, sentence, word_vectors=None, gold=True):
        return sentence

    def make_batch(self, sentences):
        return sentences

    def _dist(self, n, picks):
        out = np.full((len(picks), n), (1 - self.confidence) / (n - 2))
        out[:, 0] = 0.0
        out[np.arange(len(picks)), picks] = self.confidence
        return out

    def distributions(self, sentences):
        rows = [r for s in sentences for r in self.rows[s.sent_id]]
        return (self._dist(len(self.vocab.rules), [r for r, _ in rows]),
                self._dist(len(self.vocab.bundles), [b for _, b in rows]))


def planted_grid(dev, planted: str, rng, error_rate=0.2):
    """Nine scripted members keyed by ModelConfigurationId.

    Replicas of the planted configuration err on disjoint token sets, so their
    average is always right; the other configurations' replicas share their
    errors.  Every single member has the same dev accuracy.
    """
    from morphtagger.ensemble import CONFIGURATIONS, ModelConfigurationId
    from morphtagger.model import build_vocabulary
    n = dev.token_count
    per = int(n * error_rate)
    models = {}
    for conf in CONFIGURATIONS:
        order = rng.permutation(n)
        for r in (1, 2, 3):
            if conf == planted:
                wrong = set(order[(r - 1) * per:r * per].tolist())
            else:
                wrong = set(order[:per].tolist())
            models[ModelConfigurationId(conf, r)] = ScriptedModel(dev, build_vocabulary(dev),
                                                                  wrong)
    return models
