import itertools

import numpy as np
import pytest

from helpers import ScriptedModel, planted_grid, toy_corpus, toy_model
from morphtagger.ensemble import (CONFIGURATIONS, GRID, EnsembleSpec, LabelSpace, MemberOutput,
                                  ModelConfigurationId, average, configuration_candidates, decode,
                                  default_objective, ensemble_predict, member_outputs,
                                  select_any_subset, select_configuration)
from morphtagger.errors import EnsembleError
from morphtagger.merge import RestrictionMask
from morphtagger.metrics import evaluate
from morphtagger.model import ModelConfig, build_vocabulary, predict, train
from morphtagger.model.training import fill_corpus


def test_grid_has_nine_members():
    assert len(GRID) == 9 and len(set(GRID)) == 9
    assert ModelConfigurationId.parse("no_contextual-3") == ModelConfigurationId("no_contextual", 3)
    with pytest.raises(EnsembleError):
        ModelConfigurationId("regular", 4)
    with pytest.raises(EnsembleError):
        ModelConfigurationId.parse("fancy-1")


def test_spec_text_roundtrip():
    spec = EnsembleSpec(("regular-1.mfm", "merged-2.mfm"), "configuration", 97.5, "merged.mask")
    assert EnsembleSpec.from_text(spec.to_text("# header")) == spec
    with pytest.raises(EnsembleError):
        EnsembleSpec((), "configuration")
    with pytest.raises(EnsembleError):
        EnsembleSpec.from_text("member = a\n")


def test_two_member_arithmetic():
    space = LabelSpace(["<unk>", "↓0;d¦", "↓0;d¦-"], ["<unk>", "A", "B"])
    a = MemberOutput(np.array([[0.0, 0.6, 0.4]]), np.array([[0.0, 0.6, 0.4]]))
    b = MemberOutput(np.array([[0.0, 0.2, 0.8]]), np.array([[0.0, 0.2, 0.8]]))
    avg = average([a, b])
    np.testing.assert_allclose(avg.rule_probs, [[0.0, 0.4, 0.6]])
    lemmas, bundles, rule_ids, _ = decode(avg, space, ["cats"])
    assert lemmas == ["cat"] and bundles == ["B"] and rule_ids[0] == 2


def test_single_and_k_copy_ensembles_match_model(corpus, dev_corpus, trained):
    single = predict(dev_corpus, trained.model)
    for k in (1, 2, 3):
        assert ensemble_predict([trained.model] * k, dev_corpus).sentences == single.sentences


def test_three_models_vs_direct_average():
    models = [toy_model(contextual_dim=0, seed=s)[0] for s in (1, 2, 3)]
    corpus = toy_corpus(0)
    out = ensemble_predict(models, corpus)
    batches = [m.make_batch([m.featurize(s) for s in corpus.sentences]) for m in models]
    tag = sum(m.distributions(b)[1] for m, b in zip(models, batches)) / 3
    tag[:, 0] = 0
    expected = [models[0].vocab.bundles[i] for i in tag.argmax(axis=1)]
    assert [t.bundle.canonical_text for t in out.tokens()] == expected


def test_union_projection_of_different_vocabularies(lexicon):
    from synthetic import Lexicon, make_corpus
    a = make_corpus(8, seed=1, lexicon=Lexicon(seed=1))
    b = make_corpus(8, seed=2, lexicon=Lexicon(seed=2))
    cfg = ModelConfig(hidden_dim=8, word_dim=4, char_dim=4, epochs=1)
    ma, mb = train(a, cfg).model, train(b, ModelConfig(**cfg.to_dict())).model
    space = LabelSpace.union([ma, mb])
    assert space.rules[0] == "<unk>"
    assert set(space.rules[1:]) == set(ma.vocab.rules.to_list()) | set(mb.vocab.rules.to_list())
    outs = member_outputs([ma, mb], a, space)
    for o in outs:
        np.testing.assert_allclose(o.rule_probs.sum(axis=1), 1.0, atol=1e-6)
    only_b = [i for i, r in enumerate(space.rules) if r not in ma.vocab.rules]
    assert np.all(outs[0].rule_probs[:, only_b] == 0)
    avg = average(outs)
    np.testing.assert_allclose(avg.bundle_probs.sum(axis=1), 1.0, atol=1e-6)
    ensemble_predict([ma, mb], a)   # mixed label spaces are fine in union mode
    if ma.vocab.rules != mb.vocab.rules:
        with pytest.raises(EnsembleError):
            ensemble_predict([ma, mb], a, align="strict")
    with pytest.raises(EnsembleError):
        ensemble_predict([], a)


def test_ensemble_mask(trained, dev_corpus):
    vocab = trained.model.vocab
    mask = RestrictionMask(frozenset(vocab.rules.to_list()[:2]), frozenset(vocab.bundles.to_list()[:3]))
    out = ensemble_predict([trained.model, trained.model], dev_corpus, mask=mask)
    assert all(t.bundle.canonical_text in mask.bundles for t in out.tokens())


# -- selection ------------------------------------------------------------------------

def test_any_subset_singleton(dev_corpus):
    m = ScriptedModel(dev_corpus, build_vocabulary(dev_corpus), wrong={0, 1})
    spec = select_any_subset({"only": m}, dev_corpus)
    assert spec.members == ("only",) and spec.method == "any_subset"


def test_any_subset_dominance_and_ties(dev_corpus):
    n = dev_corpus.token_count
    v = lambda: build_vocabulary(dev_corpus)
    bad = ScriptedModel(dev_corpus, v(), wrong=set(range(0, n, 2)))
    good = ScriptedModel(dev_corpus, v(), wrong=set())
    spec = select_any_subset([bad, good, bad], dev_corpus)
    assert spec.members == (1,) and spec.score == 100.0
    # identical members: every subset ties, the first singleton wins
    same = [ScriptedModel(dev_corpus, v(), wrong={3}) for _ in range(3)]
    assert select_any_subset(same, dev_corpus).members == (0,)


def test_any_subset_matches_brute_force(dev_corpus):
    rng = np.random.default_rng(4)
    n = dev_corpus.token_count
    models = [ScriptedModel(dev_corpus, build_vocabulary(dev_corpus),
                            wrong=set(rng.choice(n, size=n // 4, replace=False).tolist()))
              for _ in range(4)]
    best, best_key = -1.0, None
    for size in range(1, 5):
        for subset in itertools.combinations(range(4), size):
            pred = ensemble_predict([models[i] for i in subset], dev_corpus)
            score = default_objective(evaluate(dev_corpus, pred))
            if score > best:
                best, best_key = score, subset
    spec = select_any_subset(models, dev_corpus)
    assert spec.members == best_key and spec.score == pytest.approx(best)


def test_configuration_candidates_structure():
    cands = configuration_candidates(list(GRID))
    assert [c for c, _ in cands] == list(CONFIGURATIONS)
    assert all(len(idx) == 3 for _, idx in cands)


def test_configuration_tie_goes_to_regular(dev_corpus):
    models = {m: ScriptedModel(dev_corpus, build_vocabulary(dev_corpus), wrong={1}) for m in GRID}
    spec = select_configuration(models, dev_corpus)
    assert spec.members == tuple(ModelConfigurationId("regular", r) for r in (1, 2, 3))
    assert spec.score == select_any_subset(models, dev_corpus).score


@pytest.mark.parametrize("planted", CONFIGURATIONS)
def test_planted_configuration_wins(dev_corpus, planted):
    models = planted_grid(dev_corpus, planted, np.random.default_rng(0))
    spec = select_configuration(models, dev_corpus)
    assert {m.configuration for m in spec.members} == {planted}
    assert spec.score == 100.0
