import numpy as np
import pytest

from synthetic import Lexicon, make_corpus
from morphtagger.cli import EXIT_DATA, EXIT_DIVERGED, EXIT_OK, EXIT_USAGE, main
from morphtagger.conllu import read_conllu, write_conllu
from morphtagger.embeddings import ContextualSidecar, write_sidecar
from morphtagger.ensemble import EnsembleSpec
from morphtagger.lemma_rules import rule_inventory
from morphtagger.merge import RestrictionMask
from morphtagger.metrics import parse_report
from morphtagger.model import load_model, predict_distributions

TINY = ["--hidden-dim", "16", "--word-dim", "8", "--char-dim", "8", "--learning-rate", "0.01",
        "--batch-size", "8"]


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    lex = Lexicon(seed=0)
    paths = {}
    for name, n, seed in (("train", 25, 1), ("dev", 10, 2), ("test", 10, 3)):
        paths[name] = d / f"xx_synth-um-{name}.conllu"
        write_conllu(make_corpus(n, seed=seed, lexicon=lex, prefix=name), paths[name])
    paths["other"] = d / "xx_other-um-train.conllu"
    write_conllu(make_corpus(15, seed=4, lexicon=Lexicon(seed=5), treebank_id="xx_other"), paths["other"])
    paths["dir"] = d
    return paths


@pytest.fixture(scope="module")
def model_path(files):
    out = files["dir"] / "m.mfm"
    assert main(["train", "--train", str(files["train"]), "--dev", str(files["dev"]), "-o", str(out),
                 "--epochs", "6", *TINY]) == EXIT_OK
    return out


def _body(path):
    return [l for l in path.read_text(encoding="utf-8").splitlines() if not l.startswith("# morphtagger")]


def test_induce_rules(files, tmp_path):
    out = tmp_path / "rules.tsv"
    assert main(["induce-rules", str(files["train"]), "-o", str(out)]) == EXIT_OK
    lines = out.read_text(encoding="utf-8").splitlines()
    assert lines[0].startswith("# morphtagger version=")
    inv = rule_inventory(read_conllu(files["train"]))
    assert lines[1:] == [f"{r}\t{c}" for r, c in inv.items()]
    assert lines[1].startswith("↓0;d¦\t")


def test_stats(files, tmp_path):
    out = tmp_path / "stats.txt"
    assert main(["stats", str(files["train"]), "-o", str(out)]) == EXIT_OK
    stats = dict(l.split("\t") for l in _body(out))
    corpus = read_conllu(files["train"])
    toks = list(corpus.tokens())
    assert int(stats["words"]) == len(toks)
    assert int(stats["tags"]) == len({t.bundle.canonical_text for t in toks})
    assert int(stats["features"]) == len({v for t in toks for v in t.bundle.values})
    assert int(stats["lemma_rules"]) == len(rule_inventory(corpus))
    empty = tmp_path / "empty.conllu"
    empty.write_bytes(b"")
    assert main(["stats", str(empty)]) == EXIT_DATA


def test_pipeline_and_report(files, model_path, tmp_path):
    pred = tmp_path / "pred.conllu"
    assert main(["predict", str(files["test"]), "--model", str(model_path), "-o", str(pred)]) == EXIT_OK
    assert pred.read_text(encoding="utf-8").startswith("# morphtagger version=")
    report = tmp_path / "report.txt"
    assert main(["evaluate", str(files["test"]), str(pred), "-o", str(report)]) == EXIT_OK
    values = parse_report(report.read_text(encoding="utf-8"))
    assert set(values) == {"lemma_acc", "lemma_lev", "morph_acc", "morph_f1", "tokens"}
    assert values["tokens"] == read_conllu(files["test"]).token_count
    log = (model_path.parent / "m.mfm.log").read_text(encoding="utf-8").splitlines()
    assert log[0].startswith("# morphtagger") and sum(l.startswith("epoch=") for l in log) == 6


def test_training_is_reproducible(files, tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"r{k}.mfm"
        assert main(["train", "--train", str(files["train"]), "-o", str(out), "--epochs", "2",
                     "--seed", "5", *TINY]) == EXIT_OK
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_config_file_and_flag_precedence(files, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"# experiment\ntrain = {files['train']}\nepochs = 1\nhidden_dim = 8\nw = 0.5\n")
    out = tmp_path / "c.mfm"
    assert main(["train", "--config", str(cfg), "--epochs", "2", "-o", str(out)]) == EXIT_OK
    model = load_model(out)
    assert model.config.epochs == 2 and model.config.hidden_dim == 8 and model.config.w == 0.5
    bad = tmp_path / "bad.cfg"
    bad.write_text("nonsense = 3\n")
    assert main(["train", "--config", str(bad), "-o", str(out)]) == EXIT_USAGE
    bad.write_text("epochs = many\n")
    assert main(["train", "--config", str(bad), "--train", str(files["train"]), "-o", str(out)]) == EXIT_USAGE


def _epochs(log):
    rows = []
    for line in log.read_text(encoding="utf-8").splitlines():
        if line.startswith("epoch="):
            rows.append({k: float(v) for k, v in (kv.split("=") for kv in line.split())})
    return rows


def test_w_changes_only_the_regularization_term(files, tmp_path):
    logs = {}
    for w in ("0", "1"):
        out = tmp_path / f"w{w}.mfm"
        assert main(["train", "--train", str(files["train"]), "-o", str(out), "--epochs", "1",
                     "--w", w, *TINY]) == EXIT_OK
        logs[w] = _epochs(tmp_path / f"w{w}.mfm.log")[0]
    for w, row in logs.items():
        assert row["loss"] == pytest.approx(row["lemma_ce"] + row["bundle_ce"] + float(w) * row["category_ce"],
                                            abs=2e-6)


def test_mask_changes_only_disallowed_argmax_tokens(files, model_path, tmp_path):
    model = load_model(model_path)
    test = read_conllu(files["test"])
    unmasked = predict_distributions(test, model)
    rules = model.vocab.rules.to_list()
    bundles = model.vocab.bundles.to_list()
    mask = RestrictionMask(frozenset(rules[: len(rules) // 2]), frozenset(bundles[: len(bundles) // 2]))
    mask_path = tmp_path / "half.mask"
    mask.save(mask_path)
    a, b = tmp_path / "a.conllu", tmp_path / "b.conllu"
    assert main(["predict", str(files["test"]), "--model", str(model_path), "-o", str(a)]) == EXIT_OK
    assert main(["predict", str(files["test"]), "--model", str(model_path), "--mask", str(mask_path),
                 "-o", str(b)]) == EXIT_OK
    forms = [t.form for t in test.tokens()]
    for k, (ta, tb) in enumerate(zip(read_conllu(a).tokens(), read_conllu(b).tokens())):
        rule_ok = model.vocab.rules[unmasked.rule_ids[k]] in mask.rules if unmasked.rule_ids[k] >= 0 else False
        if ta.lemma != tb.lemma:
            assert not rule_ok or unmasked.fallback[k], forms[k]
        bundle_ok = model.vocab.bundles[unmasked.bundle_ids[k]] in mask.bundles
        if ta.bundle != tb.bundle:
            assert not bundle_ok
        else:
            assert bundle_ok or ta.bundle.canonical_text in mask.bundles


def test_ensemble_command_and_predict(files, model_path, tmp_path):
    other = tmp_path / "m2.mfm"
    assert main(["train", "--train", str(files["train"]), "-o", str(other), "--epochs", "2",
                 "--seed", "9", *TINY]) == EXIT_OK
    spec_path = tmp_path / "ens.txt"
    assert main(["ensemble", str(model_path), str(other), "--dev", str(files["dev"]),
                 "-o", str(spec_path)]) == EXIT_OK
    spec = EnsembleSpec.from_text(spec_path.read_text(encoding="utf-8"))
    assert spec.method == "any_subset" and 1 <= len(spec.members) <= 2
    out = tmp_path / "e.conllu"
    assert main(["predict", str(files["test"]), "--ensemble", str(spec_path), "-o", str(out)]) == EXIT_OK
    assert read_conllu(out).token_count == read_conllu(files["test"]).token_count
    assert main(["predict", str(files["test"]), "-o", str(out)]) == EXIT_USAGE


def test_merge_command(files, tmp_path):
    out, mask = tmp_path / "merged.conllu", tmp_path / "t.mask"
    assert main(["merge", str(files["train"]), str(files["other"]), "-o", str(out),
                 "--target", str(files["train"]), "--mask-out", str(mask)]) == EXIT_OK
    merged = read_conllu(out)
    assert merged.token_count == read_conllu(files["train"]).token_count + read_conllu(files["other"]).token_count
    m = RestrictionMask.load(mask)
    assert m.rules == set(rule_inventory(read_conllu(files["train"])))


def test_grid_training_and_configuration_ensemble(files, tmp_path):
    grid = tmp_path / "grid"
    side = ContextualSidecar({f"train{k}": np.random.default_rng(k).normal(size=(len(s.tokens), 3)).astype(np.float32)
                              for k, s in enumerate(read_conllu(files["train"]).sentences, 1)})
    sidecar = tmp_path / "train.mfv"
    with open(sidecar, "wb") as f:
        write_sidecar(side, f)
    assert main(["train", "--grid", "--train", str(files["train"]), "--contextual-sidecar", str(sidecar),
                 "--merge-with", str(files["other"]), "-o", str(grid), "--epochs", "1", *TINY]) == EXIT_OK
    names = sorted(p.name for p in grid.glob("*.mfm"))
    assert len(names) == 9 and (grid / "merged.mask").exists()
    assert load_model(grid / "regular-1.mfm").config.use_contextual
    assert not load_model(grid / "no_contextual-2.mfm").config.use_contextual
    assert load_model(grid / "regular-2.mfm").config.seed == load_model(grid / "regular-1.mfm").config.seed + 1
    no_ctx = [str(grid / f"no_contextual-{r}.mfm") for r in (1, 2, 3)]
    spec_path = grid / "ens.txt"
    assert main(["ensemble", *no_ctx, "--dev", str(files["dev"]), "--method", "configuration",
                 "--mask", str(grid / "merged.mask"), "-o", str(spec_path)]) == EXIT_OK
    spec = EnsembleSpec.from_text(spec_path.read_text(encoding="utf-8"))
    assert spec.members == tuple(f"no_contextual-{r}.mfm" for r in (1, 2, 3))
    assert spec.mask == "merged.mask"


def test_sidecar_auto_discovery(files, tmp_path):
    corpus = read_conllu(files["train"])
    path = tmp_path / "auto.conllu"
    write_conllu(corpus, path)
    side = ContextualSidecar({f"train{k}": np.zeros((len(s.tokens), 2), np.float32)
                              for k, s in enumerate(corpus.sentences, 1)})
    with open(str(path) + ".mfv", "wb") as f:
        write_sidecar(side, f)
    out = tmp_path / "auto.mfm"
    assert main(["train", "--train", str(path), "-o", str(out), "--epochs", "1", *TINY]) == EXIT_OK
    assert load_model(out).config.contextual_dim == 2


def test_exit_codes(files, tmp_path):
    assert main(["stats", str(tmp_path / "missing.conllu")]) == EXIT_USAGE
    with pytest.raises(SystemExit) as e:
        main(["train", "--epochs", "lots"])
    assert e.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as e:
        main([])
    assert e.value.code == EXIT_USAGE
    bad = tmp_path / "bad.conllu"
    bad.write_text("1\tonly\tthree\n\n")
    assert main(["stats", str(bad)]) == EXIT_DATA
    corpus = read_conllu(files["train"])
    nan = tmp_path / "nan.tsv"
    nan.write_text("".join(f"train{k}\t{i}\tnan nan\n" for k, s in enumerate(corpus.sentences, 1)
                           for i in range(1, len(s.tokens) + 1)))
    assert main(["train", "--train", str(files["train"]), "--contextual-sidecar", str(nan),
                 "-o", str(tmp_path / "d.mfm"), "--epochs", "1", *TINY]) == EXIT_DIVERGED
