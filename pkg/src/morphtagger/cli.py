"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 data error, 3 training divergence.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import sys
from pathlib import Path
from typing import Optional

from . import __version__
from .conllu import Corpus, read_conllu, serialize_conllu
from .embeddings import load_word_vectors, read_sidecar, attach_contextual
from .ensemble import (GRID, EnsembleSpec, ModelConfigurationId, ensemble_predict,
                       select_any_subset, select_configuration)
from .errors import ConfigError, MorphError, TrainingDivergence
from .lemma_rules import rule_inventory
from .merge import RestrictionMask, build_mask, merge_corpora
from .metrics import evaluate
from .model import ModelConfig, build_vocabulary, load_model, predict, save_model, train
from .tagset import CategoryTable, build_inventory

log = logging.getLogger("morphtagger")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3
SIDECAR_SUFFIX = ".mfv"
MODEL_FIELDS = {f.name: f for f in dataclasses.fields(ModelConfig)}
# RunConfig keys that are not model hyperparameters
PATH_KEYS = ("train", "dev", "word_vectors", "contextual_sidecar", "dev_sidecar", "table")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- run configuration ------------------------------------------------------------

def _coerce(name: str, value):
    default = MODEL_FIELDS[name].default
    if isinstance(value, str):
        if isinstance(default, bool):
            low = value.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise UsageError(f"{name}: expected a boolean, got {value!r}")
            return low in ("true", "1", "yes")
        try:
            return type(default)(value)
        except ValueError:
            raise UsageError(f"{name}: cannot parse {value!r}") from None
    return value


def read_config_file(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment line."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        if key not in MODEL_FIELDS and key not in PATH_KEYS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value.strip()
    return out


def run_config(args) -> dict:
    """Config-file values overridden by any flag given on the command line."""
    cfg = read_config_file(args.config) if getattr(args, "config", None) else {}
    for key in list(MODEL_FIELDS) + list(PATH_KEYS):
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    for key in MODEL_FIELDS:
        if key in cfg:
            cfg[key] = _coerce(key, cfg[key])
    return cfg


def config_hash(cfg: dict) -> str:
    blob = json.dumps({k: str(v) for k, v in sorted(cfg.items())}, sort_keys=True)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def provenance(cfg: dict, seed: Optional[int] = None) -> str:
    return f"# morphtagger version={__version__} config={config_hash(cfg)} seed={seed if seed is not None else '-'}"


# -- input helpers ----------------------------------------------------------------

def _need(path, what="input") -> Path:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} not found: {path}")
    return p


def load_corpus(path, sidecar=None, auto_sidecar=True) -> Corpus:
    corpus = read_conllu(_need(path))
    if sidecar is None and auto_sidecar:
        guess = Path(str(path) + SIDECAR_SUFFIX)
        sidecar = guess if guess.exists() else None
    if sidecar is not None:
        attach_contextual(corpus, read_sidecar(str(_need(sidecar, "sidecar"))))
    return corpus


def load_table(path) -> CategoryTable:
    return CategoryTable.load(_need(path, "category table")) if path else CategoryTable.default()


def load_vectors(path):
    return load_word_vectors(str(_need(path, "word vectors"))) if path else None


def _write(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _write_conllu(corpus: Corpus, path, header: str) -> None:
    # the header becomes a comment of the first sentence; an empty corpus gets none
    data = serialize_conllu(corpus)
    if corpus.sentences:
        data = (header + "\n").encode("utf-8") + data
    if path in (None, "-"):
        sys.stdout.buffer.write(data)
    else:
        Path(path).write_bytes(data)


# -- commands ---------------------------------------------------------------------

def cmd_induce_rules(args) -> int:
    corpus = read_conllu(_need(args.train))
    lines = [provenance({"command": "induce-rules"})]
    lines += [f"{rule}\t{count}" for rule, count in rule_inventory(corpus).items()]
    _write(args.output, "\n".join(lines) + "\n")
    return EXIT_OK


def corpus_stats(corpus: Corpus, table: CategoryTable) -> dict:
    if corpus.token_count == 0:
        raise MorphError("corpus has no tokens")
    inv = build_inventory(corpus, table)
    return {"words": corpus.token_count, "lemma_rules": len(rule_inventory(corpus)),
            "tags": inv.n_bundles, "features": inv.n_features, "categories": inv.n_categories}


def cmd_stats(args) -> int:
    stats = corpus_stats(read_conllu(_need(args.train)), load_table(args.table))
    lines = [provenance({"command": "stats"})] + [f"{k}\t{v}" for k, v in stats.items()]
    _write(args.output, "\n".join(lines) + "\n")
    return EXIT_OK


def _model_config(cfg: dict, word_vectors, train_corpus) -> ModelConfig:
    values = {k: cfg[k] for k in MODEL_FIELDS if k in cfg}
    # pretrained / contextual inputs default to on when the data is available
    values.setdefault("use_pretrained", word_vectors is not None)
    covered = [s.contextual is not None for s in train_corpus.sentences]
    if any(covered) and not all(covered) and "use_contextual" not in values:
        log.warning("contextual vectors cover only part of the training data; not using them")
    values.setdefault("use_contextual", all(covered) and bool(covered))
    if values["use_pretrained"] and not values.get("pretrained_dim"):
        if word_vectors is None:
            raise ConfigError("use_pretrained requires --word-vectors")
        values["pretrained_dim"] = word_vectors.dimension
    if values["use_contextual"] and not values.get("contextual_dim"):
        first = next((s.contextual for s in train_corpus.sentences if s.contextual is not None), None)
        if first is None:
            raise ConfigError("use_contextual requires a contextual sidecar for the training data")
        values["contextual_dim"] = int(first.shape[1])
    return ModelConfig(**values)


def _train_one(train_corpus, dev, config: ModelConfig, table, word_vectors, out: Path,
               header: str, log_path: Optional[Path] = None):
    log_path = log_path or Path(str(out) + ".log")
    with open(log_path, "w", encoding="utf-8") as logf:
        logf.write(header + "\n")
        logf.write(f"# config {json.dumps(config.to_dict(), sort_keys=True)}\n")

        def on_epoch(entry):
            logf.write(entry.line() + "\n")
            logf.flush()

        result = train(train_corpus, config, dev=dev, table=table, word_vectors=word_vectors,
                       on_epoch=on_epoch)
        logf.write(f"best_epoch={result.best_epoch}\n")
    save_model(result.model, out, extra={"provenance": header})
    return result


def cmd_train(args) -> int:
    cfg = run_config(args)
    if "train" not in cfg:
        raise UsageError("train needs --train (or train = ... in --config)")
    table = load_table(cfg.get("table"))
    word_vectors = load_vectors(cfg.get("word_vectors"))
    train_corpus = load_corpus(cfg["train"], cfg.get("contextual_sidecar"))
    dev = load_corpus(cfg["dev"], cfg.get("dev_sidecar")) if cfg.get("dev") else None
    if args.grid:
        return _train_grid(args, cfg, train_corpus, dev, table, word_vectors)
    if not args.output:
        raise UsageError("train needs --output")
    config = _model_config(cfg, word_vectors, train_corpus)
    header = provenance(cfg, config.seed)
    _train_one(train_corpus, dev, config, table, word_vectors, Path(args.output), header,
               Path(args.log) if args.log else None)
    return EXIT_OK


def grid_member_config(base: dict, member: ModelConfigurationId) -> dict:
    cfg = dict(base)
    cfg["seed"] = int(base.get("seed", MODEL_FIELDS["seed"].default)) + member.replica - 1
    if member.configuration == "no_contextual":
        cfg["use_contextual"] = False
    return cfg


def _train_grid(args, cfg, train_corpus, dev, table, word_vectors) -> int:
    if not args.output:
        raise UsageError("train --grid needs --output DIR")
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    extra = [load_corpus(p, auto_sidecar=True) for p in args.merge_with or []]
    merged = merge_corpora([train_corpus] + extra) if extra else train_corpus
    if extra:
        mask = build_mask(build_vocabulary(merged, table), train_corpus, table)
        mask.save(out / "merged.mask")
    else:
        log.warning("no --merge-with corpora; merged models equal regular models")
    for member in GRID:
        member_cfg = grid_member_config(cfg, member)
        data = merged if member.configuration == "merged" else train_corpus
        config = _model_config(member_cfg, word_vectors, data)
        header = provenance(member_cfg, config.seed)
        log.info("training %s", member.name)
        _train_one(data, dev, config, table, word_vectors, out / f"{member.name}.mfm", header)
    return EXIT_OK


def _load_ensemble(spec_path: Path):
    spec = EnsembleSpec.from_text(_need(spec_path, "ensemble spec").read_text(encoding="utf-8"))
    base = spec_path.parent
    models = [load_model(_need(p, "ensemble member")) for p in spec.member_paths(base)]
    mask_path = spec.mask_path(base)
    return spec, models, RestrictionMask.load(mask_path) if mask_path else None


def cmd_predict(args) -> int:
    if bool(args.model) == bool(args.ensemble):
        raise UsageError("predict needs exactly one of --model / --ensemble")
    cfg = run_config(args)
    corpus = load_corpus(args.input, args.contextual_sidecar)
    word_vectors = load_vectors(args.word_vectors)
    mask = RestrictionMask.load(_need(args.mask, "mask")) if args.mask else None
    if args.model:
        model = load_model(_need(args.model, "model"))
        out = predict(corpus, model, mask=mask, word_vectors=word_vectors)
        cfg["model_config"] = json.dumps(model.config.to_dict(), sort_keys=True)
        seed = model.config.seed
    else:
        spec, models, spec_mask = _load_ensemble(Path(args.ensemble))
        out = ensemble_predict(models, corpus, mask=mask or spec_mask, word_vectors=word_vectors)
        cfg["members"] = ",".join(spec.members)
        seed = None
    cfg["mask"] = args.mask or ""
    _write_conllu(out, args.output, provenance(cfg, seed))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    gold = read_conllu(_need(args.gold))
    pred = read_conllu(_need(args.prediction))
    report = evaluate(gold, pred, macro_f1=args.macro_f1)
    header = provenance({"command": "evaluate", "macro_f1": args.macro_f1})
    _write(args.output, header + "\n" + report.to_text())
    return EXIT_OK


def _member_key(path: Path, by_configuration: bool):
    if by_configuration:
        return ModelConfigurationId.parse(path.stem)
    return str(path)


def cmd_ensemble(args) -> int:
    paths = [_need(p, "model") for p in args.models]
    if len(set(paths)) != len(paths):
        raise UsageError("duplicate model paths")
    by_conf = args.method == "configuration"
    keys = [_member_key(p, by_conf) for p in paths]
    models = {k: load_model(p) for k, p in zip(keys, paths)}
    dev = load_corpus(args.dev, args.contextual_sidecar)
    mask = RestrictionMask.load(_need(args.mask, "mask")) if args.mask else None
    word_vectors = load_vectors(args.word_vectors)
    select = select_configuration if by_conf else select_any_subset
    spec = select(models, dev, mask=mask, word_vectors=word_vectors)
    out_dir = Path(args.output).resolve().parent if args.output not in (None, "-") else Path.cwd()
    path_of = dict(zip(keys, paths))

    def rel(p: Path) -> str:
        p = p.resolve()
        return str(p.relative_to(out_dir)) if p.is_relative_to(out_dir) else str(p)

    spec = EnsembleSpec(tuple(rel(path_of[m]) for m in spec.members), spec.method, spec.score,
                        rel(Path(args.mask)) if args.mask else None)
    cfg = {"command": "ensemble", "method": args.method, "dev": args.dev}
    _write(args.output, spec.to_text(provenance(cfg)))
    return EXIT_OK


def cmd_merge(args) -> int:
    corpora = [read_conllu(_need(p)) for p in args.inputs]
    merged = merge_corpora(corpora)
    header = provenance({"command": "merge", "inputs": ",".join(args.inputs)})
    _write_conllu(merged, args.output, header)
    if args.mask_out:
        if not args.target:
            raise UsageError("--mask-out needs --target (the target treebank's training file)")
        table = load_table(args.table)
        target = read_conllu(_need(args.target))
        mask = build_mask(build_vocabulary(merged, table), target, table)
        mask.save(args.mask_out)
    return EXIT_OK


# -- argument parsing -------------------------------------------------------------

def _add_model_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model hyperparameters (override --config)")
    for name, f in MODEL_FIELDS.items():
        flag = "--" + name.replace("_", "-")
        if name == "w":
            g.add_argument("--w", type=float, default=None,
                           help="category regularization weight (default 1)")
        elif isinstance(f.default, bool):
            g.add_argument(flag, dest=name, action=argparse.BooleanOptionalAction, default=None)
        else:
            g.add_argument(flag, dest=name, type=type(f.default), default=None,
                           help=f"default {f.default}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="morphtagger",
                     description="Joint lemmatizer and morphological tagger.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("induce-rules", help="lemma rule inventory of a training file")
    p.add_argument("train")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_induce_rules)

    p = sub.add_parser("stats", help="word, rule, tag, feature and category counts")
    p.add_argument("train")
    p.add_argument("--table", help="value<TAB>category file (default: built-in UniMorph table)")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", help="train one model or the 3x3 configuration grid")
    p.add_argument("--train")
    p.add_argument("--dev")
    p.add_argument("--config", help="flat key = value file; flags win")
    p.add_argument("--table")
    p.add_argument("--word-vectors", dest="word_vectors")
    p.add_argument("--contextual-sidecar", dest="contextual_sidecar",
                   help="vectors for --train (default: <train>.mfv if present)")
    p.add_argument("--dev-sidecar", dest="dev_sidecar")
    p.add_argument("--grid", action="store_true",
                   help="train regular, merged and no_contextual models, three seeds each")
    p.add_argument("--merge-with", nargs="*", help="same-language training files for merged models")
    p.add_argument("-o", "--output", help="model file, or directory with --grid")
    p.add_argument("--log", help="loss log path (default: <output>.log)")
    _add_model_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="fill lemma and feature columns")
    p.add_argument("input")
    p.add_argument("--model")
    p.add_argument("--ensemble", help="ensemble spec written by the ensemble command")
    p.add_argument("--mask", help="restriction mask file")
    p.add_argument("--word-vectors", dest="word_vectors")
    p.add_argument("--contextual-sidecar", dest="contextual_sidecar")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score a prediction against gold")
    p.add_argument("gold")
    p.add_argument("prediction")
    p.add_argument("--macro-f1", action="store_true", help="average per-token F1 instead of micro F1")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ensemble", help="select an ensemble on development data")
    p.add_argument("models", nargs="+")
    p.add_argument("--dev", required=True)
    p.add_argument("--method", choices=("any_subset", "configuration"), default="any_subset")
    p.add_argument("--mask")
    p.add_argument("--word-vectors", dest="word_vectors")
    p.add_argument("--contextual-sidecar", dest="contextual_sidecar")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("merge", help="concatenate same-language corpora")
    p.add_argument("inputs", nargs="+")
    p.add_argument("-o", "--output")
    p.add_argument("--target", help="target treebank training file for --mask-out")
    p.add_argument("--mask-out")
    p.add_argument("--table")
    p.set_defaults(func=cmd_merge)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as e:
        print(f"morphtagger: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDivergence as e:
        print(f"morphtagger: training diverged: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except (MorphError, OSError, UnicodeDecodeError) as e:
        print(f"morphtagger: data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
