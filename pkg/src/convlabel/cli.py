"""Command-line entry point: train, tune, evaluate, predict.

Options come from flags plus an optional flat ``key = value`` config file;
flags win. Every run echoes its fully resolved configuration into the output
directory so it can be replayed exactly.

Exit codes: 0 success, 2 missing input file, 3 non-finite training loss,
4 corrupt trial ledger, 5 vocabulary/checkpoint mismatch.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import model, tuner
from .corpus import (
    DEFAULT_MAX_TOKENS,
    LabelSpace,
    Vocabulary,
    build_embedding_matrix,
    label_matrix,
    load_corpus,
    parse_embedding_file,
)
from .metrics import compute_report
from .trainer import TrainConfig, TrainingDiverged, fit, predict, write_history

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_MISSING_FILE = 2
EXIT_DIVERGED = 3
EXIT_BAD_LEDGER = 4
EXIT_VOCAB_MISMATCH = 5

# Tuned values from the original full-label selection, used when hyperparameter
# flags are omitted.
ARCH_DEFAULTS = {
    "cnn": {"dc": 500, "k": 4, "q": 0.2, "eta": 0.003},
    "caml": {"dc": 50, "k": 10, "q": 0.2, "eta": 0.0001},
}


class CliError(Exception):
    def __init__(self, message, code=EXIT_USAGE):
        super().__init__(message)
        self.code = code


def read_config_file(path):
    """Flat ``key = value`` file; '#' starts a comment; lists are comma-separated."""
    values = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise CliError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _parse_val_metric(text):
    if not text.lower().startswith("p@"):
        raise CliError(f"unsupported validation metric {text!r} (expected p@N)")
    try:
        n = int(text[2:])
    except ValueError:
        raise CliError(f"unsupported validation metric {text!r} (expected p@N)") from None
    if n < 1:
        raise CliError("validation metric n must be >= 1")
    return n


def _require_file(path, what):
    if path is None:
        raise CliError(f"missing required {what} path")
    p = Path(path)
    if not p.is_file():
        raise CliError(f"{what} file not found: {p}", EXIT_MISSING_FILE)
    return p


def _resolve(args, keys):
    """Merge flag values over config-file values over defaults."""
    file_values = read_config_file(args.config) if args.config else {}
    resolved = {}
    for key, default, conv in keys:
        flag = getattr(args, key, None)
        if flag is not None:
            resolved[key] = flag
        elif key in file_values:
            resolved[key] = conv(file_values[key])
        else:
            resolved[key] = default
    return resolved


def write_resolved(out_dir, resolved):
    lines = [f"{k} = {resolved[k]}" for k in sorted(resolved)]
    (out_dir / "config.resolved").write_text("\n".join(lines) + "\n", encoding="utf-8")


_TRAIN_KEYS = [
    ("train", None, str),
    ("valid", None, str),
    ("embeddings", None, str),
    ("arch", "caml", str),
    ("dc", None, int),
    ("k", None, int),
    ("q", None, float),
    ("eta", None, float),
    ("seed", 1337, int),
    ("max_tokens", DEFAULT_MAX_TOKENS, int),
    ("batch_size", 16, int),
    ("patience", 10, int),
    ("max_epochs", 200, int),
    ("val_metric", "p@5", str),
    ("embed_dim", 100, int),
]


def cmd_train(args):
    resolved = _resolve(args, _TRAIN_KEYS)
    arch = resolved["arch"]
    if arch not in ARCH_DEFAULTS:
        raise CliError(f"unknown architecture {arch!r}")
    for name in ("dc", "k", "q", "eta"):
        if resolved[name] is None:
            resolved[name] = ARCH_DEFAULTS[arch][name]
    val_n = _parse_val_metric(resolved["val_metric"])

    train_path = _require_file(resolved["train"], "training")
    valid_path = _require_file(resolved["valid"], "validation")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    train_docs, vocab, labels = load_corpus(train_path, max_tokens=resolved["max_tokens"])
    valid_docs, _, _ = load_corpus(
        valid_path, vocab=vocab, label_space=labels, max_tokens=resolved["max_tokens"]
    )
    hp = model.Hyperparams(resolved["dc"], resolved["k"], resolved["q"], resolved["eta"])
    config = TrainConfig(
        batch_size=resolved["batch_size"],
        max_epochs=resolved["max_epochs"],
        patience=resolved["patience"],
        val_n=val_n,
        seed=resolved["seed"],
    )
    if resolved["embeddings"] is not None:
        table, d = parse_embedding_file(_require_file(resolved["embeddings"], "embeddings"))
    else:
        table, d = {}, resolved["embed_dim"]
    rng = np.random.default_rng(resolved["seed"])
    params = model.init_params(arch, len(vocab), d, hp, len(labels), rng)
    params.embedding = build_embedding_matrix(table, d, vocab, rng)

    result = fit(params, train_docs, valid_docs, hp, config, rng)
    model.save_checkpoint(out_dir / "checkpoint.bin", result.best_params)
    write_history(out_dir / "history.tsv", result.history, val_n)
    vocab.save(out_dir / "vocab.tsv")
    labels.save(out_dir / "labels.tsv")
    write_resolved(out_dir, resolved)
    print(
        f"best epoch {result.best_epoch}: valid P@{val_n} = {result.best_score:.6f} "
        f"({len(result.history)} epochs run)"
    )
    return EXIT_OK


def _load_model_dir(model_dir):
    model_dir = Path(model_dir)
    ckpt = model_dir / "checkpoint.bin"
    if not ckpt.is_file():
        raise CliError(f"checkpoint not found: {ckpt}", EXIT_MISSING_FILE)
    params = model.load_checkpoint(ckpt)
    vocab = Vocabulary.load(model_dir / "vocab.tsv")
    labels = LabelSpace.load(model_dir / "labels.tsv")
    if len(vocab) != params.vocab_size:
        raise CliError(
            f"vocabulary size {len(vocab)} does not match checkpoint V={params.vocab_size}",
            EXIT_VOCAB_MISMATCH,
        )
    if len(labels) != params.n_labels:
        raise CliError(
            f"label count {len(labels)} does not match checkpoint L={params.n_labels}",
            EXIT_VOCAB_MISMATCH,
        )
    return params, vocab, labels


def cmd_evaluate(args):
    params, vocab, labels = _load_model_dir(args.model)
    test_path = _require_file(args.test, "test")
    max_tokens = args.max_tokens if args.max_tokens is not None else DEFAULT_MAX_TOKENS
    docs, _, _ = load_corpus(test_path, vocab=vocab, label_space=labels, max_tokens=max_tokens)
    val_n = _parse_val_metric(args.val_metric or "p@5")
    probs = predict(params, docs)
    truth = label_matrix(docs, params.n_labels)
    report = compute_report(probs, truth, ns=(val_n,))
    sys.stdout.write(report.to_tsv())
    return EXIT_OK


def cmd_predict(args):
    params, vocab, labels = _load_model_dir(args.model)
    test_path = _require_file(args.test, "input")
    max_tokens = args.max_tokens if args.max_tokens is not None else DEFAULT_MAX_TOKENS
    docs, _, _ = load_corpus(test_path, vocab=vocab, label_space=labels, max_tokens=max_tokens)
    top_n = args.top_n if args.top_n is not None else 5
    if top_n > params.n_labels:
        raise CliError(f"--top-n {top_n} exceeds label count {params.n_labels}")
    probs = predict(params, docs)
    order = np.argsort(-probs, axis=1, kind="stable")[:, :top_n]
    for i, doc in enumerate(docs):
        for rank in range(top_n):
            l = order[i, rank]
            sys.stdout.write(f"{doc.id}\t{rank + 1}\t{labels.names[l]}\t{probs[i, l]:.6f}\n")
    return EXIT_OK


def _parse_list(text, conv):
    return [conv(x) for x in text.split(",") if x.strip()]


def _grid_spec_from_file(path):
    values = read_config_file(path)
    kwargs = {}
    for file_key, attr, conv in [
        ("dc", "dc_values", int),
        ("k", "k_values", int),
        ("q", "q_values", float),
        ("eta", "eta_values", float),
        ("seeds", "seeds", int),
    ]:
        if file_key in values:
            kwargs[attr] = _parse_list(values[file_key], conv)
    spec = tuner.GridSpec(**kwargs)
    if "top_m" in values:
        spec.top_m = int(values["top_m"])
    return spec


_TUNE_KEYS = [
    ("train", None, str),
    ("valid", None, str),
    ("test", None, str),
    ("embeddings", None, str),
    ("arch", "caml", str),
    ("seed", 1337, int),
    ("max_tokens", DEFAULT_MAX_TOKENS, int),
    ("batch_size", 16, int),
    ("patience", 10, int),
    ("max_epochs", 200, int),
    ("val_metric", "p@5", str),
    ("embed_dim", 100, int),
    ("workers", 1, int),
]


def cmd_tune(args):
    resolved = _resolve(args, _TUNE_KEYS)
    if args.grid is None:
        raise CliError("missing required --grid config file")
    grid_path = _require_file(args.grid, "grid config")
    spec = _grid_spec_from_file(grid_path)
    val_n = _parse_val_metric(resolved["val_metric"])
    arch = resolved["arch"]
    if arch not in ARCH_DEFAULTS:
        raise CliError(f"unknown architecture {arch!r}")

    train_path = _require_file(resolved["train"], "training")
    valid_path = _require_file(resolved["valid"], "validation")
    test_path = _require_file(resolved["test"], "test")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    max_tokens = resolved["max_tokens"]
    train_docs, vocab, labels = load_corpus(train_path, max_tokens=max_tokens)
    valid_docs, _, _ = load_corpus(valid_path, vocab=vocab, label_space=labels, max_tokens=max_tokens)
    test_docs, _, _ = load_corpus(test_path, vocab=vocab, label_space=labels, max_tokens=max_tokens)
    if resolved["embeddings"] is not None:
        table, d = parse_embedding_file(_require_file(resolved["embeddings"], "embeddings"))
    else:
        table, d = None, resolved["embed_dim"]
    data = tuner.ExperimentData(train_docs, valid_docs, test_docs, len(labels), vocab, d, table)

    planned = len(tuner.enumerate_grid(spec)) * len(spec.seeds)
    print(f"planned trials: {planned}")

    ledger_path = out_dir / "ledger.tsv"
    if ledger_path.is_file():
        try:
            prior, done = tuner.parse_ledger(ledger_path, val_n)
        except tuner.LedgerError as e:
            raise CliError(str(e), EXIT_BAD_LEDGER) from None
        tuner.assign_grid_indices(prior, spec)
        print(f"resuming: {len(done)} trials already ledgered")
    else:
        prior, done = [], set()
        with open(ledger_path, "w", encoding="utf-8", newline="\n") as f:
            f.write("\t".join(tuner.LEDGER_HEADER) + "\n")

    config = TrainConfig(
        batch_size=resolved["batch_size"],
        max_epochs=resolved["max_epochs"],
        patience=resolved["patience"],
        val_n=val_n,
        seed=resolved["seed"],
    )

    def append(record):
        with open(ledger_path, "a", encoding="utf-8", newline="\n") as f:
            f.write(tuner.ledger_line(record, val_n) + "\n")

    new = tuner.run_trials(
        spec, arch, data, config, workers=resolved["workers"], skip=done, on_record=append
    )
    records = prior + new
    write_resolved(out_dir, resolved)
    try:
        per_seed, grand = tuner.aggregate(records, spec.top_m, val_n)
    except ValueError as e:
        print(f"aggregation failed: {e}", file=sys.stderr)
        return EXIT_USAGE
    summary = tuner.render_summary(per_seed, grand, arch, val_n)
    (out_dir / "summary.txt").write_text(summary, encoding="utf-8")
    sys.stdout.write(summary)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="convlabel")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key = value config file; flags override")
        p.add_argument("--train")
        p.add_argument("--valid")
        p.add_argument("--test")
        p.add_argument("--embeddings")
        p.add_argument("--arch", choices=["cnn", "caml"])
        p.add_argument("--dc", type=int)
        p.add_argument("--k", type=int)
        p.add_argument("--q", type=float)
        p.add_argument("--eta", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--max-tokens", dest="max_tokens", type=int)
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--patience", type=int)
        p.add_argument("--max-epochs", dest="max_epochs", type=int)
        p.add_argument("--val-metric", dest="val_metric")
        p.add_argument("--embed-dim", dest="embed_dim", type=int)

    p_train = sub.add_parser("train", help="train one model")
    common(p_train)
    p_train.add_argument("--out", required=True)
    p_train.set_defaults(func=cmd_train)

    p_tune = sub.add_parser("tune", help="grid search with per-seed aggregation")
    common(p_tune)
    p_tune.add_argument("--grid", help="grid config file (dc/k/q/eta/seeds/top_m lists)")
    p_tune.add_argument("--workers", type=int)
    p_tune.add_argument("--out", required=True)
    p_tune.set_defaults(func=cmd_tune)

    p_eval = sub.add_parser("evaluate", help="score a trained model on a labeled file")
    p_eval.add_argument("--model", required=True, help="training output directory")
    p_eval.add_argument("--test", required=True)
    p_eval.add_argument("--max-tokens", dest="max_tokens", type=int)
    p_eval.add_argument("--val-metric", dest="val_metric")
    p_eval.set_defaults(func=cmd_evaluate)

    p_pred = sub.add_parser("predict", help="write top-n labels per document")
    p_pred.add_argument("--model", required=True, help="training output directory")
    p_pred.add_argument("--test", required=True)
    p_pred.add_argument("--max-tokens", dest="max_tokens", type=int)
    p_pred.add_argument("--top-n", dest="top_n", type=int)
    p_pred.set_defaults(func=cmd_predict)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except TrainingDiverged as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except (FileNotFoundError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MISSING_FILE


if __name__ == "__main__":
    sys.exit(main())
