"""Grid search over (d_c, k, q, eta) x seeds with top-m aggregation.

Each trial is one full training run. Per seed, the ``top_m`` trials by best
validation P@n are evaluated on the test set and summarized as
mean +/- sample standard deviation, with a cross-seed grand mean at the end.
"""

from __future__ import annotations

import itertools
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import model
from .corpus import build_embedding_matrix, label_matrix
from .metrics import MetricsReport, compute_report
from .trainer import TrainConfig, fit, predict

DEFAULT_DC = [50, 150, 250, 350, 450, 550]
DEFAULT_K = [2, 4, 6, 8, 10]
DEFAULT_Q = [0.2, 0.4, 0.6, 0.8]
DEFAULT_ETA = [0.0003, 0.0001, 0.003, 0.001]
DEFAULT_SEEDS = [1337, 1331, 42]


class LedgerError(ValueError):
    """Corrupt trial ledger line."""

    def __init__(self, lineno, message):
        super().__init__(f"ledger line {lineno}: {message}")
        self.lineno = lineno


@dataclass
class GridSpec:
    dc_values: list = field(default_factory=lambda: list(DEFAULT_DC))
    k_values: list = field(default_factory=lambda: list(DEFAULT_K))
    q_values: list = field(default_factory=lambda: list(DEFAULT_Q))
    eta_values: list = field(default_factory=lambda: list(DEFAULT_ETA))
    seeds: list = field(default_factory=lambda: list(DEFAULT_SEEDS))
    top_m: int = 5

    def __post_init__(self):
        for name in ("dc_values", "k_values", "q_values", "eta_values", "seeds"):
            if not getattr(self, name):
                raise ValueError(f"{name} must be non-empty")
        if self.top_m < 1:
            raise ValueError("top_m must be positive")


def enumerate_grid(spec: GridSpec):
    """Full Cartesian product in canonical order: d_c outermost, then k, q, eta."""
    return [
        model.Hyperparams(dc, k, q, eta)
        for dc, k, q, eta in itertools.product(
            spec.dc_values, spec.k_values, spec.q_values, spec.eta_values
        )
    ]


@dataclass
class TrialRecord:
    hp: model.Hyperparams
    hp_index: int  # position in canonical grid order
    seed: int
    status: str  # "ok" or "failed"
    best_valid_p: float = float("nan")
    test_metrics: MetricsReport | None = None
    wall_time: float = 0.0
    error: str = ""


@dataclass
class ExperimentData:
    """Shared inputs for every trial: corpora with one vocabulary, plus the
    parsed pretrained-embedding table (word -> vector) or None for random init."""

    train_docs: list
    valid_docs: list
    test_docs: list
    n_labels: int
    vocab: object
    embed_dim: int
    embedding_table: dict | None = None


def run_trial(arch, data: ExperimentData, hp, seed, config: TrainConfig):
    """One (hyperparams, seed) training run; a pure function of its arguments."""
    start = time.perf_counter()
    config = TrainConfig(
        batch_size=config.batch_size,
        max_epochs=config.max_epochs,
        patience=config.patience,
        val_n=config.val_n,
        seed=seed,
    )
    rng = np.random.default_rng(seed)
    params = model.init_params(arch, len(data.vocab), data.embed_dim, hp, data.n_labels, rng)
    params.embedding = build_embedding_matrix(
        data.embedding_table or {}, data.embed_dim, data.vocab, rng
    )
    result = fit(params, data.train_docs, data.valid_docs, hp, config, rng)
    probs = predict(result.best_params, data.test_docs)
    truth = label_matrix(data.test_docs, data.n_labels)
    report = compute_report(probs, truth, ns=(config.val_n,))
    return result, report, time.perf_counter() - start


def run_trials(spec, arch, data, config, workers=1, skip=None, on_record=None):
    """Run every (hyperparams, seed) pair of the grid.

    ``skip`` is a set of (dc, k, q, eta, seed) keys already done (resume).
    A failed trial is recorded with status "failed" and the run continues.
    Output order is the canonical (grid, seed) order regardless of the
    parallelism degree.
    """
    grid = enumerate_grid(spec)
    tasks = []
    for idx, hp in enumerate(grid):
        for seed in spec.seeds:
            key = (hp.dc, hp.k, hp.q, hp.eta, seed)
            if skip and key in skip:
                continue
            tasks.append((idx, hp, seed))

    def worker(task):
        idx, hp, seed = task
        try:
            result, report, elapsed = run_trial(arch, data, hp, seed, config)
        except Exception as e:  # trial failures must not kill the sweep
            return TrialRecord(hp, idx, seed, "failed", error=str(e))
        return TrialRecord(
            hp, idx, seed, "ok",
            best_valid_p=result.best_score, test_metrics=report, wall_time=elapsed,
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(worker, tasks))
    else:
        records = [worker(t) for t in tasks]
    if on_record:
        for rec in records:
            on_record(rec)
    return records


_SUMMARY_METRICS = [
    ("macro_f1_standard", "Macro-F1 (mean of class F1)"),
    ("macro_f1_of_means", "Macro-F1 (F1 of means)"),
    ("micro_f1", "Micro-F1"),
]


def _metric_values(record, val_n):
    m = record.test_metrics
    values = {name: getattr(m, name) for name, _ in _SUMMARY_METRICS}
    values[f"p_at_{val_n}"] = m.p_at_n[val_n]
    return values


def aggregate(records, top_m, val_n=5):
    """Per-seed mean and sample std of test metrics over the top_m trials by
    validation P@n (ties broken by canonical grid order), plus the cross-seed
    grand mean of the per-seed means.
    """
    ok = [r for r in records if r.status == "ok"]
    seeds = []
    for r in ok:
        if r.seed not in seeds:
            seeds.append(r.seed)
    per_seed = {}
    metric_names = [name for name, _ in _SUMMARY_METRICS] + [f"p_at_{val_n}"]
    for seed in seeds:
        mine = [r for r in ok if r.seed == seed]
        if len(mine) < top_m:
            raise ValueError(f"seed {seed}: only {len(mine)} successful trials, need {top_m}")
        mine.sort(key=lambda r: (-r.best_valid_p, r.hp_index))
        top = mine[:top_m]
        summary = {}
        for name in metric_names:
            vals = np.array([_metric_values(r, val_n)[name] for r in top])
            std = 0.0 if top_m == 1 else float(np.std(vals, ddof=1))
            summary[name] = (float(np.mean(vals)), std)
        per_seed[seed] = summary
    grand = {
        name: float(np.mean([per_seed[s][name][0] for s in seeds])) for name in metric_names
    }
    return per_seed, grand


def render_summary(per_seed, grand, arch, val_n=5):
    """Aligned text table: one row per seed, mean +/- std per metric."""
    names = [name for name, _ in _SUMMARY_METRICS] + [f"p_at_{val_n}"]
    headers = [label for _, label in _SUMMARY_METRICS] + [f"P@{val_n}"]
    lines = []
    head = f"{arch.upper():<6} {'seed':>6}  " + "  ".join(f"{h:>28}" for h in headers)
    lines.append(head)
    for seed, summary in per_seed.items():
        cells = [f"{summary[n][0]:.3f} +/- {summary[n][1]:.3f}" for n in names]
        lines.append(f"{'':<6} {seed:>6}  " + "  ".join(f"{c:>28}" for c in cells))
    cells = [f"{grand[n]:.3f}" for n in names]
    lines.append(f"{'mean':<6} {'':>6}  " + "  ".join(f"{c:>28}" for c in cells))
    return "\n".join(lines) + "\n"


LEDGER_HEADER = [
    "dc", "k", "q", "eta", "seed", "best_valid_p", "test_micro_f1",
    "test_macro_f1_standard", "test_macro_f1_of_means", "test_p_at_n", "status",
]


def ledger_line(record: TrialRecord, val_n):
    hp = record.hp
    if record.status == "ok":
        m = record.test_metrics
        vals = [
            f"{record.best_valid_p:.6f}", f"{m.micro_f1:.6f}",
            f"{m.macro_f1_standard:.6f}", f"{m.macro_f1_of_means:.6f}",
            f"{m.p_at_n[val_n]:.6f}",
        ]
    else:
        vals = ["nan"] * 5
    fields = [str(hp.dc), str(hp.k), f"{hp.q:g}", f"{hp.eta:g}", str(record.seed)]
    return "\t".join(fields + vals + [record.status])


def parse_ledger(path, val_n):
    """Read an existing trial ledger; returns (records, done-key set).

    Raises LedgerError naming the first corrupt line.
    """
    records = []
    done = set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if lineno == 1 and fields == LEDGER_HEADER:
                continue
            if len(fields) != len(LEDGER_HEADER):
                raise LedgerError(lineno, f"expected {len(LEDGER_HEADER)} fields, got {len(fields)}")
            try:
                dc, k, seed = int(fields[0]), int(fields[1]), int(fields[4])
                q, eta = float(fields[2]), float(fields[3])
                best_valid = float(fields[5])
                status = fields[10]
                if status not in ("ok", "failed"):
                    raise ValueError(f"bad status {status!r}")
                hp = model.Hyperparams(dc, k, q, eta)
                if status == "ok":
                    report = MetricsReport(
                        float(fields[6]), float(fields[7]), float(fields[8]),
                        {val_n: float(fields[9])},
                    )
                    rec = TrialRecord(hp, -1, seed, "ok", best_valid, report)
                else:
                    rec = TrialRecord(hp, -1, seed, "failed")
            except ValueError as e:
                raise LedgerError(lineno, str(e)) from None
            records.append(rec)
            done.add((dc, k, q, eta, seed))
    return records, done


def assign_grid_indices(records, spec):
    """Attach canonical grid positions to records parsed from a ledger."""
    index = {
        (hp.dc, hp.k, hp.q, hp.eta): i for i, hp in enumerate(enumerate_grid(spec))
    }
    for r in records:
        r.hp_index = index.get((r.hp.dc, r.hp.k, r.hp.q, r.hp.eta), len(index))
    return records
