"""Multi-label evaluation: Micro-F1, two Macro-F1 definitions, precision@n.

Two Macro-F1 conventions circulate in the literature and can differ
substantially, so both are always reported:

* standard: mean over classes of per-class F1
* of_means: harmonic mean of macro-precision and macro-recall

Zero denominators yield 0 everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class MetricsReport:
    micro_f1: float
    macro_f1_standard: float
    macro_f1_of_means: float
    p_at_n: dict  # n -> value

    def as_rows(self):
        rows = [
            ("micro_f1", self.micro_f1),
            ("macro_f1_standard", self.macro_f1_standard),
            ("macro_f1_of_means", self.macro_f1_of_means),
        ]
        for n in sorted(self.p_at_n):
            rows.append((f"p_at_{n}", self.p_at_n[n]))
        return rows

    def to_tsv(self):
        return "".join(f"{name}\t{value:.6f}\n" for name, value in self.as_rows())


def _validate(probabilities, truths):
    probabilities = np.asarray(probabilities, dtype=np.float64)
    truths = np.asarray(truths, dtype=np.float64)
    if probabilities.shape != truths.shape or probabilities.ndim != 2:
        raise ValueError("probabilities and truths must both be (N, L)")
    return probabilities, truths


def precision_at_n(probabilities, truths, n):
    """Fraction of the n highest-scored labels that are true, averaged over docs.

    Ties are broken toward the lower label index.
    """
    probabilities, truths = _validate(probabilities, truths)
    n_labels = probabilities.shape[1]
    if n < 1 or n > n_labels:
        raise ValueError(f"n must be in [1, {n_labels}], got {n}")
    # stable argsort of -p: equal scores keep ascending index order
    order = np.argsort(-probabilities, axis=1, kind="stable")[:, :n]
    hits = np.take_along_axis(truths, order, axis=1)
    return float(np.mean(np.sum(hits, axis=1) / n))


def _f1(precision, recall):
    denom = precision + recall
    return 0.0 if denom == 0.0 else 2.0 * precision * recall / denom


def micro_f1(probabilities, truths, threshold=0.5):
    """F1 from TP/FP/FN pooled over every (document, label) cell."""
    probabilities, truths = _validate(probabilities, truths)
    pred = probabilities >= threshold
    true = truths > 0.5
    tp = float(np.sum(pred & true))
    fp = float(np.sum(pred & ~true))
    fn = float(np.sum(~pred & true))
    denom = 2.0 * tp + fp + fn
    return 0.0 if denom == 0.0 else 2.0 * tp / denom


def macro_f1_both(probabilities, truths, threshold=0.5):
    """Both Macro-F1 conventions, as (standard, of_means)."""
    probabilities, truths = _validate(probabilities, truths)
    pred = probabilities >= threshold
    true = truths > 0.5
    tp = np.sum(pred & true, axis=0).astype(np.float64)
    fp = np.sum(pred & ~true, axis=0).astype(np.float64)
    fn = np.sum(~pred & true, axis=0).astype(np.float64)

    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(tp + fp > 0, tp / (tp + fp), 0.0)
        recall = np.where(tp + fn > 0, tp / (tp + fn), 0.0)
        per_class_f1 = np.where(
            precision + recall > 0, 2.0 * precision * recall / (precision + recall), 0.0
        )
    standard = float(np.mean(per_class_f1))
    of_means = _f1(float(np.mean(precision)), float(np.mean(recall)))
    return standard, of_means


def compute_report(probabilities, truths, ns=(5,), threshold=0.5):
    standard, of_means = macro_f1_both(probabilities, truths, threshold)
    n_labels = np.asarray(probabilities).shape[1]
    p_at = {n: precision_at_n(probabilities, truths, n) for n in ns if n <= n_labels}
    return MetricsReport(micro_f1(probabilities, truths, threshold), standard, of_means, p_at)
