"""Training protocol: Adam, early stopping on validation P@n, best-model selection.

Fixed protocol: length-sorted batches that are never reshuffled, validation at
batch size 1 with dropout disabled after every epoch, patience-based
termination, and the best-validation parameters returned.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import model
from .corpus import PAD_ID, label_matrix, make_batch, make_batches
from .metrics import precision_at_n


class TrainingDiverged(RuntimeError):
    """Non-finite training loss."""


@dataclass
class TrainConfig:
    batch_size: int = 16
    max_epochs: int = 200
    patience: int = 10
    val_n: int = 5  # validation metric is P@val_n
    seed: int = 1337
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.patience >= self.max_epochs:
            raise ValueError("patience must be smaller than max_epochs")
        if self.val_n < 1:
            raise ValueError("val_n must be >= 1")


class AdamState:
    """First/second moment accumulators and the step counter."""

    def __init__(self, params: model.ModelParams):
        self.m = {name: np.zeros_like(a) for name, a in params.named_arrays()}
        self.v = {name: np.zeros_like(a) for name, a in params.named_arrays()}
        self.t = 0


def adam_step(params, grads, state: AdamState, eta, beta1=0.9, beta2=0.999, epsilon=1e-8):
    """One in-place Adam update with bias-corrected moments.

    The PAD embedding row is re-zeroed after the step so it never drifts.
    """
    state.t += 1
    t = state.t
    for (name, theta), (_, g) in zip(params.named_arrays(), grads.named_arrays()):
        if not np.all(np.isfinite(g)):
            raise TrainingDiverged(f"non-finite gradient in {name}")
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        theta -= eta * m_hat / (np.sqrt(v_hat) + epsilon)
    params.embedding[PAD_ID] = 0.0
    return params, state


class EarlyStopping:
    """Strictly-greater improvement tracking; ties do not reset patience."""

    def __init__(self, patience):
        self.patience = patience
        self.best_score = -np.inf
        self.best_epoch = 0
        self.stale = 0

    def update(self, epoch, score):
        """Record one epoch's score; returns True if this is a new best."""
        if score > self.best_score:
            self.best_score = score
            self.best_epoch = epoch
            self.stale = 0
            return True
        self.stale += 1
        return False

    @property
    def should_stop(self):
        return self.stale >= self.patience


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    valid_score: float
    is_best: bool


@dataclass
class FitResult:
    best_params: model.ModelParams
    best_epoch: int
    best_score: float
    history: list


def fit(params, train_docs, valid_docs, hp: model.Hyperparams, config: TrainConfig, rng):
    """Train ``params`` in place and return the best-validation snapshot.

    ``rng`` is the run's single stream (it has already served parameter and
    embedding initialization); here it only draws dropout masks.
    """
    n_labels = params.n_labels
    if config.val_n > n_labels:
        raise ValueError(f"validation P@{config.val_n} needs at least {config.val_n} labels")
    batches = make_batches(train_docs, config.batch_size, n_labels)
    valid_truth = label_matrix(valid_docs, n_labels)
    state = AdamState(params)
    stopper = EarlyStopping(config.patience)
    history = []
    best_params = None

    for epoch in range(1, config.max_epochs + 1):
        total_loss = 0.0
        for batch_idx, batch in enumerate(batches):
            trace = model.forward(params, batch, hp.q, rng)
            loss = model.bce_loss(trace.logits, batch.labels)
            if not np.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, batch {batch_idx}")
            total_loss += loss
            grads = model.backward(params, trace, batch.labels)
            adam_step(params, grads, state, hp.eta, config.beta1, config.beta2, config.epsilon)
        probs = predict(params, valid_docs)
        score = precision_at_n(probs, valid_truth, config.val_n)
        is_best = stopper.update(epoch, score)
        if is_best:
            best_params = params.copy()
        history.append(EpochRecord(epoch, total_loss / len(train_docs), score, is_best))
        if stopper.should_stop:
            break

    return FitResult(best_params, stopper.best_epoch, stopper.best_score, history)


def predict(params, docs):
    """Per-document label probabilities at batch size 1, dropout disabled."""
    out = np.empty((len(docs), params.n_labels))
    for i, doc in enumerate(docs):
        batch = make_batch([doc], params.n_labels)
        out[i] = model.forward(params, batch).probabilities[0]
    return out


def write_history(path, history, val_n):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"epoch\ttrain_loss\tvalid_P@{val_n}\tis_best\n")
        for rec in history:
            f.write(
                f"{rec.epoch}\t{rec.train_loss:.6f}\t{rec.valid_score:.6f}\t{int(rec.is_best)}\n"
            )
