"""Scikit-learn style wrapper around the corpus/trainer pipeline.

``ConvTextClassifier`` takes pre-tokenized documents (sequences of token
strings) and multi-label targets, builds the vocabulary and label space on
``fit``, and exposes ``predict_proba`` / ``predict`` plus the usual
``get_params`` / ``set_params`` machinery so it composes with the ecosystem.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from . import model
from .corpus import (
    DEFAULT_MAX_TOKENS,
    Document,
    LabelSpace,
    Vocabulary,
    build_embedding_matrix,
    parse_embedding_file,
)
from .trainer import TrainConfig, fit, predict


class ConvTextClassifier(BaseEstimator):
    """Multi-label text classifier: conv features pooled by max-over-time
    (``arch="cnn"``) or by label-wise attention (``arch="caml"``).

    Parameters mirror the command-line tool; defaults are the fixed protocol
    settings (batch size 16, patience 10, 200 epochs max, validation P@5).
    """

    def __init__(
        self,
        arch="caml",
        dc=50,
        k=10,
        q=0.2,
        eta=0.0001,
        batch_size=16,
        max_epochs=200,
        patience=10,
        val_n=5,
        seed=1337,
        max_tokens=DEFAULT_MAX_TOKENS,
        embed_dim=100,
        embeddings=None,
        threshold=0.5,
    ):
        self.arch = arch
        self.dc = dc
        self.k = k
        self.q = q
        self.eta = eta
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.val_n = val_n
        self.seed = seed
        self.max_tokens = max_tokens
        self.embed_dim = embed_dim
        self.embeddings = embeddings
        self.threshold = threshold

    def fit(self, X, y, X_valid=None, y_valid=None):
        """Train on tokenized documents X and label collections y.

        Without an explicit validation split the training set doubles as the
        validation set (useful for memorization checks; for real model
        selection pass a held-out split).
        """
        X = list(X)
        y = list(y)
        if len(X) != len(y):
            raise ValueError("X and y length mismatch")
        tokens_seen = []
        seen = set()
        for doc in X:
            for t in doc:
                if t not in seen:
                    seen.add(t)
                    tokens_seen.append(t)
        labels_seen = []
        label_set = set()
        for labels in y:
            for l in labels:
                if l not in label_set:
                    label_set.add(l)
                    labels_seen.append(l)
        self.vocab_ = Vocabulary(tokens_seen)
        self.label_space_ = LabelSpace(labels_seen)
        self.classes_ = np.array(self.label_space_.names, dtype=object)

        train_docs = self._to_documents(X, y, "train")
        if X_valid is None:
            valid_docs = train_docs
        else:
            valid_docs = self._to_documents(list(X_valid), list(y_valid), "valid")

        hp = model.Hyperparams(self.dc, self.k, self.q, self.eta)
        val_n = min(self.val_n, len(self.label_space_))
        config = TrainConfig(
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            patience=self.patience,
            val_n=val_n,
            seed=self.seed,
        )
        rng = np.random.default_rng(self.seed)
        if self.embeddings is not None:
            table, d = parse_embedding_file(self.embeddings)
        else:
            table, d = {}, self.embed_dim
        params = model.init_params(self.arch, len(self.vocab_), d, hp, len(self.label_space_), rng)
        params.embedding = build_embedding_matrix(table, d, self.vocab_, rng)
        result = fit(params, train_docs, valid_docs, hp, config, rng)
        self.model_params_ = result.best_params
        self.best_epoch_ = result.best_epoch
        self.best_score_ = result.best_score
        self.history_ = result.history
        return self

    def predict_proba(self, X):
        """Per-document probabilities, shape (N, n_labels), label order = classes_."""
        self._check_fitted()
        docs = [
            Document(str(i), self._encode(doc), frozenset()) for i, doc in enumerate(X)
        ]
        return predict(self.model_params_, docs)

    def predict(self, X):
        """0/1 indicator matrix after thresholding the probabilities."""
        return (self.predict_proba(X) >= self.threshold).astype(np.int64)

    def _encode(self, tokens):
        ids = [self.vocab_.id_for(t) for t in list(tokens)[: self.max_tokens]]
        if not ids:
            raise ValueError("empty document")
        return np.asarray(ids, dtype=np.int64)

    def _to_documents(self, X, y, prefix):
        docs = []
        for i, (tokens, labels) in enumerate(zip(X, y)):
            ids = self._encode(tokens)
            lab = frozenset(self.label_space_.index[l] for l in labels)
            docs.append(Document(f"{prefix}-{i}", ids, lab))
        return docs

    def _check_fitted(self):
        if not hasattr(self, "model_params_"):
            raise NotFittedError("ConvTextClassifier is not fitted yet")
