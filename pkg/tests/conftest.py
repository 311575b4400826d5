from pathlib import Path

import numpy as np
import pytest

from convlabel import model
from convlabel.corpus import Document, make_batch

DATA_DIR = Path(__file__).resolve().parent.parent / "data"


@pytest.fixture
def data_dir():
    return DATA_DIR


def random_params(arch, rng, vocab_size=20, d=8, dc=6, k=3, n_labels=4):
    hp = model.Hyperparams(dc, k, 0.0, 0.001)
    params = model.init_params(arch, vocab_size, d, hp, n_labels, rng)
    # give embeddings (and biases) non-trivial values; PAD row stays zero
    params.embedding[1:] = rng.uniform(-0.5, 0.5, size=(vocab_size - 1, d))
    params.conv_bias[:] = rng.uniform(-0.1, 0.1, size=dc)
    params.output_b[:] = rng.uniform(-0.1, 0.1, size=n_labels)
    return params


def random_batch(rng, vocab_size=20, n_labels=4, n_docs=3, min_len=5, max_len=12):
    docs = []
    for i in range(n_docs):
        length = int(rng.integers(min_len, max_len + 1))
        tokens = rng.integers(1, vocab_size, size=length)
        labels = frozenset(
            int(l) for l in np.nonzero(rng.random(n_labels) < 0.5)[0]
        )
        docs.append(Document(f"doc{i}", tokens.astype(np.int64), labels))
    return make_batch(docs, n_labels), docs


def signature_corpus(n_docs=20, n_labels=8, seed=11):
    """Synthetic documents whose labels are recoverable from signature tokens.

    Token ids: label l owns ids {2+3l, 3+3l, 4+3l}; noise ids follow.
    """
    rng = np.random.default_rng(seed)
    noise_base = 2 + 3 * n_labels
    n_noise = 10
    docs = []
    for i in range(n_docs):
        n_lab = int(rng.integers(1, 4))
        labels = sorted(rng.choice(n_labels, size=n_lab, replace=False).tolist())
        tokens = []
        for l in labels:
            tokens += [2 + 3 * l, 3 + 3 * l, 4 + 3 * l] * 3
        tokens += [noise_base + int(rng.integers(0, n_noise)) for _ in range(8)]
        rng.shuffle(tokens)
        docs.append(Document(f"s{i}", np.asarray(tokens, dtype=np.int64), frozenset(labels)))
    vocab_size = noise_base + n_noise
    return docs, vocab_size, n_labels
