"""Neural core: parameter containers, forward passes, loss, analytic gradients.

Two architectures share a word-embedding + 1D-convolution front end:

* CNN  -- tanh conv features pooled by max over time, then a linear layer.
* CAML -- tanh conv features pooled per label by attention, then a linear
  layer; the convolution is padded so the output length equals the input
  length.

All math runs in float64; checkpoints store float32.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .corpus import PAD_ID

CNN = "cnn"
CAML = "caml"

CHECKPOINT_MAGIC = b"ATNLAB01"
_ARCH_CODE = {CNN: 0, CAML: 1}
_ARCH_NAME = {0: CNN, 1: CAML}


class ShapeError(ValueError):
    """Inconsistent array shapes."""


class CheckpointError(ValueError):
    """Unreadable or inconsistent checkpoint file."""


@dataclass
class Hyperparams:
    """The tunable tuple: filter count, filter size, dropout, learning rate."""

    dc: int
    k: int
    q: float
    eta: float

    def __post_init__(self):
        if self.dc < 1:
            raise ValueError("dc must be >= 1")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 0.0 <= self.q < 1.0:
            raise ValueError("q must be in [0, 1)")
        if self.eta <= 0.0:
            raise ValueError("eta must be positive")


@dataclass
class ModelParams:
    """All trainable arrays for one model. ``attention_u`` is present iff CAML."""

    arch: str
    embedding: np.ndarray  # (V, d)
    conv_weight: np.ndarray  # (dc, d, k)
    conv_bias: np.ndarray  # (dc,)
    attention_u: np.ndarray | None  # (L, dc), CAML only
    output_w: np.ndarray  # (L, dc)
    output_b: np.ndarray  # (L,)

    def __post_init__(self):
        if self.arch not in (CNN, CAML):
            raise ValueError(f"unknown architecture {self.arch!r}")
        if (self.attention_u is not None) != (self.arch == CAML):
            raise ShapeError("attention_u must be present iff arch is caml")
        dc, d, _ = self.conv_weight.shape
        if self.embedding.shape[1] != d:
            raise ShapeError("embedding dim does not match conv_weight")
        if self.conv_bias.shape != (dc,):
            raise ShapeError("conv_bias shape mismatch")
        if self.output_w.shape[1] != dc:
            raise ShapeError("output_w width does not match filter count")
        if self.attention_u is not None and self.attention_u.shape != self.output_w.shape:
            raise ShapeError("attention_u shape must match output_w")
        if self.output_b.shape != (self.output_w.shape[0],):
            raise ShapeError("output_b shape mismatch")

    @property
    def vocab_size(self):
        return self.embedding.shape[0]

    @property
    def embed_dim(self):
        return self.embedding.shape[1]

    @property
    def n_filters(self):
        return self.conv_weight.shape[0]

    @property
    def filter_size(self):
        return self.conv_weight.shape[2]

    @property
    def n_labels(self):
        return self.output_w.shape[0]

    def named_arrays(self):
        """(name, array) pairs in declaration order; skips absent attention_u."""
        pairs = [
            ("embedding", self.embedding),
            ("conv_weight", self.conv_weight),
            ("conv_bias", self.conv_bias),
        ]
        if self.attention_u is not None:
            pairs.append(("attention_u", self.attention_u))
        pairs.extend([("output_w", self.output_w), ("output_b", self.output_b)])
        return pairs

    def copy(self):
        return ModelParams(
            self.arch,
            self.embedding.copy(),
            self.conv_weight.copy(),
            self.conv_bias.copy(),
            None if self.attention_u is None else self.attention_u.copy(),
            self.output_w.copy(),
            self.output_b.copy(),
        )

    def zeros_like(self):
        """Gradient accumulator shaped like this parameter set."""
        return ModelParams(
            self.arch,
            np.zeros_like(self.embedding),
            np.zeros_like(self.conv_weight),
            np.zeros_like(self.conv_bias),
            None if self.attention_u is None else np.zeros_like(self.attention_u),
            np.zeros_like(self.output_w),
            np.zeros_like(self.output_b),
        )


def init_params(arch, vocab_size, embed_dim, hp: Hyperparams, n_labels, rng):
    """Seed-determined initialization.

    Conv/linear/attention weights from uniform(-a, a), a = sqrt(6/(fan_in+fan_out));
    biases zero. The embedding starts zero and is normally overwritten by
    pretrained vectors afterwards. Draw order is fixed: conv_weight,
    attention_u (CAML), output_w.
    """
    embedding = np.zeros((vocab_size, embed_dim), dtype=np.float64)
    conv_weight = _glorot(rng, (hp.dc, embed_dim, hp.k), embed_dim * hp.k, hp.dc * hp.k)
    conv_bias = np.zeros(hp.dc, dtype=np.float64)
    attention_u = None
    if arch == CAML:
        attention_u = _glorot(rng, (n_labels, hp.dc), hp.dc, n_labels)
    output_w = _glorot(rng, (n_labels, hp.dc), hp.dc, n_labels)
    output_b = np.zeros(n_labels, dtype=np.float64)
    return ModelParams(arch, embedding, conv_weight, conv_bias, attention_u, output_w, output_b)


def _glorot(rng, shape, fan_in, fan_out):
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


def caml_padding(k):
    """Asymmetric padding that keeps the conv output length equal to the input."""
    return (k - 1) // 2, k // 2


def conv1d(x, w, b, padding=(0, 0)):
    """1D convolution with bias, stride 1, zero padding.

    x: (d, T); w: (dc, d, k); b: (dc,). Returns (dc, T + left + right - k + 1).
    """
    left, right = padding
    k = w.shape[2]
    t = x.shape[1]
    if t + left + right < k:
        raise ShapeError(f"window {k} larger than padded input length {t + left + right}")
    if left or right:
        x = np.pad(x, ((0, 0), (left, right)))
    windows = np.lib.stride_tricks.sliding_window_view(x, k, axis=1)  # (d, T', k)
    return np.einsum("fdk,dtk->ft", w, windows) + b[:, None]


@dataclass
class ForwardTrace:
    """Intermediate activations of one forward pass, kept for backprop."""

    arch: str
    token_ids: np.ndarray  # (B, T)
    mask: np.ndarray | None  # (B, T, d) inverted-scaled dropout mask, None if off
    embedded: np.ndarray  # (B, T, d) after dropout
    padding: tuple  # conv padding used
    h: np.ndarray  # (B, dc, T') post-tanh conv output
    pool_argmax: np.ndarray | None  # (B, dc) CNN max positions
    alpha: np.ndarray | None  # (B, L, T') CAML attention weights
    context: np.ndarray  # CNN: (B, dc) pooled; CAML: (B, L, dc) per-label vectors
    logits: np.ndarray  # (B, L)
    probabilities: np.ndarray = field(init=False)

    def __post_init__(self):
        self.probabilities = sigmoid(self.logits)


def sigmoid(z):
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _dropout_mask(rng, shape, q):
    # Inverted scaling: expectation of mask is 1, so inference needs no rescale.
    return (rng.random(shape) >= q).astype(np.float64) / (1.0 - q)


def _embed(params, batch, q, rng):
    emb = params.embedding[batch.token_ids]  # (B, T, d)
    mask = None
    if q > 0.0:
        if rng is None:
            raise ValueError("dropout enabled but no rng given")
        mask = _dropout_mask(rng, emb.shape, q)
        emb = emb * mask
    return emb, mask


def forward_cnn(params, batch, q=0.0, rng=None):
    """CNN forward: embed -> dropout -> unpadded conv -> tanh -> max over time -> linear.

    Every document in the (padded) batch must be at least ``k`` tokens long.
    """
    if params.arch != CNN:
        raise ValueError("forward_cnn requires a cnn model")
    k = params.filter_size
    if batch.token_ids.shape[1] < k:
        short = batch.doc_ids[int(np.argmax(batch.lengths))]
        raise ShapeError(
            f"document {short!r}: padded length {batch.token_ids.shape[1]} < filter size {k}"
        )
    emb, mask = _embed(params, batch, q, rng)
    b_size = emb.shape[0]
    # Per-document compute keeps a document's result bitwise independent of
    # which batch it sits in (as long as it is the longest member).
    h = np.stack(
        [np.tanh(conv1d(emb[i].T, params.conv_weight, params.conv_bias)) for i in range(b_size)]
    )  # (B, dc, T')
    pool_argmax = np.argmax(h, axis=2)  # (B, dc)
    pooled = np.take_along_axis(h, pool_argmax[:, :, None], axis=2)[:, :, 0]  # (B, dc)
    logits = np.stack([params.output_w @ pooled[i] + params.output_b for i in range(b_size)])
    return ForwardTrace(CNN, batch.token_ids, mask, emb, (0, 0), h, pool_argmax, None, pooled, logits)


def forward_caml(params, batch, q=0.0, rng=None):
    """CAML forward: embed -> dropout -> length-preserving conv -> tanh -> per-label
    attention pooling -> linear.

    Attention runs over the padded length; evaluation therefore uses batch size 1.
    """
    if params.arch != CAML:
        raise ValueError("forward_caml requires a caml model")
    padding = caml_padding(params.filter_size)
    emb, mask = _embed(params, batch, q, rng)
    b_size = emb.shape[0]
    h = np.stack(
        [
            np.tanh(conv1d(emb[i].T, params.conv_weight, params.conv_bias, padding))
            for i in range(b_size)
        ]
    )  # (B, dc, T)
    alpha = np.empty((b_size, params.n_labels, h.shape[2]))
    context = np.empty((b_size, params.n_labels, params.n_filters))
    logits = np.empty((b_size, params.n_labels))
    for i in range(b_size):
        alpha[i] = _softmax_last(params.attention_u @ h[i])  # (L, T)
        context[i] = alpha[i] @ h[i].T  # (L, dc)
        logits[i] = np.sum(params.output_w * context[i], axis=1) + params.output_b
    return ForwardTrace(CAML, batch.token_ids, mask, emb, padding, h, None, alpha, context, logits)


def forward(params, batch, q=0.0, rng=None):
    if params.arch == CNN:
        return forward_cnn(params, batch, q, rng)
    return forward_caml(params, batch, q, rng)


def _softmax_last(scores):
    shifted = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def bce_loss(logits, targets):
    """Binary cross-entropy summed over batch and labels.

    Computed from logits in the standard stable form; never takes a literal
    log of a probability.
    """
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    return float(np.sum(np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))))


def backward(params, trace: ForwardTrace, targets):
    """Analytic gradients of ``bce_loss`` w.r.t. every trainable array.

    Returns a ModelParams-shaped container. The PAD embedding row's gradient
    is forced to zero.
    """
    if trace.arch != params.arch:
        raise ValueError("trace architecture does not match params")
    if trace.logits.shape != np.shape(targets):
        raise ShapeError("targets shape does not match trace logits")
    grads = params.zeros_like()
    dlogits = trace.probabilities - targets  # (B, L)
    b_size = dlogits.shape[0]

    if params.arch == CNN:
        pooled = trace.context  # (B, dc)
        grads.output_w[...] = dlogits.T @ pooled
        grads.output_b[...] = dlogits.sum(axis=0)
        dpooled = dlogits @ params.output_w  # (B, dc)
        dh = np.zeros_like(trace.h)
        rows = np.arange(params.n_filters)
        for i in range(b_size):
            dh[i, rows, trace.pool_argmax[i]] = dpooled[i]
    else:
        grads.output_w[...] = np.einsum("bl,blf->lf", dlogits, trace.context)
        grads.output_b[...] = dlogits.sum(axis=0)
        dcontext = dlogits[:, :, None] * params.output_w[None, :, :]  # (B, L, dc)
        dalpha = np.einsum("blf,bft->blt", dcontext, trace.h)
        # softmax backward over the time axis
        dscores = trace.alpha * (dalpha - np.sum(trace.alpha * dalpha, axis=-1, keepdims=True))
        grads.attention_u[...] = np.einsum("blt,bft->lf", dscores, trace.h)
        dh = np.einsum("blf,blt->bft", dcontext, trace.alpha)
        dh += np.einsum("lf,blt->bft", params.attention_u, dscores)

    dz = dh * (1.0 - trace.h**2)  # tanh backward, (B, dc, T')
    left, right = trace.padding
    k = params.filter_size
    t_len = trace.embedded.shape[1]
    demb = np.zeros_like(trace.embedded)  # (B, T, d)
    for i in range(b_size):
        xp = np.pad(trace.embedded[i].T, ((0, 0), (left, right)))  # (d, T+pad)
        windows = np.lib.stride_tricks.sliding_window_view(xp, k, axis=1)  # (d, T', k)
        grads.conv_weight += np.einsum("ft,dtk->fdk", dz[i], windows)
        dxp = np.zeros_like(xp)
        t_out = dz.shape[2]
        # scatter each filter tap back onto the padded input
        for j in range(k):
            dxp[:, j : j + t_out] += np.einsum("ft,fd->dt", dz[i], params.conv_weight[:, :, j])
        demb[i] = dxp[:, left : left + t_len].T
    grads.conv_bias[...] = dz.sum(axis=(0, 2))

    if trace.mask is not None:
        demb = demb * trace.mask
    np.add.at(
        grads.embedding,
        trace.token_ids.ravel(),
        demb.reshape(-1, params.embed_dim),
    )
    grads.embedding[PAD_ID] = 0.0
    return grads


def save_checkpoint(path, params: ModelParams):
    """Write the binary checkpoint: magic, u32 header, float32 arrays."""
    header = struct.pack(
        "<6I",
        _ARCH_CODE[params.arch],
        params.vocab_size,
        params.embed_dim,
        params.n_filters,
        params.filter_size,
        params.n_labels,
    )
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(header)
        for _, arr in params.named_arrays():
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path):
    """Read a checkpoint back into float64 ModelParams."""
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError(f"{path}: bad magic {magic!r}")
        try:
            arch_code, v, d, dc, k, n_labels = struct.unpack("<6I", f.read(24))
        except struct.error as e:
            raise CheckpointError(f"{path}: truncated header") from e
        if arch_code not in _ARCH_NAME:
            raise CheckpointError(f"{path}: unknown architecture code {arch_code}")
        arch = _ARCH_NAME[arch_code]

        def read_array(shape):
            n = int(np.prod(shape))
            buf = f.read(4 * n)
            if len(buf) != 4 * n:
                raise CheckpointError(f"{path}: truncated array data")
            return np.frombuffer(buf, dtype="<f4").astype(np.float64).reshape(shape)

        embedding = read_array((v, d))
        conv_weight = read_array((dc, d, k))
        conv_bias = read_array((dc,))
        attention_u = read_array((n_labels, dc)) if arch == CAML else None
        output_w = read_array((n_labels, dc))
        output_b = read_array((n_labels,))
        if f.read(1):
            raise CheckpointError(f"{path}: trailing bytes")
    return ModelParams(arch, embedding, conv_weight, conv_bias, attention_u, output_w, output_b)
