"""
A small convolutional network written directly in numpy.

Layer stack: conv3x3 -> relu -> maxpool2 -> conv3x3 -> relu -> maxpool2 ->
flatten -> dropout -> dense -> softmax, trained with categorical
cross-entropy and plain minibatch SGD.

Tensors are ``(C, H, W)`` arrays for a single sample or ``(N, C, H, W)`` for a
batch; every layer function accepts both. Convolution here is
cross-correlation (no kernel flip), zero "same" padding, stride 1.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ShapeError, SpectraError, StaleIntermediatesError

NUM_CLASSES = 4
PARAM_NAMES = ("conv1.w", "conv1.b", "conv2.w", "conv2.b", "dense.w", "dense.b")
MODEL_MAGIC = "spectra-microcnn"
MODEL_VERSION = 1
PROB_FLOOR = 1e-12


def _batched(x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        return x[None], True
    if x.ndim != 4:
        raise ShapeError(f"expected (C,H,W) or (N,C,H,W), got shape {x.shape}")
    return x, False


def _windows(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    ph, pw = kh // 2, kw // 2
    padded = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    # (N, C, H, W, kh, kw)
    return np.lib.stride_tricks.sliding_window_view(padded, (kh, kw), axis=(2, 3))


# ---------------------------------------------------------------------------
# layers


def conv_forward(x, kernels: np.ndarray, biases: np.ndarray) -> np.ndarray:
    """out[o] = sum_i x[i] (cross-correlated with) K[o, i] + b[o]."""
    xb, single = _batched(x)
    out_ch, in_ch, kh, kw = kernels.shape
    if xb.shape[1] != in_ch:
        raise ShapeError(f"kernel expects {in_ch} input channels, got {xb.shape[1]}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"kernel size must be odd, got {kh}x{kw}")
    out = np.einsum("ncxyij,ocij->noxy", _windows(xb, kh, kw), kernels, optimize=True)
    out += biases[None, :, None, None]
    return out[0] if single else out


def conv_backward(x, kernels: np.ndarray, dout) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients (dx, dkernels, dbiases) of a same-padded convolution."""
    xb, single = _batched(x)
    db_, _ = _batched(dout)
    _, _, kh, kw = kernels.shape
    ph, pw = kh // 2, kw // 2
    n, c, h, w = xb.shape
    dk = np.einsum("ncxyij,noxy->ocij", _windows(xb, kh, kw), db_, optimize=True)
    dbias = db_.sum(axis=(0, 2, 3))
    dxp = np.zeros((n, c, h + 2 * ph, w + 2 * pw))
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i:i + h, j:j + w] += np.einsum("noxy,oc->ncxy", db_, kernels[:, :, i, j])
    dx = dxp[:, :, ph:ph + h, pw:pw + w]
    return (dx[0] if single else dx), dk, dbias


def relu(x) -> np.ndarray:
    return np.maximum(x, 0.0)


def maxpool2(x) -> tuple[np.ndarray, np.ndarray]:
    """2x2 non-overlapping max pooling.

    Returns the pooled tensor and the argmax index (0..3, row-major within the
    window) of each output; ties go to the first position.
    """
    xb, single = _batched(x)
    n, c, h, w = xb.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2 needs even height and width, got {h}x{w}")
    win = xb.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    idx = np.argmax(win, axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return (out[0], idx[0]) if single else (out, idx)


def maxpool2_backward(dout, idx) -> np.ndarray:
    db_, single = _batched(dout)
    idx = idx[None] if single else idx
    n, c, ho, wo = db_.shape
    win = np.zeros((n, c, ho, wo, 4))
    np.put_along_axis(win, idx[..., None], db_[..., None], axis=-1)
    dx = win.reshape(n, c, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * ho, 2 * wo)
    return dx[0] if single else dx


def dropout_mask(shape, p: float, rng: np.random.Generator) -> np.ndarray:
    """Inverted-dropout multiplier: 0 with probability p, else 1/(1-p).

    Uniform draws are consumed in row-major order of ``shape``.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {p}")
    if p == 0.0:
        return np.ones(shape)
    keep = rng.random(shape) >= p
    return keep / (1.0 - p)


def dropout(x, p: float, train: bool, rng: np.random.Generator | None = None) -> np.ndarray:
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {p}")
    x = np.asarray(x, dtype=np.float64)
    if not train or p == 0.0:
        return x.copy()
    return x * dropout_mask(x.shape, p, rng if rng is not None else np.random.default_rng())


def dense_forward(x, weights: np.ndarray, biases: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != weights.shape[1] or biases.shape != (weights.shape[0],):
        raise ShapeError(f"dense layer {weights.shape} cannot take input of length {x.shape[-1]}")
    return x @ weights.T + biases


def softmax(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] == 0:
        raise ValueError("softmax of an empty vector")
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(probs, true_class: int) -> float:
    probs = np.asarray(probs, dtype=np.float64)
    if not 0 <= true_class < probs.shape[-1]:
        raise IndexError(f"class index {true_class} out of range for {probs.shape[-1]} classes")
    return float(-np.log(max(probs[true_class], PROB_FLOOR)))


def sgd_step(params: dict, grads: dict, lr: float) -> dict:
    """Return new parameters ``theta - lr * grad``; inputs are left untouched."""
    out = {}
    for name, value in params.items():
        g = grads[name]
        if g.shape != value.shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, parameter has {value.shape}")
        out[name] = value - lr * g
    return out


# ---------------------------------------------------------------------------
# network


@dataclass
class _Pass:
    version: int
    x: np.ndarray
    a1: np.ndarray
    idx1: np.ndarray
    p1: np.ndarray
    a2: np.ndarray
    idx2: np.ndarray
    p2_shape: tuple
    flat: np.ndarray
    mask: np.ndarray
    probs: np.ndarray


@dataclass
class MicroCnn:
    """Two conv blocks and one dense layer ending in 4-way softmax."""

    input_shape: tuple[int, int, int]
    channels: tuple[int, int] = (4, 8)
    kernel_size: int = 3
    dropout: float = 0.0
    seed: int = 0
    params: dict = field(default=None, repr=False)

    def __post_init__(self):
        c, h, w = self.input_shape
        if h % 4 or w % 4:
            raise ShapeError(f"input height and width must be multiples of 4, got {h}x{w}")
        if self.kernel_size % 2 == 0:
            raise ShapeError("kernel_size must be odd")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout rate must lie in [0, 1), got {self.dropout}")
        self.input_shape = tuple(int(v) for v in self.input_shape)
        self.channels = tuple(int(v) for v in self.channels)
        self._rng = np.random.default_rng(self.seed)
        if self.params is None:
            self.params = self._init_params()
        self._version = 0
        self._cache: _Pass | None = None

    @property
    def flat_size(self) -> int:
        _, h, w = self.input_shape
        return self.channels[1] * (h // 4) * (w // 4)

    def _init_params(self) -> dict:
        # He-uniform weights, zero biases; draws in PARAM_NAMES order
        c = self.input_shape[0]
        c1, c2 = self.channels
        k = self.kernel_size
        shapes = {
            "conv1.w": (c1, c, k, k),
            "conv2.w": (c2, c1, k, k),
            "dense.w": (NUM_CLASSES, self.flat_size),
        }
        params = {}
        for name in PARAM_NAMES:
            if name.endswith(".w"):
                shape = shapes[name]
                limit = np.sqrt(6.0 / int(np.prod(shape[1:])))
                params[name] = self._rng.uniform(-limit, limit, size=shape)
            else:
                params[name] = np.zeros(shapes[name[:-2] + ".w"][0])
        return params

    def set_params(self, params: dict) -> None:
        for name in PARAM_NAMES:
            if params[name].shape != self.params[name].shape:
                raise ShapeError(f"{name}: expected {self.params[name].shape}, got {params[name].shape}")
        self.params = {name: np.array(params[name], dtype=np.float64) for name in PARAM_NAMES}
        self._version += 1

    def forward(self, x, train: bool = False, mask: np.ndarray | None = None) -> np.ndarray:
        """Class probabilities for a sample or batch; records intermediates.

        In train mode a fresh dropout mask is drawn from the network's rng
        unless ``mask`` is given.
        """
        xb, single = _batched(x)
        if xb.shape[1:] != self.input_shape:
            raise ShapeError(f"network expects input {self.input_shape}, got {xb.shape[1:]}")
        P = self.params
        a1 = relu(conv_forward(xb, P["conv1.w"], P["conv1.b"]))
        p1, idx1 = maxpool2(a1)
        a2 = relu(conv_forward(p1, P["conv2.w"], P["conv2.b"]))
        p2, idx2 = maxpool2(a2)
        flat = p2.reshape(len(xb), -1)
        if mask is None:
            mask = dropout_mask(flat.shape, self.dropout, self._rng) if train else np.ones(flat.shape)
        elif mask.shape != flat.shape:
            raise ShapeError(f"dropout mask shape {mask.shape} does not match {flat.shape}")
        logits = dense_forward(flat * mask, P["dense.w"], P["dense.b"])
        probs = softmax(logits)
        self._cache = _Pass(self._version, xb, a1, idx1, p1, a2, idx2, p2.shape, flat, mask, probs)
        return probs[0] if single else probs

    def loss(self, x, labels, train: bool = False, mask: np.ndarray | None = None) -> float:
        probs = np.atleast_2d(self.forward(x, train, mask))
        labels = np.atleast_1d(labels)
        return float(np.mean([cross_entropy(p, int(t)) for p, t in zip(probs, labels)]))

    def backward(self, labels) -> dict:
        """Gradients of the mean cross-entropy of the last forward pass."""
        c = self._cache
        if c is None or c.version != self._version:
            raise StaleIntermediatesError("backward needs a forward pass with the current parameters")
        labels = np.atleast_1d(labels).astype(int)
        if len(labels) != len(c.probs):
            raise ShapeError(f"{len(labels)} labels for a batch of {len(c.probs)}")
        P = self.params
        n = len(labels)
        dlogits = c.probs.copy()
        dlogits[np.arange(n), labels] -= 1.0
        dlogits /= n
        dropped = c.flat * c.mask
        grads = {"dense.w": dlogits.T @ dropped, "dense.b": dlogits.sum(axis=0)}
        dflat = (dlogits @ P["dense.w"]) * c.mask
        da2 = maxpool2_backward(dflat.reshape(c.p2_shape), c.idx2) * (c.a2 > 0)
        dp1, grads["conv2.w"], grads["conv2.b"] = conv_backward(c.p1, P["conv2.w"], da2)
        da1 = maxpool2_backward(dp1, c.idx1) * (c.a1 > 0)
        _, grads["conv1.w"], grads["conv1.b"] = conv_backward(c.x, P["conv1.w"], da1)
        return {name: grads[name] for name in PARAM_NAMES}

    def step(self, grads: dict, lr: float) -> None:
        self.params = sgd_step(self.params, grads, lr)
        self._version += 1

    def predict_proba(self, x) -> np.ndarray:
        return self.forward(x, train=False)

    # -- persistence ------------------------------------------------------

    def save(self, path) -> None:
        """Versioned text format; floats are written with repr so they round-trip exactly."""
        c, h, w = self.input_shape
        lines = [
            f"{MODEL_MAGIC} v{MODEL_VERSION}",
            f"input {c} {h} {w}",
            f"channels {self.channels[0]} {self.channels[1]}",
            f"kernel {self.kernel_size}",
            f"dropout {self.dropout!r}",
            f"seed {self.seed}",
        ]
        for name in PARAM_NAMES:
            arr = self.params[name]
            lines.append(f"param {name} {' '.join(str(d) for d in arr.shape)}")
            lines.append(" ".join(repr(float(v)) for v in arr.reshape(-1)))
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "MicroCnn":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines or lines[0] != f"{MODEL_MAGIC} v{MODEL_VERSION}":
            raise SpectraError(f"{path}: not a {MODEL_MAGIC} v{MODEL_VERSION} model file")
        header = {}
        params = {}
        i = 1
        while i < len(lines):
            key, _, rest = lines[i].partition(" ")
            if key == "param":
                name, *dims = rest.split()
                values = np.array([float(v) for v in lines[i + 1].split()])
                params[name] = values.reshape(tuple(int(d) for d in dims))
                i += 2
            else:
                header[key] = rest.split()
                i += 1
        net = cls(
            input_shape=tuple(int(v) for v in header["input"]),
            channels=tuple(int(v) for v in header["channels"]),
            kernel_size=int(header["kernel"][0]),
            dropout=float(header["dropout"][0]),
            seed=int(header["seed"][0]),
        )
        net.set_params(params)
        return net


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.05
    epochs: int = 30
    batch_size: int = 8
    seed: int = 0

    def __post_init__(self):
        if not self.lr >= 0:
            raise ValueError(f"learning rate must be nonnegative, got {self.lr}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    loss: float
    accuracy: float


def evaluate(net: MicroCnn, xs: np.ndarray, ys: np.ndarray) -> tuple[float, float]:
    """Mean cross-entropy and accuracy in eval mode."""
    probs = net.forward(xs, train=False)
    loss = float(np.mean([cross_entropy(p, int(t)) for p, t in zip(probs, ys)]))
    acc = float(np.mean(np.argmax(probs, axis=1) == ys))
    return loss, acc


def train(net: MicroCnn, dataset, cfg: TrainConfig) -> tuple[MicroCnn, list[EpochStats]]:
    """Minibatch SGD over ``dataset`` (a list of ``(tensor, label)`` pairs).

    Each epoch visits the samples in a permutation drawn from ``cfg.seed``.
    After each epoch the whole training set is re-scored in eval mode and the
    loss/accuracy recorded. The network is updated in place and returned.
    """
    if len(dataset) == 0:
        raise SpectraError("cannot train on an empty dataset")
    xs = np.stack([np.asarray(x, dtype=np.float64) for x, _ in dataset])
    ys = np.array([int(y) for _, y in dataset])
    rng = np.random.default_rng(cfg.seed)
    trace = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(xs))
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            net.forward(xs[batch], train=True)
            net.step(net.backward(ys[batch]), cfg.lr)
        loss, acc = evaluate(net, xs, ys)
        trace.append(EpochStats(epoch, loss, acc))
    return net, trace


def write_trace(trace, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "loss", "accuracy"])
        for row in trace:
            writer.writerow([row.epoch, repr(row.loss), repr(row.accuracy)])


def blob_fixture(n: int = 64, size: int = 16, seed: int = 7) -> list[tuple[np.ndarray, int]]:
    """Separable toy set: class 0 has a bright blob on the left, class 1 on the right."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size]
    out = []
    for i in range(n):
        label = i % 2
        cx = size * (0.25 if label == 0 else 0.75) + rng.uniform(-1.5, 1.5)
        cy = size * 0.5 + rng.uniform(-3.0, 3.0)
        blob = np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * (size / 8) ** 2))
        img = np.clip(blob + 0.1 * rng.standard_normal((size, size)), 0.0, 1.0)
        out.append((img[None], label))
    return out
