"""Two-layer softmax classifier head trained by minibatch SGD.

Architecture: D -> hidden (ReLU, 128 by default) -> C logits -> softmax.
Parameters are stored as float32; forward/backward arithmetic runs in
float64 and is cast back down, which keeps the analytic gradients tight
against a central-difference oracle without changing the stored format.
Gradients are exact: delta2 = p - onehot(y), chain rule through the ReLU
mask for the first layer.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, NumericError
from .mathcore import PROB_FLOOR, Rng

HEAD_MAGIC = b"HDP1"

REPLAY_SCHEDULES = ("sequential", "mixed")


@dataclass
class HeadParams:
    """Head weights: w1 (H,D), b1 (H,), w2 (C,H), b2 (C,), all float32."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        self.w1 = np.asarray(self.w1, dtype=np.float32)
        self.b1 = np.asarray(self.b1, dtype=np.float32)
        self.w2 = np.asarray(self.w2, dtype=np.float32)
        self.b2 = np.asarray(self.b2, dtype=np.float32)
        h, d = self.w1.shape
        c, h2 = self.w2.shape
        if h2 != h or self.b1.shape != (h,) or self.b2.shape != (c,):
            raise ValueError(
                f"inconsistent head shapes: w1 {self.w1.shape}, b1 {self.b1.shape}, "
                f"w2 {self.w2.shape}, b2 {self.b2.shape}"
            )

    @property
    def dim(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    @property
    def classes(self) -> int:
        return self.w2.shape[0]

    def copy(self) -> "HeadParams":
        return HeadParams(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy())

    def is_finite(self) -> bool:
        return all(
            bool(np.all(np.isfinite(a))) for a in (self.w1, self.b1, self.w2, self.b2)
        )


@dataclass(frozen=True)
class TrainConfig:
    """SGD hyperparameters for one training pass.

    The default learning rate is deliberately hot: per-batch training must
    optimize hard enough that a replay-free session visibly forgets old
    classes on desk-scale streams (feature norms around 1..20). Tune it down
    for gentler data.

    ``replay_schedule`` selects how replay interacts with new data:
    "sequential" trains on the new batch first and then on the buffer,
    "mixed" trains once on their shuffled concatenation.
    """

    learning_rate: float = 0.5
    epochs_per_batch: int = 20
    minibatch_size: int = 16
    seed: int = 0
    replay_schedule: str = "sequential"

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        # 0 epochs is allowed as an explicit no-op; negative counts are not.
        if self.epochs_per_batch < 0:
            raise ValueError(f"epochs_per_batch must be >= 0, got {self.epochs_per_batch}")
        if self.minibatch_size < 1:
            raise ValueError(f"minibatch_size must be >= 1, got {self.minibatch_size}")
        if self.replay_schedule not in REPLAY_SCHEDULES:
            raise ValueError(
                f"replay_schedule must be one of {REPLAY_SCHEDULES}, got {self.replay_schedule!r}"
            )


class LabeledBatch:
    """Feature rows with integer class labels.

    ``features`` is (n, dim) float32, ``labels`` is (n,) int32. May be empty
    (training entry points reject empty batches themselves).
    """

    def __init__(self, features, labels):
        self.features = np.asarray(features, dtype=np.float32)
        self.labels = np.asarray(labels, dtype=np.int32)
        if self.features.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError(
                f"labels shape {self.labels.shape} does not match "
                f"{self.features.shape[0]} feature rows"
            )

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return self.features.shape[0]

    def take(self, indices) -> "LabeledBatch":
        return LabeledBatch(self.features[indices], self.labels[indices])

    @staticmethod
    def concat(batches: list["LabeledBatch"]) -> "LabeledBatch":
        if not batches:
            raise ValueError("nothing to concatenate")
        return LabeledBatch(
            np.concatenate([b.features for b in batches], axis=0),
            np.concatenate([b.labels for b in batches], axis=0),
        )


def init_head(dim: int, hidden: int, classes: int, seed: int) -> HeadParams:
    """He-style uniform init: w1 ~ U(+-sqrt(6/D)), w2 ~ U(+-sqrt(6/H)), zero biases."""
    if dim < 1 or hidden < 1 or classes < 1:
        raise ValueError(f"dim, hidden, classes must all be >= 1, got {(dim, hidden, classes)}")
    rng = Rng(seed, "head-init")
    lim1 = math.sqrt(6.0 / dim)
    lim2 = math.sqrt(6.0 / hidden)
    return HeadParams(
        w1=rng.uniform(-lim1, lim1, (hidden, dim)),
        b1=np.zeros(hidden, dtype=np.float32),
        w2=rng.uniform(-lim2, lim2, (classes, hidden)),
        b2=np.zeros(classes, dtype=np.float32),
    )


def _forward64(params: HeadParams, x2d: np.ndarray):
    """float64 forward pass; returns (pre-activation, hidden, probabilities).

    Overflow on pathological inputs surfaces as NaN probabilities and is
    caught by the gradient finiteness check, not as a warning.
    """
    w1 = params.w1.astype(np.float64)
    w2 = params.w2.astype(np.float64)
    with np.errstate(over="ignore", invalid="ignore"):
        pre1 = x2d @ w1.T + params.b1.astype(np.float64)
        a1 = np.maximum(pre1, 0.0)
        logits = a1 @ w2.T + params.b2.astype(np.float64)
        shifted = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        probs = e / e.sum(axis=1, keepdims=True)
    return pre1, a1, probs


def forward_batch(params: HeadParams, features) -> np.ndarray:
    """Probabilities (n, C) for a feature matrix; rows sum to 1 within 1e-6."""
    x = np.asarray(features, dtype=np.float32)
    if x.ndim != 2 or x.shape[1] != params.dim:
        raise ValueError(f"expected (n, {params.dim}) features, got shape {x.shape}")
    _, _, probs = _forward64(params, x.astype(np.float64))
    if not np.all(np.isfinite(probs)):
        raise NumericError("forward pass overflowed; rescale inputs")
    return probs.astype(np.float32)


def forward(params: HeadParams, x) -> np.ndarray:
    """Probability vector over C classes for a single feature vector."""
    v = np.asarray(x, dtype=np.float32)
    if v.shape != (params.dim,):
        raise ValueError(f"expected a {params.dim}-vector, got shape {v.shape}")
    return forward_batch(params, v[None, :])[0]


def predict(params: HeadParams, x):
    """(label, probs) for one feature vector; ties break to the lowest class."""
    probs = forward(params, x)
    return int(np.argmax(probs)), probs


def loss_and_grads(params: HeadParams, batch: LabeledBatch):
    """Mean cross-entropy over the batch and exact analytic gradients.

    Returns (loss, grads) where grads mirrors the HeadParams shapes.
    """
    n = len(batch)
    if n == 0:
        raise ValueError("cannot train on an empty batch")
    if batch.dim != params.dim:
        raise ValueError(f"batch dim {batch.dim} does not match head dim {params.dim}")
    y = batch.labels
    if y.min() < 0 or y.max() >= params.classes:
        raise ValueError(f"labels must lie in [0, {params.classes})")

    x = batch.features.astype(np.float64)
    pre1, a1, probs = _forward64(params, x)
    rows = np.arange(n)
    picked = np.maximum(probs[rows, y], PROB_FLOOR)
    loss = float(-np.log(picked).mean())

    delta2 = probs
    delta2[rows, y] -= 1.0
    delta2 /= n
    gw2 = delta2.T @ a1
    gb2 = delta2.sum(axis=0)
    delta1 = (delta2 @ params.w2.astype(np.float64)) * (pre1 > 0)
    gw1 = delta1.T @ x
    gb1 = delta1.sum(axis=0)

    with np.errstate(over="ignore"):
        grads = HeadParams(
            gw1.astype(np.float32),
            gb1.astype(np.float32),
            gw2.astype(np.float32),
            gb2.astype(np.float32),
        )
    if not grads.is_finite():
        raise NumericError("gradient overflow; lower the learning rate or rescale features")
    return loss, grads


def sgd_step(params: HeadParams, grads: HeadParams, learning_rate: float) -> HeadParams:
    """One plain SGD update: theta <- theta - lr * grad."""
    if learning_rate <= 0:
        raise ValueError(f"learning_rate must be positive, got {learning_rate}")
    if (grads.dim, grads.hidden, grads.classes) != (params.dim, params.hidden, params.classes):
        raise ValueError("gradient shapes do not match parameter shapes")
    if not grads.is_finite():
        raise NumericError("non-finite gradients; training aborted")
    lr = np.float32(learning_rate)
    with np.errstate(over="ignore"):
        out = HeadParams(
            params.w1 - lr * grads.w1,
            params.b1 - lr * grads.b1,
            params.w2 - lr * grads.w2,
            params.b2 - lr * grads.b2,
        )
    if not out.is_finite():
        raise NumericError("parameter update overflowed to non-finite values")
    return out


def train_epochs(params: HeadParams, data: LabeledBatch, config: TrainConfig, rng: Rng):
    """Shuffled minibatch SGD for ``config.epochs_per_batch`` epochs.

    Each epoch reshuffles ``data`` with ``rng`` and walks minibatches of
    ``config.minibatch_size`` (last partial batch kept). Returns the final
    params and the per-epoch mean sample loss; the input params object is
    not modified.
    """
    n = len(data)
    if n == 0:
        raise ValueError("cannot train on an empty batch")
    curve: list[float] = []
    current = params
    for _ in range(config.epochs_per_batch):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.minibatch_size):
            idx = order[start : start + config.minibatch_size]
            loss, grads = loss_and_grads(current, data.take(idx))
            current = sgd_step(current, grads, config.learning_rate)
            total += loss * len(idx)
        curve.append(total / n)
    return current, curve


# --- gradient-check helpers -------------------------------------------------

def flatten_params(params: HeadParams) -> np.ndarray:
    """All parameters as one float64 vector (w1, b1, w2, b2 order)."""
    return np.concatenate(
        [a.astype(np.float64).ravel() for a in (params.w1, params.b1, params.w2, params.b2)]
    )


def unflatten_params(vec, dim: int, hidden: int, classes: int) -> HeadParams:
    """Inverse of flatten_params; casts back to float32 storage."""
    v = np.asarray(vec, dtype=np.float64)
    sizes = [hidden * dim, hidden, classes * hidden, classes]
    if v.size != sum(sizes):
        raise ValueError(f"expected {sum(sizes)} entries, got {v.size}")
    ofs = np.cumsum([0] + sizes)
    return HeadParams(
        v[ofs[0] : ofs[1]].reshape(hidden, dim).astype(np.float32),
        v[ofs[1] : ofs[2]].astype(np.float32),
        v[ofs[2] : ofs[3]].reshape(classes, hidden).astype(np.float32),
        v[ofs[3] : ofs[4]].astype(np.float32),
    )


# --- snapshot format --------------------------------------------------------
#
# "HDP1" | u32 D | u32 H | u32 C | w1 | b1 | w2 | b2
# with the arrays as raw little-endian float32 in row-major order.

def head_to_bytes(params: HeadParams) -> bytes:
    if not params.is_finite():
        raise ValueError("refusing to save non-finite head parameters")
    header = HEAD_MAGIC + struct.pack("<III", params.dim, params.hidden, params.classes)
    payload = b"".join(
        np.ascontiguousarray(a, dtype="<f4").tobytes()
        for a in (params.w1, params.b1, params.w2, params.b2)
    )
    return header + payload


def head_from_bytes(blob: bytes, offset: int = 0):
    """Parse one HDP1 block; returns (HeadParams, bytes consumed past offset)."""
    if blob[offset : offset + 4] != HEAD_MAGIC:
        raise FormatError("bad head magic, expected HDP1", offset=offset)
    if len(blob) < offset + 16:
        raise FormatError("truncated head header", offset=len(blob))
    d, h, c = struct.unpack_from("<III", blob, offset + 4)
    if d < 1 or h < 1 or c < 1:
        raise FormatError(f"invalid head dimensions {(d, h, c)}", offset=offset + 4)
    counts = [h * d, h, c * h, c]
    need = 4 * sum(counts)
    if len(blob) < offset + 16 + need:
        raise FormatError(
            f"head payload truncated, need {need} bytes after header", offset=len(blob)
        )
    arrays = []
    pos = offset + 16
    for cnt in counts:
        arrays.append(np.frombuffer(blob, dtype="<f4", count=cnt, offset=pos).copy())
        pos += 4 * cnt
    params = HeadParams(
        arrays[0].reshape(h, d), arrays[1], arrays[2].reshape(c, h), arrays[3]
    )
    if not params.is_finite():
        raise FormatError("head payload contains non-finite values", offset=offset + 16)
    return params, pos - offset


def save_head(params: HeadParams, path) -> None:
    with open(path, "wb") as f:
        f.write(head_to_bytes(params))


def load_head(path) -> HeadParams:
    with open(path, "rb") as f:
        blob = f.read()
    params, used = head_from_bytes(blob)
    if used != len(blob):
        raise FormatError(f"{len(blob) - used} trailing bytes after head payload", offset=used)
    return params
