"""Deterministic numeric kernels shared by every other module.

Vectors and matrices are plain float32 ndarrays ("real vectors" throughout
the package); accumulations run in float64 where that is cheap and results
are cast back down. Every kernel is pure: identical inputs give bitwise
identical outputs.

Randomness flows exclusively through :class:`Rng`, a thin wrapper around
numpy's Philox counter-based generator. The 128-bit Philox key is derived by
hashing ``(seed, label)``, so the same seed always reproduces the same draw
sequence regardless of platform, and independently labelled sub-streams can
be handed to different modules without their call order perturbing each
other's draws. Platform / global RNGs are never used.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .errors import NumericError

# Loss clamp: keeps cross-entropy finite when a probability underflows to 0.
PROB_FLOOR = 1e-12


class Rng:
    """Seeded Philox stream with label-derived sub-streams.

    Instances are single-owner: hand a ``substream()`` to concurrent tasks
    instead of sharing one stream.
    """

    def __init__(self, seed: int, label: str = ""):
        self.seed = int(seed)
        self.label = label
        digest = hashlib.blake2b(
            f"{self.seed}:{label}".encode(), digest_size=16
        ).digest()
        self._gen = np.random.Generator(
            np.random.Philox(key=int.from_bytes(digest, "little"))
        )

    def substream(self, label: str) -> "Rng":
        """Derive an independent stream; does not consume from this one."""
        return Rng(self.seed, f"{self.label}/{label}")

    def integers(self, high: int, size=None):
        """Uniform draw(s) from [0, high); scalar int when size is None."""
        if size is None:
            return int(self._gen.integers(high))
        return self._gen.integers(high, size=size)

    def uniform(self, low: float, high: float, size=None) -> np.ndarray:
        return self._gen.uniform(low, high, size=size).astype(np.float32)

    def normal(self, scale: float, size=None) -> np.ndarray:
        return (self._gen.normal(0.0, 1.0, size=size) * scale).astype(np.float32)

    def fork_seed(self) -> int:
        """Consume one draw and return it as a fresh 63-bit seed."""
        return int(self._gen.integers(2**63))

    def permutation(self, n: int) -> np.ndarray:
        return rng_choose_k(self, n, n)


def softmax(logits) -> np.ndarray:
    """Probability vector over the last axis, max-subtracted for stability.

    Output sums to 1 within 1e-6 and preserves the argmax of the input; safe
    for entries of magnitude up to ~1e4 (extreme spreads underflow small
    entries to exactly 0).
    """
    z = np.asarray(logits, dtype=np.float32)
    if z.ndim == 0 or z.shape[-1] == 0:
        raise ValueError("softmax of an empty vector")
    shifted = z.astype(np.float64) - np.max(z.astype(np.float64), axis=-1, keepdims=True)
    e = np.exp(shifted)
    p = e / np.sum(e, axis=-1, keepdims=True)
    return p.astype(np.float32)


def relu(v) -> np.ndarray:
    """Elementwise max(0, x)."""
    return np.maximum(np.asarray(v, dtype=np.float32), np.float32(0.0))


def cross_entropy(probs, label: int) -> float:
    """-log(probs[label]), with the probability floored at PROB_FLOOR."""
    p = np.asarray(probs, dtype=np.float32)
    if label < 0 or label >= p.shape[-1]:
        raise IndexError(f"label {label} out of range for {p.shape[-1]} classes")
    return float(-np.log(max(float(p[label]), PROB_FLOOR)))


def rng_choose_k(rng: Rng, n: int, k: int) -> np.ndarray:
    """k distinct indices drawn uniformly from range(n), in random order.

    Partial Fisher-Yates driven by ``rng``: uniform over k-subsets (and over
    k-permutations), deterministic given the stream state.
    """
    if n < 0 or k < 0 or k > n:
        raise ValueError(f"need 0 <= k <= n, got k={k}, n={n}")
    idx = np.arange(n, dtype=np.int64)
    for i in range(k):
        j = i + rng.integers(n - i)
        idx[i], idx[j] = idx[j], idx[i]
    return idx[:k].copy()


def finite_diff_grad(f, x, eps: float = 1e-3) -> np.ndarray:
    """Central-difference gradient estimate of a scalar function.

    Independent oracle for backpropagation tests. Probe points are built in
    float64 so the estimate is not limited by float32 spacing; ``f`` decides
    what precision it evaluates in.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    base = np.asarray(x, dtype=np.float64).ravel()
    grad = np.empty_like(base)
    for i in range(base.size):
        xp = base.copy()
        xm = base.copy()
        xp[i] += eps
        xm[i] -= eps
        fp = float(f(xp))
        fm = float(f(xm))
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericError(f"non-finite function value at probe coordinate {i}")
        grad[i] = (fp - fm) / (2.0 * eps)
    return grad
