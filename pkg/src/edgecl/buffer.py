"""Bounded latent replay store with FIFO and random-replacement eviction.

The buffer keeps feature patterns in insertion order (oldest first). Each
absorb call takes in at most k = ceil(replace_fraction * capacity) patterns,
chosen uniformly from the candidates; free slots are filled first and any
overflow evicts per policy: "fifo" removes the oldest insertions, "random"
removes uniformly chosen occupants. All randomness comes from the buffer's
private seeded stream, so contents are a pure function of (config, seed,
operation sequence).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .head import LabeledBatch
from .mathcore import Rng, rng_choose_k

EVICTION_POLICIES = ("fifo", "random")


@dataclass(frozen=True)
class FeaturePattern:
    """One stored feature vector: (dim,) float32, class label, provenance id."""

    features: np.ndarray
    label: int
    source_id: int = 0


@dataclass(frozen=True)
class BufferConfig:
    capacity: int
    policy: str = "random"
    replace_fraction: float = 0.015
    seed: int = 0

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {self.capacity}")
        if self.policy not in EVICTION_POLICIES:
            raise ValueError(f"policy must be one of {EVICTION_POLICIES}, got {self.policy!r}")
        if not (0.0 < self.replace_fraction <= 1.0):
            raise ValueError(
                f"replace_fraction must lie in (0, 1], got {self.replace_fraction}"
            )


@dataclass
class EvictionReport:
    inserted: int
    evicted_source_ids: list[int] = field(default_factory=list)


class ReplayBuffer:
    """Bounded store of FeaturePatterns for one training session."""

    def __init__(self, config: BufferConfig, dim: int, classes: int):
        if dim < 1 or classes < 1:
            raise ValueError(f"dim and classes must be >= 1, got {(dim, classes)}")
        self.config = config
        self.dim = dim
        self.classes = classes
        self._slots: list[FeaturePattern] = []  # oldest first
        self._rng = Rng(config.seed, "buffer")

    @property
    def occupancy(self) -> int:
        return len(self._slots)

    def intake_per_batch(self) -> int:
        """The k-rule: ceil(replace_fraction * capacity), at least 1.

        The small epsilon guards against float noise pushing an exact
        integer product (e.g. 0.015 * 200 = 3) over the next ceiling.
        """
        k = math.ceil(self.config.replace_fraction * self.config.capacity - 1e-9)
        return max(1, k)

    def _check(self, candidates: list[FeaturePattern]) -> None:
        for pat in candidates:
            feats = np.asarray(pat.features)
            if feats.shape != (self.dim,):
                raise ValueError(
                    f"pattern feature shape {feats.shape} does not match buffer dim {self.dim}"
                )
            if not 0 <= pat.label < self.classes:
                raise ValueError(
                    f"pattern label {pat.label} out of range for {self.classes} classes"
                )

    def _insert(self, items: list[FeaturePattern]) -> EvictionReport:
        report = EvictionReport(inserted=len(items))
        cap = self.config.capacity
        if len(items) >= cap:
            # the call alone overfills the buffer: every stored pattern goes,
            # and the surviving subset of the new items is policy-chosen
            report.evicted_source_ids.extend(p.source_id for p in self._slots)
            if self.config.policy == "fifo":
                keep = set(range(len(items) - cap, len(items)))  # newest
            else:
                keep = set(int(i) for i in rng_choose_k(self._rng, len(items), cap))
            report.evicted_source_ids.extend(
                items[i].source_id for i in range(len(items)) if i not in keep
            )
            self._slots = [items[i] for i in range(len(items)) if i in keep]
            return report
        free = cap - len(self._slots)
        self._slots.extend(items[:free])
        overflow = items[free:]
        if not overflow:
            return report
        m = len(overflow)
        if self.config.policy == "fifo":
            victims = list(range(m))  # oldest first
        else:
            victims = sorted(rng_choose_k(self._rng, len(self._slots), m))
        for pos in reversed(victims):
            report.evicted_source_ids.append(self._slots[pos].source_id)
            del self._slots[pos]
        report.evicted_source_ids.reverse()  # ascending slot order
        self._slots.extend(overflow)
        return report

    def absorb_batch(self, candidates: list[FeaturePattern]) -> EvictionReport:
        """Take in min(len(candidates), k-rule) patterns chosen uniformly."""
        self._check(candidates)
        k = min(len(candidates), self.intake_per_batch())
        chosen_idx = sorted(rng_choose_k(self._rng, len(candidates), k))
        return self._insert([candidates[i] for i in chosen_idx])

    def absorb_per_class_quota(self, candidates: list[FeaturePattern], quota: int) -> EvictionReport:
        """Take in up to ``quota`` patterns per class, chosen uniformly per class."""
        if quota < 1:
            raise ValueError(f"quota must be >= 1, got {quota}")
        self._check(candidates)
        by_class: dict[int, list[int]] = {}
        for i, pat in enumerate(candidates):
            by_class.setdefault(pat.label, []).append(i)
        chosen: list[FeaturePattern] = []
        for cls in sorted(by_class):
            pool = by_class[cls]
            take = min(quota, len(pool))
            sel = sorted(rng_choose_k(self._rng, len(pool), take))
            chosen.extend(candidates[pool[i]] for i in sel)
        return self._insert(chosen)

    def snapshot(self) -> LabeledBatch:
        """Copy of all stored (features, label) pairs in slot order."""
        if not self._slots:
            return LabeledBatch(np.empty((0, self.dim), dtype=np.float32), [])
        feats = np.stack([p.features for p in self._slots]).astype(np.float32)
        labels = np.array([p.label for p in self._slots], dtype=np.int32)
        return LabeledBatch(feats, labels)

    def patterns(self) -> list[FeaturePattern]:
        return list(self._slots)

    def class_histogram(self) -> dict[int, int]:
        """Pattern count per class, zeros included; values sum to occupancy."""
        hist = {c: 0 for c in range(self.classes)}
        for pat in self._slots:
            hist[pat.label] += 1
        return hist
