"""Session orchestration for incremental training, with and without replay.

A TL session trains the head on each incoming batch and nothing else, so it
forgets earlier classes. A CL session additionally maintains a replay
buffer: after training on new data it replays the buffered patterns
(sequential schedule) or trains once on the shuffled union (mixed schedule),
and then takes new patterns into the buffer, so a batch is never replayed
to itself. Buffer intake uses the k-rule by default, or a per-class quota
when the session is created with ``intake_quota``.
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass, field

import numpy as np

from .buffer import BufferConfig, FeaturePattern, ReplayBuffer
from .data import Dataset, fpb_from_bytes, fpb_to_bytes
from .errors import FormatError
from .head import (
    HeadParams,
    LabeledBatch,
    TrainConfig,
    forward_batch,
    head_from_bytes,
    head_to_bytes,
    init_head,
    train_epochs,
)
from .mathcore import Rng

SESSION_MAGIC = b"SES1"
DEFAULT_HIDDEN = 128

MODES = ("tl", "cl")


@dataclass
class TrainEvent:
    """One history entry; ``kind`` is "train" or "reset"."""

    tag: str
    samples_seen: int
    epochs_run: int
    final_loss: float | None
    buffer_occupancy: int | None  # None for TL sessions
    duration_s: float
    kind: str = "train"


@dataclass
class Session:
    mode: str
    dim: int
    classes: int
    hidden: int
    params: HeadParams
    train_config: TrainConfig
    buffer: ReplayBuffer | None
    buffer_config: BufferConfig | None
    intake_quota: int | None
    rng: Rng
    history: list[TrainEvent] = field(default_factory=list)
    batches_trained: int = 0


def create_session(
    mode: str,
    dim: int,
    classes: int,
    train_config: TrainConfig,
    buffer_config: BufferConfig | None = None,
    *,
    hidden: int = DEFAULT_HIDDEN,
    intake_quota: int | None = None,
) -> Session:
    """Fresh session with a seeded head and, for CL, an empty replay buffer."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if mode == "tl" and buffer_config is not None:
        raise ValueError("TL sessions take no buffer_config; drop it or use mode='cl'")
    if mode == "cl" and buffer_config is None:
        raise ValueError("CL sessions require a buffer_config")
    if intake_quota is not None and intake_quota < 1:
        raise ValueError(f"intake_quota must be >= 1, got {intake_quota}")
    params = init_head(dim, hidden, classes, train_config.seed)
    buffer = ReplayBuffer(buffer_config, dim, classes) if mode == "cl" else None
    return Session(
        mode=mode,
        dim=dim,
        classes=classes,
        hidden=hidden,
        params=params,
        train_config=train_config,
        buffer=buffer,
        buffer_config=buffer_config,
        intake_quota=intake_quota,
        rng=Rng(train_config.seed, "session"),
    )


def _as_patterns(batch: LabeledBatch, batch_index: int) -> list[FeaturePattern]:
    # source_id encodes (batch index, intra-batch position)
    return [
        FeaturePattern(batch.features[i].copy(), int(batch.labels[i]), (batch_index << 32) | i)
        for i in range(len(batch))
    ]


def train_on_batch(session: Session, batch: LabeledBatch, tag: str) -> TrainEvent:
    """Train on one batch: new data, then replay (CL), then buffer intake.

    A numeric failure aborts the call and leaves the session untouched: all
    training runs on local state and the session is only mutated once every
    phase has succeeded.
    """
    if len(batch) == 0:
        raise ValueError("cannot train on an empty batch")
    if batch.dim != session.dim:
        raise ValueError(f"batch dim {batch.dim} does not match session dim {session.dim}")
    if batch.labels.min() < 0 or batch.labels.max() >= session.classes:
        raise ValueError(f"labels must lie in [0, {session.classes})")

    cfg = session.train_config
    started = time.perf_counter()
    epochs_run = 0
    curve: list[float] = []

    replay = None
    if session.mode == "cl" and session.buffer.occupancy > 0:
        replay = session.buffer.snapshot()

    if replay is not None and cfg.replay_schedule == "mixed":
        # one pass over new + buffered data; the per-epoch shuffle mixes them
        params, curve = train_epochs(
            session.params, LabeledBatch.concat([batch, replay]), cfg, session.rng
        )
        epochs_run += cfg.epochs_per_batch
    else:
        params, curve = train_epochs(session.params, batch, cfg, session.rng)
        epochs_run += cfg.epochs_per_batch
        if replay is not None:
            params, replay_curve = train_epochs(params, replay, cfg, session.rng)
            epochs_run += cfg.epochs_per_batch
            curve = curve + replay_curve

    # all phases succeeded: commit
    session.params = params
    if session.mode == "cl":
        candidates = _as_patterns(batch, session.batches_trained)
        if session.intake_quota is not None:
            session.buffer.absorb_per_class_quota(candidates, session.intake_quota)
        else:
            session.buffer.absorb_batch(candidates)
    session.batches_trained += 1

    event = TrainEvent(
        tag=tag,
        samples_seen=len(batch),
        epochs_run=epochs_run,
        final_loss=curve[-1] if curve else None,
        buffer_occupancy=session.buffer.occupancy if session.buffer else None,
        duration_s=time.perf_counter() - started,
    )
    session.history.append(event)
    return event


def train_cumulative(session: Session, batches: list[LabeledBatch], tag: str = "cumulative") -> TrainEvent:
    """Concatenate all batches (batch order, then intra-batch order) and train once."""
    if not batches or sum(len(b) for b in batches) == 0:
        raise ValueError("cannot train on an empty union of batches")
    return train_on_batch(session, LabeledBatch.concat(batches), tag)


@dataclass
class EvalResult:
    accuracy: float
    per_class: dict[int, float]
    confusion: np.ndarray  # (C, C) counts, row = true class


def evaluate(session: Session, testset: LabeledBatch) -> EvalResult:
    """Accuracy, per-class accuracy, and confusion counts on a test set.

    Classes with no test samples report per-class accuracy 0.0.
    """
    if len(testset) == 0:
        raise ValueError("test set is empty")
    if testset.labels.min() < 0 or testset.labels.max() >= session.classes:
        raise ValueError(f"test labels must lie in [0, {session.classes})")
    probs = forward_batch(session.params, testset.features)
    preds = np.argmax(probs, axis=1)  # ties resolve to the lowest class
    c_ = session.classes
    confusion = np.zeros((c_, c_), dtype=np.int64)
    np.add.at(confusion, (testset.labels, preds), 1)
    correct = np.trace(confusion)
    row_totals = confusion.sum(axis=1)
    per_class = {
        cls: (float(confusion[cls, cls] / row_totals[cls]) if row_totals[cls] else 0.0)
        for cls in range(c_)
    }
    return EvalResult(float(correct / len(testset)), per_class, confusion)


def reset(session: Session) -> Session:
    """Re-initialize the head from a fresh derived seed and empty the buffer."""
    new_seed = session.rng.fork_seed()
    session.params = init_head(session.dim, session.hidden, session.classes, new_seed)
    if session.mode == "cl":
        session.buffer = ReplayBuffer(session.buffer_config, session.dim, session.classes)
    session.batches_trained = 0
    session.history.append(
        TrainEvent(
            tag="reset",
            samples_seen=0,
            epochs_run=0,
            final_loss=None,
            buffer_occupancy=0 if session.mode == "cl" else None,
            duration_s=0.0,
            kind="reset",
        )
    )
    return session


# --- snapshot format ----------------------------------------------------------
#
# "SES1" | u8 version=1 | u8 mode (0=tl, 1=cl) | HDP1 head block
#   | FPB1 buffer block (cl only; instance field carries the low 16 source bits)
#   | train config: f64 lr, u32 epochs, u32 minibatch, i64 seed, u8 schedule
#   | cl only: u32 capacity, u8 policy (0=fifo, 1=random), f64 fraction,
#     i64 seed, i32 quota (-1 = k-rule)
#
# The snapshot restores parameters, buffer contents, and configuration;
# random streams and history restart fresh on load.

def session_to_bytes(session: Session) -> bytes:
    cfg = session.train_config
    out = [SESSION_MAGIC, struct.pack("<BB", 1, 0 if session.mode == "tl" else 1)]
    out.append(head_to_bytes(session.params))
    if session.mode == "cl":
        patterns = session.buffer.patterns()
        ds = Dataset(
            np.stack([p.features for p in patterns]).astype(np.float32)
            if patterns
            else np.empty((0, session.dim), dtype=np.float32),
            [p.label for p in patterns],
            [p.source_id & 0xFFFF for p in patterns],
        )
        out.append(fpb_to_bytes(ds))
    out.append(
        struct.pack(
            "<dIIqB",
            cfg.learning_rate,
            cfg.epochs_per_batch,
            cfg.minibatch_size,
            cfg.seed,
            0 if cfg.replay_schedule == "sequential" else 1,
        )
    )
    if session.mode == "cl":
        bc = session.buffer_config
        out.append(
            struct.pack(
                "<IBdqi",
                bc.capacity,
                0 if bc.policy == "fifo" else 1,
                bc.replace_fraction,
                bc.seed,
                -1 if session.intake_quota is None else session.intake_quota,
            )
        )
    return b"".join(out)


def session_from_bytes(blob: bytes) -> Session:
    if blob[:4] != SESSION_MAGIC:
        raise FormatError("bad session magic, expected SES1", offset=0)
    if len(blob) < 6:
        raise FormatError("truncated session header", offset=len(blob))
    version, mode_byte = struct.unpack_from("<BB", blob, 4)
    if version != 1:
        raise FormatError(f"unsupported session version {version}", offset=4)
    if mode_byte not in (0, 1):
        raise FormatError(f"invalid mode byte {mode_byte}", offset=5)
    mode = "tl" if mode_byte == 0 else "cl"
    pos = 6
    params, used = head_from_bytes(blob, pos)
    pos += used

    buffer_ds = None
    if mode == "cl":
        buffer_ds, used = fpb_from_bytes(blob, pos, name="session buffer block")
        if buffer_ds.dim != params.dim:
            raise FormatError(
                f"buffer dim {buffer_ds.dim} does not match head dim {params.dim}", offset=pos
            )
        pos += used

    tc_size = struct.calcsize("<dIIqB")
    if len(blob) < pos + tc_size:
        raise FormatError("truncated train config", offset=len(blob))
    lr, epochs, minibatch, seed, schedule = struct.unpack_from("<dIIqB", blob, pos)
    pos += tc_size
    if schedule not in (0, 1):
        raise FormatError(f"invalid replay schedule byte {schedule}", offset=pos - 1)
    train_config = TrainConfig(
        learning_rate=lr,
        epochs_per_batch=epochs,
        minibatch_size=minibatch,
        seed=seed,
        replay_schedule="sequential" if schedule == 0 else "mixed",
    )

    buffer_config = None
    quota = None
    if mode == "cl":
        bc_size = struct.calcsize("<IBdqi")
        if len(blob) < pos + bc_size:
            raise FormatError("truncated buffer config", offset=len(blob))
        capacity, policy, fraction, bseed, quota_raw = struct.unpack_from("<IBdqi", blob, pos)
        pos += bc_size
        if policy not in (0, 1):
            raise FormatError(f"invalid policy byte {policy}", offset=pos)
        buffer_config = BufferConfig(
            capacity=capacity,
            policy="fifo" if policy == 0 else "random",
            replace_fraction=fraction,
            seed=bseed,
        )
        quota = None if quota_raw < 0 else quota_raw
    if pos != len(blob):
        raise FormatError(f"{len(blob) - pos} trailing bytes after session payload", offset=pos)

    session = Session(
        mode=mode,
        dim=params.dim,
        classes=params.classes,
        hidden=params.hidden,
        params=params,
        train_config=train_config,
        buffer=ReplayBuffer(buffer_config, params.dim, params.classes) if mode == "cl" else None,
        buffer_config=buffer_config,
        intake_quota=quota,
        rng=Rng(train_config.seed, "session"),
    )
    if buffer_ds is not None and len(buffer_ds):
        if len(buffer_ds) > buffer_config.capacity:
            raise FormatError(
                f"buffer block holds {len(buffer_ds)} patterns over capacity {buffer_config.capacity}"
            )
        session.buffer._slots = [
            FeaturePattern(
                buffer_ds.features[i].copy(),
                int(buffer_ds.labels[i]),
                int(buffer_ds.instance_ids[i]),
            )
            for i in range(len(buffer_ds))
        ]
    return session


def save_session(session: Session, path) -> None:
    with open(path, "wb") as f:
        f.write(session_to_bytes(session))


def load_session(path) -> Session:
    with open(path, "rb") as f:
        return session_from_bytes(f.read())
