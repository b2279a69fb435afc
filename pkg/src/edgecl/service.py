"""HTTP JSON API for interactive training sessions.

The service is the backend of the side-by-side demo: clients create TL/CL
sessions, stage samples per class (raw feature vectors or grayscale images
run through the deterministic projection extractor), trigger cumulative or
per-class training, predict with confidences, reset, and inspect state.

Requests to one session are strictly serialized through a per-session lock;
distinct sessions run independently. Sessions expire after an idle timeout.
CL sessions created here default to per-class-quota buffer intake, matching
the interactive scenarios.

Note the image path uses a fixed random projection, not a neural extractor:
features are deterministic and cheap, good enough to demonstrate forgetting
vs replay, but nowhere near pretrained-CNN quality.
"""

from __future__ import annotations

import base64
import binascii
import secrets
import threading
import time
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict, Field

from .buffer import BufferConfig
from .data import project_image
from .head import TrainConfig, predict as head_predict
from .trainer import Session, TrainEvent, create_session, reset as reset_session, train_on_batch
from .head import LabeledBatch

DEFAULT_STAGING_LIMIT = 1000


# --- request bodies -----------------------------------------------------------

class TrainConfigBody(BaseModel):
    # defaults come from TrainConfig so there is a single source of truth
    model_config = ConfigDict(extra="forbid")
    learning_rate: float = TrainConfig.learning_rate
    epochs_per_batch: int = TrainConfig.epochs_per_batch
    minibatch_size: int = TrainConfig.minibatch_size
    seed: int = TrainConfig.seed
    replay_schedule: str = TrainConfig.replay_schedule


class BufferConfigBody(BaseModel):
    model_config = ConfigDict(extra="forbid")
    capacity: int | None = None
    policy: str = "random"
    replace_fraction: float = 0.015
    seed: int = 0
    quota: int | None = None


class SessionCreateBody(BaseModel):
    model_config = ConfigDict(extra="forbid")
    mode: str
    dim: int | None = None
    classes: int | None = None
    train_config: TrainConfigBody | None = None
    buffer_config: BufferConfigBody | None = None


class ImageBody(BaseModel):
    model_config = ConfigDict(extra="forbid")
    width: int
    height: int
    pixels_base64: str


class SampleBody(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)
    label: int = Field(alias="class")
    features: list[float] | None = None
    image: ImageBody | None = None


class TrainBody(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)
    scope: str
    label: int | None = Field(default=None, alias="class")


class PredictBody(BaseModel):
    model_config = ConfigDict(extra="forbid")
    features: list[float] | None = None
    image: ImageBody | None = None


# --- session registry ----------------------------------------------------------

@dataclass
class _Entry:
    session: Session
    staged: dict[int, list[np.ndarray]]
    lock: threading.Lock = field(default_factory=threading.Lock)
    created_at: float = field(default_factory=time.monotonic)
    last_touched: float = field(default_factory=time.monotonic)


class SessionRegistry:
    def __init__(self, idle_timeout_s: float):
        self.idle_timeout_s = idle_timeout_s
        self._entries: dict[str, _Entry] = {}
        self._lock = threading.Lock()

    def create(self, session: Session) -> str:
        sid = secrets.token_hex(16)
        with self._lock:
            self._entries[sid] = _Entry(
                session=session, staged={c: [] for c in range(session.classes)}
            )
        return sid

    def get(self, sid: str) -> _Entry:
        now = time.monotonic()
        with self._lock:
            entry = self._entries.get(sid)
            if entry is not None and now - entry.last_touched > self.idle_timeout_s:
                del self._entries[sid]
                entry = None
            if entry is None:
                raise HTTPException(status_code=404, detail="unknown session")
            entry.last_touched = now
            return entry


# --- app ------------------------------------------------------------------------

def create_app(
    *,
    default_dim: int = 1280,
    default_classes: int = 4,
    default_capacity: int = 40,
    default_quota: int = 10,
    max_classes: int = 16,
    idle_timeout_s: float = 3600.0,
    extractor_seed: int = 0,
    staging_limit: int = DEFAULT_STAGING_LIMIT,
    static_dir: str | None = None,
) -> FastAPI:
    app = FastAPI(title="edgecl session service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    registry = SessionRegistry(idle_timeout_s)
    app.state.registry = registry

    @app.exception_handler(RequestValidationError)
    async def _on_invalid(request: Request, exc: RequestValidationError):
        # contract: malformed bodies are client errors, not 422s
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    def _decode_features(entry: _Entry, features, image: ImageBody | None) -> np.ndarray:
        dim = entry.session.dim
        if (features is None) == (image is None):
            raise HTTPException(400, "provide exactly one of 'features' or 'image'")
        if features is not None:
            vec = np.asarray(features, dtype=np.float32)
            if vec.shape != (dim,):
                raise HTTPException(400, f"expected {dim} features, got {vec.shape[0]}")
            if not np.all(np.isfinite(vec)):
                raise HTTPException(400, "features must be finite")
            return vec
        try:
            pixels = base64.b64decode(image.pixels_base64, validate=True)
        except (binascii.Error, ValueError):
            raise HTTPException(400, "pixels_base64 is not valid base64")
        try:
            return project_image(pixels, image.width, image.height, dim, extractor_seed)
        except ValueError as e:
            raise HTTPException(400, str(e))

    def _config_echo(session: Session) -> dict:
        cfg = {
            "mode": session.mode,
            "dim": session.dim,
            "classes": session.classes,
            "hidden": session.hidden,
            "train_config": {
                "learning_rate": session.train_config.learning_rate,
                "epochs_per_batch": session.train_config.epochs_per_batch,
                "minibatch_size": session.train_config.minibatch_size,
                "seed": session.train_config.seed,
                "replay_schedule": session.train_config.replay_schedule,
            },
        }
        if session.mode == "cl":
            bc = session.buffer_config
            cfg["buffer_config"] = {
                "capacity": bc.capacity,
                "policy": bc.policy,
                "replace_fraction": bc.replace_fraction,
                "seed": bc.seed,
                "quota": session.intake_quota,
            }
        return cfg

    def _event_json(event: TrainEvent, session: Session, with_histogram: bool = False) -> dict:
        out = {
            "kind": event.kind,
            "tag": event.tag,
            "samples_seen": event.samples_seen,
            "epochs_run": event.epochs_run,
            "final_loss": event.final_loss,
            "buffer_occupancy": event.buffer_occupancy,
            "duration_ms": event.duration_s * 1000.0,
        }
        if with_histogram and session.mode == "cl":
            out["buffer"] = {
                "occupancy": session.buffer.occupancy,
                "histogram": {str(k): v for k, v in session.buffer.class_histogram().items()},
            }
        return out

    def _staged_counts(entry: _Entry) -> dict:
        return {str(c): len(v) for c, v in entry.staged.items()}

    @app.post("/sessions", status_code=201)
    def create(body: SessionCreateBody):
        mode = body.mode.lower()
        if mode not in ("tl", "cl"):
            raise HTTPException(400, "mode must be 'tl' or 'cl'")
        dim = body.dim if body.dim is not None else default_dim
        classes = body.classes if body.classes is not None else default_classes
        if dim < 1:
            raise HTTPException(400, "dim must be >= 1")
        if not 1 <= classes <= max_classes:
            raise HTTPException(400, f"classes must lie in [1, {max_classes}]")
        if mode == "tl" and body.buffer_config is not None:
            raise HTTPException(400, "TL sessions take no buffer_config")

        tc_body = body.train_config or TrainConfigBody()
        try:
            train_config = TrainConfig(
                learning_rate=tc_body.learning_rate,
                epochs_per_batch=tc_body.epochs_per_batch,
                minibatch_size=tc_body.minibatch_size,
                seed=tc_body.seed,
                replay_schedule=tc_body.replay_schedule,
            )
            buffer_config = None
            quota = None
            if mode == "cl":
                bc_body = body.buffer_config or BufferConfigBody()
                buffer_config = BufferConfig(
                    capacity=bc_body.capacity if bc_body.capacity is not None else default_capacity,
                    policy=bc_body.policy,
                    replace_fraction=bc_body.replace_fraction,
                    seed=bc_body.seed,
                )
                quota = bc_body.quota if bc_body.quota is not None else default_quota
            session = create_session(
                mode, dim, classes, train_config, buffer_config, intake_quota=quota
            )
        except ValueError as e:
            raise HTTPException(400, str(e))
        sid = registry.create(session)
        return {"id": sid, "config": _config_echo(session)}

    @app.post("/sessions/{sid}/samples")
    def add_samples(sid: str, body: SampleBody):
        entry = registry.get(sid)
        with entry.lock:
            session = entry.session
            if not 0 <= body.label < session.classes:
                raise HTTPException(400, f"class must lie in [0, {session.classes})")
            vec = _decode_features(entry, body.features, body.image)
            if len(entry.staged[body.label]) >= staging_limit:
                raise HTTPException(413, f"staging limit of {staging_limit} per class reached")
            entry.staged[body.label].append(vec)
            return {"staged_counts": _staged_counts(entry)}

    @app.post("/sessions/{sid}/train")
    def train(sid: str, body: TrainBody):
        entry = registry.get(sid)
        with entry.lock:
            session = entry.session
            if body.scope == "staged_all":
                classes = [c for c in sorted(entry.staged) if entry.staged[c]]
                tag = "staged-all"
            elif body.scope == "staged_class":
                if body.label is None:
                    raise HTTPException(400, "scope 'staged_class' needs a 'class' field")
                if not 0 <= body.label < session.classes:
                    raise HTTPException(400, f"class must lie in [0, {session.classes})")
                classes = [body.label] if entry.staged[body.label] else []
                tag = f"staged-class-{body.label}"
            else:
                raise HTTPException(400, "scope must be 'staged_all' or 'staged_class'")
            if not classes:
                raise HTTPException(409, "no staged samples for the requested scope")
            feats = np.stack([v for c in classes for v in entry.staged[c]])
            labels = np.array([c for c in classes for _ in entry.staged[c]], dtype=np.int32)
            event = train_on_batch(session, LabeledBatch(feats, labels), tag)
            for c in classes:
                entry.staged[c] = []
            return _event_json(event, session, with_histogram=True)

    @app.post("/sessions/{sid}/predict")
    def predict(sid: str, body: PredictBody):
        entry = registry.get(sid)
        with entry.lock:
            vec = _decode_features(entry, body.features, body.image)
            label, probs = head_predict(entry.session.params, vec)
            return {"label": label, "probs": [float(p) for p in probs]}

    @app.post("/sessions/{sid}/reset")
    def reset(sid: str):
        entry = registry.get(sid)
        with entry.lock:
            reset_session(entry.session)
            entry.staged = {c: [] for c in range(entry.session.classes)}
            return {"ok": True}

    @app.get("/sessions/{sid}/state")
    def state(sid: str):
        entry = registry.get(sid)
        with entry.lock:
            session = entry.session
            out = {
                "mode": session.mode,
                "config": _config_echo(session),
                "history": [_event_json(e, session) for e in session.history],
                "staged_counts": _staged_counts(entry),
            }
            if session.mode == "cl":
                out["buffer"] = {
                    "occupancy": session.buffer.occupancy,
                    "histogram": {str(k): v for k, v in session.buffer.class_histogram().items()},
                }
            return out

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
