"""Streaming benchmark: train batch-by-batch, evaluate as you go, export.

Reproduces the evaluation protocol behind accuracy-over-time curves and
"last accuracy" tables: for every seed a fresh session walks the manifest's
batches, evaluating on the full test set at every ``eval_every``-th batch.
Grid runs sweep one axis (buffer capacity, eviction policy, or replay
schedule) and aggregate final accuracies across seeds.

Exports are byte-reproducible: re-running the same configuration writes an
identical CSV. Wall-clock timings are therefore left blank in CSV output
unless explicitly requested; the structured (JSON) export always carries
them.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Union

import numpy as np

from .buffer import BufferConfig
from .data import Dataset, StreamManifest, load_fpb, load_manifest, validate_manifest
from .errors import NumericError
from .head import LabeledBatch, TrainConfig
from .trainer import DEFAULT_HIDDEN, create_session, evaluate, train_on_batch

GRID_AXES = ("buffer_capacity", "policy", "schedule")


@dataclass(frozen=True)
class RunConfig:
    manifest: Union[str, Path, StreamManifest]
    mode: str
    train_config: TrainConfig = TrainConfig()
    buffer_config: BufferConfig | None = None
    seeds: tuple[int, ...] = (0,)
    eval_every: int = 1
    intake_quota: int | None = None
    hidden: int = DEFAULT_HIDDEN

    def __post_init__(self):
        if len(self.seeds) < 1:
            raise ValueError("need at least one seed")
        if self.eval_every < 1:
            raise ValueError(f"eval_every must be >= 1, got {self.eval_every}")


@dataclass
class EvalRecord:
    seed: int
    batch_index: int
    tag: str
    accuracy: float
    per_class: np.ndarray  # (C,) float64
    buffer_occupancy: int
    buffer_histogram: dict[int, int] | None
    classes_seen: int
    wall_s: float
    error: str | None = None


def _load_inputs(config: RunConfig, datasets: dict[str, Dataset] | None):
    """Resolve the manifest and every referenced dataset up front."""
    if isinstance(config.manifest, StreamManifest):
        manifest = config.manifest
        validate_manifest(manifest, datasets)
    else:
        manifest = load_manifest(config.manifest, check=True)

    cache: dict[str, Dataset] = {}

    def resolve(name: str) -> Dataset:
        if name not in cache:
            if datasets is not None and name in datasets:
                cache[name] = datasets[name]
            else:
                cache[name] = load_fpb(manifest.resolve(name))
        return cache[name]

    test_ds = resolve(manifest.test_file)
    if isinstance(manifest.test_indices, str):
        testset = LabeledBatch(test_ds.features, test_ds.labels)
    else:
        testset = LabeledBatch(
            test_ds.features[manifest.test_indices], test_ds.labels[manifest.test_indices]
        )
    if len(testset) == 0:
        raise ValueError("manifest test set is empty")

    train_batches = [
        (spec.tag, LabeledBatch(resolve(spec.file).features[spec.indices],
                                resolve(spec.file).labels[spec.indices]))
        for spec in manifest.batches
    ]
    return manifest, testset, train_batches


def run_stream(config: RunConfig, datasets: dict[str, Dataset] | None = None) -> dict[int, list[EvalRecord]]:
    """Per-seed evaluation records over the manifest's batch stream.

    ``datasets`` optionally supplies in-memory data keyed by the file names
    the manifest references, bypassing disk.
    """
    manifest, testset, train_batches = _load_inputs(config, datasets)

    results: dict[int, list[EvalRecord]] = {}
    for seed in config.seeds:
        tc = replace(config.train_config, seed=seed)
        bc = replace(config.buffer_config, seed=seed) if config.buffer_config else None
        session = create_session(
            config.mode,
            manifest.dim,
            manifest.num_classes,
            tc,
            bc,
            hidden=config.hidden,
            intake_quota=config.intake_quota,
        )
        records: list[EvalRecord] = []
        seen: set[int] = set()
        for bi, (tag, batch) in enumerate(train_batches):
            t0 = time.perf_counter()
            try:
                train_on_batch(session, batch, tag)
            except NumericError as e:
                records.append(
                    EvalRecord(
                        seed=seed,
                        batch_index=bi,
                        tag=tag,
                        accuracy=float("nan"),
                        per_class=np.full(manifest.num_classes, np.nan),
                        buffer_occupancy=session.buffer.occupancy if session.buffer else 0,
                        buffer_histogram=session.buffer.class_histogram() if session.buffer else None,
                        classes_seen=len(seen),
                        wall_s=time.perf_counter() - t0,
                        error=str(e),
                    )
                )
                break
            seen.update(int(c) for c in np.unique(batch.labels))
            if bi % config.eval_every == 0:
                result = evaluate(session, testset)
                per_class = np.array(
                    [result.per_class[c] for c in range(manifest.num_classes)], dtype=np.float64
                )
                records.append(
                    EvalRecord(
                        seed=seed,
                        batch_index=bi,
                        tag=tag,
                        accuracy=result.accuracy,
                        per_class=per_class,
                        buffer_occupancy=session.buffer.occupancy if session.buffer else 0,
                        buffer_histogram=session.buffer.class_histogram() if session.buffer else None,
                        classes_seen=len(seen),
                        wall_s=time.perf_counter() - t0,
                    )
                )
        results[seed] = records
    return results


# --- configuration sweeps ----------------------------------------------------

@dataclass
class GridCell:
    value: object
    seed: int
    final_accuracy: float
    mean_accuracy: float
    error: str | None = None


@dataclass
class GridResult:
    axis: str
    cells: list[GridCell] = field(default_factory=list)

    def aggregate(self) -> list[dict]:
        """Per-value mean and sample stddev of final accuracy across seeds."""
        out = []
        seen_values = []
        for cell in self.cells:
            if cell.value not in seen_values:
                seen_values.append(cell.value)
        for value in seen_values:
            finals = [c.final_accuracy for c in self.cells if c.value == value and c.error is None]
            overtime = [c.mean_accuracy for c in self.cells if c.value == value and c.error is None]
            out.append(
                {
                    "value": value,
                    "n": len(finals),
                    "final_mean": float(np.mean(finals)) if finals else float("nan"),
                    "final_std": float(np.std(finals, ddof=1)) if len(finals) > 1 else 0.0,
                    "overtime_mean": float(np.mean(overtime)) if overtime else float("nan"),
                }
            )
        return out


def _apply_axis(config: RunConfig, axis: str, value) -> RunConfig:
    if axis == "buffer_capacity":
        if config.buffer_config is None:
            raise ValueError("buffer_capacity axis requires a CL run with a buffer_config")
        return replace(config, buffer_config=replace(config.buffer_config, capacity=int(value)))
    if axis == "policy":
        if config.buffer_config is None:
            raise ValueError("policy axis requires a CL run with a buffer_config")
        return replace(config, buffer_config=replace(config.buffer_config, policy=str(value)))
    if axis == "schedule":
        return replace(config, train_config=replace(config.train_config, replay_schedule=str(value)))
    raise ValueError(f"axis must be one of {GRID_AXES}, got {axis!r}")


def run_grid(config: RunConfig, axis: str, values: list, datasets: dict[str, Dataset] | None = None) -> GridResult:
    """One run_stream per (value, seed); failed cells are marked, not fatal."""
    if axis not in GRID_AXES:
        raise ValueError(f"axis must be one of {GRID_AXES}, got {axis!r}")
    if not values:
        raise ValueError("values must be non-empty")
    result = GridResult(axis=axis)
    for value in values:
        try:
            cell_config = _apply_axis(config, axis, value)
            per_seed = run_stream(cell_config, datasets)
        except Exception as e:  # failed cell: mark every seed, keep sweeping
            for seed in config.seeds:
                result.cells.append(GridCell(value, seed, float("nan"), float("nan"), str(e)))
            continue
        for seed, records in per_seed.items():
            ok = [r for r in records if r.error is None]
            err = next((r.error for r in records if r.error is not None), None)
            final = ok[-1].accuracy if ok else float("nan")
            mean = float(np.mean([r.accuracy for r in ok])) if ok else float("nan")
            result.cells.append(GridCell(value, seed, final, mean, err))
    return result


# --- exports -------------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def export_metrics(
    results: dict[int, list[EvalRecord]],
    path,
    format: str = "csv",
    *,
    include_timing: bool = False,
    comment: str | None = None,
) -> None:
    """Write records to ``path`` as CSV or a structured JSON document.

    CSV columns: seed, batch_index, tag, accuracy, per_class_0..C-1,
    buffer_occupancy, wall_ms. The wall_ms column stays blank unless
    ``include_timing`` is set, so identical runs export identical bytes; the
    JSON format always records timings.
    """
    records = [r for seed in results for r in results[seed]]
    if not records:
        raise ValueError("nothing to export")
    if format == "csv":
        classes = len(records[0].per_class)
        lines = []
        if comment:
            lines.append(f"# {comment}")
        header = ["seed", "batch_index", "tag", "accuracy"]
        header += [f"per_class_{c}" for c in range(classes)]
        header += ["buffer_occupancy", "wall_ms"]
        lines.append(",".join(header))
        for r in records:
            row = [str(r.seed), str(r.batch_index), r.tag, _fmt(r.accuracy)]
            row += [_fmt(v) for v in r.per_class]
            row.append(str(r.buffer_occupancy))
            row.append(f"{r.wall_s * 1000.0:.3f}" if include_timing else "")
            lines.append(",".join(row))
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    elif format == "structured":
        doc = {
            "records": [
                {
                    "seed": r.seed,
                    "batch_index": r.batch_index,
                    "tag": r.tag,
                    "accuracy": None if np.isnan(r.accuracy) else r.accuracy,
                    "per_class": [None if np.isnan(v) else float(v) for v in r.per_class],
                    "buffer_occupancy": r.buffer_occupancy,
                    "buffer_histogram": (
                        {str(k): v for k, v in r.buffer_histogram.items()}
                        if r.buffer_histogram is not None
                        else None
                    ),
                    "classes_seen": r.classes_seen,
                    "wall_ms": r.wall_s * 1000.0,
                    "error": r.error,
                }
                for r in records
            ]
        }
        with open(path, "w", encoding="utf-8") as f:
            json.dump(doc, f, indent=2)
            f.write("\n")
    else:
        raise ValueError(f"format must be 'csv' or 'structured', got {format!r}")


def export_grid(result: GridResult, path, comment: str | None = None) -> None:
    """Grid cells plus per-value aggregate rows (seed column "mean"/"std")."""
    lines = []
    if comment:
        lines.append(f"# {comment}")
    lines.append(f"{result.axis},seed,final_accuracy,mean_accuracy")
    for cell in result.cells:
        final = "" if cell.error else _fmt(cell.final_accuracy)
        mean = "" if cell.error else _fmt(cell.mean_accuracy)
        lines.append(f"{cell.value},{cell.seed},{final},{mean}")
    for agg in result.aggregate():
        lines.append(f"{agg['value']},mean,{_fmt(agg['final_mean'])},{_fmt(agg['overtime_mean'])}")
        lines.append(f"{agg['value']},std,{_fmt(agg['final_std'])},")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
