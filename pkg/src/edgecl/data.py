"""Everything that produces feature patterns.

Covers the binary feature-file format, stream manifests, a synthetic
Gaussian-cluster stream generator (a desk-scale stand-in for real extractor
dumps), and a deterministic random-projection image extractor for the demo
service.

Feature file ("FPB1"):
    magic "FPB1" | u32 dim | u32 count | count * (u16 label, u16 instance_id,
    dim * little-endian float32)

Manifest: a JSON document with exactly these fields (unknown fields are
rejected)::

    {
      "version": 1,
      "dim": <int>,
      "num_classes": <int>,
      "scenario": "cumulative" | "new_instances" | "new_classes" | "custom",
      "test": {"file": <path>, "indices": [<int>, ...] | "all"},
      "batches": [{"tag": <str>, "file": <path>, "indices": [<int>, ...]}, ...]
    }

File paths are resolved relative to the manifest's directory.
"""

from __future__ import annotations

import functools
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError
from .mathcore import Rng

FPB_MAGIC = b"FPB1"
SCENARIOS = ("cumulative", "new_instances", "new_classes", "custom")

_TRAIN_SPLIT = 0.8


class Dataset:
    """Feature patterns as parallel arrays.

    ``features`` is (n, dim) float32, ``labels`` (n,) int32;
    ``instance_ids`` is (n,) int32 or None when the data carries no
    instance structure (the file format stores zeros in that case).
    """

    def __init__(self, features, labels, instance_ids=None):
        self.features = np.asarray(features, dtype=np.float32)
        self.labels = np.asarray(labels, dtype=np.int32)
        if self.features.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {self.features.shape}")
        n = self.features.shape[0]
        if self.labels.shape != (n,):
            raise ValueError(f"labels shape {self.labels.shape} does not match {n} rows")
        if instance_ids is None:
            self.instance_ids = None
        else:
            self.instance_ids = np.asarray(instance_ids, dtype=np.int32)
            if self.instance_ids.shape != (n,):
                raise ValueError("instance_ids length does not match feature rows")

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return self.features.shape[0]

    def equals(self, other: "Dataset") -> bool:
        same_inst = (
            (self.instance_ids is None and other.instance_ids is None)
            or (
                self.instance_ids is not None
                and other.instance_ids is not None
                and np.array_equal(self.instance_ids, other.instance_ids)
            )
        )
        return (
            np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
            and same_inst
        )


def _record_dtype(dim: int) -> np.dtype:
    return np.dtype(
        [("label", "<u2"), ("instance", "<u2"), ("features", "<f4", (dim,))]
    )


def fpb_to_bytes(dataset: Dataset) -> bytes:
    n = len(dataset)
    if dataset.labels.size and (dataset.labels.min() < 0 or dataset.labels.max() >= 2**16):
        raise ValueError("labels must fit in u16")
    inst = dataset.instance_ids
    if inst is None:
        inst = np.zeros(n, dtype=np.int32)
    if inst.size and (inst.min() < 0 or inst.max() >= 2**16):
        raise ValueError("instance ids must fit in u16")
    records = np.empty(n, dtype=_record_dtype(dataset.dim))
    records["label"] = dataset.labels
    records["instance"] = inst
    records["features"] = dataset.features
    return FPB_MAGIC + struct.pack("<II", dataset.dim, n) + records.tobytes()


def fpb_from_bytes(blob: bytes, offset: int = 0, name: str = "feature block"):
    """Parse one FPB1 block; returns (Dataset, bytes consumed past offset)."""
    if blob[offset : offset + 4] != FPB_MAGIC:
        raise FormatError(f"bad magic in {name}, expected FPB1", offset=offset)
    if len(blob) < offset + 12:
        raise FormatError(f"truncated header in {name}", offset=len(blob))
    dim, count = struct.unpack_from("<II", blob, offset + 4)
    if dim == 0:
        raise FormatError(f"feature dimension 0 in {name}", offset=offset + 4)
    rec = _record_dtype(dim)
    need = count * rec.itemsize
    if len(blob) < offset + 12 + need:
        raise FormatError(
            f"{name} holds {len(blob) - offset} bytes but header implies {12 + need}",
            offset=len(blob),
        )
    records = np.frombuffer(blob, dtype=rec, count=count, offset=offset + 12)
    dataset = Dataset(
        records["features"].copy(),
        records["label"].astype(np.int32),
        records["instance"].astype(np.int32),
    )
    return dataset, 12 + need


def save_fpb(dataset: Dataset, path) -> None:
    with open(path, "wb") as f:
        f.write(fpb_to_bytes(dataset))


def read_fpb_header(path) -> tuple[int, int]:
    """(dim, count) from a feature file without loading the payload."""
    with open(path, "rb") as f:
        head = f.read(12)
    if head[:4] != FPB_MAGIC:
        raise FormatError(f"bad magic in {path}, expected FPB1", offset=0)
    if len(head) < 12:
        raise FormatError(f"truncated header in {path}", offset=len(head))
    dim, count = struct.unpack_from("<II", head, 4)
    if dim == 0:
        raise FormatError(f"feature dimension 0 in {path}", offset=4)
    return dim, count


def load_fpb(path) -> Dataset:
    with open(path, "rb") as f:
        blob = f.read()
    dataset, used = fpb_from_bytes(blob, name=str(path))
    if used != len(blob):
        raise FormatError(f"{len(blob) - used} trailing bytes in {path}", offset=used)
    return dataset


# --- stream manifests --------------------------------------------------------

@dataclass
class BatchSpec:
    tag: str
    file: str
    indices: np.ndarray  # int64 row indices into the referenced file


@dataclass
class StreamManifest:
    dim: int
    num_classes: int
    scenario: str
    test_file: str
    test_indices: np.ndarray | str  # explicit rows or "all"
    batches: list[BatchSpec]
    version: int = 1
    base_dir: Path = field(default_factory=Path)

    def resolve(self, name: str) -> Path:
        return self.base_dir / name


def _as_index_array(value, where: str) -> np.ndarray:
    if not isinstance(value, list) or not all(isinstance(v, int) for v in value):
        raise FormatError(f"{where}: indices must be a list of integers")
    arr = np.asarray(value, dtype=np.int64)
    if arr.size and arr.min() < 0:
        raise FormatError(f"{where}: negative index")
    return arr


def _reject_unknown(obj: dict, allowed: set[str], where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise FormatError(f"{where}: unknown fields {sorted(unknown)}")


def save_manifest(manifest: StreamManifest, path) -> None:
    doc = {
        "version": manifest.version,
        "dim": manifest.dim,
        "num_classes": manifest.num_classes,
        "scenario": manifest.scenario,
        "test": {
            "file": manifest.test_file,
            "indices": (
                "all"
                if isinstance(manifest.test_indices, str)
                else [int(i) for i in manifest.test_indices]
            ),
        },
        "batches": [
            {"tag": b.tag, "file": b.file, "indices": [int(i) for i in b.indices]}
            for b in manifest.batches
        ],
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


def load_manifest(path, check: bool = True) -> StreamManifest:
    """Parse and validate a manifest.

    With ``check`` enabled the referenced feature files' headers are read to
    verify every index resolves, dimensions agree, and the test rows are
    disjoint from training rows within any shared file.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: not valid JSON ({e})") from e
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: manifest root must be an object")
    _reject_unknown(doc, {"version", "dim", "num_classes", "scenario", "test", "batches"}, str(path))
    for key in ("version", "dim", "num_classes", "scenario", "test", "batches"):
        if key not in doc:
            raise FormatError(f"{path}: missing field {key!r}")
    if doc["version"] != 1:
        raise FormatError(f"{path}: unsupported manifest version {doc['version']}")
    if doc["scenario"] not in SCENARIOS:
        raise FormatError(f"{path}: scenario must be one of {SCENARIOS}")
    if not isinstance(doc["dim"], int) or doc["dim"] < 1:
        raise FormatError(f"{path}: dim must be a positive integer")
    if not isinstance(doc["num_classes"], int) or doc["num_classes"] < 1:
        raise FormatError(f"{path}: num_classes must be a positive integer")

    test = doc["test"]
    if not isinstance(test, dict):
        raise FormatError(f"{path}: test must be an object")
    _reject_unknown(test, {"file", "indices"}, f"{path}: test")
    if test["indices"] == "all":
        test_indices: np.ndarray | str = "all"
    else:
        test_indices = _as_index_array(test["indices"], f"{path}: test")

    batches = []
    if not isinstance(doc["batches"], list):
        raise FormatError(f"{path}: batches must be a list")
    for i, b in enumerate(doc["batches"]):
        where = f"{path}: batches[{i}]"
        if not isinstance(b, dict):
            raise FormatError(f"{where}: must be an object")
        _reject_unknown(b, {"tag", "file", "indices"}, where)
        batches.append(BatchSpec(str(b["tag"]), str(b["file"]), _as_index_array(b["indices"], where)))

    manifest = StreamManifest(
        dim=doc["dim"],
        num_classes=doc["num_classes"],
        scenario=doc["scenario"],
        test_file=str(test["file"]),
        test_indices=test_indices,
        batches=batches,
        version=doc["version"],
        base_dir=path.parent,
    )
    if check:
        validate_manifest(manifest)
    return manifest


def validate_manifest(manifest: StreamManifest, datasets: dict[str, Dataset] | None = None) -> None:
    """Check index ranges, dimensions, and test/train disjointness.

    ``datasets`` can supply in-memory data keyed by file name; anything not
    present there is probed on disk (header only).
    """
    counts: dict[str, int] = {}

    def header(name: str) -> tuple[int, int]:
        if name not in counts:
            if datasets is not None and name in datasets:
                ds = datasets[name]
                dim, count = ds.dim, len(ds)
            else:
                dim, count = read_fpb_header(manifest.resolve(name))
            if dim != manifest.dim:
                raise FormatError(
                    f"manifest dim {manifest.dim} does not match {name} dim {dim}"
                )
            counts[name] = count
        return manifest.dim, counts[name]

    _, test_count = header(manifest.test_file)
    if isinstance(manifest.test_indices, str):
        test_rows = None  # "all"
    else:
        test_rows = set(int(i) for i in manifest.test_indices)
        bad = [i for i in test_rows if i >= test_count]
        if bad:
            raise FormatError(f"test index {min(bad)} out of range for {manifest.test_file}")

    for b in manifest.batches:
        _, count = header(b.file)
        if b.indices.size and int(b.indices.max()) >= count:
            raise FormatError(
                f"batch {b.tag!r}: index {int(b.indices.max())} out of range for {b.file}"
            )
        if b.file == manifest.test_file:
            if test_rows is None:
                raise FormatError(
                    f"batch {b.tag!r} trains on {b.file} while the whole file is the test set"
                )
            overlap = test_rows.intersection(int(i) for i in b.indices)
            if overlap:
                raise FormatError(
                    f"batch {b.tag!r}: training rows {sorted(overlap)[:5]} overlap the test set"
                )


# --- synthetic streams -------------------------------------------------------

@dataclass(frozen=True)
class SynthSpec:
    """Gaussian cluster layout for a synthetic incremental stream.

    Class means are drawn with spread ``between_class_spread``; each
    (class, instance) pair gets an offset of scale ``instance_offset`` and
    samples scatter around it with ``within_class_noise``. Smaller noise
    means an easier stream.
    """

    num_classes: int = 10
    instances_per_class: int = 1
    samples_per_instance: int = 100
    dim: int = 32
    between_class_spread: float = 3.0
    within_class_noise: float = 0.5
    instance_offset: float = 1.0
    seed: int = 1

    def __post_init__(self):
        for name in ("num_classes", "instances_per_class", "samples_per_instance", "dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("between_class_spread", "within_class_noise", "instance_offset"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")


TRAIN_FILE = "train.fpb"
TEST_FILE = "test.fpb"


def generate_synthetic(spec: SynthSpec):
    """(train, test, manifest) for an incremental Gaussian-cluster stream.

    Batches present one (class, instance) group each: first every class's
    instance 0 in label order, then the next instance of every class, and so
    on. Each group is split 80/20 into train/test rows. The manifest
    references the datasets as "train.fpb" / "test.fpb"; callers that stay
    in memory can resolve those names via the ``datasets`` hooks.
    """
    rng = Rng(spec.seed, "synth")
    c_, i_, n = spec.num_classes, spec.instances_per_class, spec.samples_per_instance
    class_means = [rng.normal(spec.between_class_spread, spec.dim) for _ in range(c_)]

    n_train = int(round(n * _TRAIN_SPLIT))
    if n_train == n and n > 1:
        n_train = n - 1

    train_feat, train_lab, train_inst = [], [], []
    test_feat, test_lab, test_inst = [], [], []
    groups: dict[tuple[int, int], np.ndarray] = {}
    row = 0
    for cls in range(c_):
        for inst in range(i_):
            mu = class_means[cls] + rng.normal(spec.instance_offset, spec.dim)
            samples = mu + rng.normal(spec.within_class_noise, (n, spec.dim))
            train_feat.append(samples[:n_train])
            test_feat.append(samples[n_train:])
            train_lab.extend([cls] * n_train)
            test_lab.extend([cls] * (n - n_train))
            train_inst.extend([inst] * n_train)
            test_inst.extend([inst] * (n - n_train))
            groups[(cls, inst)] = np.arange(row, row + n_train, dtype=np.int64)
            row += n_train

    train = Dataset(np.concatenate(train_feat), train_lab, train_inst)
    test = Dataset(np.concatenate(test_feat), test_lab, test_inst)

    batches = [
        BatchSpec(tag=f"i{inst:03d}-c{cls:03d}", file=TRAIN_FILE, indices=groups[(cls, inst)])
        for inst in range(i_)
        for cls in range(c_)
    ]
    manifest = StreamManifest(
        dim=spec.dim,
        num_classes=c_,
        scenario="new_classes" if i_ == 1 else "custom",
        test_file=TEST_FILE,
        test_indices="all",
        batches=batches,
    )
    return train, test, manifest


def build_scenario_manifest(
    dataset: Dataset,
    scenario: str,
    *,
    train_file: str = TRAIN_FILE,
    test_file: str = TEST_FILE,
    num_classes: int | None = None,
    test_indices: np.ndarray | str = "all",
) -> StreamManifest:
    """Manifest over ``dataset`` for one of the interactive scenarios.

    cumulative: a single batch holding every row. new_classes: one batch per
    class in label order. new_instances: one batch per instance id in
    ascending order (requires instance ids on the dataset).
    """
    if scenario not in ("cumulative", "new_instances", "new_classes"):
        raise ValueError(f"unsupported scenario {scenario!r}")
    if num_classes is None:
        num_classes = int(dataset.labels.max()) + 1 if len(dataset) else 1

    if scenario == "cumulative":
        batches = [BatchSpec("all", train_file, np.arange(len(dataset), dtype=np.int64))]
    elif scenario == "new_classes":
        batches = [
            BatchSpec(f"class-{cls:03d}", train_file, np.flatnonzero(dataset.labels == cls).astype(np.int64))
            for cls in range(num_classes)
            if np.any(dataset.labels == cls)
        ]
    else:
        if dataset.instance_ids is None:
            raise ValueError("new_instances scenario needs instance ids on the dataset")
        batches = [
            BatchSpec(
                f"instance-{inst:03d}",
                train_file,
                np.flatnonzero(dataset.instance_ids == inst).astype(np.int64),
            )
            for inst in sorted(int(i) for i in np.unique(dataset.instance_ids))
        ]
    return StreamManifest(
        dim=dataset.dim,
        num_classes=num_classes,
        scenario=scenario,
        test_file=test_file,
        test_indices=test_indices,
        batches=batches,
    )


# --- demo image extractor ----------------------------------------------------

@functools.lru_cache(maxsize=8)
def _projection_matrix(n_pixels: int, out_dim: int, seed: int) -> np.ndarray:
    rng = Rng(seed, "image-projection")
    signs = rng.integers(2, size=(out_dim, n_pixels)).astype(np.float32)
    return (signs * 2.0 - 1.0) / np.float32(np.sqrt(n_pixels))


def project_image(pixels: bytes, width: int, height: int, out_dim: int, seed: int) -> np.ndarray:
    """Deterministic random-projection features for a grayscale image.

    Stand-in for a frozen neural extractor in the demo service: pixels are
    scaled to [0, 1], multiplied by a fixed seeded +-1/sqrt(N) matrix, and
    L2-normalized (an all-zero image maps to the zero vector). The same
    (image, out_dim, seed) always produces the same vector.
    """
    if width < 1 or height < 1:
        raise ValueError(f"image must be non-empty, got {width}x{height}")
    if out_dim < 1:
        raise ValueError(f"out_dim must be >= 1, got {out_dim}")
    n = width * height
    raw = np.frombuffer(bytes(pixels), dtype=np.uint8)
    if raw.size != n:
        raise ValueError(f"expected {n} pixel bytes, got {raw.size}")
    scaled = raw.astype(np.float32) / np.float32(255.0)
    vec = _projection_matrix(n, out_dim, seed) @ scaled
    norm = np.float32(np.linalg.norm(vec))
    if norm == 0.0:
        return np.zeros(out_dim, dtype=np.float32)
    return (vec / norm).astype(np.float32)
