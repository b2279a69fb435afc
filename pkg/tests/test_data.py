import json

import numpy as np
import pytest

from edgecl.data import (
    Dataset,
    SynthSpec,
    build_scenario_manifest,
    fpb_to_bytes,
    generate_synthetic,
    load_fpb,
    load_manifest,
    project_image,
    save_fpb,
    save_manifest,
    validate_manifest,
)
from edgecl.errors import FormatError


def small_dataset(n=3, dim=5, seed=0):
    rng = np.random.default_rng(seed)
    return Dataset(
        rng.standard_normal((n, dim)).astype(np.float32),
        rng.integers(0, 4, n),
        rng.integers(0, 2, n),
    )


def nearest_mean_accuracy(train: Dataset, test: Dataset) -> float:
    """Brute-force nearest-class-mean classifier, the separability oracle."""
    classes = sorted(int(c) for c in np.unique(train.labels))
    means = np.stack([train.features[train.labels == c].mean(axis=0) for c in classes])
    dists = ((test.features[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
    preds = np.array(classes)[np.argmin(dists, axis=1)]
    return float(np.mean(preds == test.labels))


class TestFpbFormat:
    def test_round_trip(self, tmp_path):
        ds = small_dataset()
        path = tmp_path / "d.fpb"
        save_fpb(ds, path)
        loaded = load_fpb(path)
        assert loaded.equals(ds)

    def test_round_trip_bytes_identical(self, tmp_path):
        ds = small_dataset()
        path = tmp_path / "d.fpb"
        save_fpb(ds, path)
        assert fpb_to_bytes(load_fpb(path)) == path.read_bytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "d.fpb"
        path.write_bytes(b"XXXX" + b"\0" * 20)
        with pytest.raises(FormatError):
            load_fpb(path)

    def test_zero_dim_header(self, tmp_path):
        path = tmp_path / "d.fpb"
        path.write_bytes(b"FPB1" + (0).to_bytes(4, "little") + (1).to_bytes(4, "little"))
        with pytest.raises(FormatError):
            load_fpb(path)

    def test_truncated_payload_reports_offset(self, tmp_path):
        ds = small_dataset()
        path = tmp_path / "d.fpb"
        save_fpb(ds, path)
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(FormatError) as exc:
            load_fpb(path)
        assert exc.value.offset is not None

    def test_no_instance_ids_stored_as_zero(self, tmp_path):
        ds = Dataset(np.ones((2, 3), dtype=np.float32), [0, 1])
        path = tmp_path / "d.fpb"
        save_fpb(ds, path)
        assert np.array_equal(load_fpb(path).instance_ids, [0, 0])


class TestSynthetic:
    def test_spec_arithmetic(self):
        train, test, manifest = generate_synthetic(
            SynthSpec(num_classes=10, instances_per_class=1, samples_per_instance=100, dim=32, seed=1)
        )
        assert len(manifest.batches) == 10
        assert len(train) == 800
        assert len(test) == 200
        assert manifest.scenario == "new_classes"

    def test_low_noise_is_perfectly_separable(self):
        spec = SynthSpec(num_classes=6, samples_per_instance=50, dim=16,
                         within_class_noise=1e-4, seed=3)
        train, test, _ = generate_synthetic(spec)
        assert nearest_mean_accuracy(train, test) == 1.0

    def test_separability_knob_is_monotone(self):
        # harder streams (larger within-class noise) score lower for the
        # nearest-mean oracle at a fixed seed
        accs = []
        for noise in (2.0, 1.0, 0.5, 0.1):
            spec = SynthSpec(num_classes=8, samples_per_instance=60, dim=8,
                             between_class_spread=1.0, within_class_noise=noise, seed=5)
            train, test, _ = generate_synthetic(spec)
            accs.append(nearest_mean_accuracy(train, test))
        assert all(a <= b for a, b in zip(accs, accs[1:])), accs

    def test_deterministic(self):
        a_train, a_test, _ = generate_synthetic(SynthSpec(seed=9))
        b_train, b_test, _ = generate_synthetic(SynthSpec(seed=9))
        assert a_train.equals(b_train) and a_test.equals(b_test)

    def test_batches_order_classes_then_instances(self):
        _, _, manifest = generate_synthetic(
            SynthSpec(num_classes=3, instances_per_class=2, samples_per_instance=10, seed=1)
        )
        assert [b.tag for b in manifest.batches] == [
            "i000-c000", "i000-c001", "i000-c002",
            "i001-c000", "i001-c001", "i001-c002",
        ]

    def test_invalid_spec_rejected(self):
        with pytest.raises(ValueError):
            SynthSpec(samples_per_instance=0)
        with pytest.raises(ValueError):
            SynthSpec(within_class_noise=0.0)


class TestScenarioManifests:
    def four_class_dataset(self):
        # 4 classes x 50 samples, two instances (30 first / 20 second)
        feats, labels, inst = [], [], []
        rng = np.random.default_rng(0)
        for c in range(4):
            feats.append(rng.standard_normal((50, 8)).astype(np.float32))
            labels.extend([c] * 50)
            inst.extend([0] * 30 + [1] * 20)
        return Dataset(np.concatenate(feats), labels, inst)

    def test_cumulative_single_batch(self):
        ds = self.four_class_dataset()
        m = build_scenario_manifest(ds, "cumulative")
        assert len(m.batches) == 1
        assert len(m.batches[0].indices) == 200

    def test_new_classes_in_label_order(self):
        ds = self.four_class_dataset()
        m = build_scenario_manifest(ds, "new_classes")
        assert len(m.batches) == 4
        for c, b in enumerate(m.batches):
            assert len(b.indices) == 50
            assert np.all(ds.labels[b.indices] == c)

    def test_new_instances_second_batch_size(self):
        ds = self.four_class_dataset()
        m = build_scenario_manifest(ds, "new_instances")
        assert len(m.batches) == 2
        assert len(m.batches[0].indices) == 120
        assert len(m.batches[1].indices) == 80

    def test_new_instances_requires_ids(self):
        ds = Dataset(np.ones((4, 2), dtype=np.float32), [0, 0, 1, 1])
        with pytest.raises(ValueError):
            build_scenario_manifest(ds, "new_instances")


class TestManifestIO:
    def write_stream(self, tmp_path, seed=1):
        train, test, manifest = generate_synthetic(
            SynthSpec(num_classes=4, samples_per_instance=20, dim=8, seed=seed)
        )
        save_fpb(train, tmp_path / "train.fpb")
        save_fpb(test, tmp_path / "test.fpb")
        save_manifest(manifest, tmp_path / "manifest.json")
        return manifest

    def test_round_trip(self, tmp_path):
        original = self.write_stream(tmp_path)
        loaded = load_manifest(tmp_path / "manifest.json")
        assert loaded.dim == original.dim
        assert loaded.num_classes == original.num_classes
        assert [b.tag for b in loaded.batches] == [b.tag for b in original.batches]
        assert all(
            np.array_equal(a.indices, b.indices)
            for a, b in zip(loaded.batches, original.batches)
        )

    def test_unknown_fields_rejected(self, tmp_path):
        self.write_stream(tmp_path)
        doc = json.loads((tmp_path / "manifest.json").read_text())
        doc["comment"] = "not allowed"
        (tmp_path / "manifest.json").write_text(json.dumps(doc))
        with pytest.raises(FormatError):
            load_manifest(tmp_path / "manifest.json")

    def test_out_of_range_index_rejected(self, tmp_path):
        self.write_stream(tmp_path)
        doc = json.loads((tmp_path / "manifest.json").read_text())
        doc["batches"][0]["indices"] = [10**6]
        (tmp_path / "manifest.json").write_text(json.dumps(doc))
        with pytest.raises(FormatError):
            load_manifest(tmp_path / "manifest.json")

    def test_train_test_overlap_rejected(self, tmp_path):
        self.write_stream(tmp_path)
        doc = json.loads((tmp_path / "manifest.json").read_text())
        doc["test"] = {"file": "train.fpb", "indices": doc["batches"][0]["indices"][:3]}
        (tmp_path / "manifest.json").write_text(json.dumps(doc))
        with pytest.raises(FormatError):
            load_manifest(tmp_path / "manifest.json")

    def test_in_memory_validation(self):
        train, test, manifest = generate_synthetic(SynthSpec(num_classes=3, samples_per_instance=10, seed=2))
        validate_manifest(manifest, {"train.fpb": train, "test.fpb": test})


class TestProjectImage:
    def test_all_zero_image_gives_zero_vector(self):
        out = project_image(bytes(16), 4, 4, out_dim=8, seed=1)
        assert np.array_equal(out, np.zeros(8, dtype=np.float32))

    def test_deterministic(self):
        img = bytes(range(64)) * 4
        a = project_image(img, 16, 16, out_dim=32, seed=5)
        b = project_image(img, 16, 16, out_dim=32, seed=5)
        assert np.array_equal(a, b)

    def test_single_pixel_difference_changes_features(self):
        img = bytearray(bytes(range(64)) * 4)
        a = project_image(bytes(img), 16, 16, out_dim=32, seed=5)
        img[10] = (img[10] + 128) % 256
        b = project_image(bytes(img), 16, 16, out_dim=32, seed=5)
        assert not np.array_equal(a, b)

    def test_output_is_unit_norm(self):
        img = bytes(range(1, 65)) * 4
        out = project_image(img, 16, 16, out_dim=32, seed=5)
        assert np.linalg.norm(out) == pytest.approx(1.0, abs=1e-5)

    def test_empty_image_rejected(self):
        with pytest.raises(ValueError):
            project_image(b"", 0, 1, out_dim=4, seed=0)

    def test_wrong_pixel_count_rejected(self):
        with pytest.raises(ValueError):
            project_image(bytes(10), 4, 4, out_dim=4, seed=0)
