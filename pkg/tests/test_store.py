from __future__ import annotations

import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shiftcast.store import (
    EmbeddingDataError,
    EmbeddingFormatError,
    EmbeddingSet,
    Manifest,
    ManifestError,
    cosine_distance,
    load_embedding_set,
    load_manifest,
    load_manifest_sets,
    save_embedding_set,
    save_manifest,
)

from conftest import make_set, random_rows


class TestCosineDistance:
    def test_identical_vectors(self):
        assert cosine_distance([1, 0], [1, 0]) == 0.0

    def test_orthogonal_vectors(self):
        assert cosine_distance([1, 0], [0, 1]) == 1.0

    def test_antipodal_vectors(self):
        assert cosine_distance([1, 0], [-1, 0]) == 2.0

    def test_positive_scaling_invariance(self):
        assert cosine_distance([3, 4], [6, 8]) == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension mismatch"):
            cosine_distance([1, 0], [1, 0, 0])

    def test_zero_vector_rejected(self):
        with pytest.raises(EmbeddingDataError):
            cosine_distance([0, 0], [1, 0])

    def test_non_finite_rejected(self):
        with pytest.raises(EmbeddingDataError):
            cosine_distance([np.nan, 1.0], [1, 0])

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_symmetry_and_bounds(self, seed):
        gen = np.random.default_rng(seed)
        a = random_rows(gen, 1, 8)[0]
        b = random_rows(gen, 1, 8)[0]
        d_ab = cosine_distance(a, b)
        d_ba = cosine_distance(b, a)
        assert abs(d_ab - d_ba) <= 1e-6
        assert 0.0 <= d_ab <= 2.0

    @given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3))
    @settings(max_examples=50, deadline=None)
    def test_scale_invariance(self, seed, c):
        gen = np.random.default_rng(seed)
        a = random_rows(gen, 1, 8)[0].astype(np.float64)
        b = random_rows(gen, 1, 8)[0]
        assert abs(cosine_distance(c * a, b) - cosine_distance(a, b)) <= 1e-6


class TestEmb1Format:
    def test_trivial_round_trip(self, tmp_path):
        arr = np.array([[1, 0, 0], [0, 1, 0]], dtype=np.float32)
        path = tmp_path / "s.emb1"
        save_embedding_set(EmbeddingSet.from_array("s", arr), path)
        loaded = load_embedding_set(path, "s")
        assert len(loaded) == 2
        assert loaded.dim == 3
        assert loaded.label == "s"
        np.testing.assert_array_equal(loaded.array, arr)

    def test_round_trip_is_bitwise(self, tmp_path, rng):
        # Round-trip oracle: serialized bytes of save(load(save(S))) equal save(S).
        es = make_set(rng, 100, 512)
        first = tmp_path / "a.emb1"
        second = tmp_path / "b.emb1"
        save_embedding_set(es, first)
        reloaded = load_embedding_set(first, "test")
        save_embedding_set(reloaded, second)
        assert first.read_bytes() == second.read_bytes()
        assert reloaded.array.tobytes() == es.array.tobytes()

    def test_zero_vector_rejected_with_index(self, tmp_path):
        path = tmp_path / "z.emb1"
        path.write_bytes(
            struct.pack("<4sIII", b"EMB1", 1, 1, 2) + np.zeros(2, dtype="<f4").tobytes()
        )
        with pytest.raises(EmbeddingDataError, match="zero vector at index 0"):
            load_embedding_set(path, "z")

    def test_non_finite_reported_with_index(self, tmp_path):
        payload = np.array([[1, 2], [np.inf, 1]], dtype="<f4")
        path = tmp_path / "n.emb1"
        path.write_bytes(struct.pack("<4sIII", b"EMB1", 1, 2, 2) + payload.tobytes())
        with pytest.raises(EmbeddingDataError, match="non-finite coordinate at index 1"):
            load_embedding_set(path, "n")

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.emb1"
        path.write_bytes(struct.pack("<4sIII", b"NOPE", 1, 1, 1) + b"\x00\x00\x80\x3f")
        with pytest.raises(EmbeddingFormatError, match="bad magic"):
            load_embedding_set(path, "bad")

    def test_bad_version(self, tmp_path):
        path = tmp_path / "v.emb1"
        path.write_bytes(struct.pack("<4sIII", b"EMB1", 2, 1, 1) + b"\x00\x00\x80\x3f")
        with pytest.raises(EmbeddingFormatError, match="version"):
            load_embedding_set(path, "v")

    def test_payload_length_mismatch(self, tmp_path):
        path = tmp_path / "m.emb1"
        path.write_bytes(struct.pack("<4sIII", b"EMB1", 1, 2, 3) + b"\x00" * 8)
        with pytest.raises(EmbeddingFormatError, match="payload length"):
            load_embedding_set(path, "m")

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "t.emb1"
        path.write_bytes(b"EMB1\x01")
        with pytest.raises(EmbeddingFormatError, match="truncated"):
            load_embedding_set(path, "t")

    def test_empty_set_rejected(self, tmp_path):
        path = tmp_path / "e.emb1"
        path.write_bytes(struct.pack("<4sIII", b"EMB1", 1, 0, 4))
        with pytest.raises(EmbeddingFormatError, match="count"):
            load_embedding_set(path, "e")


class TestEmbeddingSet:
    def test_matrix_embeddings_flattened_row_major(self):
        # One matrix per observation flattens to one vector, row-major.
        stack = np.arange(12, dtype=np.float32).reshape(2, 2, 3) + 1.0
        es = EmbeddingSet.from_array("m", stack)
        assert es.dim == 6
        np.testing.assert_array_equal(es.array[0], [1, 2, 3, 4, 5, 6])

    def test_extreme_float32_values_round_trip(self, tmp_path):
        # Denormals, float32 extremes, and negative values all survive the
        # container bit-for-bit.
        arr = np.array(
            [
                [1e-42, 3.4e38, -3.4e38],
                [1.1754944e-38, -1e-42, 1.0],
                [-0.0, 2.0, -2.0],
            ],
            dtype=np.float32,
        )
        es = EmbeddingSet.from_array("x", arr)
        path = tmp_path / "x.emb1"
        save_embedding_set(es, path)
        reloaded = load_embedding_set(path, "x")
        assert reloaded.array.tobytes() == arr.tobytes()

    def test_rejects_empty(self):
        with pytest.raises(EmbeddingDataError):
            EmbeddingSet.from_array("x", np.zeros((0, 3), dtype=np.float32))

    def test_rejects_wrong_ndim(self):
        with pytest.raises(EmbeddingDataError):
            EmbeddingSet.from_array("x", np.ones(3, dtype=np.float32))

    def test_array_is_read_only(self, rng):
        es = make_set(rng, 3, 4)
        with pytest.raises(ValueError):
            es.array[0, 0] = 5.0


def _write_world(tmp_path, rng, measured=None, source=None):
    for name, n in (("nominal", 20), ("validation", 10), ("f_a", 5), ("f_b", 5)):
        save_embedding_set(make_set(rng, n, 4, name), tmp_path / f"{name}.emb1")
    doc = {
        "nominal": "nominal.emb1",
        "validation": "validation.emb1",
        "factors": {"a": "f_a.emb1", "b": "f_b.emb1"},
        "r_nom": 0.65,
    }
    if measured is not None:
        doc["measured_success"] = measured
    if source is not None:
        doc["source"] = source
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(doc))
    return path


class TestManifest:
    def test_load_resolves_relative_paths(self, tmp_path, rng):
        path = _write_world(tmp_path, rng, measured={"a": 0.5, "b": 0.2})
        manifest = load_manifest(path)
        assert manifest.nominal == tmp_path / "nominal.emb1"
        assert manifest.r_nom == 0.65
        assert manifest.measured_success == {"a": 0.5, "b": 0.2}
        assert manifest.source == "edited"
        nominal, validation, factors = load_manifest_sets(manifest)
        assert len(nominal) == 20
        assert list(factors) == ["a", "b"]
        assert factors["a"].label == "factor:a"

    def test_missing_key(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text(json.dumps({"nominal": "x", "validation": "y", "factors": {}}))
        with pytest.raises(ManifestError, match="r_nom"):
            load_manifest(path)

    def test_r_nom_out_of_range(self, tmp_path, rng):
        path = _write_world(tmp_path, rng)
        doc = json.loads(path.read_text())
        doc["r_nom"] = 1.5
        path.write_text(json.dumps(doc))
        with pytest.raises(ManifestError, match="r_nom"):
            load_manifest(path)

    def test_duplicate_factor_names(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text(
            '{"nominal": "n", "validation": "v", '
            '"factors": {"a": "f1", "a": "f2"}, "r_nom": 0.5}'
        )
        with pytest.raises(ManifestError, match="duplicate"):
            load_manifest(path)

    def test_measured_out_of_range(self, tmp_path, rng):
        path = _write_world(tmp_path, rng, measured={"a": 1.2, "b": 0.1})
        with pytest.raises(ManifestError, match="measured_success"):
            load_manifest(path)

    def test_bad_source(self, tmp_path, rng):
        path = _write_world(tmp_path, rng, source="simulated")
        with pytest.raises(ManifestError, match="source"):
            load_manifest(path)

    def test_real_source_accepted(self, tmp_path, rng):
        manifest = load_manifest(_write_world(tmp_path, rng, source="real"))
        assert manifest.source == "real"

    def test_save_load_round_trip(self, tmp_path, rng):
        manifest = load_manifest(_write_world(tmp_path, rng, measured={"a": 0.5, "b": 0.2}))
        out = tmp_path / "copy.json"
        save_manifest(manifest, out)
        again = load_manifest(out)
        assert again == manifest

    def test_dim_mismatch_across_sets(self, tmp_path, rng):
        path = _write_world(tmp_path, rng)
        save_embedding_set(make_set(rng, 5, 3, "f_a"), tmp_path / "f_a.emb1")
        with pytest.raises(ManifestError, match="dim"):
            load_manifest_sets(load_manifest(path))

    def test_empty_factors_rejected(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text(json.dumps({"nominal": "n", "validation": "v", "factors": {}, "r_nom": 0.5}))
        with pytest.raises(ManifestError, match="factor"):
            load_manifest(path)
