"""Embedding storage: validated in-memory sets, EMB1 binary persistence, manifests.

Embeddings arrive precomputed (policy latents flattened row-major to one
vector per observation) and are held as float32 matrices. All distance
arithmetic is done in float64 to keep high-dimensional dot products stable.

EMB1 container layout (little-endian throughout):

    bytes 0-3    ASCII magic ``EMB1``
    bytes 4-7    uint32 format version (must be 1)
    bytes 8-11   uint32 vector count
    bytes 12-15  uint32 dimension
    bytes 16-    count * dim IEEE-754 float32 values, vector-major

A manifest is a JSON document tying one run together:

    {
      "nominal": "nominal.emb1",
      "validation": "validation.emb1",
      "factors": {"blue_lighting": "factors/blue_lighting.emb1", ...},
      "r_nom": 0.65,
      "measured_success": {"blue_lighting": 0.25, ...},   // optional
      "source": "edited"                                   // optional, or "real"
    }

Relative paths are resolved against the manifest's own directory.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

EMB1_MAGIC = b"EMB1"
EMB1_VERSION = 1
_HEADER = struct.Struct("<4sIII")

FACTOR_SOURCES = ("edited", "real")


class EmbeddingFormatError(ValueError):
    """An EMB1 file or header violates the container format."""


class EmbeddingDataError(ValueError):
    """Stored vector data is unusable for cosine distances (zero or non-finite)."""


class ManifestError(ValueError):
    """A manifest document is malformed or inconsistent."""


def _validate_matrix(array: np.ndarray) -> np.ndarray:
    """Return a validated C-contiguous float32 copy of a (count, dim) matrix.

    Rejects empty sets, zero vectors, and non-finite coordinates; cosine
    distance is undefined on those and letting them through would silently
    corrupt every quantile computed downstream.
    """
    arr = np.asarray(array)
    if arr.ndim > 2:
        # Matrix-shaped embeddings (one matrix per observation) are flattened
        # row-major to one vector each, the single convention under which all
        # cosine distances are defined.
        arr = arr.reshape(arr.shape[0], -1)
    if arr.ndim != 2:
        raise EmbeddingDataError(f"expected a 2-D (count, dim) array, got shape {arr.shape}")
    if arr.shape[0] < 1:
        raise EmbeddingDataError("embedding set must contain at least one vector")
    if arr.shape[1] < 1:
        raise EmbeddingDataError("embedding dimension must be at least 1")
    arr = np.ascontiguousarray(arr, dtype=np.float32)
    finite_rows = np.isfinite(arr).all(axis=1)
    if not finite_rows.all():
        idx = int(np.flatnonzero(~finite_rows)[0])
        raise EmbeddingDataError(f"non-finite coordinate at index {idx}")
    zero_rows = ~arr.any(axis=1)
    if zero_rows.any():
        idx = int(np.flatnonzero(zero_rows)[0])
        raise EmbeddingDataError(f"zero vector at index {idx}")
    return arr


@dataclass(frozen=True, eq=False)
class EmbeddingSet:
    """A labelled, immutable collection of same-dimension embedding vectors.

    ``array`` is a (count, dim) float32 matrix, one vector per row. Instances
    are safe to share read-only across concurrent workers.
    """

    label: str
    array: np.ndarray = field(repr=False)

    @classmethod
    def from_array(cls, label: str, array: np.ndarray) -> "EmbeddingSet":
        """Validate ``array`` and wrap it. See :func:`_validate_matrix` for rules."""
        arr = _validate_matrix(array)
        arr.setflags(write=False)
        return cls(label=label, array=arr)

    @property
    def dim(self) -> int:
        return int(self.array.shape[1])

    def __len__(self) -> int:
        return int(self.array.shape[0])

    def __iter__(self) -> Iterator[np.ndarray]:
        return iter(self.array)


def validate_vector(values) -> np.ndarray:
    """Validate a single embedding vector; returns it as a 1-D float64 array."""
    vec = np.asarray(values, dtype=np.float64).ravel()
    if vec.size < 1:
        raise EmbeddingDataError("embedding vector must have dimension >= 1")
    if not np.isfinite(vec).all():
        raise EmbeddingDataError("embedding vector has a non-finite coordinate")
    if not vec.any():
        raise EmbeddingDataError("embedding vector is all zeros")
    return vec


def cosine_distance(a, b) -> float:
    """Cosine distance ``1 - a.b / (|a||b|)`` between two nonzero vectors.

    Symmetric in its arguments, invariant to positive rescaling of either
    argument, and bounded to [0, 2]. Accumulation is float64 regardless of
    the input dtype.
    """
    av = validate_vector(a)
    bv = validate_vector(b)
    if av.shape[0] != bv.shape[0]:
        raise ValueError(f"dimension mismatch: {av.shape[0]} vs {bv.shape[0]}")
    sim = float(av @ bv) / (float(np.linalg.norm(av)) * float(np.linalg.norm(bv)))
    return float(min(2.0, max(0.0, 1.0 - sim)))


def save_embedding_set(embedding_set: EmbeddingSet, path) -> None:
    """Write ``embedding_set`` to ``path`` in the EMB1 binary format."""
    arr = embedding_set.array
    header = _HEADER.pack(EMB1_MAGIC, EMB1_VERSION, arr.shape[0], arr.shape[1])
    payload = np.ascontiguousarray(arr, dtype="<f4").tobytes()
    Path(path).write_bytes(header + payload)


def load_embedding_set(path, expected_label: str) -> EmbeddingSet:
    """Read an EMB1 file and return a validated set labelled ``expected_label``.

    The container carries no label of its own; the caller names the set
    (manifests do this when loading a run).
    """
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise EmbeddingFormatError(f"{path}: truncated header ({len(raw)} bytes)")
    magic, version, count, dim = _HEADER.unpack_from(raw)
    if magic != EMB1_MAGIC:
        raise EmbeddingFormatError(f"{path}: bad magic {magic!r}, expected {EMB1_MAGIC!r}")
    if version != EMB1_VERSION:
        raise EmbeddingFormatError(f"{path}: unsupported version {version}")
    if count < 1:
        raise EmbeddingFormatError(f"{path}: header count must be >= 1, got {count}")
    if dim < 1:
        raise EmbeddingFormatError(f"{path}: header dim must be >= 1, got {dim}")
    payload = raw[_HEADER.size:]
    expected = count * dim * 4
    if len(payload) != expected:
        raise EmbeddingFormatError(
            f"{path}: payload length {len(payload)} does not match "
            f"header count={count} dim={dim} (expected {expected} bytes)"
        )
    arr = np.frombuffer(payload, dtype="<f4").reshape(count, dim)
    try:
        return EmbeddingSet.from_array(expected_label, arr)
    except EmbeddingDataError as exc:
        raise EmbeddingDataError(f"{path}: {exc}") from None


@dataclass(frozen=True)
class Manifest:
    """Paths and run parameters for one prediction run.

    ``r_nom`` is the nominal success rate used to calibrate the anomaly
    threshold. ``measured_success`` holds empirically measured per-factor
    success rates when available (needed only for evaluation).
    ``source`` annotates whether factor observation sets are generated edits
    or real off-nominal observations; predictions are computed identically
    either way.
    """

    nominal: Path
    validation: Path
    factors: dict[str, Path]
    r_nom: float
    measured_success: dict[str, float] | None = None
    source: str = "edited"

    def __post_init__(self) -> None:
        if not 0.0 <= self.r_nom <= 1.0:
            raise ManifestError(f"r_nom must be in [0, 1], got {self.r_nom}")
        if not self.factors:
            raise ManifestError("manifest must name at least one factor")
        for name in self.factors:
            if not name:
                raise ManifestError("factor names must be non-empty")
        if self.measured_success is not None:
            for name, value in self.measured_success.items():
                if not 0.0 <= value <= 1.0:
                    raise ManifestError(
                        f"measured_success[{name!r}] must be in [0, 1], got {value}"
                    )
        if self.source not in FACTOR_SOURCES:
            raise ManifestError(f"source must be one of {FACTOR_SOURCES}, got {self.source!r}")


def _reject_duplicate_keys(pairs):
    keys = [k for k, _ in pairs]
    if len(keys) != len(set(keys)):
        dupe = next(k for k in keys if keys.count(k) > 1)
        raise ManifestError(f"duplicate key {dupe!r}")
    return dict(pairs)


def load_manifest(path) -> Manifest:
    """Parse a manifest JSON file, resolving relative paths against its directory."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"), object_pairs_hook=_reject_duplicate_keys)
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ManifestError(f"{path}: manifest must be a JSON object")
    for key in ("nominal", "validation", "factors", "r_nom"):
        if key not in doc:
            raise ManifestError(f"{path}: missing required key {key!r}")
    factors = doc["factors"]
    if not isinstance(factors, dict) or not all(isinstance(v, str) for v in factors.values()):
        raise ManifestError(f"{path}: 'factors' must map factor names to file paths")
    base = path.parent

    def resolve(p: str) -> Path:
        candidate = Path(p)
        return candidate if candidate.is_absolute() else base / candidate

    measured = doc.get("measured_success")
    if measured is not None and not isinstance(measured, dict):
        raise ManifestError(f"{path}: 'measured_success' must be an object")
    try:
        return Manifest(
            nominal=resolve(doc["nominal"]),
            validation=resolve(doc["validation"]),
            factors={name: resolve(p) for name, p in factors.items()},
            r_nom=float(doc["r_nom"]),
            measured_success=None if measured is None else {k: float(v) for k, v in measured.items()},
            source=doc.get("source", "edited"),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ManifestError):
            raise
        raise ManifestError(f"{path}: {exc}") from None


def save_manifest(manifest: Manifest, path) -> None:
    """Write a manifest as JSON, storing paths relative to it where possible."""
    path = Path(path)
    base = path.parent.resolve()

    def unresolve(p: Path) -> str:
        try:
            return p.resolve().relative_to(base).as_posix()
        except ValueError:
            return str(p)

    doc: dict = {
        "nominal": unresolve(manifest.nominal),
        "validation": unresolve(manifest.validation),
        "factors": {name: unresolve(p) for name, p in manifest.factors.items()},
        "r_nom": manifest.r_nom,
    }
    if manifest.measured_success is not None:
        doc["measured_success"] = manifest.measured_success
    if manifest.source != "edited":
        doc["source"] = manifest.source
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def load_manifest_sets(
    manifest: Manifest,
) -> tuple[EmbeddingSet, EmbeddingSet, dict[str, EmbeddingSet]]:
    """Load the nominal, validation, and per-factor sets a manifest points at.

    Every set must share one embedding dimension; factor sets keep manifest
    order and are labelled ``factor:<name>``.
    """
    nominal = load_embedding_set(manifest.nominal, "nominal")
    validation = load_embedding_set(manifest.validation, "validation")
    if validation.dim != nominal.dim:
        raise ManifestError(
            f"validation dim {validation.dim} does not match nominal dim {nominal.dim}"
        )
    factor_sets: dict[str, EmbeddingSet] = {}
    for name, factor_path in manifest.factors.items():
        factor_set = load_embedding_set(factor_path, f"factor:{name}")
        if factor_set.dim != nominal.dim:
            raise ManifestError(
                f"factor {name!r} dim {factor_set.dim} does not match nominal dim {nominal.dim}"
            )
        factor_sets[name] = factor_set
    return nominal, validation, factor_sets
