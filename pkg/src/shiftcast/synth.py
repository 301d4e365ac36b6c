"""Synthetic embedding worlds with known ground truth, plus the k/reference-size sweep.

Measured success rates for real policies come from hardware trials that a
desk cannot reproduce, so end-to-end validation runs on manufactured worlds
instead: nominal and validation vectors are drawn isotropically around a
random unit base direction, and each factor's vectors around that direction
displaced by a known shift magnitude in a factor-specific orthogonal
direction. The true success rate of a factor is a fixed monotone decreasing
function of its shift, so the pipeline's ranking and absolute predictions
can be checked against construction.

The jitter is an isotropic Gaussian scale mixture: ``noise_scale`` is the
per-coordinate standard deviation, and each observation's noise is further
multiplied by a lognormal radius factor with log-sigma ``noise_tail``. The
heavy-ish radius tail spreads anomaly scores within a factor, so anomaly
rates climb gradually across a shift ladder instead of snapping from the
nominal rate to 1 (plain Gaussian clouds concentrate so sharply in high
dimension that every moderately shifted factor saturates and ranking them
becomes vacuous). Worlds are written through the standard manifest + EMB1
interfaces so the main pipeline is exercised end to end, never through
shortcuts.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .evaluation import evaluate
from .prediction import predict_from_sets
from .store import (
    EmbeddingSet,
    Manifest,
    load_manifest,
    load_manifest_sets,
    save_embedding_set,
    save_manifest,
)

ABLATION_CSV_HEADER = ("k", "reference_size", "spearman_rho", "avg_prediction_error")


def _link_exp_decay(r_nom: float, shift: float) -> float:
    return r_nom * math.exp(-shift)


def _link_linear(r_nom: float, shift: float) -> float:
    return max(0.0, r_nom - shift)


LINK_FAMILIES: dict[str, Callable[[float, float], float]] = {
    "exp_decay": _link_exp_decay,
    "linear": _link_linear,
}


@dataclass(frozen=True)
class FactorSpec:
    """One synthetic factor: its name, displacement magnitude, and set size."""

    name: str
    shift_magnitude: float
    n_obs: int


@dataclass(frozen=True)
class SynthWorldSpec:
    """Recipe for one synthetic world; fully deterministic given ``seed``."""

    dim: int
    n_nominal: int
    n_val: int
    factors: tuple[FactorSpec, ...]
    noise_scale: float
    seed: int
    r_nom: float = 0.65
    link: str = "exp_decay"
    noise_tail: float = 0.2

    def __post_init__(self) -> None:
        if self.dim < 1 or self.n_nominal < 1 or self.n_val < 1:
            raise ValueError("dim, n_nominal, and n_val must all be >= 1")
        if self.noise_scale <= 0:
            raise ValueError(f"noise_scale must be > 0, got {self.noise_scale}")
        if self.noise_tail < 0:
            raise ValueError(f"noise_tail must be >= 0, got {self.noise_tail}")
        if not 0.0 <= self.r_nom <= 1.0:
            raise ValueError(f"r_nom must be in [0, 1], got {self.r_nom}")
        if self.link not in LINK_FAMILIES:
            raise ValueError(f"unknown link family {self.link!r}; known: {sorted(LINK_FAMILIES)}")
        names = [f.name for f in self.factors]
        if not names:
            raise ValueError("need at least one factor")
        if len(names) != len(set(names)):
            raise ValueError("factor names must be distinct")
        for f in self.factors:
            if not math.isfinite(f.shift_magnitude) or f.shift_magnitude < 0:
                raise ValueError(f"factor {f.name!r} shift must be finite and >= 0")
            if f.n_obs < 1:
                raise ValueError(f"factor {f.name!r} n_obs must be >= 1")

    def true_success(self, shift: float) -> float:
        """Ground-truth success rate for a factor at ``shift``; equals r_nom at 0."""
        return LINK_FAMILIES[self.link](self.r_nom, shift)


@dataclass(frozen=True)
class GeneratedWorld:
    """Handles to an on-disk world: its manifest plus the ground-truth success map."""

    manifest_path: Path
    manifest: Manifest
    true_success: dict[str, float]


def spec_from_json_dict(doc: dict) -> SynthWorldSpec:
    """Build a spec from its JSON form (see demos/ for the layout)."""
    factors = tuple(
        FactorSpec(name=f["name"], shift_magnitude=float(f["shift_magnitude"]), n_obs=int(f["n_obs"]))
        for f in doc["factors"]
    )
    return SynthWorldSpec(
        dim=int(doc["dim"]),
        n_nominal=int(doc["n_nominal"]),
        n_val=int(doc["n_val"]),
        factors=factors,
        noise_scale=float(doc["noise_scale"]),
        seed=int(doc["seed"]),
        r_nom=float(doc.get("r_nom", 0.65)),
        link=doc.get("link", "exp_decay"),
        noise_tail=float(doc.get("noise_tail", 0.2)),
    )


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def generate_world(spec: SynthWorldSpec, out_dir) -> GeneratedWorld:
    """Sample a world and write it as manifest + EMB1 files under ``out_dir``.

    The base direction, factor displacement directions, and all jitter come
    from one seeded generator, so identical specs produce byte-identical
    files. Factor displacement directions are orthogonalized against the
    base so that shift magnitude translates monotonically into angular
    displacement.
    """
    out_dir = Path(out_dir)
    factors_dir = out_dir / "factors"
    factors_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    base = _unit(rng.standard_normal(spec.dim))

    def sample(center: np.ndarray, count: int) -> np.ndarray:
        radii = np.exp(spec.noise_tail * rng.standard_normal(count))
        noise = spec.noise_scale * radii[:, None] * rng.standard_normal((count, spec.dim))
        return (center + noise).astype(np.float32)

    nominal = EmbeddingSet.from_array("nominal", sample(base, spec.n_nominal))
    validation = EmbeddingSet.from_array("validation", sample(base, spec.n_val))
    save_embedding_set(nominal, out_dir / "nominal.emb1")
    save_embedding_set(validation, out_dir / "validation.emb1")

    factor_paths: dict[str, Path] = {}
    true_success: dict[str, float] = {}
    for factor in spec.factors:
        direction = rng.standard_normal(spec.dim)
        direction -= (direction @ base) * base
        direction = _unit(direction)
        center = base + factor.shift_magnitude * direction
        factor_set = EmbeddingSet.from_array(f"factor:{factor.name}", sample(center, factor.n_obs))
        path = factors_dir / f"{factor.name}.emb1"
        save_embedding_set(factor_set, path)
        factor_paths[factor.name] = path
        true_success[factor.name] = spec.true_success(factor.shift_magnitude)

    manifest = Manifest(
        nominal=out_dir / "nominal.emb1",
        validation=out_dir / "validation.emb1",
        factors=factor_paths,
        r_nom=spec.r_nom,
        measured_success=true_success,
    )
    manifest_path = out_dir / "manifest.json"
    save_manifest(manifest, manifest_path)
    return GeneratedWorld(manifest_path=manifest_path, manifest=manifest, true_success=true_success)


@dataclass(frozen=True)
class AblationGrid:
    """Sweep axes: neighbor counts and nominal reference-set sizes."""

    k_values: tuple[int, ...] = (1, 5, 10)
    reference_sizes: tuple[int, ...] = (200, 500, 1000, 2000, 3000)

    def __post_init__(self) -> None:
        if not self.k_values or not self.reference_sizes:
            raise ValueError("grid axes must be non-empty")
        if any(k < 1 for k in self.k_values) or any(s < 1 for s in self.reference_sizes):
            raise ValueError("grid values must be positive")


def grid_from_json_dict(doc: dict) -> AblationGrid:
    return AblationGrid(
        k_values=tuple(int(k) for k in doc["k_values"]),
        reference_sizes=tuple(int(s) for s in doc["reference_sizes"]),
    )


@dataclass(frozen=True)
class AblationCell:
    """One grid cell's metrics; invalid cells (k > reference size) carry NaNs."""

    k: int
    reference_size: int
    spearman_rho: float
    avg_prediction_error: float
    valid: bool = True


def run_ablation(
    manifest: Manifest, grid: AblationGrid, seed: int = 0, measured: dict[str, float] | None = None
) -> list[AblationCell]:
    """One predict+evaluate cycle per grid cell against measured success rates.

    Reference subsets are drawn without replacement, deterministically from
    (seed, reference_size), so a given size uses the same subset across all
    k values. Cells with k exceeding the reference size are marked invalid
    (NaN metrics) and the sweep continues. An undefined Spearman (zero rank
    variance) is recorded as NaN.
    """
    measured = measured if measured is not None else manifest.measured_success
    if measured is None:
        raise ValueError("no measured success rates: manifest lacks measured_success")
    nominal, validation, factor_sets = load_manifest_sets(manifest)
    if any(size > len(nominal) for size in grid.reference_sizes):
        raise ValueError(
            f"reference sizes {grid.reference_sizes} exceed nominal set size {len(nominal)}"
        )
    cells: list[AblationCell] = []
    for k in grid.k_values:
        for size in grid.reference_sizes:
            if k > size:
                cells.append(AblationCell(k, size, math.nan, math.nan, valid=False))
                continue
            subset_rng = np.random.default_rng([seed, size])
            idx = subset_rng.choice(len(nominal), size=size, replace=False)
            idx.sort()
            reference = EmbeddingSet.from_array(nominal.label, nominal.array[idx])
            report = predict_from_sets(
                reference, validation, factor_sets, manifest.r_nom, k, source=manifest.source
            )
            result = evaluate(report, measured)
            rho = math.nan if result.spearman_rho is None else result.spearman_rho
            cells.append(AblationCell(k, size, rho, result.avg_prediction_error))
    return cells


def ablation_to_csv(cells: Sequence[AblationCell]) -> str:
    """Render cells as CSV with the fixed header ``k,reference_size,spearman_rho,avg_prediction_error``."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ABLATION_CSV_HEADER)
    for cell in cells:
        writer.writerow(
            [cell.k, cell.reference_size, repr(cell.spearman_rho), repr(cell.avg_prediction_error)]
        )
    return buf.getvalue()


def write_ablation_csv(cells: Sequence[AblationCell], path) -> None:
    Path(path).write_text(ablation_to_csv(cells), encoding="utf-8")


def run_ablation_from_files(manifest_path, grid: AblationGrid, seed: int = 0) -> list[AblationCell]:
    """Convenience wrapper: load the manifest, then :func:`run_ablation`."""
    return run_ablation(load_manifest(manifest_path), grid, seed=seed)
