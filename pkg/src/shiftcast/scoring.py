"""Anomaly scores: mean of the k smallest cosine distances to a reference set.

The score of an observation is the mean cosine distance to its k nearest
neighbors in a fixed nominal reference set; k=1 reduces to the plain
nearest-neighbor cosine distance. Reference sets stay small enough (a few
thousand vectors) that exact brute-force search is both fast and free of
approximation error, so no index structure is used.

``score``/``score_set`` take the fast vectorized path; ``brute_force_score``
recomputes the same quantity pair-by-pair with a full sort and exists to
cross-check the fast path in tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .store import EmbeddingSet, cosine_distance, validate_vector


@dataclass(frozen=True)
class ScorerConfig:
    """Neighbor count ``k`` plus the nominal reference set distances are taken to.

    Immutable; scoring holds no other state, so one config can be shared
    freely across workers. The unit-normalized reference matrix is computed
    once per config and never reused across configs.
    """

    k: int
    reference: EmbeddingSet

    def __post_init__(self) -> None:
        if not 1 <= self.k <= len(self.reference):
            raise ValueError(
                f"k must be in [1, {len(self.reference)}] for this reference set, got {self.k}"
            )

    @cached_property
    def _unit_reference(self) -> np.ndarray:
        ref = self.reference.array.astype(np.float64)
        norms = np.linalg.norm(ref, axis=1, keepdims=True)
        return ref / norms


def _distances_to_reference(queries: np.ndarray, cfg: ScorerConfig) -> np.ndarray:
    """Pairwise cosine distances, one row per query, clipped to [0, 2]."""
    q = queries.astype(np.float64, copy=False)
    q_unit = q / np.linalg.norm(q, axis=1, keepdims=True)
    dist = 1.0 - q_unit @ cfg._unit_reference.T
    return np.clip(dist, 0.0, 2.0)


def _mean_k_smallest(distances: np.ndarray, k: int) -> np.ndarray:
    """Row-wise mean of the k smallest entries of a distance matrix."""
    n_ref = distances.shape[1]
    if k >= n_ref:
        return distances.mean(axis=1)
    smallest = np.partition(distances, k - 1, axis=1)[:, :k]
    return smallest.mean(axis=1)


def score(observation, cfg: ScorerConfig) -> float:
    """Anomaly score of one observation against ``cfg.reference``.

    Returns the mean of the ``cfg.k`` smallest cosine distances from the
    observation to the reference vectors. Ties at the k-th distance do not
    affect the result: tied values are equal, so any selection of them
    yields the same mean.
    """
    vec = validate_vector(observation)
    if vec.shape[0] != cfg.reference.dim:
        raise ValueError(
            f"dimension mismatch: observation has {vec.shape[0]}, reference has {cfg.reference.dim}"
        )
    dist = _distances_to_reference(vec[None, :], cfg)
    return float(_mean_k_smallest(dist, cfg.k)[0])


def score_set(observations: EmbeddingSet, cfg: ScorerConfig) -> np.ndarray:
    """Anomaly score for every vector of a set, in input order.

    Equivalent to mapping :func:`score` over the set; computed as one matrix
    product for speed.
    """
    if observations.dim != cfg.reference.dim:
        raise ValueError(
            f"dimension mismatch: observations have {observations.dim}, "
            f"reference has {cfg.reference.dim}"
        )
    dist = _distances_to_reference(observations.array, cfg)
    return _mean_k_smallest(dist, cfg.k)


def brute_force_score(observation, cfg: ScorerConfig) -> float:
    """Reference implementation of :func:`score` by exhaustive enumeration.

    Materializes every pairwise distance with the scalar primitive, fully
    sorts the list, and averages the first k entries. Deliberately avoids
    partial selection and shared code with the fast path.
    """
    vec = validate_vector(observation)
    if vec.shape[0] != cfg.reference.dim:
        raise ValueError(
            f"dimension mismatch: observation has {vec.shape[0]}, reference has {cfg.reference.dim}"
        )
    distances = [cosine_distance(vec, ref_vec) for ref_vec in cfg.reference]
    distances.sort()
    return float(np.mean(distances[: cfg.k]))
