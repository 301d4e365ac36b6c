from __future__ import annotations

import io

import numpy as np
import pytest
from PIL import Image

from shiftcast.store import EmbeddingSet


def random_rows(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    """Random float32 rows guaranteed nonzero (standard normal, renormalized)."""
    rows = rng.standard_normal((n, dim))
    rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    return rows.astype(np.float32)


def make_set(rng: np.random.Generator, n: int, dim: int, label: str = "test") -> EmbeddingSet:
    return EmbeddingSet.from_array(label, random_rows(rng, n, dim))


def make_png(width: int = 24, height: int = 16, color=(200, 60, 120)) -> bytes:
    buf = io.BytesIO()
    Image.new("RGB", (width, height), color).save(buf, format="PNG")
    return buf.getvalue()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
