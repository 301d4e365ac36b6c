"""
Embedding sets on disk: the EMB1 container and cosine distance
===============================================================

Embeddings arrive precomputed, one float32 vector per observation. This demo
writes a small set to the EMB1 binary container, reads it back bit-identically,
and exercises the cosine-distance primitive everything downstream builds on.
"""

import tempfile
from pathlib import Path

import numpy as np

from shiftcast import EmbeddingSet, cosine_distance, load_embedding_set, save_embedding_set

rng = np.random.default_rng(0)

# A labelled set is just a (count, dim) float32 matrix. Zero vectors and
# non-finite coordinates are rejected at construction: cosine distance is
# undefined on them.
vectors = rng.standard_normal((100, 512)).astype(np.float32)
nominal = EmbeddingSet.from_array("nominal", vectors)
print(f"built set {nominal.label!r}: {len(nominal)} vectors, dim {nominal.dim}")

workdir = Path(tempfile.mkdtemp())
path = workdir / "nominal.emb1"
save_embedding_set(nominal, path)
print(f"wrote {path} ({path.stat().st_size} bytes: 16-byte header + count*dim*4)")

reloaded = load_embedding_set(path, expected_label="nominal")
assert reloaded.array.tobytes() == nominal.array.tobytes()
print("reload is bit-identical")

# Cosine distance: 0 for aligned vectors, 1 for orthogonal, 2 for antipodal.
# Positive rescaling never matters; only direction does.
print("\ncosine distance examples")
print("  aligned      :", cosine_distance([1, 0], [2, 0]))
print("  orthogonal   :", cosine_distance([1, 0], [0, 1]))
print("  antipodal    :", cosine_distance([1, 0], [-1, 0]))
print("  scaled pair  :", cosine_distance([3, 4], [6, 8]))

d = cosine_distance(nominal.array[0], nominal.array[1])
print(f"  two random 512-dim vectors: {d:.4f} (high-dimensional vectors are nearly orthogonal)")
