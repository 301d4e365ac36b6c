"""
Building a per-factor edit batch with the critic filter
=======================================================

Each nominal observation fans out to a batch of candidate edits of its
camera frames; a critic either picks the best candidate or discards the
observation. An observation survives only if every camera view passes.
This demo runs the whole loop against the in-process deterministic mock
backends (the production path swaps in HTTP endpoints for /edit and
/critique; nothing else changes).
"""

import io
import tempfile
from pathlib import Path

from PIL import Image

from shiftcast.editing import (
    CameraFrame,
    EditBatchConfig,
    Observation,
    build_factor_batch,
    create_critic_client,
    create_edit_client,
    render_prompt,
    short_instruction,
    write_batch_dir,
    zoom_center,
)

# Prompt templates are shipped as data files; placeholders get substituted,
# while image-slot markers like <image> stay for the transport layer.
prompt = render_prompt("background", {"target color": "blue"})
print("full prompt:")
print(f"  {prompt}\n")
print("critic-facing instruction:")
print(f"  {short_instruction('background', {'target color': 'blue'})}\n")


def png(color):
    buf = io.BytesIO()
    Image.new("RGB", (32, 24), color).save(buf, format="PNG")
    return buf.getvalue()


observations = [
    Observation(
        observation_id=f"obs{i:03d}",
        frames={
            "overhead": CameraFrame(png((200, 60 + i, 60))),
            "wrist": CameraFrame(png((60, 60, 200 - i))),
        },
    )
    for i in range(40)
]

# "mock:" URLs select seeded in-process backends: pure functions of
# (seed, request), so a rerun reproduces every byte.
config = EditBatchConfig(
    editor=create_edit_client("mock:", seed=11),
    critic=create_critic_client("mock:accept_rate=0.85", seed=11),
    templates="background",
    substitutions={"target color": "blue"},
    n_variants=4,
)
batch = build_factor_batch(observations, "blue_background", config)
print(
    f"factor {batch.factor}: retained {batch.retained_observation_count}/"
    f"{len(observations)} observations "
    f"({batch.discarded_count} discarded, {batch.failed_count} failed, "
    f"retention {batch.retention_rate:.2f})"
)

out_dir = Path(tempfile.mkdtemp()) / "blue_background"
write_batch_dir(batch, out_dir)
print(f"wrote {out_dir}/summary.json plus {len(batch.retained)} images")

# The table-height factor appends a deterministic center zoom to the chosen
# candidate: crop the central region, resample back to full size.
gradient = Image.new("RGB", (32, 24))
for x in range(32):
    for y in range(24):
        gradient.putpixel((x, y), (8 * x, 10 * y, 30))
buf = io.BytesIO()
gradient.save(buf, format="PNG")
original = buf.getvalue()
zoomed = zoom_center(original, "image/png", crop_fraction=0.8)
with Image.open(io.BytesIO(zoomed)) as img:
    print(f"\nzoom transform output size: {img.size} (unchanged), bytes differ: {zoomed != original}")
