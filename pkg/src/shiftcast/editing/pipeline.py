"""Per-factor edit batches: fan out edit jobs, filter with the critic, package results.

Each nominal observation is edited once per camera with the factor's prompt;
the critic either picks the best of the candidate batch or discards the
observation. An observation is retained only when *all* of its cameras pass
critique: downstream consumers embed the full multi-camera observation, so a
single failed view invalidates the whole thing.

Outcomes are three-valued. ``retained`` and ``discarded`` are critic
judgments and together define the retention rate; ``failed`` means the
services misbehaved (transport errors, malformed responses) and is tallied
separately so infrastructure trouble never masquerades as a quality signal.
"""

from __future__ import annotations

import io
import json
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from PIL import Image

from .clients import CritiqueVerdict, ProtocolError, TransportError
from .templates import (
    CRITIC_TEMPLATE,
    load_template,
    render_prompt,
    short_instruction,
)

log = logging.getLogger(__name__)

CAMERAS = ("overhead", "wrist")
DEFAULT_N_VARIANTS = 4
DEFAULT_ZOOM_FRACTION = 0.8
SMALL_BATCH = 30

RETAINED = "retained"
DISCARDED = "discarded"
FAILED = "failed"

_EXTENSIONS = {"image/png": ".png", "image/jpeg": ".jpg"}


class SmallBatchWarning(UserWarning):
    """A factor batch retained too few observations for stable downstream rates."""


@dataclass(frozen=True)
class CameraFrame:
    """One camera's image for an observation: opaque bytes plus media type."""

    image: bytes
    media_type: str = "image/png"


@dataclass(frozen=True)
class Observation:
    """A multi-camera observation to be edited; frames keyed by camera name."""

    observation_id: str
    frames: Mapping[str, CameraFrame]

    def __post_init__(self) -> None:
        if not self.frames:
            raise ValueError(f"observation {self.observation_id!r} has no frames")
        unknown = set(self.frames) - set(CAMERAS)
        if unknown:
            raise ValueError(f"unknown cameras {sorted(unknown)}; expected subset of {CAMERAS}")


@dataclass(frozen=True)
class EditJob:
    """One edit request: a single camera frame plus its rendered prompts."""

    observation_id: str
    camera: str
    image: bytes
    media_type: str
    factor: str
    full_prompt: str
    short_instruction: str
    n_variants: int = DEFAULT_N_VARIANTS

    def __post_init__(self) -> None:
        if self.camera not in CAMERAS:
            raise ValueError(f"camera must be one of {CAMERAS}, got {self.camera!r}")
        if not self.full_prompt:
            raise ValueError("full_prompt must be non-empty")
        if not self.short_instruction:
            raise ValueError("short_instruction must be non-empty")
        if self.n_variants < 1:
            raise ValueError(f"n_variants must be >= 1, got {self.n_variants}")


@dataclass(frozen=True)
class EditJobResult:
    """Outcome of one job: retained (with the chosen image), discarded, or failed."""

    observation_id: str
    camera: str
    status: str
    image: bytes | None = None
    media_type: str | None = None
    verdict: CritiqueVerdict | None = None
    error: str | None = None


@dataclass(frozen=True)
class RetainedFrame:
    observation_id: str
    camera: str
    image: bytes
    media_type: str


@dataclass(frozen=True)
class FactorEditBatch:
    """Critic-retained frames for one factor, plus discard/failure accounting.

    ``retention_rate`` counts whole observations and excludes failures:
    retained / (retained + discarded).
    """

    factor: str
    retained: tuple[RetainedFrame, ...]
    discarded_count: int
    failed_count: int
    retention_rate: float

    @property
    def retained_observation_count(self) -> int:
        return len({frame.observation_id for frame in self.retained})


@dataclass(frozen=True)
class EditBatchConfig:
    """Everything a factor batch needs besides the observations.

    ``templates`` maps camera name to template name (a plain string applies
    to every camera). ``apply_zoom=None`` enables the post-edit center zoom
    automatically for the ``table_height`` template; True/False forces it.
    ``max_in_flight`` bounds concurrent jobs against rate-limited remote
    services; the default of 1 keeps mock runs strictly sequential.
    """

    editor: object
    critic: object
    templates: str | Mapping[str, str] = "background"
    substitutions: Mapping[str, str] = field(default_factory=dict)
    n_variants: int = DEFAULT_N_VARIANTS
    apply_zoom: bool | None = None
    zoom_fraction: float = DEFAULT_ZOOM_FRACTION
    max_in_flight: int = 1

    def template_for(self, camera: str) -> str:
        if isinstance(self.templates, str):
            return self.templates
        if camera not in self.templates:
            raise ValueError(f"no template configured for camera {camera!r}")
        return self.templates[camera]

    def zoom_enabled(self, template_name: str) -> bool:
        if self.apply_zoom is not None:
            return self.apply_zoom
        return template_name == "table_height"


def zoom_center(image: bytes, media_type: str, crop_fraction: float = DEFAULT_ZOOM_FRACTION) -> bytes:
    """Crop the central ``crop_fraction`` of the image and resample to original size.

    Pure function of its inputs; output pixel dimensions always equal the
    input's. Simulates moving the scene closer to the camera.
    """
    if not 0.0 < crop_fraction <= 1.0:
        raise ValueError(f"crop_fraction must be in (0, 1], got {crop_fraction}")
    with Image.open(io.BytesIO(image)) as img:
        img.load()
        width, height = img.size
        crop_w = max(1, round(width * crop_fraction))
        crop_h = max(1, round(height * crop_fraction))
        left = (width - crop_w) // 2
        top = (height - crop_h) // 2
        cropped = img.crop((left, top, left + crop_w, top + crop_h))
        resized = cropped.resize((width, height), Image.Resampling.BILINEAR)
        buf = io.BytesIO()
        if media_type == "image/jpeg":
            resized.save(buf, format="JPEG", quality=90)
        else:
            resized.save(buf, format="PNG")
        return buf.getvalue()


def run_edit_job(job: EditJob, editor, critic, critic_prompt_template: str | None = None) -> EditJobResult:
    """Request candidates, submit them to the critic, and classify the outcome.

    Service trouble (transport errors after the client's bounded retries,
    malformed responses) yields ``failed``; an explicit critic rejection
    yields ``discarded``; acceptance returns the chosen candidate.
    """
    if critic_prompt_template is None:
        critic_prompt_template = load_template(CRITIC_TEMPLATE)
    try:
        candidates = editor.edit(job.image, job.media_type, job.full_prompt, job.n_variants)
        log.debug(
            "edit %s/%s: received %d candidates", job.observation_id, job.camera, len(candidates)
        )
        verdict = critic.critique(
            job.image, candidates, job.short_instruction, critic_prompt_template
        )
        log.debug(
            "critique %s/%s: accept=%s best=%s",
            job.observation_id,
            job.camera,
            verdict.accept,
            verdict.best_index,
        )
    except (TransportError, ProtocolError) as exc:
        log.warning("job %s/%s failed: %s", job.observation_id, job.camera, exc)
        return EditJobResult(job.observation_id, job.camera, FAILED, error=str(exc))
    if not verdict.accept:
        return EditJobResult(job.observation_id, job.camera, DISCARDED, verdict=verdict)
    return EditJobResult(
        job.observation_id,
        job.camera,
        RETAINED,
        image=candidates[verdict.best_index],
        media_type=job.media_type,
        verdict=verdict,
    )


def build_factor_batch(
    observations: Sequence[Observation], factor: str, config: EditBatchConfig
) -> FactorEditBatch:
    """Edit every observation for one factor and package the critic-retained frames.

    Jobs run per observation per camera (bounded concurrency, results
    collected in input order). An observation is retained only if every one
    of its cameras is retained; any camera failure marks the observation
    failed, otherwise any camera rejection marks it discarded.
    """
    critic_prompt_template = load_template(CRITIC_TEMPLATE)
    jobs: list[EditJob] = []
    for obs in observations:
        for camera in CAMERAS:
            if camera not in obs.frames:
                continue
            template_name = config.template_for(camera)
            frame = obs.frames[camera]
            jobs.append(
                EditJob(
                    observation_id=obs.observation_id,
                    camera=camera,
                    image=frame.image,
                    media_type=frame.media_type,
                    factor=factor,
                    full_prompt=render_prompt(template_name, config.substitutions),
                    short_instruction=short_instruction(template_name, config.substitutions),
                    n_variants=config.n_variants,
                )
            )

    def run(job: EditJob) -> EditJobResult:
        return run_edit_job(job, config.editor, config.critic, critic_prompt_template)

    if config.max_in_flight > 1:
        with ThreadPoolExecutor(max_workers=config.max_in_flight) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(job) for job in jobs]

    by_observation: dict[str, list[EditJobResult]] = {}
    for result in results:
        by_observation.setdefault(result.observation_id, []).append(result)

    retained: list[RetainedFrame] = []
    discarded = 0
    failed = 0
    for obs in observations:
        obs_results = by_observation[obs.observation_id]
        if any(r.status == FAILED for r in obs_results):
            failed += 1
            continue
        if any(r.status == DISCARDED for r in obs_results):
            discarded += 1
            continue
        for result in obs_results:
            image = result.image
            template_name = config.template_for(result.camera)
            if config.zoom_enabled(template_name):
                image = zoom_center(image, result.media_type, config.zoom_fraction)
            retained.append(
                RetainedFrame(result.observation_id, result.camera, image, result.media_type)
            )

    retained_obs = len({frame.observation_id for frame in retained})
    judged = retained_obs + discarded
    retention_rate = retained_obs / judged if judged else 0.0
    if retained_obs < SMALL_BATCH:
        warnings.warn(
            f"factor {factor!r} retained only {retained_obs} observations "
            f"({discarded} discarded, {failed} failed)",
            SmallBatchWarning,
            stacklevel=2,
        )
    return FactorEditBatch(
        factor=factor,
        retained=tuple(retained),
        discarded_count=discarded,
        failed_count=failed,
        retention_rate=retention_rate,
    )


def write_batch_dir(batch: FactorEditBatch, out_dir) -> Path:
    """Write a batch as a directory: images/ plus a summary.json index.

    Byte-deterministic for identical batches: fixed file naming, fixed JSON
    formatting, no timestamps.
    """
    out_dir = Path(out_dir)
    images_dir = out_dir / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for frame in batch.retained:
        ext = _EXTENSIONS.get(frame.media_type, ".bin")
        filename = f"{frame.observation_id}_{frame.camera}{ext}"
        (images_dir / filename).write_bytes(frame.image)
        entries.append(
            {
                "observation_id": frame.observation_id,
                "camera": frame.camera,
                "file": f"images/{filename}",
                "media_type": frame.media_type,
            }
        )
    summary = {
        "factor": batch.factor,
        "retained": entries,
        "retained_observation_count": batch.retained_observation_count,
        "discarded_count": batch.discarded_count,
        "failed_count": batch.failed_count,
        "retention_rate": batch.retention_rate,
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    return out_dir
