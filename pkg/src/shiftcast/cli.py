"""Command-line surface: calibrate, predict, evaluate, edit, synth, ablate.

Commands communicate only through files (manifest in, JSON/CSV out), so each
stage is independently runnable and testable, and predicting from real
off-nominal observations needs no special mode: point the manifest at the
real-observation embedding files. Every command is idempotent: rerunning
with identical inputs rewrites identical bytes. Warnings go to stderr and
never change the exit status; errors exit nonzero with the offending path in
the message.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

from . import synth as synth_mod
from .calibration import calibrate
from .editing.clients import create_critic_client, create_edit_client
from .editing.pipeline import (
    CAMERAS,
    CameraFrame,
    EditBatchConfig,
    Observation,
    build_factor_batch,
    write_batch_dir,
)
from .evaluation import evaluate, render_evaluation_table, write_evaluation
from .prediction import predict_all, write_report
from .scoring import ScorerConfig, score_set
from .store import load_manifest, load_manifest_sets

MOCK_URL = "mock:"


@dataclass(frozen=True)
class RunConfig:
    """Validated common options shared by the commands."""

    manifest_path: Path | None
    k: int
    r_nom_override: float | None
    output_dir: Path
    seed: int
    backend: str
    editor_url: str | None
    critic_url: str | None

    def __post_init__(self) -> None:
        if self.r_nom_override is not None and not 0.0 <= self.r_nom_override <= 1.0:
            raise ValueError(f"--r-nom must be in [0, 1], got {self.r_nom_override}")
        if self.backend == "remote" and not (self.editor_url and self.critic_url):
            raise ValueError("--backend remote requires both --editor-url and --critic-url")

    def resolve_endpoints(self) -> tuple[str, str]:
        if self.backend == "mock":
            return self.editor_url or MOCK_URL, self.critic_url or MOCK_URL
        return self.editor_url, self.critic_url


def _config_from_args(args) -> RunConfig:
    config = RunConfig(
        manifest_path=Path(args.manifest) if getattr(args, "manifest", None) else None,
        k=getattr(args, "k", 1),
        r_nom_override=getattr(args, "r_nom", None),
        output_dir=Path(args.out),
        seed=getattr(args, "seed", 0) or 0,
        backend=getattr(args, "backend", "mock"),
        editor_url=getattr(args, "editor_url", None),
        critic_url=getattr(args, "critic_url", None),
    )
    config.output_dir.mkdir(parents=True, exist_ok=True)
    return config


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def cmd_calibrate(args) -> int:
    config = _config_from_args(args)
    manifest = load_manifest(config.manifest_path)
    nominal, validation, _ = load_manifest_sets(manifest)
    cfg = ScorerConfig(k=config.k, reference=nominal)
    scores = score_set(validation, cfg)
    r_nom = manifest.r_nom if config.r_nom_override is None else config.r_nom_override
    result = calibrate(scores, r_nom)
    tau = result.tau
    if math.isinf(tau):
        tau = "inf" if tau > 0 else "-inf"
    doc = {
        "tau": tau,
        "quantile_index": result.quantile_index,
        "n_val": result.n_val,
        "r_nom": result.r_nom,
        "k": config.k,
        "validation_scores_sorted": [float(s) for s in result.validation_scores_sorted],
    }
    out_path = config.output_dir / "calibration.json"
    _write_json(out_path, doc)
    print(f"wrote {out_path}")
    return 0


def cmd_predict(args) -> int:
    config = _config_from_args(args)
    manifest = load_manifest(config.manifest_path)
    report = predict_all(manifest, config.k, r_nom_override=config.r_nom_override)
    out_path = config.output_dir / "report.json"
    write_report(report, out_path)
    for name in report.small_factors:
        print(f"warning: factor {name!r} has a small observation set", file=sys.stderr)
    print(f"wrote {out_path}")
    return 0


def cmd_evaluate(args) -> int:
    config = _config_from_args(args)
    manifest = load_manifest(config.manifest_path)
    if args.measured:
        measured = json.loads(Path(args.measured).read_text(encoding="utf-8"))
        measured = {str(k): float(v) for k, v in measured.items()}
    else:
        measured = manifest.measured_success
    if not measured:
        raise ValueError(
            f"{config.manifest_path}: no measured success rates "
            "(add measured_success to the manifest or pass --measured)"
        )
    report = predict_all(manifest, config.k, r_nom_override=config.r_nom_override)
    write_report(report, config.output_dir / "report.json")
    result = evaluate(report, measured)
    write_evaluation(result, config.output_dir / "evaluation.json")
    table = render_evaluation_table(result)
    (config.output_dir / "evaluation.txt").write_text(table, encoding="utf-8")
    print(table, end="")
    print(f"wrote {config.output_dir / 'evaluation.json'}")
    return 0


def _parse_substitutions(items: list[str]) -> dict[str, str]:
    subs: dict[str, str] = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"bad --sub {item!r}; expected key=value")
        subs[key.strip()] = value
    return subs


_OBS_EXTENSIONS = {".png": "image/png", ".jpg": "image/jpeg", ".jpeg": "image/jpeg"}


def _load_observations(obs_dir: Path) -> list[Observation]:
    """Observations from a directory of ``<observation_id>_<camera>.<ext>`` files."""
    frames: dict[str, dict[str, CameraFrame]] = {}
    for path in sorted(obs_dir.iterdir()):
        if path.suffix.lower() not in _OBS_EXTENSIONS:
            continue
        stem, sep, camera = path.stem.rpartition("_")
        if not sep or camera not in CAMERAS:
            raise ValueError(
                f"{path}: expected file name <observation_id>_<camera>{path.suffix} "
                f"with camera in {CAMERAS}"
            )
        frames.setdefault(stem, {})[camera] = CameraFrame(
            image=path.read_bytes(), media_type=_OBS_EXTENSIONS[path.suffix.lower()]
        )
    if not frames:
        raise ValueError(f"{obs_dir}: no observation images found")
    return [Observation(obs_id, cams) for obs_id, cams in sorted(frames.items())]


def cmd_edit(args) -> int:
    config = _config_from_args(args)
    observations = _load_observations(Path(args.obs_dir))
    templates: str | dict[str, str] = args.template
    if args.wrist_template:
        templates = {"overhead": args.template, "wrist": args.wrist_template}
    batch_config = EditBatchConfig(
        editor=create_edit_client(config.resolve_endpoints()[0], seed=config.seed),
        critic=create_critic_client(config.resolve_endpoints()[1], seed=config.seed),
        templates=templates,
        substitutions=_parse_substitutions(args.sub),
        n_variants=args.n_variants,
        max_in_flight=args.max_in_flight,
    )
    batch = build_factor_batch(observations, args.factor, batch_config)
    write_batch_dir(batch, config.output_dir)
    print(
        f"factor {args.factor}: retained {batch.retained_observation_count} observations, "
        f"discarded {batch.discarded_count}, failed {batch.failed_count} "
        f"(retention {batch.retention_rate:.2f})"
    )
    print(f"wrote {config.output_dir / 'summary.json'}")
    return 0


def cmd_synth(args) -> int:
    config = _config_from_args(args)
    doc = json.loads(Path(args.spec).read_text(encoding="utf-8"))
    if args.seed is not None:
        doc["seed"] = args.seed
    spec = synth_mod.spec_from_json_dict(doc)
    world = synth_mod.generate_world(spec, config.output_dir)
    print(f"wrote {world.manifest_path}")
    return 0


def cmd_ablate(args) -> int:
    config = _config_from_args(args)
    manifest = load_manifest(config.manifest_path)
    if config.r_nom_override is not None:
        manifest = dataclasses.replace(manifest, r_nom=config.r_nom_override)
    grid = synth_mod.grid_from_json_dict(json.loads(Path(args.grid).read_text(encoding="utf-8")))
    cells = synth_mod.run_ablation(manifest, grid, seed=config.seed)
    out_path = config.output_dir / "ablation.csv"
    synth_mod.write_ablation_csv(cells, out_path)
    print(f"wrote {out_path}")
    return 0


def _add_common(parser, manifest=True, k=True) -> None:
    if manifest:
        parser.add_argument("--manifest", required=True, help="manifest JSON path")
    if k:
        parser.add_argument("--k", type=int, default=5, help="neighbor count (default 5)")
    parser.add_argument("--r-nom", dest="r_nom", type=float, default=None,
                        help="override the manifest's nominal success rate")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=0, help="run seed (default 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shiftcast",
        description="Predict per-factor policy performance degradation from embedding anomaly rates.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="score the validation set and compute the anomaly threshold")
    _add_common(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("predict", help="calibrate, then predict success per factor")
    _add_common(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="predict, then compare against measured success rates")
    _add_common(p)
    p.add_argument("--measured", default=None, help="JSON file of factor -> measured success rate")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("edit", help="generate a critic-filtered edit batch for one factor")
    _add_common(p, manifest=False, k=False)
    p.add_argument("--factor", required=True, help="factor name for the batch")
    p.add_argument("--template", required=True, help="prompt template name")
    p.add_argument("--wrist-template", default=None,
                   help="template for the wrist camera when it differs from --template")
    p.add_argument("--sub", action="append", default=[], metavar="KEY=VALUE",
                   help="template substitution (repeatable)")
    p.add_argument("--obs-dir", required=True,
                   help="directory of <observation_id>_<camera>.png|jpg inputs")
    p.add_argument("--n-variants", type=int, default=4, help="edit candidates per request")
    p.add_argument("--max-in-flight", type=int, default=1, help="bounded job concurrency")
    p.add_argument("--backend", choices=("mock", "remote"), default="mock")
    p.add_argument("--editor-url", default=None, help="edit service base URL (or mock:...)")
    p.add_argument("--critic-url", default=None, help="critic service base URL (or mock:...)")
    p.set_defaults(func=cmd_edit)

    p = sub.add_parser("synth", help="generate a synthetic world with known ground truth")
    p.add_argument("--spec", required=True, help="world spec JSON path")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the spec's seed")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ablate", help="sweep k and reference size on a manifest with measured rates")
    _add_common(p, k=False)
    p.add_argument("--grid", required=True, help="grid JSON: {k_values: [...], reference_sizes: [...]}")
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - single surfacing point for CLI errors
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
