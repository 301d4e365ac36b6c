"""Acceptance gate: one test per release criterion, each printing a pass line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines. Every tolerance is fixed here; none are tuned at runtime.
"""

from __future__ import annotations

import math
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from shiftcast.calibration import calibrate, flagged_fraction
from shiftcast.editing.clients import (
    CriticProtocolError,
    MockCriticClient,
    MockEditClient,
    decode_critique_request,
    decode_critique_response,
    decode_edit_request,
    decode_edit_response,
    encode_critique_request,
    encode_critique_response,
    encode_edit_request,
    encode_edit_response,
)
from shiftcast.editing.pipeline import (
    FAILED,
    CameraFrame,
    EditBatchConfig,
    Observation,
    build_factor_batch,
    run_edit_job,
    write_batch_dir,
)
from shiftcast.evaluation import avg_prediction_error, evaluate, spearman_rho
from shiftcast.prediction import predict_all
from shiftcast.scoring import ScorerConfig, brute_force_score, score
from shiftcast.store import (
    EmbeddingDataError,
    EmbeddingFormatError,
    EmbeddingSet,
    load_embedding_set,
    save_embedding_set,
)
from shiftcast.synth import (
    ABLATION_CSV_HEADER,
    AblationGrid,
    FactorSpec,
    SynthWorldSpec,
    ablation_to_csv,
    generate_world,
    run_ablation,
)

from conftest import make_png

WIRE_FIXTURES = Path(__file__).parent / "fixtures" / "wire"


def report_pass(number: int, name: str, detail: str = "") -> None:
    suffix = f" ({detail})" if detail else ""
    print(f"[acceptance] criterion {number:02d} {name}: PASS{suffix}")


def test_01_knn_oracle_equivalence():
    """1,000 randomized instances: fast scorer equals the brute-force oracle."""
    gen = np.random.default_rng(20240817)
    started = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        dim = int(gen.choice([2, 16, 512]))
        n_ref = int(gen.integers(1, 301))
        k = int(gen.integers(1, n_ref + 1))
        reference = EmbeddingSet.from_array(
            "ref", gen.standard_normal((n_ref, dim)).astype(np.float32)
        )
        query = gen.standard_normal(dim)
        cfg = ScorerConfig(k=k, reference=reference)
        gap = abs(score(query, cfg) - brute_force_score(query, cfg))
        worst = max(worst, gap)
        assert gap <= 1e-6
    elapsed = time.perf_counter() - started
    assert elapsed < 10.0
    report_pass(1, "k-NN oracle equivalence", f"max gap {worst:.2e}, {elapsed:.1f}s")


def test_02_conformal_coverage():
    """Mean held-out flag rate over 100 seeds stays in [0.25, 0.38] at r_nom=0.65."""
    started = time.perf_counter()
    rates = []
    for seed in range(100):
        gen = np.random.default_rng(seed)
        result = calibrate(gen.standard_normal(200), 0.65)
        rates.append(flagged_fraction(gen.standard_normal(200), result.tau))
    mean_rate = float(np.mean(rates))
    elapsed = time.perf_counter() - started
    assert 0.25 <= mean_rate <= 0.38
    assert elapsed < 5.0
    report_pass(2, "conformal coverage", f"mean flag rate {mean_rate:.4f}, {elapsed:.1f}s")


def test_03_quantile_hand_cases():
    """Order-statistic index hand cases, exact."""
    nine = calibrate([0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9], 0.65)
    assert nine.quantile_index == 7
    assert nine.tau == 0.7
    seventy = calibrate(np.linspace(0.0, 1.0, 70), 0.65)
    assert seventy.quantile_index == 47
    full = calibrate([0.1, 0.2, 0.3], 1.0)
    assert full.tau == math.inf
    report_pass(3, "conformal quantile hand cases")


def test_04_spearman_golden_vectors():
    """Golden values, including a tied case against an exact-rational oracle."""
    assert spearman_rho([1, 2, 3], [10, 20, 30]) == 1.0
    assert spearman_rho([1, 2, 3], [30, 20, 10]) == -1.0
    assert spearman_rho([1, 2, 3, 4, 5], [1, 3, 2, 5, 4]) == pytest.approx(0.8, abs=1e-9)

    # Tied 4-element case, hand-computed: ranks of x are (1, 2.5, 2.5, 4),
    # ranks of y are (1, 2, 3, 4); Pearson of those ranks is 9/sqrt(90).
    x = [1.0, 2.0, 2.0, 4.0]
    y = [0.1, 0.2, 0.3, 0.4]
    rx = [Fraction(1), Fraction(5, 2), Fraction(5, 2), Fraction(4)]
    ry = [Fraction(1), Fraction(2), Fraction(3), Fraction(4)]
    mx = sum(rx, Fraction(0)) / 4
    my = sum(ry, Fraction(0)) / 4
    cov = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    vx = sum((a - mx) ** 2 for a in rx)
    vy = sum((b - my) ** 2 for b in ry)
    expected = float(cov) / math.sqrt(float(vx) * float(vy))
    assert spearman_rho(x, y) == pytest.approx(expected, abs=1e-12)
    report_pass(4, "Spearman golden vectors", f"tied case rho {expected:.6f}")


def test_05_avg_prediction_error_hand_cases():
    """Three hand cases with expectations from exact rational arithmetic."""
    cases = [
        ({"a": "0.6", "b": "0.2"}, {"a": "0.5", "b": "0.4"}),      # the 0.15 case
        ({"a": "0.75", "b": "0.25"}, {"a": "0.5", "b": "0.5"}),    # exactly representable
        ({"a": "0.9", "b": "0.3", "c": "0.6"}, {"a": "0.7", "b": "0.3", "c": "0.1"}),
    ]
    expected_fractions = [Fraction(3, 20), Fraction(1, 4), Fraction(7, 30)]
    for (measured_s, predicted_s), expected in zip(cases, expected_fractions):
        measured = {k: float(v) for k, v in measured_s.items()}
        predicted = {k: float(v) for k, v in predicted_s.items()}
        exact = sum(
            abs(Fraction(measured_s[k]) - Fraction(predicted_s[k])) for k in measured_s
        ) / len(measured_s)
        assert exact == expected
        assert avg_prediction_error(measured, predicted) == pytest.approx(float(exact), abs=1e-12)
    assert avg_prediction_error({"a": 0.75, "b": 0.25}, {"a": 0.5, "b": 0.5}) == 0.25
    report_pass(5, "average prediction error hand cases")


def _ladder_spec(seed: int, n_nominal: int) -> SynthWorldSpec:
    noise_scale = 0.02
    factors = tuple(
        FactorSpec(f"f{i:02d}", i * 3 * noise_scale, 100) for i in range(12)
    )
    return SynthWorldSpec(
        dim=512,
        n_nominal=n_nominal,
        n_val=200,
        factors=factors,
        noise_scale=noise_scale,
        seed=seed,
        r_nom=0.65,
    )


def test_06_end_to_end_synthetic_recovery(tmp_path):
    """12-factor ladder (shifts 3*noise_scale apart): ranking recovery across 100 seeds."""
    started = time.perf_counter()
    n_rho_pass = 0
    zero_shift_preds = []
    world_dir = tmp_path / "world"
    for seed in range(100):
        world = generate_world(_ladder_spec(seed, n_nominal=500), world_dir)
        report = predict_all(world.manifest, k=5)
        result = evaluate(report, world.true_success)
        if result.spearman_rho is not None and result.spearman_rho >= 0.9:
            n_rho_pass += 1
        zero_shift_preds.append(report.predictions[0].predicted_success)
    elapsed = time.perf_counter() - started
    mean_zero_shift = float(np.mean(zero_shift_preds))
    assert n_rho_pass >= 95
    assert abs(mean_zero_shift - 0.65) <= 0.1
    assert elapsed < 60.0
    report_pass(
        6,
        "end-to-end synthetic recovery",
        f"rho>=0.9 in {n_rho_pass}/100 seeds, zero-shift mean {mean_zero_shift:.3f}, {elapsed:.0f}s",
    )


def test_07_ablation_harness(tmp_path):
    """Full k x reference-size grid: stable rankings and exact CSV schema."""
    started = time.perf_counter()
    world = generate_world(_ladder_spec(7, n_nominal=3000), tmp_path / "world")
    grid = AblationGrid(k_values=(1, 5, 10), reference_sizes=(200, 500, 1000, 2000, 3000))
    cells = run_ablation(world.manifest, grid, seed=7)
    assert len(cells) == 15
    assert all(cell.valid for cell in cells)
    rhos = np.array([cell.spearman_rho for cell in cells])
    median = float(np.median(rhos))
    spread = float(np.abs(rhos - median).max())
    assert spread <= 0.15

    csv_text = ablation_to_csv(cells)
    lines = csv_text.strip().splitlines()
    assert lines[0] == ",".join(ABLATION_CSV_HEADER)
    assert len(lines) == 16
    for line, cell in zip(lines[1:], cells):
        k, size, rho, err = line.split(",")
        assert int(k) == cell.k
        assert int(size) == cell.reference_size
        assert float(rho) == pytest.approx(cell.spearman_rho, abs=1e-12)
        assert float(err) == pytest.approx(cell.avg_prediction_error, abs=1e-12)
    elapsed = time.perf_counter() - started
    assert elapsed < 300.0
    report_pass(
        7, "ablation harness", f"median rho {median:.3f}, max spread {spread:.3f}, {elapsed:.0f}s"
    )


def _edit_batch_observations(count: int) -> list[Observation]:
    return [
        Observation(
            observation_id=f"obs{i:03d}",
            frames={
                "overhead": CameraFrame(make_png(color=(i % 256, 30, 60))),
                "wrist": CameraFrame(make_png(color=(i % 256, 90, 20))),
            },
        )
        for i in range(count)
    ]


def test_08_edit_pipeline_determinism(tmp_path):
    """Two mock runs over 100 observations x 2 cameras produce identical directories."""
    observations = _edit_batch_observations(100)
    outputs = []
    for run in ("a", "b"):
        config = EditBatchConfig(
            editor=MockEditClient(seed=17),
            critic=MockCriticClient(seed=17, accept_rate=0.85),
            templates="background",
            substitutions={"target color": "blue"},
            n_variants=4,
        )
        batch = build_factor_batch(observations, "blue_background", config)
        outputs.append(write_batch_dir(batch, tmp_path / run))
    trees = []
    for out in outputs:
        trees.append(
            {str(p.relative_to(out)): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()}
        )
    assert trees[0] == trees[1]
    assert len(trees[0]) > 1

    # Conjunction rule: overhead accepted, wrist rejected -> observation discarded.
    from shiftcast.editing.clients import CritiqueVerdict

    class OverheadOnlyCritic:
        def critique(self, original, candidates, instruction, prompt_template):
            if instruction.endswith("hue"):
                return CritiqueVerdict(True, 0, "overhead ok")
            return CritiqueVerdict(False, None, "wrist rejected")

    config = EditBatchConfig(
        editor=MockEditClient(seed=17),
        critic=OverheadOnlyCritic(),
        templates={"overhead": "lighting_overhead", "wrist": "lighting_wrist"},
        substitutions={"target color": "blue"},
        n_variants=2,
    )
    with pytest.warns(UserWarning):
        batch = build_factor_batch(_edit_batch_observations(5), "blue_lighting", config)
    assert batch.retained == ()
    assert batch.discarded_count == 5
    report_pass(8, "edit pipeline determinism", f"{len(trees[0])} files byte-identical")


def test_09_wire_protocol_conformance():
    """Recorded fixtures round-trip bit-exactly; malformed critic output is a failure."""
    edit_request = (WIRE_FIXTURES / "edit_request.json").read_bytes()
    image, media_type, prompt, n_variants = decode_edit_request(edit_request)
    assert encode_edit_request(image, media_type, prompt, n_variants) == edit_request

    edit_response = (WIRE_FIXTURES / "edit_response.json").read_bytes()
    assert encode_edit_response(decode_edit_response(edit_response)) == edit_response

    critique_request = (WIRE_FIXTURES / "critique_request.json").read_bytes()
    original, candidates, instruction, template = decode_critique_request(critique_request)
    assert (
        encode_critique_request(original, candidates, instruction, template) == critique_request
    )

    for name in ("critique_response_accept.json", "critique_response_reject.json"):
        raw = (WIRE_FIXTURES / name).read_bytes()
        assert encode_critique_response(decode_critique_response(raw, 4)) == raw

    malformed = [
        b"not json",
        b'{"accept": true, "best_index": null, "reasoning": "x"}',
        b'{"accept": true, "best_index": 99, "reasoning": "x"}',
    ]
    for payload in malformed:
        with pytest.raises(CriticProtocolError):
            decode_critique_response(payload, n_candidates=4)

    class MalformedCritic:
        def critique(self, original, candidates, instruction, prompt_template):
            return decode_critique_response(b'{"accept": true}', len(candidates))

    from shiftcast.editing.pipeline import EditJob

    job = EditJob(
        observation_id="obs000",
        camera="overhead",
        image=make_png(),
        media_type="image/png",
        factor="f",
        full_prompt="p",
        short_instruction="s",
        n_variants=2,
    )
    result = run_edit_job(job, MockEditClient(seed=0), MalformedCritic(), "tmpl")
    assert result.status == FAILED
    report_pass(9, "wire protocol conformance")


def test_10_file_format_round_trip(tmp_path):
    """10,000 x 512 EMB1 file round-trips bit-identically; corrupt headers rejected."""
    gen = np.random.default_rng(99)
    arr = gen.standard_normal((10_000, 512)).astype(np.float32)
    original = EmbeddingSet.from_array("nominal", arr)
    path_a = tmp_path / "a.emb1"
    path_b = tmp_path / "b.emb1"
    save_embedding_set(original, path_a)
    reloaded = load_embedding_set(path_a, "nominal")
    save_embedding_set(reloaded, path_b)
    assert path_a.read_bytes() == path_b.read_bytes()
    assert reloaded.array.tobytes() == arr.tobytes()

    raw = bytearray(path_a.read_bytes())
    corrupt_magic = bytes(b"XXXX") + bytes(raw[4:])
    magic_path = tmp_path / "magic.emb1"
    magic_path.write_bytes(corrupt_magic)
    with pytest.raises(EmbeddingFormatError):
        load_embedding_set(magic_path, "x")

    corrupt_dim = bytearray(raw)
    corrupt_dim[12:16] = (513).to_bytes(4, "little")
    dim_path = tmp_path / "dim.emb1"
    dim_path.write_bytes(bytes(corrupt_dim))
    with pytest.raises(EmbeddingFormatError):
        load_embedding_set(dim_path, "x")

    zero_path = tmp_path / "zero.emb1"
    zero_payload = np.zeros((1, 4), dtype="<f4")
    import struct

    zero_path.write_bytes(struct.pack("<4sIII", b"EMB1", 1, 1, 4) + zero_payload.tobytes())
    with pytest.raises(EmbeddingDataError, match="zero vector at index 0"):
        load_embedding_set(zero_path, "x")
    report_pass(10, "EMB1 round trip and header rejection")
