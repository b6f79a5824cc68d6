import numpy as np
import pytest

from evstu.errors import ConfigError, DimensionError, InputError, ServiceError
from evstu.events import SimConfig, event_density, patch_density, simulate_sequence
from evstu.io import ScoreSidecar, load_score_sidecar, read_frames
from evstu.pipeline import (
    MANIFEST_SCHEMA,
    RunConfig,
    flops_ratio,
    manifest_to_json,
    run,
)
from evstu.pruning import PruningConfig, allocate_budgets, prune_frame
from evstu.sampling import SamplingConfig, bin_sample, cumulative_sample, normalize_scores
from tests.conftest import SCORES_PATH, VIDEO40_DIR, make_frame


@pytest.fixture(scope="module")
def video40():
    return read_frames(VIDEO40_DIR)


@pytest.fixture(scope="module")
def score_lookup():
    return load_score_sidecar(SCORES_PATH).as_lookup()


def fixture_config(**overrides):
    defaults = dict(
        sampling=SamplingConfig(rate=0.25, num_keyframes=4),
        pruning=PruningConfig(),
        flops_linear=1.0,
        flops_quadratic=1.0,
    )
    defaults.update(overrides)
    return RunConfig(**defaults)


def static_frames(count, value=0.5, size=(16, 16)):
    return [make_frame(t, np.full(size, value)) for t in range(count)]


# ---------------------------------------------------------------------------
# flops model


def test_flops_ratio_linear():
    assert flops_ratio(98, 196, 1.0, 0.0) == pytest.approx(0.5)


def test_flops_ratio_quadratic():
    assert flops_ratio(98, 196, 0.0, 1.0) == pytest.approx(0.25)


def test_flops_ratio_mixed():
    assert flops_ratio(2, 4, 1.0, 1.0) == pytest.approx(0.3)


def test_flops_ratio_rejects_bad_model():
    with pytest.raises(ConfigError):
        flops_ratio(10, 100, 0.0, 0.0)
    with pytest.raises(InputError):
        flops_ratio(10, 0, 1.0, 0.0)


# ---------------------------------------------------------------------------
# run configuration


def test_run_config_default_grid_is_square():
    assert RunConfig().token_grid() == (14, 14)


def test_run_config_non_square_needs_explicit_grid():
    with pytest.raises(ConfigError):
        RunConfig(pruning=PruningConfig(tokens_per_frame=200))
    cfg = RunConfig(pruning=PruningConfig(tokens_per_frame=200), grid_rows=10, grid_cols=20)
    assert cfg.token_grid() == (10, 20)


def test_run_config_grid_token_mismatch():
    with pytest.raises(ConfigError):
        RunConfig(grid_rows=10, grid_cols=10)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"event_source": "sensor"},
        {"scorer": "oracle"},
        {"grid_rows": 14},
        {"flops_linear": 0.0, "flops_quadratic": 0.0},
        {"flops_linear": -1.0},
    ],
)
def test_run_config_rejects(kwargs):
    with pytest.raises(ConfigError):
        RunConfig(**kwargs)


# ---------------------------------------------------------------------------
# degenerate inputs


def test_static_video_uniform_fallback():
    manifest = run(fixture_config(scorer="none"), static_frames(2))
    assert manifest["coarse_indices"] == [1]
    assert manifest["totals"]["frames_out"] == 1
    assert manifest["totals"]["frames_in"] == 2


def test_static_video_multi_frame_fallback():
    cfg = fixture_config(scorer="none", sampling=SamplingConfig(rate=0.5, num_keyframes=4))
    manifest = run(cfg, static_frames(5))
    # all-zero densities: uniformly spaced fallback over the 5 frames
    assert manifest["coarse_indices"] == [1, 3]
    assert [k["frame_index"] for k in manifest["keyframes"]] == [1, 3]
    assert manifest["keyframes"][0]["raw_score"] is None


def test_no_pruning_is_passthrough():
    cfg = fixture_config(
        scorer="none",
        pruning=PruningConfig(prune_ratio=0.0),
    )
    manifest = run(cfg, static_frames(4))
    assert manifest["token_ratio"] == pytest.approx(1.0)
    for mask in manifest["masks"]:
        assert all(v == 1 for v in mask["keep"])


def test_run_needs_two_frames():
    with pytest.raises(InputError):
        run(fixture_config(scorer="none"), static_frames(1))


# ---------------------------------------------------------------------------
# fixture video end to end


def test_fixture_manifest_selection(video40, score_lookup):
    manifest = run(fixture_config(), video40, question="q", score_lookup=score_lookup)
    assert manifest["schema"] == MANIFEST_SCHEMA
    assert manifest["coarse_indices"] == [7, 9, 12, 15, 24, 26, 28, 30]
    assert [k["frame_index"] for k in manifest["keyframes"]] == [7, 15, 26, 30]
    assert manifest["totals"] == {
        "frames_in": 40,
        "frames_coarse": 8,
        "frames_out": 4,
        "tokens_in": 784,
        "tokens_out": 392,
    }
    assert manifest["token_ratio"] == pytest.approx(0.5)
    assert sum(b["keep_final"] for b in manifest["budgets"]) == 392
    for k in manifest["keyframes"]:
        assert k["raw_score"] == pytest.approx(score_lookup[k["frame_index"]])
    for mask, budget in zip(manifest["masks"], manifest["budgets"]):
        assert sum(mask["keep"]) == budget["keep_final"]
        assert len(mask["keep"]) == 196


def test_fixture_matches_hand_composition(video40, score_lookup):
    """The pipeline equals the same stages composed by hand."""
    cfg = fixture_config()
    manifest = run(cfg, video40, question="q", score_lookup=score_lookup)

    events = simulate_sequence(video40, cfg.sim)
    densities = [event_density(ev) for ev in events]
    coarse = cumulative_sample(densities, cfg.sampling.rate)
    raw = np.array([score_lookup[int(t)] for t in coarse])
    fine = bin_sample(coarse, raw, cfg.sampling.num_keyframes)
    fine_raw = np.array([score_lookup[int(t)] for t in fine])
    budgets = allocate_budgets(
        normalize_scores(fine_raw), cfg.pruning, frame_indices=fine
    )

    assert manifest["coarse_indices"] == coarse.tolist()
    assert [k["frame_index"] for k in manifest["keyframes"]] == fine.tolist()
    assert [b["keep_final"] for b in manifest["budgets"]] == [b.keep_final for b in budgets]
    for entry, budget in zip(manifest["masks"], budgets):
        saliency = patch_density(events[budget.frame_index - 1], 14, 14)
        mask = prune_frame(saliency, None, budget)
        assert entry["keep"] == mask.keep.astype(int).tolist()


def test_fixture_run_deterministic(video40, score_lookup):
    cfg = fixture_config()
    first = manifest_to_json(run(cfg, video40, question="q", score_lookup=score_lookup))
    second = manifest_to_json(run(cfg, video40, question="q", score_lookup=score_lookup))
    assert first == second


def test_workers_do_not_change_output(video40, score_lookup):
    cfg = fixture_config()
    serial = run(cfg, video40, question="q", score_lookup=score_lookup)
    threaded = run(cfg, video40, question="q", score_lookup=score_lookup, workers=4)
    assert manifest_to_json(serial) == manifest_to_json(threaded)


def test_digest_tracks_inputs(video40, score_lookup):
    cfg = fixture_config()
    base = run(cfg, video40, question="q", score_lookup=score_lookup)
    other_question = run(cfg, video40, question="q2", score_lookup=score_lookup)
    assert base["input_digest"] != other_question["input_digest"]
    other_cfg = run(
        fixture_config(sampling=SamplingConfig(rate=0.5, num_keyframes=4)),
        video40,
        question="q",
        score_lookup=score_lookup,
    )
    assert base["input_digest"] != other_cfg["input_digest"]


# ---------------------------------------------------------------------------
# real event input


def test_real_events_match_simulated(video40, score_lookup):
    sim_cfg = fixture_config()
    events = simulate_sequence(video40, sim_cfg.sim)
    real_cfg = fixture_config(event_source="real")
    real = run(real_cfg, video40, question="q", events=events, score_lookup=score_lookup)
    simulated = run(sim_cfg, video40, question="q", score_lookup=score_lookup)
    assert real["coarse_indices"] == simulated["coarse_indices"]
    assert real["masks"] == simulated["masks"]


def test_real_events_misaligned_count(video40):
    cfg = fixture_config(event_source="real", scorer="none")
    events = simulate_sequence(video40, cfg.sim)[:-1]
    with pytest.raises(InputError):
        run(cfg, video40, events=events)


def test_real_events_wrong_shape():
    cfg = fixture_config(event_source="real", scorer="none")
    frames = static_frames(3)
    events = simulate_sequence(static_frames(3, size=(4, 4)), cfg.sim)
    with pytest.raises(DimensionError):
        run(cfg, frames, events=events)


def test_real_events_missing(video40):
    cfg = fixture_config(event_source="real", scorer="none")
    with pytest.raises(InputError):
        run(cfg, video40)


# ---------------------------------------------------------------------------
# scorer modes


def test_service_mode_uses_fetch(video40, score_lookup):
    cfg = fixture_config(scorer="service")

    def fetch(question, indices):
        return ScoreSidecar(
            question=question,
            frame_indices=tuple(indices),
            scores=tuple(score_lookup[i] for i in indices),
        )

    manifest = run(cfg, video40, question="q", fetch=fetch)
    baseline = run(fixture_config(), video40, question="q", score_lookup=score_lookup)
    assert manifest["coarse_indices"] == baseline["coarse_indices"]
    assert [k["frame_index"] for k in manifest["keyframes"]] == [
        k["frame_index"] for k in baseline["keyframes"]
    ]


def test_service_mode_falls_back_to_sidecar(video40, score_lookup):
    cfg = fixture_config(scorer="service")
    warnings = []

    def failing_fetch(question, indices):
        raise ServiceError("scorer down")

    manifest = run(
        cfg,
        video40,
        question="q",
        fetch=failing_fetch,
        score_lookup=score_lookup,
        warn=warnings.append,
    )
    assert [k["frame_index"] for k in manifest["keyframes"]] == [7, 15, 26, 30]
    assert len(warnings) == 1
    assert "falling back" in warnings[0]


def test_service_mode_without_fallback_raises(video40):
    cfg = fixture_config(scorer="service")

    def failing_fetch(question, indices):
        raise ServiceError("scorer down")

    with pytest.raises(ServiceError):
        run(cfg, video40, fetch=failing_fetch)
    with pytest.raises(ConfigError):
        run(cfg, video40)


def test_sidecar_mode_missing_frame(video40, score_lookup):
    partial = {k: v for k, v in score_lookup.items() if k != 12}
    with pytest.raises(InputError, match="12"):
        run(fixture_config(), video40, score_lookup=partial)


def test_sidecar_mode_requires_scores(video40):
    with pytest.raises(ConfigError):
        run(fixture_config(), video40)


# ---------------------------------------------------------------------------
# attention integration


def test_attention_changes_only_its_frame(video40, score_lookup, rng):
    cfg = fixture_config()
    base = run(cfg, video40, question="q", score_lookup=score_lookup)
    attn = {15: rng.random((3, 196))}
    manifest = run(cfg, video40, question="q", score_lookup=score_lookup, attention=attn)
    assert manifest["attention_frames"] == [15]
    by_frame = {m["frame_index"]: m["keep"] for m in manifest["masks"]}
    base_by_frame = {m["frame_index"]: m["keep"] for m in base["masks"]}
    assert by_frame[7] == base_by_frame[7]
    assert by_frame[26] == base_by_frame[26]
    assert by_frame[30] == base_by_frame[30]
    # budgets are attention-independent
    assert manifest["budgets"] == base["budgets"]


def test_attention_for_unselected_frame_ignored(video40, score_lookup, rng):
    cfg = fixture_config()
    attn = {2: rng.random((3, 196))}
    manifest = run(cfg, video40, question="q", score_lookup=score_lookup, attention=attn)
    assert manifest["attention_frames"] == []


def test_attention_with_class_token_column(video40, score_lookup, rng):
    cfg = fixture_config()
    attn = {15: rng.random((3, 197))}
    manifest = run(cfg, video40, question="q", score_lookup=score_lookup, attention=attn)
    assert manifest["attention_frames"] == [15]


# ---------------------------------------------------------------------------
# timings


def test_stage_timings_populated(video40, score_lookup):
    timings = {}
    run(fixture_config(), video40, question="q", score_lookup=score_lookup, stage_timings=timings)
    expected = {
        "events",
        "density",
        "coarse_sampling",
        "scoring",
        "fine_sampling",
        "allocation",
        "pruning",
        "manifest",
    }
    assert set(timings) == expected
    assert all(v >= 0.0 for v in timings.values())


def test_manifest_json_is_canonical(video40, score_lookup):
    manifest = run(fixture_config(), video40, question="q", score_lookup=score_lookup)
    text = manifest_to_json(manifest)
    assert text.endswith("\n")
    assert text.index('"budgets"') < text.index('"coarse_indices"')
