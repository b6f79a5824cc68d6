import numpy as np
import pytest

from evstu.errors import ConfigError, InputError
from evstu.events import PatchGrid
from evstu.pruning import (
    FrameBudget,
    PruningConfig,
    TokenMask,
    allocate_budgets,
    attention_summarize,
    physics_prune,
    prune_frame,
    round_half_up,
    semantic_prune,
    split_ratios,
)


def make_budget(n2, n1, frame_index=0):
    return FrameBudget(
        frame_index=frame_index,
        relevance=1.0,
        keep_final=n2,
        keep_physics=n1,
        prune_ratio=0.0,
        physics_ratio=0.0,
        semantic_ratio=0.0,
    )


# ---------------------------------------------------------------------------
# rounding


def test_round_half_up():
    assert round_half_up(0.5) == 1
    assert round_half_up(1.5) == 2
    assert round_half_up(2.5) == 3
    assert round_half_up(2.4) == 2
    assert round_half_up(-0.5) == 0
    assert round_half_up(-1.5) == -1
    assert round_half_up(196.0) == 196


# ---------------------------------------------------------------------------
# configuration


def test_pruning_config_defaults():
    cfg = PruningConfig()
    assert cfg.prune_ratio == pytest.approx(0.5)
    assert cfg.physics_cap == pytest.approx(0.25)
    assert cfg.base_keep == pytest.approx(0.05)
    assert cfg.tokens_per_frame == 196


@pytest.mark.parametrize(
    "kwargs",
    [
        {"prune_ratio": 1.0},
        {"prune_ratio": -0.1},
        {"physics_cap": 1.0},
        {"base_keep": 1.0},
        {"prune_ratio": 0.95, "base_keep": 0.05},
        {"tokens_per_frame": 0},
    ],
)
def test_pruning_config_rejects_bad_values(kwargs):
    with pytest.raises(ConfigError):
        PruningConfig(**kwargs)


# ---------------------------------------------------------------------------
# stage split


def test_split_below_cap_is_physics_only():
    assert split_ratios(0.15, 0.25) == (0.15, 0.0)
    assert split_ratios(0.25, 0.25) == (0.25, 0.0)
    assert split_ratios(0.0, 0.25) == (0.0, 0.0)


def test_split_above_cap():
    p, s = split_ratios(0.5, 0.25)
    assert p == pytest.approx(0.25)
    assert s == pytest.approx(1.0 / 3.0)


def test_split_composition_identity(rng):
    """Retained fractions of the two stages compose to the frame total."""
    for _ in range(500):
        k = float(rng.uniform(0.0, 0.999))
        cap = float(rng.uniform(0.0, 0.999))
        p, s = split_ratios(k, cap)
        assert 0.0 <= p <= cap + 1e-15
        assert 0.0 <= s < 1.0
        assert abs((1.0 - p) * (1.0 - s) - (1.0 - k)) < 1e-12


def test_split_rejects_out_of_range():
    with pytest.raises(InputError):
        split_ratios(1.0, 0.25)
    with pytest.raises(InputError):
        split_ratios(0.5, 1.0)


# ---------------------------------------------------------------------------
# budget allocation


def test_allocate_two_frame_example():
    budgets = allocate_budgets([0.25, 0.75], PruningConfig())
    assert [b.keep_final for b in budgets] == [54, 142]
    assert [b.keep_physics for b in budgets] == [147, 147]
    assert budgets[0].frame_index == 0 and budgets[1].frame_index == 1
    assert budgets[0].prune_ratio == pytest.approx(1.0 - 54 / 196)
    assert budgets[0].physics_ratio == pytest.approx(0.25)
    assert budgets[0].semantic_ratio == pytest.approx(0.6326530612244898)
    assert budgets[1].semantic_ratio == pytest.approx(0.03401360544217691)


def test_allocate_uniform_scores_no_pruning():
    cfg = PruningConfig(prune_ratio=0.0)
    budgets = allocate_budgets([0.5, 0.5], cfg)
    assert [b.keep_final for b in budgets] == [196, 196]
    assert [b.keep_physics for b in budgets] == [196, 196]
    assert budgets[0].physics_ratio == 0.0
    assert budgets[0].semantic_ratio == 0.0


def test_allocate_single_frame():
    budgets = allocate_budgets([1.0], PruningConfig())
    assert budgets[0].keep_final == 98
    assert budgets[0].keep_physics == 147


def test_allocate_clamps_and_redistributes():
    # frame 0 wants 504 tokens; it clamps at 196 and the surplus spreads
    # evenly over the three identical low-relevance frames
    cfg = PruningConfig(prune_ratio=0.3)
    budgets = allocate_budgets([0.97, 0.01, 0.01, 0.01], cfg)
    assert [b.keep_final for b in budgets] == [196, 118, 118, 117]
    assert sum(b.keep_final for b in budgets) == round_half_up(4 * 196 * 0.7)


def test_allocate_custom_frame_indices():
    budgets = allocate_budgets([0.25, 0.75], PruningConfig(), frame_indices=[15, 26])
    assert [b.frame_index for b in budgets] == [15, 26]


def test_allocate_conserves_budget(rng):
    for _ in range(50):
        mf = int(rng.integers(1, 40))
        n = int(rng.integers(4, 300))
        k = float(rng.uniform(0.0, 0.9))
        r = float(rng.uniform(0.0, min(0.99 - k, 0.3)))
        cfg = PruningConfig(prune_ratio=k, physics_cap=0.25, base_keep=r, tokens_per_frame=n)
        s = rng.dirichlet(np.ones(mf))
        budgets = allocate_budgets(s, cfg)
        target = round_half_up(mf * n * (1.0 - k))
        assert sum(b.keep_final for b in budgets) == target
        for b in budgets:
            assert 0 <= b.keep_final <= b.keep_physics <= n
            assert abs(
                (1.0 - b.physics_ratio) * (1.0 - b.semantic_ratio) - (1.0 - b.prune_ratio)
            ) < 1e-12


def test_allocate_monotone_in_relevance(rng):
    for _ in range(20):
        mf = int(rng.integers(2, 20))
        s = rng.dirichlet(np.ones(mf))
        budgets = allocate_budgets(s, PruningConfig())
        for i in range(mf):
            for j in range(mf):
                if s[i] - s[j] > 1e-12:
                    assert budgets[i].keep_final >= budgets[j].keep_final


def test_allocate_rejects_bad_scores():
    cfg = PruningConfig()
    with pytest.raises(InputError):
        allocate_budgets([0.5, 0.6], cfg)
    with pytest.raises(InputError):
        allocate_budgets([1.5, -0.5], cfg)
    with pytest.raises(InputError):
        allocate_budgets([], cfg)
    with pytest.raises(InputError):
        allocate_budgets([0.25, 0.75], cfg, frame_indices=[1])


# ---------------------------------------------------------------------------
# saliency stage


def test_physics_prune_basic_and_ties():
    mask = physics_prune([5.0, 1.0, 3.0, 3.0], 2)
    np.testing.assert_array_equal(mask.keep, [True, False, True, False])
    mask = physics_prune([5.0, 1.0, 3.0, 3.0], 3)
    np.testing.assert_array_equal(mask.keep, [True, False, True, True])


def test_physics_prune_keep_all_or_none():
    assert physics_prune([1.0, 2.0], 2).kept == 2
    assert physics_prune([1.0, 2.0], 0).kept == 0


def test_physics_prune_accepts_patch_grid():
    grid = PatchGrid(rows=2, cols=2, sums=np.array([[5, 1], [3, 3]]))
    mask = physics_prune(grid, 2, frame_index=9)
    assert mask.frame_index == 9
    np.testing.assert_array_equal(mask.keep, [True, False, True, False])


def test_physics_prune_rejects_bad_keep():
    with pytest.raises(InputError):
        physics_prune([1.0, 2.0], 3)
    with pytest.raises(InputError):
        physics_prune([1.0, 2.0], -1)


# ---------------------------------------------------------------------------
# attention summary


def test_attention_summarize_column_mean():
    out = attention_summarize([[0.2, 0.8], [0.4, 0.6]])
    np.testing.assert_allclose(out, [0.3, 0.7])


def test_attention_summarize_drops_class_token():
    attn = [[0.5, 0.25, 0.25], [0.2, 0.4, 0.4]]
    out = attention_summarize(attn, num_tokens=2)
    np.testing.assert_allclose(out, [0.5, 0.5])


def test_attention_summarize_exact_width_untouched():
    attn = [[0.3, 0.7], [0.1, 0.9]]
    out = attention_summarize(attn, num_tokens=2)
    np.testing.assert_allclose(out, [0.2, 0.8])


def test_attention_summarize_zero_row_stays_finite():
    attn = [[1.0, 0.0, 0.0], [0.5, 0.25, 0.25]]
    out = attention_summarize(attn, num_tokens=2)
    assert np.all(np.isfinite(out))
    np.testing.assert_allclose(out, [0.25, 0.25])


def test_attention_summarize_rejects_bad_input():
    with pytest.raises(InputError):
        attention_summarize([[0.5, -0.1]])
    with pytest.raises(InputError):
        attention_summarize([[0.5, np.nan]])
    with pytest.raises(InputError):
        attention_summarize([[0.5, 0.5]], num_tokens=4)
    with pytest.raises(InputError):
        attention_summarize(np.zeros((0, 3)))


# ---------------------------------------------------------------------------
# attention stage


def test_semantic_prune_ignores_dropped_tokens():
    stage_one = TokenMask(frame_index=0, keep=np.array([True, True, False, True]))
    # token 2 has the best score but was already dropped
    mask = semantic_prune(stage_one, [0.1, 0.9, 0.99, 0.5], 2)
    np.testing.assert_array_equal(mask.keep, [False, True, False, True])


def test_semantic_prune_tie_prefers_smaller_index():
    stage_one = TokenMask(frame_index=0, keep=np.ones(3, dtype=bool))
    mask = semantic_prune(stage_one, [0.5, 0.5, 0.5], 2)
    np.testing.assert_array_equal(mask.keep, [True, True, False])


def test_semantic_prune_keep_exceeds_alive():
    stage_one = TokenMask(frame_index=0, keep=np.array([True, False, True]))
    with pytest.raises(InputError):
        semantic_prune(stage_one, [0.1, 0.2, 0.3], 3)


def test_semantic_prune_shape_mismatch():
    stage_one = TokenMask(frame_index=0, keep=np.ones(3, dtype=bool))
    with pytest.raises(InputError):
        semantic_prune(stage_one, [0.1, 0.2], 1)


# ---------------------------------------------------------------------------
# full per-frame pruning


def test_prune_frame_two_stage():
    saliency = [9.0, 7.0, 5.0, 3.0, 1.0, 0.0]
    attention = [0.1, 0.9, 0.8, 0.99, 0.2, 0.3]
    mask = prune_frame(saliency, attention, make_budget(n2=2, n1=4, frame_index=5))
    assert mask.frame_index == 5
    np.testing.assert_array_equal(mask.keep, [False, True, False, True, False, False])


def test_prune_frame_saliency_only_fallback():
    saliency = [9.0, 7.0, 5.0, 3.0, 1.0, 0.0]
    mask = prune_frame(saliency, None, make_budget(n2=2, n1=4))
    np.testing.assert_array_equal(mask.keep, [True, True, False, False, False, False])


def test_prune_frame_inconsistent_budget():
    with pytest.raises(InputError):
        prune_frame([1.0, 2.0], None, make_budget(n2=2, n1=1))


def test_prune_frame_nested_and_sized(rng):
    for _ in range(100):
        n = int(rng.integers(1, 64))
        n1 = int(rng.integers(0, n + 1))
        n2 = int(rng.integers(0, n1 + 1))
        saliency = rng.integers(0, 6, size=n).astype(float)
        attention = rng.random(n)
        stage_one = physics_prune(saliency, n1)
        final = prune_frame(saliency, attention, make_budget(n2=n2, n1=n1))
        assert stage_one.kept == n1
        assert final.kept == n2
        # every finally kept token survived stage one
        assert np.all(stage_one.keep[final.keep])


def _prune_oracle(saliency, attention, n1, n2):
    """Reference two-stage pruning via explicit sorts."""
    n = len(saliency)
    stage_one = sorted(range(n), key=lambda i: (-saliency[i], i))[:n1]
    final = sorted(stage_one, key=lambda i: (-attention[i], i))[:n2]
    mask = np.zeros(n, dtype=bool)
    mask[final] = True
    return mask


def test_prune_frame_matches_oracle(rng):
    for _ in range(200):
        n = int(rng.integers(1, 48))
        n1 = int(rng.integers(0, n + 1))
        n2 = int(rng.integers(0, n1 + 1))
        saliency = rng.integers(0, 4, size=n).astype(float)
        attention = np.round(rng.random(n), 2)
        mask = prune_frame(saliency, attention, make_budget(n2=n2, n1=n1))
        np.testing.assert_array_equal(mask.keep, _prune_oracle(saliency, attention, n1, n2))
