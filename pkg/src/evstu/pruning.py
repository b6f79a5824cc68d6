"""Per-frame token budgets and keep/drop masks.

Budget allocation turns the normalized question-relevance scores of
the selected keyframes into integer per-frame token counts under a
global budget of ``round(M_f * N * (1 - prune_ratio))`` tokens.  Each
frame's pruning then runs in up to two stages: an event-saliency stage
that keeps the tokens whose patches triggered the most events, and an
attention stage that keeps the tokens with the highest query-averaged
vision-encoder attention among the survivors.  When no attention data
is available the saliency stage prunes directly to the final budget.
"""

from dataclasses import dataclass, field

import numpy as np

from evstu.errors import ConfigError, InputError

from evstu.events import PatchGrid


def round_half_up(x):
    """round() with deterministic half-up ties instead of banker's rounding."""
    return int(np.floor(x + 0.5))


@dataclass(frozen=True)
class PruningConfig:
    """Pruning knobs shared by all frames.

    prune_ratio:      overall fraction of tokens to drop (the budget is
                      1 - prune_ratio of all keyframe tokens)
    physics_cap:      largest per-frame ratio the saliency stage may prune
    base_keep:        per-frame floor of retained tokens, as a ratio
    tokens_per_frame: tokens produced per frame by the vision encoder
    """

    prune_ratio: float = 0.5
    physics_cap: float = 0.25
    base_keep: float = 0.05
    tokens_per_frame: int = 196

    def __post_init__(self):
        if not 0.0 <= self.prune_ratio < 1.0:
            raise ConfigError(f"prune_ratio must be in [0, 1), got {self.prune_ratio}")
        if not 0.0 <= self.physics_cap < 1.0:
            raise ConfigError(f"physics_cap must be in [0, 1), got {self.physics_cap}")
        if not 0.0 <= self.base_keep < 1.0:
            raise ConfigError(f"base_keep must be in [0, 1), got {self.base_keep}")
        if self.prune_ratio + self.base_keep >= 1.0:
            raise ConfigError(
                f"prune_ratio + base_keep must stay below 1, "
                f"got {self.prune_ratio} + {self.base_keep}"
            )
        if self.tokens_per_frame < 1:
            raise ConfigError(f"tokens_per_frame must be >= 1, got {self.tokens_per_frame}")


@dataclass(frozen=True)
class FrameBudget:
    """Integer token budget and stage ratios for one keyframe.

    keep_final (n2) tokens survive both stages, keep_physics (n1)
    survive the saliency stage; the ratios satisfy
    (1 - physics_ratio) * (1 - semantic_ratio) = 1 - prune_ratio.
    """

    frame_index: int
    relevance: float
    keep_final: int
    keep_physics: int
    prune_ratio: float
    physics_ratio: float
    semantic_ratio: float


@dataclass(frozen=True)
class TokenMask:
    """Boolean keep/drop decision per token of one frame, raster order."""

    frame_index: int
    keep: np.ndarray = field(repr=False)

    def __post_init__(self):
        k = np.asarray(self.keep, dtype=bool)
        if k.ndim != 1:
            raise InputError(f"token mask must be 1-D, got shape {k.shape}")
        object.__setattr__(self, "keep", k)

    @property
    def kept(self):
        return int(self.keep.sum())


def split_ratios(prune_ratio, physics_cap):
    """Split a frame's pruning ratio between the two stages.

    The saliency stage prunes at most ``physics_cap``; whatever mass
    remains goes to the attention stage so the retained fractions
    compose exactly: (1 - p) * (1 - s) = 1 - prune_ratio.
    """
    if not 0.0 <= prune_ratio < 1.0:
        raise InputError(f"prune_ratio must be in [0, 1), got {prune_ratio}")
    if not 0.0 <= physics_cap < 1.0:
        raise InputError(f"physics_cap must be in [0, 1), got {physics_cap}")
    if prune_ratio <= physics_cap:
        return float(prune_ratio), 0.0
    return float(physics_cap), 1.0 - (1.0 - prune_ratio) / (1.0 - physics_cap)


def _largest_remainder(real_counts, target_total, cap):
    """Integer counts summing exactly to target_total.

    Standard largest-remainder apportionment on the fractional parts,
    remainder ties (and any correction beyond them) going to earlier
    frames; no count may exceed ``cap``.
    """
    floors = np.floor(real_counts).astype(np.int64)
    remainders = real_counts - floors
    counts = floors.copy()
    deficit = int(target_total - floors.sum())
    if deficit > 0:
        order = np.argsort(-remainders, kind="stable")
        pos = 0
        while deficit > 0 and pos < order.size:
            i = order[pos]
            if counts[i] < cap:
                counts[i] += 1
                deficit -= 1
            pos += 1
        if deficit > 0:
            raise InputError("token budget exceeds frame capacity")
    elif deficit < 0:
        order = np.argsort(remainders, kind="stable")
        pos = 0
        while deficit < 0 and pos < order.size:
            i = order[pos]
            if counts[i] > 0:
                counts[i] -= 1
                deficit += 1
            pos += 1
    return counts


def allocate_budgets(norm_scores, cfg, frame_indices=None):
    """Allocate per-frame token budgets from normalized relevance scores.

    Each frame's real-valued retained count is its share of the
    allocable budget ``M_f * N * (1 - prune_ratio - base_keep)`` plus
    the flat floor ``base_keep * N``.  Shares above a full frame are
    clamped at N and the surplus redistributed proportionally among the
    unclamped frames; largest-remainder rounding then lands the integer
    counts on exactly ``round(M_f * N * (1 - prune_ratio))`` tokens.

    Returns one FrameBudget per score, in input order.
    """
    s = np.asarray(norm_scores, dtype=np.float64)
    if s.ndim != 1 or s.size == 0:
        raise InputError(f"norm_scores must be a non-empty 1-D sequence, got shape {s.shape}")
    if not np.all(np.isfinite(s)) or np.any(s < 0):
        raise InputError("norm_scores must be finite and non-negative")
    if abs(float(s.sum()) - 1.0) > 1e-9:
        raise InputError(f"norm_scores must sum to 1, got {s.sum()!r}")
    num_frames = s.size
    if frame_indices is None:
        frame_indices = np.arange(num_frames)
    else:
        frame_indices = np.asarray(frame_indices, dtype=np.int64)
        if frame_indices.shape != s.shape:
            raise InputError("frame_indices must align with norm_scores")

    n = cfg.tokens_per_frame
    allocable = num_frames * n * (1.0 - cfg.prune_ratio - cfg.base_keep)
    retained = allocable * s + cfg.base_keep * n

    # Clamp over-full frames at N and hand their surplus to the rest,
    # proportionally to current shares; repeats until no new frame clamps.
    clamped = np.zeros(num_frames, dtype=bool)
    for _ in range(num_frames):
        over = (retained > n) & ~clamped
        if not over.any():
            break
        surplus = float((retained[over] - n).sum())
        retained[over] = n
        clamped |= over
        free = ~clamped
        if not free.any():
            break
        weights = retained[free]
        total_weight = float(weights.sum())
        if total_weight <= 0.0:
            weights = np.ones(int(free.sum()))
            total_weight = float(weights.sum())
        retained[free] += surplus * weights / total_weight
    retained = np.clip(retained, 0.0, n)

    target = round_half_up(num_frames * n * (1.0 - cfg.prune_ratio))
    keep_final = _largest_remainder(retained, target, cap=n)

    budgets = []
    for i in range(num_frames):
        n2 = int(keep_final[i])
        frame_prune = 1.0 - n2 / n
        physics_ratio, semantic_ratio = split_ratios(frame_prune, cfg.physics_cap)
        n1 = round_half_up((1.0 - physics_ratio) * n)
        if n1 < n2:
            n1 = n2
        budgets.append(
            FrameBudget(
                frame_index=int(frame_indices[i]),
                relevance=float(s[i]),
                keep_final=n2,
                keep_physics=n1,
                prune_ratio=frame_prune,
                physics_ratio=physics_ratio,
                semantic_ratio=semantic_ratio,
            )
        )
    return budgets


def _as_saliency(saliency):
    if isinstance(saliency, PatchGrid):
        sal = saliency.raster()
    else:
        sal = np.asarray(saliency)
        if sal.ndim != 1:
            sal = sal.ravel()
    return sal.astype(np.float64)


def physics_prune(saliency, keep, frame_index=0):
    """Keep the ``keep`` tokens with the highest patch event counts.

    ``saliency`` is a PatchGrid or a flat array in raster order; ties
    break toward the smaller raster index.
    """
    sal = _as_saliency(saliency)
    n = sal.size
    if not 0 <= keep <= n:
        raise InputError(f"keep must be in [0, {n}], got {keep}")
    mask = np.zeros(n, dtype=bool)
    order = np.argsort(-sal, kind="stable")
    mask[order[:keep]] = True
    return TokenMask(frame_index=frame_index, keep=mask)


def attention_summarize(attn, num_tokens=None):
    """Per-token importance: the column mean of a queries x tokens matrix.

    When ``num_tokens`` is given and the matrix is one column wider, the
    first column is treated as a class token: it is dropped and each row
    renormalized to sum to 1 before averaging.
    """
    a = np.asarray(attn, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise InputError(f"attention matrix must be 2-D and non-empty, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InputError("attention matrix contains non-finite entries")
    if np.any(a < 0):
        raise InputError("attention matrix contains negative entries")
    if num_tokens is not None and a.shape[1] == num_tokens + 1:
        a = a[:, 1:].copy()
        row_sums = a.sum(axis=1, keepdims=True)
        np.divide(a, row_sums, out=a, where=row_sums > 0)
    if num_tokens is not None and a.shape[1] != num_tokens:
        raise InputError(
            f"attention matrix has {a.shape[1]} columns, expected {num_tokens} "
            f"(or {num_tokens + 1} with a class token)"
        )
    return a.mean(axis=0)


def semantic_prune(mask_in, scores, keep):
    """Among the tokens kept by ``mask_in``, keep the ``keep`` best-attended.

    Ties break toward the smaller raster index; dropped tokens stay
    dropped.  ``keep`` may not exceed the current mask population.
    """
    sc = np.asarray(scores, dtype=np.float64)
    if sc.ndim != 1 or sc.size != mask_in.keep.size:
        raise InputError(
            f"attention scores shape {sc.shape} does not match mask length {mask_in.keep.size}"
        )
    alive = np.flatnonzero(mask_in.keep)
    if not 0 <= keep <= alive.size:
        raise InputError(f"keep must be in [0, {alive.size}], got {keep}")
    order = np.argsort(-sc[alive], kind="stable")[:keep]
    mask = np.zeros(mask_in.keep.size, dtype=bool)
    mask[alive[order]] = True
    return TokenMask(frame_index=mask_in.frame_index, keep=mask)


def prune_frame(saliency, attention_scores, budget):
    """Produce one frame's token mask from its budget.

    Runs the saliency stage down to ``keep_physics`` tokens and the
    attention stage down to ``keep_final``.  With ``attention_scores``
    set to None the saliency stage prunes directly to ``keep_final``.
    """
    if not 0 <= budget.keep_final <= budget.keep_physics:
        raise InputError(
            f"inconsistent budget: keep_final {budget.keep_final} > "
            f"keep_physics {budget.keep_physics}"
        )
    if attention_scores is None:
        return physics_prune(saliency, budget.keep_final, frame_index=budget.frame_index)
    stage_one = physics_prune(saliency, budget.keep_physics, frame_index=budget.frame_index)
    return semantic_prune(stage_one, attention_scores, budget.keep_final)
