"""Coarse-to-fine keyframe selection.

The coarse stage removes temporal redundancy from the full video using
the event-density series; the fine stage picks the question-relevant
keyframes among the coarse survivors using text-image similarity
scores supplied by an external scorer.

Index convention: the density series holds one value per event frame,
so ``densities[i]`` describes frame ``i + 1`` of the video.  All
sampling functions return 1-based frame indices for density-driven
strategies and plain frame indices when operating on explicit
candidate lists.
"""

import math
from dataclasses import dataclass

import numpy as np

from evstu.errors import ConfigError, EmptySelectionError, InputError

COARSE_STRATEGIES = ("cs", "uni", "top")
FINE_STRATEGIES = ("bin", "top")

# Shift added on top of the min-subtracted scores so the least relevant
# frame keeps a nonzero (but near-zero) share of the budget.
_SCORE_SHIFT = 1e-6


@dataclass(frozen=True)
class SamplingConfig:
    """Knobs of the two sampling stages.

    rate:            coarse sampling rate in (0, 1]
    num_keyframes:   number of keyframes the fine stage keeps
    coarse_strategy: "cs" (cumulative), "uni" (uniform) or "top" (densest)
    fine_strategy:   "bin" (per-bin argmax) or "top" (global top scores)
    """

    rate: float = 0.25
    num_keyframes: int = 32
    coarse_strategy: str = "cs"
    fine_strategy: str = "bin"

    def __post_init__(self):
        if not 0.0 < self.rate <= 1.0:
            raise ConfigError(f"sampling rate must be in (0, 1], got {self.rate}")
        if self.num_keyframes < 1:
            raise ConfigError(f"num_keyframes must be >= 1, got {self.num_keyframes}")
        if self.coarse_strategy not in COARSE_STRATEGIES:
            raise ConfigError(
                f"coarse_strategy must be one of {COARSE_STRATEGIES}, got {self.coarse_strategy!r}"
            )
        if self.fine_strategy not in FINE_STRATEGIES:
            raise ConfigError(
                f"fine_strategy must be one of {FINE_STRATEGIES}, got {self.fine_strategy!r}"
            )


@dataclass(frozen=True)
class KeyframeSelection:
    """Result of both sampling stages.

    ``fine_indices`` is a subset of ``coarse_indices``; ``norm_scores``
    sums to 1 and drives the per-frame token budgets downstream.
    ``raw_scores`` is None when no scorer was involved.
    """

    coarse_indices: np.ndarray
    fine_indices: np.ndarray
    raw_scores: np.ndarray | None
    norm_scores: np.ndarray


def _check_densities(densities):
    d = np.asarray(densities, dtype=np.float64)
    if d.ndim != 1 or d.size == 0:
        raise InputError(f"density series must be a non-empty 1-D sequence, got shape {d.shape}")
    if not np.all(np.isfinite(d)):
        raise InputError("density series contains non-finite values")
    if np.any(d < 0):
        raise InputError("density series contains negative values")
    return d


def coarse_target(num_densities, rate):
    """Number of frames the coarse stage aims to keep: ceil((M-1) * rate)."""
    return math.ceil(num_densities * rate)


def cumulative_sample(densities, rate):
    """Select frames by accumulating event density against a threshold.

    The threshold is the total density divided by the target frame
    count ceil((M-1) * rate).  Scanning the series in temporal order,
    a frame is emitted (and the accumulator reset) every time the
    accumulated density reaches the threshold.  Low-density stretches
    therefore still contribute frames, just at a lower rate.

    Returns 1-based frame indices in increasing order.  Raises
    EmptySelectionError when the series has no mass at all; callers
    are expected to fall back to uniform sampling.
    """
    d = _check_densities(densities)
    if not 0.0 < rate <= 1.0:
        raise InputError(f"sampling rate must be in (0, 1], got {rate}")
    values = d.tolist()
    # Sequential total, matching the scan's accumulation order: with a
    # positive total the final accumulated value then always reaches the
    # threshold, so at least one frame is emitted.
    total = 0.0
    for value in values:
        total += value
    if total <= 0.0:
        raise EmptySelectionError("density series is all zero; fall back to uniform sampling")
    threshold = total / coarse_target(d.size, rate)
    picked = []
    acc = 0.0
    for t, value in enumerate(values, start=1):
        acc += value
        if acc >= threshold:
            picked.append(t)
            acc = 0.0
    return np.asarray(picked, dtype=np.int64)


def uniform_sample(num_frames, count):
    """Evenly spaced frame indices: floor((k + 0.5) * M / count).

    Duplicates (possible only for count close to M) are removed while
    preserving order, so fewer than ``count`` indices may come back.
    """
    if not 1 <= count <= num_frames:
        raise InputError(f"count must be in [1, {num_frames}], got {count}")
    idx = ((np.arange(count) + 0.5) * num_frames / count).astype(np.int64)
    return np.unique(idx)


def top_density_sample(densities, count):
    """The ``count`` frames with the highest event density.

    Ties break toward the earlier frame; the result is sorted ascending.
    Returns 1-based frame indices like ``cumulative_sample``.
    """
    d = _check_densities(densities)
    if not 1 <= count <= d.size:
        raise InputError(f"count must be in [1, {d.size}], got {count}")
    order = np.argsort(-d, kind="stable")[:count]
    return np.sort(order + 1)


def _check_candidates(candidates, scores):
    cand = np.asarray(candidates, dtype=np.int64)
    sc = np.asarray(scores, dtype=np.float64)
    if cand.ndim != 1 or sc.ndim != 1 or cand.size != sc.size:
        raise InputError(
            f"candidates and scores must be 1-D and aligned, got {cand.shape} vs {sc.shape}"
        )
    if cand.size == 0:
        raise InputError("candidate list is empty")
    if not np.all(np.isfinite(sc)):
        raise InputError("similarity scores contain non-finite values")
    return cand, sc


def bin_sample(candidates, scores, num_keyframes):
    """Pick the best-scoring candidate from each of ``num_keyframes`` bins.

    The candidate list (in temporal order) is split into contiguous
    bins; when the list does not divide evenly the earlier bins are one
    element larger.  Within a bin, ties break toward the earlier frame.
    With ``num_keyframes`` or fewer candidates everything is returned.
    """
    cand, sc = _check_candidates(candidates, scores)
    if num_keyframes < 1:
        raise InputError(f"num_keyframes must be >= 1, got {num_keyframes}")
    n = cand.size
    if n <= num_keyframes:
        return np.sort(cand)
    base, extra = divmod(n, num_keyframes)
    picked = []
    start = 0
    for b in range(num_keyframes):
        size = base + (1 if b < extra else 0)
        stop = start + size
        best = start + int(np.argmax(sc[start:stop]))
        picked.append(cand[best])
        start = stop
    return np.sort(np.asarray(picked, dtype=np.int64))


def top_similarity_sample(candidates, scores, num_keyframes):
    """The ``num_keyframes`` candidates with the highest similarity.

    Ties break toward the earlier frame; result sorted ascending.
    """
    cand, sc = _check_candidates(candidates, scores)
    if num_keyframes < 1:
        raise InputError(f"num_keyframes must be >= 1, got {num_keyframes}")
    if cand.size <= num_keyframes:
        return np.sort(cand)
    order = np.argsort(-sc, kind="stable")[:num_keyframes]
    return np.sort(cand[order])


def normalize_scores(raw):
    """Turn raw similarity scores into a budget-sharing distribution.

    Scores are shifted so the minimum sits at a small positive value
    and then normalized to sum to 1.  The shift makes the result
    invariant to adding any constant to all raw scores, and keeps the
    least relevant frame's share near (but not exactly) zero.
    """
    r = np.asarray(raw, dtype=np.float64)
    if r.ndim != 1 or r.size == 0:
        raise InputError(f"raw scores must be a non-empty 1-D sequence, got shape {r.shape}")
    if not np.all(np.isfinite(r)):
        raise InputError("raw scores contain non-finite values")
    shifted = r - r.min() + _SCORE_SHIFT
    return shifted / shifted.sum()
