"""
Coarse-to-fine keyframe selection
=================================

Long videos are mostly redundant.  The sampler works in two passes:

* coarse: walk the event-density series and emit a frame every time
  the accumulated density crosses a threshold, so busy stretches get
  dense coverage and static stretches get sparse coverage;
* fine: among the coarse survivors, keep the frames most similar to
  the question, spread over temporal bins so one burst of relevance
  cannot crowd out the rest of the video.
"""

import numpy as np

from evstu.sampling import (
    bin_sample,
    coarse_target,
    cumulative_sample,
    normalize_scores,
    top_density_sample,
    top_similarity_sample,
    uniform_sample,
)

rng = np.random.default_rng(42)

# ---------------------------------------------------------------------------
# 1. a density series with two activity bursts and dead air between them

M = 61  # frames; 60 event frames
densities = np.zeros(M - 1)
densities[8:16] = rng.uniform(2.0, 4.0, 8)     # early burst
densities[40:52] = rng.uniform(1.0, 5.0, 12)   # late burst
densities += rng.uniform(0.0, 0.08, M - 1)     # sensor noise

rate = 0.25
print(f"target: at most ceil({M - 1} * {rate}) = {coarse_target(M - 1, rate)} coarse frames")

# ---------------------------------------------------------------------------
# 2. three coarse strategies side by side

cs = cumulative_sample(densities, rate)
uni = uniform_sample(M, coarse_target(M - 1, rate))
top = top_density_sample(densities, coarse_target(M - 1, rate))

print(f"cumulative : {cs.tolist()}")
print(f"uniform    : {uni.tolist()}")
print(f"top-density: {top.tolist()}")

# Cumulative sampling tracks the bursts but still visits the quiet
# middle once enough mass accumulates; top-density ignores quiet
# stretches entirely; uniform ignores the signal.
in_bursts = np.sum((cs >= 9) & (cs <= 16)) + np.sum((cs >= 41) & (cs <= 52))
print(f"cumulative picks inside bursts: {in_bursts}/{cs.size}")

# ---------------------------------------------------------------------------
# 3. fine stage: question similarity over the coarse survivors

scores = rng.uniform(0.1, 0.4, cs.size)
scores[np.searchsorted(cs, 45):] += 0.5  # the question is about the late burst

keyframes = bin_sample(cs, scores, 4)
greedy = top_similarity_sample(cs, scores, 4)
print(f"\nbin sampling (4 bins)   : {keyframes.tolist()}")
print(f"pure top-4 by similarity: {greedy.tolist()}")
print("bin sampling keeps early coverage even when late scores dominate")

# ---------------------------------------------------------------------------
# 4. normalized scores become the token-budget shares downstream

lookup = dict(zip(cs.tolist(), scores.tolist()))
norm = normalize_scores(np.array([lookup[int(t)] for t in keyframes]))
print(f"\nnormalized relevance of the keyframes: {np.round(norm, 3).tolist()}")
print(f"sums to {norm.sum():.6f}; the least relevant frame keeps a near-zero share")
