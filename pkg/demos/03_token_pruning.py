"""
Token budgets and two-stage pruning
===================================

Each kept frame enters the language model as a grid of visual tokens
(14x14 = 196 by default).  Under a global token budget, more relevant
frames keep more tokens.  Inside a frame, pruning runs in two stages:

* physics: drop the tokens whose patches triggered the fewest events
  (static background costs nothing to remove);
* semantic: among the survivors, drop the tokens the vision encoder's
  attention cares least about.
"""

import numpy as np

from evstu.events import EventFrame, patch_density
from evstu.pruning import (
    PruningConfig,
    allocate_budgets,
    attention_summarize,
    prune_frame,
    split_ratios,
)

rng = np.random.default_rng(7)

# ---------------------------------------------------------------------------
# 1. budget allocation across four keyframes of uneven relevance

cfg = PruningConfig(prune_ratio=0.5, physics_cap=0.25, base_keep=0.05, tokens_per_frame=196)
norm_scores = np.array([0.05, 0.15, 0.30, 0.50])
budgets = allocate_budgets(norm_scores, cfg, frame_indices=[3, 11, 24, 37])

total = 0
for b in budgets:
    print(
        f"frame {b.frame_index:>2}: relevance {b.relevance:.2f} -> "
        f"keep {b.keep_final:>3}/196 tokens "
        f"(physics stage keeps {b.keep_physics}, prunes {b.physics_ratio:.0%}; "
        f"semantic prunes {b.semantic_ratio:.0%} of the rest)"
    )
    total += b.keep_final
print(f"total kept: {total} = round(4 * 196 * 0.5) exactly")

# The per-frame split always composes back to the frame's overall ratio.
p, s = split_ratios(budgets[0].prune_ratio, cfg.physics_cap)
print(f"check: (1-{p:.3f}) * (1-{s:.3f}) = {(1 - p) * (1 - s):.4f} "
      f"= 1 - {budgets[0].prune_ratio:.4f}")

# ---------------------------------------------------------------------------
# 2. a synthetic event frame: activity concentrated in one corner

counts = np.zeros((28, 28), dtype=np.uint16)
counts[4:16, 12:28] = rng.integers(3, 9, (12, 16)).astype(np.uint16)
saliency = patch_density(EventFrame(index=1, counts=counts), 7, 7)
print("\npatch event totals (7x7 grid):")
print(saliency.sums)

# ---------------------------------------------------------------------------
# 3. physics-only pruning under a harsh 75% budget: the kept tokens
#    trace the active 3x4 patch block exactly

budget = allocate_budgets(
    np.array([1.0]), PruningConfig(prune_ratio=0.75, tokens_per_frame=49)
)[0]
mask = prune_frame(saliency, None, budget)
print(f"\nphysics-only mask keeps {mask.kept}/{49} tokens:")
print(mask.keep.reshape(7, 7).astype(int))

# ---------------------------------------------------------------------------
# 4. add attention: the encoder cares about the lower-left corner instead

attn = rng.uniform(0.0, 0.2, (5, 49))
attn[:, 42:45] += 2.0  # three bottom-left patches dominate every query row
token_importance = attention_summarize(attn, num_tokens=49)

mask2 = prune_frame(saliency, token_importance, budget)
print(f"\ntwo-stage mask keeps {mask2.kept} tokens, "
      f"but only among the {budget.keep_physics} event-salient survivors:")
print(mask2.keep.reshape(7, 7).astype(int))
print("attention can only reorder what the physics stage kept, so a "
      "quiet corner stays pruned no matter how attended it is")
