"""
The full pipeline on the committed fixture video
================================================

Ties the previous demos together with the pipeline entry point: a
40-frame video of a bright square that slides, rests, then slides
faster; a question sidecar scored per frame; and a config matching the
usual operating point (25% coarse rate, 4 keyframes, 50% token budget).

The result is a manifest: which frames survived, how many tokens each
keeps, the keep/drop mask per frame, and the overall compute saving.
The same run is available from the shell as

    evstu run --frames tests/fixtures/video40 \
        --scores tests/fixtures/scores.json \
        --config tests/fixtures/config.json \
        --question "where does the bright square stop?" \
        --manifest manifest.json
"""

import os

import numpy as np

from evstu.io import load_run_config, load_score_sidecar, read_frames
from evstu.pipeline import run

HERE = os.path.dirname(os.path.abspath(__file__))
FIXTURES = os.path.join(HERE, os.pardir, "tests", "fixtures")

# ---------------------------------------------------------------------------
# 1. load the inputs

frames = read_frames(os.path.join(FIXTURES, "video40"))
sidecar = load_score_sidecar(os.path.join(FIXTURES, "scores.json"))
config = load_run_config(os.path.join(FIXTURES, "config.json"))

print(f"video: {len(frames)} frames of {frames[0].width}x{frames[0].height}")
print(f"question: {sidecar.question!r}")

# ---------------------------------------------------------------------------
# 2. run everything, collecting per-stage timings

timings = {}
manifest = run(
    config,
    frames,
    question=sidecar.question,
    score_lookup=sidecar.as_lookup(),
    stage_timings=timings,
)

totals = manifest["totals"]
print(f"\ncoarse stage kept {totals['frames_coarse']}/{totals['frames_in']} frames: "
      f"{manifest['coarse_indices']}")
print("fine stage kept the per-bin best scored frames:")
for entry in manifest["keyframes"]:
    print(f"  frame {entry['frame_index']:>2}: raw score {entry['raw_score']:.3f}, "
          f"budget share {entry['norm_score']:.3f}")

# ---------------------------------------------------------------------------
# 3. budgets and masks

print("\ntoken budgets under the 50% global budget:")
for b in manifest["budgets"]:
    print(f"  frame {b['frame_index']:>2}: keep {b['keep_final']:>3}/196")
print(f"tokens: {totals['tokens_out']}/{totals['tokens_in']} "
      f"(ratio {manifest['token_ratio']:.3f}, "
      f"flops ratio {manifest['flops_ratio']:.3f})")

# Render the first keyframe's mask as a 14x14 ascii grid; the kept
# tokens trace the regions the square moved through.
mask = np.array(manifest["masks"][0]["keep"]).reshape(14, 14)
print(f"\nframe {manifest['masks'][0]['frame_index']} keep mask "
      f"({int(mask.sum())} tokens, # = kept):")
for row in mask:
    print("  " + "".join("#" if v else "." for v in row))

# ---------------------------------------------------------------------------
# 4. where the time went

print("\nstage timings:")
for name, seconds in timings.items():
    print(f"  {name:<16} {seconds * 1000.0:7.2f} ms")

print("\nrerunning produces byte-identical manifests; see tests/test_acceptance.py")
