"""
Simulating event frames from a synthetic video
==============================================

An event camera reports per-pixel brightness changes instead of full
frames.  Here we fake one: build a tiny video of a bright square
sliding over a dark background, then difference consecutive frames in
log-intensity space.  Pixels whose log intensity moved by more than a
contrast threshold emit events; the counts land in a 2-D event frame.
"""

import numpy as np

from evstu.events import Frame, SimConfig, event_density, simulate_sequence

np.set_printoptions(linewidth=120)

# ---------------------------------------------------------------------------
# 1. a 12-frame video: an 8x8 bright square crossing a 24x24 frame

HEIGHT = WIDTH = 24
frames = []
for t in range(12):
    pixels = np.full((HEIGHT, WIDTH), 0.15)
    x = 2 + t  # one pixel of motion per frame
    pixels[8:16, x : x + 8] = 0.9
    frames.append(Frame(index=t, pixels=pixels))

print(f"video: {len(frames)} frames of {WIDTH}x{HEIGHT}")

# ---------------------------------------------------------------------------
# 2. simulate events with the default contrast thresholds (0.2 per polarity)

cfg = SimConfig()
events = simulate_sequence(frames, cfg)
print(f"simulated {len(events)} event frames (always one fewer than frames)")

# Only the leading and trailing edges of the square change, so events
# concentrate in two 1-pixel columns per step.
ev = events[0]
active = np.flatnonzero(ev.counts.sum(axis=0))
print(f"event frame 1: active columns {active.tolist()}")
print(f"counts at the leading edge:\n{ev.counts[8:16, active[0]:active[-1] + 1]}")

# ---------------------------------------------------------------------------
# 3. event density: one scalar per event frame, the mean count per pixel

densities = [event_density(ev) for ev in events]
print("\ndensity per event frame (constant motion -> constant density):")
print(np.round(densities, 4))

# ---------------------------------------------------------------------------
# 4. thresholds control sensitivity: doubling them can only lose events

coarse_cfg = SimConfig(pos_threshold=0.4, neg_threshold=0.4)
coarse = simulate_sequence(frames, coarse_cfg)
print("\ntotal events at threshold 0.2:", sum(int(e.counts.sum()) for e in events))
print("total events at threshold 0.4:", sum(int(e.counts.sum()) for e in coarse))

# A static pair produces nothing at all.
static = simulate_sequence([frames[0], frames[0]], cfg)
print("static pair total events:", int(static[0].counts.sum()))
