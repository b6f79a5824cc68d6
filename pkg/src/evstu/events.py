"""Frames, event frames and event-density measures.

Event frames accumulate per-pixel brightness-change counts between two
consecutive video frames.  They can come from a real sensor (see
``evstu.io.read_event_file``) or be simulated here by log-intensity
differencing: intensities are linearized with an inverse gamma curve,
log-transformed, and the per-pixel change is divided by contrast
thresholds to obtain integer event counts.

Conventions used throughout the package:

* intensities live in [0, 1] and are treated as gamma-encoded,
* event frame ``t`` (1-based) covers the change from frame ``t-1`` to
  frame ``t``; a sequence of M frames yields M-1 event frames,
* counts are summed over both polarities and saturate at 65535 so they
  round-trip through the 16-bit on-disk format.
"""

from dataclasses import dataclass, field

import numpy as np

from evstu.errors import ConfigError, DimensionError, InputError

COUNT_SATURATION = 65535

# BT.601 luma weights for collapsing RGB to a single intensity channel.
_LUMA_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class SimConfig:
    """Parameters of the frame-differencing event simulator.

    gamma:          exponent linearizing the gamma-encoded intensities
    pos_threshold:  log-intensity step per positive event
    neg_threshold:  log-intensity step per negative event
    eps:            clamp floor keeping the log finite on black pixels
    """

    gamma: float = 2.2
    pos_threshold: float = 0.2
    neg_threshold: float = 0.2
    eps: float = 1e-5

    def __post_init__(self):
        for name in ("gamma", "pos_threshold", "neg_threshold", "eps"):
            if not float(getattr(self, name)) > 0.0:
                raise ConfigError(f"SimConfig.{name} must be > 0, got {getattr(self, name)}")


@dataclass(frozen=True)
class Frame:
    """One grayscale video frame with intensities in [0, 1]."""

    index: int
    pixels: np.ndarray = field(repr=False)

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.size == 0:
            raise DimensionError(f"frame pixels must be a non-empty 2-D array, got shape {px.shape}")
        if not np.issubdtype(px.dtype, np.floating):
            px = px.astype(np.float64)
        if not np.all(np.isfinite(px)):
            raise InputError(f"frame {self.index} contains non-finite intensities")
        if px.min() < 0.0 or px.max() > 1.0:
            raise InputError(f"frame {self.index} intensities outside [0, 1]")
        object.__setattr__(self, "pixels", px)

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]


@dataclass(frozen=True)
class EventFrame:
    """Per-pixel event counts between frames ``index-1`` and ``index``."""

    index: int
    counts: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 2 or c.size == 0:
            raise DimensionError(f"event counts must be a non-empty 2-D array, got shape {c.shape}")
        if c.dtype != np.uint16:
            if np.issubdtype(c.dtype, np.floating) and not np.all(np.isfinite(c)):
                raise InputError(f"event frame {self.index} contains non-finite counts")
            if np.any(c < 0) or np.any(c > COUNT_SATURATION):
                raise InputError(
                    f"event frame {self.index} counts outside [0, {COUNT_SATURATION}]"
                )
            c = c.astype(np.uint16)
        object.__setattr__(self, "counts", c)

    @property
    def height(self):
        return self.counts.shape[0]

    @property
    def width(self):
        return self.counts.shape[1]


@dataclass(frozen=True)
class PatchGrid:
    """Per-patch event-count totals over a rows x cols token grid."""

    rows: int
    cols: int
    sums: np.ndarray = field(repr=False)

    def __post_init__(self):
        s = np.asarray(self.sums, dtype=np.int64)
        if s.shape != (self.rows, self.cols):
            raise DimensionError(
                f"patch sums shape {s.shape} does not match grid {self.rows}x{self.cols}"
            )
        object.__setattr__(self, "sums", s)

    def raster(self):
        """Patch sums flattened in raster (row-major) order."""
        return self.sums.ravel()


def to_intensity(red, green, blue, index=0):
    """Collapse RGB channel grids to a grayscale Frame via BT.601 luma.

    All three channels must share one shape and hold values in [0, 1].
    """
    r = np.asarray(red, dtype=np.float64)
    g = np.asarray(green, dtype=np.float64)
    b = np.asarray(blue, dtype=np.float64)
    if not (r.shape == g.shape == b.shape):
        raise DimensionError(
            f"channel shapes differ: R{r.shape} G{g.shape} B{b.shape}"
        )
    wr, wg, wb = _LUMA_WEIGHTS
    luma = np.clip(wr * r + wg * g + wb * b, 0.0, 1.0)
    return Frame(index=index, pixels=luma)


def log_intensity(frame, cfg):
    """Linearized log intensity ln(clamp(I, eps, 1)^gamma) of a frame.

    Exposed separately so frame sequences can reuse each frame's log
    image instead of recomputing it for both sides of every pair.
    """
    clamped = np.clip(frame.pixels, cfg.eps, 1.0)
    return cfg.gamma * np.log(clamped)


def _counts_from_delta(delta, cfg):
    pos = np.floor(np.maximum(delta, 0.0) / cfg.pos_threshold)
    neg = np.floor(np.maximum(-delta, 0.0) / cfg.neg_threshold)
    total = np.minimum(pos + neg, COUNT_SATURATION)
    return total.astype(np.uint16)


def simulate_event_frame(prev, curr, cfg=None):
    """Simulate the event frame between two consecutive frames.

    Per pixel the log-intensity change ``dL`` is quantized into
    ``floor(max(0, dL)/pos_threshold)`` positive events plus
    ``floor(max(0, -dL)/neg_threshold)`` negative events; the event
    frame stores their sum, saturated at 65535.

    Raises DimensionError when the two frames disagree in shape.
    """
    cfg = cfg or SimConfig()
    if prev.pixels.shape != curr.pixels.shape:
        raise DimensionError(
            f"frame shapes differ: {prev.pixels.shape} vs {curr.pixels.shape}"
        )
    delta = log_intensity(curr, cfg) - log_intensity(prev, cfg)
    return EventFrame(index=curr.index, counts=_counts_from_delta(delta, cfg))


def simulate_sequence(frames, cfg=None):
    """Simulate event frames for a whole frame sequence.

    Equivalent to calling ``simulate_event_frame`` on every consecutive
    pair, but computes each frame's log image only once.  Returns M-1
    event frames for M input frames.
    """
    cfg = cfg or SimConfig()
    if len(frames) < 2:
        raise InputError(f"need at least 2 frames to simulate events, got {len(frames)}")
    out = []
    prev_log = log_intensity(frames[0], cfg)
    shape = frames[0].pixels.shape
    for frame in frames[1:]:
        if frame.pixels.shape != shape:
            raise DimensionError(
                f"frame {frame.index} shape {frame.pixels.shape} differs from {shape}"
            )
        curr_log = log_intensity(frame, cfg)
        out.append(EventFrame(index=frame.index, counts=_counts_from_delta(curr_log - prev_log, cfg)))
        prev_log = curr_log
    return out


def event_density(ev):
    """Mean event count per pixel of an event frame."""
    return float(ev.counts.sum(dtype=np.int64)) / ev.counts.size


def patch_density(ev, grid_rows, grid_cols):
    """Total event count inside each patch of a grid_rows x grid_cols grid.

    The frame is carved into patches of floor(H/rows) x floor(W/cols)
    pixels; remainder rows and columns are folded into the last patch
    row/column so every pixel is counted exactly once.
    """
    h, w = ev.counts.shape
    if grid_rows < 1 or grid_cols < 1 or grid_rows > h or grid_cols > w:
        raise DimensionError(
            f"patch grid {grid_rows}x{grid_cols} does not fit frame {h}x{w}"
        )
    row_starts = np.arange(grid_rows) * (h // grid_rows)
    col_starts = np.arange(grid_cols) * (w // grid_cols)
    sums = np.add.reduceat(
        np.add.reduceat(ev.counts.astype(np.int64), row_starts, axis=0),
        col_starts,
        axis=1,
    )
    return PatchGrid(rows=grid_rows, cols=grid_cols, sums=sums)
