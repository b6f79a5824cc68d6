"""Keep/drop mask overlays for visual inspection.

Dropped patches are dimmed by a constant factor; kept patches stay
untouched except for a 1-pixel outline drawn along sides that border a
dropped patch.  A frame whose mask keeps everything therefore renders
exactly as the input.  Patch geometry matches ``patch_density``:
remainder rows/columns fold into the last patch row/column.
"""

import numpy as np
from PIL import Image

from evstu.errors import DimensionError, InputError

OUTLINE_VALUE = 255


def patch_spans(length, cells):
    """(start, stop) pixel spans of each patch row or column."""
    base = length // cells
    starts = np.arange(cells) * base
    stops = np.append(starts[1:], length)
    return list(zip(starts.tolist(), stops.tolist()))


def render_overlay(pixels, keep, grid_rows, grid_cols, dim=0.25):
    """Render one frame's mask overlay as an 8-bit grayscale image.

    pixels: H x W intensities in [0, 1]
    keep:   boolean mask of length grid_rows * grid_cols, raster order
    dim:    brightness factor applied to dropped patches
    """
    px = np.asarray(pixels, dtype=np.float64)
    mask = np.asarray(keep, dtype=bool).reshape(-1)
    if mask.size != grid_rows * grid_cols:
        raise InputError(
            f"mask length {mask.size} does not match grid {grid_rows}x{grid_cols}"
        )
    h, w = px.shape
    if grid_rows > h or grid_cols > w:
        raise DimensionError(
            f"patch grid {grid_rows}x{grid_cols} does not fit frame {h}x{w}"
        )
    if not 0.0 <= dim <= 1.0:
        raise InputError(f"dim factor must be in [0, 1], got {dim}")
    grid = mask.reshape(grid_rows, grid_cols)
    rows = patch_spans(h, grid_rows)
    cols = patch_spans(w, grid_cols)

    out = px * 255.0
    for r in range(grid_rows):
        for c in range(grid_cols):
            if not grid[r, c]:
                y0, y1 = rows[r]
                x0, x1 = cols[c]
                out[y0:y1, x0:x1] *= dim

    # Outline kept patches along edges they share with dropped patches.
    for r in range(grid_rows):
        for c in range(grid_cols):
            if not grid[r, c]:
                continue
            y0, y1 = rows[r]
            x0, x1 = cols[c]
            if r > 0 and not grid[r - 1, c]:
                out[y0, x0:x1] = OUTLINE_VALUE
            if r < grid_rows - 1 and not grid[r + 1, c]:
                out[y1 - 1, x0:x1] = OUTLINE_VALUE
            if c > 0 and not grid[r, c - 1]:
                out[y0:y1, x0] = OUTLINE_VALUE
            if c < grid_cols - 1 and not grid[r, c + 1]:
                out[y0:y1, x1 - 1] = OUTLINE_VALUE

    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def save_overlay(path, image):
    """Write an overlay image as PNG (no timestamps, byte-stable)."""
    Image.fromarray(image, mode="L").save(path, format="PNG")
