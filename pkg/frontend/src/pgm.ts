/**
 * Grayscale frame plumbing for the CLI boundary.
 *
 * The CLI ingests 8-bit image files and recovers intensity as
 * value / 255, so in-memory float intensities cross the boundary by
 * quantizing [0, 1] onto the 0..255 grid and writing binary PGM (P5).
 */

import { writeFileSync } from "node:fs";
import { join } from "node:path";

import { InputError } from "./errors.js";

/** One gray frame at the boundary: row-major bytes, intensity = pixels[i] / 255. */
export interface GrayFrame {
  width: number;
  height: number;
  pixels: Uint8Array;
}

/** Quantize [0, 1] intensities onto the CLI's 8-bit pixel grid (round, clamp). */
export function quantizeIntensities(values: Float32Array | Float64Array | number[]): Uint8Array {
  const out = new Uint8Array(values.length);
  for (let i = 0; i < values.length; i++) {
    const v = values[i];
    if (!Number.isFinite(v)) {
      throw new InputError(`intensity ${i} is not finite`);
    }
    out[i] = Math.min(255, Math.max(0, Math.round(v * 255)));
  }
  return out;
}

/** Encode one frame as binary PGM (P5, maxval 255). */
export function encodePgm(frame: GrayFrame): Uint8Array {
  const { width, height, pixels } = frame;
  if (!Number.isInteger(width) || width <= 0 || !Number.isInteger(height) || height <= 0) {
    throw new InputError(`frame size must be positive integers, got ${width}x${height}`);
  }
  if (pixels.length !== width * height) {
    throw new InputError(`frame has ${pixels.length} pixels, expected ${width}x${height} = ${width * height}`);
  }
  const header = new TextEncoder().encode(`P5\n${width} ${height}\n255\n`);
  const out = new Uint8Array(header.length + pixels.length);
  out.set(header, 0);
  out.set(pixels, header.length);
  return out;
}

/** Write frames as zero-padded .pgm files whose names sort temporally. */
export function writeFrameDir(dir: string, frames: GrayFrame[]): string[] {
  return frames.map((frame, i) => {
    const path = join(dir, `frame_${String(i).padStart(6, "0")}.pgm`);
    writeFileSync(path, encodePgm(frame));
    return path;
  });
}
