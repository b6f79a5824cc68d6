import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

const here = dirname(fileURLToPath(import.meta.url));

/** Committed primary-toolkit fixture assets (40-frame video, scores, config). */
export const FIXTURES = join(here, "..", "..", "tests", "fixtures");
export const VIDEO40 = join(FIXTURES, "video40");
export const SCORES = join(FIXTURES, "scores.json");
export const CONFIG = join(FIXTURES, "config.json");

export const PACKAGE_JSON = join(here, "..", "package.json");

/** Deterministic 32-bit PRNG for reproducible fuzz cases. */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

const bitView = new DataView(new ArrayBuffer(8));

function orderedBits(x: number): bigint {
  bitView.setFloat64(0, x);
  const bits = bitView.getBigUint64(0);
  // Map sign-magnitude double ordering onto monotone integers.
  if (bits & 0x8000000000000000n) {
    return 0x8000000000000000n - (bits & 0x7fffffffffffffffn);
  }
  return 0x8000000000000000n + bits;
}

/** Distance in representable doubles between a and b (0 = identical bits). */
export function ulpDistance(a: number, b: number): number {
  if (Object.is(a, b)) return 0;
  if (!Number.isFinite(a) || !Number.isFinite(b)) return Number.MAX_SAFE_INTEGER;
  const diff = orderedBits(a) - orderedBits(b);
  const abs = diff < 0n ? -diff : diff;
  return abs > 1_000_000n ? Number.MAX_SAFE_INTEGER : Number(abs);
}
