/**
 * Bound operations: each stage of the preprocessing chain exposed as a
 * typed function delegating to the CLI, keeping this layer free of any
 * reimplemented numerics.  Contracts and defaults are exactly the
 * CLI's; failures surface as the matching EvstuError subclass.
 */

import { readFileSync } from "node:fs";
import { join } from "node:path";

import { invoke, invokeJson, withTempDir } from "./cli.js";
import { InputError } from "./errors.js";
import { EventFrames, readEventFile, writeEventFile } from "./evf.js";
import { GrayFrame, quantizeIntensities, writeFrameDir } from "./pgm.js";

/** Event simulation thresholds; defaults mirror the CLI. */
export interface SimOptions {
  gamma?: number;
  posThreshold?: number;
  negThreshold?: number;
  eps?: number;
}

function simArgs(options: SimOptions): string[] {
  const args: string[] = [];
  if (options.gamma !== undefined) args.push("--gamma", String(options.gamma));
  if (options.posThreshold !== undefined) args.push("--cp", String(options.posThreshold));
  if (options.negThreshold !== undefined) args.push("--cn", String(options.negThreshold));
  if (options.eps !== undefined) args.push("--eps", String(options.eps));
  return args;
}

function asGray(values: Float32Array | Uint8Array, width: number, height: number, name: string): GrayFrame {
  if (!Number.isInteger(width) || width <= 0 || !Number.isInteger(height) || height <= 0) {
    throw new InputError(`${name}: frame size must be positive integers, got ${width}x${height}`);
  }
  if (values.length !== width * height) {
    throw new InputError(
      `${name}: expected ${width}x${height} = ${width * height} row-major values, got ${values.length}`,
    );
  }
  const pixels = values instanceof Uint8Array ? values : quantizeIntensities(values);
  return { width, height, pixels };
}

/**
 * Event counts between two gray frames.
 *
 * Intensities cross the CLI boundary as 8-bit pixels: Float32Array
 * values in [0, 1] are quantized onto the 0..255 grid, Uint8Array
 * input is taken as already quantized.  Returns the height x width
 * row-major count grid.
 */
export function simulateEventFrame(
  prev: Float32Array | Uint8Array,
  curr: Float32Array | Uint8Array,
  width: number,
  height: number,
  options: SimOptions = {},
): Uint16Array {
  const pair = [asGray(prev, width, height, "prev"), asGray(curr, width, height, "curr")];
  return withTempDir((dir) => {
    writeFrameDir(dir, pair);
    const out = join(dir, "events.evf");
    invoke(["simulate", "--frames", dir, "--out", out, ...simArgs(options)]);
    return readEventFile(out).frames[0];
  });
}

/** Simulate events for a whole frame directory, writing an EVF1 file. */
export function simulateEvents(framesDir: string, outPath: string, options: SimOptions = {}): EventFrames {
  invoke(["simulate", "--frames", framesDir, "--out", outPath, ...simArgs(options)]);
  return readEventFile(outPath);
}

/** Mean event count per pixel of one count grid. */
export function eventDensity(counts: Uint16Array, width: number, height: number): number {
  if (counts.length !== width * height) {
    throw new InputError(`expected ${width}x${height} = ${width * height} counts, got ${counts.length}`);
  }
  return withTempDir((dir) => {
    const path = join(dir, "events.evf");
    writeEventFile(path, width, height, [counts]);
    const doc = invokeJson<{ densities: number[] }>(["density", "--events", path]);
    return doc.densities[0];
  });
}

/** Per-frame mean event densities of an EVF1 file. */
export function eventDensities(eventsPath: string): Float64Array {
  const doc = invokeJson<{ densities: number[] }>(["density", "--events", eventsPath]);
  return Float64Array.from(doc.densities);
}

/**
 * Threshold-crossing scan over a density series.
 *
 * Returns the 1-based frame indices the scan emits; the count never
 * exceeds ceil(len(densities) * rate).
 */
export function cumulativeSample(densities: ArrayLike<number>, rate: number): Uint32Array {
  const payload = JSON.stringify({ densities: Array.from(densities) });
  const doc = invokeJson<{ indices: number[] }>(
    ["sample", "--stage", "coarse", "--input", "-", "--rate", String(rate)],
    { stdin: payload },
  );
  return Uint32Array.from(doc.indices);
}

/** Per-temporal-bin argmax of candidate scores; returns sorted frame indices. */
export function binSample(candidates: ArrayLike<number>, scores: ArrayLike<number>, count: number): Uint32Array {
  const payload = JSON.stringify({ candidates: Array.from(candidates), scores: Array.from(scores) });
  const doc = invokeJson<{ indices: number[] }>(
    ["sample", "--stage", "fine", "--input", "-", "--count", String(count)],
    { stdin: payload },
  );
  return Uint32Array.from(doc.indices);
}

/** Per-keyframe token budget as reported by the CLI. */
export interface FrameBudget {
  frameIndex: number;
  relevance: number;
  keepPhysics: number;
  keepFinal: number;
  pruneRatio: number;
  physicsRatio: number;
  semanticRatio: number;
}

export interface AllocateOptions {
  pruneRatio?: number;
  physicsCap?: number;
  baseKeep?: number;
  tokensPerFrame?: number;
  frameIndices?: ArrayLike<number>;
}

/** Budget entry with the CLI's own snake_case field names. */
export interface BudgetEntry {
  frame_index: number;
  relevance: number;
  keep_physics: number;
  keep_final: number;
  prune_ratio: number;
  physics_ratio: number;
  semantic_ratio: number;
}

/**
 * Split the global token budget across keyframes by normalized
 * relevance (scores must sum to 1).
 */
export function allocateBudgets(scores: ArrayLike<number>, options: AllocateOptions = {}): FrameBudget[] {
  const body: Record<string, unknown> = { scores: Array.from(scores) };
  if (options.frameIndices !== undefined) body.frame_indices = Array.from(options.frameIndices);
  const args = ["prune", "--relevance", "-"];
  if (options.pruneRatio !== undefined) args.push("--prune-ratio", String(options.pruneRatio));
  if (options.physicsCap !== undefined) args.push("--physics-cap", String(options.physicsCap));
  if (options.baseKeep !== undefined) args.push("--base-keep", String(options.baseKeep));
  if (options.tokensPerFrame !== undefined) args.push("--tokens", String(options.tokensPerFrame));
  const doc = invokeJson<{ budgets: BudgetEntry[] }>(args, { stdin: JSON.stringify(body) });
  return doc.budgets.map((b) => ({
    frameIndex: b.frame_index,
    relevance: b.relevance,
    keepPhysics: b.keep_physics,
    keepFinal: b.keep_final,
    pruneRatio: b.prune_ratio,
    physicsRatio: b.physics_ratio,
    semanticRatio: b.semantic_ratio,
  }));
}

export interface PruneFrameOptions {
  /** queries x tokens attention matrix (may be one column wider with a class token). */
  attention?: number[][];
  /** Saliency-stage survivor count; the CLI defaults to all tokens when attention is given. */
  keepPhysics?: number;
  frameIndex?: number;
}

/**
 * Keep-mask for one frame: the top tokens by patch event saliency,
 * then, when attention is given, the best-attended among those
 * survivors.  Returns one 0/1 byte per token in raster order.
 */
export function pruneFrame(saliency: ArrayLike<number>, keep: number, options: PruneFrameOptions = {}): Uint8Array {
  if (options.attention !== undefined) {
    for (const [row, values] of options.attention.entries()) {
      if (!Array.isArray(values)) {
        throw new InputError(`attention must be 2-D (rows of numbers), row ${row} is not an array`);
      }
    }
  }
  const body: Record<string, unknown> = { saliency: Array.from(saliency) };
  if (options.attention !== undefined) body.attention = options.attention;
  if (options.frameIndex !== undefined) body.frame_index = options.frameIndex;
  const args = ["prune", "--saliency", "-", "--keep", String(keep)];
  if (options.keepPhysics !== undefined) args.push("--keep-physics", String(options.keepPhysics));
  const doc = invokeJson<{ keep: number[] }>(args, { stdin: JSON.stringify(body) });
  return Uint8Array.from(doc.keep);
}

/** Inputs for a full pipeline run; paths are handed to the CLI untouched. */
export interface RunOptions {
  framesDir: string;
  question?: string;
  configPath?: string;
  scoresPath?: string;
  eventsPath?: string;
  attentionPath?: string;
  masksOutDir?: string;
  workers?: number;
  /** Where to write the manifest; a temporary file when omitted. */
  manifestPath?: string;
}

export interface KeyframeEntry {
  frame_index: number;
  raw_score: number | null;
  norm_score: number;
}

export interface MaskEntry {
  frame_index: number;
  keep: number[];
}

export interface ManifestTotals {
  frames_in: number;
  frames_coarse: number;
  frames_out: number;
  tokens_in: number;
  tokens_out: number;
}

/** The pipeline manifest as serialized by the CLI (snake_case keys). */
export interface Manifest {
  schema: string;
  toolkit_version: string;
  question: string;
  config: Record<string, unknown>;
  input_digest: string;
  coarse_indices: number[];
  keyframes: KeyframeEntry[];
  budgets: BudgetEntry[];
  masks: MaskEntry[];
  attention_frames: number[];
  totals: ManifestTotals;
  token_ratio: number;
  flops_ratio: number;
}

export interface RunSummary {
  frames_in: number;
  frames_out: number;
  tokens_out: number;
  token_ratio: number;
  flops_ratio: number;
}

export interface RunResult {
  summary: RunSummary;
  manifest: Manifest;
  /** Raw manifest file text, byte-identical across reruns on identical inputs. */
  manifestJson: string;
}

/** Run the whole pipeline; returns the parsed manifest plus its canonical JSON. */
export function run(options: RunOptions): RunResult {
  const execute = (manifestPath: string): RunResult => {
    const args = ["run", "--frames", options.framesDir, "--manifest", manifestPath, "--format", "json"];
    if (options.question !== undefined) args.push("--question", options.question);
    if (options.configPath !== undefined) args.push("--config", options.configPath);
    if (options.scoresPath !== undefined) args.push("--scores", options.scoresPath);
    if (options.eventsPath !== undefined) args.push("--events", options.eventsPath);
    if (options.attentionPath !== undefined) args.push("--attention", options.attentionPath);
    if (options.masksOutDir !== undefined) args.push("--masks-out", options.masksOutDir);
    if (options.workers !== undefined) args.push("--workers", String(options.workers));
    const summary = invokeJson<RunSummary>(args);
    const manifestJson = readFileSync(manifestPath, "utf8");
    return { summary, manifest: JSON.parse(manifestJson) as Manifest, manifestJson };
  };
  if (options.manifestPath !== undefined) {
    return execute(options.manifestPath);
  }
  return withTempDir((dir) => execute(join(dir, "manifest.json")));
}

/** One manifest mask as bytes (1 keep, 0 drop). */
export function maskArray(entry: MaskEntry): Uint8Array {
  return Uint8Array.from(entry.keep);
}

/** Toolkit version reported by the CLI (mirrors this package's own version). */
export function version(): string {
  const { stdout } = invoke(["--version"]);
  const text = stdout.trim();
  const space = text.lastIndexOf(" ");
  return space < 0 ? text : text.slice(space + 1);
}
