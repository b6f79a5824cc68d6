export {
  ConfigError,
  EvstuError,
  FormatError,
  InputError,
  ServiceError,
  UsageError,
} from "./errors.js";
export {
  decodeEventBytes,
  encodeEventFrames,
  readEventFile,
  writeEventFile,
} from "./evf.js";
export type { EventFrames } from "./evf.js";
export { encodePgm, quantizeIntensities, writeFrameDir } from "./pgm.js";
export type { GrayFrame } from "./pgm.js";
export { cliCommand, invoke, invokeJson, withTempDir } from "./cli.js";
export type { InvokeOptions, InvokeResult } from "./cli.js";
export {
  allocateBudgets,
  binSample,
  cumulativeSample,
  eventDensities,
  eventDensity,
  maskArray,
  pruneFrame,
  run,
  simulateEventFrame,
  simulateEvents,
  version,
} from "./ops.js";
export type {
  AllocateOptions,
  BudgetEntry,
  FrameBudget,
  KeyframeEntry,
  Manifest,
  ManifestTotals,
  MaskEntry,
  PruneFrameOptions,
  RunOptions,
  RunResult,
  RunSummary,
  SimOptions,
} from "./ops.js";
