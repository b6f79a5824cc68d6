/**
 * Low-level launcher for the toolkit CLI.
 *
 * Every binding goes through here: spawn an `evstu` subcommand, feed
 * the JSON payload on stdin, collect stdout and map nonzero exit codes
 * onto the error hierarchy.  The EVSTU_CLI environment variable
 * overrides the launch command (whitespace-split); the default is
 * `python3 -m evstu`.
 */

import { spawnSync } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { ConfigError, EvstuError, InputError, ServiceError, UsageError } from "./errors.js";

export interface InvokeOptions {
  /** JSON payload piped to stdin (subcommands read it via `--input -` and friends). */
  stdin?: string;
  /** Extra environment variables for this invocation. */
  env?: Record<string, string>;
}

export interface InvokeResult {
  stdout: string;
  stderr: string;
}

/** The CLI launch command: EVSTU_CLI override or `python3 -m evstu`. */
export function cliCommand(): string[] {
  const override = process.env.EVSTU_CLI;
  if (override && override.trim() !== "") {
    return override.trim().split(/\s+/);
  }
  return ["python3", "-m", "evstu"];
}

function classify(status: number, message: string): EvstuError {
  switch (status) {
    case 2:
      return new UsageError(message);
    case 3:
      return new InputError(message);
    case 4:
      return new ConfigError(message);
    case 5:
      return new ServiceError(message);
    default:
      return new EvstuError(message);
  }
}

/** Run one CLI subcommand; nonzero exit becomes a typed error carrying stderr. */
export function invoke(args: string[], options: InvokeOptions = {}): InvokeResult {
  const [command, ...prefix] = cliCommand();
  const proc = spawnSync(command, [...prefix, ...args], {
    input: options.stdin,
    encoding: "utf8",
    env: options.env ? { ...process.env, ...options.env } : process.env,
    maxBuffer: 1024 * 1024 * 1024,
  });
  if (proc.error) {
    throw new EvstuError(`cannot launch ${command}: ${proc.error.message}`);
  }
  if (proc.status !== 0) {
    const detail = (proc.stderr ?? "").trim() || `CLI exited with code ${proc.status}`;
    throw classify(proc.status ?? -1, detail);
  }
  return { stdout: proc.stdout, stderr: proc.stderr };
}

/** invoke() plus JSON.parse of stdout. */
export function invokeJson<T>(args: string[], options: InvokeOptions = {}): T {
  const { stdout } = invoke(args, options);
  try {
    return JSON.parse(stdout) as T;
  } catch (exc) {
    throw new EvstuError(`CLI printed invalid JSON: ${(exc as Error).message}`);
  }
}

/** Run fn with a temporary work directory, removing it afterwards. */
export function withTempDir<T>(fn: (dir: string) => T): T {
  const dir = mkdtempSync(join(tmpdir(), "evstu-"));
  try {
    return fn(dir);
  } finally {
    rmSync(dir, { recursive: true, force: true });
  }
}
