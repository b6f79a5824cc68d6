/**
 * Error hierarchy mirroring the toolkit's CLI exit codes: usage errors
 * exit 2, input/data errors 3, configuration errors 4 and scoring
 * service errors 5.  Every binding raises one of these, so callers can
 * branch on the category without parsing stderr text.
 */

/** Base class for everything raised by the bindings. */
export class EvstuError extends Error {
  constructor(message: string) {
    super(message);
    this.name = new.target.name;
  }
}

/** The CLI rejected the command line itself (exit code 2). */
export class UsageError extends EvstuError {}

/** Malformed or inconsistent input data: frames, events, payloads (exit code 3). */
export class InputError extends EvstuError {}

/** A configuration value violates the documented constraints (exit code 4). */
export class ConfigError extends EvstuError {}

/** The external scoring service failed after all retries (exit code 5). */
export class ServiceError extends EvstuError {}

/** Serialized bytes violate an on-disk format; `offset` is where decoding failed. */
export class FormatError extends InputError {
  readonly offset: number;

  constructor(message: string, offset: number) {
    super(`${message} (byte offset ${offset})`);
    this.offset = offset;
  }
}
