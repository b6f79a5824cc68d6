/**
 * EVF1 event-frame container, byte for byte compatible with the CLI's
 * reader and writer.
 *
 * Layout (little-endian):
 *
 *     offset 0   magic   4 bytes  "EVF1"
 *     offset 4   width   u32
 *     offset 8   height  u32
 *     offset 12  count   u32      number of event frames
 *     offset 16  payload count * height * width u16 values, row-major,
 *                frames in temporal order
 */

import { readFileSync, writeFileSync } from "node:fs";

import { FormatError, InputError } from "./errors.js";

const MAGIC = [0x45, 0x56, 0x46, 0x31]; // "EVF1"
const HEADER_SIZE = 16;

const LITTLE_ENDIAN = new Uint8Array(new Uint16Array([1]).buffer)[0] === 1;

/** Decoded event frames: `count` grids of height x width u16 counts. */
export interface EventFrames {
  width: number;
  height: number;
  count: number;
  /**
   * Row-major per-frame counts.  Zero-copy views into the source bytes
   * where the runtime allows (2-byte aligned payload on a little-endian
   * host), otherwise single copies.
   */
  frames: Uint16Array[];
}

/**
 * Decode EVF1 bytes.
 *
 * Malformed bytes raise FormatError carrying the byte offset of the
 * problem; nothing else is ever raised for bad bytes.
 */
export function decodeEventBytes(data: Uint8Array): EventFrames {
  if (
    data.length < 4 ||
    data[0] !== MAGIC[0] ||
    data[1] !== MAGIC[1] ||
    data[2] !== MAGIC[2] ||
    data[3] !== MAGIC[3]
  ) {
    throw new FormatError("bad magic, expected 'EVF1'", 0);
  }
  if (data.length < HEADER_SIZE) {
    throw new FormatError("truncated header", data.length);
  }
  const view = new DataView(data.buffer, data.byteOffset, data.byteLength);
  const width = view.getUint32(4, true);
  const height = view.getUint32(8, true);
  const count = view.getUint32(12, true);
  if (width === 0) {
    throw new FormatError("width must be positive", 4);
  }
  if (height === 0) {
    throw new FormatError("height must be positive", 8);
  }
  const expected = 2 * width * height * count;
  const actual = data.length - HEADER_SIZE;
  if (actual < expected) {
    throw new FormatError(`truncated payload, expected ${expected} bytes got ${actual}`, data.length);
  }
  if (actual > expected) {
    throw new FormatError("trailing bytes after payload", HEADER_SIZE + expected);
  }
  const size = width * height;
  const frames: Uint16Array[] = [];
  for (let i = 0; i < count; i++) {
    const payloadOffset = HEADER_SIZE + i * 2 * size;
    const byteOffset = data.byteOffset + payloadOffset;
    if (LITTLE_ENDIAN && byteOffset % 2 === 0) {
      frames.push(new Uint16Array(data.buffer, byteOffset, size));
    } else {
      const copy = new Uint16Array(size);
      for (let j = 0; j < size; j++) {
        copy[j] = view.getUint16(payloadOffset + 2 * j, true);
      }
      frames.push(copy);
    }
  }
  return { width, height, count, frames };
}

/** Encode event frames into EVF1 bytes; every frame must hold width*height counts. */
export function encodeEventFrames(width: number, height: number, frames: Uint16Array[]): Uint8Array {
  if (!Number.isInteger(width) || width <= 0 || !Number.isInteger(height) || height <= 0) {
    throw new InputError(`frame size must be positive integers, got ${width}x${height}`);
  }
  if (frames.length === 0) {
    throw new InputError("cannot encode an EVF1 file with no event frames");
  }
  const size = width * height;
  const out = new Uint8Array(HEADER_SIZE + 2 * size * frames.length);
  const view = new DataView(out.buffer);
  out.set(MAGIC, 0);
  view.setUint32(4, width, true);
  view.setUint32(8, height, true);
  view.setUint32(12, frames.length, true);
  frames.forEach((frame, i) => {
    if (frame.length !== size) {
      throw new InputError(`event frame ${i} has ${frame.length} values, expected ${size}`);
    }
    const pos = HEADER_SIZE + i * 2 * size;
    if (LITTLE_ENDIAN) {
      out.set(new Uint8Array(frame.buffer, frame.byteOffset, frame.byteLength), pos);
    } else {
      for (let j = 0; j < size; j++) {
        view.setUint16(pos + 2 * j, frame[j], true);
      }
    }
  });
  return out;
}

/** Read and decode an EVF1 file. */
export function readEventFile(path: string): EventFrames {
  return decodeEventBytes(readFileSync(path));
}

/** Encode and write an EVF1 file. */
export function writeEventFile(path: string, width: number, height: number, frames: Uint16Array[]): void {
  writeFileSync(path, encodeEventFrames(width, height, frames));
}
