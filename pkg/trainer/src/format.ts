/** Binary artifact formats shared with the feature pipeline.
 *
 * All formats are little-endian with a 4-byte ASCII magic:
 *
 * `SPTC`  patch stack: magic, version u16, count u32, side u16,
 *         bytes-per-pixel u8, then row-major 8-bit patches.
 * `SLBL`  surrogate labels: magic, count u32, u32 labels. (This header
 *         carries no version field.)
 * `LDSC`  local descriptors, one file per image: magic, version u16,
 *         count u32, dim u32, f32 row-major matrix.
 *
 * Files may end with a `CFGH` footer (magic + u64 config hash). Readers
 * tolerate its absence; this tool writes descriptor files without one.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { FormatError } from "./errors";

export const FORMAT_VERSION = 1;

const HASH_MAGIC = "CFGH";

export interface PatchStack {
  /** Row-major 8-bit pixels, `count * side * side` long. */
  pixels: Uint8Array;
  count: number;
  side: number;
  configHash: bigint | null;
}

export interface LabelList {
  labels: Uint32Array;
  configHash: bigint | null;
}

export interface DescriptorMatrix {
  /** Row-major float32 values, `count * dim` long. */
  values: Float32Array;
  count: number;
  dim: number;
  configHash: bigint | null;
}

export interface MetaRow {
  imageId: string;
  keypointIndex: number;
  label: number;
}

/** Byte reader with the truncation bookkeeping the formats need. */
class Cursor {
  offset = 0;

  constructor(readonly buf: Buffer, readonly file: string) {}

  expectMagic(magic: string): void {
    const got = this.buf.subarray(this.offset, this.offset + 4);
    if (got.length !== 4 || got.toString("latin1") !== magic) {
      throw new FormatError(
        `${this.file}: bad magic ${JSON.stringify(got.toString("latin1"))}, ` +
        `expected ${JSON.stringify(magic)}`);
    }
    this.offset += 4;
  }

  expectVersion(): void {
    const version = this.u16("version");
    if (version !== FORMAT_VERSION) {
      throw new FormatError(`${this.file}: unsupported version ${version}`);
    }
  }

  private need(n: number, what: string): void {
    if (this.offset + n > this.buf.length) {
      throw new FormatError(`${this.file}: truncated while reading ${what}`);
    }
  }

  u8(what: string): number {
    this.need(1, what);
    const v = this.buf.readUInt8(this.offset);
    this.offset += 1;
    return v;
  }

  u16(what: string): number {
    this.need(2, what);
    const v = this.buf.readUInt16LE(this.offset);
    this.offset += 2;
    return v;
  }

  u32(what: string): number {
    this.need(4, what);
    const v = this.buf.readUInt32LE(this.offset);
    this.offset += 4;
    return v;
  }

  bytes(n: number, what: string): Buffer {
    this.need(n, what);
    const v = this.buf.subarray(this.offset, this.offset + n);
    this.offset += n;
    return v;
  }

  /** Reads a `CFGH` footer if one follows the payload. */
  hashFooter(): bigint | null {
    const rest = this.buf.subarray(this.offset);
    if (rest.length >= 12 && rest.subarray(0, 4).toString("latin1") === HASH_MAGIC) {
      return rest.readBigUInt64LE(4);
    }
    return null;
  }
}

/** Writes a file atomically: temp file in the same directory, then rename. */
export function writeFileAtomic(file: string, data: Buffer): void {
  const dir = path.dirname(path.resolve(file));
  fs.mkdirSync(dir, { recursive: true });
  const tmp = path.join(dir, `.${path.basename(file)}.${process.pid}.tmp`);
  try {
    fs.writeFileSync(tmp, data);
    fs.renameSync(tmp, file);
  } catch (err) {
    fs.rmSync(tmp, { force: true });
    throw err;
  }
}

/** Reads a patch stack (`SPTC`) file. */
export function readSptc(file: string): PatchStack {
  const cur = new Cursor(fs.readFileSync(file), file);
  cur.expectMagic("SPTC");
  cur.expectVersion();
  const count = cur.u32("count");
  const side = cur.u16("side");
  const bpp = cur.u8("bytes-per-pixel");
  if (bpp !== 1) {
    throw new FormatError(`${file}: unsupported bytes-per-pixel ${bpp}`);
  }
  const raw = cur.bytes(count * side * side, "patch data");
  return { pixels: new Uint8Array(raw), count, side, configHash: cur.hashFooter() };
}

/** Reads a surrogate label (`SLBL`) file. */
export function readSlbl(file: string): LabelList {
  const cur = new Cursor(fs.readFileSync(file), file);
  cur.expectMagic("SLBL");
  const count = cur.u32("count");
  const raw = cur.bytes(count * 4, "labels");
  const labels = new Uint32Array(count);
  for (let i = 0; i < count; i++) {
    labels[i] = raw.readUInt32LE(i * 4);
  }
  return { labels, configHash: cur.hashFooter() };
}

/** Writes a local descriptor (`LDSC`) file. */
export function writeLdsc(file: string, values: Float32Array, count: number,
                          dim: number): void {
  if (values.length !== count * dim) {
    throw new RangeError(
      `descriptor buffer has ${values.length} values, expected ${count * dim}`);
  }
  const header = Buffer.alloc(14);
  header.write("LDSC", 0, "latin1");
  header.writeUInt16LE(FORMAT_VERSION, 4);
  header.writeUInt32LE(count, 6);
  header.writeUInt32LE(dim, 10);
  const body = Buffer.alloc(values.length * 4);
  for (let i = 0; i < values.length; i++) {
    body.writeFloatLE(values[i], i * 4);
  }
  writeFileAtomic(file, Buffer.concat([header, body]));
}

/** Reads a local descriptor (`LDSC`) file. */
export function readLdsc(file: string): DescriptorMatrix {
  const cur = new Cursor(fs.readFileSync(file), file);
  cur.expectMagic("LDSC");
  cur.expectVersion();
  const count = cur.u32("count");
  const dim = cur.u32("dim");
  if (dim === 0) {
    throw new FormatError(`${file}: zero descriptor dimension`);
  }
  const raw = cur.bytes(count * dim * 4, "descriptor data");
  const values = new Float32Array(count * dim);
  for (let i = 0; i < values.length; i++) {
    values[i] = raw.readFloatLE(i * 4);
  }
  return { values, count, dim, configHash: cur.hashFooter() };
}

const META_HEADER = "image_id,keypoint_index,label";

/**
 * Reads the patch metadata CSV (`image_id,keypoint_index,label` rows).
 * Lines starting with `#` are comments. Image ids may contain commas;
 * the last two fields are numeric.
 */
export function readMetaCsv(file: string): MetaRow[] {
  const text = fs.readFileSync(file, "utf-8");
  const lines = text.split("\n").filter(
    (line) => line.length > 0 && !line.startsWith("#"));
  if (lines.length === 0 || lines[0] !== META_HEADER) {
    throw new FormatError(
      `${file}: unexpected header ${JSON.stringify(lines[0] ?? "")}`);
  }
  const rows: MetaRow[] = [];
  for (let i = 1; i < lines.length; i++) {
    const parts = lines[i].split(",");
    if (parts.length < 3) {
      throw new FormatError(`${file}: malformed row ${i + 1}`);
    }
    const label = Number(parts[parts.length - 1]);
    const keypointIndex = Number(parts[parts.length - 2]);
    if (!Number.isInteger(label) || !Number.isInteger(keypointIndex)) {
      throw new FormatError(`${file}: non-numeric fields in row ${i + 1}`);
    }
    rows.push({
      imageId: parts.slice(0, parts.length - 2).join(","),
      keypointIndex,
      label,
    });
  }
  return rows;
}
