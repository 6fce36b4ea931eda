/**
 * Minimal .npy (format version 1.0) encoder/decoder for numeric matrices.
 *
 * The writer emits little-endian float64 in C order with a numpy-compatible
 * header, so files round-trip bit-exactly through numpy and the downstream
 * scoring toolkit. The reader accepts the dtypes that appear in exported
 * datasets (float32/float64 and int32/int64 labels) and widens to float64.
 */

import * as fs from 'node:fs';

const MAGIC = Buffer.from('\x93NUMPY', 'latin1');

export interface NpyArray {
  data: Float64Array;
  shape: number[];
}

function headerFor(shape: number[]): Buffer {
  const shapeRepr =
    shape.length === 1 ? `(${shape[0]},)` : `(${shape.join(', ')})`;
  let header = `{'descr': '<f8', 'fortran_order': False, 'shape': ${shapeRepr}, }`;
  // pad with spaces so magic + version + length field + header is a multiple of 64
  const unpadded = MAGIC.length + 2 + 2 + header.length + 1;
  header += ' '.repeat((64 - (unpadded % 64)) % 64) + '\n';
  const head = Buffer.alloc(MAGIC.length + 4);
  MAGIC.copy(head, 0);
  head[6] = 1; // format version 1.0
  head[7] = 0;
  head.writeUInt16LE(header.length, 8);
  return Buffer.concat([head, Buffer.from(header, 'latin1')]);
}

export function encodeNpy(data: Float64Array, shape: number[]): Buffer {
  const count = shape.reduce((a, b) => a * b, 1);
  if (count !== data.length) {
    throw new Error(`shape [${shape}] does not match data length ${data.length}`);
  }
  const body = Buffer.alloc(data.length * 8);
  for (let i = 0; i < data.length; i++) {
    body.writeDoubleLE(data[i], i * 8);
  }
  return Buffer.concat([headerFor(shape), body]);
}

export function writeNpy(path: string, data: Float64Array, shape: number[]): void {
  fs.writeFileSync(path, encodeNpy(data, shape));
}

const READERS: Record<string, (buf: Buffer, i: number) => number> = {
  '<f8': (buf, i) => buf.readDoubleLE(i * 8),
  '<f4': (buf, i) => buf.readFloatLE(i * 4),
  '<i8': (buf, i) => Number(buf.readBigInt64LE(i * 8)),
  '<i4': (buf, i) => buf.readInt32LE(i * 4),
};

const ITEM_SIZES: Record<string, number> = { '<f8': 8, '<f4': 4, '<i8': 8, '<i4': 4 };

export function decodeNpy(buf: Buffer): NpyArray {
  if (buf.length < 10 || !buf.subarray(0, 6).equals(MAGIC)) {
    throw new Error('not a .npy file (bad magic)');
  }
  if (buf[6] !== 1 || buf[7] !== 0) {
    throw new Error(`unsupported .npy format version ${buf[6]}.${buf[7]}; only 1.0 is read`);
  }
  const headerLen = buf.readUInt16LE(8);
  const header = buf.subarray(10, 10 + headerLen).toString('latin1');
  const descr = /'descr':\s*'([^']+)'/.exec(header)?.[1];
  const fortran = /'fortran_order':\s*(True|False)/.exec(header)?.[1];
  const shapeText = /'shape':\s*\(([^)]*)\)/.exec(header)?.[1];
  if (!descr || !fortran || shapeText === undefined) {
    throw new Error('malformed .npy header');
  }
  if (fortran === 'True') {
    throw new Error('Fortran-order arrays are not supported (C order only)');
  }
  const read = READERS[descr];
  if (!read) {
    throw new Error(`unsupported dtype ${descr}; expected <f8, <f4, <i8 or <i4`);
  }
  const shape = shapeText
    .split(',')
    .map((s) => s.trim())
    .filter((s) => s.length > 0)
    .map((s) => Number.parseInt(s, 10));
  if (shape.length < 1 || shape.length > 2 || shape.some((d) => !Number.isFinite(d))) {
    throw new Error(`expected a 1-D or 2-D array, got shape (${shapeText})`);
  }
  const count = shape.reduce((a, b) => a * b, 1);
  const body = buf.subarray(10 + headerLen);
  if (body.length < count * ITEM_SIZES[descr]) {
    throw new Error(`truncated data section (expected ${count} values)`);
  }
  const data = new Float64Array(count);
  for (let i = 0; i < count; i++) {
    data[i] = read(body, i);
  }
  return { data, shape };
}

export function readNpy(path: string): NpyArray {
  return decodeNpy(fs.readFileSync(path));
}
