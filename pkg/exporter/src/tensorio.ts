/**
 * Binary formats shared with the mask toolkit.
 *
 * Tensor file: magic "ATNT", u32 version (1), u8 dtype (0 = f32le), u8 ndim,
 * ndim x u64 dims, row-major float32 payload, all little-endian.
 * Images travel as binary P6 PPM.
 */

import * as fs from "fs";

const MAGIC = 0x41544e54; // "ATNT" big-endian read of the 4 magic bytes
export const VERSION = 1;

export interface Tensor {
  dims: number[];
  data: Float32Array;
}

export function tensor(dims: number[], data: Float32Array | number[]): Tensor {
  const flat = data instanceof Float32Array ? data : Float32Array.from(data);
  const count = dims.reduce((a, b) => a * b, 1);
  if (dims.length === 0 || dims.some((d) => d < 1) || flat.length !== count) {
    throw new Error(`tensor shape ${JSON.stringify(dims)} does not match ${flat.length} values`);
  }
  return { dims, data: flat };
}

export function encodeTensor(t: Tensor): Buffer {
  const header = Buffer.alloc(4 + 4 + 1 + 1 + 8 * t.dims.length);
  header.write("ATNT", 0, "ascii");
  header.writeUInt32LE(VERSION, 4);
  header.writeUInt8(0, 8);
  header.writeUInt8(t.dims.length, 9);
  t.dims.forEach((d, i) => header.writeBigUInt64LE(BigInt(d), 10 + 8 * i));
  const payload = Buffer.alloc(4 * t.data.length);
  for (let i = 0; i < t.data.length; i++) payload.writeFloatLE(t.data[i], 4 * i);
  return Buffer.concat([header, payload]);
}

export function writeTensor(t: Tensor, path: string): void {
  fs.writeFileSync(path, encodeTensor(t));
}

export function readTensor(path: string): Tensor {
  const data = fs.readFileSync(path);
  if (data.length < 10) throw new Error(`${path}: truncated header`);
  if (data.toString("ascii", 0, 4) !== "ATNT") throw new Error(`${path}: bad magic`);
  const version = data.readUInt32LE(4);
  if (version !== VERSION) throw new Error(`${path}: version ${version}`);
  if (data.readUInt8(8) !== 0) throw new Error(`${path}: unsupported dtype`);
  const ndim = data.readUInt8(9);
  const dims: number[] = [];
  for (let i = 0; i < ndim; i++) dims.push(Number(data.readBigUInt64LE(10 + 8 * i)));
  const count = dims.reduce((a, b) => a * b, 1);
  const offset = 10 + 8 * ndim;
  if (data.length !== offset + 4 * count) {
    throw new Error(`${path}: payload size mismatch (${data.length - offset} vs ${4 * count})`);
  }
  const flat = new Float32Array(count);
  for (let i = 0; i < count; i++) flat[i] = data.readFloatLE(offset + 4 * i);
  return { dims, data: flat };
}

export interface Image {
  width: number;
  height: number;
  /** RGB interleaved, values in [0, 1] */
  pixels: Float64Array;
}

export function readPpm(path: string): Image {
  const data = fs.readFileSync(path);
  if (data.toString("ascii", 0, 2) !== "P6") throw new Error(`${path}: not a P6 PPM`);
  let pos = 2;
  const fields: number[] = [];
  while (fields.length < 3) {
    while (pos < data.length && /\s/.test(String.fromCharCode(data[pos]))) pos++;
    if (data[pos] === 0x23) {
      while (pos < data.length && data[pos] !== 0x0a) pos++;
      continue;
    }
    const start = pos;
    while (pos < data.length && !/\s/.test(String.fromCharCode(data[pos]))) pos++;
    fields.push(parseInt(data.toString("ascii", start, pos), 10));
  }
  pos++;
  const [width, height, maxval] = fields;
  if (maxval !== 255) throw new Error(`${path}: maxval ${maxval}`);
  const n = width * height * 3;
  if (data.length < pos + n) throw new Error(`${path}: truncated pixel data`);
  const pixels = new Float64Array(n);
  for (let i = 0; i < n; i++) pixels[i] = data[pos + i] / 255.0;
  return { width, height, pixels };
}

export function writePpm(image: Image, path: string): void {
  const header = Buffer.from(`P6\n${image.width} ${image.height}\n255\n`, "ascii");
  const body = Buffer.alloc(image.pixels.length);
  for (let i = 0; i < image.pixels.length; i++) {
    body[i] = Math.max(0, Math.min(255, Math.round(image.pixels[i] * 255)));
  }
  fs.writeFileSync(path, Buffer.concat([header, body]));
}
