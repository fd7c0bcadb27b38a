import * as assert from "node:assert/strict";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import { test } from "node:test";

import { encodeTensor, readPpm, readTensor, tensor, writePpm, writeTensor } from "../src/tensorio";
import { makeTestImage } from "../src/toy";

function tmpdir(): string {
  return fs.mkdtempSync(path.join(os.tmpdir(), "exporter-"));
}

test("tensor header layout matches the shared format", () => {
  const buf = encodeTensor(tensor([1], [0]));
  assert.equal(buf.length, 22); // 4 magic + 4 version + 1 dtype + 1 ndim + 8 dim + 4 payload
  assert.equal(buf.toString("ascii", 0, 4), "ATNT");
  assert.equal(buf.readUInt32LE(4), 1);
  assert.equal(buf.readUInt8(8), 0);
  assert.equal(buf.readUInt8(9), 1);
  assert.equal(Number(buf.readBigUInt64LE(10)), 1);
});

test("tensor round trip", () => {
  const dir = tmpdir();
  const t = tensor([2, 3], [1, 2, 3, 4.5, -1, 0.25]);
  const file = path.join(dir, "t");
  writeTensor(t, file);
  const back = readTensor(file);
  assert.deepEqual(back.dims, [2, 3]);
  assert.deepEqual(Array.from(back.data), Array.from(t.data));
});

test("tensor write is byte deterministic", () => {
  const t = tensor([4], [0.1, 0.2, 0.3, 0.4]);
  assert.deepEqual(encodeTensor(t), encodeTensor(t));
});

test("reader rejects bad magic and size mismatch", () => {
  const dir = tmpdir();
  const file = path.join(dir, "bad");
  const buf = encodeTensor(tensor([2], [1, 2]));
  buf.write("XXXX", 0, "ascii");
  fs.writeFileSync(file, buf);
  assert.throws(() => readTensor(file), /bad magic/);
  const truncated = encodeTensor(tensor([2], [1, 2])).subarray(0, 25);
  fs.writeFileSync(file, truncated);
  assert.throws(() => readTensor(file), /size mismatch/);
});

test("ppm round trip", () => {
  const dir = tmpdir();
  const image = makeTestImage(64, 3);
  const file = path.join(dir, "img.ppm");
  writePpm(image, file);
  const back = readPpm(file);
  assert.equal(back.width, 64);
  assert.equal(back.height, 64);
  // 8-bit quantization bounds the round-trip error
  let worst = 0;
  for (let i = 0; i < back.pixels.length; i++) {
    worst = Math.max(worst, Math.abs(back.pixels[i] - image.pixels[i]));
  }
  assert.ok(worst <= 0.5 / 255 + 1e-9, `worst ${worst}`);
});
