import * as assert from "node:assert/strict";
import * as crypto from "node:crypto";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import { test } from "node:test";

import { exportBundle, validateBundle } from "../src/exporter";
import { readTensor } from "../src/tensorio";
import { ToyBackend, makeTestImage } from "../src/toy";
import { main } from "../src/cli";

const BLOCKS = [8, 8, 16, 16];

function tmpdir(): string {
  return fs.mkdtempSync(path.join(os.tmpdir(), "bundle-"));
}

function digest(dir: string): string {
  const hash = crypto.createHash("sha256");
  for (const name of fs.readdirSync(dir).sort()) {
    hash.update(name);
    hash.update(fs.readFileSync(path.join(dir, name)));
  }
  return hash.digest("hex");
}

test("bundle contains T x L tensors of each kind plus metadata", () => {
  const out = tmpdir();
  const image = makeTestImage(64, 4);
  const result = exportBundle(image, "ball", new ToyBackend(8), {
    tSteps: 3, blocks: [4, 4, 8], outDir: out, tokenIndex: 1,
  });
  assert.equal(result.files, 3 * 3 * 3);
  const names = fs.readdirSync(out);
  for (const kind of ["cross", "self", "feat"]) {
    assert.equal(names.filter((n) => n.startsWith(kind)).length, 9);
  }
  assert.ok(names.includes("meta.txt"));
  const meta = fs.readFileSync(path.join(out, "meta.txt"), "utf-8");
  assert.match(meta, /T=3\n/);
  assert.match(meta, /L=3\n/);
  assert.match(meta, /layers=1,2,3\n/);
});

test("re-export is byte identical", () => {
  const image = makeTestImage(64, 5);
  const a = tmpdir();
  const b = tmpdir();
  for (const out of [a, b]) {
    exportBundle(image, "ball", new ToyBackend(16), {
      tSteps: 2, blocks: BLOCKS, outDir: out, tokenIndex: 1,
    });
  }
  assert.equal(digest(a), digest(b));
});

test("self-attention rows sum to one within 1e-3", () => {
  const out = tmpdir();
  exportBundle(makeTestImage(64, 6), "ball", new ToyBackend(16), {
    tSteps: 2, blocks: BLOCKS, outDir: out, tokenIndex: 1,
  });
  const sa = readTensor(path.join(out, "self_t0_l3"));
  const n = sa.dims[0];
  for (let row = 0; row < n; row++) {
    let sum = 0;
    for (let col = 0; col < n; col++) sum += sa.data[row * n + col];
    assert.ok(Math.abs(sum - 1) <= 1e-3, `row ${row} sums to ${sum}`);
  }
});

test("reconstruction error of the deterministic round trip stays small", () => {
  const out = tmpdir();
  const result = exportBundle(makeTestImage(64, 7), "ball", new ToyBackend(16), {
    tSteps: 40, blocks: [8], outDir: out, tokenIndex: 1,
  });
  assert.ok(result.reconstructionError < 1e-4, String(result.reconstructionError));
});

test("validation flags shape drift", () => {
  const out = tmpdir();
  exportBundle(makeTestImage(64, 8), "ball", new ToyBackend(16), {
    tSteps: 1, blocks: [8, 8], outDir: out, tokenIndex: 1,
  });
  // corrupt one tensor by swapping in a wrong-shaped file
  fs.copyFileSync(path.join(out, "self_t0_l1"), path.join(out, "cross_t0_l2"));
  assert.throws(() => validateBundle(out), /shape drift/);
});

test("empty label flattens the cross maps (no-prior ablation)", () => {
  const backend = new ToyBackend(16);
  const image = makeTestImage(64, 9);
  const x = backend.encode(image);
  const withPrior = backend.capture(x, 1, "ball", [8])[0].cross;
  const without = backend.capture(x, 1, "", [8])[0].cross;
  const spread = (a: Float64Array) => Math.max(...a) - Math.min(...a);
  assert.ok(spread(without) < spread(withPrior));
});

test("model backend without a model directory refuses with exit code 3", () => {
  const out = tmpdir();
  const image = path.join(out, "img.ppm");
  assert.equal(main(["make-test-image", "--out", image, "--size", "64", "--seed", "1"]), 0);
  const code = main([
    "export", "--image", image, "--out", path.join(out, "bundle"),
    "--steps", "2", "--backend", "model",
    "--labels", path.join(__dirname, "..", "..", "labels", "default.txt"),
  ]);
  assert.equal(code, 3);
});

test("cli export end to end with the toy backend", () => {
  const out = tmpdir();
  const image = path.join(out, "img.ppm");
  assert.equal(main(["make-test-image", "--out", image, "--size", "64", "--seed", "2"]), 0);
  const code = main([
    "export", "--image", image, "--out", path.join(out, "bundle"),
    "--steps", "2", "--backend", "toy", "--blocks", "8,8,16",
    "--labels", path.join(__dirname, "..", "..", "labels", "default.txt"),
  ]);
  assert.equal(code, 0);
  validateBundle(path.join(out, "bundle"));
});
