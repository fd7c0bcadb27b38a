/**
 * Deterministic inversion of one image with per-step capture, written as a
 * bundle directory the mask toolkit reads directly: ATNT tensors named
 * cross_t{t}_l{l} / self_t{t}_l{l} / feat_t{t}_l{l} plus meta.txt.
 */

import * as fs from "fs";
import * as path from "path";

import { DiffusionBackend, Latent, LayerCapture } from "./backend";
import { Schedule, abar, makeSubsampledSchedule } from "./schedule";
import { Image, readTensor, tensor, writeTensor } from "./tensorio";

export interface ExportConfig {
  tSteps: number;           // default 40; tSteps * stride must fit the base schedule
  blocks: number[];         // capture resolutions, paper layout by default
  outDir: string;
  tokenIndex: number;
}

export const DEFAULT_BLOCKS = [16, 16, 32, 32, 64, 64];

export interface ExportResult {
  files: number;
  tSteps: number;
  nLayers: number;
  reconstructionError: number;
}

function cleanEstimate(x: Latent, eps: Latent, abarT: number): Latent {
  const data = new Float64Array(x.data.length);
  const root = Math.sqrt(abarT);
  const noise = Math.sqrt(1 - abarT);
  for (let i = 0; i < data.length; i++) data[i] = (x.data[i] - noise * eps.data[i]) / root;
  return { size: x.size, channels: x.channels, data };
}

function step(
  x: Latent, backend: DiffusionBackend, schedule: Schedule, t: number, target: number,
  label: string,
): Latent {
  const eps = backend.predictNoise(x, t, label);
  const f = cleanEstimate(x, eps, abar(schedule, t));
  const abarTarget = abar(schedule, target);
  const root = Math.sqrt(abarTarget);
  const noise = Math.sqrt(1 - abarTarget);
  const data = new Float64Array(x.data.length);
  for (let i = 0; i < data.length; i++) data[i] = root * f.data[i] + noise * eps.data[i];
  return { size: x.size, channels: x.channels, data };
}

function writeCapture(capture: LayerCapture, t: number, layer: number, outDir: string): void {
  const { rows, cols, channels } = capture;
  writeTensor(tensor([rows, cols], Float32Array.from(capture.cross)),
    path.join(outDir, `cross_t${t}_l${layer}`));
  writeTensor(tensor([rows * cols, rows * cols], Float32Array.from(capture.selfAttn)),
    path.join(outDir, `self_t${t}_l${layer}`));
  writeTensor(tensor([rows, cols, channels], Float32Array.from(capture.features)),
    path.join(outDir, `feat_t${t}_l${layer}`));
}

export function exportBundle(
  image: Image,
  label: string,
  backend: DiffusionBackend,
  config: ExportConfig,
): ExportResult {
  const schedule = makeSubsampledSchedule(config.tSteps);
  const x0 = backend.encode(image);
  fs.mkdirSync(config.outDir, { recursive: true });

  let x = x0;
  for (let t = 0; t < schedule.tSteps; t++) {
    x = step(x, backend, schedule, t, t + 1, label);
  }

  const resolutions: string[] = [];
  const channels: string[] = [];
  let files = 0;
  for (let t = schedule.tSteps; t >= 1; t--) {
    const captures = backend.capture(x, t, label, config.blocks);
    if (captures.length !== config.blocks.length) {
      throw new Error("backend returned the wrong number of blocks");
    }
    captures.forEach((capture, i) => {
      if (capture.rows !== config.blocks[i] || capture.cols !== config.blocks[i]) {
        throw new Error(
          `shape drift: block ${i + 1} produced ${capture.rows}x${capture.cols}, ` +
          `expected ${config.blocks[i]}`);
      }
      writeCapture(capture, t - 1, i + 1, config.outDir);
      files += 3;
      if (t === schedule.tSteps) {
        resolutions.push(`${capture.rows}x${capture.cols}`);
        channels.push(String(capture.channels));
      }
    });
    x = step(x, backend, schedule, t, t - 1, label);
  }

  let reconstructionError = 0;
  let scale = 0;
  for (let i = 0; i < x.data.length; i++) {
    reconstructionError = Math.max(reconstructionError, Math.abs(x.data[i] - x0.data[i]));
    scale = Math.max(scale, Math.abs(x0.data[i]));
  }

  const layers = config.blocks.map((_, i) => i + 1);
  const meta = [
    `T=${schedule.tSteps}`,
    `L=${config.blocks.length}`,
    `token_index=${config.tokenIndex}`,
    `layers=${layers.join(",")}`,
    `res=${resolutions.join(",")}`,
    `channels=${channels.join(",")}`,
  ].join("\n") + "\n";
  fs.writeFileSync(path.join(config.outDir, "meta.txt"), meta);

  validateBundle(config.outDir);
  return {
    files,
    tSteps: schedule.tSteps,
    nLayers: config.blocks.length,
    reconstructionError: scale > 0 ? reconstructionError / scale : 0,
  };
}

/** Re-read every tensor and check it against the metadata; shape drift or an
 *  unreadable file is a hard failure. */
export function validateBundle(outDir: string): void {
  const meta = new Map<string, string>();
  for (const line of fs.readFileSync(path.join(outDir, "meta.txt"), "utf-8").split("\n")) {
    const idx = line.indexOf("=");
    if (idx > 0) meta.set(line.slice(0, idx), line.slice(idx + 1).trim());
  }
  const tSteps = Number(meta.get("T"));
  const layers = (meta.get("layers") ?? "").split(",").map(Number);
  const res = (meta.get("res") ?? "").split(",").map((s) => s.split("x").map(Number));
  const rowTolerance = 1e-3;
  for (let t = 0; t < tSteps; t++) {
    layers.forEach((layer, i) => {
      const [h, w] = res[i];
      const cross = readTensor(path.join(outDir, `cross_t${t}_l${layer}`));
      const selfAttn = readTensor(path.join(outDir, `self_t${t}_l${layer}`));
      const feats = readTensor(path.join(outDir, `feat_t${t}_l${layer}`));
      if (cross.dims[0] !== h || cross.dims[1] !== w) {
        throw new Error(`shape drift: cross_t${t}_l${layer} is ${cross.dims}, expected ${h}x${w}`);
      }
      const n = h * w;
      if (selfAttn.dims[0] !== n || selfAttn.dims[1] !== n) {
        throw new Error(`shape drift: self_t${t}_l${layer} is ${selfAttn.dims}`);
      }
      if (feats.dims[0] !== h || feats.dims[1] !== w) {
        throw new Error(`shape drift: feat_t${t}_l${layer} is ${feats.dims}`);
      }
      for (let row = 0; row < n; row++) {
        let sum = 0;
        for (let col = 0; col < n; col++) sum += selfAttn.data[row * n + col];
        if (Math.abs(sum - 1) > rowTolerance) {
          throw new Error(`self_t${t}_l${layer}: row ${row} sums to ${sum}`);
        }
      }
    });
  }
}
