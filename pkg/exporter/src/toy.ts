/**
 * Deterministic stand-in backend deriving latents, noise predictions, and
 * per-block captures purely from the input image. No randomness anywhere:
 * re-exporting the same image yields bit-identical bundles.
 */

import { DiffusionBackend, Latent, LayerCapture } from "./backend";
import { Image } from "./tensorio";

const LATENT_CHANNELS = 4;
const NOISE_GAIN = 0.01;
const SELF_TEMPERATURE = 0.35;

function blockMeanImage(image: Image, out: number): Float64Array {
  const { width, height, pixels } = image;
  if (width % out !== 0 || height % out !== 0) {
    throw new Error(`image ${width}x${height} not divisible into ${out}x${out} blocks`);
  }
  const fy = height / out;
  const fx = width / out;
  const cells = new Float64Array(out * out * 3);
  for (let cy = 0; cy < out; cy++) {
    for (let cx = 0; cx < out; cx++) {
      let r = 0, g = 0, b = 0;
      for (let y = cy * fy; y < (cy + 1) * fy; y++) {
        for (let x = cx * fx; x < (cx + 1) * fx; x++) {
          const o = 3 * (y * width + x);
          r += pixels[o];
          g += pixels[o + 1];
          b += pixels[o + 2];
        }
      }
      const area = fy * fx;
      const o = 3 * (cy * out + cx);
      cells[o] = r / area;
      cells[o + 1] = g / area;
      cells[o + 2] = b / area;
    }
  }
  return cells;
}

function blockMeanLatent(x: Latent, out: number): Float64Array {
  if (x.size % out !== 0) throw new Error(`latent ${x.size} not divisible by ${out}`);
  const f = x.size / out;
  const cells = new Float64Array(out * out * x.channels);
  for (let cy = 0; cy < out; cy++) {
    for (let cx = 0; cx < out; cx++) {
      for (let c = 0; c < x.channels; c++) {
        let sum = 0;
        for (let y = cy * f; y < (cy + 1) * f; y++) {
          for (let xx = cx * f; xx < (cx + 1) * f; xx++) {
            sum += x.data[(y * x.size + xx) * x.channels + c];
          }
        }
        cells[(cy * out + cx) * x.channels + c] = sum / (f * f);
      }
    }
  }
  return cells;
}

export class ToyBackend implements DiffusionBackend {
  readonly latentSize: number;

  constructor(latentSize = 64) {
    this.latentSize = latentSize;
  }

  encode(image: Image): Latent {
    const cells = blockMeanImage(image, this.latentSize);
    const n = this.latentSize * this.latentSize;
    const data = new Float64Array(n * LATENT_CHANNELS);
    for (let i = 0; i < n; i++) {
      const r = cells[3 * i], g = cells[3 * i + 1], b = cells[3 * i + 2];
      data[i * LATENT_CHANNELS] = 2 * r - 1;
      data[i * LATENT_CHANNELS + 1] = 2 * g - 1;
      data[i * LATENT_CHANNELS + 2] = 2 * b - 1;
      data[i * LATENT_CHANNELS + 3] = 2 * (0.299 * r + 0.587 * g + 0.114 * b) - 1;
    }
    return { size: this.latentSize, channels: LATENT_CHANNELS, data };
  }

  predictNoise(x: Latent, _t: number, _label: string): Latent {
    // fixed channel-rotating linear map; small gain keeps inversion tight
    const data = new Float64Array(x.data.length);
    const c = x.channels;
    for (let i = 0; i < x.data.length; i += c) {
      for (let j = 0; j < c; j++) {
        data[i + j] = NOISE_GAIN * x.data[i + ((j + 1) % c)];
      }
    }
    return { size: x.size, channels: c, data };
  }

  capture(x: Latent, t: number, label: string, blocks: number[]): LayerCapture[] {
    return blocks.map((rho) => this.captureBlock(x, t, label, rho));
  }

  private captureBlock(x: Latent, _t: number, label: string, rho: number): LayerCapture {
    const cells = blockMeanLatent(x, rho);
    const n = rho * rho;
    const c = x.channels;

    // border-mean color in latent space: the backdrop the object stands out from
    const border = new Float64Array(c);
    let borderCount = 0;
    for (let i = 0; i < n; i++) {
      const y = Math.floor(i / rho), xx = i % rho;
      if (y === 0 || xx === 0 || y === rho - 1 || xx === rho - 1) {
        for (let j = 0; j < c; j++) border[j] += cells[i * c + j];
        borderCount++;
      }
    }
    for (let j = 0; j < c; j++) border[j] /= borderCount;

    // cross map: distinctiveness from the border backdrop with a center prior;
    // an empty conditioning label flattens the map (the no-prior ablation)
    const cross = new Float64Array(n);
    const half = (rho - 1) / 2;
    for (let i = 0; i < n; i++) {
      let d = 0;
      for (let j = 0; j < c; j++) {
        const delta = cells[i * c + j] - border[j];
        d += delta * delta;
      }
      const y = Math.floor(i / rho), xx = i % rho;
      const ry = (y - half) / rho, rx = (xx - half) / rho;
      const center = Math.exp(-2.0 * (ry * ry + rx * rx));
      cross[i] = Math.sqrt(d) * center;
    }
    if (label === "") {
      const mean = cross.reduce((a, b) => a + b, 0) / n;
      for (let i = 0; i < n; i++) cross[i] = 0.25 * cross[i] + 0.75 * mean;
    }

    // self-attention: similarity of cell vectors, rows normalized to sum 1
    const selfAttn = new Float64Array(n * n);
    for (let i = 0; i < n; i++) {
      let rowSum = 0;
      for (let j = 0; j < n; j++) {
        let d = 0;
        for (let k = 0; k < c; k++) {
          const delta = cells[i * c + k] - cells[j * c + k];
          d += delta * delta;
        }
        const v = Math.exp(-Math.sqrt(d) / SELF_TEMPERATURE);
        selfAttn[i * n + j] = v;
        rowSum += v;
      }
      for (let j = 0; j < n; j++) selfAttn[i * n + j] /= rowSum;
    }

    // features: the cell vectors themselves plus the cross map as a channel
    const features = new Float64Array(n * (c + 1));
    for (let i = 0; i < n; i++) {
      for (let j = 0; j < c; j++) features[i * (c + 1) + j] = cells[i * c + j];
      features[i * (c + 1) + c] = cross[i];
    }
    return { rows: rho, cols: rho, cross, selfAttn, features, channels: c + 1 };
  }
}

// ---------------------------------------------------------------------------
// Deterministic synthetic test image: gradient backdrop + colored ellipse
// ---------------------------------------------------------------------------

class Xorshift32 {
  private state: number;
  constructor(seed: number) {
    this.state = seed >>> 0 || 0x9e3779b9;
  }
  next(): number {
    let x = this.state;
    x ^= x << 13; x >>>= 0;
    x ^= x >>> 17;
    x ^= x << 5; x >>>= 0;
    this.state = x;
    return x / 0x100000000;
  }
}

export function makeTestImage(size = 512, seed = 0): Image {
  const rng = new Xorshift32(seed + 1);
  const cy = size * (0.42 + 0.16 * rng.next());
  const cx = size * (0.42 + 0.16 * rng.next());
  const ry = size * (0.16 + 0.08 * rng.next());
  const rx = size * (0.16 + 0.08 * rng.next());
  const angle = Math.PI * rng.next();
  const fg = [0.85, 0.45 + 0.2 * rng.next(), 0.15];
  const pixels = new Float64Array(size * size * 3);
  const ca = Math.cos(angle), sa = Math.sin(angle);
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      const grad = 0.25 + 0.25 * (y / size);
      let r = grad * 0.7, g = grad * 0.85, b = grad * 1.1;
      const dy = y - cy, dx = x - cx;
      const u = (ca * dy + sa * dx) / ry;
      const v = (-sa * dy + ca * dx) / rx;
      if (u * u + v * v <= 1.0) {
        [r, g, b] = fg;
      }
      const o = 3 * (y * size + x);
      pixels[o] = Math.min(1, Math.max(0, r + 0.02 * (rng.next() - 0.5)));
      pixels[o + 1] = Math.min(1, Math.max(0, g + 0.02 * (rng.next() - 0.5)));
      pixels[o + 2] = Math.min(1, Math.max(0, b + 0.02 * (rng.next() - 0.5)));
    }
  }
  return { width: size, height: size, pixels };
}
