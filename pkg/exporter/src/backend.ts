/**
 * Backend contracts. The "model" backend would wrap a real pretrained
 * latent text-to-image model plus a contrastive image-text embedder; this
 * process refuses cleanly when no model directory is supplied. The "toy"
 * backend is deterministic and derives everything from the input image so
 * the full export path stays testable offline.
 */

import { Image } from "./tensorio";

export class ModelUnavailableError extends Error {}

/** One captured layer: cross map (h x w), self matrix (n x n), features (h x w x c). */
export interface LayerCapture {
  rows: number;
  cols: number;
  cross: Float64Array;
  selfAttn: Float64Array;
  features: Float64Array;
  channels: number;
}

export interface Latent {
  size: number;      // spatial extent (square)
  channels: number;
  data: Float64Array;
}

export interface DiffusionBackend {
  /** image -> spatial latent (the real backend would use its autoencoder) */
  encode(image: Image): Latent;
  /** deterministic noise prediction for (x, t, label) */
  predictNoise(x: Latent, t: number, label: string): Latent;
  /** per-block attention/features for the step, at the configured resolutions */
  capture(x: Latent, t: number, label: string, blocks: number[]): LayerCapture[];
}

export interface EmbeddingBackend {
  embedImage(image: Image): Float64Array;
  embedText(text: string): Float64Array;
}

export function requireModelDir(modelDir: string | undefined): never {
  throw new ModelUnavailableError(
    modelDir
      ? `no loadable model found under ${modelDir}`
      : "model backend requested but no --model-dir given",
  );
}
