/**
 * Zero-shot labeling of the input image: each (pre-merged) class is scored
 * by the mean dot product between the image embedding and its template
 * embeddings; the top class supplies the conditioning label.
 */

import * as fs from "fs";

import { EmbeddingBackend } from "./backend";
import { Image } from "./tensorio";

export const DEFAULT_TEMPLATES = [
  "A photo of {category}",
  "a close-up photo of a {category}",
];

export interface LabelClass {
  canonical: string;
  synonyms: string[];
}

/** One class per line: "canonical: synonym, synonym" or just "canonical". */
export function loadLabelSet(path: string): LabelClass[] {
  const classes: LabelClass[] = [];
  for (const raw of fs.readFileSync(path, "utf-8").split("\n")) {
    const line = raw.trim();
    if (!line || line.startsWith("#")) continue;
    const [head, rest] = line.includes(":") ? line.split(":", 2) : [line, ""];
    const canonical = head.trim();
    const synonyms = [canonical, ...rest.split(",").map((s) => s.trim()).filter(Boolean)];
    classes.push({ canonical, synonyms });
  }
  if (classes.length === 0) throw new Error(`${path}: empty label set`);
  return classes;
}

function dot(a: Float64Array, b: Float64Array): number {
  let s = 0;
  for (let i = 0; i < a.length; i++) s += a[i] * b[i];
  return s;
}

export function classScore(
  imageEmbedding: Float64Array,
  cls: LabelClass,
  templates: string[],
  backend: EmbeddingBackend,
): number {
  // mean over template x synonym of the per-prompt score; with dot-product
  // scoring this equals scoring against the averaged prompt embedding
  let total = 0;
  let count = 0;
  for (const synonym of cls.synonyms) {
    for (const template of templates) {
      const prompt = template.replace("{category}", synonym);
      total += dot(imageEmbedding, backend.embedText(prompt));
      count++;
    }
  }
  return total / count;
}

export function classifyPrior(
  image: Image,
  labelSet: LabelClass[],
  templates: string[],
  backend: EmbeddingBackend,
): { label: string; scores: Map<string, number> } {
  if (labelSet.length === 0) throw new Error("empty label set");
  const imageEmbedding = backend.embedImage(image);
  const scores = new Map<string, number>();
  let best: string | null = null;
  for (const cls of labelSet) {
    const score = classScore(imageEmbedding, cls, templates, backend);
    scores.set(cls.canonical, score);
    if (best === null || score > (scores.get(best) as number)) best = cls.canonical;
  }
  return { label: best as string, scores };
}

// ---------------------------------------------------------------------------
// Deterministic embedding stand-in: image statistics on one side, hashed
// character trigrams on the other, both unit-normalized.
// ---------------------------------------------------------------------------

const EMBED_DIM = 24;

function normalize(v: Float64Array): Float64Array {
  let norm = Math.sqrt(v.reduce((a, b) => a + b * b, 0));
  if (norm === 0) norm = 1;
  return v.map((x) => x / norm) as Float64Array;
}

export class ToyEmbedder implements EmbeddingBackend {
  embedImage(image: Image): Float64Array {
    const v = new Float64Array(EMBED_DIM);
    const { width, height, pixels } = image;
    const n = width * height;
    const mean = [0, 0, 0];
    for (let i = 0; i < n; i++) {
      for (let c = 0; c < 3; c++) mean[c] += pixels[3 * i + c];
    }
    for (let c = 0; c < 3; c++) mean[c] /= n;
    const varc = [0, 0, 0];
    for (let i = 0; i < n; i++) {
      for (let c = 0; c < 3; c++) {
        varc[c] += (pixels[3 * i + c] - mean[c]) ** 2;
      }
    }
    for (let c = 0; c < 3; c++) v[c] = mean[c];
    for (let c = 0; c < 3; c++) v[3 + c] = Math.sqrt(varc[c] / n);
    // quadrant means capture coarse composition
    let slot = 6;
    for (const [y0, x0] of [[0, 0], [0, 1], [1, 0], [1, 1]]) {
      let sum = 0;
      let count = 0;
      for (let y = (y0 * height) / 2; y < ((y0 + 1) * height) / 2; y++) {
        for (let x = (x0 * width) / 2; x < ((x0 + 1) * width) / 2; x++) {
          const o = 3 * (y * width + x);
          sum += (pixels[o] + pixels[o + 1] + pixels[o + 2]) / 3;
          count++;
        }
      }
      v[slot++] = sum / count;
    }
    return normalize(v);
  }

  embedText(text: string): Float64Array {
    const v = new Float64Array(EMBED_DIM);
    const s = text.toLowerCase();
    for (let i = 0; i + 2 < s.length; i++) {
      let h = 2166136261;
      for (let j = i; j < i + 3; j++) {
        h = (h ^ s.charCodeAt(j)) >>> 0;
        h = Math.imul(h, 16777619) >>> 0;
      }
      v[h % EMBED_DIM] += 1 + (h % 7) / 7;
    }
    return normalize(v);
  }
}
