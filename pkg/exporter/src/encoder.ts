import { Image } from "./image.js";

export class EncoderUnavailableError extends Error {}

export interface Encoder {
  name: string;
  dimension: number;
  encode(image: Image): number[];
}

/**
 * Deterministic pooled image features: per-cell mean RGB over a 4x4 grid
 * (48 dims) plus a 16-bin global luminance histogram, L2-normalized.
 *
 * This is the self-contained default; pretrained network encoders need
 * downloaded weights and register as unavailable in offline environments.
 */
const GRID = 4;
const HIST_BINS = 16;

function gridPoolEncode(image: Image): number[] {
  const features = new Array<number>(GRID * GRID * 3 + HIST_BINS).fill(0);
  const counts = new Array<number>(GRID * GRID).fill(0);
  for (let y = 0; y < image.height; y++) {
    const gy = Math.min(GRID - 1, Math.floor((y * GRID) / image.height));
    for (let x = 0; x < image.width; x++) {
      const gx = Math.min(GRID - 1, Math.floor((x * GRID) / image.width));
      const cell = gy * GRID + gx;
      const o = (y * image.width + x) * 4;
      const r = image.pixels[o] / 255;
      const g = image.pixels[o + 1] / 255;
      const b = image.pixels[o + 2] / 255;
      features[cell * 3] += r;
      features[cell * 3 + 1] += g;
      features[cell * 3 + 2] += b;
      counts[cell] += 1;
      const luma = (r + g + b) / 3;
      const bin = Math.min(HIST_BINS - 1, Math.floor(luma * HIST_BINS));
      features[GRID * GRID * 3 + bin] += 1;
    }
  }
  for (let cell = 0; cell < GRID * GRID; cell++) {
    if (counts[cell] > 0) {
      features[cell * 3] /= counts[cell];
      features[cell * 3 + 1] /= counts[cell];
      features[cell * 3 + 2] /= counts[cell];
    }
  }
  const pixels = image.width * image.height;
  for (let bin = 0; bin < HIST_BINS; bin++) {
    features[GRID * GRID * 3 + bin] /= pixels;
  }
  let norm = Math.sqrt(features.reduce((s, v) => s + v * v, 0));
  if (norm === 0) norm = 1;
  return features.map((v) => v / norm);
}

const ENCODERS: Record<string, Encoder> = {
  "grid-pool-v1": {
    name: "grid-pool-v1",
    dimension: GRID * GRID * 3 + HIST_BINS,
    encode: gridPoolEncode,
  },
};

export function getEncoder(name: string): Encoder {
  const encoder = ENCODERS[name];
  if (!encoder) {
    const known = Object.keys(ENCODERS).join(", ");
    throw new EncoderUnavailableError(
      `encoder "${name}" is not available in this environment (have: ${known}); ` +
        "pretrained network encoders need their weights downloaded first",
    );
  }
  return encoder;
}

export function availableEncoders(): string[] {
  return Object.keys(ENCODERS);
}
