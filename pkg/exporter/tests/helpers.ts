import { mkdirSync } from "fs";
import { join } from "path";

import { grayImage, Image, saveImage } from "../src/image.js";

/** Small deterministic PRNG so test images are stable across runs. */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a |= 0;
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export function randomImage(width: number, height: number, seed: number): Image {
  const rand = mulberry32(seed);
  const pixels = new Uint8Array(width * height * 4);
  for (let i = 0; i < width * height; i++) {
    pixels[i * 4] = Math.floor(rand() * 256);
    pixels[i * 4 + 1] = Math.floor(rand() * 256);
    pixels[i * 4 + 2] = Math.floor(rand() * 256);
    pixels[i * 4 + 3] = 255;
  }
  return { width, height, pixels };
}

export function binaryMask(width: number, height: number, seed: number): Image {
  const rand = mulberry32(seed);
  const values: number[] = [];
  for (let i = 0; i < width * height; i++) {
    values.push(rand() > 0.5 ? 1 : 0);
  }
  return grayImage(width, height, values);
}

export function writeImageTree(root: string, layout: Record<string, number[]>): void {
  for (const [category, seeds] of Object.entries(layout)) {
    const dir = join(root, category);
    mkdirSync(dir, { recursive: true });
    seeds.forEach((seed, index) => {
      saveImage(join(dir, `img${String(index).padStart(2, "0")}.png`), randomImage(16, 12, seed));
    });
  }
}
