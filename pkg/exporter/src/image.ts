import { readFileSync, writeFileSync } from "fs";
import { PNG } from "pngjs";

export interface Image {
  width: number;
  height: number;
  /** RGBA bytes, row-major, 4 per pixel. */
  pixels: Uint8Array;
}

export class UnreadableImageError extends Error {}

export function loadImage(path: string): Image {
  let png: PNG;
  try {
    png = PNG.sync.read(readFileSync(path));
  } catch (err) {
    throw new UnreadableImageError(`cannot decode ${path}: ${(err as Error).message}`);
  }
  return { width: png.width, height: png.height, pixels: new Uint8Array(png.data) };
}

export function saveImage(path: string, image: Image): void {
  const png = new PNG({ width: image.width, height: image.height });
  png.data = Buffer.from(image.pixels);
  writeFileSync(path, PNG.sync.write(png));
}

/** Luminance grid in [0, 1]: mean of the RGB channels over 255. */
export function toGray(image: Image): Float64Array {
  const out = new Float64Array(image.width * image.height);
  for (let i = 0; i < out.length; i++) {
    const o = i * 4;
    out[i] = (image.pixels[o] + image.pixels[o + 1] + image.pixels[o + 2]) / (3 * 255);
  }
  return out;
}

export function grayImage(width: number, height: number, values: number[]): Image {
  const pixels = new Uint8Array(width * height * 4);
  for (let i = 0; i < width * height; i++) {
    const v = Math.round(values[i] * 255);
    pixels[i * 4] = v;
    pixels[i * 4 + 1] = v;
    pixels[i * 4 + 2] = v;
    pixels[i * 4 + 3] = 255;
  }
  return { width, height, pixels };
}
