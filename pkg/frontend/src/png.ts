import { readFileSync, writeFileSync } from "node:fs";
import { decode, encode } from "fast-png";
import { ShapeError } from "./errors.js";

/** Planar float image, values in [0, 1], laid out [h, w, channels]. */
export interface FloatImage {
  width: number;
  height: number;
  channels: number;
  data: Float32Array;
}

function decodeFile(path: string) {
  return decode(readFileSync(path));
}

/** Read an 8- or 16-bit color PNG; extra channels beyond RGB are dropped. */
export function readTexturePng(path: string): FloatImage {
  const png = decodeFile(path);
  if (png.channels < 3) {
    throw new ShapeError(`${path}: expected a color image, got ${png.channels} channel(s)`);
  }
  const peak = png.depth === 16 ? 65535 : 255;
  const n = png.width * png.height;
  const data = new Float32Array(n * 3);
  for (let i = 0; i < n; i++) {
    for (let c = 0; c < 3; c++) {
      data[i * 3 + c] = png.data[i * png.channels + c] / peak;
    }
  }
  return { width: png.width, height: png.height, channels: 3, data };
}

/** Read a mask PNG: texels with first-channel value above half scale are active. */
export function readMaskPng(path: string): {
  width: number;
  height: number;
  data: Uint8Array;
} {
  const png = decodeFile(path);
  const half = png.depth === 16 ? 32767 : 127;
  const n = png.width * png.height;
  const data = new Uint8Array(n);
  for (let i = 0; i < n; i++) {
    data[i] = png.data[i * png.channels] > half ? 1 : 0;
  }
  return { width: png.width, height: png.height, data };
}

/** Read a baked normal map (RGBA, alpha 255 on active texels) as 4-channel floats. */
export function readNormalsPng(path: string): FloatImage {
  const png = decodeFile(path);
  if (png.channels !== 4) {
    throw new ShapeError(`${path}: expected RGBA, got ${png.channels} channel(s)`);
  }
  const peak = png.depth === 16 ? 65535 : 255;
  const data = new Float32Array(png.data.length);
  for (let i = 0; i < png.data.length; i++) {
    data[i] = png.data[i] / peak;
  }
  return { width: png.width, height: png.height, channels: 4, data };
}

/** Write a 3-channel float image as a 16-bit RGB PNG. */
export function writeTexturePng(path: string, img: FloatImage): void {
  if (img.channels !== 3 || img.data.length !== img.width * img.height * 3) {
    throw new ShapeError(
      `cannot write ${path}: need [h, w, 3] data, got ${img.channels} channels`,
    );
  }
  const out = new Uint16Array(img.data.length);
  for (let i = 0; i < img.data.length; i++) {
    const v = Math.min(Math.max(img.data[i], 0), 1);
    out[i] = Math.round(v * 65535);
  }
  const bytes = encode({
    width: img.width,
    height: img.height,
    channels: 3,
    depth: 16,
    data: out,
  });
  writeFileSync(path, bytes);
}

/** Write an inactive-texel mask as an 8-bit grayscale PNG (255 = active). */
export function writeMaskPng(
  path: string,
  width: number,
  height: number,
  mask: Uint8Array,
): void {
  if (mask.length !== width * height) {
    throw new ShapeError(`cannot write ${path}: mask length does not match size`);
  }
  const out = new Uint8Array(mask.length);
  for (let i = 0; i < mask.length; i++) {
    out[i] = mask[i] ? 255 : 0;
  }
  writeFileSync(path, encode({ width, height, channels: 1, depth: 8, data: out }));
}
