import { readFileSync } from "node:fs";
import * as path from "node:path";
import { z } from "zod";
import { ScaleMismatchError, ShapeError } from "./errors.js";
import {
  FloatImage,
  readMaskPng,
  readNormalsPng,
  readTexturePng,
} from "./png.js";

const scaleEntrySchema = z.object({
  scale: z.number().int(),
  images: z.array(z.string()),
  cameras: z.array(z.string()),
  texture: z.string(),
  mask: z.string(),
  normals: z.string(),
});

export const manifestSchema = z.object({
  format_version: z.literal(1),
  scene: z.string(),
  subset: z.enum(["ETH3D", "Collection", "MiddleBury", "SyB3R", "custom"]),
  mesh: z.string(),
  atlas_size: z.tuple([z.number().int(), z.number().int()]),
  retrieval_mode: z.string(),
  scales: z.record(z.string(), scaleEntrySchema),
});

export type SceneManifest = z.infer<typeof manifestSchema>;

export function readManifest(manifestPath: string): SceneManifest {
  const raw = JSON.parse(readFileSync(manifestPath, "utf-8"));
  return manifestSchema.parse(raw);
}

/** Everything a trainer needs from one scene at one scale factor. */
export interface SceneArrays {
  name: string;
  subset: string;
  scale: number;
  hr: FloatImage;
  hrMask: Uint8Array;
  hrNormals: FloatImage;
  lr: FloatImage;
  lrNormals: FloatImage;
}

/**
 * Load the full-resolution texture plus its downscaled counterpart.
 * Raises ScaleMismatchError when the requested factor is absent or
 * the stored image sizes disagree with it.
 */
export function loadScene(manifestPath: string, scale: number): SceneArrays {
  const manifest = readManifest(manifestPath);
  const root = path.dirname(manifestPath);
  const hrEntry = manifest.scales["1"];
  const lrEntry = manifest.scales[String(scale)];
  if (hrEntry === undefined) {
    throw new ScaleMismatchError(`${manifest.scene}: manifest has no scale-1 entry`);
  }
  if (lrEntry === undefined) {
    throw new ScaleMismatchError(
      `${manifest.scene}: manifest has no scale-${scale} entry`,
    );
  }

  const hr = readTexturePng(path.join(root, hrEntry.texture));
  const hrMask = readMaskPng(path.join(root, hrEntry.mask));
  const hrNormals = readNormalsPng(path.join(root, hrEntry.normals));
  const lr = readTexturePng(path.join(root, lrEntry.texture));
  const lrNormals = readNormalsPng(path.join(root, lrEntry.normals));

  if (hrMask.width !== hr.width || hrMask.height !== hr.height) {
    throw new ShapeError(`${manifest.scene}: mask size does not match texture`);
  }
  if (hrNormals.width !== hr.width || hrNormals.height !== hr.height) {
    throw new ShapeError(`${manifest.scene}: normal map size does not match texture`);
  }
  if (lr.width * scale !== hr.width || lr.height * scale !== hr.height) {
    throw new ScaleMismatchError(
      `${manifest.scene}: scale-${scale} texture is ${lr.width}x${lr.height}, ` +
        `expected ${hr.width / scale}x${hr.height / scale}`,
    );
  }
  if (lrNormals.width !== lr.width || lrNormals.height !== lr.height) {
    throw new ShapeError(
      `${manifest.scene}: scale-${scale} normal map size does not match texture`,
    );
  }

  return {
    name: manifest.scene,
    subset: manifest.subset,
    scale,
    hr,
    hrMask: hrMask.data,
    hrNormals,
    lr,
    lrNormals,
  };
}
