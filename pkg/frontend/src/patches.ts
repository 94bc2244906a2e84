import { NoValidPatchesError } from "./errors.js";
import { SceneArrays } from "./manifest.js";
import { SRModelConfig } from "./model.js";
import { FloatImage } from "./png.js";
import { randInt, Rng } from "./random.js";

/** A batch of aligned crops; all arrays are row-major [n, h, w, c]. */
export interface PatchBatch {
  count: number;
  lrSize: number;
  hrSize: number;
  lr: Float32Array;
  hr: Float32Array;
  /** 1.0 on active HR texels, 0.0 elsewhere; [n, hrSize, hrSize, 1]. */
  mask: Float32Array;
  /** Normal-map crops, or null for the plain variant. */
  normals: Float32Array | null;
  /** Edge length of the normal crops (LR or HR depending on variant). */
  normalsSize: number;
}

function copyWindow(
  img: FloatImage,
  x0: number,
  y0: number,
  size: number,
  out: Float32Array,
  offset: number,
): void {
  const c = img.channels;
  for (let y = 0; y < size; y++) {
    const src = ((y0 + y) * img.width + x0) * c;
    out.set(img.data.subarray(src, src + size * c), offset + y * size * c);
  }
}

function countInactive(
  mask: Uint8Array,
  width: number,
  x0: number,
  y0: number,
  size: number,
): number {
  let inactive = 0;
  for (let y = 0; y < size; y++) {
    const row = (y0 + y) * width + x0;
    for (let x = 0; x < size; x++) {
      if (mask[row + x] === 0) inactive++;
    }
  }
  return inactive;
}

/**
 * Draw aligned LR/HR training crops. HR windows are anchored on
 * multiples of the scale factor so each one covers whole LR texels.
 * Windows with too many inactive texels are rejected and redrawn.
 */
export function samplePatches(
  scene: SceneArrays,
  cfg: SRModelConfig,
  count: number,
  rng: Rng,
): PatchBatch {
  const hrSize = cfg.patch;
  const lrSize = hrSize / cfg.scale;
  if (scene.lr.width < lrSize || scene.lr.height < lrSize) {
    throw new NoValidPatchesError(
      `${scene.name}: texture ${scene.lr.width}x${scene.lr.height} at ` +
        `scale ${cfg.scale} is smaller than a ${lrSize}x${lrSize} crop`,
    );
  }

  const useNormals = cfg.variant !== "edsr_ft";
  const normalsImg = cfg.variant === "nhr" ? scene.hrNormals : scene.lrNormals;
  const normalsSize = cfg.variant === "nhr" ? hrSize : lrSize;

  const lr = new Float32Array(count * lrSize * lrSize * 3);
  const hr = new Float32Array(count * hrSize * hrSize * 3);
  const mask = new Float32Array(count * hrSize * hrSize);
  const normals = useNormals
    ? new Float32Array(count * normalsSize * normalsSize * 4)
    : null;

  const maxAttempts = Math.max(1000, count * 1000);
  let accepted = 0;
  let attempts = 0;
  while (accepted < count) {
    if (attempts >= maxAttempts) {
      throw new NoValidPatchesError(
        `${scene.name}: accepted ${accepted}/${count} patches after ` +
          `${attempts} draws (threshold ${cfg.blackThreshold})`,
      );
    }
    attempts++;
    const lx = randInt(rng, scene.lr.width - lrSize + 1);
    const ly = randInt(rng, scene.lr.height - lrSize + 1);
    const hx = lx * cfg.scale;
    const hy = ly * cfg.scale;
    const inactive = countInactive(scene.hrMask, scene.hr.width, hx, hy, hrSize);
    if (inactive > cfg.blackThreshold) continue;

    copyWindow(scene.lr, lx, ly, lrSize, lr, accepted * lrSize * lrSize * 3);
    copyWindow(scene.hr, hx, hy, hrSize, hr, accepted * hrSize * hrSize * 3);
    for (let y = 0; y < hrSize; y++) {
      const row = (hy + y) * scene.hr.width + hx;
      const dst = accepted * hrSize * hrSize + y * hrSize;
      for (let x = 0; x < hrSize; x++) {
        mask[dst + x] = scene.hrMask[row + x];
      }
    }
    if (normals !== null) {
      const nx = cfg.variant === "nhr" ? hx : lx;
      const ny = cfg.variant === "nhr" ? hy : ly;
      copyWindow(
        normalsImg,
        nx,
        ny,
        normalsSize,
        normals,
        accepted * normalsSize * normalsSize * 4,
      );
    }
    accepted++;
  }

  return { count, lrSize, hrSize, lr, hr, mask, normals, normalsSize };
}
