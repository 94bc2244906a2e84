import * as tf from "@tensorflow/tfjs";
import { ScaleMismatchError } from "./errors.js";
import { SceneArrays } from "./manifest.js";
import { SRNetwork } from "./model.js";
import { FloatImage, writeTexturePng } from "./png.js";

export interface InferOptions {
  /** LR tile edge; unset runs the whole map in one forward pass. */
  tile?: number;
  /** LR texel overlap between tiles (blended with a linear ramp). */
  overlap?: number;
}

function sliceImage(
  img: FloatImage,
  x0: number,
  y0: number,
  w: number,
  h: number,
): tf.Tensor4D {
  const out = new Float32Array(w * h * img.channels);
  const c = img.channels;
  for (let y = 0; y < h; y++) {
    const src = ((y0 + y) * img.width + x0) * c;
    out.set(img.data.subarray(src, src + w * c), y * w * c);
  }
  return tf.tensor4d(out, [1, h, w, c]);
}

function rampWeights(len: number, ramp: number, left: boolean, right: boolean): Float32Array {
  const w = new Float32Array(len);
  for (let i = 0; i < len; i++) {
    let v = 1;
    if (left) v = Math.min(v, (i + 1) / (ramp + 1));
    if (right) v = Math.min(v, (len - i) / (ramp + 1));
    w[i] = v;
  }
  return w;
}

function normalsFor(net: SRNetwork, scene: SceneArrays): FloatImage | null {
  if (net.cfg.variant === "nlr") return scene.lrNormals;
  if (net.cfg.variant === "nhr") return scene.hrNormals;
  return null;
}

/**
 * Run the network over a whole LR texture map. Optionally processes
 * the map in overlapping tiles whose contributions are feathered
 * together, for maps too large for one forward pass. Inactive HR
 * texels are zeroed using the scene mask.
 */
export function inferArrays(
  net: SRNetwork,
  scene: SceneArrays,
  opts: InferOptions = {},
): FloatImage {
  if (scene.scale !== net.cfg.scale) {
    throw new ScaleMismatchError(
      `scene is scale ${scene.scale}, model is scale ${net.cfg.scale}`,
    );
  }
  const s = net.cfg.scale;
  const normals = normalsFor(net, scene);
  const outW = scene.lr.width * s;
  const outH = scene.lr.height * s;

  let data: Float32Array;
  if (opts.tile === undefined) {
    data = tf.tidy(() => {
      const lr = sliceImage(scene.lr, 0, 0, scene.lr.width, scene.lr.height);
      const n =
        normals === null
          ? undefined
          : sliceImage(normals, 0, 0, normals.width, normals.height);
      return net.forward(lr, n).dataSync() as Float32Array;
    });
  } else {
    data = inferTiled(net, scene, normals, opts.tile, opts.overlap ?? 8);
  }

  const out = new Float32Array(outW * outH * 3);
  for (let i = 0; i < outW * outH; i++) {
    const active = scene.hrMask[i] !== 0;
    for (let c = 0; c < 3; c++) {
      const v = data[i * 3 + c];
      out[i * 3 + c] = active ? Math.min(Math.max(v, 0), 1) : 0;
    }
  }
  return { width: outW, height: outH, channels: 3, data: out };
}

function inferTiled(
  net: SRNetwork,
  scene: SceneArrays,
  normals: FloatImage | null,
  tile: number,
  overlap: number,
): Float32Array {
  if (overlap < 8) {
    throw new ScaleMismatchError(`tile overlap must be at least 8, got ${overlap}`);
  }
  if (tile <= overlap) {
    throw new ScaleMismatchError(`tile ${tile} must exceed overlap ${overlap}`);
  }
  const s = net.cfg.scale;
  const lrW = scene.lr.width;
  const lrH = scene.lr.height;
  const outW = lrW * s;
  const outH = lrH * s;
  const acc = new Float64Array(outW * outH * 3);
  const wsum = new Float64Array(outW * outH);

  const step = tile - overlap;
  for (let y0 = 0; y0 < lrH; y0 += step) {
    const ty = Math.min(y0, Math.max(0, lrH - tile));
    const th = Math.min(tile, lrH);
    for (let x0 = 0; x0 < lrW; x0 += step) {
      const tx = Math.min(x0, Math.max(0, lrW - tile));
      const tw = Math.min(tile, lrW);
      const tileOut = tf.tidy(() => {
        const lr = sliceImage(scene.lr, tx, ty, tw, th);
        let n: tf.Tensor4D | undefined;
        if (normals !== null) {
          const f = net.cfg.variant === "nhr" ? s : 1;
          n = sliceImage(normals, tx * f, ty * f, tw * f, th * f);
        }
        return net.forward(lr, n).dataSync() as Float32Array;
      });

      const hw = tw * s;
      const hh = th * s;
      const wx = rampWeights(hw, overlap * s, tx > 0, tx + tw < lrW);
      const wy = rampWeights(hh, overlap * s, ty > 0, ty + th < lrH);
      for (let y = 0; y < hh; y++) {
        const row = (ty * s + y) * outW + tx * s;
        for (let x = 0; x < hw; x++) {
          const w = wx[x] * wy[y];
          const dst = row + x;
          wsum[dst] += w;
          for (let c = 0; c < 3; c++) {
            acc[dst * 3 + c] += w * tileOut[(y * hw + x) * 3 + c];
          }
        }
      }
      if (tx + tw >= lrW) break;
    }
    if (ty + th >= lrH) break;
  }

  const data = new Float32Array(outW * outH * 3);
  for (let i = 0; i < outW * outH; i++) {
    const w = wsum[i];
    for (let c = 0; c < 3; c++) {
      data[i * 3 + c] = w > 0 ? acc[i * 3 + c] / w : 0;
    }
  }
  return data;
}

/** Super-resolve a scene's LR texture and write the result as 16-bit PNG. */
export function inferTexture(
  net: SRNetwork,
  scene: SceneArrays,
  outPath: string,
  opts: InferOptions = {},
): FloatImage {
  const img = inferArrays(net, scene, opts);
  writeTexturePng(outPath, img);
  return img;
}
