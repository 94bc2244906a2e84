import { SceneArrays } from "../src/manifest.js";
import { FloatImage } from "../src/png.js";

function image(width: number, height: number, channels: number): FloatImage {
  return {
    width,
    height,
    channels,
    data: new Float32Array(width * height * channels),
  };
}

/**
 * Synthetic in-memory scene whose texel values encode their own
 * coordinates: channel 0 holds x, channel 1 holds y, channel 2 a
 * domain marker (0.25 LR, 0.75 HR). Handy for asserting crop
 * alignment without reading files.
 */
export function coordScene(
  lrW: number,
  lrH: number,
  scale: number,
  maskFn: (x: number, y: number) => boolean = () => true,
): SceneArrays {
  const hrW = lrW * scale;
  const hrH = lrH * scale;
  const hr = image(hrW, hrH, 3);
  const lr = image(lrW, lrH, 3);
  const hrNormals = image(hrW, hrH, 4);
  const lrNormals = image(lrW, lrH, 4);
  const hrMask = new Uint8Array(hrW * hrH);

  for (let y = 0; y < hrH; y++) {
    for (let x = 0; x < hrW; x++) {
      const i = y * hrW + x;
      hr.data[i * 3] = x;
      hr.data[i * 3 + 1] = y;
      hr.data[i * 3 + 2] = 0.75;
      hrNormals.data[i * 4] = x;
      hrNormals.data[i * 4 + 1] = y;
      hrNormals.data[i * 4 + 3] = 1;
      hrMask[i] = maskFn(x, y) ? 1 : 0;
    }
  }
  for (let y = 0; y < lrH; y++) {
    for (let x = 0; x < lrW; x++) {
      const i = y * lrW + x;
      lr.data[i * 3] = x;
      lr.data[i * 3 + 1] = y;
      lr.data[i * 3 + 2] = 0.25;
      lrNormals.data[i * 4] = x;
      lrNormals.data[i * 4 + 1] = y;
      lrNormals.data[i * 4 + 3] = 1;
    }
  }
  return {
    name: "coords",
    subset: "custom",
    scale,
    hr,
    hrMask,
    hrNormals,
    lr,
    lrNormals,
  };
}

/**
 * Band-limited scene with values inside [0, 1]: the HR map is a
 * smooth trig pattern and the LR map is its box average, so a small
 * network can actually fit the pairing.
 */
export function smoothScene(
  lrW: number,
  lrH: number,
  scale: number,
  maskFn: (x: number, y: number) => boolean = () => true,
): SceneArrays {
  const hrW = lrW * scale;
  const hrH = lrH * scale;
  const hr = image(hrW, hrH, 3);
  const hrNormals = image(hrW, hrH, 4);
  const hrMask = new Uint8Array(hrW * hrH);

  for (let y = 0; y < hrH; y++) {
    for (let x = 0; x < hrW; x++) {
      const i = y * hrW + x;
      hr.data[i * 3] = 0.5 + 0.35 * Math.sin((x + 2 * y) / 5);
      hr.data[i * 3 + 1] = 0.5 + 0.35 * Math.cos((2 * x - y) / 7);
      hr.data[i * 3 + 2] = 0.5 + 0.3 * Math.sin(x / 4) * Math.cos(y / 3);
      const n = [Math.sin(x / 9), Math.cos(y / 9), 1];
      const len = Math.hypot(...n);
      for (let c = 0; c < 3; c++) {
        hrNormals.data[i * 4 + c] = (n[c] / len + 1) / 2;
      }
      hrNormals.data[i * 4 + 3] = 1;
      hrMask[i] = maskFn(x, y) ? 1 : 0;
    }
  }

  const lr = image(lrW, lrH, 3);
  const lrNormals = image(lrW, lrH, 4);
  for (let y = 0; y < lrH; y++) {
    for (let x = 0; x < lrW; x++) {
      const i = y * lrW + x;
      for (let c = 0; c < 3; c++) {
        let sum = 0;
        for (let dy = 0; dy < scale; dy++) {
          for (let dx = 0; dx < scale; dx++) {
            const j = (y * scale + dy) * hrW + (x * scale + dx);
            sum += hr.data[j * 3 + c];
          }
        }
        lr.data[i * 3 + c] = sum / (scale * scale);
      }
      for (let c = 0; c < 4; c++) {
        const j = (y * scale) * hrW + x * scale;
        lrNormals.data[i * 4 + c] = hrNormals.data[j * 4 + c];
      }
    }
  }
  return {
    name: "smooth",
    subset: "custom",
    scale,
    hr,
    hrMask,
    hrNormals,
    lr,
    lrNormals,
  };
}
