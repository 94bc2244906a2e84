import * as tf from "@tensorflow/tfjs";
import { NaNLossError } from "./errors.js";
import { SceneArrays } from "./manifest.js";
import { SRNetwork } from "./model.js";
import { PatchBatch, samplePatches } from "./patches.js";
import { makeRng, randInt } from "./random.js";

/**
 * Mean absolute error over active texels only. The mask multiplies
 * each per-texel difference, so values outside the mask cannot move
 * the loss, and the denominator counts active texels times channels.
 */
export function maskedL1(
  pred: tf.Tensor4D,
  hr: tf.Tensor4D,
  mask: tf.Tensor4D,
): tf.Scalar {
  return tf.tidy(() => {
    const diff = tf.mul(tf.abs(tf.sub(pred, hr)), mask);
    const denom = tf.maximum(tf.mul(tf.sum(mask), 3), 1e-12);
    return tf.div(tf.sum(diff), denom) as tf.Scalar;
  });
}

export function batchTensors(batch: PatchBatch): {
  lr: tf.Tensor4D;
  hr: tf.Tensor4D;
  mask: tf.Tensor4D;
  normals?: tf.Tensor4D;
} {
  const n = batch.count;
  return {
    lr: tf.tensor4d(batch.lr, [n, batch.lrSize, batch.lrSize, 3]),
    hr: tf.tensor4d(batch.hr, [n, batch.hrSize, batch.hrSize, 3]),
    mask: tf.tensor4d(batch.mask, [n, batch.hrSize, batch.hrSize, 1]),
    normals:
      batch.normals === null
        ? undefined
        : tf.tensor4d(batch.normals, [n, batch.normalsSize, batch.normalsSize, 4]),
  };
}

export interface TrainOptions {
  epochs?: number;
  stepsPerEpoch?: number;
  batchSize?: number;
  seed?: number;
  /** Called after each completed epoch with its mean loss. */
  onEpoch?: (epoch: number, meanLoss: number) => void;
}

export interface TrainResult {
  /** One entry per optimizer step. */
  losses: number[];
  epochLosses: number[];
  epochsRun: number;
}

/**
 * Fine-tune a network on sampled patches. The backbone and the
 * randomly initialized tail learn at different rates (bodyLr/tailLr);
 * the plain variant uses a single group at ftLr. A non-finite loss
 * rolls the weights back to the last end-of-epoch checkpoint and
 * raises NaNLossError.
 */
export function trainModel(
  net: SRNetwork,
  scenes: SceneArrays[],
  opts: TrainOptions = {},
): TrainResult {
  const cfg = net.cfg;
  const epochs = opts.epochs ?? cfg.epochs.subset;
  const stepsPerEpoch = opts.stepsPerEpoch ?? 100;
  const batchSize = opts.batchSize ?? 16;
  const rng = makeRng(opts.seed ?? 1);

  const dual = cfg.variant !== "edsr_ft";
  const bodyOpt = tf.train.adam(dual ? cfg.bodyLr : cfg.ftLr);
  const tailOpt = dual ? tf.train.adam(cfg.tailLr) : null;
  type GradMap = Parameters<typeof bodyOpt.applyGradients>[0];
  const trainable = [...net.bodyVariables(), ...net.tailVariables()];

  const losses: number[] = [];
  const epochLosses: number[] = [];
  let lastGood = net.weights.snapshot();
  let epochsRun = 0;

  const cleanup = () => {
    bodyOpt.dispose();
    tailOpt?.dispose();
  };

  try {
    for (let epoch = 0; epoch < epochs; epoch++) {
      let epochSum = 0;
      for (let step = 0; step < stepsPerEpoch; step++) {
        const scene = scenes[randInt(rng, scenes.length)];
        const batch = samplePatches(scene, cfg, batchSize, rng);
        const loss = tf.tidy(() => {
          const t = batchTensors(batch);
          const { value, grads } = tf.variableGrads(
            () => maskedL1(net.forward(t.lr, t.normals), t.hr, t.mask),
            trainable,
          );
          if (tailOpt === null) {
            bodyOpt.applyGradients(grads as unknown as GradMap);
          } else {
            const bodyGrads: tf.NamedTensorMap = {};
            const tailGrads: tf.NamedTensorMap = {};
            for (const [name, g] of Object.entries(grads)) {
              (name.startsWith("body/") ? bodyGrads : tailGrads)[name] = g;
            }
            bodyOpt.applyGradients(bodyGrads as unknown as GradMap);
            tailOpt.applyGradients(tailGrads as unknown as GradMap);
          }
          return value.dataSync()[0];
        });
        if (!Number.isFinite(loss)) {
          net.weights.restore(lastGood);
          throw new NaNLossError(
            `non-finite loss at epoch ${epoch} step ${step}; ` +
              "weights rolled back to the last finite checkpoint",
          );
        }
        losses.push(loss);
        epochSum += loss;
      }
      lastGood = net.weights.snapshot();
      epochsRun = epoch + 1;
      const mean = epochSum / stepsPerEpoch;
      epochLosses.push(mean);
      opts.onEpoch?.(epoch, mean);
    }
  } finally {
    cleanup();
  }

  return { losses, epochLosses, epochsRun };
}
