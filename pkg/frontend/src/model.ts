import * as tf from "@tensorflow/tfjs";
import { ShapeError } from "./errors.js";

export type Variant = "edsr_ft" | "nlr" | "nhr";

export interface SRModelConfig {
  variant: Variant;
  scale: number;
  /** Residual blocks in the backbone (the last fineTuneBlocks sit after the injection point). */
  bodyBlocks: number;
  featureChannels: number;
  normalChannels: number;
  fineTuneBlocks: number;
  residualScale: number;
  bodyLr: number;
  tailLr: number;
  ftLr: number;
  /** HR patch edge in texels; LR crops are patch/scale. */
  patch: number;
  /** Max inactive texels tolerated per HR patch. */
  blackThreshold: number;
  epochs: { subset: number; whole: number };
}

export function defaultConfig(
  variant: Variant,
  scale: number,
  overrides: Partial<SRModelConfig> = {},
): SRModelConfig {
  const cfg: SRModelConfig = {
    variant,
    scale,
    bodyBlocks: 32,
    featureChannels: 256,
    normalChannels: 4,
    fineTuneBlocks: 2,
    residualScale: 0.1,
    bodyLr: 1e-5,
    tailLr: 1e-4,
    ftLr: 2.5e-5,
    patch: 48,
    blackThreshold: 50,
    epochs: { subset: 50, whole: 100 },
    ...overrides,
  };
  if (![2, 3, 4].includes(cfg.scale)) {
    throw new ShapeError(`scale must be 2, 3 or 4, got ${cfg.scale}`);
  }
  if (cfg.patch % cfg.scale !== 0) {
    throw new ShapeError(
      `patch ${cfg.patch} is not divisible by scale ${cfg.scale}`,
    );
  }
  if (cfg.fineTuneBlocks >= cfg.bodyBlocks) {
    throw new ShapeError("fineTuneBlocks must be < bodyBlocks");
  }
  return cfg;
}

/** Named variable store; creation is deterministic for a fixed seed. */
export class WeightStore {
  private static nextId = 0;

  private vars = new Map<string, tf.Variable>();
  private counter = 0;
  /** Distinguishes registered tensor names across coexisting stores. */
  private id = WeightStore.nextId++;

  constructor(private seed: number = 1) {}

  get(name: string, shape: number[], kind: "he" | "zeros"): tf.Variable {
    const existing = this.vars.get(name);
    if (existing !== undefined) {
      if (existing.shape.join() !== shape.join()) {
        throw new ShapeError(
          `variable ${name} exists with shape [${existing.shape}], ` +
            `requested [${shape}]`,
        );
      }
      return existing;
    }
    const init = tf.tidy(() => {
      if (kind === "zeros") {
        return tf.zeros(shape);
      }
      const fanIn = shape.length === 4 ? shape[0] * shape[1] * shape[2] : shape[0];
      const std = Math.sqrt(2 / fanIn);
      return tf.randomNormal(shape, 0, std, "float32", this.seed + this.counter);
    });
    this.counter += 1;
    const v = tf.variable(init, true, `${name}#${this.id}`);
    init.dispose();
    this.vars.set(name, v);
    return v;
  }

  variables(prefix = ""): tf.Variable[] {
    return this.entries(prefix).map(([, v]) => v);
  }

  entries(prefix = ""): Array<[string, tf.Variable]> {
    return [...this.vars.entries()].filter(([name]) => name.startsWith(prefix));
  }

  names(): string[] {
    return [...this.vars.keys()].sort();
  }

  snapshot(): Record<string, { shape: number[]; values: Float32Array }> {
    const out: Record<string, { shape: number[]; values: Float32Array }> = {};
    for (const [name, v] of this.vars) {
      out[name] = {
        shape: [...v.shape],
        values: v.dataSync() as Float32Array,
      };
    }
    return out;
  }

  restore(snap: Record<string, { shape: number[]; values: Float32Array }>): void {
    for (const [name, entry] of Object.entries(snap)) {
      const v = this.vars.get(name);
      if (v === undefined) {
        throw new ShapeError(`snapshot has unknown variable ${name}`);
      }
      tf.tidy(() => v.assign(tf.tensor(entry.values, entry.shape)));
    }
  }

  dispose(): void {
    for (const v of this.vars.values()) {
      v.dispose();
    }
    this.vars.clear();
  }
}

function conv(
  store: WeightStore,
  name: string,
  x: tf.Tensor4D,
  outChannels: number,
  kernel = 3,
): tf.Tensor4D {
  const inChannels = x.shape[3];
  const w = store.get(`${name}/kernel`, [kernel, kernel, inChannels, outChannels], "he");
  const b = store.get(`${name}/bias`, [outChannels], "zeros");
  return tf.add(tf.conv2d(x, w as tf.Tensor4D, 1, "same"), b);
}

function resBlock(
  store: WeightStore,
  name: string,
  x: tf.Tensor4D,
  residualScale: number,
): tf.Tensor4D {
  let r = tf.relu(conv(store, `${name}/conv1`, x, x.shape[3]));
  r = conv(store, `${name}/conv2`, r, x.shape[3]);
  return tf.add(x, tf.mul(r, residualScale));
}

/**
 * Block-to-space rearrangement written with reshape/transpose so it
 * stays differentiable on every backend.
 */
function pixelShuffle(x: tf.Tensor4D, s: number): tf.Tensor4D {
  const [n, h, w, cs2] = x.shape;
  const c = cs2 / (s * s);
  return tf.reshape(
    tf.transpose(tf.reshape(x, [n, h, w, s, s, c]), [0, 1, 3, 2, 4, 5]),
    [n, h * s, w * s, c],
  ) as tf.Tensor4D;
}

/** Sub-pixel upsampler: conv to s^2 times the channels, then rearrange. */
function upsample(
  store: WeightStore,
  name: string,
  x: tf.Tensor4D,
  scale: number,
): tf.Tensor4D {
  const stages = scale === 4 ? [2, 2] : [scale];
  let out = x;
  stages.forEach((s, i) => {
    const up = conv(store, `${name}/conv${i}`, out, out.shape[3] * s * s);
    out = pixelShuffle(up, s);
  });
  return out;
}

export class SRNetwork {
  readonly weights: WeightStore;
  /** Channel count observed at the normal-map injection point on the last forward. */
  lastInjectionChannels: number | null = null;

  constructor(readonly cfg: SRModelConfig, seed = 1) {
    this.weights = new WeightStore(seed);
    // Materialize every weight up front so snapshots and pretrained
    // loads work before the first real forward pass.
    tf.tidy(() => {
      const h = this.cfg.scale;
      const lr = tf.zeros([1, h, h, 3]) as tf.Tensor4D;
      const shape = this.normalsShapeFor(h, h);
      const normals =
        shape === null
          ? undefined
          : (tf.zeros([shape[0], shape[1], shape[2], shape[3]]) as tf.Tensor4D);
      this.forward(lr, normals);
    });
  }

  /** Expected normal-map tensor shape for an h-by-w LR input, or null for edsr_ft. */
  normalsShapeFor(h: number, w: number): number[] | null {
    const c = this.cfg.normalChannels;
    if (this.cfg.variant === "nlr") return [1, h, w, c];
    if (this.cfg.variant === "nhr") {
      return [1, h * this.cfg.scale, w * this.cfg.scale, c];
    }
    return null;
  }

  /** What the post-concatenation channel count must be (260 at default widths). */
  get injectionChannels(): number | null {
    if (this.cfg.variant === "edsr_ft") return null;
    return this.cfg.featureChannels + this.cfg.normalChannels;
  }

  bodyVariables(): tf.Variable[] {
    return this.weights.variables("body/");
  }

  tailVariables(): tf.Variable[] {
    return this.weights.variables("tail/");
  }

  forward(lr: tf.Tensor4D, normals?: tf.Tensor4D): tf.Tensor4D {
    const cfg = this.cfg;
    if (lr.rank !== 4 || lr.shape[3] !== 3) {
      throw new ShapeError(`LR input must be [batch, h, w, 3], got [${lr.shape}]`);
    }
    if (cfg.variant !== "edsr_ft") {
      if (normals === undefined) {
        throw new ShapeError(`${cfg.variant} needs a normal-map tensor`);
      }
      const want = this.normalsShapeFor(lr.shape[1], lr.shape[2])!;
      const got = normals.shape;
      if (
        got.length !== 4 ||
        got[0] !== lr.shape[0] ||
        got[1] !== want[1] ||
        got[2] !== want[2] ||
        got[3] !== want[3]
      ) {
        throw new ShapeError(
          `${cfg.variant} normals must be [${lr.shape[0]}, ${want[1]}, ` +
            `${want[2]}, ${want[3]}], got [${got}]`,
        );
      }
    }

    return tf.tidy(() => {
      const store = this.weights;
      const plainBlocks = cfg.bodyBlocks - cfg.fineTuneBlocks;
      const head = conv(store, "body/head", lr, cfg.featureChannels);
      let x = head;
      for (let i = 0; i < plainBlocks; i++) {
        x = resBlock(store, `body/block${i}`, x, cfg.residualScale);
      }

      if (cfg.variant === "edsr_ft") {
        for (let i = plainBlocks; i < cfg.bodyBlocks; i++) {
          x = resBlock(store, `body/block${i}`, x, cfg.residualScale);
        }
        x = conv(store, "body/body_end", x, cfg.featureChannels);
        x = tf.add(x, head);
        x = upsample(store, "tail/up", x, cfg.scale);
        return conv(store, "tail/out", x, 3);
      }

      if (cfg.variant === "nlr") {
        x = tf.concat([x, normals!], 3);
        this.checkInjection(x);
        for (let i = 0; i < cfg.fineTuneBlocks; i++) {
          x = resBlock(store, `tail/block${i}`, x, cfg.residualScale);
        }
        x = conv(store, "tail/body_end", x, cfg.featureChannels);
        x = tf.add(x, head);
        x = upsample(store, "tail/up", x, cfg.scale);
        return conv(store, "tail/out", x, 3);
      }

      // nhr: finish the LR trunk, move up to HR, then refine with the
      // HR normal map attached.
      x = conv(store, "body/body_end", x, cfg.featureChannels);
      x = tf.add(x, head);
      x = upsample(store, "tail/up", x, cfg.scale);
      x = tf.concat([x, normals!], 3);
      this.checkInjection(x);
      for (let i = 0; i < cfg.fineTuneBlocks; i++) {
        x = resBlock(store, `tail/block${i}`, x, cfg.residualScale);
      }
      x = tf.relu(conv(store, "tail/conv0", x, cfg.featureChannels));
      x = tf.relu(conv(store, "tail/conv1", x, cfg.featureChannels));
      x = tf.relu(conv(store, "tail/conv2", x, cfg.featureChannels));
      return conv(store, "tail/out", x, 3);
    });
  }

  private checkInjection(x: tf.Tensor4D): void {
    const want = this.injectionChannels!;
    if (x.shape[3] !== want) {
      throw new ShapeError(
        `post-concatenation tensor has ${x.shape[3]} channels, expected ${want}`,
      );
    }
    this.lastInjectionChannels = x.shape[3];
  }

  dispose(): void {
    this.weights.dispose();
  }
}

export function buildNetwork(cfg: SRModelConfig, seed = 1): SRNetwork {
  return new SRNetwork(cfg, seed);
}

/**
 * Copy backbone weights from a pretrained snapshot. Variables missing
 * from the snapshot stay randomly initialized; the caller is warned
 * because results then differ from a properly warm-started run.
 */
export function loadBodyWeights(
  net: SRNetwork,
  snap: Record<string, { shape: number[]; values: Float32Array }>,
): string[] {
  const missing: string[] = [];
  for (const [name, v] of net.weights.entries("body/")) {
    const entry = snap[name];
    if (entry === undefined || entry.shape.join() !== v.shape.join()) {
      missing.push(name);
      continue;
    }
    tf.tidy(() => v.assign(tf.tensor(entry.values, entry.shape)));
  }
  if (missing.length > 0) {
    console.warn(
      `body weights missing for ${missing.length} variables; ` +
        "they remain randomly initialized",
    );
  }
  return missing;
}
