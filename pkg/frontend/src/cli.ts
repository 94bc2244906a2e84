#!/usr/bin/env node
import { existsSync, readdirSync, writeFileSync } from "node:fs";
import * as path from "node:path";
import yargs from "yargs";
import { hideBin } from "yargs/helpers";
import { loadCheckpoint, saveCheckpoint } from "./checkpoint.js";
import { crossvalSplit, SceneRef } from "./crossval.js";
import {
  InsufficientScenesError,
  NaNLossError,
  NoValidPatchesError,
  ScaleMismatchError,
  ShapeError,
} from "./errors.js";
import { inferTexture } from "./infer.js";
import { loadScene, readManifest, SceneArrays } from "./manifest.js";
import { buildNetwork, defaultConfig, loadBodyWeights, Variant } from "./model.js";
import { trainModel } from "./train.js";

function findManifests(root: string): string[] {
  return readdirSync(root, { withFileTypes: true })
    .filter((e) => e.isDirectory())
    .map((e) => path.join(root, e.name, "manifest.json"))
    .filter((p) => existsSync(p))
    .sort();
}

function sceneRefs(root: string): SceneRef[] {
  return findManifests(root).map((p) => {
    const m = readManifest(p);
    return { name: m.scene, subset: m.subset };
  });
}

interface ModelFlags {
  variant: string;
  scale: number;
  featureChannels: number;
  bodyBlocks: number;
}

function configFrom(flags: ModelFlags) {
  return defaultConfig(flags.variant as Variant, flags.scale, {
    featureChannels: flags.featureChannels,
    bodyBlocks: flags.bodyBlocks,
  });
}

const modelOptions = {
  variant: {
    choices: ["edsr_ft", "nlr", "nhr"] as const,
    default: "nlr",
    describe: "network variant",
  },
  scale: { type: "number" as const, default: 2, describe: "upscaling factor" },
  "feature-channels": {
    type: "number" as const,
    default: 256,
    describe: "backbone width",
  },
  "body-blocks": {
    type: "number" as const,
    default: 32,
    describe: "residual blocks in the backbone",
  },
};

async function run(argv: string[]): Promise<void> {
  await yargs(argv)
    .scriptName("texsr-nn")
    .command(
      "split <scenes>",
      "partition scenes into two cross-validation folds",
      (y) =>
        y
          .positional("scenes", { type: "string", demandOption: true })
          .option("mode", {
            choices: ["whole", "subset"] as const,
            default: "whole",
          })
          .option("subset", { type: "string" })
          .option("seed", { type: "number", default: 1 }),
      (args) => {
        const refs = sceneRefs(args.scenes);
        const split = crossvalSplit(
          refs,
          args.mode as "whole" | "subset",
          args.seed,
          args.subset,
        );
        console.log(
          JSON.stringify(
            {
              a: split.a.map((s) => s.name),
              b: split.b.map((s) => s.name),
            },
            null,
            2,
          ),
        );
      },
    )
    .command(
      "train <scenes>",
      "fine-tune a model on the scenes under a directory",
      (y) =>
        y
          .positional("scenes", { type: "string", demandOption: true })
          .options(modelOptions)
          .option("epochs", { type: "number" })
          .option("steps", { type: "number", default: 100 })
          .option("batch", { type: "number", default: 16 })
          .option("seed", { type: "number", default: 1 })
          .option("pretrained", {
            type: "string",
            describe: "checkpoint with backbone weights",
          })
          .option("out", { type: "string", demandOption: true })
          .option("trace", { type: "string", describe: "loss CSV path" }),
      (args) => {
        const cfg = configFrom(args as unknown as ModelFlags);
        const scenes: SceneArrays[] = findManifests(args.scenes).map((p) =>
          loadScene(p, cfg.scale),
        );
        if (scenes.length === 0) {
          throw new InsufficientScenesError(`no scenes under ${args.scenes}`);
        }
        const net = buildNetwork(cfg, args.seed);
        if (args.pretrained !== undefined) {
          loadBodyWeights(net, loadCheckpoint(args.pretrained));
        } else {
          console.warn(
            "no pretrained backbone given; starting from random weights",
          );
        }
        const result = trainModel(net, scenes, {
          epochs: args.epochs,
          stepsPerEpoch: args.steps,
          batchSize: args.batch,
          seed: args.seed,
          onEpoch: (epoch, mean) => {
            console.log(`epoch ${epoch}: loss ${mean.toFixed(6)}`);
            saveCheckpoint(net.weights.snapshot(), args.out);
          },
        });
        saveCheckpoint(net.weights.snapshot(), args.out);
        if (args.trace !== undefined) {
          const rows = result.losses.map((l, i) => `${i},${l}`);
          writeFileSync(args.trace, ["step,loss", ...rows].join("\n") + "\n");
        }
        console.log(`checkpoint ${args.out}`);
      },
    )
    .command(
      "infer <manifest>",
      "super-resolve a scene's texture map",
      (y) =>
        y
          .positional("manifest", { type: "string", demandOption: true })
          .options(modelOptions)
          .option("checkpoint", { type: "string", demandOption: true })
          .option("out", { type: "string", demandOption: true })
          .option("tile", { type: "number" })
          .option("overlap", { type: "number", default: 8 })
          .option("seed", { type: "number", default: 1 }),
      (args) => {
        const cfg = configFrom(args as unknown as ModelFlags);
        const scene = loadScene(args.manifest, cfg.scale);
        const net = buildNetwork(cfg, args.seed);
        net.weights.restore(loadCheckpoint(args.checkpoint));
        inferTexture(net, scene, args.out, {
          tile: args.tile,
          overlap: args.overlap,
        });
        console.log(`texture ${args.out}`);
      },
    )
    .demandCommand(1)
    .strict()
    .fail((msg, err) => {
      if (err) throw err;
      console.error(msg);
      process.exit(1);
    })
    .parseAsync();
}

const isMain =
  process.argv[1] !== undefined &&
  import.meta.url.endsWith(path.basename(process.argv[1]));

if (isMain) {
  run(hideBin(process.argv)).catch((err) => {
    console.error(String(err?.message ?? err));
    if (err instanceof NaNLossError) {
      process.exit(3);
    }
    if (
      err instanceof ShapeError ||
      err instanceof ScaleMismatchError ||
      err instanceof NoValidPatchesError ||
      err instanceof InsufficientScenesError
    ) {
      process.exit(2);
    }
    process.exit(1);
  });
}

export { run };
