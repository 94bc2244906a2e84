export * from "./checkpoint.js";
export * from "./crossval.js";
export * from "./errors.js";
export * from "./infer.js";
export * from "./manifest.js";
export * from "./model.js";
export * from "./patches.js";
export * from "./png.js";
export * from "./random.js";
export * from "./train.js";
