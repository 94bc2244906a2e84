/** Tensor or image dimensions do not fit the network being built. */
export class ShapeError extends Error {}

/** The sampler could not find enough crops passing the black-area test. */
export class NoValidPatchesError extends Error {}

/** Fewer scenes than a two-way split needs. */
export class InsufficientScenesError extends Error {}

/** A file's resolution does not match the model's scale factor. */
export class ScaleMismatchError extends Error {}

/** Training produced a non-finite loss before any finite checkpoint. */
export class NaNLossError extends Error {}
