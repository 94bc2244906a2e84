import { InsufficientScenesError } from "./errors.js";
import { makeRng, shuffle } from "./random.js";

export interface SceneRef {
  name: string;
  subset: string;
}

export interface SplitResult {
  a: SceneRef[];
  b: SceneRef[];
}

function groupBySubset(scenes: SceneRef[]): Map<string, SceneRef[]> {
  const groups = new Map<string, SceneRef[]>();
  for (const s of scenes) {
    const bucket = groups.get(s.subset);
    if (bucket === undefined) {
      groups.set(s.subset, [s]);
    } else {
      bucket.push(s);
    }
  }
  return groups;
}

/**
 * Split scenes into two folds for cross-validation.
 *
 * "whole" mode balances every subset across the folds (each subset's
 * scenes differ by at most one between folds, so the fold sizes also
 * differ by at most one). "subset" mode splits a single named subset
 * in half. Output is deterministic for a given seed and scene set,
 * regardless of input order.
 */
export function crossvalSplit(
  scenes: SceneRef[],
  mode: "whole" | "subset",
  seed: number,
  subset?: string,
): SplitResult {
  let pool = scenes;
  if (mode === "subset") {
    if (subset === undefined) {
      throw new InsufficientScenesError("subset mode needs a subset name");
    }
    pool = scenes.filter((s) => s.subset === subset);
  }
  if (pool.length < 2) {
    throw new InsufficientScenesError(
      `need at least 2 scenes to split, got ${pool.length}`,
    );
  }

  const rng = makeRng(seed);
  const a: SceneRef[] = [];
  const b: SceneRef[] = [];
  const groups = groupBySubset(pool);
  for (const key of [...groups.keys()].sort()) {
    const members = [...groups.get(key)!].sort((x, y) =>
      x.name < y.name ? -1 : x.name > y.name ? 1 : 0,
    );
    shuffle(members, rng);
    const larger = Math.ceil(members.length / 2);
    // Hand the larger half to whichever fold is currently behind so
    // odd subsets cancel instead of accumulating.
    const [first, second] = a.length <= b.length ? [a, b] : [b, a];
    first.push(...members.slice(0, larger));
    second.push(...members.slice(larger));
  }
  return { a, b };
}
