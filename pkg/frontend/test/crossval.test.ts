import { describe, expect, it } from "vitest";
import { crossvalSplit, SceneRef } from "../src/crossval.js";
import { InsufficientScenesError } from "../src/errors.js";

function corpus(sizes: Record<string, number>): SceneRef[] {
  const refs: SceneRef[] = [];
  for (const [subset, n] of Object.entries(sizes)) {
    for (let i = 0; i < n; i++) {
      refs.push({ name: `${subset}_${String(i).padStart(2, "0")}`, subset });
    }
  }
  return refs;
}

// Subset sizes of the 24-scene corpus the split rule is designed for.
const SIZES = { ETH3D: 13, Collection: 5, MiddleBury: 4, SyB3R: 2 };

function names(refs: SceneRef[]): string[] {
  return refs.map((r) => r.name).sort();
}

describe("crossvalSplit whole mode", () => {
  it("splits 24 scenes into 12 + 12 with the odd subset 7/6", () => {
    const { a, b } = crossvalSplit(corpus(SIZES), "whole", 1);
    expect(a.length).toBe(12);
    expect(b.length).toBe(12);
    const ethA = a.filter((s) => s.subset === "ETH3D").length;
    const ethB = b.filter((s) => s.subset === "ETH3D").length;
    expect([ethA, ethB].sort()).toEqual([6, 7]);
    for (const subset of Object.keys(SIZES)) {
      const na = a.filter((s) => s.subset === subset).length;
      const nb = b.filter((s) => s.subset === subset).length;
      expect(Math.abs(na - nb)).toBeLessThanOrEqual(1);
    }
  });

  it("returns disjoint folds covering the input", () => {
    const refs = corpus(SIZES);
    const { a, b } = crossvalSplit(refs, "whole", 3);
    const union = names([...a, ...b]);
    expect(union).toEqual(names(refs));
    const setA = new Set(a.map((s) => s.name));
    for (const s of b) expect(setA.has(s.name)).toBe(false);
  });

  it("keeps fold sizes within one for any subset mix", () => {
    const refs = corpus({ A: 3, B: 3, C: 1, D: 7 });
    const { a, b } = crossvalSplit(refs, "whole", 2);
    expect(Math.abs(a.length - b.length)).toBeLessThanOrEqual(1);
    expect(a.length + b.length).toBe(refs.length);
  });

  it("is deterministic per seed and ignores input order", () => {
    const refs = corpus(SIZES);
    const reversed = [...refs].reverse();
    const one = crossvalSplit(refs, "whole", 7);
    const two = crossvalSplit(reversed, "whole", 7);
    expect(names(one.a)).toEqual(names(two.a));
    expect(names(one.b)).toEqual(names(two.b));
    const other = crossvalSplit(refs, "whole", 8);
    expect(names(one.a)).not.toEqual(names(other.a));
  });
});

describe("crossvalSplit subset mode", () => {
  it("splits a single subset in half", () => {
    const { a, b } = crossvalSplit(corpus(SIZES), "subset", 1, "ETH3D");
    expect([a.length, b.length].sort()).toEqual([6, 7]);
    for (const s of [...a, ...b]) expect(s.subset).toBe("ETH3D");
  });

  it("needs a subset name and at least two members", () => {
    const refs = corpus(SIZES);
    expect(() => crossvalSplit(refs, "subset", 1)).toThrow(
      InsufficientScenesError,
    );
    expect(() => crossvalSplit(refs, "subset", 1, "nope")).toThrow(
      InsufficientScenesError,
    );
    const one = corpus({ ETH3D: 1, Collection: 4 });
    expect(() => crossvalSplit(one, "subset", 1, "ETH3D")).toThrow(
      InsufficientScenesError,
    );
  });
});

describe("crossvalSplit preconditions", () => {
  it("rejects fewer than two scenes", () => {
    expect(() => crossvalSplit([], "whole", 1)).toThrow(InsufficientScenesError);
    expect(() =>
      crossvalSplit([{ name: "only", subset: "custom" }], "whole", 1),
    ).toThrow(InsufficientScenesError);
  });
});
