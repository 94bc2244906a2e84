import { readFileSync, writeFileSync } from "node:fs";

export type Snapshot = Record<string, { shape: number[]; values: Float32Array }>;

/** Persist a weight snapshot as JSON with base64-packed float data. */
export function saveCheckpoint(snap: Snapshot, path: string): void {
  const out: Record<string, { shape: number[]; data: string }> = {};
  for (const [name, entry] of Object.entries(snap)) {
    const bytes = Buffer.from(
      entry.values.buffer,
      entry.values.byteOffset,
      entry.values.byteLength,
    );
    out[name] = { shape: entry.shape, data: bytes.toString("base64") };
  }
  writeFileSync(path, JSON.stringify(out));
}

export function loadCheckpoint(path: string): Snapshot {
  const raw = JSON.parse(readFileSync(path, "utf-8")) as Record<
    string,
    { shape: number[]; data: string }
  >;
  const snap: Snapshot = {};
  for (const [name, entry] of Object.entries(raw)) {
    const bytes = new Uint8Array(Buffer.from(entry.data, "base64"));
    snap[name] = { shape: entry.shape, values: new Float32Array(bytes.buffer) };
  }
  return snap;
}
