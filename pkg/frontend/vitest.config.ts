import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["test/**/*.test.ts"],
    environment: "node",
    // Training smokes run full optimization loops on the pure-JS backend.
    testTimeout: 600_000,
    hookTimeout: 120_000,
  },
});
