import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    // Every binding call spawns the Python CLI, so individual tests can
    // take a few seconds of interpreter startup each.
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});
