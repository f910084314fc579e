import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    // e2e suite boots a real backend process
    testTimeout: 30_000,
    hookTimeout: 30_000,
  },
});
