import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "jsdom",
    testTimeout: 180_000,
    hookTimeout: 180_000,
    // the live end-to-end spec owns a single server process
    fileParallelism: false,
  },
});
