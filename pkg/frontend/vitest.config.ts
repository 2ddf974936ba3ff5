import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "node",
    include: ["tests/**/*.test.ts"],
    // the round-trip suite talks to a spawned scene service
    testTimeout: 120000,
    hookTimeout: 60000,
    pool: "forks",
  },
});
