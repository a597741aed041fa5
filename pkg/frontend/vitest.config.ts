import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    // the loopback suite times a live service; keep the box quiet while it runs
    fileParallelism: false,
  },
});
