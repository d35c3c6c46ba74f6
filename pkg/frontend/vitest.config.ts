import { defineConfig } from 'vitest/config';

export default defineConfig({
  test: {
    include: ['tests/**/*.test.ts'],
    // The live round-trip test boots the backend service.
    testTimeout: 30000,
    hookTimeout: 60000,
  },
});
