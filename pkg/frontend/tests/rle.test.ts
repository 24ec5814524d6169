import { describe, expect, it } from 'vitest';

import { decodeRle, maskArea, overlayPixels } from '../src/rle.js';

describe('decodeRle', () => {
  it('decodes the all-inside fixture shared with the service', () => {
    // size [2,2], counts [0,4] -> every pixel inside
    const bits = decodeRle({ size: [2, 2], counts: [0, 4] });
    expect(Array.from(bits)).toEqual([1, 1, 1, 1]);
  });

  it('decodes an all-outside mask', () => {
    const bits = decodeRle({ size: [2, 2], counts: [4] });
    expect(Array.from(bits)).toEqual([0, 0, 0, 0]);
  });

  it('decodes alternating runs row-major', () => {
    const bits = decodeRle({ size: [2, 3], counts: [1, 4, 1] });
    expect(Array.from(bits)).toEqual([0, 1, 1, 1, 1, 0]);
  });

  it('rejects runs that do not cover the grid', () => {
    expect(() => decodeRle({ size: [2, 2], counts: [3] })).toThrow(/runs sum/);
  });

  it('rejects negative or fractional runs', () => {
    expect(() => decodeRle({ size: [2, 2], counts: [-1, 5] })).toThrow();
    expect(() => decodeRle({ size: [2, 2], counts: [1.5, 2.5] })).toThrow();
  });

  it('computes areas', () => {
    expect(maskArea(decodeRle({ size: [4, 4], counts: [6, 4, 6] }))).toBe(4);
  });
});

describe('overlayPixels', () => {
  it('tints inside pixels and leaves outside transparent', () => {
    const bits = Uint8Array.from([1, 0, 0, 1]);
    const px = overlayPixels(bits, [10, 20, 30, 40]);
    expect(Array.from(px.slice(0, 4))).toEqual([10, 20, 30, 40]);
    expect(Array.from(px.slice(4, 8))).toEqual([0, 0, 0, 0]);
    expect(Array.from(px.slice(12, 16))).toEqual([10, 20, 30, 40]);
  });

  it('covers the full image for a full mask', () => {
    const bits = decodeRle({ size: [3, 3], counts: [0, 9] });
    const px = overlayPixels(bits);
    for (let i = 0; i < 9; i++) {
      expect(px[i * 4 + 3]).toBeGreaterThan(0);
    }
  });
});
