/**
 * Run-length mask decoding, bit-compatible with the service's wire form:
 * row-major runs, first run counts zeros.
 */

import type { RleMask } from './types.js';

export function decodeRle(rle: RleMask): Uint8Array {
  const [h, w] = rle.size;
  if (h < 1 || w < 1) {
    throw new Error(`bad RLE size ${rle.size}`);
  }
  const total = h * w;
  const out = new Uint8Array(total);
  let pos = 0;
  let value = 0;
  for (const count of rle.counts) {
    if (count < 0 || !Number.isInteger(count)) {
      throw new Error(`bad run length ${count}`);
    }
    if (value === 1) {
      out.fill(1, pos, pos + count);
    }
    pos += count;
    value = 1 - value;
  }
  if (pos !== total) {
    throw new Error(`runs sum to ${pos}, expected ${total}`);
  }
  return out;
}

/** Number of inside-mask pixels. */
export function maskArea(bits: Uint8Array): number {
  let n = 0;
  for (const b of bits) n += b;
  return n;
}

/**
 * RGBA overlay pixels for a decoded mask: semi-transparent tint inside the
 * mask, fully transparent outside. Pure so tests can check it headlessly.
 */
export function overlayPixels(
  bits: Uint8Array,
  rgba: [number, number, number, number] = [80, 170, 255, 110],
): Uint8ClampedArray {
  const out = new Uint8ClampedArray(bits.length * 4);
  const [r, g, b, a] = rgba;
  for (let i = 0; i < bits.length; i++) {
    if (bits[i]) {
      const o = i * 4;
      out[o] = r;
      out[o + 1] = g;
      out[o + 2] = b;
      out[o + 3] = a;
    }
  }
  return out;
}
