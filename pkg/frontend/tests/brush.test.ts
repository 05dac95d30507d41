import { describe, expect, it } from "vitest";
import { MaskPainter, rasterizeStroke, stampCircle } from "../src/brush.js";

describe("stampCircle", () => {
  it("sets exactly the pixels inside the radius", () => {
    const w = 9;
    const h = 9;
    const flags = new Uint8Array(w * h);
    stampCircle(flags, w, h, 4, 4, 2);
    for (let y = 0; y < h; y++) {
      for (let x = 0; x < w; x++) {
        const inside = (x - 4) ** 2 + (y - 4) ** 2 <= 4;
        expect(flags[y * w + x]).toBe(inside ? 1 : 0);
      }
    }
  });

  it("clamps to canvas bounds", () => {
    const flags = new Uint8Array(16);
    stampCircle(flags, 4, 4, 0, 0, 10);
    expect(Array.from(flags).every((f) => f === 1)).toBe(true);
    stampCircle(flags.fill(0), 4, 4, -100, -100, 3);
    expect(Array.from(flags).every((f) => f === 0)).toBe(true);
  });
});

describe("rasterizeStroke", () => {
  it("covers every pixel near the segment (no gaps)", () => {
    const w = 32;
    const h = 32;
    const flags = new Uint8Array(w * h);
    rasterizeStroke(flags, w, h, [{ x: 2, y: 2 }, { x: 29, y: 20 }], 2);
    // Walk the segment densely; each sample's nearest pixel must be set.
    for (let t = 0; t <= 1.0001; t += 0.01) {
      const x = Math.round(2 + 27 * t);
      const y = Math.round(2 + 18 * t);
      expect(flags[y * w + x]).toBe(1);
    }
  });

  it("handles a single point", () => {
    const flags = new Uint8Array(25);
    rasterizeStroke(flags, 5, 5, [{ x: 2, y: 2 }], 0);
    expect(flags[2 * 5 + 2]).toBe(1);
    expect(Array.from(flags).filter((f) => f === 1).length).toBe(1);
  });

  it("does nothing for an empty stroke", () => {
    const flags = new Uint8Array(25);
    rasterizeStroke(flags, 5, 5, [], 3);
    expect(Array.from(flags).every((f) => f === 0)).toBe(true);
  });
});

describe("MaskPainter", () => {
  it("accumulates strokes and reports emptiness", () => {
    const painter = new MaskPainter(16, 16, 1);
    expect(painter.isEmpty()).toBe(true);
    painter.paintStroke([{ x: 3, y: 3 }, { x: 10, y: 3 }]);
    expect(painter.isEmpty()).toBe(false);
    expect(painter.get(5, 3)).toBe(true);
    const before = painter.countSet();
    painter.paintStroke([{ x: 3, y: 3 }]); // repainting is idempotent
    expect(painter.countSet()).toBe(before);
    painter.clear();
    expect(painter.isEmpty()).toBe(true);
    expect(painter.countSet()).toBe(0);
  });

  it("bits() returns a copy", () => {
    const painter = new MaskPainter(4, 4, 0);
    painter.paintStroke([{ x: 1, y: 1 }]);
    const bits = painter.bits();
    bits.fill(0);
    expect(painter.get(1, 1)).toBe(true);
  });
});
