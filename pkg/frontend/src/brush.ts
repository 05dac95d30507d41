// Freehand mask painting at exact canvas resolution. The rasterization rule
// is deliberately simple and integer-exact so the resulting bits can be
// recomputed independently from the recorded stroke points:
//   - each stamp sets every pixel whose center satisfies
//     (x - cx)^2 + (y - cy)^2 <= r^2, clamped to the canvas;
//   - a stroke stamps both endpoints of each segment plus evenly spaced
//     interpolated centers, one per unit of the segment's longer axis.

export interface StrokePoint {
  x: number;
  y: number;
}

export function stampCircle(
  flags: Uint8Array,
  width: number,
  height: number,
  cx: number,
  cy: number,
  radius: number
): void {
  const r2 = radius * radius;
  const x0 = Math.max(0, Math.ceil(cx - radius));
  const x1 = Math.min(width - 1, Math.floor(cx + radius));
  const y0 = Math.max(0, Math.ceil(cy - radius));
  const y1 = Math.min(height - 1, Math.floor(cy + radius));
  for (let y = y0; y <= y1; y++) {
    for (let x = x0; x <= x1; x++) {
      const dx = x - cx;
      const dy = y - cy;
      if (dx * dx + dy * dy <= r2) {
        flags[y * width + x] = 1;
      }
    }
  }
}

export function rasterizeStroke(
  flags: Uint8Array,
  width: number,
  height: number,
  points: StrokePoint[],
  radius: number
): void {
  if (points.length === 0) return;
  stampCircle(flags, width, height, points[0].x, points[0].y, radius);
  for (let i = 1; i < points.length; i++) {
    const a = points[i - 1];
    const b = points[i];
    const steps = Math.max(
      1,
      Math.ceil(Math.max(Math.abs(b.x - a.x), Math.abs(b.y - a.y)))
    );
    for (let s = 1; s <= steps; s++) {
      const t = s / steps;
      stampCircle(
        flags,
        width,
        height,
        a.x + (b.x - a.x) * t,
        a.y + (b.y - a.y) * t,
        radius
      );
    }
  }
}

/** Accumulates brush strokes into a per-pixel selection buffer. */
export class MaskPainter {
  readonly width: number;
  readonly height: number;
  radius: number;
  private flags: Uint8Array;

  constructor(width: number, height: number, radius = 4) {
    this.width = width;
    this.height = height;
    this.radius = radius;
    this.flags = new Uint8Array(width * height);
  }

  paintStroke(points: StrokePoint[]): void {
    rasterizeStroke(this.flags, this.width, this.height, points, this.radius);
  }

  clear(): void {
    this.flags.fill(0);
  }

  isEmpty(): boolean {
    return !this.flags.some((f) => f !== 0);
  }

  countSet(): number {
    let n = 0;
    for (const f of this.flags) if (f) n++;
    return n;
  }

  get(x: number, y: number): boolean {
    return this.flags[y * this.width + x] !== 0;
  }

  /** Row-major copy of the selection, one entry per pixel. */
  bits(): Uint8Array {
    return this.flags.slice();
  }
}
