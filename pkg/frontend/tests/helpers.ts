// Shared test utilities: a real backing server spawned from the Python
// package, an independent brush-rasterization oracle, and a grayscale PNG
// decoder for inspecting what the server actually stored.

import { spawn, ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { createServer } from "node:net";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { inflateSync } from "node:zlib";
import { ApiClient } from "../src/api.js";
import type { NodeDoc } from "../src/types.js";
import type { StrokePoint } from "../src/brush.js";

export interface TestServer {
  baseUrl: string;
  api: ApiClient;
  stop: () => void;
}

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const srv = createServer();
    srv.listen(0, "127.0.0.1", () => {
      const address = srv.address();
      if (address === null || typeof address === "string") {
        reject(new Error("no port"));
        return;
      }
      const port = address.port;
      srv.close(() => resolve(port));
    });
    srv.on("error", reject);
  });
}

export async function startServer(): Promise<TestServer> {
  const port = await freePort();
  const dataDir = mkdtempSync(join(tmpdir(), "ui-test-"));
  const proc: ChildProcess = spawn(
    "python3",
    [
      "-m",
      "sakugaflow.cli",
      "serve",
      "--data-dir",
      dataDir,
      "--listen",
      `127.0.0.1:${port}`,
    ],
    { stdio: ["ignore", "pipe", "pipe"] }
  );
  let stderr = "";
  proc.stderr?.on("data", (chunk) => {
    stderr += String(chunk);
  });

  const baseUrl = `http://127.0.0.1:${port}`;
  const deadline = Date.now() + 30000;
  for (;;) {
    if (proc.exitCode !== null) {
      throw new Error(`server exited early:\n${stderr}`);
    }
    try {
      const resp = await fetch(`${baseUrl}/v1/projects/does-not-exist`);
      if (resp.status === 404) break;
    } catch {
      // not up yet
    }
    if (Date.now() > deadline) {
      proc.kill();
      throw new Error(`server did not come up:\n${stderr}`);
    }
    await new Promise((resolve) => setTimeout(resolve, 100));
  }
  return {
    baseUrl,
    api: new ApiClient(baseUrl),
    stop: () => {
      proc.kill();
      rmSync(dataDir, { recursive: true, force: true });
    },
  };
}

export async function waitCompleted(
  api: ApiClient,
  nodeId: string,
  timeoutMs = 20000
): Promise<NodeDoc> {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    const node = await api.getNode(nodeId);
    if (node.status === "completed") return node;
    if (node.status === "failed") throw new Error(`node ${nodeId} failed`);
    if (Date.now() > deadline) {
      throw new Error(`node ${nodeId} still ${node.status} after ${timeoutMs}ms`);
    }
    await new Promise((resolve) => setTimeout(resolve, 100));
  }
}

/**
 * Independent re-statement of the brush rasterization rule. Kept free of
 * imports from src/brush.ts so the round-trip test checks the production
 * rasterizer against a second implementation, not against itself.
 */
export function oracleRasterize(
  width: number,
  height: number,
  strokes: { points: StrokePoint[]; radius: number }[]
): Uint8Array {
  const flags = new Uint8Array(width * height);
  const stamp = (cx: number, cy: number, r: number): void => {
    for (let y = 0; y < height; y++) {
      for (let x = 0; x < width; x++) {
        if ((x - cx) ** 2 + (y - cy) ** 2 <= r * r) {
          flags[y * width + x] = 1;
        }
      }
    }
  };
  for (const { points, radius } of strokes) {
    if (points.length === 0) continue;
    stamp(points[0].x, points[0].y, radius);
    for (let i = 1; i < points.length; i++) {
      const a = points[i - 1];
      const b = points[i];
      const steps = Math.max(
        1,
        Math.ceil(Math.max(Math.abs(b.x - a.x), Math.abs(b.y - a.y)))
      );
      for (let s = 1; s <= steps; s++) {
        const t = s / steps;
        stamp(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t, radius);
      }
    }
  }
  return flags;
}

function paeth(a: number, b: number, c: number): number {
  const p = a + b - c;
  const pa = Math.abs(p - a);
  const pb = Math.abs(p - b);
  const pc = Math.abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

/** Decode any 8-bit grayscale PNG (all five row filters) to raw pixels. */
export function decodePngGray(png: Uint8Array): {
  width: number;
  height: number;
  pixels: Uint8Array;
} {
  const readU32 = (pos: number): number =>
    ((png[pos] << 24) | (png[pos + 1] << 16) | (png[pos + 2] << 8) | png[pos + 3]) >>> 0;
  let width = 0;
  let height = 0;
  const idat: Uint8Array[] = [];
  let pos = 8;
  while (pos < png.length) {
    const len = readU32(pos);
    const type = String.fromCharCode(...png.subarray(pos + 4, pos + 8));
    const data = png.subarray(pos + 8, pos + 8 + len);
    if (type === "IHDR") {
      width = readU32(pos + 8);
      height = readU32(pos + 12);
      if (data[8] !== 8 || data[9] !== 0) {
        throw new Error(`not 8-bit grayscale: depth=${data[8]} color=${data[9]}`);
      }
      if (data[12] !== 0) throw new Error("interlaced PNG not supported");
    } else if (type === "IDAT") {
      idat.push(data);
    }
    pos += 12 + len;
  }
  const compressed = new Uint8Array(idat.reduce((n, c) => n + c.length, 0));
  let off = 0;
  for (const c of idat) {
    compressed.set(c, off);
    off += c.length;
  }
  const raw = new Uint8Array(inflateSync(compressed));
  const stride = width + 1;
  const pixels = new Uint8Array(width * height);
  for (let y = 0; y < height; y++) {
    const filter = raw[y * stride];
    for (let x = 0; x < width; x++) {
      const value = raw[y * stride + 1 + x];
      const left = x > 0 ? pixels[y * width + x - 1] : 0;
      const up = y > 0 ? pixels[(y - 1) * width + x] : 0;
      const upLeft = x > 0 && y > 0 ? pixels[(y - 1) * width + x - 1] : 0;
      let out: number;
      switch (filter) {
        case 0:
          out = value;
          break;
        case 1:
          out = value + left;
          break;
        case 2:
          out = value + up;
          break;
        case 3:
          out = value + ((left + up) >> 1);
          break;
        case 4:
          out = value + paeth(left, up, upLeft);
          break;
        default:
          throw new Error(`bad filter ${filter}`);
      }
      pixels[y * width + x] = out & 0xff;
    }
  }
  return { width, height, pixels };
}
