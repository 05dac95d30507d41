import { describe, expect, it } from "vitest";
import { inflateSync } from "node:zlib";
import {
  adler32,
  bytesToBase64,
  crc32,
  encodeMaskPng,
  zlibStored,
} from "../src/maskPng.js";

function readU32(data: Uint8Array, pos: number): number {
  return (
    ((data[pos] << 24) | (data[pos + 1] << 16) | (data[pos + 2] << 8) | data[pos + 3]) >>> 0
  );
}

function findChunk(png: Uint8Array, type: string): Uint8Array {
  let pos = 8;
  while (pos < png.length) {
    const len = readU32(png, pos);
    const name = String.fromCharCode(...png.subarray(pos + 4, pos + 8));
    if (name === type) return png.subarray(pos + 8, pos + 8 + len);
    pos += 12 + len;
  }
  throw new Error(`chunk ${type} not found`);
}

describe("crc32 / adler32", () => {
  it("matches known vectors", () => {
    const bytes = new TextEncoder().encode("123456789");
    expect(crc32(bytes)).toBe(0xcbf43926);
    expect(adler32(bytes)).toBe(0x091e01de);
    expect(adler32(new Uint8Array(0))).toBe(1);
  });
});

describe("zlibStored", () => {
  it("round-trips through a real inflater", () => {
    const raw = new Uint8Array(200000);
    for (let i = 0; i < raw.length; i++) raw[i] = (i * 37) & 0xff;
    const inflated = inflateSync(zlibStored(raw));
    expect(new Uint8Array(inflated)).toEqual(raw);
  });

  it("handles empty input", () => {
    expect(new Uint8Array(inflateSync(zlibStored(new Uint8Array(0)))).length).toBe(0);
  });
});

describe("encodeMaskPng", () => {
  it("produces a valid grayscale PNG with exact pixel values", () => {
    const w = 5;
    const h = 3;
    const flags = new Uint8Array(w * h);
    flags[0] = 1;
    flags[7] = 1;
    flags[14] = 1;
    const png = encodeMaskPng(w, h, flags);

    expect(Array.from(png.subarray(0, 8))).toEqual([137, 80, 78, 71, 13, 10, 26, 10]);
    const ihdr = findChunk(png, "IHDR");
    expect(readU32(ihdr, 0)).toBe(w);
    expect(readU32(ihdr, 4)).toBe(h);
    expect(ihdr[8]).toBe(8); // bit depth
    expect(ihdr[9]).toBe(0); // grayscale

    const raw = new Uint8Array(inflateSync(findChunk(png, "IDAT")));
    expect(raw.length).toBe(h * (w + 1));
    for (let y = 0; y < h; y++) {
      expect(raw[y * (w + 1)]).toBe(0); // filter byte
      for (let x = 0; x < w; x++) {
        expect(raw[y * (w + 1) + 1 + x]).toBe(flags[y * w + x] ? 255 : 0);
      }
    }
  });

  it("rejects mismatched dimensions", () => {
    expect(() => encodeMaskPng(4, 4, new Uint8Array(15))).toThrow();
  });

  it("chunk CRCs are correct", () => {
    const png = encodeMaskPng(8, 8, new Uint8Array(64).fill(1));
    let pos = 8;
    while (pos < png.length) {
      const len = readU32(png, pos);
      const body = png.subarray(pos + 4, pos + 8 + len);
      expect(readU32(png, pos + 8 + len)).toBe(crc32(body));
      pos += 12 + len;
    }
  });
});

describe("bytesToBase64", () => {
  it("matches Buffer encoding on large inputs", () => {
    const data = new Uint8Array(100000);
    for (let i = 0; i < data.length; i++) data[i] = (i * 13) & 0xff;
    expect(bytesToBase64(data)).toBe(Buffer.from(data).toString("base64"));
  });
});
