import { describe, expect, it } from "vitest";
import { cellAt, cellRect, sameCell, GridBox } from "../src/geometry.js";

const box: GridBox = { width: 640, height: 200, rows: 2, cols: 8 };

describe("cellAt", () => {
  it("maps corners and centers to the right cells", () => {
    expect(cellAt(0, 0, box)).toEqual({ row: 0, col: 0 });
    expect(cellAt(639.9, 199.9, box)).toEqual({ row: 1, col: 7 });
    expect(cellAt(320, 100, box)).toEqual({ row: 1, col: 4 });
    expect(cellAt(40, 50, box)).toEqual({ row: 0, col: 0 });
  });

  it("lands on the next column exactly at a cell boundary", () => {
    // 640 / 8 = 80 px per column
    expect(cellAt(79.999, 0, box)).toEqual({ row: 0, col: 0 });
    expect(cellAt(80, 0, box)).toEqual({ row: 0, col: 1 });
  });

  it("returns null outside the box", () => {
    expect(cellAt(-1, 0, box)).toBeNull();
    expect(cellAt(0, -0.1, box)).toBeNull();
    expect(cellAt(640, 0, box)).toBeNull();
    expect(cellAt(0, 200, box)).toBeNull();
  });

  it("returns null for a degenerate grid", () => {
    expect(cellAt(10, 10, { width: 640, height: 200, rows: 0, cols: 8 })).toBeNull();
    expect(cellAt(10, 10, { width: 640, height: 200, rows: 2, cols: 0 })).toBeNull();
  });

  it("never exceeds the grid even with float edge coordinates", () => {
    const c = cellAt(639.9999999, 199.9999999, box);
    expect(c).not.toBeNull();
    expect(c!.row).toBeLessThan(box.rows);
    expect(c!.col).toBeLessThan(box.cols);
  });
});

describe("cellRect", () => {
  it("is the inverse patch of cellAt", () => {
    const r = cellRect({ row: 1, col: 2 }, box);
    expect(r).toEqual({ x: 160, y: 100, w: 80, h: 100 });
    // every corner strictly inside the rect maps back to the same cell
    expect(cellAt(r.x, r.y, box)).toEqual({ row: 1, col: 2 });
    expect(cellAt(r.x + r.w - 0.01, r.y + r.h - 0.01, box)).toEqual({ row: 1, col: 2 });
  });
});

describe("sameCell", () => {
  it("treats null as equal only to null", () => {
    expect(sameCell(null, null)).toBe(true);
    expect(sameCell(null, { row: 0, col: 0 })).toBe(false);
    expect(sameCell({ row: 0, col: 0 }, null)).toBe(false);
  });

  it("compares coordinates", () => {
    expect(sameCell({ row: 1, col: 3 }, { row: 1, col: 3 })).toBe(true);
    expect(sameCell({ row: 1, col: 3 }, { row: 1, col: 4 })).toBe(false);
    expect(sameCell({ row: 0, col: 3 }, { row: 1, col: 3 })).toBe(false);
  });
});
