import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";
import { PressDriver } from "../src/press.js";

type Emitted = [number, number, number];

function driver(repeatHz?: number) {
  const events: Emitted[] = [];
  const d = new PressDriver((row, col, forceN) => events.push([row, col, forceN]), repeatHz);
  return { d, events };
}

beforeEach(() => vi.useFakeTimers());
afterEach(() => vi.useRealTimers());

describe("PressDriver", () => {
  it("emits once immediately on pointer down", () => {
    const { d, events } = driver();
    d.down({ row: 0, col: 3 });
    expect(events).toEqual([[0, 3, 5]]);
    d.dispose();
  });

  it("re-emits the held cell at 30 Hz or better", () => {
    const { d, events } = driver();
    d.down({ row: 1, col: 2 });
    vi.advanceTimersByTime(1000);
    expect(events.length).toBeGreaterThanOrEqual(31); // 1 immediate + >=30 repeats
    for (const [row, col, f] of events) {
      expect([row, col, f]).toEqual([1, 2, 5]);
    }
    d.dispose();
  });

  it("releases with force zero on pointer up and stops repeating", () => {
    const { d, events } = driver();
    d.down({ row: 0, col: 0 });
    vi.advanceTimersByTime(100);
    d.up();
    expect(events[events.length - 1]).toEqual([0, 0, 0]);
    const n = events.length;
    vi.advanceTimersByTime(1000);
    expect(events.length).toBe(n);
    expect(d.heldCell).toBeNull();
    d.dispose();
  });

  it("replays a drag across columns as ordered release/press pairs", () => {
    const { d, events } = driver();
    d.down({ row: 0, col: 1 });
    d.move({ row: 0, col: 1 }); // same cell: nothing new
    d.move({ row: 0, col: 2 });
    d.move({ row: 0, col: 3 });
    d.up();
    expect(events).toEqual([
      [0, 1, 5],
      [0, 1, 0], [0, 2, 5],
      [0, 2, 0], [0, 3, 5],
      [0, 3, 0],
    ]);
    d.dispose();
  });

  it("releases when the pointer leaves the grid and re-presses on return", () => {
    const { d, events } = driver();
    d.down({ row: 0, col: 4 });
    d.move(null);
    expect(events).toEqual([[0, 4, 5], [0, 4, 0]]);
    const n = events.length;
    vi.advanceTimersByTime(500);
    expect(events.length).toBe(n); // no repeats while outside
    d.move({ row: 1, col: 6 });
    expect(events[events.length - 1]).toEqual([1, 6, 5]);
    d.up();
    d.dispose();
  });

  it("ignores moves while the pointer is up", () => {
    const { d, events } = driver();
    d.move({ row: 0, col: 0 });
    expect(events).toEqual([]);
    d.dispose();
  });

  it("does nothing on a down outside the grid, but arms the drag", () => {
    const { d, events } = driver();
    d.down(null);
    expect(events).toEqual([]);
    d.move({ row: 1, col: 1 }); // drag entered the grid
    expect(events).toEqual([[1, 1, 5]]);
    d.up();
    d.dispose();
  });

  it("flags deliberate emissions but not keep-alive repeats", () => {
    const flags: boolean[] = [];
    const d = new PressDriver((_r, _c, _f, fresh) => flags.push(fresh));
    d.down({ row: 0, col: 0 });
    vi.advanceTimersByTime(100); // a few repeats
    d.up();
    expect(flags[0]).toBe(true);
    expect(flags[flags.length - 1]).toBe(true);
    expect(flags.slice(1, -1).length).toBeGreaterThan(0);
    expect(flags.slice(1, -1).every((f) => f === false)).toBe(true);
    d.dispose();
  });

  it("clamps the force and re-emits the held cell when it changes", () => {
    const { d, events } = driver();
    d.setForce(99);
    expect(d.forceN).toBe(15);
    d.setForce(-3);
    expect(d.forceN).toBe(0);
    d.setForce(7.5);
    expect(events).toEqual([]); // nothing held yet
    d.down({ row: 0, col: 0 });
    d.setForce(2.5);
    expect(events).toEqual([[0, 0, 7.5], [0, 0, 2.5]]);
    d.up();
    d.dispose();
  });
});
