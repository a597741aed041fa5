import { describe, expect, it } from "vitest";
import { parseMessage, ServerMessage, SnapshotMsg } from "../src/messages.js";
import {
  applyMessage,
  initialState,
  markPress,
  setConnected,
} from "../src/state.js";

let seqCounter = 0;

function stamp<T extends object>(type: string, body: T, seq?: number) {
  seqCounter += 1;
  return {
    v: 1,
    type,
    seq: seq ?? seqCounter,
    t: seqCounter * 0.01,
    ...body,
  } as unknown as ServerMessage;
}

function snapshotMsg(seq?: number): SnapshotMsg {
  return stamp("snapshot", {
    layout: { preset: "16px", rows: 2, cols: 8 },
    mode: "idle",
    pose_mm: [1, 2, 3],
    fsm: "monitoring",
    force_range_n: [0, 15],
    min_reliable_force_n: 0.5,
    detection_range_mm: 50,
    rates_hz: { tactile: 100, proximity: 10 },
  }, seq) as SnapshotMsg;
}

describe("applyMessage", () => {
  it("rebuilds wholesale from a snapshot, keeping the connection flag", () => {
    let s = setConnected(initialState(), true);
    s = applyMessage(s, stamp("grid", { forces_n: [[1]] }));
    s = applyMessage(s, snapshotMsg());
    expect(s.connected).toBe(true);
    expect(s.grid).toBeNull();
    expect(s.layout).toEqual({ preset: "16px", rows: 2, cols: 8 });
    expect(s.pose).toEqual([1, 2, 3]);
    expect(s.poseTrail).toEqual([[1, 2]]);
    expect(s.detectionRangeMm).toBe(50);
  });

  it("discards messages at or below the last applied sequence number", () => {
    let s = applyMessage(initialState(), snapshotMsg(100));
    const stale = stamp("grid", { forces_n: [[9]] }, 50);
    const out = applyMessage(s, stale);
    expect(out).toBe(s); // untouched, same object
    expect(out.grid).toBeNull();
    const dup = stamp("grid", { forces_n: [[9]] }, 100);
    expect(applyMessage(s, dup).grid).toBeNull();
    s = applyMessage(s, stamp("grid", { forces_n: [[9]] }, 101));
    expect(s.grid).toEqual([[9]]);
  });

  it("applies each message type to its slice of the state", () => {
    let s = applyMessage(initialState(), snapshotMsg());
    s = applyMessage(s, stamp("pose", {
      pose_mm: [4, 5, 6], commanded_mm_s: [0.1, 0, 0],
    }));
    expect(s.pose).toEqual([4, 5, 6]);
    expect(s.commanded).toEqual([0.1, 0, 0]);
    s = applyMessage(s, stamp("touch", {
      row: 0, col: 3, force_n: 5, label: "human",
    }));
    expect(s.lastTouch).toEqual({ row: 0, col: 3, forceN: 5, label: "human" });
    s = applyMessage(s, stamp("proximity", {
      counter: 1532, smoothed: 1510.2, present: true, distance_mm: 42.5,
      fsm: "monitoring",
    }));
    expect(s.counter).toBe(1532);
    expect(s.present).toBe(true);
    expect(s.distanceMm).toBe(42.5);
    s = applyMessage(s, stamp("fsm", { state: "triggered" }));
    expect(s.fsm).toBe("triggered");
    s = applyMessage(s, stamp("heartbeat", {}), 12345);
    expect(s.lastHeartbeatMs).toBe(12345);
  });

  it("caps the pose trail", () => {
    let s = applyMessage(initialState(), snapshotMsg());
    for (let i = 0; i < 700; i++) {
      s = applyMessage(s, stamp("pose", {
        pose_mm: [i, -i, 0], commanded_mm_s: [0, 0, 0],
      }));
    }
    expect(s.poseTrail.length).toBe(600);
    expect(s.poseTrail[s.poseTrail.length - 1]).toEqual([699, -699]);
  });

  it("times press-to-pose latency on the first pose that actually moves", () => {
    let s = applyMessage(initialState(), snapshotMsg());
    s = markPress(s, 1000);
    // same pose: robot has not reacted yet, the mark must survive
    s = applyMessage(s, stamp("pose", {
      pose_mm: [1, 2, 3], commanded_mm_s: [0, 0, 0],
    }), 1040);
    expect(s.latencyMs).toBeNull();
    expect(s.pressMarkMs).toBe(1000);
    s = applyMessage(s, stamp("pose", {
      pose_mm: [0.7, 2, 3.3], commanded_mm_s: [-25, 0, 25],
    }), 1130);
    expect(s.latencyMs).toBe(130);
    expect(s.pressMarkMs).toBeNull();
    // later poses do not restart the clock
    s = applyMessage(s, stamp("pose", {
      pose_mm: [0.4, 2, 3.6], commanded_mm_s: [-25, 0, 25],
    }), 1500);
    expect(s.latencyMs).toBe(130);
  });
});

describe("parseMessage", () => {
  it("accepts a well-formed frame", () => {
    const msg = parseMessage(JSON.stringify(stamp("heartbeat", {})));
    expect(msg).not.toBeNull();
    expect(msg!.type).toBe("heartbeat");
  });

  it("drops garbage instead of throwing", () => {
    expect(parseMessage("{nope")).toBeNull();
    expect(parseMessage("42")).toBeNull();
    expect(parseMessage("null")).toBeNull();
    expect(parseMessage(JSON.stringify({ v: 2, type: "pose", seq: 1, t: 0 }))).toBeNull();
    expect(parseMessage(JSON.stringify({ v: 1, type: "mystery", seq: 1, t: 0 }))).toBeNull();
    expect(parseMessage(JSON.stringify({ v: 1, type: "pose", t: 0 }))).toBeNull();
  });
});
