// Wire schema of the sensor service, one JSON object per WebSocket frame.
// Every outbound message carries (v, seq, t); seq is a service-wide counter,
// so ordering holds across message types and across reconnects.

export const SCHEMA_VERSION = 1;

export interface Layout {
  preset: string;
  rows: number;
  cols: number;
}

interface Stamped {
  v: number;
  seq: number;
  t: number;
}

export interface SnapshotMsg extends Stamped {
  type: "snapshot";
  layout: Layout;
  mode: string;
  pose_mm: [number, number, number];
  fsm: string;
  force_range_n: [number, number];
  min_reliable_force_n: number;
  detection_range_mm: number;
  rates_hz: { tactile: number; proximity: number };
}

export interface GridMsg extends Stamped {
  type: "grid";
  forces_n: number[][];
}

export interface PoseMsg extends Stamped {
  type: "pose";
  pose_mm: [number, number, number];
  commanded_mm_s: [number, number, number];
}

export interface TouchMsg extends Stamped {
  type: "touch";
  row: number;
  col: number;
  force_n: number;
  label: string;
}

export interface ProximityMsg extends Stamped {
  type: "proximity";
  counter: number;
  smoothed: number;
  present: boolean;
  distance_mm: number | null;
  fsm: string;
}

export interface FsmMsg extends Stamped {
  type: "fsm";
  state: string;
}

export interface HeartbeatMsg extends Stamped {
  type: "heartbeat";
}

export type ServerMessage =
  | SnapshotMsg
  | GridMsg
  | PoseMsg
  | TouchMsg
  | ProximityMsg
  | FsmMsg
  | HeartbeatMsg;

const SERVER_TYPES = new Set([
  "snapshot", "grid", "pose", "touch", "proximity", "fsm", "heartbeat",
]);

export type ClientMessage =
  | { type: "press"; row: number; col: number; force_n: number }
  | { type: "hand"; distance_mm: number | null }
  | { type: "mode"; mode: "idle" | "hand_guide" | "collision" }
  | { type: "tare" };

/** Parse one frame; anything unrecognized is dropped, not thrown. */
export function parseMessage(raw: string): ServerMessage | null {
  let doc: unknown;
  try {
    doc = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof doc !== "object" || doc === null) return null;
  const msg = doc as ServerMessage;
  if (msg.v !== SCHEMA_VERSION) return null;
  if (!SERVER_TYPES.has(msg.type)) return null;
  if (typeof msg.seq !== "number") return null;
  return msg;
}
