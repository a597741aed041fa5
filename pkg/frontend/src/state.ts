// Panel state is a fold over the service's message stream. Nothing in here
// computes physics: every rendered number arrived in some message, which is
// what keeps the panel honest about what the service is doing.

import type { Layout, ServerMessage } from "./messages.js";

export interface PanelState {
  connected: boolean;
  layout: Layout | null;
  mode: string;
  grid: number[][] | null;
  pose: [number, number, number];
  commanded: [number, number, number];
  /** recent x-y positions, oldest first */
  poseTrail: Array<[number, number]>;
  counter: number | null;
  smoothed: number | null;
  present: boolean;
  distanceMm: number | null;
  fsm: string;
  lastTouch: { row: number; col: number; forceN: number; label: string } | null;
  forceRange: [number, number];
  minReliableN: number;
  detectionRangeMm: number;
  /** highest applied sequence number */
  seq: number;
  tVirtual: number;
  lastHeartbeatMs: number | null;
  /** wall time of the last outbound press, until a pose reacts to it */
  pressMarkMs: number | null;
  latencyMs: number | null;
}

const TRAIL_LIMIT = 600;

export function initialState(): PanelState {
  return {
    connected: false,
    layout: null,
    mode: "idle",
    grid: null,
    pose: [0, 0, 0],
    commanded: [0, 0, 0],
    poseTrail: [],
    counter: null,
    smoothed: null,
    present: false,
    distanceMm: null,
    fsm: "monitoring",
    lastTouch: null,
    forceRange: [0, 15],
    minReliableN: 0.5,
    detectionRangeMm: 100,
    seq: -1,
    tVirtual: 0,
    lastHeartbeatMs: null,
    pressMarkMs: null,
    latencyMs: null,
  };
}

export function setConnected(state: PanelState, connected: boolean): PanelState {
  return { ...state, connected };
}

/** Remember when a press left the panel, to time the pose round trip. */
export function markPress(state: PanelState, nowMs: number): PanelState {
  return { ...state, pressMarkMs: nowMs };
}

function poseMoved(a: [number, number, number], b: [number, number, number]): boolean {
  return Math.hypot(a[0] - b[0], a[1] - b[1], a[2] - b[2]) > 1e-3;
}

/**
 * Apply one message. Messages older than the newest applied one are
 * discarded; a snapshot rebuilds the state wholesale, which is how a
 * reconnect resynchronizes.
 */
export function applyMessage(
  state: PanelState,
  msg: ServerMessage,
  nowMs: number = Date.now(),
): PanelState {
  if (msg.type === "snapshot") {
    const fresh = initialState();
    return {
      ...fresh,
      connected: state.connected,
      layout: msg.layout,
      mode: msg.mode,
      pose: msg.pose_mm,
      poseTrail: [[msg.pose_mm[0], msg.pose_mm[1]]],
      fsm: msg.fsm,
      forceRange: msg.force_range_n,
      minReliableN: msg.min_reliable_force_n,
      detectionRangeMm: msg.detection_range_mm,
      seq: msg.seq,
      tVirtual: msg.t,
    };
  }
  if (msg.seq <= state.seq) return state; // stale or duplicate
  const next: PanelState = { ...state, seq: msg.seq, tVirtual: msg.t };
  switch (msg.type) {
    case "grid":
      next.grid = msg.forces_n;
      break;
    case "pose": {
      next.pose = msg.pose_mm;
      next.commanded = msg.commanded_mm_s;
      next.poseTrail = [...state.poseTrail, [msg.pose_mm[0], msg.pose_mm[1]]];
      if (next.poseTrail.length > TRAIL_LIMIT) {
        next.poseTrail = next.poseTrail.slice(-TRAIL_LIMIT);
      }
      if (state.pressMarkMs !== null && poseMoved(msg.pose_mm, state.pose)) {
        next.latencyMs = nowMs - state.pressMarkMs;
        next.pressMarkMs = null;
      }
      break;
    }
    case "touch":
      next.lastTouch = {
        row: msg.row, col: msg.col, forceN: msg.force_n, label: msg.label,
      };
      break;
    case "proximity":
      next.counter = msg.counter;
      next.smoothed = msg.smoothed;
      next.present = msg.present;
      next.distanceMm = msg.distance_mm;
      next.fsm = msg.fsm;
      break;
    case "fsm":
      next.fsm = msg.state;
      break;
    case "heartbeat":
      next.lastHeartbeatMs = nowMs;
      break;
  }
  return next;
}
