// Canvas renderers. All of them draw straight from PanelState; the scales
// are fixed where the hardware is fixed (force full scale, proximity range)
// and adaptive only for the pose trace, whose extent depends on how far
// the operator has pushed the robot.

import { cellRect } from "./geometry.js";
import type { PanelState } from "./state.js";

// force color ramp, 0 N (deep blue) to full scale (hot red)
function forceColor(forceN: number, fullScale: number): string {
  const u = Math.min(Math.max(forceN / fullScale, 0), 1);
  const hue = 230 - 230 * u;
  const light = 12 + 42 * u;
  return `hsl(${hue.toFixed(0)}, 85%, ${light.toFixed(0)}%)`;
}

export function drawHeatmap(ctx: CanvasRenderingContext2D, state: PanelState): void {
  const { width, height } = ctx.canvas;
  ctx.fillStyle = "#10141a";
  ctx.fillRect(0, 0, width, height);
  if (state.layout === null) return;
  const box = { width, height, rows: state.layout.rows, cols: state.layout.cols };
  const fullScale = state.forceRange[1];
  for (let row = 0; row < box.rows; row++) {
    for (let col = 0; col < box.cols; col++) {
      const force = state.grid?.[row]?.[col] ?? 0;
      const r = cellRect({ row, col }, box);
      ctx.fillStyle = forceColor(force, fullScale);
      ctx.fillRect(r.x + 1, r.y + 1, r.w - 2, r.h - 2);
      if (force < state.minReliableN) {
        hatch(ctx, r.x + 1, r.y + 1, r.w - 2, r.h - 2);
      }
      if (force >= state.minReliableN) {
        ctx.fillStyle = "#e8e8e8";
        ctx.font = `${Math.min(r.h * 0.32, 14)}px monospace`;
        ctx.textAlign = "center";
        ctx.fillText(force.toFixed(1), r.x + r.w / 2, r.y + r.h * 0.58);
      }
    }
  }
}

// diagonal hatching marks readings below the reliable band
function hatch(ctx: CanvasRenderingContext2D, x: number, y: number, w: number, h: number): void {
  ctx.save();
  ctx.beginPath();
  ctx.rect(x, y, w, h);
  ctx.clip();
  ctx.strokeStyle = "rgba(255, 255, 255, 0.07)";
  ctx.lineWidth = 1;
  const step = 7;
  for (let off = -h; off < w; off += step) {
    ctx.beginPath();
    ctx.moveTo(x + off, y + h);
    ctx.lineTo(x + off + h, y);
    ctx.stroke();
  }
  ctx.restore();
}

export function drawPoseTrace(ctx: CanvasRenderingContext2D, state: PanelState): void {
  const { width, height } = ctx.canvas;
  ctx.fillStyle = "#10141a";
  ctx.fillRect(0, 0, width, height);
  const zBarW = 18;
  const plotW = width - zBarW - 8;

  // x-y plot, symmetric extent, grows with the trail
  let extent = 50;
  for (const [x, y] of state.poseTrail) {
    extent = Math.max(extent, Math.abs(x) * 1.15, Math.abs(y) * 1.15);
  }
  const toPx = (x: number, y: number): [number, number] => [
    plotW / 2 + (x / extent) * (plotW / 2 - 4),
    height / 2 - (y / extent) * (height / 2 - 4),
  ];
  ctx.strokeStyle = "#2a3442";
  ctx.lineWidth = 1;
  ctx.beginPath();
  ctx.moveTo(0, height / 2);
  ctx.lineTo(plotW, height / 2);
  ctx.moveTo(plotW / 2, 0);
  ctx.lineTo(plotW / 2, height);
  ctx.stroke();
  if (state.poseTrail.length > 1) {
    ctx.strokeStyle = "#5aa0e0";
    ctx.beginPath();
    state.poseTrail.forEach(([x, y], i) => {
      const [px, py] = toPx(x, y);
      if (i === 0) ctx.moveTo(px, py);
      else ctx.lineTo(px, py);
    });
    ctx.stroke();
  }
  const [cx, cy] = toPx(state.pose[0], state.pose[1]);
  ctx.fillStyle = "#f0c040";
  ctx.beginPath();
  ctx.arc(cx, cy, 4, 0, Math.PI * 2);
  ctx.fill();
  ctx.fillStyle = "#8a97a8";
  ctx.font = "10px monospace";
  ctx.textAlign = "left";
  ctx.fillText(`±${extent.toFixed(0)} mm`, 4, 12);

  // z as a bar beside the plot, same extent
  const zx = width - zBarW;
  ctx.fillStyle = "#1a212b";
  ctx.fillRect(zx, 0, zBarW, height);
  const zu = Math.min(Math.max(state.pose[2] / extent, -1), 1);
  const zh = (zu * (height / 2 - 4));
  ctx.fillStyle = zu >= 0 ? "#5ae08c" : "#e05a6e";
  if (zh >= 0) ctx.fillRect(zx + 3, height / 2 - zh, zBarW - 6, zh);
  else ctx.fillRect(zx + 3, height / 2, zBarW - 6, -zh);
  ctx.strokeStyle = "#2a3442";
  ctx.strokeRect(zx + 0.5, 0.5, zBarW - 1, height - 1);
}

export function drawGauge(ctx: CanvasRenderingContext2D, state: PanelState): void {
  const { width, height } = ctx.canvas;
  ctx.fillStyle = "#10141a";
  ctx.fillRect(0, 0, width, height);
  const range = state.detectionRangeMm;
  const barH = height - 34;

  ctx.fillStyle = "#1a212b";
  ctx.fillRect(8, 8, 22, barH);
  if (state.present) {
    // nearer hand, fuller bar; unresolved presence fills the whole bar
    const d = state.distanceMm ?? 0;
    const u = 1 - Math.min(Math.max(d / range, 0), 1);
    ctx.fillStyle = state.distanceMm === null ? "#e0b45a" : "#5ac8e0";
    ctx.fillRect(8, 8 + (1 - u) * barH, 22, u * barH);
  }
  ctx.strokeStyle = "#2a3442";
  ctx.strokeRect(8.5, 8.5, 21, barH - 1);

  ctx.fillStyle = "#c8d2de";
  ctx.font = "12px monospace";
  ctx.textAlign = "left";
  const dist = !state.present
    ? "clear"
    : state.distanceMm === null
      ? `< ? (inside ${range.toFixed(0)} mm)`
      : `${state.distanceMm.toFixed(1)} mm`;
  ctx.fillText(dist, 38, 22);
  ctx.fillStyle = "#8a97a8";
  ctx.fillText(`raw ${state.counter ?? "-"}`, 38, 40);
  ctx.fillText(`avg ${state.smoothed?.toFixed(1) ?? "-"}`, 38, 56);
  ctx.fillText(`range ${range.toFixed(0)} mm`, 38, 72);
  ctx.fillStyle = "#5a6472";
  ctx.fillText(`t=${state.tVirtual.toFixed(2)} s`, 8, height - 8);
}
