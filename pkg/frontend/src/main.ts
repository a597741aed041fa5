// Panel wiring: one socket in, two kinds of user events out (virtual
// presses and the hand cursor), everything else is rendering.

import { cellAt } from "./geometry.js";
import { PressDriver } from "./press.js";
import { PanelSocket } from "./socket.js";
import { PanelState, applyMessage, initialState, markPress, setConnected } from "./state.js";
import { drawGauge, drawHeatmap, drawPoseTrace } from "./render.js";

const app = document.querySelector<HTMLDivElement>("#app")!;
app.innerHTML = `
  <header>
    <h1>prexel panel</h1>
    <span id="conn" class="badge off">offline</span>
    <span id="fsm" class="badge">monitoring</span>
    <span id="latency" class="dim"></span>
  </header>
  <main>
    <section class="block">
      <h2>sensor surface <span id="layout-name" class="dim"></span></h2>
      <canvas id="heatmap" width="640" height="200"></canvas>
      <div class="controls">
        <label>press force <output id="force-out">5.0</output> N
          <input id="force" type="range" min="0.5" max="15" step="0.1" value="5">
        </label>
        <span id="touch" class="dim"></span>
      </div>
    </section>
    <section class="block">
      <h2>hand</h2>
      <canvas id="gauge" width="220" height="200"></canvas>
      <div class="controls">
        <label>distance <output id="hand-out">-</output> mm
          <input id="hand" type="range" min="1" max="300" step="1" value="300">
        </label>
        <button id="hand-away">remove hand</button>
      </div>
    </section>
    <section class="block">
      <h2>robot</h2>
      <canvas id="pose" width="260" height="200"></canvas>
      <div class="controls">
        <label>mode
          <select id="mode">
            <option value="idle">idle</option>
            <option value="hand_guide">hand guide</option>
            <option value="collision">collision</option>
          </select>
        </label>
        <button id="tare">tare</button>
        <span id="pose-text" class="dim"></span>
      </div>
    </section>
  </main>
`;

const heatmap = document.querySelector<HTMLCanvasElement>("#heatmap")!;
const gauge = document.querySelector<HTMLCanvasElement>("#gauge")!;
const poseCanvas = document.querySelector<HTMLCanvasElement>("#pose")!;
const connBadge = document.querySelector<HTMLSpanElement>("#conn")!;
const fsmBadge = document.querySelector<HTMLSpanElement>("#fsm")!;
const latencyEl = document.querySelector<HTMLSpanElement>("#latency")!;
const touchEl = document.querySelector<HTMLSpanElement>("#touch")!;
const poseText = document.querySelector<HTMLSpanElement>("#pose-text")!;
const layoutName = document.querySelector<HTMLSpanElement>("#layout-name")!;

let state: PanelState = initialState();
let dirty = true;

function update(next: PanelState): void {
  state = next;
  dirty = true;
}

const url = `ws://${location.host}/ws`;
const socket = new PanelSocket(
  url,
  (msg, nowMs) => update(applyMessage(state, msg, nowMs)),
  (connected) => update(setConnected(state, connected)),
);
socket.connect();

// press interaction: slider picks the newtons, pointer picks the prexel
const press = new PressDriver((row, col, forceN, fresh) => {
  // time from deliberate presses only, on the same clock as the socket's
  // message stamps; the keep-alive repeats would otherwise reset the mark
  if (forceN > 0 && fresh) update(markPress(state, Date.now()));
  socket.send({ type: "press", row, col, force_n: forceN });
});

function pointerCell(ev: PointerEvent) {
  if (state.layout === null) return null;
  const rect = heatmap.getBoundingClientRect();
  return cellAt(ev.clientX - rect.left, ev.clientY - rect.top, {
    width: rect.width, height: rect.height,
    rows: state.layout.rows, cols: state.layout.cols,
  });
}

heatmap.addEventListener("pointerdown", (ev) => {
  heatmap.setPointerCapture(ev.pointerId);
  press.down(pointerCell(ev));
});
heatmap.addEventListener("pointermove", (ev) => press.move(pointerCell(ev)));
heatmap.addEventListener("pointerup", () => press.up());
heatmap.addEventListener("pointercancel", () => press.up());

const forceSlider = document.querySelector<HTMLInputElement>("#force")!;
const forceOut = document.querySelector<HTMLOutputElement>("#force-out")!;
forceSlider.addEventListener("input", () => {
  press.setForce(Number(forceSlider.value));
  forceOut.value = Number(forceSlider.value).toFixed(1);
});

// hand cursor: slider drags the virtual hand in and out
const handSlider = document.querySelector<HTMLInputElement>("#hand")!;
const handOut = document.querySelector<HTMLOutputElement>("#hand-out")!;
handSlider.addEventListener("input", () => {
  const d = Number(handSlider.value);
  handOut.value = d.toFixed(0);
  socket.send({ type: "hand", distance_mm: d });
});
document.querySelector<HTMLButtonElement>("#hand-away")!.addEventListener("click", () => {
  handOut.value = "-";
  socket.send({ type: "hand", distance_mm: null });
});

document.querySelector<HTMLSelectElement>("#mode")!.addEventListener("change", (ev) => {
  const mode = (ev.target as HTMLSelectElement).value as
    "idle" | "hand_guide" | "collision";
  socket.send({ type: "mode", mode });
});
document.querySelector<HTMLButtonElement>("#tare")!.addEventListener("click", () => {
  socket.send({ type: "tare" });
});

function renderFrame(): void {
  if (dirty) {
    dirty = false;
    drawHeatmap(heatmap.getContext("2d")!, state);
    drawGauge(gauge.getContext("2d")!, state);
    drawPoseTrace(poseCanvas.getContext("2d")!, state);

    connBadge.textContent = state.connected ? "live" : "offline";
    connBadge.className = `badge ${state.connected ? "on" : "off"}`;
    fsmBadge.textContent = state.fsm;
    fsmBadge.className = `badge ${state.fsm === "triggered" ? "alert" : ""}`;
    latencyEl.textContent =
      state.latencyMs === null ? "" : `press→pose ${state.latencyMs.toFixed(0)} ms`;
    touchEl.textContent = state.lastTouch === null ? "" :
      `touch [${state.lastTouch.row},${state.lastTouch.col}] ` +
      `${state.lastTouch.forceN.toFixed(1)} N → ${state.lastTouch.label}`;
    poseText.textContent =
      `xyz [${state.pose.map((v) => v.toFixed(1)).join(", ")}] mm, ${state.mode}`;
    layoutName.textContent = state.layout === null ? "" :
      `${state.layout.preset} (${state.layout.rows}×${state.layout.cols})`;
  }
  requestAnimationFrame(renderFrame);
}
requestAnimationFrame(renderFrame);
