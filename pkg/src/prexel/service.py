"""Live WebSocket service.

Hosts one session engine on a wall-clock tick loop and streams its state
to any number of panels over ``/ws``.  Messages are JSON, versioned with a
``"v"`` field; the first message after connect is always a full snapshot
so a reconnecting client resynchronizes without history.

Outbound message types: ``snapshot``, ``grid``, ``proximity``, ``pose``,
``touch``, ``fsm``, ``heartbeat``.  Inbound (latest write wins):

* ``{"type": "press", "row": r, "col": c, "force_n": f}``  (0 releases)
* ``{"type": "hand", "distance_mm": d}``  (null removes the hand)
* ``{"type": "object", "kind": "human_hand" | "non_detectable_object"}``
* ``{"type": "mode", "mode": "idle" | "hand_guide" | "collision"}``
* ``{"type": "tare"}``

The engine keeps running while no client is connected; reconnect and the
snapshot catches you up.
"""

from __future__ import annotations

import asyncio
import contextlib
import json
from pathlib import Path

import numpy as np
from fastapi import FastAPI, WebSocket

from .config import SensorConfig
from .physics import FULL_SCALE_FORCE_N, MIN_RELIABLE_FORCE_N, ObjectKind
from .session import LiveTruth, SessionEngine, SessionSettings

MESSAGE_SCHEMA_VERSION = 1
HEARTBEAT_PERIOD_S = 1.0
#: Broadcast decimation relative to the tactile rate.
GRID_EVERY_N = 5
POSE_EVERY_N = 2


class _Broadcaster:
    """Per-client bounded queues; slow clients lose oldest messages."""

    def __init__(self, depth: int = 256) -> None:
        self._clients: dict[int, asyncio.Queue] = {}
        self._next_id = 0
        self._depth = depth

    def subscribe(self) -> tuple[int, asyncio.Queue]:
        cid = self._next_id
        self._next_id += 1
        q: asyncio.Queue = asyncio.Queue(maxsize=self._depth)
        self._clients[cid] = q
        return cid, q

    def unsubscribe(self, cid: int) -> None:
        self._clients.pop(cid, None)

    def publish(self, message: dict) -> None:
        text = json.dumps(message)
        for q in self._clients.values():
            if q.full():
                with contextlib.suppress(asyncio.QueueEmpty):
                    q.get_nowait()
            with contextlib.suppress(asyncio.QueueFull):
                q.put_nowait(text)


class SensorService:
    """Owns the engine, the live truth and the tick loop."""

    def __init__(
        self,
        config: SensorConfig,
        models: dict | None = None,
        seed: int = 0,
        tick_scale: float = 1.0,
    ) -> None:
        models = models or {}
        self.config = config
        self.engine = SessionEngine(
            config, SessionSettings(mode="idle"),
            force_model=models.get("force"),
            prox_model=models.get("proximity"),
            rng=np.random.default_rng(seed))
        self.truth = LiveTruth(config.layout.grid_shape())
        self.broadcast = _Broadcaster()
        self.tick_scale = tick_scale
        self._seq = 0
        self._virtual_t = 0.0
        self._recent_grids: list[np.ndarray] = []
        self._last_fsm = self.engine.monitor.state
        self._task: asyncio.Task | None = None
        self._heartbeat: asyncio.Task | None = None

    # message plumbing ---------------------------------------------------

    def _msg(self, mtype: str, **body) -> dict:
        self._seq += 1
        return {"v": MESSAGE_SCHEMA_VERSION, "type": mtype,
                "seq": self._seq, "t": round(self._virtual_t, 6), **body}

    def snapshot(self) -> dict:
        engine = self.engine
        return self._msg(
            "snapshot",
            layout={"preset": self.config.preset,
                    "rows": self.config.layout.rows,
                    "cols": self.config.layout.cols},
            mode=engine.settings.mode,
            pose_mm=[float(v) for v in engine.robot.pose_mm],
            fsm=engine.monitor.state.value,
            force_range_n=[0.0, FULL_SCALE_FORCE_N],
            min_reliable_force_n=MIN_RELIABLE_FORCE_N,
            detection_range_mm=engine.prox_model.range_mm,
            rates_hz={"tactile": self.config.daq.tactile_rate_hz,
                      "proximity": self.config.daq.proximity_rate_hz})

    def apply_inbound(self, message: dict) -> None:
        mtype = message.get("type")
        if mtype == "press":
            row, col = int(message["row"]), int(message["col"])
            rows, cols = self.config.layout.grid_shape()
            if not (0 <= row < rows and 0 <= col < cols):
                return
            force = float(message.get("force_n", 0.0))
            force = min(max(force, 0.0), FULL_SCALE_FORCE_N)
            self.truth.set_press(row, col, force, self._virtual_t)
        elif mtype == "hand":
            d = message.get("distance_mm")
            self.truth.set_hand(None if d is None else max(float(d), 1.0))
        elif mtype == "object":
            with contextlib.suppress(ValueError):
                self.truth.set_object(ObjectKind(message.get("kind")))
        elif mtype == "mode":
            mode = message.get("mode")
            if mode in ("idle", "hand_guide", "collision"):
                self.engine.settings.mode = mode
                self.engine.robot.command_velocity(np.zeros(3), self._virtual_t)
        elif mtype == "tare":
            self.engine.tare_now(self._recent_grids)

    # tick loop ----------------------------------------------------------

    async def run(self) -> None:
        loop = asyncio.get_running_loop()
        t0 = loop.time()
        i_tac = i_prox = 0
        rate_t = self.config.daq.tactile_rate_hz
        rate_p = self.config.daq.proximity_rate_hz
        while True:
            next_tac = i_tac / rate_t
            next_prox = i_prox / rate_p
            t_next = min(next_tac, next_prox)
            wall_target = t0 + t_next / self.tick_scale
            delay = wall_target - loop.time()
            if delay > 0:
                await asyncio.sleep(delay)
            self._virtual_t = t_next
            if next_tac <= next_prox:
                self._tick_tactile(t_next, i_tac)
                i_tac += 1
            else:
                self._tick_proximity(t_next)
                i_prox += 1

    def _fresh_result(self):
        result = self.engine._blank_result(0.0)
        result.fsm_transitions.clear()
        return result

    def _tick_tactile(self, t: float, index: int) -> None:
        frame = self.engine.emulator.tactile_frame(self.truth.state_at(t))
        result = self._fresh_result()
        self.engine.process_frame(t, frame, result)
        grid = result.grids[-1]
        self._recent_grids.append(grid)
        del self._recent_grids[:-20]
        if index % GRID_EVERY_N == 0:
            self.broadcast.publish(self._msg(
                "grid", forces_n=[[round(float(v), 4) for v in row] for row in grid]))
        if index % POSE_EVERY_N == 0:
            self.broadcast.publish(self._msg(
                "pose",
                pose_mm=[float(v) for v in self.engine.robot.pose_mm],
                commanded_mm_s=[float(v) for v in self.engine.robot.commanded_velocity]))
        for touch in result.touches:
            self.broadcast.publish(self._msg(
                "touch", row=touch.row, col=touch.col,
                force_n=round(touch.force_n, 3), label=touch.label.value))

    def _tick_proximity(self, t: float) -> None:
        frame = self.engine.emulator.proximity_frame(self.truth.state_at(t))
        result = self._fresh_result()
        self.engine.process_frame(t, frame, result)
        estimate = result.estimates[-1]
        self.broadcast.publish(self._msg(
            "proximity",
            counter=result.counters[-1],
            smoothed=round(result.smoothed[-1], 2),
            present=estimate.present,
            distance_mm=None if estimate.distance_mm is None
            else round(estimate.distance_mm, 2),
            fsm=self.engine.monitor.state.value))
        if self.engine.monitor.state is not self._last_fsm:
            self._last_fsm = self.engine.monitor.state
            self.broadcast.publish(self._msg("fsm", state=self._last_fsm.value))

    async def heartbeat(self) -> None:
        while True:
            await asyncio.sleep(HEARTBEAT_PERIOD_S)
            self.broadcast.publish(self._msg("heartbeat"))

    def start(self) -> None:
        self._task = asyncio.create_task(self.run())
        self._heartbeat = asyncio.create_task(self.heartbeat())

    async def stop(self) -> None:
        for task in (self._task, self._heartbeat):
            if task is not None:
                task.cancel()
                with contextlib.suppress(asyncio.CancelledError):
                    await task


def create_app(
    config: SensorConfig | None = None,
    models: dict | None = None,
    static_dir: Path | None = None,
    seed: int = 0,
    tick_scale: float = 1.0,
) -> FastAPI:
    """Build the FastAPI app; the tick loop runs for the app's lifespan."""
    service = SensorService(config or SensorConfig(), models=models,
                            seed=seed, tick_scale=tick_scale)

    @contextlib.asynccontextmanager
    async def lifespan(app: FastAPI):
        service.start()
        try:
            yield
        finally:
            await service.stop()

    app = FastAPI(lifespan=lifespan)
    app.state.service = service

    @app.get("/health")
    async def health() -> dict:
        return {"ok": True, "mode": service.engine.settings.mode}

    @app.websocket("/ws")
    async def ws(websocket: WebSocket) -> None:
        await websocket.accept()
        cid, queue = service.broadcast.subscribe()
        await websocket.send_text(json.dumps(service.snapshot()))

        async def pump_outbound() -> None:
            while True:
                await websocket.send_text(await queue.get())

        async def pump_inbound() -> None:
            while True:
                raw = await websocket.receive_text()
                try:
                    message = json.loads(raw)
                except json.JSONDecodeError:
                    continue
                if isinstance(message, dict):
                    service.apply_inbound(message)

        outbound = asyncio.create_task(pump_outbound())
        inbound = asyncio.create_task(pump_inbound())
        try:
            await asyncio.wait({outbound, inbound},
                               return_when=asyncio.FIRST_COMPLETED)
        finally:
            for task in (outbound, inbound):
                task.cancel()
                with contextlib.suppress(asyncio.CancelledError, Exception):
                    await task
            service.broadcast.unsubscribe(cid)

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="panel")

    return app
