"""Closed-loop simulation sessions.

One engine owns the whole chain: scripted (or live) ground truth feeds the
acquisition emulator, its wire bytes run through the stream parser into
the host pipeline (divider inversion, tare, calibration inverse,
smoothing), and the resulting force grid / proximity estimates drive the
guidance law or the avoidance watchdog on a simulated robot.

The host side is deliberately RNG-free: given the same wire bytes it
produces the same estimates, which is what makes capture replay exact.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .calibration import (
    ForceConductanceModel,
    ProximityEstimate,
    ProximityModel,
    distance_of_counter,
)
from .config import SensorConfig
from .daq import DaqEmulator, FrameQueue
from .dsp import MovingAverage
from .physics import FULL_SCALE_FORCE_N, GroundTruthState, ObjectKind
from .scenario import ONSET_RESET_FRACTION
from .protocol import (
    MODE_TACTILE,
    Frame,
    ProximityPayload,
    StreamParser,
    TactilePayload,
    encode_frame,
)
from .robot import (
    AvoidanceConfig,
    AvoidanceMonitor,
    AvoidanceState,
    GuidanceCommand,
    GuidanceGains,
    PrexelPoseMap,
    SimulatedRobot,
    TouchClass,
    classify_touch,
)
from .scenario import Scenario, ScenarioPlayer

REPORT_SCHEMA_VERSION = 1


class SessionError(Exception):
    pass


@dataclass
class SessionSettings:
    """Host- and robot-side knobs of a session."""

    mode: str = "idle"  # idle | hand_guide | collision
    gains: GuidanceGains = field(default_factory=GuidanceGains)
    avoidance: AvoidanceConfig = field(default_factory=AvoidanceConfig)
    #: Boxcar length on the proximity counter stream (samples).
    prox_smooth_window: int = 5
    #: Proximity history consulted when a touch lands.
    touch_window_s: float = 2.0
    robot_home_mm: tuple[float, float, float] = (0.0, 0.0, 0.0)
    robot_speed_cap_mm_s: float = 100.0
    robot_dead_time_s: float = 0.1
    wrap_radius_mm: float | None = None

    def __post_init__(self) -> None:
        if self.mode not in ("idle", "hand_guide", "collision"):
            raise SessionError(f"unknown mode {self.mode!r}")
        if self.prox_smooth_window < 1:
            raise SessionError("smoothing window must be >= 1")


@dataclass
class TouchEvent:
    t_s: float
    row: int
    col: int
    force_n: float
    label: TouchClass


@dataclass
class SessionResult:
    duration_s: float
    capture: bytes
    grid_times: list[float]
    grids: list[np.ndarray]
    prox_times: list[float]
    counters: list[int]
    smoothed: list[float]
    estimates: list[ProximityEstimate]
    command_times: list[float]
    commands: list[np.ndarray]
    pose_times: list[float]
    poses: list[np.ndarray]
    fsm_transitions: list[tuple[float, AvoidanceState]]
    touches: list[TouchEvent]
    frames_dropped: int
    parser_frames: int
    parser_faults: int

    def report(self) -> dict:
        peak = max((float(g.max()) for g in self.grids), default=0.0)
        return {
            "v": REPORT_SCHEMA_VERSION,
            "duration_s": self.duration_s,
            "tactile_frames": len(self.grid_times),
            "proximity_frames": len(self.prox_times),
            "frames_dropped": self.frames_dropped,
            "parser_faults": self.parser_faults,
            "peak_force_n": peak,
            "touches": [
                {"t": e.t_s, "row": e.row, "col": e.col,
                 "force_n": e.force_n, "label": e.label.value}
                for e in self.touches],
            "fsm": [{"t": t, "state": s.value} for t, s in self.fsm_transitions],
            "final_pose_mm": [float(v) for v in self.poses[-1]] if self.poses else None,
        }


class _InverseTable:
    """Vectorized inverse of the calibration polynomial for the hot path.

    Piecewise: linear from zero conductance up to the range bottom
    (unreliable region), dense monotone table over the calibrated range.
    """

    def __init__(self, model: ForceConductanceModel, points: int = 4096) -> None:
        lo, hi = model.force_range_n
        f_grid = np.linspace(lo, hi, points)
        g_grid = np.asarray(model.conductance_at(f_grid), dtype=float)
        self._g = np.concatenate([[0.0], g_grid])
        self._f = np.concatenate([[0.0], f_grid])
        self.g_top = float(g_grid[-1])
        self.model = model

    def forces(self, conductances: np.ndarray) -> np.ndarray:
        g = np.clip(np.asarray(conductances, dtype=float), 0.0, self.g_top)
        return np.interp(g, self._g, self._f)


class LiveTruth:
    """Mutable ground truth for interactive sessions (the service).

    Latest write wins; the drift clock of an element restarts whenever its
    force moves by the onset-reset fraction of full scale.
    """

    def __init__(self, layout_shape: tuple[int, int]) -> None:
        self._forces = np.zeros(layout_shape)
        self._onsets = np.zeros(layout_shape)
        self._unloading = np.zeros(layout_shape, dtype=bool)
        self._hand: float | None = None
        self._object = ObjectKind.HUMAN_HAND
        self._now = 0.0

    def set_press(self, row: int, col: int, force_n: float, now_s: float) -> None:
        previous = self._forces[row, col]
        self._forces[row, col] = force_n
        self._unloading[row, col] = force_n < previous
        if abs(force_n - previous) > ONSET_RESET_FRACTION * FULL_SCALE_FORCE_N:
            self._onsets[row, col] = now_s

    def set_hand(self, distance_mm: float | None) -> None:
        self._hand = distance_mm

    def set_object(self, kind: ObjectKind) -> None:
        self._object = kind

    def state_at(self, t: float) -> GroundTruthState:
        return GroundTruthState(
            forces_n=self._forces.copy(), onset_times_s=self._onsets.copy(),
            hand_distance_mm=self._hand, object_kind=self._object,
            time_s=t, unloading=self._unloading.copy())


class SessionEngine:
    """Runs the emulator and the host pipeline over a shared virtual clock."""

    def __init__(
        self,
        config: SensorConfig,
        settings: SessionSettings,
        force_model: ForceConductanceModel | None = None,
        prox_model: ProximityModel | None = None,
        rng: np.random.Generator | None = None,
    ) -> None:
        self.config = config
        self.settings = settings
        self.force_model = force_model or ForceConductanceModel.from_piezo(config.piezo)
        if prox_model is None:
            # The presence test runs on the smoothed counter stream, so the
            # threshold is referred to the smoothed noise level, same as
            # fitting on a smoothed baseline would give.
            cap = config.capacitive
            sigma = cap.base_sigma / math.sqrt(max(settings.prox_smooth_window, 1))
            prox_model = ProximityModel(
                cal_a=cap.cal_a, base_counter=cap.base_counter,
                threshold=cap.base_counter + max(3.0 * sigma, 1e-12),
                range_mm=cap.detection_range_mm, baseline_sigma=sigma)
        self.prox_model = prox_model
        self.emulator = DaqEmulator(config, rng)
        self.queue = FrameQueue(config.daq.queue_depth)
        self.parser = StreamParser()
        self.pose_map = PrexelPoseMap.cylinder_wrap(
            config.layout, settings.wrap_radius_mm)
        self.robot = SimulatedRobot(
            pose_mm=settings.robot_home_mm,
            speed_cap_mm_s=settings.robot_speed_cap_mm_s,
            dead_time_s=settings.robot_dead_time_s)
        self.monitor = AvoidanceMonitor(
            config=settings.avoidance, model_range_mm=self.prox_model.range_mm)
        self._inverse = _InverseTable(self.force_model)
        self._smoother = MovingAverage(settings.prox_smooth_window)
        window_len = max(
            int(round(settings.touch_window_s * config.daq.proximity_rate_hz)), 1)
        self._touch_window: deque[float] = deque(maxlen=window_len)
        self._touch_min_samples = window_len
        self.tare_offsets = np.zeros(config.layout.grid_shape())
        self._touched = np.zeros(config.layout.grid_shape(), dtype=bool)
        self._last_robot_t = 0.0
        self._last_state = self.monitor.state

    # host pipeline ------------------------------------------------------

    def grid_from_payload(self, payload: TactilePayload) -> np.ndarray:
        """ADC codes -> calibrated force grid (N), tare applied."""
        raw = np.asarray(payload.samples, dtype=float).reshape(
            payload.rows, payload.cols)
        full = (1 << self.config.daq.adc_bits) - 1
        ref = self.config.daq.ref_resistor_ohm
        with np.errstate(divide="ignore"):
            if self.config.daq.divider == "ref_low":
                r = ref * (full / raw - 1.0)  # raw 0 -> open circuit
            else:
                r = ref * raw / (full - raw)
            # open (inf) -> zero conductance; dead short (0) -> clipped to
            # the table top, i.e. full-scale force
            g = 1.0 / r
        forces = self._inverse.forces(g)
        return np.maximum(forces - self.tare_offsets, 0.0)

    def tare_now(self, grids: list[np.ndarray] | None = None) -> None:
        """Zero against recent grids, or against the current instant."""
        if grids:
            self.tare_offsets = np.mean(np.stack(grids), axis=0)

    # tick handlers ------------------------------------------------------

    def _step_robot(self, t: float, result: SessionResult) -> None:
        dt = t - self._last_robot_t
        if dt > 0:
            self.robot.step(t, dt)
            self._last_robot_t = t
        result.pose_times.append(t)
        result.poses.append(self.robot.pose_mm.copy())

    def _handle_tactile(self, t: float, payload: TactilePayload,
                        result: SessionResult) -> None:
        grid = self.grid_from_payload(payload)
        result.grid_times.append(t)
        result.grids.append(grid)
        threshold = self.settings.gains.deadband_n
        above = grid >= threshold
        fresh = above & ~self._touched
        if fresh.any():
            row, col = np.unravel_index(int(np.argmax(grid * fresh)), grid.shape)
            label = classify_touch(
                np.asarray(self._touch_window), self.prox_model,
                self._touch_min_samples)
            result.touches.append(TouchEvent(
                t_s=t, row=int(row), col=int(col),
                force_n=float(grid[row, col]), label=label))
        self._touched = above
        if self.settings.mode == "hand_guide":
            command = self._guidance(grid)
            self.robot.command_velocity(command.velocity_mm_s, t)
            result.command_times.append(t)
            result.commands.append(command.velocity_mm_s.copy())
        self._step_robot(t, result)

    def _guidance(self, grid: np.ndarray) -> GuidanceCommand:
        from .robot import guidance_from_forces
        return guidance_from_forces(grid, self.pose_map, self.settings.gains)

    def _handle_proximity(self, t: float, payload: ProximityPayload,
                          result: SessionResult) -> None:
        smoothed = self._smoother.process(float(payload.counter))
        self._touch_window.append(smoothed)
        estimate = distance_of_counter(smoothed, self.prox_model)
        result.prox_times.append(t)
        result.counters.append(payload.counter)
        result.smoothed.append(smoothed)
        result.estimates.append(estimate)
        if self.settings.mode == "collision":
            state, emit = self.monitor.update(estimate)
            if emit:
                self.robot.command_safe_pose(
                    np.asarray(self.settings.avoidance.safe_pose_mm), t)
            if state is not self._last_state:
                result.fsm_transitions.append((t, state))
                self._last_state = state
        self._step_robot(t, result)

    def process_frame(self, t: float, frame: Frame, result: SessionResult) -> None:
        if isinstance(frame.payload, TactilePayload):
            self._handle_tactile(t, frame.payload, result)
        else:
            self._handle_proximity(t, frame.payload, result)

    # run loops ----------------------------------------------------------

    def _blank_result(self, duration_s: float) -> SessionResult:
        return SessionResult(
            duration_s=duration_s, capture=b"", grid_times=[], grids=[],
            prox_times=[], counters=[], smoothed=[], estimates=[],
            command_times=[], commands=[], pose_times=[], poses=[],
            fsm_transitions=[(0.0, self.monitor.state)], touches=[],
            frames_dropped=0, parser_frames=0, parser_faults=0)

    def run_scenario(self, scenario: Scenario) -> SessionResult:
        """Run scripted truth end to end over the scenario duration.

        In collision mode the scripted hand-to-sensor distance is opened
        up by however far the robot has escaped from home: the sensor
        rides the end effector.
        """
        player = ScenarioPlayer(scenario, self.config.layout)
        home = np.asarray(self.settings.robot_home_mm, dtype=float)

        def truth_fn(t: float) -> GroundTruthState:
            state = player.state_at(t)
            if state.hand_distance_mm is not None and self.settings.mode == "collision":
                escape = float(np.linalg.norm(self.robot.pose_mm - home))
                state.hand_distance_mm += escape
            return state

        result = self._blank_result(scenario.duration_s)
        capture = bytearray()
        for t, frame in self.emulator.run(truth_fn, scenario.duration_s, self.queue):
            for queued in self.queue.pop_all():
                wire = encode_frame(queued)
                capture.extend(wire)
                for parsed in self.parser.feed(wire):
                    self.process_frame(t, parsed, result)
        result.capture = bytes(capture)
        result.frames_dropped = self.queue.dropped
        result.parser_frames = self.parser.stats.frames
        result.parser_faults = len(self.parser.diagnostics)
        return result

    def replay_capture(self, capture: bytes) -> SessionResult:
        """Re-run the host pipeline over recorded wire bytes.

        Frames carry no timestamps; each one is assigned its rail's tick
        time from the configured rates, in stream order.  With the same
        models and settings this reproduces the live session's estimates
        exactly.
        """
        result = self._blank_result(0.0)
        n_by_mode = {MODE_TACTILE: 0, 1: 0}
        rate = {MODE_TACTILE: self.config.daq.tactile_rate_hz,
                1: self.config.daq.proximity_rate_hz}
        for frame in self.parser.feed(capture):
            mode = frame.mode
            t = n_by_mode[mode] / rate[mode]
            n_by_mode[mode] += 1
            self.process_frame(t, frame, result)
        result.duration_s = max(
            result.grid_times[-1] if result.grid_times else 0.0,
            result.prox_times[-1] if result.prox_times else 0.0)
        result.parser_frames = self.parser.stats.frames
        result.parser_faults = len(self.parser.diagnostics)
        return result


def save_capture(path: str | Path, capture: bytes) -> None:
    Path(path).write_bytes(capture)


def load_capture(path: str | Path) -> bytes:
    path = Path(path)
    if not path.exists():
        raise SessionError(f"capture file not found: {path}")
    return path.read_bytes()
