"""Robot-side consumers of the calibrated sensor streams.

The strip build wraps around a cylindrical end-effector link, so each
column looks outward along its own radial direction.  Hand guidance maps
column forces to end-effector velocity (push the sensor, the robot gives
way); the proximity channel drives a collision-avoidance state machine
that parks the robot at a safe pose while a hand is near.

Distances and poses in mm, velocities in mm/s, forces in N.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .calibration import ProximityEstimate, ProximityModel
from .physics import MIN_RELIABLE_FORCE_N, SensorLayout


class RobotError(Exception):
    pass


# ---------------------------------------------------------------------------
# geometry

@dataclass
class PrexelPoseMap:
    """Rigid transform of every element in the end-effector frame.

    ``poses`` is (rows, cols, 4, 4); each transform's z axis is the
    element's outward normal.
    """

    poses: np.ndarray
    layout: SensorLayout
    wrap_radius_mm: float

    def __post_init__(self) -> None:
        expect = (self.layout.rows, self.layout.cols, 4, 4)
        if self.poses.shape != expect:
            raise RobotError(f"pose grid must be {expect}")
        for r in range(self.layout.rows):
            for c in range(self.layout.cols):
                rot = self.poses[r, c, :3, :3]
                if not np.allclose(rot @ rot.T, np.eye(3), atol=1e-9):
                    raise RobotError(f"pose ({r},{c}) is not a rotation")

    @classmethod
    def cylinder_wrap(
        cls,
        layout: SensorLayout,
        radius_mm: float | None = None,
        angle_offset_rad: float = 0.0,
    ) -> "PrexelPoseMap":
        """Wrap the strip around a cylinder of ``radius_mm`` about the z axis.

        Default radius closes the strip exactly: column pitch times column
        count equals the circumference.  Rows stack along z at the row
        pitch; column c sits at angle offset + c * (pitch / radius).
        """
        col_pitch = layout.footprint_mm[1] / layout.cols
        if radius_mm is None:
            radius_mm = col_pitch * layout.cols / (2.0 * math.pi)
        if radius_mm <= 0:
            raise RobotError("wrap radius must be positive")
        row_pitch = layout.footprint_mm[0] / layout.rows
        d_theta = col_pitch / radius_mm
        poses = np.zeros((layout.rows, layout.cols, 4, 4))
        for r in range(layout.rows):
            z = (r - (layout.rows - 1) / 2.0) * row_pitch
            for c in range(layout.cols):
                theta = angle_offset_rad + c * d_theta
                ct, st = math.cos(theta), math.sin(theta)
                # outward normal is the local z axis
                pose = np.eye(4)
                pose[:3, 0] = (-st, ct, 0.0)   # tangential
                pose[:3, 1] = (0.0, 0.0, 1.0)  # along the link
                pose[:3, 2] = (ct, st, 0.0)    # radial, outward
                pose[:3, 3] = (radius_mm * ct, radius_mm * st, z)
                poses[r, c] = pose
        return cls(poses=poses, layout=layout, wrap_radius_mm=radius_mm)

    def column_angles(self) -> np.ndarray:
        """Azimuth of each column's outward normal."""
        normals = self.poses[0, :, :3, 2]
        return np.arctan2(normals[:, 1], normals[:, 0])

    def push_directions(self) -> np.ndarray:
        """(cols, 2) unit xy directions a push on each column drives toward.

        A push is inward: opposite the column's outward normal.
        """
        angles = self.column_angles()
        return np.column_stack([-np.cos(angles), -np.sin(angles)])

    def rotated(self, angle_rad: float) -> "PrexelPoseMap":
        """Same map with the whole sensor turned about z."""
        ct, st = math.cos(angle_rad), math.sin(angle_rad)
        rot = np.eye(4)
        rot[:2, :2] = ((ct, -st), (st, ct))
        return PrexelPoseMap(
            poses=np.einsum("ij,rcjk->rcik", rot, self.poses),
            layout=self.layout, wrap_radius_mm=self.wrap_radius_mm)


# ---------------------------------------------------------------------------
# hand guidance

@dataclass
class GuidanceGains:
    gain_xy_mm_s_per_n: float = 5.0
    gain_z_mm_s_per_n: float = 5.0
    deadband_n: float = MIN_RELIABLE_FORCE_N
    speed_cap_mm_s: float = 100.0

    def __post_init__(self) -> None:
        if self.speed_cap_mm_s <= 0:
            raise RobotError("speed cap must be positive")
        if self.deadband_n < 0:
            raise RobotError("deadband must be >= 0")


@dataclass
class GuidanceCommand:
    velocity_mm_s: np.ndarray  # (3,) in the end-effector frame
    column_forces_n: np.ndarray
    active: bool


def column_forces(force_grid: np.ndarray) -> np.ndarray:
    """Per-column force as the maximum over the column's rows.

    A fingertip pressing between two rows loads both elements; summing
    them would read the touch nearly double, so the column reports its
    strongest element instead.
    """
    grid = np.atleast_2d(np.asarray(force_grid, dtype=float))
    return grid.max(axis=0)


def guidance_from_forces(
    force_grid: np.ndarray,
    pose_map: PrexelPoseMap,
    gains: GuidanceGains,
) -> GuidanceCommand:
    """Admittance-style velocity from a calibrated force grid.

    xy: sum of column forces along each column's inward push direction.
    z: imbalance between the two rows (squeeze the top row, the tool
    translates one way along the link; the bottom row, the other).  Both
    use only forces at or above the deadband; the result is capped at the
    speed limit preserving direction.
    """
    grid = np.atleast_2d(np.asarray(force_grid, dtype=float))
    if grid.shape != pose_map.layout.grid_shape():
        raise RobotError(
            f"grid {grid.shape} does not match layout {pose_map.layout.grid_shape()}")
    masked = np.where(grid >= gains.deadband_n, grid, 0.0)
    cols = column_forces(masked)
    directions = pose_map.push_directions()
    v_xy = gains.gain_xy_mm_s_per_n * (cols[:, None] * directions).sum(axis=0)
    if pose_map.layout.rows == 2:
        v_z = gains.gain_z_mm_s_per_n * float(masked[0].sum() - masked[1].sum())
    else:
        # the row-imbalance rule only makes sense on the two-row strip
        v_z = 0.0
    v = np.array([v_xy[0], v_xy[1], v_z])
    speed = float(np.linalg.norm(v))
    if speed > gains.speed_cap_mm_s:
        v = v * (gains.speed_cap_mm_s / speed)
    return GuidanceCommand(velocity_mm_s=v, column_forces_n=cols,
                           active=bool(np.any(cols > 0.0)))


# ---------------------------------------------------------------------------
# collision avoidance

class AvoidanceState(enum.Enum):
    MONITORING = "monitoring"
    TRIGGERED = "triggered"
    RECOVERING = "recovering"


@dataclass
class AvoidanceConfig:
    threshold_mm: float = 100.0
    consecutive_hits: int = 3
    recovery_ticks: int = 10
    safe_pose_mm: tuple[float, float, float] = (400.0, 0.0, 0.0)

    def __post_init__(self) -> None:
        if self.consecutive_hits < 1 or self.recovery_ticks < 1:
            raise RobotError("debounce counts must be >= 1")
        if self.threshold_mm <= 0:
            raise RobotError("threshold must be positive")


@dataclass
class AvoidanceMonitor:
    """Debounced proximity watchdog.

    monitoring --(hits on ``consecutive_hits`` straight ticks)--> triggered,
    emitting one safe-pose command.  triggered --(first clear tick)-->
    recovering.  recovering --(``recovery_ticks`` straight clear ticks)-->
    monitoring; any presence falls back to triggered without re-emitting.

    A "hit" is presence with distance inside the threshold, or presence
    with no resolvable distance when the threshold covers the whole
    calibrated range (anything coupled is then too close to wave off).
    """

    config: AvoidanceConfig
    model_range_mm: float
    state: AvoidanceState = AvoidanceState.MONITORING
    _hits: int = 0
    _clears: int = 0

    def _is_hit(self, estimate: ProximityEstimate) -> bool:
        if not estimate.present:
            return False
        if estimate.distance_mm is not None:
            return estimate.distance_mm < self.config.threshold_mm
        return self.config.threshold_mm >= self.model_range_mm

    def update(self, estimate: ProximityEstimate) -> tuple[AvoidanceState, bool]:
        """Advance one proximity tick; returns (state, emit_safe_pose)."""
        hit = self._is_hit(estimate)
        emit = False
        if self.state is AvoidanceState.MONITORING:
            self._hits = self._hits + 1 if hit else 0
            if self._hits >= self.config.consecutive_hits:
                self.state = AvoidanceState.TRIGGERED
                self._hits = 0
                emit = True
        elif self.state is AvoidanceState.TRIGGERED:
            if not estimate.present:
                self.state = AvoidanceState.RECOVERING
                self._clears = 1
        else:  # RECOVERING
            if estimate.present:
                self.state = AvoidanceState.TRIGGERED
                self._clears = 0
            else:
                self._clears += 1
                if self._clears >= self.config.recovery_ticks:
                    self.state = AvoidanceState.MONITORING
                    self._clears = 0
                    self._hits = 0
        return self.state, emit


# ---------------------------------------------------------------------------
# touch classification

class TouchClass(enum.Enum):
    HUMAN = "human"
    OBJECT = "object"
    UNKNOWN = "unknown"


def classify_touch(
    recent_counters: np.ndarray,
    model: ProximityModel,
    min_samples: int,
) -> TouchClass:
    """Label a fresh touch from the proximity history just before it.

    A human hand announces itself capacitively on approach, an object does
    not.  ``recent_counters`` is the smoothed counter window trailing the
    touch; with fewer than ``min_samples`` entries, or with the window
    disturbed below the baseline band without ever crossing the presence
    threshold, the call is unknown.
    """
    window = np.asarray(recent_counters, dtype=float)
    if window.size < min_samples:
        return TouchClass.UNKNOWN
    lower_band = model.base_counter - (model.threshold - model.base_counter)
    if np.any(window > model.threshold):
        return TouchClass.HUMAN
    if np.any(window < lower_band):
        return TouchClass.UNKNOWN
    return TouchClass.OBJECT


# ---------------------------------------------------------------------------
# point robot

@dataclass
class _Pending:
    effective_s: float
    kind: str
    value: np.ndarray


class SimulatedRobot:
    """First-order point model of the end effector.

    Velocity commands take effect after the actuation dead time; a
    safe-pose command overrides velocity and drives straight to the target
    at the speed cap, holding there until a new command arrives after it.
    """

    def __init__(
        self,
        pose_mm: tuple[float, float, float] = (0.0, 0.0, 0.0),
        speed_cap_mm_s: float = 100.0,
        dead_time_s: float = 0.1,
    ) -> None:
        if speed_cap_mm_s <= 0 or dead_time_s < 0:
            raise RobotError("bad robot limits")
        self.pose_mm = np.asarray(pose_mm, dtype=float)
        self.speed_cap_mm_s = speed_cap_mm_s
        self.dead_time_s = dead_time_s
        self._queue: deque[_Pending] = deque()
        self._velocity = np.zeros(3)
        self._safe_target: np.ndarray | None = None

    def command_velocity(self, velocity_mm_s: np.ndarray, now_s: float) -> None:
        self._queue.append(_Pending(
            now_s + self.dead_time_s, "velocity",
            np.asarray(velocity_mm_s, dtype=float).copy()))

    def command_safe_pose(self, target_mm: np.ndarray, now_s: float) -> None:
        self._queue.append(_Pending(
            now_s + self.dead_time_s, "safe_pose",
            np.asarray(target_mm, dtype=float).copy()))

    @property
    def at_safe_pose(self) -> bool:
        return (self._safe_target is not None
                and bool(np.allclose(self.pose_mm, self._safe_target, atol=1e-9)))

    @property
    def commanded_velocity(self) -> np.ndarray:
        return self._velocity.copy()

    def step(self, now_s: float, dt_s: float) -> np.ndarray:
        """Advance to ``now_s + dt_s``; returns the new pose."""
        while self._queue and self._queue[0].effective_s <= now_s + 1e-12:
            cmd = self._queue.popleft()
            if cmd.kind == "safe_pose":
                self._safe_target = cmd.value
                self._velocity = np.zeros(3)
            elif self._safe_target is None or self.at_safe_pose:
                self._safe_target = None
                self._velocity = cmd.value
        if self._safe_target is not None:
            delta = self._safe_target - self.pose_mm
            dist = float(np.linalg.norm(delta))
            reach = self.speed_cap_mm_s * dt_s
            if dist <= reach or dist == 0.0:
                self.pose_mm = self._safe_target.copy()
            else:
                self.pose_mm = self.pose_mm + delta * (reach / dist)
        else:
            v = self._velocity
            speed = float(np.linalg.norm(v))
            if speed > self.speed_cap_mm_s:
                v = v * (self.speed_cap_mm_s / speed)
            self.pose_mm = self.pose_mm + v * dt_s
        return self.pose_mm.copy()
