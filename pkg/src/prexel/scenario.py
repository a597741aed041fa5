"""Declarative test scenarios.

A scenario is a JSON document: preset, mode, seed, duration and a list of
timed events (presses, releases, hand approaches).  The player turns it
into the ground-truth state the acquisition emulator samples, including
per-element load-onset clocks for drift and the hysteresis branch each
element is currently on.

Event kinds:

* ``press``    {t, row, col, force_n, rise_s=0}
* ``release``  {t, row, col, fall_s=0}
* ``hand``     {t, distance_mm}         teleport the hand
* ``hand_away`` {t}                     remove the hand
* ``approach`` {t, from_mm, to_mm, speed_mm_s}  linear approach, then hold
* ``retreat``  {t, to_mm, speed_mm_s}   linear retreat from current distance
* ``object``   {t, object}              object kind from here on
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .physics import FULL_SCALE_FORCE_N, GroundTruthState, ObjectKind, SensorLayout

SCENARIO_SCHEMA_VERSION = 1

#: Force change that restarts an element's drift clock.
ONSET_RESET_FRACTION = 0.10

_EVENT_KINDS = ("press", "release", "hand", "hand_away", "approach", "retreat", "object")

#: Stands in for "no hand" on the piecewise distance profile (kept finite
#: so interpolation through removal instants cannot produce NaN).
_ABSENT = 1.0e18
_ABSENT_CUTOFF = 1.0e17


class ScenarioError(Exception):
    pass


@dataclass
class ScenarioEvent:
    t_s: float
    kind: str
    params: dict

    def __post_init__(self) -> None:
        if self.kind not in _EVENT_KINDS:
            raise ScenarioError(f"unknown event kind {self.kind!r}")
        if self.t_s < 0:
            raise ScenarioError("event time must be >= 0")


@dataclass
class Scenario:
    preset: str = "16px"
    mode: str = "idle"
    seed: int = 0
    duration_s: float = 10.0
    events: list[ScenarioEvent] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.duration_s <= 0:
            raise ScenarioError("duration must be positive")
        if self.mode not in ("idle", "hand_guide", "collision"):
            raise ScenarioError(f"unknown mode {self.mode!r}")
        times = [e.t_s for e in self.events]
        if times != sorted(times):
            raise ScenarioError("events must be listed in time order")

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"scenario is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ScenarioError("scenario must be a JSON object")
        if doc.get("v", SCENARIO_SCHEMA_VERSION) != SCENARIO_SCHEMA_VERSION:
            raise ScenarioError(f"unsupported scenario version {doc.get('v')!r}")
        events = []
        for entry in doc.get("events", []):
            if not isinstance(entry, dict) or "kind" not in entry or "t" not in entry:
                raise ScenarioError(f"malformed event entry: {entry!r}")
            params = {k: v for k, v in entry.items() if k not in ("kind", "t")}
            events.append(ScenarioEvent(t_s=float(entry["t"]), kind=entry["kind"],
                                        params=params))
        return cls(
            preset=doc.get("preset", "16px"),
            mode=doc.get("mode", "idle"),
            seed=int(doc.get("seed", 0)),
            duration_s=float(doc.get("duration_s", 10.0)),
            events=events)

    @classmethod
    def load(cls, path: str | Path) -> "Scenario":
        path = Path(path)
        if not path.exists():
            raise ScenarioError(f"scenario file not found: {path}")
        return cls.from_json(path.read_text())

    def to_json(self) -> str:
        doc = {
            "v": SCENARIO_SCHEMA_VERSION,
            "preset": self.preset,
            "mode": self.mode,
            "seed": self.seed,
            "duration_s": self.duration_s,
            "events": [{"t": e.t_s, "kind": e.kind, **e.params} for e in self.events],
        }
        return json.dumps(doc, indent=2) + "\n"


@dataclass
class _Profile:
    """Piecewise-linear value over time: level breakpoints, hold after last."""

    times: list[float]
    values: list[float]

    def value_at(self, t: float) -> float:
        return float(np.interp(t, self.times, self.values))

    def segment_index(self, t: float) -> int:
        return int(np.searchsorted(self.times, t, side="right")) - 1


class ScenarioPlayer:
    """Evaluates the scripted ground truth at monotone query times."""

    def __init__(self, scenario: Scenario, layout: SensorLayout) -> None:
        self.scenario = scenario
        self.layout = layout
        self._force = [[_Profile([0.0], [0.0]) for _ in range(layout.cols)]
                       for _ in range(layout.rows)]
        self._distance = _Profile([0.0], [_ABSENT])
        self._object: list[tuple[float, ObjectKind]] = [(0.0, ObjectKind.HUMAN_HAND)]
        self._build()
        self._seg_dirs: list[list[list[int]]] = [
            [self._segment_directions(self._force[r][c]) for c in range(layout.cols)]
            for r in range(layout.rows)]
        self._onsets: list[list[list[tuple[float, float]]]] = [
            [self._onset_schedule(self._force[r][c]) for c in range(layout.cols)]
            for r in range(layout.rows)]

    # construction -------------------------------------------------------

    def _build(self) -> None:
        for event in self.scenario.events:
            handler = getattr(self, f"_ev_{event.kind}")
            try:
                handler(event.t_s, **event.params)
            except TypeError as exc:
                raise ScenarioError(
                    f"bad parameters for {event.kind!r} at t={event.t_s}: {exc}") from exc

    def _force_profile(self, row: int, col: int) -> _Profile:
        if not (0 <= row < self.layout.rows and 0 <= col < self.layout.cols):
            raise ScenarioError(f"element ({row},{col}) outside the grid")
        return self._force[row][col]

    @staticmethod
    def _append(profile: _Profile, t: float, value: float, ramp_s: float) -> None:
        if t < profile.times[-1]:
            raise ScenarioError("events for one target must not overlap in time")
        current = profile.values[-1]
        if t > profile.times[-1]:
            profile.times.append(t)
            profile.values.append(current)
        if ramp_s > 0:
            profile.times.append(t + ramp_s)
        else:
            # a true step still needs distinct breakpoints for interpolation
            profile.times.append(t + 1e-9)
        profile.values.append(value)

    def _ev_press(self, t: float, row: int, col: int, force_n: float,
                  rise_s: float = 0.0) -> None:
        if not 0 <= force_n <= FULL_SCALE_FORCE_N:
            raise ScenarioError(f"press force {force_n} outside 0..{FULL_SCALE_FORCE_N} N")
        self._append(self._force_profile(row, col), t, force_n, rise_s)

    def _ev_release(self, t: float, row: int, col: int, fall_s: float = 0.0) -> None:
        self._append(self._force_profile(row, col), t, 0.0, fall_s)

    def _ev_hand(self, t: float, distance_mm: float) -> None:
        if distance_mm <= 0:
            raise ScenarioError("hand distance must be positive")
        self._append(self._distance, t, distance_mm, 0.0)

    def _ev_hand_away(self, t: float) -> None:
        self._append(self._distance, t, _ABSENT, 0.0)

    def _ev_approach(self, t: float, from_mm: float, to_mm: float,
                     speed_mm_s: float) -> None:
        if speed_mm_s <= 0 or from_mm <= 0 or to_mm <= 0:
            raise ScenarioError("approach needs positive distances and speed")
        self._append(self._distance, t, from_mm, 0.0)
        ramp = abs(from_mm - to_mm) / speed_mm_s
        self._append(self._distance, t + 1e-9, to_mm, ramp)

    def _ev_retreat(self, t: float, to_mm: float, speed_mm_s: float) -> None:
        if speed_mm_s <= 0 or to_mm <= 0:
            raise ScenarioError("retreat needs positive distance and speed")
        start = self._distance.value_at(t)
        if start >= _ABSENT_CUTOFF:
            raise ScenarioError("retreat without a hand present")
        ramp = abs(to_mm - start) / speed_mm_s
        self._append(self._distance, t, to_mm, ramp)

    def _ev_object(self, t: float, object: str) -> None:
        try:
            kind = ObjectKind(object)
        except ValueError:
            raise ScenarioError(f"unknown object kind {object!r}") from None
        self._object.append((t, kind))

    # derived schedules --------------------------------------------------

    @staticmethod
    def _segment_directions(profile: _Profile) -> list[int]:
        """Per segment: +1 loading, -1 unloading; plateaus inherit."""
        dirs: list[int] = []
        last = +1
        for i in range(len(profile.times)):
            if i + 1 < len(profile.times):
                delta = profile.values[i + 1] - profile.values[i]
            else:
                delta = 0.0
            if delta > 0:
                last = +1
            elif delta < 0:
                last = -1
            dirs.append(last)
        return dirs

    @staticmethod
    def _onset_schedule(profile: _Profile) -> list[tuple[float, float]]:
        """(onset time, level) effective from each breakpoint onward."""
        out: list[tuple[float, float]] = []
        onset_t, onset_f = 0.0, profile.values[0]
        threshold = ONSET_RESET_FRACTION * FULL_SCALE_FORCE_N
        for t, f in zip(profile.times, profile.values):
            if abs(f - onset_f) > threshold:
                onset_t, onset_f = t, f
            out.append((onset_t, onset_f))
        return out

    # evaluation ---------------------------------------------------------

    def object_kind_at(self, t: float) -> ObjectKind:
        kind = self._object[0][1]
        for start, k in self._object:
            if start <= t:
                kind = k
        return kind

    def hand_distance_at(self, t: float) -> float | None:
        d = self._distance.value_at(t)
        return None if d >= _ABSENT_CUTOFF else d

    def state_at(self, t: float) -> GroundTruthState:
        rows, cols = self.layout.grid_shape()
        forces = np.zeros((rows, cols))
        onsets = np.zeros((rows, cols))
        unloading = np.zeros((rows, cols), dtype=bool)
        for r in range(rows):
            for c in range(cols):
                profile = self._force[r][c]
                forces[r, c] = profile.value_at(t)
                seg = max(profile.segment_index(t), 0)
                unloading[r, c] = self._seg_dirs[r][c][seg] < 0
                onsets[r, c] = self._onsets[r][c][seg][0]
        return GroundTruthState(
            forces_n=forces, onset_times_s=onsets,
            hand_distance_mm=self.hand_distance_at(t),
            object_kind=self.object_kind_at(t),
            time_s=t, unloading=unloading)
