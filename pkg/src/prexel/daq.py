"""Acquisition chain emulator.

Mirrors the embedded side: a pair of 3-bit multiplexers scans the element
matrix row-major, each element is read through a resistor divider into a
10-bit ADC, and the proximity channel accumulates an integer counter over
repeated RC charge cycles.  Output is wire frames (see
:mod:`prexel.protocol`) on two independent tick rails, 100 Hz tactile and
10 Hz proximity by default.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from .config import DaqSettings, SensorConfig
from .physics import (
    CapacitiveParams,
    DriftModel,
    GroundTruthState,
    PiezoParams,
    SensorLayout,
    capacitance_estimate,
    conductance_of,
    counter_of,
    rc_half_time,
)
from .protocol import Frame, ProximityPayload, TactilePayload


@dataclass(frozen=True)
class MuxAddress:
    """Row/column select codes as driven onto the two 3-bit muxes."""

    row_sel: int
    col_sel: int

    def __post_init__(self) -> None:
        if not (0 <= self.row_sel < 8 and 0 <= self.col_sel < 8):
            raise ValueError("mux select codes are 3-bit")


def scan_order(layout: SensorLayout) -> list[MuxAddress]:
    """Row-major scan sequence over the populated part of the matrix."""
    return [MuxAddress(r, c) for r in range(layout.rows) for c in range(layout.cols)]


def adc_of_resistance(r_ohm: float | None, daq: DaqSettings) -> int:
    """Quantized ADC reading for an element of ``r_ohm``.

    The element sits on the high side and the reference resistor on the low
    side (default), so the converter sees
    vcc * ref / (ref + r); an open element (``None``) reads 0.
    """
    full = (1 << daq.adc_bits) - 1
    if r_ohm is None or not math.isfinite(r_ohm):
        v_frac = 0.0 if daq.divider == "ref_low" else 1.0
        return round(v_frac * full)
    if r_ohm < 0:
        raise ValueError("resistance must be >= 0")
    if daq.divider == "ref_low":
        v_frac = daq.ref_resistor_ohm / (daq.ref_resistor_ohm + r_ohm)
    else:
        v_frac = r_ohm / (daq.ref_resistor_ohm + r_ohm)
    return int(round(v_frac * full))


def resistance_of_adc(raw: int, daq: DaqSettings) -> float | None:
    """Invert the divider; ``None`` when the code means open (unloaded rail).

    Inversion error from quantization stays within a half-LSB of the
    divider curve's local slope.
    """
    full = (1 << daq.adc_bits) - 1
    if not 0 <= raw <= full:
        raise ValueError(f"raw code outside 0..{full}")
    if daq.divider == "ref_low":
        if raw == 0:
            return None
        if raw == full:
            return 0.0
        return daq.ref_resistor_ohm * (full / raw - 1.0)
    if raw == full:
        return None
    if raw == 0:
        return 0.0
    return daq.ref_resistor_ohm * raw / (full - raw)


@dataclass
class CounterReading:
    counts: int
    saturated: bool


def measure_counter(
    truth: GroundTruthState,
    cap: CapacitiveParams,
    rng: np.random.Generator | None = None,
) -> CounterReading:
    """Accumulate the proximity counter over ``cap.n_cycles`` charge cycles.

    Each cycle's count is the timer ticks up to the RC half-charge time of
    the electrode's current capacitance, with per-cycle noise; the total is
    clamped at the counter ceiling and flagged when it hits it.
    """
    ideal = counter_of(truth.coupled_distance_mm(), cap, rng=None)
    if ideal >= cap.saturation_counts:
        # the transient never completes inside the counting window; the
        # per-cycle rounding below could otherwise land a few counts short
        return CounterReading(cap.saturation_counts, True)
    c_eff = capacitance_estimate(ideal, cap)
    sigma_c = 0.0
    if rng is not None and cap.base_sigma > 0.0:
        per_cycle_sigma = cap.base_sigma / math.sqrt(cap.n_cycles)
        sigma_c = per_cycle_sigma / (
            cap.increment_freq_hz * cap.series_resistance_ohm * math.log(2.0))
    total = 0
    for _ in range(cap.n_cycles):
        c_i = c_eff if sigma_c == 0.0 else max(c_eff + sigma_c * rng.normal(), 0.0)
        ticks = round(cap.increment_freq_hz * rc_half_time(cap.series_resistance_ohm, c_i))
        total += max(ticks, 0)
        if total >= cap.saturation_counts:
            return CounterReading(cap.saturation_counts, True)
    return CounterReading(total, False)


class FrameQueue:
    """Bounded frame buffer with drop-oldest back-pressure."""

    def __init__(self, depth: int) -> None:
        if depth < 1:
            raise ValueError("queue depth must be >= 1")
        self._q: deque[Frame] = deque(maxlen=depth)
        self.dropped = 0

    def push(self, frame: Frame) -> None:
        if len(self._q) == self._q.maxlen:
            self.dropped += 1
        self._q.append(frame)

    def pop_all(self) -> list[Frame]:
        out = list(self._q)
        self._q.clear()
        return out

    def __len__(self) -> int:
        return len(self._q)


class DaqEmulator:
    """One sensor's acquisition firmware against a ground-truth source.

    Frames carry a shared wrapping sequence number in emission order.
    Tactile and proximity rails tick independently; when both land on the
    same instant the tactile frame is emitted first.
    """

    def __init__(
        self,
        config: SensorConfig,
        rng: np.random.Generator | None = None,
    ) -> None:
        self.config = config
        self.layout = config.layout
        self.piezo = config.piezo
        self.drift = config.drift if config.drift_enabled else None
        self.cap = config.capacitive
        self.daq = config.daq
        self.rng = rng if config.noise_enabled else None
        self.sensor_id = config.sensor_id
        self._seq = 0

    def _next_seq(self) -> int:
        seq = self._seq
        self._seq = (self._seq + 1) & 0xFFFF
        return seq

    def scan_array(self, truth: GroundTruthState) -> np.ndarray:
        """One full mux sweep; raw ADC codes in row-major grid shape.

        The sweep follows :func:`scan_order`, which for a row-major grid
        coincides with C array order, so the divider math runs vectorized.
        """
        t_since = truth.time_s - truth.onset_times_s
        unloading = truth.unloading
        if unloading is None:
            unloading = np.zeros(truth.forces_n.shape, dtype=bool)
        g = conductance_of(
            truth.forces_n, np.maximum(t_since, 0.0), self.piezo,
            self.drift, unloading, self.rng)
        r = 1.0 / np.atleast_2d(np.asarray(g))
        full = (1 << self.daq.adc_bits) - 1
        if self.daq.divider == "ref_low":
            v_frac = self.daq.ref_resistor_ohm / (self.daq.ref_resistor_ohm + r)
        else:
            v_frac = r / (self.daq.ref_resistor_ohm + r)
        return np.rint(v_frac * full).astype(np.int64).reshape(truth.forces_n.shape)

    def tactile_frame(self, truth: GroundTruthState) -> Frame:
        raw = self.scan_array(truth)
        payload = TactilePayload(
            rows=self.layout.rows, cols=self.layout.cols,
            samples=tuple(int(v) for v in raw.reshape(-1)))
        return Frame(sensor_id=self.sensor_id, seq=self._next_seq(), payload=payload)

    def proximity_frame(self, truth: GroundTruthState) -> Frame:
        reading = measure_counter(truth, self.cap, self.rng)
        payload = ProximityPayload(counter=reading.counts, saturated=reading.saturated)
        return Frame(sensor_id=self.sensor_id, seq=self._next_seq(), payload=payload)

    def tick_times(self, duration_s: float) -> list[tuple[float, str]]:
        """Merged (time, rail) schedule over ``duration_s`` of virtual time."""
        ticks: list[tuple[float, int, str]] = []
        n_tac = round(duration_s * self.daq.tactile_rate_hz)
        n_prox = round(duration_s * self.daq.proximity_rate_hz)
        ticks += [(i / self.daq.tactile_rate_hz, 0, "tactile") for i in range(n_tac)]
        ticks += [(i / self.daq.proximity_rate_hz, 1, "proximity") for i in range(n_prox)]
        ticks.sort(key=lambda item: (item[0], item[1]))
        return [(t, rail) for t, _, rail in ticks]

    def run(
        self,
        truth_fn: Callable[[float], GroundTruthState],
        duration_s: float,
        queue: FrameQueue | None = None,
    ) -> Iterator[tuple[float, Frame]]:
        """Emit frames over virtual time; ``truth_fn`` is polled per tick."""
        for t, rail in self.tick_times(duration_s):
            truth = truth_fn(t)
            frame = self.tactile_frame(truth) if rail == "tactile" \
                else self.proximity_frame(truth)
            if queue is not None:
                queue.push(frame)
            yield t, frame
