"""Host-side signal conditioning and response metrics.

Streaming low-pass filtering (Butterworth, second-order sections), tare,
drift compensation, and the scalar figures used to characterize a sensor:
hysteresis error, step-response times, repeatability.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.signal

from .physics import DriftModel


class DspError(Exception):
    pass


class TareError(DspError):
    """Baseline too unsettled to zero against."""


@dataclass(frozen=True)
class FilterSpec:
    """Low-pass design request; defaults match the force channel."""

    sample_rate_hz: float
    cutoff_hz: float = 1.0
    order: int = 6

    def __post_init__(self) -> None:
        if self.sample_rate_hz <= 0:
            raise ValueError("sample rate must be positive")
        if not 0 < self.cutoff_hz < self.sample_rate_hz / 2:
            raise ValueError("cutoff must sit below Nyquist")
        if self.order < 1:
            raise ValueError("order must be >= 1")


def design_lowpass(spec: FilterSpec) -> np.ndarray:
    """Butterworth low-pass as second-order sections (digital, bilinear)."""
    return scipy.signal.butter(
        spec.order, spec.cutoff_hz, btype="low", output="sos",
        fs=spec.sample_rate_hz)


def sos_is_stable(sos: np.ndarray) -> bool:
    """All poles strictly inside the unit circle."""
    for section in np.atleast_2d(sos):
        poles = np.roots(section[3:6])
        if np.any(np.abs(poles) >= 1.0):
            return False
    return True


def filter_stream(
    samples: np.ndarray,
    sos: np.ndarray,
    state: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Run a chunk through the filter, carrying state across calls.

    State defaults to the filter's step steady state scaled by the first
    sample, so a stream that starts on a plateau starts settled instead of
    ringing up from zero.
    """
    samples = np.asarray(samples, dtype=float)
    if state is None:
        state = steady_state(sos, float(samples[0]) if samples.size else 0.0)
    y, state = scipy.signal.sosfilt(sos, samples, zi=state)
    return y, state


def steady_state(sos: np.ndarray, level: float) -> np.ndarray:
    """Filter state equivalent to an infinitely long input at ``level``."""
    return scipy.signal.sosfilt_zi(sos) * level


class StreamingFilter:
    """Stateful wrapper for sample-at-a-time or chunked use."""

    def __init__(self, spec: FilterSpec) -> None:
        self.sos = design_lowpass(spec)
        self._state: np.ndarray | None = None

    def process(self, samples: np.ndarray | float) -> np.ndarray:
        y, self._state = filter_stream(np.atleast_1d(samples), self.sos, self._state)
        return y

    def reset(self, level: float | None = None) -> None:
        self._state = None if level is None else steady_state(self.sos, level)


class MovingAverage:
    """Streaming boxcar; the short smoother used on the proximity loop."""

    def __init__(self, window: int) -> None:
        if window < 1:
            raise ValueError("window must be >= 1")
        self.window = window
        self._hist: list[float] = []

    def process(self, sample: float) -> float:
        self._hist.append(float(sample))
        if len(self._hist) > self.window:
            self._hist.pop(0)
        return float(np.mean(self._hist))

    def reset(self) -> None:
        self._hist.clear()


# ---------------------------------------------------------------------------
# tare and drift

def tare_offsets(baseline: np.ndarray, max_rel_std: float = 0.05) -> np.ndarray:
    """Per-channel zero offsets from an unloaded baseline block.

    ``baseline`` is (n_samples, ...channels...).  Raises :class:`TareError`
    when any channel's spread exceeds ``max_rel_std`` of the overall mean
    level (someone is touching the sensor, or it has not settled).
    """
    baseline = np.asarray(baseline, dtype=float)
    if baseline.ndim < 2 or baseline.shape[0] < 2:
        raise TareError("need at least two baseline samples per channel")
    mean = baseline.mean(axis=0)
    std = baseline.std(axis=0)
    scale = max(float(np.abs(mean).max()), 1e-30)
    if float(std.max()) > max_rel_std * scale:
        raise TareError(
            f"baseline unsettled: max std {float(std.max()):.3g} "
            f"exceeds {max_rel_std:.3g} of level {scale:.3g}")
    return mean


def apply_tare(values: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Subtract offsets, clamping at zero (forces cannot be negative)."""
    return np.maximum(np.asarray(values, dtype=float) - offsets, 0.0)


def compensate_drift(
    resistances: np.ndarray,
    times_since_load: np.ndarray,
    drift: DriftModel,
) -> np.ndarray:
    """Undo viscoelastic creep: divide out the normalized drift curve."""
    r = np.asarray(resistances, dtype=float)
    t = np.asarray(times_since_load, dtype=float)
    return r / drift.normalized(np.maximum(t, 0.0))


# ---------------------------------------------------------------------------
# characterization figures

def hysteresis_error(
    load_forces: np.ndarray, load_output: np.ndarray,
    unload_forces: np.ndarray, unload_output: np.ndarray,
    grid_points: int = 512,
) -> float:
    """Largest loading/unloading output gap over the shared force support,
    normalized by the full-scale output span (mean of the two branch spans).

    Identical branches give exactly 0.  Raises when the branches share no
    force interval.
    """
    lf = np.asarray(load_forces, dtype=float)
    lo = np.asarray(load_output, dtype=float)
    uf = np.asarray(unload_forces, dtype=float)
    uo = np.asarray(unload_output, dtype=float)
    if lf.size < 2 or uf.size < 2:
        raise DspError("each branch needs at least two points")
    f_lo = max(lf.min(), uf.min())
    f_hi = min(lf.max(), uf.max())
    if f_hi <= f_lo:
        raise DspError("branches share no force interval")
    grid = np.linspace(f_lo, f_hi, grid_points)
    li = np.argsort(lf)
    ui = np.argsort(uf)
    l_on = np.interp(grid, lf[li], lo[li])
    u_on = np.interp(grid, uf[ui], uo[ui])
    gap = float(np.abs(u_on - l_on).max())
    span_l = float(l_on.max() - l_on.min())
    span_u = float(u_on.max() - u_on.min())
    span = 0.5 * (span_l + span_u)
    if span <= 0:
        raise DspError("flat branches carry no span to normalize by")
    return gap / span


@dataclass
class StepMetrics:
    delay_s: float
    rise_s: float
    steady_value: float


def _first_crossing(t: np.ndarray, y: np.ndarray, level: float) -> float:
    above = y >= level
    idx = np.argmax(above)
    if not above[idx]:
        raise DspError("series never crosses the requested level")
    if idx == 0:
        return float(t[0])
    t0, t1 = t[idx - 1], t[idx]
    y0, y1 = y[idx - 1], y[idx]
    if y1 == y0:
        return float(t1)
    return float(t0 + (level - y0) * (t1 - t0) / (y1 - y0))


def step_metrics(
    times: np.ndarray, values: np.ndarray,
    settle_tail: float = 0.1, settle_band: float = 0.02,
) -> StepMetrics:
    """Delay (0 to 50 % of steady) and rise (10 to 90 %) of a step response.

    The series must start at the step onset and reach steady state: every
    sample in the last ``settle_tail`` fraction must lie within
    ``settle_band`` of the step amplitude around the steady value.
    Crossings are linearly interpolated, so a dynamics-free step reports
    both figures below one sample period.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.shape != y.shape or t.size < 4:
        raise DspError("need matched time/value series of at least 4 samples")
    if np.any(np.diff(t) <= 0):
        raise DspError("times must be strictly increasing")
    tail = y[int(np.floor(t.size * (1.0 - settle_tail))):]
    steady = float(tail.mean())
    base = float(y[0])
    amplitude = steady - base
    if amplitude <= 0:
        raise DspError("no upward step present")
    if float(np.abs(tail - steady).max()) > settle_band * amplitude:
        raise DspError("series has not settled")
    delay = _first_crossing(t, y, base + 0.5 * amplitude) - t[0]
    t10 = _first_crossing(t, y, base + 0.1 * amplitude)
    t90 = _first_crossing(t, y, base + 0.9 * amplitude)
    return StepMetrics(delay_s=delay, rise_s=t90 - t10, steady_value=steady)


def repeatability_pct(values: np.ndarray) -> float:
    """(max - min) / mean of repeated readings, in percent."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        raise DspError("need at least two repeats")
    mean = float(v.mean())
    if mean <= 0:
        raise DspError("mean must be positive")
    return 100.0 * float(v.max() - v.min()) / mean
