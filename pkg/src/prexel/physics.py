"""Forward models of the hybrid sensing element.

One prexel is a force-sensing resistor printed over a capacitive electrode,
so the same patch measures contact force (resistance falls with load) and
hand proximity (self-capacitance rises as a grounded body approaches).
This module holds the continuous ground-truth models only; quantization,
counters and framing live in :mod:`prexel.daq`.

Conventions: forces in N, resistance in ohm, conductance in S, distance in
mm, time in s.  All randomness comes from an explicitly passed
``numpy.random.Generator``; ``rng=None`` means noise-free.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

LN2 = math.log(2.0)

#: Upper end of the calibrated force range per element.
FULL_SCALE_FORCE_N = 15.0
#: Below this the piezoresistive response is not trustworthy.
MIN_RELIABLE_FORCE_N = 0.5


class SensorError(Exception):
    """Base class for modelling errors."""


class ForceRangeError(SensorError):
    """Force outside the modelled range."""


class Direction(enum.Enum):
    """Which branch of the hysteresis loop the element is on."""

    LOADING = "loading"
    UNLOADING = "unloading"


class ObjectKind(enum.Enum):
    """What, if anything, is approaching the electrode."""

    NONE = "none"
    HUMAN_HAND = "human_hand"
    #: Present but not capacitively coupled (dry cardboard, most plastics).
    NON_DETECTABLE = "non_detectable_object"


@dataclass(frozen=True)
class SensorLayout:
    """Geometry of one sensor build.

    ``footprint_mm`` is (width, length); ``pitch_mm`` is the element
    center-to-center spacing along the length (column) direction.
    """

    name: str
    rows: int
    cols: int
    prexel_area_mm2: float
    pitch_mm: float
    electrode_area_cm2: float
    footprint_mm: tuple[float, float]

    def __post_init__(self) -> None:
        if not (1 <= self.rows <= 8 and 1 <= self.cols <= 8):
            raise ValueError("mux address space is 3 bits per axis: 1..8 rows and cols")
        if self.pitch_mm <= 0 or self.prexel_area_mm2 <= 0:
            raise ValueError("pitch and element area must be positive")
        if min(self.footprint_mm) <= 0:
            raise ValueError("footprint must be positive")
        # The piezoresistive layer is continuous, so adjacent sensing zones
        # may share material (effective area can slightly exceed pitch^2),
        # but the array as a whole must fit the footprint.
        if self.n_prexels * self.prexel_area_mm2 > self.footprint_mm[0] * self.footprint_mm[1]:
            raise ValueError("total sensing area exceeds the footprint")

    @property
    def n_prexels(self) -> int:
        return self.rows * self.cols

    def grid_shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)


@dataclass
class PiezoParams:
    """Force-to-conductance law of one element plus its imperfections.

    ``conductance_poly`` holds ascending polynomial coefficients mapping
    force in N to conductance in S, valid on
    [``min_reliable_force_n``, ``force_range_n[1]``].  Below the reliable
    knee the model blends linearly toward the unloaded conductance and the
    noise is inflated by ``unreliable_noise_factor``.
    """

    conductance_poly: tuple[float, ...]
    base_resistance_ohm: float = 1.0e6
    noise_sigma_rel: float = 0.0446
    hysteresis_fraction: float = 0.15
    #: Force at which the loading/unloading gap reaches its full width.
    #: A cycle returns where it started, so the loop pinches shut at both
    #: reversal extremes: the band fades in between the knee and the taper
    #: force, and back out between the pinch force and full scale.
    hysteresis_taper_n: float = 2.0
    hysteresis_pinch_n: float = 10.0
    unreliable_noise_factor: float = 5.0
    min_reliable_force_n: float = MIN_RELIABLE_FORCE_N
    force_range_n: tuple[float, float] = (0.0, FULL_SCALE_FORCE_N)

    def __post_init__(self) -> None:
        if len(self.conductance_poly) < 2:
            raise ValueError("need at least a linear conductance law")
        if self.base_resistance_ohm <= 0:
            raise ValueError("base resistance must be positive")
        if not 0.0 <= self.hysteresis_fraction <= 0.5:
            raise ValueError("hysteresis fraction outside [0, 0.5]")
        if self.noise_sigma_rel < 0:
            raise ValueError("noise sigma must be >= 0")
        lo, hi = self.min_reliable_force_n, self.force_range_n[1]
        if not lo < hi:
            raise ValueError("force range must contain the reliable knee")
        if not lo <= self.hysteresis_taper_n <= self.hysteresis_pinch_n:
            raise ValueError("need knee <= hysteresis taper <= hysteresis pinch")
        grid = np.linspace(lo, hi, 256)
        g = self._poly(grid)
        if g[0] <= 0.0:
            raise ValueError("conductance law must be positive at the reliable knee")
        if np.any(np.diff(g) <= 0.0):
            raise ValueError("conductance law must be strictly increasing over the range")
        # both hysteresis branches must stay positive and increasing too
        half = 0.5 * self.hysteresis_fraction * float(g[-1] - g[0])
        for sign in (-1.0, 1.0):
            branch = g + sign * half * self._band_weight(grid)
            if branch[0] <= 0.0 or np.any(np.diff(branch) <= 0.0):
                raise ValueError(
                    "hysteresis band too wide for this conductance law "
                    "(a branch would go negative or non-monotone)")

    def _band_weight(self, force: np.ndarray) -> np.ndarray:
        """0 at the reliable knee, 1 on [taper, pinch], 0 again at full scale."""
        f = np.asarray(force)
        lo, hi = self.min_reliable_force_n, self.force_range_n[1]
        width_in = self.hysteresis_taper_n - lo
        if width_in <= 0:
            w = (f >= lo).astype(float)
        else:
            w = np.clip((f - lo) / width_in, 0.0, 1.0)
        width_out = hi - self.hysteresis_pinch_n
        if width_out > 0:
            w = w * np.clip((hi - f) / width_out, 0.0, 1.0)
        return w

    def _poly(self, force: np.ndarray | float) -> np.ndarray | float:
        return np.polynomial.polynomial.polyval(force, self.conductance_poly)

    def conductance_span(self) -> float:
        """Full-scale conductance span: G(range top) - G(reliable knee)."""
        return float(self._poly(self.force_range_n[1]) - self._poly(self.min_reliable_force_n))

    def sensitivity_at(self, force: float) -> float:
        """dG/dF in S/N at a given force."""
        d = np.polynomial.polynomial.polyder(np.asarray(self.conductance_poly))
        return float(np.polynomial.polynomial.polyval(force, d))


@dataclass
class DriftModel:
    """Viscoelastic creep of the loaded element, critically damped form.

    R(t) = (delta_r + (a + b*delta_r) * t) * exp(-b*t) + r0 - delta_r

    so resistance relaxes from ``r0_ohm`` at load onset toward
    ``r0_ohm - delta_r_ohm``.  ``a_ohm_per_s`` is the initial slope; the
    curve is monotone non-increasing only for a <= 0 (with a + b*delta_r
    >= 0), and a > 0 gives a small initial rise before the decay.
    """

    r0_ohm: float
    delta_r_ohm: float
    a_ohm_per_s: float
    b_per_s: float

    def __post_init__(self) -> None:
        if self.b_per_s <= 0:
            raise ValueError("decay rate b must be positive")
        if self.delta_r_ohm < 0:
            raise ValueError("drift amplitude delta_r must be >= 0")
        if self.r0_ohm <= self.delta_r_ohm:
            raise ValueError("r0 must exceed delta_r (resistance stays positive)")

    def resistance(self, t: np.ndarray | float) -> np.ndarray | float:
        t = np.asarray(t, dtype=float)
        slope = self.a_ohm_per_s + self.b_per_s * self.delta_r_ohm
        out = (self.delta_r_ohm + slope * t) * np.exp(-self.b_per_s * t) \
            + self.r0_ohm - self.delta_r_ohm
        return float(out) if out.ndim == 0 else out

    def normalized(self, t: np.ndarray | float) -> np.ndarray | float:
        """R(t)/R(0); dimensionless multiplier applied to any loaded element."""
        return self.resistance(t) / self.r0_ohm


def drift_resistance(t: np.ndarray | float, drift: DriftModel) -> np.ndarray | float:
    """Drifted resistance at time ``t`` since load onset."""
    return drift.resistance(t)


@dataclass
class CapacitiveParams:
    """Counter model of the proximity channel of one build.

    The firmware counts timer increments while the electrode RC-charges to
    the comparator trip point, summed over ``n_cycles`` charge cycles.  An
    approaching hand follows counter = cal_a / distance + base_counter.
    """

    base_counter: float
    cal_a: float
    base_sigma: float
    detection_range_mm: float
    n_cycles: int = 70
    increment_freq_hz: float = 270.0e3
    series_resistance_ohm: float = 1.0e6
    vcc: float = 5.0
    saturation_counts: int = 65535

    def __post_init__(self) -> None:
        if self.base_counter <= 0 or self.cal_a <= 0:
            raise ValueError("counter model coefficients must be positive")
        if self.n_cycles < 1 or self.increment_freq_hz <= 0:
            raise ValueError("bad counting parameters")
        if self.base_sigma < 0:
            raise ValueError("counter noise sigma must be >= 0")


@dataclass
class GroundTruthState:
    """Instantaneous truth the acquisition chain samples from.

    ``onset_times_s`` records when each element's current load level was
    applied (drives drift); ``unloading`` marks elements currently on the
    unloading branch of the hysteresis loop.
    """

    forces_n: np.ndarray
    onset_times_s: np.ndarray
    hand_distance_mm: float | None = None
    object_kind: ObjectKind = ObjectKind.NONE
    time_s: float = 0.0
    unloading: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.forces_n = np.asarray(self.forces_n, dtype=float)
        self.onset_times_s = np.asarray(self.onset_times_s, dtype=float)
        if self.forces_n.shape != self.onset_times_s.shape:
            raise ValueError("forces and onset times must share a shape")
        if np.any(self.forces_n < 0):
            raise ValueError("forces must be >= 0")
        if self.hand_distance_mm is not None and self.hand_distance_mm <= 0:
            raise ValueError("distance must be positive when present")

    def coupled_distance_mm(self) -> float | None:
        """Distance as seen by the electrode: only a human hand couples."""
        if self.object_kind is ObjectKind.HUMAN_HAND:
            return self.hand_distance_mm
        return None


# ---------------------------------------------------------------------------
# piezoresistive channel

def conductance_of(
    force: np.ndarray | float,
    t_since_load: np.ndarray | float,
    piezo: PiezoParams,
    drift: DriftModel | None = None,
    direction: Direction | np.ndarray = Direction.LOADING,
    rng: np.random.Generator | None = None,
) -> np.ndarray | float:
    """Conductance of elements under ``force`` applied ``t_since_load`` ago.

    ``direction`` selects the hysteresis branch; pass a boolean array
    (True = unloading) for per-element branches.  Exactly zero force returns
    exactly ``1/base_resistance_ohm`` regardless of noise, drift or branch:
    an unloaded element sits at its rest resistance.
    """
    force_in = np.asarray(force, dtype=float)
    t_in = np.asarray(t_since_load, dtype=float)
    scalar = force_in.ndim == 0 and t_in.ndim == 0
    force_a, t_a = np.atleast_1d(*np.broadcast_arrays(force_in, t_in))
    out_shape = np.broadcast_shapes(force_in.shape, t_in.shape)

    if np.any(force_a < 0.0):
        raise ForceRangeError("negative force")
    if np.any(force_a > piezo.force_range_n[1]):
        raise ForceRangeError(
            f"force beyond range {piezo.force_range_n[1]} N")

    if isinstance(direction, Direction):
        unloading = np.full(force_a.shape, direction is Direction.UNLOADING)
    else:
        unloading = np.broadcast_to(np.asarray(direction, dtype=bool), force_a.shape)

    knee = piezo.min_reliable_force_n
    g_knee = piezo._poly(knee)
    g_rest = 1.0 / piezo.base_resistance_ohm
    g = np.where(
        force_a >= knee,
        piezo._poly(force_a),
        g_rest + (g_knee - g_rest) * force_a / knee,
    )

    # Hysteresis: at equal force the unloading branch reads higher than the
    # loading branch.  The loop closes at the reliable knee and the gap
    # widens to hysteresis_fraction of the full-scale span by the taper
    # force, which keeps both branches positive and monotone.
    half_gap = 0.5 * piezo.hysteresis_fraction * piezo.conductance_span()
    weight = piezo._band_weight(force_a)
    g = g + np.where(unloading, half_gap, -half_gap) * weight

    if rng is not None and piezo.noise_sigma_rel > 0.0:
        sigma = piezo.noise_sigma_rel * np.where(
            force_a < knee, piezo.unreliable_noise_factor, 1.0)
        g = g * (1.0 + sigma * rng.standard_normal(force_a.shape))
        g = np.maximum(g, 1e-12)

    if drift is not None:
        # Creep lowers resistance over time, i.e. raises conductance.
        g = g / drift.normalized(np.maximum(t_a, 0.0))

    g = np.where(force_a == 0.0, g_rest, g)
    return float(g[0]) if scalar else g.reshape(out_shape)


def resistance_of(
    force: np.ndarray | float,
    t_since_load: np.ndarray | float,
    piezo: PiezoParams,
    drift: DriftModel | None = None,
    direction: Direction | np.ndarray = Direction.LOADING,
    rng: np.random.Generator | None = None,
) -> np.ndarray | float:
    """Element resistance; reciprocal of :func:`conductance_of`."""
    g = conductance_of(force, t_since_load, piezo, drift, direction, rng)
    return 1.0 / g


# ---------------------------------------------------------------------------
# capacitive channel

def counter_of(
    distance_mm: float | None,
    cap: CapacitiveParams,
    rng: np.random.Generator | None = None,
) -> float:
    """Ideal accumulated counter value for a hand at ``distance_mm``.

    ``None`` means nothing capacitively coupled is nearby: the counter sits
    at the baseline.  The returned value is continuous; integer
    quantization and the saturation ceiling belong to the acquisition
    emulator.
    """
    if distance_mm is None:
        counts = cap.base_counter
    else:
        if distance_mm <= 0:
            raise ValueError("distance must be positive")
        counts = cap.cal_a / distance_mm + cap.base_counter
    if rng is not None and cap.base_sigma > 0.0:
        counts += cap.base_sigma * rng.standard_normal()
    return float(min(max(counts, 0.0), float(cap.saturation_counts)))


def capacitance_estimate(counter: float, cap: CapacitiveParams) -> float:
    """Electrode capacitance implied by an accumulated counter value.

    Each charge cycle the counter runs for the RC half-charge time
    t = R*C*ln 2 at ``increment_freq_hz``, so over n cycles
    counter = n * f * R * C * ln 2.
    """
    if counter < 0:
        raise ValueError("counter must be >= 0")
    denom = cap.n_cycles * cap.increment_freq_hz * cap.series_resistance_ohm * LN2
    return counter / denom


def rc_charge_voltage(t: np.ndarray | float, v_inf: float, r_ohm: float, c_farad: float) -> np.ndarray | float:
    """Charging curve of the electrode: V(t) = V_inf (1 - exp(-t/RC))."""
    if r_ohm <= 0 or c_farad <= 0:
        raise ValueError("RC must be positive")
    t = np.asarray(t, dtype=float)
    out = v_inf * (1.0 - np.exp(-t / (r_ohm * c_farad)))
    return float(out) if out.ndim == 0 else out


def rc_half_time(r_ohm: float, c_farad: float) -> float:
    """Time to reach V_inf/2: RC * ln 2 (the comparator trips at mid-rail)."""
    return r_ohm * c_farad * LN2
