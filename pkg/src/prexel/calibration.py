"""Calibration fits and their inverses.

Three models come out of a calibration session:

* force <-> conductance polynomial with a pointwise 95 % confidence band,
* the viscoelastic drift parameters of a loaded element,
* the proximity counter law counter = a / distance + b plus a presence
  threshold at baseline + 3 sigma.

All models serialize to versioned JSON so a characterization run on one
machine can drive a live session on another.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fitting import gauss_newton, multi_start
from .physics import (
    FULL_SCALE_FORCE_N,
    MIN_RELIABLE_FORCE_N,
    Direction,
    DriftModel,
    PiezoParams,
    conductance_of,
)

MODEL_SCHEMA_VERSION = 1


class CalibrationError(Exception):
    pass


class ReadingFlag(enum.Enum):
    OK = "ok"
    #: Below the reliable knee; magnitude not trustworthy.
    UNRELIABLE = "unreliable"
    #: At or beyond the top of the calibrated range.
    SATURATED = "saturated"


@dataclass
class ForceReading:
    force_n: float
    half_width_n: float
    flag: ReadingFlag


@dataclass
class ForceConductanceModel:
    """Calibrated force-to-conductance polynomial (ascending coefficients).

    ``knots_n`` / ``knot_sigma`` hold the averaged calibration points and
    their across-run scatter; ``ci95_halfwidth`` is the 1.96 sigma band on
    conductance at each knot.
    """

    coefficients: tuple[float, ...]
    force_range_n: tuple[float, float] = (MIN_RELIABLE_FORCE_N, FULL_SCALE_FORCE_N)
    knots_n: tuple[float, ...] = ()
    knot_sigma: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        lo, hi = self.force_range_n
        grid = np.linspace(lo, hi, 512)
        g = self.conductance_at(grid)
        if np.any(np.diff(g) <= 0):
            raise CalibrationError("fitted polynomial is not increasing over the range")
        if g[0] <= 0:
            raise CalibrationError("fitted polynomial is not positive over the range")

    def conductance_at(self, force: np.ndarray | float) -> np.ndarray | float:
        return np.polynomial.polynomial.polyval(force, self.coefficients)

    def sensitivity_at(self, force: np.ndarray | float) -> np.ndarray | float:
        der = np.polynomial.polynomial.polyder(np.asarray(self.coefficients))
        return np.polynomial.polynomial.polyval(force, der)

    @property
    def ci95_halfwidth(self) -> tuple[float, ...]:
        return tuple(1.96 * s for s in self.knot_sigma)

    def sigma_at(self, force: float) -> float:
        """Interpolated knot sigma; zero when the fit carried no scatter."""
        if not self.knots_n:
            return 0.0
        return float(np.interp(force, self.knots_n, self.knot_sigma))

    @classmethod
    def from_piezo(cls, piezo: PiezoParams) -> "ForceConductanceModel":
        """Nominal model fitted to a noiseless loading sweep.

        Live force readings come off the loading branch of the hysteresis
        loop, so the nominal curve tracks that branch rather than the
        branch midline; inverting midline coefficients would under-read
        every press by up to the half band.
        """
        forces = np.linspace(piezo.min_reliable_force_n, piezo.force_range_n[1], 30)
        g = conductance_of(forces, 0.0, piezo, direction=Direction.LOADING)
        return fit_force_conductance(forces, np.stack([g, g]))


def fit_force_conductance(
    forces_n: np.ndarray,
    conductance_runs: np.ndarray,
    degree: int = 3,
) -> ForceConductanceModel:
    """Least-squares polynomial through run-averaged calibration points.

    ``conductance_runs`` is (n_runs, n_knots); at least two runs so the
    per-knot scatter is estimable.  Knots below the reliable knee are
    dropped before fitting.
    """
    forces = np.asarray(forces_n, dtype=float)
    runs = np.atleast_2d(np.asarray(conductance_runs, dtype=float))
    if runs.shape[0] < 2:
        raise CalibrationError("need at least two calibration runs")
    if runs.shape[1] != forces.size:
        raise CalibrationError("runs and force knots disagree in length")
    keep = (forces >= MIN_RELIABLE_FORCE_N) & (forces <= FULL_SCALE_FORCE_N)
    forces = forces[keep]
    runs = runs[:, keep]
    if np.unique(forces).size < degree + 1:
        raise CalibrationError(
            f"need at least {degree + 1} distinct force knots for degree {degree}")
    mean_g = runs.mean(axis=0)
    sigma_g = runs.std(axis=0, ddof=1)

    # Vandermonde in ascending powers, scaled to keep the solve conditioned.
    scale = forces.max()
    v = np.vander(forces / scale, degree + 1, increasing=True)
    cond = np.linalg.cond(v)
    if cond > 1e10:
        raise CalibrationError(f"ill-conditioned fit (cond {cond:.2g}); spread the knots")
    coeff_scaled, *_ = np.linalg.lstsq(v, mean_g, rcond=None)
    coeffs = tuple(float(c / scale ** k) for k, c in enumerate(coeff_scaled))

    order = np.argsort(forces)
    return ForceConductanceModel(
        coefficients=coeffs,
        force_range_n=(float(forces.min()), float(forces.max())),
        knots_n=tuple(float(f) for f in forces[order]),
        knot_sigma=tuple(float(s) for s in sigma_g[order]),
    )


def force_of_conductance(
    conductance_s: float, model: ForceConductanceModel,
) -> ForceReading:
    """Invert the calibration polynomial by bisection.

    The polynomial is strictly increasing over the range (enforced at
    construction), so bisection to 1e-12 S brackets a unique force.
    Readings below the range come back flagged unreliable with the force
    linearly scaled under the knee; readings above come back saturated at
    the range top.
    """
    lo, hi = model.force_range_n
    g_lo = float(model.conductance_at(lo))
    g_hi = float(model.conductance_at(hi))
    if conductance_s >= g_hi:
        return ForceReading(hi, _half_width(model, hi), ReadingFlag.SATURATED)
    if conductance_s <= g_lo:
        frac = max(conductance_s, 0.0) / g_lo
        return ForceReading(lo * frac, _half_width(model, lo), ReadingFlag.UNRELIABLE)
    a, b = lo, hi
    for _ in range(200):
        mid = 0.5 * (a + b)
        if float(model.conductance_at(mid)) < conductance_s:
            a = mid
        else:
            b = mid
        if abs(float(model.conductance_at(b)) - float(model.conductance_at(a))) < 1e-12:
            break
    force = 0.5 * (a + b)
    return ForceReading(force, _half_width(model, force), ReadingFlag.OK)


def _half_width(model: ForceConductanceModel, force: float) -> float:
    slope = float(model.sensitivity_at(force))
    if slope <= 0:
        return math.inf
    return 1.96 * model.sigma_at(force) / slope


# ---------------------------------------------------------------------------
# drift fit

@dataclass
class DriftFitInfo:
    rms_residual_ohm: float
    iterations: int
    converged: bool
    drift_free: bool


def _drift_design(t: np.ndarray, b: float) -> np.ndarray:
    """Columns for the linear-in-(r0, delta_r, a) view of the drift law."""
    e = np.exp(-b * t)
    return np.column_stack([
        np.ones_like(t),          # r0
        e * (1.0 + b * t) - 1.0,  # delta_r
        t * e,                    # a
    ])


def fit_drift(
    times_s: np.ndarray,
    resistances_ohm: np.ndarray,
    rel_step_tol: float = 1e-9,
) -> tuple[DriftModel, DriftFitInfo]:
    """Recover (r0, delta_r, a, b) of the creep law from a loaded hold.

    Strategy: the law is linear in (r0, delta_r, a) once b is fixed, so a
    log grid of b candidates is scored by closed-form least squares; the
    best seeds a damped Gauss-Newton pass over (a, b) and a joint polish
    over all four parameters.  A series whose head and tail agree to
    within its own noise is declared drift-free.
    """
    t = np.asarray(times_s, dtype=float)
    r = np.asarray(resistances_ohm, dtype=float)
    if t.shape != r.shape or t.size < 8:
        raise CalibrationError("need matched series of at least 8 samples")
    if np.any(np.diff(t) <= 0):
        raise CalibrationError("times must be strictly increasing")
    span = float(t[-1] - t[0])
    t = t - t[0]

    decile = max(t.size // 10, 2)
    head = float(r[:decile].mean())
    tail = float(r[-decile:].mean())
    noise = float(max(r[:decile].std(), r[-decile:].std()))
    drop = head - tail
    if drop <= max(3.0 * noise / math.sqrt(decile), 1e-9 * abs(head)):
        model = DriftModel(r0_ohm=head, delta_r_ohm=0.0,
                           a_ohm_per_s=0.0, b_per_s=10.0 / max(span, 1e-9))
        resid = float(np.sqrt(np.mean((r - head) ** 2)))
        return model, DriftFitInfo(resid, 0, True, drift_free=True)

    # grid stage: b from "settles within the record" down to "barely moves"
    best_b, best_cost, best_lin = None, math.inf, None
    for b in np.geomspace(0.5 / span, 200.0 / span, 25):
        design = _drift_design(t, b)
        lin, *_ = np.linalg.lstsq(design, r, rcond=None)
        resid = design @ lin - r
        cost = float(resid @ resid)
        if cost < best_cost:
            best_b, best_cost, best_lin = float(b), cost, lin

    r0_i, dr_i, a_i = (float(v) for v in best_lin)
    dr_i = max(dr_i, 1e-9)

    def residual_ab(x: np.ndarray) -> np.ndarray:
        a, b = x
        e = np.exp(-b * t)
        return (dr_i + (a + b * dr_i) * t) * e + r0_i - dr_i - r

    def jacobian_ab(x: np.ndarray) -> np.ndarray:
        a, b = x
        e = np.exp(-b * t)
        d_a = t * e
        d_b = dr_i * t * e - (dr_i + (a + b * dr_i) * t) * t * e
        return np.column_stack([d_a, d_b])

    stage = multi_start(residual_ab, jacobian_ab,
                        [np.array([a_i, best_b]), np.array([0.0, best_b])],
                        rel_step_tol=rel_step_tol)
    a_i, b_i = (float(v) for v in stage.params)

    def residual_full(x: np.ndarray) -> np.ndarray:
        r0, dr, a, b = x
        e = np.exp(-b * t)
        return (dr + (a + b * dr) * t) * e + r0 - dr - r

    def jacobian_full(x: np.ndarray) -> np.ndarray:
        r0, dr, a, b = x
        e = np.exp(-b * t)
        d_r0 = np.ones_like(t)
        d_dr = e * (1.0 + b * t) - 1.0
        d_a = t * e
        d_b = dr * t * e - (dr + (a + b * dr) * t) * t * e
        return np.column_stack([d_r0, d_dr, d_a, d_b])

    polish = gauss_newton(residual_full, jacobian_full,
                          np.array([r0_i, dr_i, a_i, b_i]),
                          rel_step_tol=rel_step_tol)
    r0, dr, a, b = (float(v) for v in polish.params)
    if b <= 0 or dr < 0 or r0 <= dr:
        raise CalibrationError("drift fit landed on non-physical parameters")
    if span < 10.0 / b:
        raise CalibrationError(
            f"series too short: spans {span:.3g} s but needs >= {10.0 / b:.3g} s "
            "to pin the settle rate")
    model = DriftModel(r0_ohm=r0, delta_r_ohm=dr, a_ohm_per_s=a, b_per_s=b)
    info = DriftFitInfo(
        rms_residual_ohm=math.sqrt(2.0 * polish.cost),
        iterations=stage.iterations + polish.iterations,
        converged=stage.converged and polish.converged,
        drift_free=False)
    return model, info


# ---------------------------------------------------------------------------
# proximity fit

@dataclass
class ProximityModel:
    """counter = cal_a / distance + base_counter, plus presence threshold."""

    cal_a: float
    base_counter: float
    threshold: float
    range_mm: float
    baseline_sigma: float

    def __post_init__(self) -> None:
        if self.cal_a <= 0:
            raise CalibrationError("cal_a must be positive (counter falls with distance)")
        if self.threshold < self.base_counter:
            raise CalibrationError("threshold must sit above the baseline")
        if self.range_mm <= 0:
            raise CalibrationError("range must be positive")

    def counter_at(self, distance_mm: float) -> float:
        return self.cal_a / distance_mm + self.base_counter


@dataclass
class ProximityEstimate:
    present: bool
    #: None while present means "coupled but beyond the resolvable range".
    distance_mm: float | None

    @property
    def resolved(self) -> bool:
        return self.present and self.distance_mm is not None


NO_PRESENCE = ProximityEstimate(present=False, distance_mm=None)


def fit_proximity(
    distances_mm: np.ndarray,
    counters: np.ndarray,
    baseline_counters: np.ndarray,
    range_mm: float | None = None,
) -> ProximityModel:
    """Fit the counter law from a distance sweep plus a no-hand baseline.

    ``base_counter`` is the baseline mean; ``cal_a`` comes from least
    squares of (counter - base) against 1/distance; the presence threshold
    is baseline + 3 sigma.
    """
    x = np.asarray(distances_mm, dtype=float)
    y = np.asarray(counters, dtype=float)
    base = np.asarray(baseline_counters, dtype=float)
    if x.shape != y.shape or np.unique(x).size < 2:
        raise CalibrationError("need counters at two or more distinct distances")
    if np.any(x <= 0):
        raise CalibrationError("distances must be positive")
    if base.size < 1:
        raise CalibrationError("need baseline samples")
    b = float(base.mean())
    sigma = float(base.std(ddof=1)) if base.size > 1 else 0.0
    u = 1.0 / x
    a = float(((y - b) @ u) / (u @ u))
    if a <= 0:
        raise CalibrationError("sweep shows no capacitive response (cal_a <= 0)")
    return ProximityModel(
        cal_a=a,
        base_counter=b,
        threshold=b + max(3.0 * sigma, 1e-12),
        range_mm=float(range_mm if range_mm is not None else x.max()),
        baseline_sigma=sigma)


def distance_of_counter(counter: float, model: ProximityModel) -> ProximityEstimate:
    """Invert the counter law with the presence gate applied first.

    At or below the threshold there is no presence.  Above it, a counter
    so small it implies a distance beyond the calibrated range reports
    presence without a resolved distance.
    """
    if counter <= model.threshold:
        return NO_PRESENCE
    distance = model.cal_a / (counter - model.base_counter)
    if distance > model.range_mm:
        return ProximityEstimate(present=True, distance_mm=None)
    return ProximityEstimate(present=True, distance_mm=max(distance, 1.0))


# ---------------------------------------------------------------------------
# model files

def _require(condition: bool, message: str) -> None:
    if not condition:
        raise CalibrationError(message)


def save_models(
    path: str | Path,
    force_model: ForceConductanceModel | None = None,
    drift_model: DriftModel | None = None,
    proximity_model: ProximityModel | None = None,
) -> None:
    doc: dict = {"v": MODEL_SCHEMA_VERSION}
    if force_model is not None:
        doc["force"] = {
            "coefficients": list(force_model.coefficients),
            "force_range_n": list(force_model.force_range_n),
            "knots_n": list(force_model.knots_n),
            "knot_sigma": list(force_model.knot_sigma),
        }
    if drift_model is not None:
        doc["drift"] = {
            "r0_ohm": drift_model.r0_ohm,
            "delta_r_ohm": drift_model.delta_r_ohm,
            "a_ohm_per_s": drift_model.a_ohm_per_s,
            "b_per_s": drift_model.b_per_s,
        }
    if proximity_model is not None:
        doc["proximity"] = {
            "cal_a": proximity_model.cal_a,
            "base_counter": proximity_model.base_counter,
            "threshold": proximity_model.threshold,
            "range_mm": proximity_model.range_mm,
            "baseline_sigma": proximity_model.baseline_sigma,
        }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_models(path: str | Path) -> dict:
    """Read a model file; returns a dict with any of force/drift/proximity."""
    path = Path(path)
    _require(path.exists(), f"model file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CalibrationError(f"model file is not valid JSON: {exc}") from exc
    _require(isinstance(doc, dict), "model file must hold an object")
    _require(doc.get("v") == MODEL_SCHEMA_VERSION,
             f"unsupported model schema version {doc.get('v')!r}")
    out: dict = {}
    if "force" in doc:
        f = doc["force"]
        out["force"] = ForceConductanceModel(
            coefficients=tuple(f["coefficients"]),
            force_range_n=tuple(f["force_range_n"]),
            knots_n=tuple(f.get("knots_n", ())),
            knot_sigma=tuple(f.get("knot_sigma", ())))
    if "drift" in doc:
        d = doc["drift"]
        out["drift"] = DriftModel(
            r0_ohm=d["r0_ohm"], delta_r_ohm=d["delta_r_ohm"],
            a_ohm_per_s=d["a_ohm_per_s"], b_per_s=d["b_per_s"])
    if "proximity" in doc:
        p = doc["proximity"]
        out["proximity"] = ProximityModel(
            cal_a=p["cal_a"], base_counter=p["base_counter"],
            threshold=p["threshold"], range_mm=p["range_mm"],
            baseline_sigma=p.get("baseline_sigma", 0.0))
    return out
