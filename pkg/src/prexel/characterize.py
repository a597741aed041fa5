"""Characterization battery.

Replays the bench experiments that define a sensor build and reduces them
to one figures table: repeatability, static-loading drift, hysteresis,
step-response times, proximity baseline and detection, sensitivity and
resolution.  Everything runs against the forward models, seeded, in
virtual time; the table serializes to JSON next to a plain-text rendering.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .calibration import ForceConductanceModel, force_of_conductance
from .config import SensorConfig
from .daq import measure_counter
from .dsp import (
    FilterSpec,
    compensate_drift,
    design_lowpass,
    filter_stream,
    hysteresis_error,
    repeatability_pct,
    step_metrics,
)
from .physics import (
    Direction,
    GroundTruthState,
    ObjectKind,
    conductance_of,
    resistance_of,
)

REPORT_SCHEMA_VERSION = 1

#: Reference load for repeatability and drift runs.
REFERENCE_FORCE_N = 8.1

#: Reference step figures the response template is tuned to.
TEMPLATE_DELAY_S = 4.8e-3
TEMPLATE_RISE_S = 34.5e-3


def step_response_template(
    delay_s: float = TEMPLATE_DELAY_S,
    rise_s: float = TEMPLATE_RISE_S,
    sample_rate_hz: float = 10_000.0,
    duration_s: float = 0.5,
    mix: float = 0.55,
) -> tuple[np.ndarray, np.ndarray]:
    """Normalized step response with prescribed delay and rise times.

    A fast/slow double exponential
    y(t) = 1 - mix * exp(-t/tau1) - (1 - mix) * exp(-t/tau2)
    is tuned by fixed-point iteration until the measured 0-50 % delay and
    10-90 % rise match the targets to 0.1 %.
    """
    t = np.arange(0.0, duration_s, 1.0 / sample_rate_hz)
    tau1, tau2 = delay_s / 2.0, rise_s
    for _ in range(300):
        y = 1.0 - mix * np.exp(-t / tau1) - (1.0 - mix) * np.exp(-t / tau2)
        m = step_metrics(t, y)
        err_d = delay_s / m.delay_s
        err_r = rise_s / m.rise_s
        if abs(err_d - 1.0) < 1e-3 and abs(err_r - 1.0) < 1e-3:
            break
        damp = 0.8
        tau1 *= err_d ** damp
        tau2 *= err_r ** damp
        tau1 = min(tau1, tau2)  # keep the roles from swapping
    return t, y


def _repeatability_run(config: SensorConfig, rng: np.random.Generator,
                       n_repeats: int = 6) -> dict:
    model = ForceConductanceModel.from_piezo(config.piezo)
    forces = []
    for _ in range(n_repeats):
        g = conductance_of(REFERENCE_FORCE_N, 0.0, config.piezo,
                           None, Direction.LOADING, rng)
        forces.append(force_of_conductance(float(g), model).force_n)
    return {
        "n_repeats": n_repeats,
        "readings_n": [round(f, 4) for f in forces],
        "repeatability_pct": repeatability_pct(np.asarray(forces)),
    }


def _static_loading_run(config: SensorConfig) -> dict:
    t = np.arange(0.0, 3.0 * 3600.0 + 1.0, 1.0)
    r = resistance_of(REFERENCE_FORCE_N, t, config.piezo, config.drift,
                      Direction.LOADING, rng=None)
    drop_pct = 100.0 * (r[0] - r[-1]) / r[0]
    # slope against log10(minutes) over 1..180 min, as benches often quote it
    minutes = t / 60.0
    sel = minutes >= 1.0
    slope = np.polynomial.polynomial.polyfit(
        np.log10(minutes[sel]), 100.0 * (r[0] - r[sel]) / r[0], 1)[1]
    compensated = compensate_drift(r, t, config.drift)
    resid_pct = 100.0 * float(np.abs(compensated - compensated[0]).max()
                              / compensated[0])
    return {
        "hold_force_n": REFERENCE_FORCE_N,
        "hold_hours": 3.0,
        "drop_pct": float(drop_pct),
        "per_log10_min_pct": float(slope),
        "compensated_residual_pct": resid_pct,
    }


def _hysteresis_run(config: SensorConfig, rng: np.random.Generator,
                    cycles: int = 16, ramp_n_per_s: float = 0.7,
                    sample_rate_hz: float = 1000.0) -> dict:
    lo = config.piezo.min_reliable_force_n
    hi = config.piezo.force_range_n[1]
    ramp_t = (hi - lo) / ramp_n_per_s
    n = int(ramp_t * sample_rate_hz)
    up = np.linspace(lo, hi, n)
    down = np.linspace(hi, lo, n)
    knots = np.arange(lo, hi + 1e-9, 0.4)
    errors = []
    for _ in range(cycles):
        g_up = conductance_of(up, 0.0, config.piezo, None, Direction.LOADING, rng)
        g_dn = conductance_of(down, 0.0, config.piezo, None, Direction.UNLOADING, rng)
        up_k = [float(np.mean(g_up[np.abs(up - k) <= 0.2])) for k in knots]
        dn_k = [float(np.mean(g_dn[np.abs(down - k) <= 0.2])) for k in knots]
        errors.append(hysteresis_error(knots, np.asarray(up_k), knots, np.asarray(dn_k)))
    return {
        "cycles": cycles,
        "ramp_n_per_s": ramp_n_per_s,
        "mean_error": float(np.mean(errors)),
        "min_error": float(np.min(errors)),
        "max_error": float(np.max(errors)),
    }


def _step_run() -> dict:
    t, y = step_response_template()
    m = step_metrics(t, y)
    return {
        "delay_ms": m.delay_s * 1e3,
        "rise_ms": m.rise_s * 1e3,
        "sample_rate_hz": 10_000.0,
    }


def _proximity_run(config: SensorConfig, rng: np.random.Generator) -> dict:
    shape = config.layout.grid_shape()
    quiet = GroundTruthState(np.zeros(shape), np.zeros(shape))
    at_range = GroundTruthState(
        np.zeros(shape), np.zeros(shape),
        hand_distance_mm=config.capacitive.detection_range_mm,
        object_kind=ObjectKind.HUMAN_HAND)
    baseline = np.array([measure_counter(quiet, config.capacitive, rng).counts
                         for _ in range(600)], dtype=float)
    near = np.array([measure_counter(at_range, config.capacitive, rng).counts
                     for _ in range(200)], dtype=float)
    sos = design_lowpass(FilterSpec(sample_rate_hz=config.daq.proximity_rate_hz))
    base_f, _ = filter_stream(baseline, sos)
    near_f, _ = filter_stream(near, sos)
    settle_b = len(base_f) // 3
    settle_n = len(near_f) // 3
    mean_b = float(base_f[settle_b:].mean())
    sigma_f = float(base_f[settle_b:].std())
    threshold = mean_b + 3.0 * sigma_f
    return {
        "baseline_counts": mean_b,
        "baseline_sigma_raw": float(baseline.std(ddof=1)),
        "baseline_sigma_filtered": sigma_f,
        "threshold_counts": threshold,
        "detection_range_mm": config.capacitive.detection_range_mm,
        "detect_fraction_at_range": float(np.mean(near_f[settle_n:] > threshold)),
        "false_positive_fraction": float(np.mean(base_f[settle_b:] > threshold)),
    }


def _scale_rows(config: SensorConfig) -> dict:
    piezo = config.piezo
    mid = 0.5 * (piezo.min_reliable_force_n + piezo.force_range_n[1])
    grid = np.linspace(piezo.min_reliable_force_n, piezo.force_range_n[1], 64)
    g = np.asarray([conductance_of(f, 0.0, piezo) for f in grid])
    slope = np.gradient(g, grid)
    half_width = 1.96 * piezo.noise_sigma_rel * g / slope
    return {
        "force_min_n": piezo.min_reliable_force_n,
        "force_max_n": piezo.force_range_n[1],
        "sensitivity_s_per_n": piezo.sensitivity_at(mid),
        "resolution_band_n": [float(half_width.min()), float(half_width.max())],
        "precision_pct": 100.0 * 1.96 * piezo.noise_sigma_rel,
    }


def run_battery(config: SensorConfig, seed: int = 0) -> dict:
    """Full characterization; deterministic for a given config and seed."""
    rng = np.random.default_rng(seed)
    report = {
        "v": REPORT_SCHEMA_VERSION,
        "preset": config.preset,
        "seed": seed,
        "scale": _scale_rows(config),
        "repeatability": _repeatability_run(config, rng),
        "static_loading": _static_loading_run(config),
        "hysteresis": _hysteresis_run(config, rng),
        "step_response": _step_run(),
        "proximity": _proximity_run(config, rng),
    }
    return report


def format_table(report: dict) -> str:
    """Plain-text characteristics table."""
    scale = report["scale"]
    rows = [
        ("force range", f"{scale['force_min_n']:.1f} .. {scale['force_max_n']:.1f} N"),
        ("sensitivity (mid-range)", f"{scale['sensitivity_s_per_n']:.3e} S/N"),
        ("resolution (95% band)",
         f"{scale['resolution_band_n'][0]:.2f} .. {scale['resolution_band_n'][1]:.2f} N"),
        ("precision (95% band)", f"{scale['precision_pct']:.1f} %"),
        ("repeatability (range/mean of "
         f"{report['repeatability']['n_repeats']})",
         f"{report['repeatability']['repeatability_pct']:.1f} %"),
        ("static loading drop (3 h)",
         f"{report['static_loading']['drop_pct']:.1f} %"),
        ("drift per log10(min)",
         f"{report['static_loading']['per_log10_min_pct']:.1f} %"),
        ("drift compensated residual",
         f"{report['static_loading']['compensated_residual_pct']:.2g} %"),
        ("hysteresis error (mean of "
         f"{report['hysteresis']['cycles']} cycles)",
         f"{report['hysteresis']['mean_error']:.3f}"),
        ("step delay time", f"{report['step_response']['delay_ms']:.1f} ms"),
        ("step rise time", f"{report['step_response']['rise_ms']:.1f} ms"),
        ("proximity baseline",
         f"{report['proximity']['baseline_counts']:.0f} counts "
         f"(sigma {report['proximity']['baseline_sigma_raw']:.1f})"),
        ("proximity detection",
         f"{report['proximity']['detect_fraction_at_range'] * 100:.0f} % at "
         f"{report['proximity']['detection_range_mm']:.0f} mm"),
    ]
    width = max(len(name) for name, _ in rows)
    lines = [f"characteristics [{report['preset']}]", "-" * (width + 24)]
    lines += [f"{name.ljust(width)}  {value}" for name, value in rows]
    return "\n".join(lines) + "\n"


def save_report(report: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report, indent=2) + "\n")
