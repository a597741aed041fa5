"""Presets and configuration files.

Two reference builds are shipped: a 2x8 strip meant to wrap around a robot
link ("16px") and an 8x8 square matrix with a large proximity electrode
("64px").  Every number that characterizes a build lives here, not in the
model code, so alternative hardware is a config file away.

Config files are plain INI (stdlib configparser); every field of every
section is optional and falls back to the preset named by
``[sensor] preset``.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

from .physics import CapacitiveParams, DriftModel, PiezoParams, SensorLayout

PRESET_NAMES = ("16px", "64px")

# Default force->conductance cubic, S per N terms in ascending order.  The
# linear term is chosen so dG/dF at mid-range (7.75 N) is exactly the rated
# sensitivity of 1.38e-4 S/N; the curve is strictly increasing over the
# whole 0.5..15 N range.
DEFAULT_CONDUCTANCE_POLY = (2.0e-5, 1.2920375e-4, 8.0e-7, -2.0e-8)

#: Relative conductance noise.  Six repeated single readings then have an
#: expected (max-min)/mean spread of 2.534 * sigma = 11.3 %.
DEFAULT_NOISE_SIGMA_REL = 0.0446

DEFAULT_HYSTERESIS_FRACTION = 0.15

#: Static-loading drift: settle rate and a 3 h drop anchored at 6.1 %.
DRIFT_B_PER_S = 1.0 / 1800.0
DRIFT_ANCHOR_T_S = 3.0 * 3600.0
DRIFT_ANCHOR_DROP = 0.061


def default_piezo() -> PiezoParams:
    return PiezoParams(
        conductance_poly=DEFAULT_CONDUCTANCE_POLY,
        noise_sigma_rel=DEFAULT_NOISE_SIGMA_REL,
        hysteresis_fraction=DEFAULT_HYSTERESIS_FRACTION,
    )


def default_drift(r0_ohm: float = 1000.0) -> DriftModel:
    bt = DRIFT_B_PER_S * DRIFT_ANCHOR_T_S
    delta_r = DRIFT_ANCHOR_DROP * r0_ohm / (1.0 - (1.0 + bt) * math.exp(-bt))
    return DriftModel(r0_ohm=r0_ohm, delta_r_ohm=delta_r,
                      a_ohm_per_s=0.0, b_per_s=DRIFT_B_PER_S)


_LAYOUTS = {
    "16px": SensorLayout(
        name="16px", rows=2, cols=8, prexel_area_mm2=48.0, pitch_mm=25.0,
        electrode_area_cm2=22.5, footprint_mm=(15.0, 200.0)),
    "64px": SensorLayout(
        name="64px", rows=8, cols=8, prexel_area_mm2=81.0, pitch_mm=8.8,
        electrode_area_cm2=8.0, footprint_mm=(90.0, 90.0)),
}

# Proximity counter baselines and noise per build; cal_a = 2 * baseline puts
# the mid-range counter rise at the scale seen on the real counters.
_CAPACITIVE = {
    "16px": dict(base_counter=1486.0, base_sigma=29.0, detection_range_mm=50.0),
    "64px": dict(base_counter=1610.0, base_sigma=9.6, detection_range_mm=100.0),
}


def layout_preset(name: str) -> SensorLayout:
    try:
        return _LAYOUTS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {PRESET_NAMES}") from None


def default_capacitive(preset: str) -> CapacitiveParams:
    base = _CAPACITIVE[layout_preset(preset).name]
    return CapacitiveParams(
        base_counter=base["base_counter"],
        cal_a=2.0 * base["base_counter"],
        base_sigma=base["base_sigma"],
        detection_range_mm=base["detection_range_mm"],
    )


@dataclass
class DaqSettings:
    """Acquisition-side knobs shared by the emulator and the host."""

    vcc: float = 5.0
    adc_bits: int = 10
    ref_resistor_ohm: float = 1000.0
    divider: str = "ref_low"  # reference resistor on the low side
    tactile_rate_hz: float = 100.0
    proximity_rate_hz: float = 10.0
    queue_depth: int = 64

    def __post_init__(self) -> None:
        if not 8 <= self.adc_bits <= 16:
            raise ValueError("adc_bits outside 8..16")
        if self.tactile_rate_hz <= 0 or self.proximity_rate_hz <= 0:
            raise ValueError("frame rates must be positive")
        if self.divider not in ("ref_low", "ref_high"):
            raise ValueError("divider must be ref_low or ref_high")
        if self.queue_depth < 1:
            raise ValueError("queue depth must be >= 1")


@dataclass
class SensorConfig:
    """Everything needed to instantiate one simulated sensor."""

    preset: str = "16px"
    sensor_id: int = 1
    layout: SensorLayout = None  # type: ignore[assignment]
    piezo: PiezoParams = None  # type: ignore[assignment]
    drift: DriftModel = None  # type: ignore[assignment]
    capacitive: CapacitiveParams = None  # type: ignore[assignment]
    daq: DaqSettings = field(default_factory=DaqSettings)
    drift_enabled: bool = True
    noise_enabled: bool = True

    def __post_init__(self) -> None:
        if self.layout is None:
            self.layout = layout_preset(self.preset)
        if self.piezo is None:
            self.piezo = default_piezo()
        if self.drift is None:
            self.drift = default_drift()
        if self.capacitive is None:
            self.capacitive = default_capacitive(self.preset)
        if not 0 <= self.sensor_id <= 255:
            raise ValueError("sensor_id must fit one byte")


class ConfigError(Exception):
    """Unreadable or inconsistent configuration file."""


def _apply_section(cfg: configparser.ConfigParser, section: str, obj) -> None:
    if not cfg.has_section(section):
        return
    valid = {f.name: f for f in fields(obj)}
    for key, raw in cfg.items(section):
        if key not in valid:
            raise ConfigError(f"[{section}] has no field {key!r}")
        current = getattr(obj, key)
        try:
            if isinstance(current, bool):
                value = raw.strip().lower() in ("1", "true", "yes", "on")
            elif isinstance(current, int):
                value = int(raw)
            elif isinstance(current, float):
                value = float(raw)
            elif isinstance(current, tuple):
                value = tuple(float(v) for v in raw.replace(",", " ").split())
            else:
                value = raw
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key}: {exc}") from exc
        setattr(obj, key, value)


def load_config(path: str | Path) -> SensorConfig:
    """Read a sensor config file; unspecified fields come from the preset."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    cfg = configparser.ConfigParser()
    try:
        cfg.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc

    preset = cfg.get("sensor", "preset", fallback="16px")
    if preset not in PRESET_NAMES:
        raise ConfigError(f"unknown preset {preset!r}")
    out = SensorConfig(preset=preset)
    if cfg.has_option("sensor", "sensor_id"):
        out.sensor_id = cfg.getint("sensor", "sensor_id")
    if cfg.has_option("sensor", "drift_enabled"):
        out.drift_enabled = cfg.getboolean("sensor", "drift_enabled")
    if cfg.has_option("sensor", "noise_enabled"):
        out.noise_enabled = cfg.getboolean("sensor", "noise_enabled")

    _apply_section(cfg, "piezo", out.piezo)
    _apply_section(cfg, "drift", out.drift)
    _apply_section(cfg, "capacitive", out.capacitive)
    _apply_section(cfg, "daq", out.daq)
    # re-run validation with the overridden numbers
    for section_obj in (out.piezo, out.drift, out.capacitive, out.daq):
        try:
            section_obj.__post_init__()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    return out


def save_config(config: SensorConfig, path: str | Path) -> None:
    """Write every field; the file round-trips through :func:`load_config`."""
    cfg = configparser.ConfigParser()
    cfg["sensor"] = {
        "preset": config.preset,
        "sensor_id": str(config.sensor_id),
        "drift_enabled": str(config.drift_enabled).lower(),
        "noise_enabled": str(config.noise_enabled).lower(),
    }

    def section_of(obj) -> dict[str, str]:
        out: dict[str, str] = {}
        for f in fields(obj):
            value = getattr(obj, f.name)
            if isinstance(value, tuple):
                out[f.name] = " ".join(repr(v) for v in value)
            else:
                out[f.name] = repr(value) if not isinstance(value, str) else value
        return out

    cfg["piezo"] = section_of(config.piezo)
    cfg["drift"] = section_of(config.drift)
    cfg["capacitive"] = section_of(config.capacitive)
    cfg["daq"] = section_of(config.daq)
    with open(path, "w") as fh:
        cfg.write(fh)
