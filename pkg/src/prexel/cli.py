"""Command-line entry points.

Verbs:

* ``simulate``      run a scenario end to end, optionally saving the wire
                    capture and a session report
* ``calibrate``     run the simulated calibration experiments and write a
                    model file
* ``characterize``  run the figures battery and print the table
* ``replay``        re-run the host pipeline over a saved capture
* ``serve``         live WebSocket service for the UI panel

Exit codes: 0 success, 1 usage error, 2 data/processing error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import calibration, characterize
from .calibration import (
    CalibrationError,
    fit_drift,
    fit_force_conductance,
    fit_proximity,
    save_models,
)
from .config import ConfigError, SensorConfig, load_config
from .daq import measure_counter
from .physics import Direction, GroundTruthState, ObjectKind, conductance_of, resistance_of
from .protocol import ProtocolError
from .scenario import Scenario, ScenarioError
from .session import (
    SessionEngine,
    SessionError,
    SessionSettings,
    load_capture,
    save_capture,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage problems; this tool reserves 2 for data."""

    def error(self, message: str) -> "argparse.NoReturn":  # type: ignore[name-defined]
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="INI sensor config file")
    p.add_argument("--preset", choices=("16px", "64px"),
                   help="sensor build preset (default 16px, or the config's)")
    p.add_argument("--seed", type=int, help="RNG seed (default 0, or the scenario's)")
    p.add_argument("--rate-tactile", type=float, help="tactile frame rate, Hz")
    p.add_argument("--rate-prox", type=float, help="proximity frame rate, Hz")


def _load_sensor_config(args: argparse.Namespace) -> SensorConfig:
    if args.config is not None:
        config = load_config(args.config)
        if args.preset and args.preset != config.preset:
            config = SensorConfig(preset=args.preset)
    else:
        config = SensorConfig(preset=args.preset or "16px")
    if args.rate_tactile:
        config.daq.tactile_rate_hz = args.rate_tactile
    if args.rate_prox:
        config.daq.proximity_rate_hz = args.rate_prox
    config.daq.__post_init__()
    return config


def _load_model_file(path: Path | None) -> dict:
    if path is None:
        return {}
    return calibration.load_models(path)


def build_parser() -> _Parser:
    parser = _Parser(prog="prexel",
                     description="software twin of a hybrid force/proximity sensor")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("simulate", help="run a scenario end to end")
    _add_common(p)
    p.add_argument("--scenario", type=Path, required=True, help="scenario JSON")
    p.add_argument("--capture", type=Path, help="write wire bytes here (.pxb)")
    p.add_argument("--report", type=Path, help="write the session report JSON here")
    p.add_argument("--models", type=Path, help="model file from `prexel calibrate`")

    p = sub.add_parser("calibrate", help="run simulated calibration experiments")
    _add_common(p)
    p.add_argument("--out", type=Path, required=True, help="model file to write")
    p.add_argument("--runs", type=int, default=4, help="force sweep repetitions")
    p.add_argument("--degree", type=int, default=3, help="polynomial degree")

    p = sub.add_parser("characterize", help="figures battery and table")
    _add_common(p)
    p.add_argument("--out", type=Path, help="also write the report JSON here")

    p = sub.add_parser("replay", help="re-run the host pipeline over a capture")
    _add_common(p)
    p.add_argument("--capture", type=Path, required=True, help=".pxb capture to read")
    p.add_argument("--report", type=Path, help="write the session report JSON here")
    p.add_argument("--models", type=Path, help="model file from `prexel calibrate`")
    p.add_argument("--mode", choices=("idle", "hand_guide", "collision"),
                   default="idle", help="host mode to replay under")

    p = sub.add_parser("serve", help="live WebSocket service")
    _add_common(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8732)
    p.add_argument("--static", type=Path, help="directory to serve at / (the UI build)")
    p.add_argument("--models", type=Path, help="model file from `prexel calibrate`")
    p.add_argument("--tick-scale", type=float, default=1.0,
                   help="virtual seconds per wall second (testing aid)")

    return parser


# verb bodies ---------------------------------------------------------------

def _cmd_simulate(args: argparse.Namespace) -> int:
    scenario = Scenario.load(args.scenario)
    if args.config is None and args.preset is None:
        args.preset = scenario.preset
    config = _load_sensor_config(args)
    seed = args.seed if args.seed is not None else scenario.seed
    models = _load_model_file(args.models)
    engine = SessionEngine(
        config, SessionSettings(mode=scenario.mode),
        force_model=models.get("force"), prox_model=models.get("proximity"),
        rng=np.random.default_rng(seed))
    result = engine.run_scenario(scenario)
    if args.capture:
        save_capture(args.capture, result.capture)
    report = result.report()
    if args.report:
        args.report.write_text(json.dumps(report, indent=2) + "\n")
    print(json.dumps(report, indent=2))
    return EXIT_OK


def _cmd_calibrate(args: argparse.Namespace) -> int:
    config = _load_sensor_config(args)
    rng = np.random.default_rng(args.seed or 0)
    shape = config.layout.grid_shape()

    forces = np.arange(0.5, 15.0 + 1e-9, 0.5)
    runs = np.stack([
        np.asarray([conductance_of(float(f), 0.0, config.piezo, None,
                                   Direction.LOADING,
                                   rng if config.noise_enabled else None)
                    for f in forces])
        for _ in range(args.runs)])
    force_model = fit_force_conductance(forces, runs, degree=args.degree)

    # hold long enough for the settle rate to be identifiable: the fit
    # needs the record to span several times 1/B, sized from the build's
    # nominal drift
    hold_s = max(3.0 * 3600.0, 15.0 / config.drift.b_per_s)
    hold_t = np.arange(0.0, hold_s, 2.0)
    hold_r = resistance_of(
        8.1, hold_t, config.piezo,
        config.drift if config.drift_enabled else None,
        Direction.LOADING, rng if config.noise_enabled else None)
    drift_model, drift_info = fit_drift(hold_t, np.asarray(hold_r))

    quiet = GroundTruthState(np.zeros(shape), np.zeros(shape))
    baseline = np.array([
        measure_counter(quiet, config.capacitive,
                        rng if config.noise_enabled else None).counts
        for _ in range(300)], dtype=float)
    distances = np.arange(10.0, config.capacitive.detection_range_mm + 1e-9, 10.0)
    sweep = []
    for d in distances:
        truth = GroundTruthState(np.zeros(shape), np.zeros(shape),
                                 hand_distance_mm=float(d),
                                 object_kind=ObjectKind.HUMAN_HAND)
        counts = [measure_counter(truth, config.capacitive,
                                  rng if config.noise_enabled else None).counts
                  for _ in range(30)]
        sweep.append(float(np.mean(counts)))
    prox_model = fit_proximity(distances, np.asarray(sweep), baseline,
                               range_mm=config.capacitive.detection_range_mm)

    save_models(args.out, force_model=force_model, drift_model=drift_model,
                proximity_model=prox_model)
    print(json.dumps({
        "out": str(args.out),
        "force_knots": len(force_model.knots_n),
        "drift": {"b_per_s": drift_model.b_per_s,
                  "delta_r_ohm": drift_model.delta_r_ohm,
                  "converged": drift_info.converged,
                  "drift_free": drift_info.drift_free},
        "proximity": {"cal_a": prox_model.cal_a,
                      "base_counter": prox_model.base_counter,
                      "threshold": prox_model.threshold},
    }, indent=2))
    return EXIT_OK


def _cmd_characterize(args: argparse.Namespace) -> int:
    config = _load_sensor_config(args)
    report = characterize.run_battery(config, seed=args.seed or 0)
    if args.out:
        characterize.save_report(report, args.out)
    print(characterize.format_table(report))
    return EXIT_OK


def _cmd_replay(args: argparse.Namespace) -> int:
    config = _load_sensor_config(args)
    capture = load_capture(args.capture)
    models = _load_model_file(args.models)
    engine = SessionEngine(
        config, SessionSettings(mode=args.mode),
        force_model=models.get("force"), prox_model=models.get("proximity"))
    result = engine.replay_capture(capture)
    report = result.report()
    if args.report:
        args.report.write_text(json.dumps(report, indent=2) + "\n")
    print(json.dumps(report, indent=2))
    return EXIT_OK


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    config = _load_sensor_config(args)
    models = _load_model_file(args.models)
    app = create_app(config, models=models, static_dir=args.static,
                     seed=args.seed or 0, tick_scale=args.tick_scale)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


_VERBS = {
    "simulate": _cmd_simulate,
    "calibrate": _cmd_calibrate,
    "characterize": _cmd_characterize,
    "replay": _cmd_replay,
    "serve": _cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _VERBS[args.verb](args)
    except (ConfigError, ScenarioError, CalibrationError, ProtocolError,
            SessionError, OSError, ValueError) as exc:
        print(f"prexel {args.verb}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
