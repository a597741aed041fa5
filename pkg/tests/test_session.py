"""Closed-loop sessions: host pipeline, modes, capture replay."""

import numpy as np
import pytest

from prexel.calibration import ForceConductanceModel, force_of_conductance
from prexel.config import SensorConfig
from prexel.physics import ObjectKind
from prexel.protocol import TactilePayload
from prexel.robot import AvoidanceState, TouchClass
from prexel.scenario import Scenario, ScenarioEvent
from prexel.session import (
    LiveTruth,
    SessionEngine,
    SessionError,
    SessionSettings,
    _InverseTable,
    load_capture,
    save_capture,
)


def quiet_config():
    return SensorConfig(preset="16px", noise_enabled=False, drift_enabled=False)


def engine_for(mode, config=None, seed=0, **settings_kw):
    config = config or quiet_config()
    settings = SessionSettings(mode=mode, **settings_kw)
    return SessionEngine(config, settings, rng=np.random.default_rng(seed))


def press_scenario(duration=2.0, t=0.2, row=0, col=3, force=5.0, release=None,
                   mode="idle"):
    events = [ScenarioEvent(t, "press",
                            {"row": row, "col": col, "force_n": force})]
    if release is not None:
        events.append(ScenarioEvent(release, "release", {"row": row, "col": col}))
    return Scenario(preset="16px", mode=mode, seed=0, duration_s=duration,
                    events=events)


# --- inverse table ---------------------------------------------------------

def test_inverse_table_matches_bisection(piezo):
    model = ForceConductanceModel.from_piezo(piezo)
    table = _InverseTable(model)
    for g in np.linspace(1e-4, 2.0e-3, 25):
        slow = force_of_conductance(float(g), model).force_n
        assert table.forces(g) == pytest.approx(slow, abs=2e-3)


def test_inverse_table_edges(piezo):
    model = ForceConductanceModel.from_piezo(piezo)
    table = _InverseTable(model)
    assert table.forces(0.0) == 0.0
    assert table.forces(np.inf) == pytest.approx(15.0)
    # sub-range conductance interpolates toward zero, not negative
    assert 0.0 < table.forces(1e-6) < 0.5


# --- payload decoding ------------------------------------------------------

def test_grid_from_payload_endpoints():
    engine = engine_for("idle")
    full = (1 << 10) - 1
    samples = [0] * 16
    samples[0] = full     # dead short: full-scale force
    samples[5] = 512      # about 998 ohm
    payload = TactilePayload(rows=2, cols=8, samples=tuple(samples))
    grid = engine.grid_from_payload(payload)
    assert grid.shape == (2, 8)
    assert grid[0, 0] == pytest.approx(15.0)
    assert grid[0, 2] == 0.0  # raw 0 reads open circuit
    expect = force_of_conductance(1.0 / 998.046875, engine.force_model).force_n
    assert grid[0, 5] == pytest.approx(expect, abs=2e-3)


def test_tare_subtracts_and_clamps():
    engine = engine_for("idle")
    engine.tare_now(grids=[np.full((2, 8), 0.4), np.full((2, 8), 0.6)])
    assert engine.tare_offsets == pytest.approx(np.full((2, 8), 0.5))
    payload = TactilePayload(rows=2, cols=8, samples=tuple([0] * 16))
    assert np.all(engine.grid_from_payload(payload) == 0.0)


# --- scripted runs ---------------------------------------------------------

def test_idle_run_reads_the_press_back():
    engine = engine_for("idle")
    res = engine.run_scenario(press_scenario(duration=2.0, force=5.0))
    assert len(res.grid_times) in (199, 200, 201)
    assert len(res.prox_times) in (19, 20, 21)
    assert res.frames_dropped == 0
    assert res.parser_faults == 0
    assert res.parser_frames == len(res.grid_times) + len(res.prox_times)
    late = [g for t, g in zip(res.grid_times, res.grids) if t > 0.5]
    held = np.stack(late)
    # noiseless readback lands on the pressed element, near the true force
    assert held[:, 0, 3] == pytest.approx(5.0, abs=0.3)
    others = held.copy()
    others[:, 0, 3] = 0.0
    assert np.max(others) < 0.1
    report = res.report()
    assert report["peak_force_n"] == pytest.approx(5.0, abs=0.3)
    assert report["tactile_frames"] == len(res.grid_times)


def test_touch_event_with_short_history_is_unknown():
    engine = engine_for("idle")
    res = engine.run_scenario(press_scenario(duration=2.0, t=0.5))
    assert len(res.touches) == 1
    touch = res.touches[0]
    assert (touch.row, touch.col) == (0, 3)
    assert touch.force_n == pytest.approx(5.0, abs=0.3)
    # 0.5 s of proximity history is less than the 2 s window
    assert touch.label is TouchClass.UNKNOWN


def test_replay_reproduces_live_run_exactly(tmp_path):
    config = SensorConfig(preset="16px")  # noise on
    live = SessionEngine(config, SessionSettings(mode="idle"),
                         rng=np.random.default_rng(42))
    res = live.run_scenario(press_scenario(duration=1.5))
    save_capture(tmp_path / "run.bin", res.capture)

    fresh = SessionEngine(config, SessionSettings(mode="idle"))
    replayed = fresh.replay_capture(load_capture(tmp_path / "run.bin"))
    assert len(replayed.grids) == len(res.grids)
    for a, b in zip(res.grids, replayed.grids):
        assert np.array_equal(a, b)
    assert replayed.counters == res.counters
    assert replayed.smoothed == res.smoothed
    assert [e.present for e in replayed.estimates] \
        == [e.present for e in res.estimates]


def test_capture_file_round_trip(tmp_path):
    save_capture(tmp_path / "c.bin", b"\xa5\x5a123")
    assert load_capture(tmp_path / "c.bin") == b"\xa5\x5a123"
    with pytest.raises(SessionError):
        load_capture(tmp_path / "missing.bin")


# --- hand guiding ----------------------------------------------------------

def test_hand_guide_moves_and_halts():
    engine = engine_for("hand_guide")
    scenario = press_scenario(duration=3.0, t=0.2, row=0, col=0, force=5.0,
                              release=1.5, mode="hand_guide")
    res = engine.run_scenario(scenario)
    cmds = dict(zip(res.command_times, res.commands))
    held = [v for t, v in cmds.items() if 0.5 < t < 1.4]
    assert held, "no commands while pressed"
    for v in held:
        assert v[0] < 0.0        # column 0 pushes toward -x
        assert v[2] > 0.0        # top row tips +z
    # released: commanded velocity zero within one tactile tick
    after = [v for t, v in cmds.items() if t >= 1.5 + 0.011]
    assert after and all(np.allclose(v, 0.0) for v in after)
    # pose freezes once the zero command clears the dead time
    settle = 1.5 + 0.011 + engine.settings.robot_dead_time_s
    frozen = [p for t, p in zip(res.pose_times, res.poses) if t > settle + 0.011]
    assert frozen
    assert np.ptp(np.stack(frozen), axis=0) == pytest.approx([0, 0, 0], abs=1e-9)
    # while held the motion was monotone
    moving = np.stack([p for t, p in zip(res.pose_times, res.poses)
                       if 0.4 <= t <= 1.5])
    assert np.all(np.diff(moving[:, 0]) <= 1e-12)
    assert np.all(np.diff(moving[:, 2]) >= -1e-12)
    assert moving[-1, 0] < moving[0, 0]


# --- collision avoidance ---------------------------------------------------

def test_collision_triggers_early_and_recovers():
    config = SensorConfig(preset="64px")
    engine = SessionEngine(config, SessionSettings(mode="collision"),
                           rng=np.random.default_rng(5))
    scenario = Scenario(
        preset="64px", mode="collision", seed=5, duration_s=6.0,
        events=[ScenarioEvent(0.0, "approach",
                              {"from_mm": 300.0, "to_mm": 10.0,
                               "speed_mm_s": 60.0})])
    res = engine.run_scenario(scenario)
    states = dict((s, t) for t, s in res.fsm_transitions)
    assert AvoidanceState.TRIGGERED in states
    t_trig = min(t for t, s in res.fsm_transitions
                 if s is AvoidanceState.TRIGGERED)
    # scripted hand was still farther than 70 mm out when the robot reacted
    assert 300.0 - 60.0 * t_trig > 70.0
    # the escape outruns the hand, presence drops, watchdog re-arms
    assert res.fsm_transitions[-1][1] is AvoidanceState.MONITORING
    assert res.poses[-1] == pytest.approx([400.0, 0.0, 0.0])


# --- live truth ------------------------------------------------------------

def test_live_truth_onset_and_branch():
    truth = LiveTruth((2, 8))
    truth.set_press(0, 1, 5.0, now_s=1.0)
    state = truth.state_at(1.5)
    assert state.forces_n[0, 1] == 5.0
    assert state.onset_times_s[0, 1] == 1.0
    assert not state.unloading[0, 1]
    # small wiggle: clock keeps running, still loading
    truth.set_press(0, 1, 5.4, now_s=2.0)
    assert truth.state_at(2.5).onset_times_s[0, 1] == 1.0
    # drop: unloading branch, big change resets the clock
    truth.set_press(0, 1, 2.0, now_s=3.0)
    state = truth.state_at(3.5)
    assert state.unloading[0, 1]
    assert state.onset_times_s[0, 1] == 3.0


def test_live_truth_hand_and_object():
    truth = LiveTruth((2, 8))
    assert truth.state_at(0.0).hand_distance_mm is None
    truth.set_hand(120.0)
    truth.set_object(ObjectKind.NON_DETECTABLE)
    state = truth.state_at(1.0)
    assert state.hand_distance_mm == 120.0
    assert state.object_kind is ObjectKind.NON_DETECTABLE


def test_settings_validation():
    with pytest.raises(SessionError):
        SessionSettings(mode="panic")
    with pytest.raises(SessionError):
        SessionSettings(prox_smooth_window=0)
