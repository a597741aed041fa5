"""Pose geometry, hand guidance, the avoidance watchdog and the point robot."""

import math

import numpy as np
import pytest

from prexel.calibration import NO_PRESENCE, ProximityEstimate, ProximityModel
from prexel.robot import (
    AvoidanceConfig,
    AvoidanceMonitor,
    AvoidanceState,
    GuidanceGains,
    PrexelPoseMap,
    RobotError,
    SimulatedRobot,
    TouchClass,
    classify_touch,
    column_forces,
    guidance_from_forces,
)

NEAR = ProximityEstimate(present=True, distance_mm=50.0)
FAR = ProximityEstimate(present=True, distance_mm=150.0)
UNRESOLVED = ProximityEstimate(present=True, distance_mm=None)


# --- cylinder wrap geometry ------------------------------------------------

def test_default_wrap_radius_closes_the_strip(config16):
    pm = PrexelPoseMap.cylinder_wrap(config16.layout)
    # circumference equals the strip length
    assert 2.0 * math.pi * pm.wrap_radius_mm == pytest.approx(200.0)
    spacing = np.diff(np.unwrap(pm.column_angles()))
    assert spacing == pytest.approx(np.full(7, 2.0 * math.pi / 8.0))


def test_wrap_pose_axes_and_positions(config16):
    pm = PrexelPoseMap.cylinder_wrap(config16.layout)
    r = pm.wrap_radius_mm
    first = pm.poses[0, 0]
    # column 0 at angle 0: outward normal along +x, sitting on the cylinder
    assert first[:3, 2] == pytest.approx([1.0, 0.0, 0.0])
    assert first[:3, 3] == pytest.approx([r, 0.0, -3.75])
    # rows stack along z at the row pitch, centered
    assert pm.poses[1, 0][2, 3] == pytest.approx(3.75)


def test_push_directions_are_inward_units(config16):
    pm = PrexelPoseMap.cylinder_wrap(config16.layout)
    d = pm.push_directions()
    assert np.linalg.norm(d, axis=1) == pytest.approx(np.ones(8))
    assert d[0] == pytest.approx([-1.0, 0.0])
    # column 4 faces the other way on an 8-column wrap
    assert d[4] == pytest.approx([1.0, 0.0])


def test_rotated_map_turns_the_angles(config16):
    pm = PrexelPoseMap.cylinder_wrap(config16.layout)
    turned = pm.rotated(math.pi / 2.0)
    assert turned.wrap_radius_mm == pm.wrap_radius_mm
    assert turned.column_angles()[0] == pytest.approx(math.pi / 2.0)


def test_pose_map_validation(config16):
    with pytest.raises(RobotError):
        PrexelPoseMap.cylinder_wrap(config16.layout, radius_mm=-1.0)
    good = PrexelPoseMap.cylinder_wrap(config16.layout)
    with pytest.raises(RobotError):
        PrexelPoseMap(poses=good.poses[:1], layout=config16.layout,
                      wrap_radius_mm=good.wrap_radius_mm)
    broken = good.poses.copy()
    broken[0, 0, :3, 0] *= 2.0  # no longer a rotation
    with pytest.raises(RobotError):
        PrexelPoseMap(poses=broken, layout=config16.layout,
                      wrap_radius_mm=good.wrap_radius_mm)


# --- hand guidance ---------------------------------------------------------

def test_column_forces_take_the_strongest_element():
    grid = np.array([[1.0, 2.0, 0.0], [3.0, 0.5, 0.0]])
    assert column_forces(grid) == pytest.approx([3.0, 2.0, 0.0])


def test_single_press_moves_inward_and_up(config16):
    pm = PrexelPoseMap.cylinder_wrap(config16.layout)
    grid = np.zeros((2, 8))
    grid[0, 0] = 5.0
    cmd = guidance_from_forces(grid, pm, GuidanceGains())
    # push on column 0 (outward normal +x) drives toward -x; the loaded
    # top row tips the z imbalance positive
    assert cmd.velocity_mm_s == pytest.approx([-25.0, 0.0, 25.0])
    assert cmd.active


def test_deadband_masks_small_forces(config16):
    pm = PrexelPoseMap.cylinder_wrap(config16.layout)
    grid = np.full((2, 8), 0.3)
    cmd = guidance_from_forces(grid, pm, GuidanceGains())
    assert cmd.velocity_mm_s == pytest.approx([0.0, 0.0, 0.0])
    assert not cmd.active


def test_opposite_columns_cancel(config16):
    pm = PrexelPoseMap.cylinder_wrap(config16.layout)
    grid = np.zeros((2, 8))
    grid[:, 0] = 3.0
    grid[:, 4] = 3.0
    cmd = guidance_from_forces(grid, pm, GuidanceGains())
    assert cmd.velocity_mm_s == pytest.approx([0.0, 0.0, 0.0], abs=1e-12)
    assert cmd.active


def test_z_rule_follows_row_imbalance(config16):
    pm = PrexelPoseMap.cylinder_wrap(config16.layout)
    top = np.zeros((2, 8))
    top[0, 2] = 2.0
    bottom = np.zeros((2, 8))
    bottom[1, 2] = 2.0
    vz_top = guidance_from_forces(top, pm, GuidanceGains()).velocity_mm_s[2]
    vz_bottom = guidance_from_forces(bottom, pm, GuidanceGains()).velocity_mm_s[2]
    assert vz_top == pytest.approx(10.0)
    assert vz_bottom == pytest.approx(-10.0)


def test_z_rule_off_for_square_array(config64):
    pm = PrexelPoseMap.cylinder_wrap(config64.layout)
    grid = np.zeros((8, 8))
    grid[0, 0] = 5.0
    cmd = guidance_from_forces(grid, pm, GuidanceGains())
    assert cmd.velocity_mm_s[2] == 0.0
    assert np.linalg.norm(cmd.velocity_mm_s[:2]) > 0.0


def test_speed_cap_preserves_direction(config16):
    pm = PrexelPoseMap.cylinder_wrap(config16.layout)
    grid = np.zeros((2, 8))
    grid[0, 0] = 15.0
    cmd = guidance_from_forces(grid, pm, GuidanceGains())
    v = cmd.velocity_mm_s
    assert np.linalg.norm(v) == pytest.approx(100.0)
    assert v[0] / v[2] == pytest.approx(-1.0)


def test_guidance_rotation_equivariance(config16, rng):
    pm = PrexelPoseMap.cylinder_wrap(config16.layout)
    phi = math.pi / 3.0
    grid = rng.uniform(0.0, 6.0, size=(2, 8))
    base = guidance_from_forces(grid, pm, GuidanceGains()).velocity_mm_s
    turned = guidance_from_forces(grid, pm.rotated(phi), GuidanceGains()).velocity_mm_s
    c, s = math.cos(phi), math.sin(phi)
    assert turned[0] == pytest.approx(c * base[0] - s * base[1])
    assert turned[1] == pytest.approx(s * base[0] + c * base[1])
    assert turned[2] == pytest.approx(base[2])


def test_guidance_rejects_wrong_grid(config16):
    pm = PrexelPoseMap.cylinder_wrap(config16.layout)
    with pytest.raises(RobotError):
        guidance_from_forces(np.zeros((3, 8)), pm, GuidanceGains())


def test_gain_validation():
    with pytest.raises(RobotError):
        GuidanceGains(speed_cap_mm_s=0.0)
    with pytest.raises(RobotError):
        GuidanceGains(deadband_n=-0.1)


# --- avoidance watchdog ----------------------------------------------------

def make_monitor(**kw):
    cfg = AvoidanceConfig(threshold_mm=kw.pop("threshold_mm", 100.0),
                          consecutive_hits=kw.pop("consecutive_hits", 3),
                          recovery_ticks=kw.pop("recovery_ticks", 4))
    return AvoidanceMonitor(config=cfg, model_range_mm=kw.pop("model_range_mm", 200.0))


def test_trigger_needs_consecutive_hits():
    mon = make_monitor()
    assert mon.update(NEAR) == (AvoidanceState.MONITORING, False)
    assert mon.update(NEAR) == (AvoidanceState.MONITORING, False)
    assert mon.update(NO_PRESENCE) == (AvoidanceState.MONITORING, False)
    # the miss reset the count, so two more hits are not enough
    mon.update(NEAR)
    assert mon.update(NEAR) == (AvoidanceState.MONITORING, False)
    state, emit = mon.update(NEAR)
    assert state is AvoidanceState.TRIGGERED and emit


def test_far_presence_is_not_a_hit():
    mon = make_monitor()
    for _ in range(5):
        state, emit = mon.update(FAR)
        assert state is AvoidanceState.MONITORING and not emit


def test_safe_pose_emitted_once_per_trigger():
    mon = make_monitor()
    emits = [mon.update(NEAR)[1] for _ in range(6)]
    assert emits == [False, False, True, False, False, False]


def test_recovery_path_and_relapse():
    mon = make_monitor()
    for _ in range(3):
        mon.update(NEAR)
    assert mon.state is AvoidanceState.TRIGGERED
    # present but far still holds the trigger; only absence starts recovery
    assert mon.update(FAR)[0] is AvoidanceState.TRIGGERED
    assert mon.update(NO_PRESENCE)[0] is AvoidanceState.RECOVERING
    mon.update(NO_PRESENCE)
    # relapse before the clear count runs out: back to triggered, no re-emit
    state, emit = mon.update(NEAR)
    assert state is AvoidanceState.TRIGGERED and not emit
    mon.update(NO_PRESENCE)
    for _ in range(3):
        state, _ = mon.update(NO_PRESENCE)
    assert state is AvoidanceState.MONITORING


def test_unresolved_distance_counts_when_threshold_covers_range():
    shy = make_monitor(threshold_mm=100.0, model_range_mm=200.0, consecutive_hits=1)
    assert shy.update(UNRESOLVED)[0] is AvoidanceState.MONITORING
    eager = make_monitor(threshold_mm=250.0, model_range_mm=200.0, consecutive_hits=1)
    state, emit = eager.update(UNRESOLVED)
    assert state is AvoidanceState.TRIGGERED and emit


def test_avoidance_config_validation():
    with pytest.raises(RobotError):
        AvoidanceConfig(consecutive_hits=0)
    with pytest.raises(RobotError):
        AvoidanceConfig(threshold_mm=0.0)


# --- touch classification --------------------------------------------------

@pytest.fixture
def prox_model():
    return ProximityModel(cal_a=3220.0, base_counter=1610.0, threshold=1638.8,
                          range_mm=200.0, baseline_sigma=9.6)


def test_classify_hand_announced_capacitively(prox_model):
    window = np.array([1612.0, 1625.0, 1700.0, 1820.0])
    assert classify_touch(window, prox_model, 3) is TouchClass.HUMAN


def test_classify_quiet_window_is_object(prox_model):
    window = np.array([1612.0, 1607.0, 1615.0, 1609.0])
    assert classify_touch(window, prox_model, 3) is TouchClass.OBJECT


def test_classify_short_window_is_unknown(prox_model):
    assert classify_touch(np.array([1610.0, 1612.0]), prox_model, 3) is TouchClass.UNKNOWN


def test_classify_below_band_dropout_is_unknown(prox_model):
    # disturbed below the baseline band without a presence crossing
    window = np.array([1610.0, 1570.0, 1604.0, 1612.0])
    assert classify_touch(window, prox_model, 3) is TouchClass.UNKNOWN


def test_classify_any_crossing_wins(prox_model):
    window = np.array([1570.0, 1700.0, 1612.0])
    assert classify_touch(window, prox_model, 3) is TouchClass.HUMAN


# --- point robot -----------------------------------------------------------

def test_velocity_applies_after_dead_time():
    bot = SimulatedRobot(dead_time_s=0.1)
    bot.command_velocity(np.array([10.0, 0.0, 0.0]), now_s=0.0)
    assert bot.step(0.0, 0.05) == pytest.approx([0.0, 0.0, 0.0])
    assert bot.step(0.05, 0.05) == pytest.approx([0.0, 0.0, 0.0])
    # command becomes effective at t = 0.1
    assert bot.step(0.1, 0.05) == pytest.approx([0.5, 0.0, 0.0])


def test_velocity_speed_cap():
    bot = SimulatedRobot(speed_cap_mm_s=100.0, dead_time_s=0.0)
    bot.command_velocity(np.array([300.0, 0.0, 0.0]), now_s=0.0)
    assert bot.step(0.0, 0.1) == pytest.approx([10.0, 0.0, 0.0])


def test_safe_pose_overrides_velocity_until_arrival():
    bot = SimulatedRobot(speed_cap_mm_s=100.0, dead_time_s=0.0)
    bot.command_safe_pose(np.array([30.0, 0.0, 0.0]), now_s=0.0)
    bot.step(0.0, 0.1)  # 10 mm along the way
    bot.command_velocity(np.array([50.0, 0.0, 0.0]), now_s=0.1)
    # the velocity command lands while still traveling and is dropped
    bot.step(0.1, 0.1)
    bot.step(0.2, 0.1)
    pose = bot.step(0.3, 0.1)
    assert pose == pytest.approx([30.0, 0.0, 0.0])  # no overshoot
    assert bot.at_safe_pose
    # holds until a command issued after arrival
    assert bot.step(0.4, 0.1) == pytest.approx([30.0, 0.0, 0.0])
    bot.command_velocity(np.array([50.0, 0.0, 0.0]), now_s=0.5)
    assert bot.step(0.5, 0.1) == pytest.approx([35.0, 0.0, 0.0])
    assert not bot.at_safe_pose


def test_robot_limit_validation():
    with pytest.raises(RobotError):
        SimulatedRobot(speed_cap_mm_s=0.0)
    with pytest.raises(RobotError):
        SimulatedRobot(dead_time_s=-0.5)
