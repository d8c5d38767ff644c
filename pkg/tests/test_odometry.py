import math

import numpy as np
import pytest

from deskbot.kinematics import ChassisGeometry, Pose2D, WheelSpeeds
from deskbot.odometry import (
    EncoderConfig,
    EncoderSample,
    OdometryState,
    correct,
    integrate,
    step,
    ticks_to_wheel_speed,
)
from deskbot.plant import GroundTruth, true_pose_step

GEOM = ChassisGeometry(track_width=0.2, wheel_radius=0.034)
ENC = EncoderConfig(ticks_per_rev=1024, wheel_radius=0.034)


def test_ticks_to_wheel_speed_reference():
    # 13 ticks in 0.02 s at 1024 ticks/rev, r=0.034:
    # 13 * 2*pi*0.034 / (1024 * 0.02)
    ws = ticks_to_wheel_speed(
        EncoderSample(delta_ticks_left=13, delta_ticks_right=-13, dt=0.02), ENC
    )
    assert ws.left == pytest.approx(0.1356039016490907, abs=1e-15)
    assert ws.right == pytest.approx(-0.1356039016490907, abs=1e-15)


def test_one_rev_is_one_circumference():
    ws = ticks_to_wheel_speed(
        EncoderSample(delta_ticks_left=1024, delta_ticks_right=1024, dt=1.0), ENC
    )
    assert ws.left == pytest.approx(0.21362830044410594, abs=1e-15)


def test_ticks_rejects_bad_dt():
    with pytest.raises(ValueError):
        ticks_to_wheel_speed(EncoderSample(1, 1, dt=0.0), ENC)


def test_step_reference():
    pose = step(
        Pose2D(x=1.0, y=2.0, theta=math.pi / 6),
        WheelSpeeds(left=0.3, right=0.5),
        GEOM,
        dt=0.02,
    )
    assert pose.x == pytest.approx(1.0069282032302755, abs=1e-15)
    assert pose.y == pytest.approx(2.004, abs=1e-15)
    assert pose.theta == pytest.approx(0.5435987755982988, abs=1e-15)


def test_step_uses_pre_update_heading():
    # pure rotation first step leaves x, y exactly unchanged even though
    # theta changes; translation from theta=0 moves exactly along +x
    start = Pose2D()
    p = step(start, WheelSpeeds(left=-0.3, right=0.3), GEOM, dt=0.1)
    assert (p.x, p.y) == (0.0, 0.0)
    assert p.theta == pytest.approx(0.3)


def test_theta_accumulates_without_wrapping():
    pose = Pose2D()
    for _ in range(500):
        pose = step(pose, WheelSpeeds(left=-0.2, right=0.2), GEOM, dt=0.1)
    assert pose.theta == pytest.approx(0.4 * 0.1 / 0.2 * 500)  # = 100 rad > pi


def test_straight_line_matches_exact_integrator_bitwise():
    # with equal wheel speeds the Euler update and the exact arc reduce to
    # the same expression, so they agree to the last bit
    wheels = WheelSpeeds(left=0.31, right=0.31)
    pose = Pose2D(x=0.2, y=-0.4, theta=0.83)
    truth = GroundTruth(pose=pose, wheels=wheels)
    for _ in range(400):
        pose = step(pose, wheels, GEOM, dt=0.02)
        truth = true_pose_step(truth, GEOM, dt=0.02)
    assert pose == truth.pose


def test_euler_error_halves_with_dt():
    # quarter-ish arc: wheels (0.25, 0.35) for 3.2 s -> R=0.6, omega=0.5;
    # reference errors computed with an independent integrator
    wheels = WheelSpeeds(left=0.25, right=0.35)
    expected = {0.02: 0.0043041425233799726, 0.01: 0.0021520690199464494,
                0.005: 0.0010760342297613955}
    errs = {}
    for dt, n in ((0.02, 160), (0.01, 320), (0.005, 640)):
        pose = Pose2D()
        for _ in range(n):
            pose = step(pose, wheels, GEOM, dt)
        exact_x = 0.5997441618249032
        exact_y = 0.6175197133807732
        errs[dt] = math.hypot(pose.x - exact_x, pose.y - exact_y)
        assert errs[dt] == pytest.approx(expected[dt], rel=1e-9)
    assert errs[0.01] <= 0.5001 * errs[0.02]
    assert errs[0.005] <= 0.5001 * errs[0.01]


def test_integrate_left_fold():
    samples = [
        (WheelSpeeds(left=0.2, right=0.2), 0.1),
        (WheelSpeeds(left=-0.1, right=0.1), 0.5),
        (WheelSpeeds(left=0.3, right=0.1), 0.2),
    ]
    manual = Pose2D(x=0.5, y=0.5, theta=0.0)
    for ws, dt in samples:
        manual = step(manual, ws, GEOM, dt)
    assert integrate(Pose2D(x=0.5, y=0.5, theta=0.0), samples, GEOM) == manual


def test_integrate_empty_is_identity():
    start = Pose2D(x=1.0, y=2.0, theta=3.0)
    assert integrate(start, [], GEOM) == start


def test_correct_replaces_pose():
    state = OdometryState(pose=Pose2D(x=1.0, y=1.0, theta=0.5), sample_time=0.02)
    fixed = correct(state, Pose2D(x=0.0, y=0.0, theta=0.0))
    assert fixed.pose == Pose2D(x=0.0, y=0.0, theta=0.0)
    assert fixed.sample_time == 0.02


def test_step_rejects_bad_dt():
    with pytest.raises(ValueError):
        step(Pose2D(), WheelSpeeds(0.1, 0.1), GEOM, dt=-0.02)


def test_translation_invariance():
    # integrating from a shifted start shifts the result by the same amount
    rng = np.random.default_rng(5)
    samples = [
        (WheelSpeeds(*rng.uniform(-0.5, 0.5, size=2)), 0.02) for _ in range(50)
    ]
    base = integrate(Pose2D(), samples, GEOM)
    shifted = integrate(Pose2D(x=2.0, y=-1.0, theta=0.0), samples, GEOM)
    assert shifted.x - 2.0 == pytest.approx(base.x, abs=1e-12)
    assert shifted.y + 1.0 == pytest.approx(base.y, abs=1e-12)
    assert shifted.theta == pytest.approx(base.theta, abs=1e-12)
