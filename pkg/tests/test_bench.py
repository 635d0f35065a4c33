import csv
import io
import json
import math

import numpy as np
import pytest
from scipy import stats

from wristservo import bench
from wristservo.bench import (
    BENCH_INTRINSICS,
    HemisphereSampler,
    SamplingExhausted,
    look_rotation,
    run_comparison,
    run_fig3_scenario,
    sample_hemisphere,
)
from wristservo.geometry import Pose, compose, inverse
from wristservo.scenes import make_bottle, make_sphere_object
from wristservo.servo import Controller, ControllerConfig, observe, simulate_episode
from wristservo.vision import object_in_view
from wristservo.wrist import JointState, WristParams, camera_world_pose, forward_kinematics

P = WristParams()
BOTTLE = make_bottle()


def test_trivial_sampler():
    s = HemisphereSampler(radius_range=(0.5, 0.5), radius_bins=1, points_per_bin=1, rotation_range=(0.0, 0.0))
    (vp,) = sample_hemisphere(s)
    assert vp.radius == 0.5 and vp.roll == 0.0
    assert abs(np.linalg.norm(vp.direction) - 1) < 1e-12 and vp.direction[2] >= 0
    # camera at the reference wrist configuration sits on the sphere and looks at the centre
    cam = camera_world_pose(vp.hand_pose, P.unlimited(), s.reference_q)
    hand_to_center = -vp.hand_pose.translation
    assert abs(np.linalg.norm(vp.hand_pose.translation) - 0.5) < 1e-12
    axis = cam.rotation[:, 2]
    assert np.dot(axis, hand_to_center) > 0


def test_direction_z_is_uniform():
    s = HemisphereSampler(radius_bins=5, points_per_bin=2000, seed=99)
    vps = sample_hemisphere(s)
    assert len(vps) == 10_000
    z = np.array([v.direction[2] for v in vps])
    res = stats.kstest(z, "uniform")
    assert res.statistic < 0.02
    # azimuth uniform too
    az = (np.arctan2([v.direction[1] for v in vps], [v.direction[0] for v in vps]) + math.pi) / (2 * math.pi)
    assert stats.kstest(az, "uniform").statistic < 0.02


def test_bin_quotas_and_radii():
    s = HemisphereSampler(radius_bins=6, points_per_bin=50, seed=3)
    vps = sample_hemisphere(s)
    edges = s.bin_edges()
    counts = np.bincount([v.radius_bin for v in vps], minlength=6)
    assert counts.tolist() == [50] * 6
    for v in vps:
        assert edges[v.radius_bin] <= v.radius <= edges[v.radius_bin + 1]


def test_roll_within_range():
    s = HemisphereSampler(points_per_bin=30, rotation_range=(0.1, 0.4), seed=5)
    assert all(0.1 <= v.roll <= 0.4 for v in sample_hemisphere(s))


def test_same_seed_same_list():
    s = HemisphereSampler(radius_bins=2, points_per_bin=5, seed=21)
    a, b = sample_hemisphere(s, BOTTLE), sample_hemisphere(s, BOTTLE)
    for x, y in zip(a, b):
        assert np.array_equal(x.hand_pose.matrix(), y.hand_pose.matrix())
        assert x.q0 == y.q0
    c = sample_hemisphere(HemisphereSampler(radius_bins=2, points_per_bin=5, seed=22), BOTTLE)
    assert any(x.q0 != y.q0 for x, y in zip(a, c))


def test_scene_starts_are_in_view():
    s = HemisphereSampler(radius_range=(0.3, 0.6), radius_bins=2, points_per_bin=10, seed=8)
    for vp in sample_hemisphere(s, BOTTLE):
        assert object_in_view(BENCH_INTRINSICS, camera_world_pose(vp.hand_pose, P, vp.q0), BOTTLE, s.view_margin)
        (fe_lo, fe_hi), (ps_lo, ps_hi) = P.limits
        assert fe_lo <= vp.q0.q_wfe <= fe_hi and ps_lo <= vp.q0.q_wps <= ps_hi


def test_sampler_validation_and_exhaustion():
    with pytest.raises(ValueError):
        HemisphereSampler(radius_range=(0.5, 0.2))
    with pytest.raises(ValueError):
        HemisphereSampler(radius_bins=0)
    # a margin over half the image leaves no admissible region at all
    s = HemisphereSampler(points_per_bin=1, radius_bins=1, max_attempts=5, view_margin=0.6)
    with pytest.raises(SamplingExhausted):
        sample_hemisphere(s, make_sphere_object(0.03))


def centred_camera(scene, distance=0.35, elevation=math.radians(40.0)):
    """World camera pose whose selected region centroid lands on the principal point."""
    c = scene.centroid_world()
    pos = c + distance * np.array([math.cos(elevation), 0.0, math.sin(elevation)])
    R = look_rotation(c - pos)
    q = JointState(0.0, 0.0)
    for _ in range(4):
        cam = Pose(R, pos)
        hand = compose(cam, inverse(forward_kinematics(P, q)))
        region, f = observe(scene, hand, q, P, BENCH_INTRINSICS)
        R = look_rotation(R @ np.array([f.x, f.y, 1.0]))
    return Pose(R, pos)


def test_precentred_start_converges_within_hold():
    cfg = ControllerConfig()
    cam = centred_camera(BOTTLE)
    q0 = JointState.from_degrees(10.0, 30.0)
    hand = compose(cam, inverse(forward_kinematics(P, q0)))
    for c in Controller:
        res = simulate_episode(c, BOTTLE, hand, q0, P, BENCH_INTRINSICS, cfg)
        assert res.converged and res.iterations <= cfg.convergence_hold
    fig = run_fig3_scenario(camera_pose=cam)
    assert len(fig.traces) == 4
    assert all(t.result.converged and t.result.iterations <= cfg.convergence_hold for t in fig.traces)


def test_fig3_pp_signs_identical():
    fig = run_fig3_scenario()
    pp = fig.signs(Controller.PPIBVS)
    assert len(pp) == 2 and pp[0] == pp[1] != 0
    assert len(fig.signs(Controller.SIBVS)) == 2
    text = fig.format()
    assert "pp-IBVS first-step WPS signs" in text and "s-IBVS first-step WPS signs" in text


@pytest.fixture(scope="module")
def small_report():
    return run_comparison(n_points=4, seed=3, workers=1)


def test_report_invariants(small_report):
    r = small_report
    assert set(r.summary) == {"s-IBVS", "pp-IBVS"}
    totals = {s.total for s in r.summary.values()}
    assert totals == {4}
    for s in r.summary.values():
        assert 0 <= s.natural <= s.total and 0 <= s.converged <= s.total
    assert len(r.rows) == 8
    assert [row["episode"] for row in r.rows] == [0, 0, 1, 1, 2, 2, 3, 3]


def test_report_serialisations(small_report):
    r = small_report
    rows = list(csv.DictReader(io.StringIO(r.to_csv())))
    assert list(rows[0]) == ["episode", "controller", "iterations", "converged", "natural", "final_error"]
    assert len(rows) == 8
    d = json.loads(r.to_json())
    assert d["seed"] == 3 and d["n_points"] == 4
    assert d["reference"]["pp-IBVS"]["natural"] == "20/20"
    assert "sampler" in d["config"] and "controller" in d["config"]
    assert "reference" in r.format_table()


def test_report_stats_match_rows(small_report):
    r = small_report
    for name, s in r.summary.items():
        its = np.array([row["iterations"] for row in r.rows if row["controller"] == name], float)
        assert s.mean_iterations == pytest.approx(its.mean())
        assert s.std_iterations == pytest.approx(its.std())
        assert s.natural == sum(row["natural"] for row in r.rows if row["controller"] == name)


def test_parallel_matches_serial(small_report):
    par = run_comparison(n_points=4, seed=3, workers=2)
    assert par.to_csv() == small_report.to_csv()
    assert par.to_json() == small_report.to_json()


def test_rejections_are_refilled(monkeypatch):
    real = bench._run_pair
    calls = []

    def flaky(args):
        calls.append(1)
        return None if len(calls) in (1, 3) else real(args)

    monkeypatch.setattr(bench, "_run_pair", flaky)
    r = run_comparison(n_points=3, seed=11, workers=1)
    assert r.rejected == 2 and len(calls) == 5
    assert all(s.total == 3 for s in r.summary.values())
    assert sorted({row["episode"] for row in r.rows}) == [0, 1, 2]


def test_n_points_validation():
    with pytest.raises(ValueError):
        run_comparison(n_points=0)
