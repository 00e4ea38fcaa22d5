import json

import numpy as np
import pytest

from galpreint.gal3 import exp_gal3
from galpreint.preintegration import MEDIUM_NOISE, gamma_matrix
from galpreint.se23 import ExtendedPose
from galpreint.sim import (
    GRAVITY,
    McConfig,
    TrajectoryParams,
    analytic_kinematics,
    analytic_state,
    nees,
    run_monte_carlo,
    synth_imu,
)
from galpreint.so3 import hat

SHORT = TrajectoryParams(duration=0.25)


def test_analytic_state_is_kinematically_consistent():
    p = TrajectoryParams()
    t = np.linspace(0.5, 9.5, 7)
    h = 1e-5
    T, omega, accel = analytic_state(p, t)
    Tp, _, _ = analytic_state(p, t + h)
    Tm, _, _ = analytic_state(p, t - h)
    Rdot = (Tp.R - Tm.R) / (2 * h)
    np.testing.assert_allclose(Rdot, T.R @ hat(omega), atol=1e-8)
    np.testing.assert_allclose((Tp.p - Tm.p) / (2 * h), T.v, atol=1e-8)
    _, _, acc, _ = analytic_kinematics(p, t)
    np.testing.assert_allclose(np.einsum("nij,nj->ni", T.R, accel) + GRAVITY, acc, atol=1e-12)
    np.testing.assert_allclose(np.swapaxes(T.R, -1, -2) @ T.R, np.broadcast_to(np.eye(3), (7, 3, 3)), atol=1e-12)


def test_noise_free_imu_reproduces_the_path_on_a_level_circle():
    p = TrajectoryParams(z_amplitude=0.0, duration=2.0)
    s = synth_imu(p, MEDIUM_NOISE, lam=0.0)
    T, _, _ = analytic_state(p, s.t)
    X = ExtendedPose(T.R[0], T.v[0], T.p[0]).to_gal3()
    G = gamma_matrix(GRAVITY, p.dt)
    for k in range(len(s.t) - 1):
        X = G @ X @ exp_gal3(np.r_[s.gyro[k], s.accel[k], 0, 0, 0, 1] * p.dt)
    np.testing.assert_allclose(X.b, T.p[-1], atol=1e-10)
    np.testing.assert_allclose(X.a, T.v[-1], atol=1e-10)


def test_synth_imu_bias_walk():
    s = synth_imu(SHORT, MEDIUM_NOISE, bias=np.arange(6) * 0.01, random_walk=True, seed=3)
    np.testing.assert_allclose(s.bias[0], np.arange(6) * 0.01)
    np.testing.assert_allclose(np.diff(s.bias, axis=0), -s.eta[:-1, 6:] * SHORT.dt)
    fixed = synth_imu(SHORT, MEDIUM_NOISE, seed=3)
    assert np.all(fixed.bias == 0) and np.all(fixed.eta[:, 6:] == 0)


def test_nees_against_direct_solve_and_singular_case():
    rng = np.random.default_rng(0)
    L = rng.normal(size=(4, 5, 5))
    S = L @ np.swapaxes(L, -1, -2) + np.eye(5)
    e = rng.normal(size=(4, 5))
    np.testing.assert_allclose(nees(e, S), np.einsum("ni,ni->n", e, np.linalg.solve(S, e[..., None])[..., 0]))
    assert np.isnan(nees(e[0], np.diag([1.0, 1, 1, 1, 0])))


def test_monte_carlo_is_deterministic_and_worker_independent():
    cfg = McConfig(M=60, seed=1)
    a = run_monte_carlo(cfg, SHORT)
    b = run_monte_carlo(cfg, SHORT)
    c = run_monte_carlo(cfg, SHORT, workers=2)
    for k in ("equivariant", "baseline"):
        np.testing.assert_array_equal(a.anees[k], b.anees[k])
        np.testing.assert_array_equal(a.anees[k], c.anees[k])
        np.testing.assert_array_equal(a.ale[k], c.ale[k])


def test_realizations_do_not_depend_on_batching():
    first = run_monte_carlo(McConfig(M=3, seed=2), SHORT)
    more = run_monte_carlo(McConfig(M=6, seed=2), SHORT)
    np.testing.assert_array_equal(first.nees_samples["equivariant"], more.nees_samples["equivariant"][:, :3])


def test_zero_noise_is_flagged_degenerate():
    r = run_monte_carlo(McConfig(M=4, lam=0.0), SHORT)
    assert r.degenerate["equivariant"] and r.degenerate["baseline"]
    assert r.summary()["equivariant"]["mean_anees"] is None
    assert np.nanmax(r.ale["equivariant"]) < 1e-12


def test_consistency_is_close_to_one_over_a_short_horizon():
    r = run_monte_carlo(McConfig(M=100, seed=4), TrajectoryParams(duration=1.0))
    for k in ("equivariant", "baseline"):
        # one step in, 12 noise directions cannot fill 15 dimensions, so NEES is undefined
        assert np.isnan(r.anees[k][0])
        assert 0.8 < np.nanmean(r.anees[k]) < 1.2


def test_report_files(tmp_path):
    r = run_monte_carlo(McConfig(M=2), SHORT)
    r.write(tmp_path / "r.csv", tmp_path / "r.json")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "time,method,anees,ale,excluded_count"
    assert len(lines) == 1 + 2 * SHORT.n_steps
    doc = json.loads((tmp_path / "r.json").read_text())
    assert doc["report_version"] == 1 and doc["n"] == 15
    assert doc["config"]["M"] == 2


def test_config_validation():
    with pytest.raises(ValueError):
        McConfig(M=0)
    with pytest.raises(ValueError):
        McConfig(lam=-1.0)
    with pytest.raises(ValueError):
        run_monte_carlo(McConfig(M=1), SHORT, methods=("kalman",))
