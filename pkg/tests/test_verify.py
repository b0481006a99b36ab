import json

import mpmath
import numpy as np
import pytest
from scipy.special import lambertw

from kras.exceptions import HistoryGap, NoConvergence, WindowTooShort, ZeroInput
from kras.synth import Certificate, refine_fixed_K
from kras.verify import (
    ClosedLoop,
    Trajectory,
    check_dissipation,
    closed_loop,
    integral_inequality_slack,
    kf_along,
    kf_value,
    kronecker_identity_residuals,
    l2_gain_estimate,
    ls_orthogonality,
    benchmark_disturbance,
    plot_gamma,
    plot_trajectory,
    random_integral_inequality_trial,
    rightmost_eigenvalues,
    simulate,
    spectral_abscissa,
    trajectory_window,
    write_trajectory_csv,
)


@pytest.fixture(scope="session")
def sec61_loop(sec61, sec61_convex):
    ctx = sec61[1]
    gains = sec61_convex[0]
    cert = refine_fixed_K(ctx, gains)
    return ctx, gains, cert, closed_loop(ctx.system, gains, ctx.decomps)


@pytest.fixture(scope="session")
def sec61_disturbed(sec61_loop):
    ctx, _, _, cl = sec61_loop
    return simulate(cl, None, benchmark_disturbance(), h=0.002, T=10.0)


# ---------------------------------------------------------------- spectral


def test_sa_delay_free():
    assert spectral_abscissa(ClosedLoop.from_matrices([[[-1.0]]])) == -1.0


def test_sa_single_delay_matches_lambert_w():
    oracle = lambertw(-1.0, 0).real
    assert spectral_abscissa(ClosedLoop.from_matrices([[[0.0]], [[-1.0]]], delays=(1.0,))) == pytest.approx(oracle, abs=1e-6)
    assert oracle == pytest.approx(-0.3181, abs=1e-4)


def test_sa_distributed_kernel():
    # x' = -int_{-1}^0 x(t+s) ds has characteristic equation s^2 + 1 - exp(-s) = 0
    cl = ClosedLoop.from_matrices([[[0.0]], [[0.0]]], delays=(1.0,),
                                  kernels=[lambda tau: -np.ones((np.size(tau), 1, 1))])
    sa = spectral_abscissa(cl)
    top = rightmost_eigenvalues(cl, 64, 1)[0]
    root = complex(mpmath.findroot(lambda s: s * s + 1 - mpmath.exp(-s), top))
    assert abs(root - top) < 1e-8
    assert sa == pytest.approx(root.real, abs=1e-6)


def test_sa_node_minimum():
    with pytest.raises(ValueError):
        spectral_abscissa(ClosedLoop.from_matrices([[[0.0]], [[-1.0]]], delays=(1.0,)), N=4)


def test_sa_no_convergence():
    with pytest.raises(NoConvergence):
        spectral_abscissa(ClosedLoop.from_matrices([[[0.0]], [[-1.0]]], delays=(1.0,)), N=8, tol=0.0, cap=32)


def test_certified_gain_is_stable(sec61_loop):
    assert spectral_abscissa(sec61_loop[3]) < 0


# ---------------------------------------------------------------- simulation


def _scalar_delay():
    return ClosedLoop.from_matrices([[[0.0]], [[-1.0]]], delays=(1.0,))


def test_method_of_steps_oracle():
    traj = simulate(_scalar_delay(), history=[1.0], h=0.01, T=2.0)
    t, x = traj.t, traj.x[:, 0]
    first = (t >= 0) & (t <= 1)
    second = (t > 1) & (t <= 2)
    np.testing.assert_allclose(x[first], 1 - t[first], atol=1e-8)
    np.testing.assert_allclose(x[second], 1 - t[second] + (t[second] - 1) ** 2 / 2, atol=1e-6)


def test_distributed_kernel_oracle():
    # x' = -int_{-1}^0 x(t+s) ds with unit history: on [0, 1] the integral is
    # (1 - t) + int_0^t x, so x'' = 1 - x with x(0) = 1, x'(0) = -1
    cl = ClosedLoop.from_matrices([[[0.0]], [[0.0]]], delays=(1.0,),
                                  kernels=[lambda tau: -np.ones((np.size(tau), 1, 1))])
    traj = simulate(cl, history=[1.0], h=0.01, T=1.0, dd_points=400)
    sel = traj.t >= 0
    t = traj.t[sel]
    np.testing.assert_allclose(traj.x[sel, 0], 1 - np.sin(t), atol=5e-6)


def test_zero_history_zero_input(sec61_loop):
    traj = simulate(sec61_loop[3], h=0.01, T=1.0)
    assert not np.any(traj.x) and not np.any(traj.z[traj.future])


def test_history_segment_is_kept():
    psi = lambda th: np.stack([np.cos(th)], axis=-1)
    traj = simulate(_scalar_delay(), history=psi, h=0.01, T=0.5)
    past = traj.t <= 0
    np.testing.assert_allclose(traj.x[past, 0], np.cos(traj.t[past]), atol=1e-15)


def test_benchmark_initial_condition_decays(sec61_loop):
    ctx, _, _, cl = sec61_loop
    traj = simulate(cl, history=[5.0, 3.0], w=benchmark_disturbance(), h=0.004, T=15.0)
    peak_after = np.abs(traj.x[traj.t >= 12]).max()
    assert peak_after < 0.05 * np.abs(traj.x).max()


@pytest.mark.parametrize("kwargs", [dict(h=0.0), dict(T=-1.0), dict(dd_points=8)])
def test_simulate_rejects_bad_settings(kwargs):
    with pytest.raises(ValueError):
        simulate(_scalar_delay(), **kwargs)


def test_history_gap():
    traj = simulate(_scalar_delay(), history=[1.0], h=0.01, T=1.0)
    with pytest.raises(HistoryGap):
        traj.interp(np.array([-5.0]))


def test_memoryless_gain():
    cl = ClosedLoop.from_matrices([[[-1.0]]], C=[[[0.0]]], D1=[[0.0]], D2=[[0.5]])
    traj = simulate(cl, w=lambda t: np.sin(3 * np.atleast_1d(t))[:, None], h=0.01, T=5.0)
    assert l2_gain_estimate(traj) == pytest.approx(0.5, rel=1e-12)


def test_zero_output_gain():
    cl = ClosedLoop.from_matrices([[[-1.0]]], D1=[[1.0]])
    traj = simulate(cl, w=lambda t: np.ones((np.size(t), 1)), h=0.01, T=2.0)
    assert l2_gain_estimate(traj) == 0.0


def test_zero_input_rejected():
    with pytest.raises(ZeroInput):
        l2_gain_estimate(simulate(_scalar_delay(), h=0.01, T=1.0))


def test_gain_estimate_below_certified_level(sec61_loop, sec61_disturbed):
    assert l2_gain_estimate(sec61_disturbed) <= 1.05 * sec61_loop[2].gamma


def test_grid_refinement(sec61_loop, sec61_disturbed):
    coarse = simulate(sec61_loop[3], None, benchmark_disturbance(), h=0.004, T=10.0)
    fine = l2_gain_estimate(sec61_disturbed)
    assert abs(l2_gain_estimate(coarse) - fine) < 0.01 * fine


def test_trajectory_csv(tmp_path, sec61_loop):
    traj = simulate(sec61_loop[3], [1.0, 0.0], h=0.01, T=0.1)
    path = tmp_path / "traj.csv"
    write_trajectory_csv(traj, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,x1,x2,u1,z1,z2,w1"
    assert len(lines) == 1 + 11


def test_plots_are_deterministic(tmp_path, sec61_loop):
    traj = simulate(sec61_loop[3], [1.0, 0.0], h=0.01, T=0.5)
    plot_trajectory(traj, tmp_path / "a")
    plot_trajectory(traj, tmp_path / "b")
    for name in ("states.svg", "control.svg", "output.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    plot_gamma([0.3, 0.29, 0.285], tmp_path / "gamma.svg")
    assert (tmp_path / "gamma.svg").read_text().lstrip().startswith("<?xml")


# ---------------------------------------------------------------- functional and audit


def _window_const(c):
    c = np.asarray(c, dtype=float)
    return lambda th: np.tile(c, (np.size(th), 1))


def test_kf_zero_window(sec61_loop):
    ctx, _, cert, _ = sec61_loop
    assert kf_value(_window_const([0.0, 0.0]), cert, ctx.decomps, ctx.system.delays) == 0.0


def test_kf_constant_window_closed_form(sec61_loop, rng):
    ctx, _, cert, _ = sec61_loop
    n, nu = 2, 2
    F = rng.standard_normal((n, n))
    P1 = F @ F.T
    Q = [np.eye(n) * (i + 1) for i in range(nu)]
    R = [np.diag([0.5, 2.0]) * (i + 1) for i in range(nu)]
    zero = Certificate(P1, np.zeros_like(cert.P2), np.zeros_like(cert.P3), Q, R, None)
    c = np.array([0.7, -1.3])
    rr = np.diff([0.0, *ctx.system.delays])
    expected = c @ P1 @ c + sum(c @ (rr[i] * Q[i] + 0.5 * rr[i] ** 2 * R[i]) @ c for i in range(nu))
    got = kf_value(_window_const(c), zero, ctx.decomps, ctx.system.delays)
    assert got == pytest.approx(expected, rel=1e-12)


def test_kf_sample_window(sec61_loop):
    ctx, _, cert, _ = sec61_loop
    theta = np.linspace(-1.7, 0.0, 2001)
    X = np.stack([np.cos(theta), theta], axis=1)
    fn = lambda th: np.stack([np.cos(th), th], axis=-1)
    a = kf_value((theta, X), cert, ctx.decomps, ctx.system.delays)
    b = kf_value(fn, cert, ctx.decomps, ctx.system.delays)
    assert a == pytest.approx(b, rel=1e-5)
    with pytest.raises(WindowTooShort):
        kf_value((theta[theta > -1.0], X[theta > -1.0]), cert, ctx.decomps, ctx.system.delays)


def test_trajectory_window_bounds(sec61_loop):
    traj = simulate(sec61_loop[3], [1.0, 1.0], h=0.01, T=1.0)
    with pytest.raises(WindowTooShort):
        trajectory_window(traj, 2.0, 1.7)


def test_kf_decreases_without_disturbance(sec61_loop):
    ctx, _, cert, cl = sec61_loop
    traj = simulate(cl, [5.0, 3.0], h=0.002, T=6.0)
    v = kf_along(traj, np.linspace(0.0, 6.0, 61), cert, ctx.decomps, ctx.system.delays)
    assert np.all(np.diff(v) <= 1e-6 * max(1.0, v[0]))


def test_dissipation_audit_passes(sec61_loop, sec61_disturbed):
    ctx, _, cert, _ = sec61_loop
    report = check_dissipation(sec61_disturbed, ctx.supply, cert, ctx.decomps, ctx.system.delays)
    assert report.passed and len(report.times) == 51
    assert json.loads(json.dumps(report.to_json()))["violations"] == []


def test_dissipation_audit_catches_corruption(sec61_loop):
    ctx, _, cert, cl = sec61_loop
    traj = simulate(cl, [5.0, 3.0], h=0.004, T=4.0)
    bad = Certificate(-cert.P1, cert.P2, cert.P3, cert.Q, cert.R, cert.gamma)
    report = check_dissipation(traj, ctx.supply, bad, ctx.decomps, ctx.system.delays)
    assert not report.passed and report.violations[0]["excess"] > 0


# ---------------------------------------------------------------- properties


def test_integral_inequality_trials(rng):
    slacks = np.array([random_integral_inequality_trial(rng) for _ in range(100)])
    assert slacks.min() >= -1e-9


def test_integral_inequality_equality_case():
    # x in span f makes both bounds tight
    f = [lambda tau: np.vstack([np.ones_like(tau), tau])]
    g = [lambda tau: np.zeros((0, tau.size))]
    x = lambda tau: np.stack([1 + 2 * tau], axis=-1)
    lo, hi = integral_inequality_slack(x, [(-1.0, 0.0)], f, g, [np.eye(1)])
    assert abs(lo) < 1e-13 and abs(hi) < 1e-13


def test_kronecker_identities(rng):
    for _ in range(20):
        assert max(kronecker_identity_residuals(rng).values()) <= 1e-12


def test_least_squares_orthogonality(sec61):
    for dc in sec61[1].decomps:
        assert ls_orthogonality(dc) <= 1e-10
