import numpy as np
import pytest
from numpy.polynomial import legendre

from kras.eda import build_basis
from kras.exceptions import NoConvergence, NotPositiveDefinite
from kras.quad import gl_panel_nodes, integrate, interval_data, inv_sqrt_pd, sqrt_pd


def test_integrate_constant():
    assert integrate(lambda s: np.ones_like(s), (0.0, 1.0)) == pytest.approx(1.0, abs=1e-15)


def test_integrate_hilbert_matrix():
    val = integrate(lambda s: np.stack([np.stack([s**0, s], -1), np.stack([s, s**2], -1)], -2), (0.0, 1.0))
    np.testing.assert_allclose(val, [[1, 0.5], [0.5, 1 / 3]], atol=1e-12, rtol=0)


def test_integrate_against_trapezoid_oracle():
    fn = lambda s: np.exp(np.sin(20 * s)) * np.sin(20 * s)
    s = np.linspace(-1.0, 0.0, 1_000_001)
    oracle = np.trapezoid(fn(s), s)
    # trapezoid error is O(h^2 f''), estimate it with Richardson extrapolation
    coarse = np.trapezoid(fn(s[::2]), s[::2])
    oracle = oracle + (oracle - coarse) / 3
    assert integrate(fn, (-1.0, 0.0)) == pytest.approx(oracle, abs=1e-11)


def test_integrate_no_convergence():
    with pytest.raises(NoConvergence):
        integrate(lambda s: np.sign(s - 1 / 3) * np.abs(s - 1 / 3) ** 0.1, (0.0, 1.0), max_levels=3)


def test_panel_nodes_integrate_polynomials_exactly():
    tau, w = gl_panel_nodes(-1.7, -1.0, 4)
    assert w.sum() == pytest.approx(0.7, abs=1e-15)
    assert float(w @ tau**9) == pytest.approx(((-1.0) ** 10 - (-1.7) ** 10) / 10, rel=1e-13)


def test_interval_data_trivial():
    gr = interval_data(build_basis(["1"], interval=(0, 1)))
    for X in (gr.F, gr.H, gr.T):
        np.testing.assert_allclose(X, [[1.0]], atol=1e-14)
    assert gr.E.shape == (0, 0) and gr.T_tilde.shape == (1, 0)


def test_shifted_legendre_is_orthonormal():
    exprs = []
    for k in range(3):
        # sqrt(2k+1) P_k(2t - 1) in the monomial basis
        c = legendre.leg2poly([0] * k + [1])
        poly = np.polynomial.Polynomial(c)(np.polynomial.Polynomial([-1, 2])) * np.sqrt(2 * k + 1)
        exprs.append(" + ".join(f"({v:.17g})*t^{j}" for j, v in enumerate(poly.coef)))
    gr = interval_data(build_basis(exprs, interval=(0, 1)))
    np.testing.assert_allclose(gr.F, np.eye(3), atol=1e-11)


def test_residual_covariance_two_ways(sec61):
    dc = sec61[1].decomps[0]
    gr, basis = dc.grams, dc.basis
    assert np.linalg.eigvalsh(gr.E).min() >= -1e-12
    tau, w = gl_panel_nodes(*basis.interval, 400)
    g = basis.eval_g(tau)
    phi, h = g[: gr.mu], g[gr.mu:]
    eps = phi - gr.Gamma @ np.linalg.solve(gr.H, h)
    oracle = (eps * w) @ eps.T
    np.testing.assert_allclose(gr.E, oracle, atol=1e-11 * np.abs(oracle).max())
    trace_formula = np.sum((phi**2) @ w) - np.trace(gr.Gamma @ np.linalg.solve(gr.H, gr.Gamma.T))
    assert np.trace(gr.E) == pytest.approx(trace_formula, abs=1e-10)


def test_gramian_block_consistency(sec61):
    for dc in sec61[1].decomps:
        gr = dc.grams
        np.testing.assert_allclose(gr.H, gr.G[gr.mu:, gr.mu:], atol=1e-13)
        np.testing.assert_allclose(gr.Gamma, gr.G[: gr.mu, gr.mu:], atol=1e-13)
        for X, R in ((gr.H, gr.sqrt_H), (gr.F, gr.sqrt_F)):
            assert np.linalg.norm(R @ R - X) <= 1e-11 * np.linalg.norm(X)
        assert gr.T.shape == (gr.kappa, gr.varkappa) and gr.T_tilde.shape == (gr.kappa, gr.mu)


def test_sqrt_pd_examples():
    np.testing.assert_allclose(sqrt_pd(np.eye(3)), np.eye(3))
    np.testing.assert_allclose(sqrt_pd(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]), atol=1e-15)
    H = np.array([[1, 0.5], [0.5, 1 / 3]])
    R = sqrt_pd(H)
    np.testing.assert_allclose(R @ R, H, atol=1e-12)
    np.testing.assert_allclose(inv_sqrt_pd(H) @ R, np.eye(2), atol=1e-12)


def test_sqrt_pd_rejects_indefinite():
    with pytest.raises(NotPositiveDefinite):
        sqrt_pd(np.diag([1.0, -0.5]))
    np.testing.assert_allclose(sqrt_pd(np.diag([1.0, -1e-14])), np.diag([1.0, 0.0]))
