"""Krasovskii-functional evaluation and the integral dissipation audit."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from ..exceptions import WindowTooShort
from ..quad import gl_panel_nodes
from .simulate import Trajectory

__all__ = ["kf_value", "kf_along", "check_dissipation", "DissipationReport", "trajectory_window", "KF_PANELS"]

KF_PANELS = 16


def _as_window(window, r_max: float):
    """Normalize ``window`` to a callable ``theta -> (N, n)``."""
    if callable(window):
        return window
    theta, X = window
    theta = np.asarray(theta, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if theta.size < 2 or theta.min() > -r_max + 1e-12 or theta.max() < -1e-12:
        span = (float(theta.min()), float(theta.max())) if theta.size else (0.0, 0.0)
        raise WindowTooShort(f"window covers [{span[0]:.6g}, {span[1]:.6g}], need [{-r_max:.6g}, 0]")
    order = np.argsort(theta)
    theta, X = theta[order], X[order]
    return lambda s: np.stack([np.interp(s, theta, X[:, j]) for j in range(X.shape[1])], axis=-1)


def trajectory_window(traj: Trajectory, t: float, r_max: float):
    """State window ``theta -> x(t + theta)`` read from a trajectory.

    Raises
    ------
    WindowTooShort
        ``t - r_max`` lies before the stored history.
    """
    if t - r_max < traj.t[0] - 1e-12 or t > traj.t[-1] + 1e-12:
        raise WindowTooShort(f"window [{t - r_max:.6g}, {t:.6g}] is outside the stored range "
                             f"[{traj.t[0]:.6g}, {traj.t[-1]:.6g}]")
    return lambda theta: traj.interp(t + np.asarray(theta, dtype=float))


def kf_value(window, certificate, decomps, delays, panels: int = KF_PANELS) -> float:
    """Value of the Krasovskii functional on one state window.

    Parameters
    ----------
    window : callable or (theta, X)
        Either ``theta -> x(t + theta)`` on ``[-r_nu, 0]`` (vectorized,
        ``(N, n)``) or sample arrays ``theta`` (``N``) and ``X`` (``N x n``),
        linearly interpolated.
    certificate : Certificate
        ``P1, P2, P3, Q, R`` from a feasible solve.
    decomps : list of EdaDecomposition
        One per interval; ``sqrt_F_inv`` and ``f`` define the projections.
    delays : sequence of float
        ``r_1, ..., r_nu``.
    panels : int
        Gauss-Legendre panels per interval.

    Returns
    -------
    float

    Raises
    ------
    WindowTooShort
        Sample arrays do not cover ``[-r_nu, 0]``.
    """
    r = (0.0,) + tuple(float(d) for d in delays)
    fn = _as_window(window, r[-1])
    x0 = np.asarray(fn(np.array([0.0])), dtype=float)[0]
    n = x0.size
    proj, quad = [], 0.0
    for i, dc in enumerate(decomps):
        a, b = -r[i + 1], -r[i]
        tau, w = gl_panel_nodes(a, b, panels)
        X = np.asarray(fn(tau), dtype=float).reshape(tau.size, n)
        fv = dc.grams.sqrt_F_inv @ dc.basis.eval_f(tau)  # (d, N)
        proj.append(np.einsum("dN,N,Nj->dj", fv, w, X).reshape(-1))
        Q, R = certificate.Q[i], certificate.R[i]
        quad += float(np.einsum("N,Ni,ij,Nj->", w, X, Q, X) + np.einsum("N,N,Ni,ij,Nj->", w, tau + r[i + 1], X, R, X))
    eta = np.concatenate([x0] + proj)
    P = np.block([[certificate.P1, certificate.P2], [certificate.P2.T, certificate.P3]])
    return float(eta @ P @ eta) + quad


def kf_along(traj: Trajectory, times, certificate, decomps, delays, panels: int = KF_PANELS) -> np.ndarray:
    """``v(x_t)`` at each of ``times``."""
    r_max = float(max(delays))
    return np.array([kf_value(trajectory_window(traj, float(t), r_max), certificate, decomps, delays, panels)
                     for t in np.atleast_1d(times)])


@dataclass
class DissipationReport:
    """Outcome of :func:`check_dissipation`.

    ``margin[k] = int_0^t s - (v(x_t) - v(x_0)) + tol[k]``; a checkpoint is a
    violation when its margin is negative.
    """

    times: np.ndarray
    v: np.ndarray
    supply_integral: np.ndarray
    tol: np.ndarray
    violations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    @property
    def margin(self) -> np.ndarray:
        return self.supply_integral - (self.v - self.v[0]) + self.tol

    def to_json(self) -> dict:
        return {"passed": self.passed, "checkpoints": len(self.times),
                "violations": self.violations,
                "min_margin": float(self.margin[1:].min()) if len(self.times) > 1 else 0.0}


def check_dissipation(traj: Trajectory, supply, certificate, decomps, delays, gamma: float | None = None,
                      checkpoints: int = 50, rel_tol: float = 1e-4) -> DissipationReport:
    """Audit ``v(x_t) - v(x_0) <= int_0^t s(z, w) + tol`` along a trajectory.

    Parameters
    ----------
    traj : Trajectory
        From :func:`kras.verify.simulate.simulate`.
    supply : SupplyRate
    certificate : Certificate
    decomps : list of EdaDecomposition
    delays : sequence of float
    gamma : float, optional
        Performance level of the supply rate; defaults to ``certificate.gamma``.
    checkpoints : int
        Number of audit times, evenly spread over ``(0, T]``.
    rel_tol : float
        ``tol = rel_tol (1 + |int s|)``.

    Returns
    -------
    DissipationReport
    """
    gamma = certificate.gamma if gamma is None else gamma
    s = traj.future
    tt = traj.t[s]
    sv = supply.evaluate(traj.z[s], traj.w[s], gamma)
    S = cumulative_trapezoid(sv, tt, initial=0.0)
    idx = np.unique(np.linspace(0, tt.size - 1, checkpoints + 1).round().astype(int))
    times = tt[idx]
    v = kf_along(traj, times, certificate, decomps, delays)
    tol = rel_tol * (1.0 + np.abs(S[idx]))
    report = DissipationReport(times, v, S[idx], tol)
    margin = report.margin
    report.violations = [{"t": float(times[k]), "dv": float(v[k] - v[0]), "supply_integral": float(S[idx][k]),
                          "excess": float(-margin[k])} for k in range(1, len(times)) if margin[k] < 0]
    return report
