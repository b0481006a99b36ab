"""Fixed-step time simulation of closed loops with pointwise and distributed delays."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exceptions import HistoryGap, ZeroInput
from .closed_loop import ClosedLoop

__all__ = ["Trajectory", "simulate", "l2_gain_estimate", "benchmark_disturbance", "constant_history"]


@dataclass
class Trajectory:
    """Samples on the uniform grid ``t_k = k h``, ``k >= -H``.

    ``t``, ``x`` cover the history segment ``[-r_nu, 0]`` and the horizon;
    ``u``, ``z``, ``w`` are defined for ``t >= 0`` only and are ``NaN`` on
    the history segment.
    """

    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    z: np.ndarray
    w: np.ndarray
    h: float
    start: int  # index of t = 0

    @property
    def future(self) -> slice:
        return slice(self.start, None)

    def interp(self, times) -> np.ndarray:
        """Cubic Lagrange interpolation of the state at ``times``.

        Raises
        ------
        HistoryGap
            A time lies outside the stored range.
        """
        times = np.asarray(times, dtype=float)
        tol = 1e-9 * self.h
        if times.size and (times.min() < self.t[0] - tol or times.max() > self.t[-1] + tol):
            raise HistoryGap(f"state requested on [{times.min():.6g}, {times.max():.6g}], "
                             f"stored range is [{self.t[0]:.6g}, {self.t[-1]:.6g}]")
        return _cubic(self.x, self.t[0], self.h, times, len(self.t) - 1, self.start)

    def to_csv(self, path) -> None:
        """Write ``t, x_1..x_n, u_1..u_p, z_1..z_m, w_1..w_q`` for ``t >= 0``."""
        s = self.future
        cols = [self.t[s, None], self.x[s], self.u[s], self.z[s], self.w[s]]
        names = (["t"] + [f"x{i + 1}" for i in range(self.x.shape[1])] + [f"u{i + 1}" for i in range(self.u.shape[1])]
                 + [f"z{i + 1}" for i in range(self.z.shape[1])] + [f"w{i + 1}" for i in range(self.w.shape[1])])
        np.savetxt(path, np.hstack(cols), delimiter=",", header=",".join(names), comments="", fmt="%.10g")


def _cubic(X, t0, h, times, last, first_future):
    """Interpolate rows of ``X`` (grid ``t0 + k h``, valid up to ``last``).

    Stencils never straddle index ``first_future`` from the right so that
    the derivative jump at ``t = 0`` does not pollute reads at ``t > 0``.
    """
    s = (times - t0) / h
    k = np.floor(s).astype(int)
    lo = np.where(k >= first_future, first_future, 0)
    base = np.clip(k - 1, lo, np.maximum(last - 3, lo))
    u = s - base
    w = np.stack([-(u - 1) * (u - 2) * (u - 3) / 6, u * (u - 2) * (u - 3) / 2,
                  -u * (u - 1) * (u - 3) / 2, u * (u - 1) * (u - 2) / 6], axis=-1)
    idx = np.clip(base[..., None] + np.arange(4), 0, last)
    return np.einsum("...k,...kn->...n", w, X[idx])


def benchmark_disturbance(amplitude: float = 50.0, frequency: float = 20 * np.pi, t_off: float = 5.0):
    """``w(t) = amplitude sin(frequency t)`` on ``[0, t_off)``, zero afterwards."""

    def w(t):
        t = np.asarray(t, dtype=float)
        return np.where((t >= 0) & (t < t_off), amplitude * np.sin(frequency * t), 0.0)[..., None]

    return w


def constant_history(value):
    value = np.atleast_1d(np.asarray(value, dtype=float))
    return lambda theta: np.broadcast_to(value, np.shape(theta) + value.shape).copy()


def _trapezoid_nodes(a, b, count):
    tau = np.linspace(a, b, count)
    w = np.full(count, (b - a) / (count - 1))
    w[0] *= 0.5
    w[-1] *= 0.5
    return tau, w


def simulate(cl: ClosedLoop, history=None, w=None, h: float = 0.002, T: float = 20.0,
             dd_points: int = 200) -> Trajectory:
    """Integrate the closed loop with classical Runge-Kutta 4.

    Parameters
    ----------
    cl : ClosedLoop
    history : callable or array_like, optional
        ``theta -> x(theta)`` on ``[-r_nu, 0]`` (vectorized, returns
        ``(N, n)``) or a constant vector; zero by default.
    w : callable, optional
        ``t -> w(t)`` returning ``(N, q)``; zero by default.
    h : float
        Step size.
    T : float
        Horizon.
    dd_points : int
        Trapezoid samples per distributed-delay interval.

    Returns
    -------
    Trajectory
    """
    if h <= 0 or T <= 0:
        raise ValueError("step and horizon must be positive")
    if dd_points < 16:
        raise ValueError("at least 16 trapezoid samples per interval are required")
    n, q = cl.n, cl.q
    if history is None:
        history = constant_history(np.zeros(n))
    elif not callable(history):
        history = constant_history(history)
    if w is None:
        w = lambda t: np.zeros(np.shape(t) + (q,))  # noqa: E731
    r = cl.r
    H = int(np.ceil(r[-1] / h - 1e-9)) + 3
    K = int(round(T / h))
    t = h * np.arange(-H, K + 1)
    X = np.zeros((H + K + 1, n))
    X[:H + 1] = history(t[:H + 1])
    X[H] = history(np.array([0.0]))[0]

    taus, KA, KC, KU = [], [], [], []
    for i in range(1, cl.nu + 1):
        a, b = cl.interval(i)
        tau, wt = _trapezoid_nodes(a, b, dd_points)
        taus.append(tau)
        KA.append(cl.kernel_A[i - 1](tau) * wt[:, None, None])
        KC.append(cl.kernel_C[i - 1](tau) * wt[:, None, None])
        KU.append(cl.kernel_u[i - 1](tau) * wt[:, None, None] if cl.kernel_u else None)
    tau_all = np.concatenate(taus) if taus else np.zeros(0)
    KA_all = np.concatenate(KA) if KA else np.zeros((0, n, n))
    zero_tau = np.isclose(tau_all, 0.0)
    delays = np.array(r[1:])

    def state_at(times, last, t_now, x_now):
        """States at ``times``; exact history for ``t <= 0`` and ``x_now`` at ``t_now``."""
        out = np.empty(times.shape + (n,))
        past = times <= 1e-12
        if np.any(times < t[0] - 1e-12):
            raise HistoryGap(f"state requested at t = {times.min():.6g} before the stored history")
        if past.any():
            out[past] = history(times[past])
        fut = ~past
        if fut.any():
            out[fut] = _cubic(X, t[0], h, times[fut], last, H)
        exact = np.isclose(times, t_now, atol=1e-12 * max(1.0, abs(t_now)))
        out[exact] = x_now
        return out

    def rhs(ts, xs, last):
        xd = state_at(ts - delays, last, ts, xs)
        dx = cl.A[0] @ xs + sum(A @ xd[i] for i, A in enumerate(cl.A[1:]))
        if tau_all.size:
            xq = state_at(ts + tau_all, last, ts, xs)
            xq[zero_tau] = xs
            dx = dx + np.einsum("qij,qj->i", KA_all, xq)
        return dx + cl.D1 @ w(np.array([ts]))[0]

    for k in range(K):
        idx = H + k
        tk = t[idx]
        xk = X[idx]
        k1 = rhs(tk, xk, idx)
        k2 = rhs(tk + h / 2, xk + h / 2 * k1, idx)
        k3 = rhs(tk + h / 2, xk + h / 2 * k2, idx)
        k4 = rhs(tk + h, xk + h * k3, idx)
        X[idx + 1] = xk + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)

    # outputs and control on t >= 0
    tf = t[H:]
    W = np.asarray(w(tf), dtype=float).reshape(tf.size, q)
    last = len(t) - 1

    def sample(times):
        out = np.empty(times.shape + (n,))
        past = times <= 1e-12
        if past.any():
            out[past] = history(times[past])
        if (~past).any():
            out[~past] = _cubic(X, t[0], h, times[~past], last, H)
        return out

    xd = np.stack([sample(tf - ri) for ri in r])  # (nu+1, N, n)
    Z = sum(np.einsum("ij,Nj->Ni", C, xd[i]) for i, C in enumerate(cl.C)) + W @ cl.D2.T
    p = cl.p
    U = np.zeros((tf.size, p))
    if cl.Ku:
        U = sum(np.einsum("ij,Nj->Ni", Ku, xd[i]) for i, Ku in enumerate(cl.Ku))
    for i, tau in enumerate(taus):
        xq = sample(tf[:, None] + tau[None, :])  # (N, P, n)
        Z = Z + np.einsum("qij,Nqj->Ni", KC[i], xq)
        if KU[i] is not None:
            U = U + np.einsum("qij,Nqj->Ni", KU[i], xq)
    pad = lambda A: np.vstack([np.full((H, A.shape[1]), np.nan), A])  # noqa: E731
    return Trajectory(t, X, pad(U), pad(Z), pad(W), h, H)


def l2_gain_estimate(traj: Trajectory) -> float:
    """``||z||_2 / ||w||_2`` over the horizon by trapezoidal quadrature.

    Raises
    ------
    ZeroInput
        The disturbance has zero energy.
    """
    s = traj.future
    tt = traj.t[s]
    ew = np.trapezoid(np.sum(traj.w[s] ** 2, axis=1), tt)
    if ew <= 0:
        raise ZeroInput("the disturbance has zero energy on the horizon")
    ez = np.trapezoid(np.sum(traj.z[s] ** 2, axis=1), tt)
    return float(np.sqrt(ez / ew))
