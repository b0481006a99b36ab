"""Property harnesses: the integral inequality, Kronecker identities and substitution checks.

Each function returns plain numbers so that test suites and the CLI can
apply their own thresholds.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import block_diag

from ..quad import gl_panel_nodes

__all__ = [
    "integral_inequality_slack",
    "random_integral_inequality_trial",
    "kronecker_identity_residuals",
    "ls_orthogonality",
    "bilinear_margins",
    "random_small_system",
    "overestimate_soundness_trial",
]


def _random_psd(rng, n, rank=None):
    rank = n if rank is None else rank
    F = rng.standard_normal((n, rank))
    return F @ F.T


def integral_inequality_slack(x, intervals, f, g, X, weight=None, panels: int = 32):
    """Slacks of the two-sided lower bound on ``sum_i int w x^T X_i x``.

    Parameters
    ----------
    x : callable
        ``tau -> (N, n)``.
    intervals : list of (a, b)
    f, g : list of callable
        ``f[i](tau) -> (l_i, N)`` and ``g[i](tau) -> (lambda_i, N)``;
        ``g[i]`` may return zero rows.
    X : list of ndarray
        Positive semidefinite weights.
    weight : callable, optional
        Nonnegative weight ``w(tau)``; ``1`` by default.
    panels : int
        Gauss-Legendre panels per interval.

    Returns
    -------
    (float, float)
        ``lhs - middle`` and ``middle - rhs``, both nonnegative in exact
        arithmetic.  ``middle`` adds the residual projection of ``g`` onto
        the span of ``f``.
    """
    lhs = rhs = mid_extra = 0.0
    for (a, b), fi, gi, Xi in zip(intervals, f, g, X):
        tau, wq = gl_panel_nodes(a, b, panels)
        if weight is not None:
            wq = wq * weight(tau)
        xv = np.asarray(x(tau), dtype=float)
        F = np.atleast_2d(fi(tau))
        G = np.asarray(gi(tau), dtype=float).reshape(-1, tau.size)
        lhs += float(np.einsum("N,Ni,ij,Nj->", wq, xv, Xi, xv))
        Fm = (F * wq) @ F.T
        Fx = np.einsum("lN,N,Nj->lj", F, wq, xv)  # int f x^T
        rhs += float(np.einsum("lj,lk,jk->", Fx, np.linalg.solve(Fm, Fx), Xi.T))
        if G.shape[0]:
            eps = G - ((G * wq) @ F.T) @ np.linalg.solve(Fm, F)
            Em = (eps * wq) @ eps.T
            Ex = np.einsum("lN,N,Nj->lj", eps, wq, xv)
            mid_extra += float(np.einsum("lj,lk,jk->", Ex, np.linalg.solve(Em, Ex), Xi.T))
    middle = rhs + mid_extra
    return lhs - middle, middle - rhs


def random_integral_inequality_trial(rng: np.random.Generator, n_max: int = 3, nu_max: int = 3):
    """One randomized instance of the integral inequality.

    The state is a random piecewise polynomial, ``f`` mixes Legendre
    polynomials with a random harmonic, ``g`` holds exponentials of random
    harmonics, the weights ``X_i`` are random (possibly singular) PSD
    matrices and half the trials use a nonnegative weight function.

    Returns
    -------
    (float, float)
        The two slacks of :func:`integral_inequality_slack`.
    """
    n = int(rng.integers(1, n_max + 1))
    nu = int(rng.integers(1, nu_max + 1))
    edges = np.concatenate([[0.0], np.cumsum(rng.uniform(0.3, 1.5, nu))])
    intervals = [(-edges[i + 1], -edges[i]) for i in range(nu)]
    breaks = np.sort(rng.uniform(-edges[-1], 0.0, int(rng.integers(0, 4))))
    pieces = [rng.standard_normal((int(rng.integers(1, 5)), n)) for _ in range(breaks.size + 1)]

    def x(tau):
        k = np.searchsorted(breaks, tau)
        out = np.zeros((tau.size, n))
        for j, c in enumerate(pieces):
            sel = k == j
            out[sel] = np.polynomial.polynomial.polyval(tau[sel], c).T
        return out

    f, g, X = [], [], []
    for (a, b) in intervals:
        deg = int(rng.integers(0, 4))
        om = rng.uniform(1.0, 15.0)
        mid, half = 0.5 * (a + b), 0.5 * (b - a)

        def fi(tau, deg=deg, om=om, mid=mid, half=half):
            s = (tau - mid) / half
            rows = [np.polynomial.legendre.Legendre.basis(k)(s) for k in range(deg + 1)]
            return np.vstack(rows + [np.sin(om * tau)])

        lam = int(rng.integers(0, 3))
        oms = rng.uniform(1.0, 20.0, lam)

        def gi(tau, oms=oms):
            return np.vstack([np.exp(np.sin(o * tau)) for o in oms]) if oms.size else np.zeros((0, tau.size))

        f.append(fi)
        g.append(gi)
        X.append(_random_psd(rng, n, int(rng.integers(1, n + 1))))
    weight = None if rng.random() < 0.5 else (lambda tau, c=rng.uniform(0.1, 2.0): c + np.cos(3 * tau) ** 2)
    return integral_inequality_slack(x, intervals, f, g, X, weight)


def _blk(mats):
    return np.hstack(mats)


def kronecker_identity_residuals(rng: np.random.Generator) -> dict:
    """Largest absolute residual of each block/Kronecker identity on random data."""
    res = {}
    m, k, q, r, s = (int(v) for v in rng.integers(1, 5, 5))
    X = rng.standard_normal((m, k))
    Y = rng.standard_normal((k, s))
    Z = rng.standard_normal((q, r))
    lhs = np.kron(X, np.eye(q)) @ np.kron(Y, Z)
    cands = [np.kron(X @ Y, Z), np.kron(X, Z) @ np.kron(Y, np.eye(r)), np.kron(np.eye(m), Z) @ np.kron(X @ Y, np.eye(r))]
    res["A.1"] = max(np.abs(lhs - c).max() for c in cands)

    A, B = rng.standard_normal((2, 3)), rng.standard_normal((2, 2))
    C, D = rng.standard_normal((1, 3)), rng.standard_normal((1, 2))
    W = rng.standard_normal((q, r))
    big = np.kron(np.block([[A, B], [C, D]]), W)
    blocks = np.block([[np.kron(A, W), np.kron(B, W)], [np.kron(C, W), np.kron(D, W)]])
    nn = int(rng.integers(1, 5))
    res["A.2"] = max(np.abs(big - blocks).max(), np.abs(np.kron(np.eye(nn), W) - block_diag(*[W] * nn)).max())

    count = int(rng.integers(1, 5))
    rows = int(rng.integers(1, 4))
    dims_v = rng.integers(1, 4, count)
    inner = rng.integers(1, 4, count)
    Xs = [rng.standard_normal((rows, dv)) for dv in dims_v]
    Ys = [rng.standard_normal((rows, di)) for di in inner]
    Zs = [rng.standard_normal((di, dv)) for di, dv in zip(inner, dims_v)]
    vs = [rng.standard_normal(dv) for dv in dims_v]
    v = np.concatenate(vs)
    direct = sum((Xi + Yi @ Zi) @ vi for Xi, Yi, Zi, vi in zip(Xs, Ys, Zs, vs))
    stacked = _blk(Xs) @ v + _blk(Ys) @ block_diag(*Zs) @ v
    res["A.3"] = np.abs(direct - stacked).max()

    extra = rng.standard_normal(int(rng.integers(1, 4)))
    direct = sum(Yi @ Zi @ vi for Yi, Zi, vi in zip(Ys, Zs, vs))
    lhs4 = np.hstack([_blk(Ys), np.zeros((rows, extra.size))]) @ block_diag(block_diag(*Zs), np.zeros((extra.size,) * 2))
    res["A.4"] = np.abs(direct - lhs4 @ np.concatenate([v, extra])).max()

    Ysq = [rng.standard_normal((int(a), int(b))) for a, b in zip(rng.integers(1, 4, count), inner)]
    Zcol = [rng.standard_normal((int(b), 2)) for b in inner]
    res["A.5"] = np.abs(np.vstack([Yi @ Zi for Yi, Zi in zip(Ysq, Zcol)]) - block_diag(*Ysq) @ np.vstack(Zcol)).max()

    nI = int(rng.integers(1, 4))
    Zs2 = [rng.standard_normal((b, int(c))) for b, c in zip(inner, rng.integers(1, 4, count))]
    lhs6 = np.kron(block_diag(*[Yi @ Zi for Yi, Zi in zip(Ysq, Zs2)]), np.eye(nI))
    mid6 = np.kron(block_diag(*Ysq) @ block_diag(*Zs2), np.eye(nI))
    fac6 = block_diag(*[np.kron(Yi, np.eye(nI)) for Yi in Ysq]) @ block_diag(*[np.kron(Zi, np.eye(nI)) for Zi in Zs2])
    res["A.6"] = max(np.abs(lhs6 - mid6).max(), np.abs(lhs6 - fac6).max())
    return {k: float(v) for k, v in res.items()}


def ls_orthogonality(decomp, panels: int = 64) -> float:
    """``||int eps h^T||_max`` for the least-squares residual of ``phi`` on ``h``."""
    basis, grams = decomp.basis, decomp.grams
    if grams.mu == 0:
        return 0.0
    coef = np.linalg.solve(grams.H, grams.Gamma.T)
    tau, w = gl_panel_nodes(*basis.interval, panels)
    g = basis.eval_g(tau)
    mu = grams.mu
    eps = g[:mu] - coef.T @ g[mu:]
    return float(np.abs((eps * w) @ g[mu:].T).max())


def bilinear_margins(bold, supply, values: dict) -> dict:
    """Minimum eigenvalues of the oriented blocks of the bilinear condition at ``values``.

    ``values`` holds ``P1, P2, P3, Q1.., R1.., gamma`` and the gains keyed
    like :func:`kras.assemble.gain_variables`.  Every margin is positive
    exactly when the substituted point satisfies the condition.
    """
    from ..assemble import gain_variables, lmi_analysis

    gains = {k: values[k] for k in gain_variables(bold)}
    prog = lmi_analysis(bold, supply, fixing="K", gains=gains)
    out = {}
    for blk in prog.constraints:
        M = blk.oriented().value(values)
        out[blk.name] = float(np.linalg.eigvalsh(0.5 * (M + M.T)).min())
    return out


def random_small_system(rng: np.random.Generator):
    """Random two-state, one-interval system with an affine kernel.

    ``A_0`` is Hurwitz so that the zero gain is a stabilizing anchor.

    Returns
    -------
    (DelaySystem, list of dict)
        The system and its basis ``f = [1, t]``.
    """
    from ..system import DelaySystem

    n = 2
    A0 = -1.5 * np.eye(n) + 0.3 * rng.standard_normal((n, n))
    kernel = [[f"{a:.6f} + {b:.6f}*t" for a, b in zip(*rng.uniform(-0.2, 0.2, (2, n)))] for _ in range(n)]
    system = DelaySystem(
        n=n, m=1, p=1, q=1, delays=(float(rng.uniform(0.4, 1.2)),),
        A=[A0, 0.2 * rng.standard_normal((n, n))],
        B=[rng.standard_normal((n, 1))],
        C=[0.3 * rng.standard_normal((1, n))],
        BB=[np.array([[0.1]])],
        D1=0.3 * rng.standard_normal((n, 1)),
        D2=np.array([[0.1]]),
        kernels=[{"A": kernel}],
    )
    return system, [{"f": ["1", "t"]}]


def overestimate_soundness_trial(rng: np.random.Generator, z: float = 0.5) -> float:
    """Solve the convex overestimate around a random anchor and substitute into the bilinear condition.

    The anchor gain is small and random, certified with the gain fixed;
    the overestimate is then minimized over all unknowns, gains included.

    Returns
    -------
    float
        Smallest eigenvalue margin of the bilinear condition at the new
        solution (nonnegative up to solver accuracy when the overestimate
        is sound).
    """
    from ..assemble import lmi_overestimate
    from ..exceptions import Infeasible
    from ..sdp import SdpProblem, solve
    from ..synth import ControllerGains, prepare, refine_fixed_K

    for _ in range(10):
        ctx = prepare(*random_small_system(rng))
        anchor = ControllerGains.static(0.1 * rng.standard_normal((1, ctx.system.n)))
        try:
            cert = refine_fixed_K(ctx, anchor)
        except Infeasible:
            continue
        prog = lmi_overestimate(ctx.bold, ctx.supply, cert.P1, cert.P2, anchor.as_dict(), z * np.eye(ctx.system.n))
        sol = solve(SdpProblem(prog.constraints, prog.objective), ctx.settings)
        return min(bilinear_margins(ctx.bold, ctx.supply, sol.values).values())
    raise RuntimeError("no certifiable anchor in 10 random draws")
