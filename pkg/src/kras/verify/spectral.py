"""Rightmost characteristic roots by pseudospectral collocation.

The generator of the solution semigroup acts on functions on
``[-r_nu, 0]`` as differentiation, with the domain condition that
``phi'(0)`` equals the right-hand side of the delay equation.  Each delay
interval is discretized by a Chebyshev polynomial of degree ``N``;
neighbouring pieces share their endpoint.  The distributed-delay term is
integrated by Clenshaw-Curtis quadrature of the kernel times the
interpolant.
"""

from __future__ import annotations

import numpy as np

from ..exceptions import NoConvergence
from .closed_loop import ClosedLoop

__all__ = ["spectral_abscissa", "rightmost_eigenvalues", "cheb", "clenshaw_curtis", "SA_TOL", "SA_CAP"]

SA_TOL = 1e-4
SA_CAP = 256


def cheb(N: int):
    """Chebyshev points ``cos(pi j / N)`` and the differentiation matrix on ``[-1, 1]``."""
    if N == 0:
        return np.array([1.0]), np.zeros((1, 1))
    x = np.cos(np.pi * np.arange(N + 1) / N)
    c = np.hstack([2.0, np.ones(N - 1), 2.0]) * (-1.0) ** np.arange(N + 1)
    dX = x[:, None] - x[None, :]
    D = np.outer(c, 1.0 / c) / (dX + np.eye(N + 1))
    D -= np.diag(D.sum(axis=1))
    return x, D


def clenshaw_curtis(N: int):
    """Nodes ``cos(pi j / N)`` and Clenshaw-Curtis weights on ``[-1, 1]``."""
    theta = np.pi * np.arange(N + 1) / N
    x = np.cos(theta)
    w = np.zeros(N + 1)
    ii = np.arange(1, N)
    v = np.ones(N - 1)
    if N % 2 == 0:
        w[0] = w[N] = 1.0 / (N**2 - 1)
        for k in range(1, N // 2):
            v -= 2.0 * np.cos(2 * k * theta[ii]) / (4 * k * k - 1)
        v -= np.cos(N * theta[ii]) / (N**2 - 1)
    else:
        w[0] = w[N] = 1.0 / N**2
        for k in range(1, (N - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * theta[ii]) / (4 * k * k - 1)
    w[ii] = 2.0 * v / N
    return x, w


def _generator(cl: ClosedLoop, N: int, quad_nodes: int) -> np.ndarray:
    n, nu = cl.n, cl.nu
    r = cl.r
    if nu == 0:
        return sum(cl.A)
    xc, Dc = cheb(N)
    xq, wq = clenshaw_curtis(quad_nodes)
    total = 1 + nu * N  # distinct nodes
    G = np.zeros((total * n, total * n))
    # first row block: the equation at theta = 0
    row0 = np.zeros((n, total * n))
    row0[:, :n] += cl.A[0]
    for i in range(1, nu + 1):
        a, b = -r[i], -r[i - 1]
        half = 0.5 * (b - a)
        # nodes of piece i, ordered from b (j = 0) to a (j = N)
        nodes = a + half * (xc + 1.0)
        first = (i - 1) * N
        cols = first + np.arange(N + 1)
        # derivative rows for nodes j = 1..N of this piece
        Dp = Dc / half
        for j in range(1, N + 1):
            G[(first + j) * n:(first + j + 1) * n, :] = np.kron(Dp[j], np.eye(n)) @ _select(cols, total, n)
        # pointwise delay r_i sits at the last node of piece i
        row0[:, (first + N) * n:(first + N + 1) * n] += cl.A[i]
        # distributed term: int_a^b K(s) p_i(s) ds
        s = a + half * (xq + 1.0)
        Ks = cl.kernel_A[i - 1](s) * (half * wq)[:, None, None]  # (M, n, n)
        L = _cheb_interp_matrix(N, xq)
        contrib = np.einsum("mab,mk->akb", Ks, L).reshape(n, (N + 1) * n)
        row0 += contrib @ _select(cols, total, n)
    G[:n, :] = row0
    return G


def _cheb_interp_matrix(N: int, y: np.ndarray) -> np.ndarray:
    """Barycentric interpolation from the points ``cos(pi j / N)`` to ``y``."""
    x = np.cos(np.pi * np.arange(N + 1) / N)
    w = (-1.0) ** np.arange(N + 1)
    w[0] *= 0.5
    w[-1] *= 0.5
    d = y[:, None] - x[None, :]
    exact = np.isclose(d, 0.0, atol=1e-15)
    d[exact] = 1.0
    L = w / d
    L /= L.sum(axis=1, keepdims=True)
    rows = exact.any(axis=1)
    L[rows] = exact[rows].astype(float)
    return L


def _select(cols, total, n):
    S = np.zeros((len(cols) * n, total * n))
    for k, c in enumerate(cols):
        S[k * n:(k + 1) * n, c * n:(c + 1) * n] = np.eye(n)
    return S


def rightmost_eigenvalues(cl: ClosedLoop, N: int = 32, count: int = 5, quad_nodes: int | None = None) -> np.ndarray:
    """Approximate rightmost roots of the characteristic equation."""
    if N < 8:
        raise ValueError("at least 8 collocation nodes per interval are required")
    quad_nodes = quad_nodes or max(4 * N, 256)
    lam = np.linalg.eigvals(_generator(cl, N, quad_nodes))
    return lam[np.argsort(-lam.real)][:count]


def spectral_abscissa(cl: ClosedLoop, N: int = 32, tol: float = SA_TOL, cap: int = SA_CAP) -> float:
    """Largest real part of the characteristic roots.

    The discretization is refined by doubling ``N`` until consecutive
    estimates agree to ``tol``.

    Raises
    ------
    NoConvergence
        Doubling would exceed ``cap`` nodes per interval; the message reports
        the last two estimates.
    """
    if N < 8:
        raise ValueError("at least 8 collocation nodes per interval are required")
    if cl.nu == 0:
        return float(np.linalg.eigvals(cl.A[0]).real.max())
    prev = prev_ = float(rightmost_eigenvalues(cl, N, 1)[0].real)
    while 2 * N <= cap:
        N *= 2
        cur = float(rightmost_eigenvalues(cl, N, 1)[0].real)
        if abs(cur - prev) < tol:
            return cur
        prev_, prev = prev, cur
    raise NoConvergence(f"spectral abscissa did not settle below {cap} nodes per interval "
                        f"(last estimates {prev_:.6f} and {prev:.6f})")
