"""Quadrature over delay intervals and the moment matrices of an interval basis.

All integrals are computed with composite 15-point Gauss--Legendre panels
and dyadic panel refinement.  The moment matrices describe the
least-squares projection of the approximated block ``phi`` onto the span
of ``h = [varphi; f]`` together with the residual covariance ``E``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .exceptions import NoConvergence, NotPositiveDefinite

__all__ = ["integrate", "sqrt_pd", "inv_sqrt_pd", "GramianSet", "interval_data", "gl_panel_nodes"]

DEFAULT_RTOL = 1e-13
MAX_LEVELS = 20
ORDER = 15


@lru_cache(maxsize=None)
def _gl(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gl_panel_nodes(a: float, b: float, panels: int, order: int = ORDER):
    """Nodes and weights of the composite Gauss--Legendre rule on ``[a, b]``.

    Parameters
    ----------
    a, b : float
        Interval end points.
    panels : int
        Number of equal panels.
    order : int
        Points per panel.

    Returns
    -------
    nodes, weights : ndarray
        Flat arrays of length ``panels * order``.
    """
    x, w = _gl(order)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def integrate(fn: Callable[[np.ndarray], np.ndarray], interval, rel_tol: float = DEFAULT_RTOL,
              max_levels: int = MAX_LEVELS, min_level: int = 1):
    """Integrate a vectorized matrix-valued function over an interval.

    Parameters
    ----------
    fn : callable
        Maps a 1-D array of ``N`` points to an array of shape ``(N, ...)``.
    interval : tuple of float
        ``(a, b)`` with ``a <= b``.
    rel_tol : float
        Successive dyadic estimates must agree to ``rel_tol`` relative to
        the largest entry of the estimate.
    max_levels : int
        Maximum number of refinements.
    min_level : int
        Refinement level of the first estimate (``2**min_level`` panels).

    Returns
    -------
    ndarray or float

    Raises
    ------
    NoConvergence
        If the estimates do not settle within ``max_levels`` refinements.
    """
    a, b = float(interval[0]), float(interval[1])
    if a == b:
        probe = np.asarray(fn(np.array([a])))
        return np.zeros(probe.shape[1:]) if probe.ndim > 1 else 0.0

    def estimate(level):
        nodes, weights = gl_panel_nodes(a, b, 2 ** level)
        vals = np.asarray(fn(nodes), dtype=float)
        return np.tensordot(weights, vals, axes=(0, 0))

    prev = estimate(min_level)
    for level in range(min_level + 1, min_level + max_levels + 1):
        cur = estimate(level)
        scale = max(float(np.max(np.abs(cur))) if np.size(cur) else 0.0, 1e-300)
        if np.all(np.abs(cur - prev) <= rel_tol * scale):
            return cur if np.ndim(cur) else float(cur)
        prev = cur
    raise NoConvergence(f"quadrature on [{a}, {b}] did not reach rel_tol={rel_tol} in {max_levels} levels")


def _sym(X):
    X = np.asarray(X, dtype=float)
    return 0.5 * (X + X.T)


def sqrt_pd(X, clamp_tol: float = 1e-9):
    """Symmetric positive semidefinite square root.

    Negative eigenvalues are clamped to zero.  An eigenvalue below
    ``-clamp_tol * ||X||`` raises :class:`NotPositiveDefinite`.
    """
    X = _sym(X)
    if X.size == 0:
        return X.copy()
    lam, U = np.linalg.eigh(X)
    norm = np.linalg.norm(X, 2)
    if lam.min() < -clamp_tol * max(norm, 1e-300):
        raise NotPositiveDefinite(f"matrix has eigenvalue {lam.min():.3e} (norm {norm:.3e})")
    lam = np.clip(lam, 0.0, None)
    return _sym((U * np.sqrt(lam)) @ U.T)


def inv_sqrt_pd(X, rcond: float = 0.0):
    """Inverse (or pseudo-inverse) of the symmetric square root.

    Eigenvalues at or below ``rcond * max eigenvalue`` are treated as zero
    and mapped to zero, which gives the Moore--Penrose pseudo-root.
    """
    X = _sym(X)
    if X.size == 0:
        return X.copy()
    lam, U = np.linalg.eigh(X)
    cut = rcond * max(lam.max(), 0.0)
    inv = np.zeros_like(lam)
    keep = lam > cut
    if rcond == 0.0 and not np.all(keep):
        raise NotPositiveDefinite("matrix is singular, its inverse root does not exist")
    inv[keep] = 1.0 / np.sqrt(lam[keep])
    return _sym((U * inv) @ U.T)


@dataclass(frozen=True)
class GramianSet:
    """Moment matrices of one interval basis ``g = [phi; varphi; f]``.

    Attributes
    ----------
    G : ndarray
        ``int g g^T`` (kappa x kappa).
    H : ndarray
        ``int h h^T`` with ``h = [varphi; f]``.
    Gamma : ndarray
        ``int phi h^T`` (mu x varkappa).
    E : ndarray
        Residual covariance of the least-squares approximation of ``phi``.
    F : ndarray
        ``int f f^T``.
    sqrt_H, sqrt_H_inv, sqrt_F, sqrt_F_inv, sqrt_E : ndarray
        Symmetric square roots and inverse roots.
    T : ndarray
        ``[Gamma sqrt(H)^-1; sqrt(H)]`` (kappa x varkappa).
    T_tilde : ndarray
        ``[sqrt(E); 0]`` (kappa x mu).
    """

    G: np.ndarray
    H: np.ndarray
    Gamma: np.ndarray
    E: np.ndarray
    F: np.ndarray
    sqrt_H: np.ndarray
    sqrt_H_inv: np.ndarray
    sqrt_F: np.ndarray
    sqrt_F_inv: np.ndarray
    sqrt_E: np.ndarray
    T: np.ndarray
    T_tilde: np.ndarray

    @property
    def mu(self) -> int:
        return self.E.shape[0]

    @property
    def varkappa(self) -> int:
        return self.H.shape[0]

    @property
    def d(self) -> int:
        return self.F.shape[0]

    @property
    def kappa(self) -> int:
        return self.G.shape[0]


def _check_pd(X, name, tol=0.0):
    if X.size == 0:
        return
    lam = np.linalg.eigvalsh(_sym(X))
    if lam.min() <= tol * max(lam.max(), 1e-300):
        raise NotPositiveDefinite(f"{name} is not positive definite (min eigenvalue {lam.min():.3e})")


def interval_data(basis, rel_tol: float = DEFAULT_RTOL) -> GramianSet:
    """Compute every moment matrix of an interval basis.

    Parameters
    ----------
    basis : IntervalBasis
        Validated basis (see :func:`kras.eda.build_basis`).
    rel_tol : float
        Quadrature tolerance.

    Returns
    -------
    GramianSet
    """
    mu, kv, d = basis.mu, basis.varkappa, basis.d
    G = _sym(integrate(lambda s: _outer(basis.eval_g(s)), basis.interval, rel_tol))
    Gamma = G[:mu, mu:]
    H = G[mu:, mu:].copy()
    F = G[mu + basis.delta:, mu + basis.delta:].copy()
    _check_pd(G, "G")
    _check_pd(H, "int h h^T")
    _check_pd(F, "int f f^T")
    sqrt_H = sqrt_pd(H)
    sqrt_H_inv = inv_sqrt_pd(H)
    sqrt_F = sqrt_pd(F)
    sqrt_F_inv = inv_sqrt_pd(F)
    if mu:
        # integrate the residual directly, which avoids cancellation when phi is
        # approximated almost exactly
        coef = np.linalg.solve(H, Gamma.T)  # varkappa x mu

        def resid(s):
            g = basis.eval_g(s)
            eps = g[:mu] - coef.T @ g[mu:]
            return _outer(eps)

        E = _sym(integrate(resid, basis.interval, rel_tol))
        sqrt_E = sqrt_pd(E)
    else:
        E = np.zeros((0, 0))
        sqrt_E = np.zeros((0, 0))
    T = np.vstack([Gamma @ sqrt_H_inv, sqrt_H])
    T_tilde = np.vstack([sqrt_E, np.zeros((kv, mu))])
    return GramianSet(G=G, H=H, Gamma=Gamma.copy(), E=E, F=F, sqrt_H=sqrt_H, sqrt_H_inv=sqrt_H_inv,
                      sqrt_F=sqrt_F, sqrt_F_inv=sqrt_F_inv, sqrt_E=sqrt_E, T=T, T_tilde=T_tilde)


def _outer(g):
    # g: (k, N) -> (N, k, k)
    return np.einsum("in,jn->nij", g, g)
