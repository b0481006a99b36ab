"""Interval bases and exact factorization of distributed-delay kernels.

On each delay interval ``[-r_i, -r_{i-1}]`` the user supplies three
blocks of scalar functions:

``f``
    differentiable functions whose derivatives stay in ``span h``,
``varphi``
    functions that are factorized exactly but need not be differentiable,
``phi``
    functions that are only approximated in the least-squares sense.

They are stacked as ``h = [varphi; f]`` and ``g = [phi; h]``.  Every
kernel entry must lie in ``span g``; its coefficients are packed so that
``K(t) = Khat (g(t) kron I)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exceptions import LinearlyDependentBasis, NotClosedUnderDerivative, NotRepresentable
from .expr import ScalarExpr, as_expr, differentiate, evaluate, to_string
from .quad import DEFAULT_RTOL, GramianSet, integrate, interval_data

__all__ = [
    "IntervalBasis",
    "EdaDecomposition",
    "build_basis",
    "derive_M",
    "decompose_matrix",
    "eval_exprs",
    "reconstruct",
    "GRAMIAN_EIG_TOL",
    "M_RESIDUAL_TOL",
    "DECOMP_RESIDUAL_TOL",
]

GRAMIAN_EIG_TOL = 1e-10
M_RESIDUAL_TOL = 1e-16
DECOMP_RESIDUAL_TOL = 1e-12
_CHOP = 1e-10


def eval_exprs(exprs: Sequence[ScalarExpr], tau) -> np.ndarray:
    """Evaluate a list of expressions at an array of points, shape ``(len(exprs), N)``."""
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    if not exprs:
        return np.zeros((0, tau.size))
    return np.vstack([evaluate(e, tau) for e in exprs])


@dataclass(frozen=True)
class IntervalBasis:
    """Basis functions of one delay interval.

    Attributes
    ----------
    index : int
        Interval number ``i`` (1-based).
    interval : tuple of float
        ``(-r_i, -r_{i-1})``.
    f, varphi, phi : tuple of ScalarExpr
        The differentiable, factorized and approximated blocks.
    """

    index: int
    interval: tuple
    f: tuple
    varphi: tuple = ()
    phi: tuple = ()
    fprime: tuple = field(default=(), compare=False)

    @property
    def d(self) -> int:
        return len(self.f)

    @property
    def delta(self) -> int:
        return len(self.varphi)

    @property
    def mu(self) -> int:
        return len(self.phi)

    @property
    def varkappa(self) -> int:
        return self.d + self.delta

    @property
    def kappa(self) -> int:
        return self.varkappa + self.mu

    @property
    def length(self) -> float:
        return self.interval[1] - self.interval[0]

    def eval_g(self, tau) -> np.ndarray:
        """Values of ``g = [phi; varphi; f]``, shape ``(kappa, N)``."""
        return eval_exprs(self.phi + self.varphi + self.f, tau)

    def eval_h(self, tau) -> np.ndarray:
        """Values of ``h = [varphi; f]``, shape ``(varkappa, N)``."""
        return eval_exprs(self.varphi + self.f, tau)

    def eval_f(self, tau) -> np.ndarray:
        return eval_exprs(self.f, tau)

    def eval_fprime(self, tau) -> np.ndarray:
        return eval_exprs(self.fprime, tau)

    def to_dict(self) -> dict:
        return {
            "f": [to_string(e) for e in self.f],
            "varphi": [to_string(e) for e in self.varphi],
            "phi": [to_string(e) for e in self.phi],
        }


def _normalized_min_eig(G: np.ndarray) -> float:
    dg = np.diag(G).copy()
    if np.any(dg <= 0):
        return 0.0
    s = 1.0 / np.sqrt(dg)
    return float(np.linalg.eigvalsh(G * s[:, None] * s[None, :]).min())


def build_basis(f, varphi=(), phi=(), interval=(0.0, 1.0), index: int = 1,
                rel_tol: float = DEFAULT_RTOL) -> IntervalBasis:
    """Parse and validate the basis of one interval.

    Parameters
    ----------
    f : sequence of str or ScalarExpr
        Differentiable block, must be non-empty.
    varphi, phi : sequence of str or ScalarExpr
        Factorized and approximated blocks, possibly empty.
    interval : tuple of float
        ``(a, b)`` with ``a < b``.
    index : int
        Interval number used in messages.

    Returns
    -------
    IntervalBasis

    Raises
    ------
    LinearlyDependentBasis
        The normalized Gramian of ``g`` has an eigenvalue at or below
        ``1e-10``.
    """
    f = tuple(as_expr(e) for e in f)
    varphi = tuple(as_expr(e) for e in varphi)
    phi = tuple(as_expr(e) for e in phi)
    if not f:
        raise ValueError("the differentiable block f must contain at least one function")
    a, b = float(interval[0]), float(interval[1])
    if not a < b:
        raise ValueError(f"interval must satisfy a < b, got {interval}")
    basis = IntervalBasis(index=index, interval=(a, b), f=f, varphi=varphi, phi=phi,
                          fprime=tuple(differentiate(e) for e in f))
    G = integrate(lambda s: _outer(basis.eval_g(s)), basis.interval, rel_tol)
    lam = _normalized_min_eig(0.5 * (G + G.T))
    if lam <= GRAMIAN_EIG_TOL:
        raise LinearlyDependentBasis(
            f"basis functions of interval {index} are linearly dependent "
            f"(normalized Gramian eigenvalue {lam:.3e} <= {GRAMIAN_EIG_TOL:g})")
    return basis


def _outer(g):
    return np.einsum("in,jn->nij", g, g)


def _chop(C: np.ndarray, axis_scale: np.ndarray) -> np.ndarray:
    C = C.copy()
    C[np.abs(C) < _CHOP * axis_scale] = 0.0
    return C


def derive_M(basis: IntervalBasis, grams: GramianSet | None = None,
             rel_tol: float = DEFAULT_RTOL) -> np.ndarray:
    """Derivative coupling matrix ``M`` with ``f' = M h``.

    ``M`` is the least-squares projection ``(int f' h^T)(int h h^T)^-1``.
    Coefficients below ``1e-10`` relative to their row are set to zero.

    Raises
    ------
    NotClosedUnderDerivative
        If ``int |f' - M h|^2`` exceeds ``1e-16 int |f'|^2``.
    """
    if grams is None:
        grams = interval_data(basis, rel_tol)
    FH = integrate(lambda s: np.einsum("in,jn->nij", basis.eval_fprime(s), basis.eval_h(s)),
                   basis.interval, rel_tol)
    M = np.linalg.solve(grams.H, FH.T).T
    row_scale = np.maximum(np.abs(M).max(axis=1, keepdims=True), 1.0)
    M = _chop(M, row_scale)

    def sq(s):
        fp = basis.eval_fprime(s)
        r = fp - M @ basis.eval_h(s)
        return np.stack([np.sum(r * r, axis=0), np.sum(fp * fp, axis=0)], axis=1)

    res, ref = integrate(sq, basis.interval, rel_tol)
    if res > M_RESIDUAL_TOL * ref + 1e-300:
        raise NotClosedUnderDerivative(
            f"interval {basis.index}: derivatives of f are not in span[varphi; f] "
            f"(residual {res:.3e}, reference {ref:.3e}); add the missing derivative terms to varphi")
    return M


def decompose_matrix(kernel, basis: IntervalBasis, block_dim: int, grams: GramianSet | None = None,
                     rel_tol: float = DEFAULT_RTOL) -> np.ndarray:
    """Coefficient matrix ``Khat`` with ``K(t) = Khat (g(t) kron I_block_dim)``.

    Parameters
    ----------
    kernel : nested sequence of str, ScalarExpr, number or None
        ``rows x block_dim`` grid of scalar kernel entries.  ``None`` means zero.
    basis : IntervalBasis
    block_dim : int
        Column count of the kernel.
    grams : GramianSet, optional
        Precomputed moments of ``basis``.

    Returns
    -------
    ndarray
        Shape ``(rows, kappa * block_dim)``; column ``j * block_dim + c``
        holds the coefficient of ``g_j`` in entry ``(r, c)``.

    Raises
    ------
    NotRepresentable
        An entry is not in ``span g``; the message names the worst entry.
    """
    rows = len(kernel)
    entries = []
    for r, row in enumerate(kernel):
        if len(row) != block_dim:
            raise ValueError(f"kernel row {r} has {len(row)} entries, expected {block_dim}")
        for c, val in enumerate(row):
            entries.append(((r, c), as_expr(0.0 if val is None else val)))
    kappa = basis.kappa
    out = np.zeros((rows, kappa * block_dim))
    live = [(rc, e) for rc, e in entries if not (hasattr(e, "value") and e.value == 0.0)]
    if not live:
        return out
    if grams is None:
        grams = interval_data(basis, rel_tol)
    exprs = [e for _, e in live]
    Ga = integrate(lambda s: np.einsum("kn,en->nke", basis.eval_g(s), eval_exprs(exprs, s)),
                   basis.interval, rel_tol)
    C = np.linalg.solve(grams.G, Ga)  # kappa x E
    C = _chop(C, np.maximum(np.abs(C).max(axis=0, keepdims=True), 1e-300))

    def sq(s):
        a = eval_exprs(exprs, s)
        r = a - C.T @ basis.eval_g(s)
        return np.concatenate([r * r, a * a], axis=0).T

    both = integrate(sq, basis.interval, rel_tol)
    res, ref = both[: len(exprs)], both[len(exprs):]
    bad = res > DECOMP_RESIDUAL_TOL * ref + 1e-300
    if np.any(bad):
        k = int(np.argmax(np.where(ref > 0, res / np.maximum(ref, 1e-300), np.inf)))
        (r, c), e = live[k]
        raise NotRepresentable(
            f"interval {basis.index}: kernel entry ({r}, {c}) = {to_string(e)} is not in the span of the "
            f"basis (relative residual {res[k] / max(ref[k], 1e-300):.3e})")
    for k, ((r, c), _) in enumerate(live):
        out[r, np.arange(kappa) * block_dim + c] = C[:, k]
    return out


def reconstruct(coeff: np.ndarray, basis: IntervalBasis, block_dim: int, tau) -> np.ndarray:
    """Evaluate ``Khat (g(t) kron I)`` at points ``tau``, shape ``(N, rows, block_dim)``."""
    g = basis.eval_g(tau)  # kappa x N
    rows = coeff.shape[0]
    C = coeff.reshape(rows, basis.kappa, block_dim)
    return np.einsum("rkc,kn->nrc", C, g)


@dataclass(frozen=True)
class EdaDecomposition:
    """Decomposition data of one interval.

    Attributes
    ----------
    basis : IntervalBasis
    grams : GramianSet
    M : ndarray
        ``d x varkappa`` derivative coupling.
    A_hat, B_hat, C_hat, BB_hat : ndarray
        Packed coefficients of the state, input, output-state and
        output-input kernels.
    """

    basis: IntervalBasis
    grams: GramianSet
    M: np.ndarray
    A_hat: np.ndarray
    B_hat: np.ndarray
    C_hat: np.ndarray
    BB_hat: np.ndarray

    @property
    def E_norm(self) -> float:
        """Spectral norm of the approximation residual covariance."""
        return float(np.linalg.norm(self.grams.E, 2)) if self.grams.E.size else 0.0
