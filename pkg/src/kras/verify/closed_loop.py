"""Closed-loop systems under a synthesized controller."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..eda import EdaDecomposition, eval_exprs
from ..exceptions import DimensionMismatch
from ..system import DelaySystem

__all__ = ["ClosedLoop", "closed_loop"]


def _kernel_values(grid, tau) -> np.ndarray:
    """Evaluate a grid of expressions at ``tau``; shape ``(N, rows, cols)``."""
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    rows = len(grid)
    cols = len(grid[0]) if rows else 0
    flat = eval_exprs([e for row in grid for e in row], tau)
    return flat.T.reshape(tau.size, rows, cols)


@dataclass
class ClosedLoop:
    """Effective matrices and kernels of ``x' = f(x_t, w)``, ``z = g(x_t, w)``.

    Attributes
    ----------
    A, C : list of ndarray
        Effective pointwise matrices for ``r_0 = 0, r_1, ..., r_nu``.
    D1, D2 : ndarray
    delays : tuple
        ``(r_1, ..., r_nu)``.
    kernel_A, kernel_C : list of callable
        ``kernel_A[i](tau)`` returns the effective state kernel of interval
        ``i + 1`` at points ``tau`` with shape ``(N, n, n)``.
    Ku : list of ndarray
        Pointwise controller gains acting on ``x(t - r_i)``.
    kernel_u : list of callable
        Distributed controller kernels, ``(N, p, n)``.
    """

    A: list
    C: list
    D1: np.ndarray
    D2: np.ndarray
    delays: tuple
    kernel_A: list = field(default_factory=list)
    kernel_C: list = field(default_factory=list)
    Ku: list = field(default_factory=list)
    kernel_u: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.A[0].shape[0]

    @property
    def m(self) -> int:
        return self.C[0].shape[0]

    @property
    def q(self) -> int:
        return self.D1.shape[1]

    @property
    def p(self) -> int:
        return self.Ku[0].shape[0] if self.Ku else 0

    @property
    def nu(self) -> int:
        return len(self.delays)

    @property
    def r(self) -> tuple:
        return (0.0,) + tuple(self.delays)

    def interval(self, i: int) -> tuple:
        return (-self.r[i], -self.r[i - 1])

    @classmethod
    def from_matrices(cls, A, delays=(), C=None, D1=None, D2=None, kernels=None) -> "ClosedLoop":
        """Build directly from effective data (mainly for tests and oracles).

        ``kernels`` is an optional list of callables ``tau -> (N, n, n)``.
        """
        A = [np.atleast_2d(np.asarray(a, dtype=float)) for a in A]
        n = A[0].shape[0]
        delays = tuple(float(r) for r in delays)
        if len(A) != len(delays) + 1:
            raise DimensionMismatch("need one pointwise matrix per delay plus A_0")
        C = [np.zeros((1, n))] * len(A) if C is None else [np.atleast_2d(np.asarray(c, float)) for c in C]
        D1 = np.zeros((n, 1)) if D1 is None else np.atleast_2d(np.asarray(D1, float)).reshape(n, -1)
        D2 = np.zeros((C[0].shape[0], D1.shape[1])) if D2 is None else np.atleast_2d(np.asarray(D2, float))
        zero_n = lambda tau: np.zeros((np.size(tau), n, n))  # noqa: E731
        zero_c = lambda tau: np.zeros((np.size(tau), C[0].shape[0], n))  # noqa: E731
        kernels = list(kernels) if kernels is not None else [zero_n] * len(delays)
        return cls(A, C, D1, D2, delays, kernels, [zero_c] * len(delays))


def closed_loop(system: DelaySystem, gains=None, decomps: list | None = None) -> ClosedLoop:
    """Compose the plant with a controller.

    Parameters
    ----------
    system : DelaySystem
    gains : ControllerGains, optional
        ``None`` gives the open loop.
    decomps : list of EdaDecomposition, optional
        Needed in delayed mode to expand ``Kc_i (g_i kron I)``.
    """
    nu, n, p = system.nu, system.n, system.p
    if gains is None:
        Ku = [np.zeros((p, n))] * (nu + 1)
        Kc = [None] * nu
        static = True
    elif gains.mode == "static":
        Ku = [gains.K] + [np.zeros((p, n))] * nu
        Kc = [None] * nu
        static = True
    else:
        if decomps is None:
            raise ValueError("delayed-mode gains need the interval decompositions")
        Ku = list(gains.K_list)
        Kc = list(gains.Kc_list)
        static = False

    if static:
        K = Ku[0]
        A = [system.A[i] + system.B[i] @ K for i in range(nu + 1)]
        C = [system.C[i] + system.BB[i] @ K for i in range(nu + 1)]
    else:
        A = [system.A[i] + system.B[0] @ Ku[i] for i in range(nu + 1)]
        C = [system.C[i] + system.BB[0] @ Ku[i] for i in range(nu + 1)]

    def make(i):
        kern = system.kernels[i]
        K0 = Ku[0]

        def u_kernel(tau):
            tau = np.atleast_1d(np.asarray(tau, dtype=float))
            if Kc[i] is None:
                return np.zeros((tau.size, p, n))
            dc: EdaDecomposition = decomps[i]
            g = dc.basis.eval_g(tau)  # (kappa, N)
            blocks = Kc[i].reshape(p, dc.basis.kappa, n)
            return np.einsum("pkn,kN->Npn", blocks, g)

        def kA(tau):
            base = _kernel_values(kern["A"], tau)
            if static:
                return base + _kernel_values(kern["B"], tau) @ K0
            return base + system.B[0] @ u_kernel(tau)

        def kC(tau):
            base = _kernel_values(kern["C"], tau)
            if static:
                return base + _kernel_values(kern["BB"], tau) @ K0
            return base + system.BB[0] @ u_kernel(tau)

        return kA, kC, u_kernel

    made = [make(i) for i in range(nu)]
    return ClosedLoop(A, C, system.D1, system.D2, system.delays,
                      [m[0] for m in made], [m[1] for m in made], Ku, [m[2] for m in made])
