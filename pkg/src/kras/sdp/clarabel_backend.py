"""Conic backend binding for the Clarabel interior-point solver."""

from __future__ import annotations

import time

import clarabel
import numpy as np
import scipy.sparse as sp

from .problem import register_backend

__all__ = ["svec_indices", "solve_clarabel"]

_SQRT2 = np.sqrt(2.0)


def svec_indices(n: int):
    """Row/column indices and scale of the upper-triangular column-major ``svec``."""
    rows, cols = [], []
    for j in range(n):
        for i in range(j + 1):
            rows.append(i)
            cols.append(j)
    rows = np.asarray(rows, dtype=int)
    cols = np.asarray(cols, dtype=int)
    scale = np.where(rows == cols, 1.0, _SQRT2)
    return rows, cols, scale


# Setting changes tried in order when the default run breaks down.  Ruiz
# equilibration occasionally produces a singular first KKT system on the
# block-structured problems assembled here.
_FALLBACKS = (
    {},
    {"equilibrate_enable": False},
    {"static_regularization_constant": 1e-6},
)
_RETRYABLE = {"NumericalError", "InsufficientProgress", "MaxIterations"}

_STATUS = {
    "Solved": "optimal",
    "AlmostSolved": "almost-optimal",
    "PrimalInfeasible": "infeasible",
    "AlmostPrimalInfeasible": "infeasible",
}


def solve_clarabel(c, blocks, settings):
    """Solve ``min c^T x`` subject to ``F0_j + F_j x >= 0`` for all blocks."""
    nvar = c.size
    A_parts, b_parts, cones = [], [], []
    for F0, F in blocks:
        n = F0.shape[0]
        if n == 0:
            continue
        r, cc, s = svec_indices(n)
        b_parts.append(F0[r, cc] * s)
        A_parts.append(-(F[r, cc, :] * s[:, None]))
        cones.append(clarabel.PSDTriangleConeT(n))
    A = sp.csc_matrix(np.vstack(A_parts))
    A.eliminate_zeros()
    b = np.concatenate(b_parts)
    P = sp.csc_matrix((nvar, nvar))
    c = np.asarray(c, dtype=float)
    t0 = time.perf_counter()
    for attempt, tweaks in enumerate(_FALLBACKS):
        st = clarabel.DefaultSettings()
        st.verbose = bool(settings.verbose)
        st.max_iter = int(settings.max_iter)
        st.tol_feas = float(settings.tol)
        st.tol_gap_abs = float(settings.tol)
        st.tol_gap_rel = float(settings.tol)
        if settings.threads:
            st.max_threads = int(settings.threads)
        for key, value in tweaks.items():
            setattr(st, key, value)
        res = clarabel.DefaultSolver(P, c, A, b, cones, st).solve()
        raw = str(res.status).split(".")[-1]
        if raw not in _RETRYABLE:
            break
    status = _STATUS.get(raw, "numerical-failure")
    info = {
        "raw_status": raw,
        "iterations": int(res.iterations),
        "primal_residual": float(res.r_prim),
        "dual_residual": float(res.r_dual),
        "gap": float(abs(res.obj_val - res.obj_val_dual)),
        "seconds": time.perf_counter() - t0,
        "attempt": attempt,
    }
    x = np.asarray(res.x, dtype=float)
    return status, x, info


register_backend("clarabel", solve_clarabel)
