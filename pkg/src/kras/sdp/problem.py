"""Semidefinite programs built from affine matrix expressions."""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

import numpy as np

from ..exceptions import DimensionMismatch, InfeasibleCertificate, SolverFailure
from .affine import AffineExpr, Variable, as_affine, bmat

__all__ = [
    "LmiBlock",
    "SdpProblem",
    "Solution",
    "SolverSettings",
    "solve",
    "frobenius_epigraph",
    "strict_margin",
    "get_backend",
    "register_backend",
]

STRICT_REL = 1e-8
AUDIT_TOL = 1e-7
RETRY_FACTOR = 10.0


def strict_margin(const: np.ndarray) -> float:
    """Margin ``1e-8 (1 + ||C0||_F)`` that realizes a strict inequality."""
    return STRICT_REL * (1.0 + float(np.linalg.norm(const)))


@dataclass(frozen=True)
class LmiBlock:
    """Linear matrix inequality ``expr > 0`` or ``expr < 0``.

    Parameters
    ----------
    expr : AffineExpr
        Symmetric affine expression.
    sense : str
        ``">"`` for positive (semi)definite, ``"<"`` for negative.
    strict : bool
        Strict inequalities are enforced with the margin of
        :func:`strict_margin`.
    name : str
        Label used in diagnostics.
    """

    expr: AffineExpr
    sense: str = ">"
    strict: bool = True
    name: str = ""

    def __post_init__(self):
        if self.sense not in (">", "<"):
            raise ValueError(f"sense must be '>' or '<', got {self.sense!r}")
        e = as_affine(self.expr)
        object.__setattr__(self, "expr", e)
        if e.shape[0] != e.shape[1]:
            raise DimensionMismatch(f"LMI {self.name!r} is not square: {e.shape}")
        if not e.is_symmetric(1e-9):
            raise DimensionMismatch(f"LMI {self.name!r} is not symmetric")

    @property
    def size(self) -> int:
        return self.expr.shape[0]

    def oriented(self) -> AffineExpr:
        """The expression that must be positive semidefinite."""
        return self.expr if self.sense == ">" else -self.expr

    @property
    def margin(self) -> float:
        return strict_margin(self.expr.const) if self.strict else 0.0

    def canonical(self) -> AffineExpr:
        """``F(x) = F0 + sum x_k F_k`` with the requirement ``F(x) >= 0``."""
        F = self.oriented()
        if self.strict:
            F = F - self.margin * np.eye(self.size)
        return F


@dataclass
class SdpProblem:
    """Minimize a linear objective subject to LMI constraints.

    Parameters
    ----------
    constraints : list of LmiBlock
    objective : AffineExpr or None
        ``1 x 1`` expression; ``None`` means a feasibility problem.
    extra_variables : list of Variable
        Variables to declare even if no constraint mentions them.
    """

    constraints: list
    objective: AffineExpr | None = None
    extra_variables: list = field(default_factory=list)

    def __post_init__(self):
        if self.objective is not None:
            self.objective = as_affine(self.objective)
            if self.objective.shape != (1, 1):
                raise DimensionMismatch("objective must be a scalar expression")
        seen = {}
        for v in self.extra_variables:
            seen.setdefault(v.name, v)
        for blk in self.constraints:
            for k in blk.expr.coeffs:
                seen.setdefault(k, blk.expr.variables[k])
        if self.objective is not None:
            for k in self.objective.coeffs:
                if k not in seen:
                    raise DimensionMismatch(f"objective references undeclared variable {k!r}")
        self.variables: dict = seen

    @property
    def offsets(self) -> dict:
        out, pos = {}, 0
        for name, v in self.variables.items():
            out[name] = (pos, pos + v.size)
            pos += v.size
        return out

    @property
    def n_params(self) -> int:
        return sum(v.size for v in self.variables.values())

    def flatten(self, expr: AffineExpr, as_svec: bool = False):
        """Dense coefficient form ``(C0, C)`` with ``C`` of shape ``(rows, cols, n_params)``."""
        r, c = expr.shape
        C = np.zeros((r, c, self.n_params))
        for name, (a, b) in self.offsets.items():
            if name in expr.coeffs:
                C[:, :, a:b] = expr.coeffs[name]
        return expr.const, C

    def objective_vector(self):
        if self.objective is None:
            return np.zeros(self.n_params), 0.0
        c0, C = self.flatten(self.objective)
        return C[0, 0, :].copy(), float(c0[0, 0])

    def canonical_blocks(self):
        """List of ``(F0, F)`` with ``F0 + F @ x >= 0`` for every constraint."""
        return [self.flatten(b.canonical()) for b in self.constraints]

    def unpack(self, x: np.ndarray) -> dict:
        vals = {}
        for name, (a, b) in self.offsets.items():
            vals[name] = self.variables[name].matrix_of(x[a:b])
        return vals


@dataclass
class Solution:
    """Result of :func:`solve`.

    Attributes
    ----------
    status : str
        ``"optimal"``, ``"infeasible"`` or ``"numerical-failure"``.
    values : dict
        Variable name to matrix value.
    objective : float
    residuals : dict
        Backend diagnostics such as primal and dual residuals and gap.
    margins : dict
        Smallest eigenvalue of every oriented constraint after substitution.
    """

    status: str
    values: dict
    objective: float
    residuals: dict = field(default_factory=dict)
    margins: dict = field(default_factory=dict)
    raw_status: str = ""

    def __getitem__(self, name):
        return self.values[name]


def _default_threads() -> int:
    try:
        return max(0, int(os.environ.get("KRAS_SOLVER_THREADS", "0")))
    except ValueError:
        return 0


@dataclass
class SolverSettings:
    """Backend settings.

    Attributes
    ----------
    tol : float
        Feasibility and gap tolerance.
    max_iter : int
        Interior-point iteration limit.
    threads : int
        Thread count, 0 lets the backend decide.  Defaults to the
        ``KRAS_SOLVER_THREADS`` environment variable.
    backend : str
        Registered backend name.
    verbose : bool
    max_tol : float
        When the backend stalls or its answer fails the eigenvalue audit,
        the solve is repeated with ``tol`` loosened tenfold per attempt up
        to this value.
    """

    tol: float = 1e-9
    max_iter: int = 200
    threads: int = field(default_factory=_default_threads)
    backend: str = "clarabel"
    verbose: bool = False
    max_tol: float = 1e-7


_BACKENDS: dict = {}


def register_backend(name: str, fn) -> None:
    """Register a conic backend.

    ``fn(c, blocks, settings)`` receives the objective vector and a list of
    ``(F0, F)`` canonical PSD blocks and returns ``(status, x, info)`` where
    ``status`` is one of ``"optimal"``, ``"almost-optimal"``,
    ``"infeasible"`` or ``"numerical-failure"``.
    """
    _BACKENDS[name] = fn


def get_backend(name: str):
    if name not in _BACKENDS:
        from . import clarabel_backend  # noqa: F401  (registers itself)
    if name not in _BACKENDS:
        raise KeyError(f"unknown SDP backend {name!r}")
    return _BACKENDS[name]


def _audit(problem: SdpProblem, values: dict) -> dict:
    margins = {}
    for i, blk in enumerate(problem.constraints):
        M = blk.oriented().value(values)
        lam = float(np.linalg.eigvalsh(0.5 * (M + M.T)).min()) if M.size else np.inf
        margins[blk.name or f"block{i}"] = lam
    return margins


def _audit_ok(problem: SdpProblem, margins: dict) -> bool:
    for i, blk in enumerate(problem.constraints):
        scale = 1.0 + float(np.linalg.norm(blk.expr.const))
        if margins[blk.name or f"block{i}"] < -AUDIT_TOL * scale:
            return False
    return True


def solve(problem: SdpProblem, settings: SolverSettings | None = None) -> Solution:
    """Solve an SDP and audit the result by substitution.

    Raises
    ------
    InfeasibleCertificate
        The backend proved primal infeasibility.
    SolverFailure
        Any other unsuccessful termination, or an optimal report that fails
        the eigenvalue audit.
    """
    settings = settings or SolverSettings()
    c, c0 = problem.objective_vector()
    blocks = problem.canonical_blocks()
    if problem.n_params == 0:
        values: dict = {}
        margins = _audit(problem, values)
        ok = all(np.linalg.eigvalsh(F0).min() >= 0 for F0, _ in blocks if F0.size)
        sol = Solution("optimal" if ok else "infeasible", values, c0, {}, margins, "constant")
        if not ok:
            raise InfeasibleCertificate("constant constraints are violated", sol)
        return sol
    backend = get_backend(settings.backend)
    tol = settings.tol
    while True:
        trial = replace(settings, tol=tol)
        status, x, info = backend(c, blocks, trial)
        info["tol_used"] = tol
        values = problem.unpack(x) if x is not None else {}
        margins = _audit(problem, values) if x is not None else {}
        obj = float(c @ x + c0) if x is not None else float("nan")
        raw = info.get("raw_status", status)
        if status == "optimal" and _audit_ok(problem, margins):
            return Solution("optimal", values, obj, info, margins, raw)
        if status == "infeasible":
            raise InfeasibleCertificate(f"backend reports infeasibility ({raw})",
                                        Solution("infeasible", values, obj, info, margins, raw))
        if tol * RETRY_FACTOR > settings.max_tol * (1.0 + 1e-9):
            break
        tol *= RETRY_FACTOR
    if status == "almost-optimal" and _audit_ok(problem, margins):
        return Solution("optimal", values, obj, info, margins, raw)
    sol = Solution("numerical-failure", values, obj, info, margins, raw)
    if status in ("optimal", "almost-optimal"):
        worst = min(margins, key=margins.get)
        raise SolverFailure(f"solution fails the eigenvalue audit on {worst!r} "
                            f"(min eigenvalue {margins[worst]:.3e}, backend status {raw})", sol)
    raise SolverFailure(f"backend terminated with status {raw}", sol)


def frobenius_epigraph(expr, anchor, weight: float = 1.0, name: str = "t"):
    """Epigraph of a weighted squared Frobenius distance.

    Parameters
    ----------
    expr : AffineExpr
        Matrix expression.
    anchor : array_like
        Constant matrix of the same shape.
    weight : float
        Positive weight ``w``.
    name : str
        Name of the new scalar variable.

    Returns
    -------
    t : Variable
        Scalar with ``t >= w ||expr - anchor||_F^2`` on the feasible set.
    block : LmiBlock
        ``[[t, sqrt(w) v^T], [sqrt(w) v, I]] >= 0`` with ``v = vec(expr - anchor)``.
    """
    if weight <= 0:
        raise ValueError("weight must be positive")
    expr = as_affine(expr)
    v = (expr - np.asarray(anchor, dtype=float).reshape(expr.shape)).vec() * float(np.sqrt(weight))
    t = Variable(name, (1, 1), symmetric=True)
    k = v.shape[0]
    M = bmat([[t, v.T], [v, np.eye(k)]])
    return t, LmiBlock(M, ">", strict=False, name=f"epigraph:{name}")
