"""Controller synthesis: convex initialization, alternation and the proximal loop."""

from __future__ import annotations

import csv
import io
import json
import logging
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .assemble import (
    BoldSet,
    _bold_P,
    bold_matrices,
    decompose_system,
    gain_variables,
    lmi_analysis,
    lmi_convex,
    lmi_overestimate,
)
from .exceptions import Infeasible, InfeasibleCertificate, SolverFailure
from .sdp import AffineExpr, SdpProblem, SolverSettings, bmat, frobenius_epigraph, solve
from .system import DelaySystem, SupplyRate

__all__ = [
    "SynthesisContext",
    "ControllerGains",
    "Certificate",
    "IterationRecord",
    "IterationLog",
    "prepare",
    "synth_convex",
    "refine_fixed_K",
    "refine_fixed_P",
    "iterate",
    "IterateParams",
]

log = logging.getLogger(__name__)


@dataclass
class SynthesisContext:
    """Everything the synthesis steps need about one problem instance."""

    system: DelaySystem
    supply: SupplyRate
    bold: BoldSet
    settings: SolverSettings = field(default_factory=SolverSettings)

    @property
    def mode(self) -> str:
        return self.system.mode

    @property
    def decomps(self) -> list:
        return self.bold.decomps


def prepare(system: DelaySystem, bases, supply: SupplyRate | None = None,
            settings: SolverSettings | None = None) -> SynthesisContext:
    """Decompose the kernels and assemble the block matrices."""
    supply = supply or SupplyRate.l2_gain(system.m, system.q)
    bold = bold_matrices(system, decompose_system(system, bases))
    return SynthesisContext(system, supply, bold, settings or SolverSettings())


@dataclass
class ControllerGains:
    """State-feedback gains.

    Static mode stores ``K`` (``p x n``).  Delayed mode stores
    ``K_0..K_nu`` (``p x n``) and ``Kc_1..Kc_nu`` (``p x kappa_i n``); the
    controller is ``u = sum K_i x(t-r_i) + sum int Kc_i (g_i(s) kron I) x(t+s) ds``.
    """

    mode: str
    K: np.ndarray | None = None
    K_list: list = field(default_factory=list)
    Kc_list: list = field(default_factory=list)

    def __post_init__(self):
        arrays = [self.K] if self.mode == "static" else list(self.K_list) + list(self.Kc_list)
        if self.mode == "static" and self.K is None:
            raise ValueError("static gains need K")
        for a in arrays:
            if not np.all(np.isfinite(a)):
                raise ValueError("controller gains must be finite")

    @classmethod
    def static(cls, K) -> "ControllerGains":
        return cls("static", K=np.atleast_2d(np.asarray(K, dtype=float)))

    @classmethod
    def from_values(cls, mode: str, values: dict, prefix: str = "K") -> "ControllerGains":
        if mode == "static":
            return cls.static(values[prefix])
        nu = sum(1 for k in values if k.startswith(prefix) and k[len(prefix):].isdigit()) - 1
        return cls("delayed", K_list=[np.asarray(values[f"{prefix}{i}"]) for i in range(nu + 1)],
                   Kc_list=[np.asarray(values[f"{prefix}c{i}"]) for i in range(1, nu + 1)])

    def as_dict(self, prefix: str = "K") -> dict:
        """Keyed like :func:`~kras.assemble.gain_variables`."""
        if self.mode == "static":
            return {prefix: self.K}
        out = {f"{prefix}{i}": K for i, K in enumerate(self.K_list)}
        out.update({f"{prefix}c{i}": K for i, K in enumerate(self.Kc_list, start=1)})
        return out

    def stacked(self) -> np.ndarray:
        """All gains side by side, ``[K]`` or ``[K_0 .. K_nu, Kc_1 .. Kc_nu]``."""
        if self.mode == "static":
            return self.K
        return np.hstack(list(self.K_list) + list(self.Kc_list))

    def to_json(self) -> dict:
        return {k: np.asarray(v).tolist() for k, v in self.as_dict().items()} | {"mode": self.mode}


def _stacked_expr(gains: dict, mode: str, prefix: str = "K") -> AffineExpr:
    if mode == "static":
        return gains[prefix]
    nu = sum(1 for k in gains if k[len(prefix):].isdigit()) - 1
    blocks = [gains[f"{prefix}{i}"] for i in range(nu + 1)] + [gains[f"{prefix}c{i}"] for i in range(1, nu + 1)]
    return bmat([blocks])


@dataclass
class Certificate:
    """Krasovskii-functional matrices certifying the supply-rate bound."""

    P1: np.ndarray
    P2: np.ndarray
    P3: np.ndarray
    Q: list
    R: list
    gamma: float | None

    @classmethod
    def from_values(cls, values: dict, nu: int, gamma: float | None) -> "Certificate":
        return cls(values["P1"], values["P2"], values["P3"],
                   [values[f"Q{i}"] for i in range(1, nu + 1)],
                   [values[f"R{i}"] for i in range(1, nu + 1)], gamma)

    def to_json(self) -> dict:
        return {"P1": self.P1.tolist(), "P2": self.P2.tolist(), "P3": self.P3.tolist(),
                "Q": [q.tolist() for q in self.Q], "R": [r.tolist() for r in self.R], "gamma": self.gamma}


def _objective_value(ctx: SynthesisContext, sol) -> float | None:
    return float(sol.values["gamma"][0, 0]) if ctx.supply.has_gamma else None


def _regularized(ctx: SynthesisContext, prog, prefix: str, anchor, weight: float):
    """Constraints and objective with an optional gain-size penalty."""
    objective = prog.gamma
    if weight <= 0:
        return prog.constraints, objective
    expr = _stacked_expr({k: prog.variables[k] for k in gain_variables(ctx.bold, prefix)}, ctx.mode, prefix)
    ref = np.zeros(expr.shape) if anchor is None else anchor.stacked()
    t, blk = frobenius_epigraph(expr, ref, weight, name=f"reg_{prefix}")
    return prog.constraints + [blk], t if objective is None else objective + t


def _solve(constraints, objective, settings, what: str):
    try:
        return solve(SdpProblem(constraints, objective), settings)
    except InfeasibleCertificate as exc:
        raise Infeasible(f"{what}: {exc}") from exc


GAIN_REG = 1e-6


def synth_convex(ctx: SynthesisContext, alpha=(5.0,), gain_reg: float = GAIN_REG):
    """Convex synthesis minimizing the supply-rate parameter.

    The objective is ``gamma + gain_reg ||V||_F^2`` where ``V`` stacks the
    gain numerators.  On problems whose infimum is only approached as the
    gain grows without bound, the small penalty keeps the gains finite and
    the solver well conditioned; ``gain_reg = 0`` disables it.

    Returns
    -------
    gains : ControllerGains
    gamma : float or None
    certificate : Certificate
        The transformed variables of the convex condition (they certify
        the gain only after the congruence; use :func:`refine_fixed_K` for
        a direct certificate).

    Raises
    ------
    Infeasible
        No gain was found under this parameterization.  This is not a
        proof that the system cannot be stabilized.
    """
    prog = lmi_convex(ctx.bold, ctx.supply, alpha)
    constraints, objective = _regularized(ctx, prog, "V", None, gain_reg)
    sol = _solve(constraints, objective, ctx.settings, "convex synthesis")
    Xinv = np.linalg.inv(sol.values["X"])
    V = {k: sol.values[k] for k in gain_variables(ctx.bold, prefix="V")}
    if ctx.mode == "static":
        gains = ControllerGains.static(V["V"] @ Xinv)
    else:
        nu = ctx.system.nu
        gains = ControllerGains(
            "delayed",
            K_list=[V[f"V{i}"] @ Xinv for i in range(nu + 1)],
            Kc_list=[V[f"Vc{i}"] @ np.kron(np.eye(k), Xinv) for i, k in enumerate(ctx.bold.kappas, start=1)],
        )
    gamma = _objective_value(ctx, sol)
    return gains, gamma, Certificate.from_values(sol.values, ctx.system.nu, gamma)


def refine_fixed_K(ctx: SynthesisContext, gains: ControllerGains) -> Certificate:
    """Certify fixed gains, minimizing the supply-rate parameter over the functional.

    Raises
    ------
    Infeasible
        The gains cannot be certified with this functional.
    """
    prog = lmi_analysis(ctx.bold, ctx.supply, "K", gains=gains.as_dict())
    try:
        sol = _solve(prog.constraints, prog.gamma, ctx.settings, "certification with fixed gains")
    except SolverFailure as exc:
        # An interior-point method often cannot separate an infeasible
        # instance from a numerical breakdown.  Feasibility implies
        # exponential stability, so a closed loop with a characteristic root
        # in the closed right half plane proves infeasibility.
        if exc.solution is None or not exc.solution.values:
            raise Infeasible(f"certification with fixed gains failed: {exc}") from exc
        from .verify import closed_loop, spectral_abscissa

        sa = spectral_abscissa(closed_loop(ctx.system, gains, ctx.decomps))
        if sa >= 0:
            raise Infeasible(f"the closed loop is not exponentially stable (spectral abscissa {sa:.4g}); "
                             "no certificate exists") from exc
        raise
    return Certificate.from_values(sol.values, ctx.system.nu, _objective_value(ctx, sol))


def refine_fixed_P(ctx: SynthesisContext, P1, P2, anchor: ControllerGains | None = None,
                   gain_reg: float = GAIN_REG):
    """Optimize the gains with ``(P1, P2)`` fixed.

    The objective is ``gamma + gain_reg ||K - anchor||_F^2``.  When
    ``(P1, P2)`` certify ``anchor`` with some ``gamma``, the returned
    ``gamma`` is therefore never larger.

    Returns
    -------
    gains : ControllerGains
    certificate : Certificate
    """
    prog = lmi_analysis(ctx.bold, ctx.supply, "P", P1=P1, P2=P2)
    constraints, objective = _regularized(ctx, prog, "K", anchor, gain_reg)
    sol = _solve(constraints, objective, ctx.settings, "gain update with fixed P1, P2")
    values = dict(sol.values, P1=np.asarray(P1), P2=np.asarray(P2))
    gains = ControllerGains.from_values(ctx.mode, sol.values)
    return gains, Certificate.from_values(values, ctx.system.nu, _objective_value(ctx, sol))


# ---------------------------------------------------------------------------
# proximal inner-convex loop

@dataclass
class IterateParams:
    """Parameters of the proximal loop.

    Attributes
    ----------
    rho1, rho2 : float
        Weights of ``||P - P~||_F^2`` and ``||K - K~||_F^2``.
    eps : float
        Stop when ``||Delta||_inf / (||anchor||_inf + 1) < eps``.
    z : float or ndarray
        Weight ``Z`` of the overestimate, ``0 < Z < I``; a scalar means ``z I``.
    max_iters : int
        Number of proximal solves.
    alpha : sequence of float
        Relaxation scalars of the convex initialization.
    gain_reg : float
        Gain-size penalty of the convex initialization and of the
        fixed-``P`` update.
    """

    rho1: float = 1e-2
    rho2: float = 1e-2
    eps: float = 1e-3
    z: float | np.ndarray = 0.5
    max_iters: int = 50
    alpha: tuple = (5.0,)
    gain_reg: float = 1e-6

    def __post_init__(self):
        if self.rho1 <= 0 or self.rho2 <= 0:
            raise ValueError("rho1 and rho2 must be positive")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if int(self.max_iters) < 0:
            raise ValueError("max_iters must be non-negative")
        self.max_iters = int(self.max_iters)


@dataclass
class IterationRecord:
    iter: int
    gamma: float
    dP_fro: float
    dK_fro: float
    status: str
    seconds: float


@dataclass
class IterationLog:
    """History of one run of the proximal loop.

    ``stages`` holds the three pre-loop solves (convex initialization,
    certification of its gain and the gain update with ``P1, P2`` fixed);
    ``records`` holds one entry per proximal solve.  ``gains`` and
    ``certificate`` are the final, re-certified results.
    """

    stages: dict = field(default_factory=dict)
    records: list = field(default_factory=list)
    gains: ControllerGains | None = None
    certificate: Certificate | None = None
    status: str = "running"
    stop_reason: str = ""

    @property
    def gamma(self) -> float | None:
        return None if self.certificate is None else self.certificate.gamma

    @property
    def gammas(self) -> np.ndarray:
        return np.array([r.gamma for r in self.records])

    @property
    def n_iterations(self) -> int:
        return len(self.records)

    def is_monotone(self, tol: float = 1e-6) -> bool:
        g = [self.stages.get("anchor_gamma", np.inf)] + list(self.gammas)
        return all(b <= a + tol for a, b in zip(g, g[1:]))

    def to_csv(self, timings: bool = True) -> str:
        """One row per proximal solve; ``timings=False`` drops the wall-clock column."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter", "gamma", "dP_fro", "dK_fro", "status"] + (["seconds"] if timings else []))
        for r in self.records:
            row = [r.iter, repr(r.gamma), repr(r.dP_fro), repr(r.dK_fro), r.status]
            w.writerow(row + ([f"{r.seconds:.3f}"] if timings else []))
        return buf.getvalue()

    def to_json(self) -> dict:
        return {
            "status": self.status,
            "stop_reason": self.stop_reason,
            "stages": self.stages,
            "records": [r.__dict__ for r in self.records],
            "gamma": self.gamma,
            "gains": None if self.gains is None else self.gains.to_json(),
            "certificate": None if self.certificate is None else self.certificate.to_json(),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def _rel_change(new: list, old: list) -> float:
    d = max(np.abs(a - b).max() for a, b in zip(new, old))
    ref = max(np.abs(b).max() for b in old)
    return float(d / (ref + 1.0))


def iterate(ctx: SynthesisContext, params: IterateParams | None = None,
            initial: ControllerGains | None = None, callback=None) -> IterationLog:
    """Run the staged initialization followed by the proximal loop.

    Parameters
    ----------
    ctx : SynthesisContext
    params : IterateParams, optional
    initial : ControllerGains, optional
        Skip the convex initialization and start from these gains.
    callback : callable, optional
        Called with every :class:`IterationRecord`.

    Returns
    -------
    IterationLog
        The reported gains are always re-certified with
        :func:`refine_fixed_K`.
    """
    params = params or IterateParams()
    out = IterationLog()
    t0 = time.perf_counter()
    if initial is None:
        gains0, g_conv, _ = synth_convex(ctx, params.alpha, params.gain_reg)
        out.stages["convex_gamma"] = g_conv
    else:
        gains0 = initial
    cert0 = refine_fixed_K(ctx, gains0)
    out.stages["certified_gamma"] = cert0.gamma
    gains1, cert1 = refine_fixed_P(ctx, cert0.P1, cert0.P2, anchor=gains0, gain_reg=params.gain_reg)
    out.stages["anchor_gamma"] = cert1.gamma
    out.stages["seconds"] = time.perf_counter() - t0
    log.info("initialization: gamma %s -> %s -> %s", out.stages.get("convex_gamma"), cert0.gamma, cert1.gamma)

    bold = ctx.bold
    P1a, P2a, Ka = cert1.P1, cert1.P2, gains1
    best_gains, best_gamma = gains1, cert1.gamma
    out.status = "max-iterations"
    for k in range(1, params.max_iters + 1):
        t1 = time.perf_counter()
        prog = lmi_overestimate(bold, ctx.supply, P1a, P2a, Ka.as_dict(), Z=params.z)
        v = prog.variables
        Pb = _bold_P(bold, v["P1"], v["P2"])
        Pt = _bold_P(bold, P1a, P2a).const
        tP, blkP = frobenius_epigraph(Pb, Pt, params.rho1, name="tP")
        Kexpr = _stacked_expr({n: v[n] for n in gain_variables(bold)}, ctx.mode)
        tK, blkK = frobenius_epigraph(Kexpr, Ka.stacked(), params.rho2, name="tK")
        objective = tP + tK
        if prog.gamma is not None:
            objective = objective + prog.gamma
        try:
            sol = solve(SdpProblem(prog.constraints + [blkP, blkK], objective), ctx.settings)
        except (SolverFailure, InfeasibleCertificate) as exc:
            warnings.warn(f"proximal step {k} failed ({exc}); keeping the last good iterate", RuntimeWarning)
            out.status = "solver-failure"
            out.stop_reason = str(exc)
            break
        gains = ControllerGains.from_values(ctx.mode, sol.values)
        gamma = _objective_value(ctx, sol)
        dP = float(np.linalg.norm(Pb.value(sol.values) - Pt))
        dK = float(np.linalg.norm(gains.stacked() - Ka.stacked()))
        ratio = _rel_change([sol.values["P1"], sol.values["P2"], gains.stacked()], [P1a, P2a, Ka.stacked()])
        rec = IterationRecord(k, gamma if gamma is not None else float("nan"), dP, dK, sol.raw_status,
                              time.perf_counter() - t1)
        out.records.append(rec)
        if callback is not None:
            callback(rec)
        log.info("iteration %d: gamma %.6f dP %.3e dK %.3e", k, rec.gamma, dP, dK)
        P1a, P2a, Ka = sol.values["P1"], sol.values["P2"], gains
        best_gains, best_gamma = gains, gamma
        if ratio < params.eps:
            out.status = "converged"
            out.stop_reason = f"relative change {ratio:.3e} < {params.eps:g}"
            break
    out.gains = best_gains
    try:
        out.certificate = refine_fixed_K(ctx, best_gains)
    except (Infeasible, SolverFailure):
        # fall back to the last gain with a direct certificate
        out.gains = gains1
        out.certificate = refine_fixed_K(ctx, gains1)
        out.status = "recertification-fallback"
    if best_gamma is not None and out.certificate.gamma is not None:
        out.stages["loop_gamma"] = best_gamma
    out.stages["total_seconds"] = time.perf_counter() - t0
    return out
