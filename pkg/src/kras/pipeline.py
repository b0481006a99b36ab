"""End-to-end steps shared by the estimator facade and the command line."""

from __future__ import annotations

import json
import math

import numpy as np

from .config import ProblemSpec, load_config, parse_config
from .expr import parse
from .sdp import SolverSettings
from .synth import ControllerGains, IterateParams, SynthesisContext, prepare
from .verify import (
    check_dissipation,
    closed_loop,
    l2_gain_estimate,
    simulate,
    spectral_abscissa,
)

__all__ = ["as_spec", "context_for", "iterate_params", "disturbance_from", "verify_controller", "dumps"]


def as_spec(source) -> ProblemSpec:
    """Accept a :class:`ProblemSpec`, a decoded system file or a path to one."""
    if isinstance(source, ProblemSpec):
        return source
    if isinstance(source, dict):
        return parse_config(source)
    return load_config(source)


def context_for(spec: ProblemSpec, solver_tol: float | None = None) -> SynthesisContext:
    alg = spec.algorithm
    tol = float(solver_tol if solver_tol is not None else alg["solver_tol"])
    settings = SolverSettings(tol=tol, max_iter=int(alg["solver_max_iter"]), max_tol=max(1e-7, tol))
    return prepare(spec.system, spec.bases, spec.supply, settings)


def iterate_params(alg: dict) -> IterateParams:
    return IterateParams(rho1=float(alg["rho1"]), rho2=float(alg["rho2"]), eps=float(alg["eps"]),
                         z=alg["z"], max_iters=int(alg["max_iters"]), alpha=tuple(alg["alpha"]),
                         gain_reg=float(alg.get("gain_reg", 1e-6)))


def disturbance_from(ver: dict, q: int):
    """``t -> (N, q)`` from the expression string and switch-off time of a verification block."""
    expr = parse(str(ver["disturbance"]))
    t_off = float(ver.get("disturbance_off", math.inf))

    def w(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        val = np.broadcast_to(np.asarray(expr(t), dtype=float), t.shape)
        val = np.where((t >= 0) & (t < t_off), val, 0.0)
        return np.repeat(val[:, None], q, axis=1)

    return w


def verify_controller(ctx: SynthesisContext, gains: ControllerGains, certificate, ver: dict,
                      gamma: float | None = None) -> dict:
    """Spectral abscissa, zero-history empirical gain and the dissipation audit.

    Returns a JSON-ready dictionary; ``passed`` is true when the closed loop
    is exponentially stable, the empirical gain stays below ``1.05 gamma``
    and the audit has no violations.
    """
    system = ctx.system
    cl = closed_loop(system, gains, ctx.decomps)
    sa = spectral_abscissa(cl, int(ver["sa_nodes"]))
    w = disturbance_from(ver, system.q)
    traj = simulate(cl, history=None, w=w, h=float(ver["step"]), T=float(ver["horizon"]),
                    dd_points=int(ver["dd_points"]))
    gamma = certificate.gamma if gamma is None else gamma
    out = {"spectral_abscissa": sa, "gamma": gamma}
    if ctx.supply.has_gamma:
        out["l2_gain_estimate"] = l2_gain_estimate(traj)
    report = check_dissipation(traj, ctx.supply, certificate, ctx.decomps, system.delays, gamma)
    out["dissipation"] = report.to_json()
    passed = sa < 0 and report.passed
    if "l2_gain_estimate" in out and gamma is not None:
        passed = passed and out["l2_gain_estimate"] <= 1.05 * gamma
    out["passed"] = bool(passed)
    out["trajectory"] = traj
    return out


def dumps(obj) -> str:
    """Deterministic JSON (sorted keys, fixed float formatting)."""
    return json.dumps(obj, indent=2, sort_keys=True, default=_default)


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")
