"""Command-line front end.

Exit codes: 0 success, 1 configuration error, 2 infeasible, 3 solver
failure, 4 verification failure.  Every failure prints a JSON error report
on standard error and, with ``--out``, also writes it to ``error.json``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .assemble import unknown_count
from .config import benchmark_config, parse_config
from .exceptions import (
    ConfigError,
    Infeasible,
    InfeasibleCertificate,
    KrasError,
    SolverFailure,
)
from .pipeline import as_spec, context_for, disturbance_from, dumps, iterate_params, verify_controller
from .synth import ControllerGains, iterate, refine_fixed_K, synth_convex
from .verify import closed_loop, constant_history, plot_gamma, plot_trajectory, simulate, spectral_abscissa

__all__ = ["main", "run", "REFERENCE_TARGETS"]

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_SOLVER, EXIT_VERIFY = 0, 1, 2, 3, 4

# Published reference values: performance level and spectral abscissa after
# 5, 10, 15 and 20 proximal iterations.
REFERENCE_TARGETS = {
    "sec61-lam1": {"gamma": [0.6573, 0.6542, 0.6523, 0.6509], "sa": [-0.7223, -0.7214, -0.7224, -0.7233],
                   "K": [-1.5033, -1.9815], "convex_gamma": 0.8986},
    "sec61-lam2": {"gamma": [0.6443, 0.6398, 0.6376, 0.6361], "sa": [-0.7223, -0.7214, -0.7224, -0.7233],
                   "K": [-1.5810, -1.9805]},
    "sec62-delayed-lam1": {"gamma": [0.5242, 0.5240, 0.5238, 0.5237], "sa": [-0.6983, -0.6979, -0.6976, -0.6989]},
    "sec62-delayed-lam2": {"gamma": [0.5236, 0.5234, 0.5232, 0.5230], "sa": [-0.7039, -0.6915, -0.6899, -0.6907]},
    "sec62-static-lam1": {"gamma": [0.5785, 0.5760, 0.5736, 0.5714], "sa": [-0.7259, -0.7319, -0.7358, -0.7385]},
    "sec62-static-lam2": {"gamma": [0.5723, 0.5669, 0.5626, 0.5590], "sa": [-0.7179, -0.7113, -0.7099, -0.7099]},
}
TARGET_ITERS = (5, 10, 15, 20)


class VerificationFailed(KrasError):
    """The synthesized controller did not pass the closed-loop checks."""

    def __init__(self, message: str, report: dict):
        self.report = report
        super().__init__(message)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kras", description="Dissipative state feedback for systems with delays.")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_, file=True):
        sp = sub.add_parser(name, help=help_)
        if file:
            sp.add_argument("config", help="JSON system file")
        sp.add_argument("--out", metavar="DIR", help="directory for report files")
        sp.add_argument("--solver-tol", type=float, help="interior-point tolerance")
        sp.add_argument("-v", "--verbose", action="store_true", help="log progress to standard error")
        return sp

    def algorithm(sp):
        sp.add_argument("--alpha1", type=float, help="first relaxation scalar of the convex condition")
        sp.add_argument("--iters", type=int, help="number of proximal iterations")
        sp.add_argument("--rho1", type=float, help="proximal weight on the functional")
        sp.add_argument("--rho2", type=float, help="proximal weight on the gains")
        sp.add_argument("--eps", type=float, help="relative-change stopping tolerance")

    def verification(sp):
        sp.add_argument("--sa-nodes", type=int, help="collocation nodes per delay interval")
        sp.add_argument("--step", type=float, help="simulation step")
        sp.add_argument("--horizon", type=float, help="simulation horizon")

    add("validate", "check a system file and print its dimensions")
    add("decompose", "decompose the delay kernels")
    algorithm(add("synth", "convex synthesis followed by certification"))
    algorithm(add("iterate", "convex initialization followed by the proximal loop"))
    for name, help_ in (("verify", "closed-loop checks of a controller"), ("simulate", "simulate a closed loop")):
        sp = add(name, help_)
        verification(sp)
        sp.add_argument("--gains", help="gains JSON from synth or iterate (default: run synth)")
        if name == "verify":
            algorithm(sp)
    rp = add("reproduce-paper", "run the shipped benchmarks and compare against published tables", file=False)
    algorithm(rp)
    verification(rp)
    rp.add_argument("--quick", action="store_true", help="only the two lowest-order runs")
    return p


def _apply_overrides(spec, args):
    alg, ver = spec.algorithm, spec.verification
    mapping = {"alpha1": None, "iters": "max_iters", "rho1": "rho1", "rho2": "rho2", "eps": "eps",
               "solver_tol": "solver_tol"}
    for flag, key in mapping.items():
        v = getattr(args, flag, None)
        if v is None:
            continue
        if flag == "alpha1":
            alpha = list(alg["alpha"])
            alpha[0] = v
            alg["alpha"] = alpha
        else:
            alg[key] = v
    for flag, key in (("sa_nodes", "sa_nodes"), ("step", "step"), ("horizon", "horizon")):
        v = getattr(args, flag, None)
        if v is not None:
            ver[key] = v
    if int(alg["max_iters"]) < 0:
        raise ConfigError("--iters must be non-negative", "/algorithm/max_iters")
    for key in ("rho1", "rho2", "eps", "solver_tol"):
        if not float(alg[key]) > 0:
            raise ConfigError(f"{key} must be positive, got {alg[key]}", f"/algorithm/{key}")
    if float(ver["step"]) <= 0 or float(ver["horizon"]) <= 0:
        raise ConfigError("--step and --horizon must be positive", "/verification")
    if int(ver["sa_nodes"]) < 8:
        raise ConfigError("--sa-nodes must be at least 8", "/verification/sa_nodes")
    return spec


class _Out:
    def __init__(self, directory):
        self.dir = Path(directory) if directory else None
        if self.dir is not None:
            self.dir.mkdir(parents=True, exist_ok=True)

    def write(self, name, text):
        if self.dir is not None:
            (self.dir / name).write_text(text, encoding="utf-8")

    def path(self, name):
        return None if self.dir is None else self.dir / name


def _load_gains(path) -> ControllerGains:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read gains file {path}: {exc}", "") from None
    data = data.get("gains", data)
    mode = data.get("mode", "static")
    values = {k: np.atleast_2d(np.asarray(v, dtype=float)) for k, v in data.items() if k != "mode"}
    try:
        return ControllerGains.from_values(mode, values)
    except KeyError as exc:
        raise ConfigError(f"gains file lacks {exc.args[0]!r}", f"/{exc.args[0]}") from None


def _summary(ctx, gains, cert) -> dict:
    out = {"gains": gains.to_json(), "gamma": cert.gamma}
    cl = closed_loop(ctx.system, gains, ctx.decomps)
    out["spectral_abscissa"] = spectral_abscissa(cl)
    return out


def _cmd_validate(spec, args, out):
    dims = spec.dims()
    print(dumps({"name": spec.name, "dims": dims, "delays": list(spec.system.delays), "mode": spec.system.mode}))
    out.write("validate.json", dumps({"name": spec.name, "dims": dims}))
    return EXIT_OK


def _cmd_decompose(spec, args, out):
    ctx = context_for(spec, args.solver_tol)
    rows = []
    for i, dc in enumerate(ctx.decomps, start=1):
        rows.append({"interval": i, "d": dc.basis.d, "varkappa": dc.basis.varkappa, "mu": dc.basis.mu,
                     "kappa": dc.basis.kappa, "E_norm": dc.E_norm, "A_hat": dc.A_hat, "B_hat": dc.B_hat,
                     "C_hat": dc.C_hat, "BB_hat": dc.BB_hat, "M": dc.M})
    rep = {"name": spec.name, "intervals": rows, "unknowns": unknown_count(ctx.bold)}
    out.write("decomposition.json", dumps(rep))
    print(dumps({"name": spec.name, "unknowns": rep["unknowns"],
                 "intervals": [{k: r[k] for k in ("interval", "d", "varkappa", "mu", "kappa", "E_norm")}
                               for r in rows]}))
    return EXIT_OK


def _cmd_synth(spec, args, out):
    ctx = context_for(spec, args.solver_tol)
    gains, g_conv, _ = synth_convex(ctx, tuple(spec.algorithm["alpha"]))
    cert = refine_fixed_K(ctx, gains)
    rep = {"convex_gamma": g_conv, **_summary(ctx, gains, cert)}
    out.write("gains.json", dumps(gains.to_json()))
    out.write("certificate.json", dumps(cert.to_json()))
    out.write("report.json", dumps(rep))
    print(dumps(rep))
    return EXIT_OK


def _cmd_iterate(spec, args, out):
    ctx = context_for(spec, args.solver_tol)
    log = iterate(ctx, iterate_params(spec.algorithm))
    rep = {"status": log.status, "stop_reason": log.stop_reason,
           "stages": {k: v for k, v in log.stages.items() if "seconds" not in k},
           "gammas": list(log.gammas), "monotone": log.is_monotone(), **_summary(ctx, log.gains, log.certificate)}
    out.write("iterations.csv", log.to_csv(timings=False))
    out.write("gains.json", dumps(log.gains.to_json()))
    out.write("certificate.json", dumps(log.certificate.to_json()))
    out.write("report.json", dumps(rep))
    out.write("timing.json", dumps({k: v for k, v in log.stages.items() if "seconds" in k}))
    if out.dir is not None and log.n_iterations:
        plot_gamma(log.gammas, out.path("gamma.svg"))
    print(log.to_csv(timings=False), end="")
    print(dumps({k: rep[k] for k in ("status", "gamma", "spectral_abscissa", "gains")}))
    return EXIT_OK


def _gains_for(spec, args, ctx):
    if getattr(args, "gains", None):
        return _load_gains(args.gains)
    gains, _, _ = synth_convex(ctx, tuple(spec.algorithm["alpha"]))
    return gains


def _cmd_verify(spec, args, out):
    ctx = context_for(spec, args.solver_tol)
    gains = _gains_for(spec, args, ctx)
    cert = refine_fixed_K(ctx, gains)
    res = verify_controller(ctx, gains, cert, spec.verification)
    res.pop("trajectory")
    res["gains"] = gains.to_json()
    out.write("verify.json", dumps(res))
    print(dumps(res))
    if not res["passed"]:
        raise VerificationFailed("closed-loop verification failed", res)
    return EXIT_OK


def _cmd_simulate(spec, args, out):
    ctx = context_for(spec, args.solver_tol)
    gains = _gains_for(spec, args, ctx)
    ver = spec.verification
    cl = closed_loop(spec.system, gains, ctx.decomps)
    traj = simulate(cl, history=constant_history(ver["history"]), w=disturbance_from(ver, spec.system.q),
                    h=float(ver["step"]), T=float(ver["horizon"]), dd_points=int(ver["dd_points"]))
    if out.dir is not None:
        traj.to_csv(out.path("trajectory.csv"))
        plot_trajectory(traj, out.dir)
    s = traj.future
    rep = {"samples": int(traj.t[s].size), "final_state": traj.x[-1].tolist(),
           "max_abs_state": float(np.abs(traj.x[s]).max())}
    print(dumps(rep))
    return EXIT_OK


def _reproduce_runs(quick: bool):
    runs = [("sec61-lam1", benchmark_config(1, 1)), ("sec62-delayed-lam1", benchmark_config(1, 1, True)),
            ("sec62-static-lam1", benchmark_config(1, 1, True, mode="static"))]
    if not quick:
        runs += [("sec61-lam2", benchmark_config(1, 2)), ("sec62-delayed-lam2", benchmark_config(1, 2, True)),
                 ("sec62-static-lam2", benchmark_config(1, 2, True, mode="static"))]
    return runs


def _cmd_reproduce(args, out):
    rows = []
    table = ["run,iteration,gamma,reference_gamma,sa,reference_sa"]
    for name, data in _reproduce_runs(args.quick):
        spec = _apply_overrides(parse_config(data, name), args)
        if args.iters is None:
            spec.algorithm["max_iters"] = max(TARGET_ITERS)
        spec.algorithm["eps"] = args.eps if args.eps is not None else 1e-12
        ctx = context_for(spec, args.solver_tol)
        t0 = time.perf_counter()
        snaps = {}

        def record(rec, ctx=ctx, snaps=snaps):
            if rec.iter in TARGET_ITERS:
                snaps[rec.iter] = rec.gamma

        log = iterate(ctx, iterate_params(spec.algorithm), callback=record)
        summary = _summary(ctx, log.gains, log.certificate)
        target = REFERENCE_TARGETS[name]
        for k, it in enumerate(TARGET_ITERS):
            if it in snaps:
                sa = summary["spectral_abscissa"] if it == log.n_iterations else ""
                table.append(f"{name},{it},{snaps[it]:.4f},{target['gamma'][k]},{sa if sa == '' else f'{sa:.4f}'},"
                             f"{target['sa'][k]}")
        rows.append({"run": name, "status": log.status, "stages": {k: v for k, v in log.stages.items()
                                                                     if "seconds" not in k},
                     "gammas": list(log.gammas), "monotone": log.is_monotone(), **summary,
                     "reference": target, "seconds": round(time.perf_counter() - t0, 1)})
        logging.getLogger(__name__).info("%s finished: gamma %.4f", name, summary["gamma"])
    comparison = "\n".join(table) + "\n"
    out.write("comparison.csv", comparison)
    out.write("reproduce.json", dumps(rows))
    print(comparison, end="")
    return EXIT_OK


_COMMANDS = {"validate": _cmd_validate, "decompose": _cmd_decompose, "synth": _cmd_synth,
             "iterate": _cmd_iterate, "verify": _cmd_verify, "simulate": _cmd_simulate}


def _error_report(exc: Exception, code: int) -> dict:
    rep = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    if isinstance(exc, ConfigError):
        rep["pointer"] = exc.pointer
    if isinstance(exc, VerificationFailed):
        rep["report"] = exc.report
    return rep


def run(argv=None) -> int:
    """Execute one command; returns the exit code."""
    args = _parser().parse_args(argv)
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    out = _Out(args.out)
    try:
        if args.command == "reproduce-paper":
            return _cmd_reproduce(args, out)
        spec = _apply_overrides(as_spec(args.config), args)
        return _COMMANDS[args.command](spec, args, out)
    except (Infeasible, InfeasibleCertificate) as exc:
        return _fail(exc, EXIT_INFEASIBLE, out)
    except SolverFailure as exc:
        return _fail(exc, EXIT_SOLVER, out)
    except VerificationFailed as exc:
        return _fail(exc, EXIT_VERIFY, out)
    except (KrasError, ValueError) as exc:
        # parse, dimension and basis errors are all problems of the input
        return _fail(exc, EXIT_CONFIG, out)


def _fail(exc: Exception, code: int, out: "_Out") -> int:
    text = dumps(_error_report(exc, code))
    print(text, file=sys.stderr)
    out.write("error.json", text)
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

