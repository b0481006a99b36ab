"""JSON system files.

A system file is a single JSON object::

    {
      "name": "...",
      "dims": {"n": 2, "m": 2, "p": 1, "q": 1},
      "delays": [1.0, 1.7],
      "mode": "static",
      "pointwise": {"A": [A0, A1, ...], "B": [...], "C": [...], "BB": [...],
                    "D1": D1, "D2": D2},
      "kernels": [{"A": [["expr", ...], ...], "B": ..., "C": ..., "BB": ...}, ...],
      "basis": [{"f": [...], "varphi": [...], "phi": [...]}, ...],
      "supply_rate": {"type": "l2_gain"},
      "algorithm": {...},
      "verification": {...}
    }

Matrices are row-major nested arrays.  Errors carry a JSON pointer to the
offending key.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, DimensionMismatch, KrasError, ParseError
from .expr import parse
from .system import KERNEL_KEYS, DelaySystem, SupplyRate

__all__ = [
    "ProblemSpec",
    "load_config",
    "parse_config",
    "builtin_config",
    "benchmark_config",
    "ALGORITHM_DEFAULTS",
    "VERIFICATION_DEFAULTS",
]

ALGORITHM_DEFAULTS = {
    "alpha": [5.0],
    "rho1": 1e-2,
    "rho2": 1e-2,
    "eps": 1e-3,
    "z": 0.5,
    "max_iters": 50,
    "solver_tol": 1e-9,
    "solver_max_iter": 200,
}

VERIFICATION_DEFAULTS = {
    "sa_nodes": 32,
    "step": 0.002,
    "horizon": 20.0,
    "dd_points": 200,
    "history": [5.0, 3.0],
    "disturbance": "50*sin(20*3.141592653589793*t)",
    "disturbance_off": 5.0,
}


@dataclass
class ProblemSpec:
    """Parsed system file."""

    name: str
    system: DelaySystem
    bases: list
    supply: SupplyRate
    algorithm: dict = field(default_factory=lambda: dict(ALGORITHM_DEFAULTS))
    verification: dict = field(default_factory=lambda: dict(VERIFICATION_DEFAULTS))
    raw: dict = field(default_factory=dict)

    def dims(self) -> dict:
        s = self.system
        return {"n": s.n, "m": s.m, "p": s.p, "q": s.q, "nu": s.nu}


def _require(obj, key, pointer):
    if not isinstance(obj, dict) or key not in obj:
        raise ConfigError(f"missing required key {key!r}", f"{pointer}/{key}")
    return obj[key]


def _matrix(value, pointer):
    try:
        a = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"not a numeric matrix: {exc}", pointer) from None
    if a.ndim != 2:
        raise ConfigError(f"expected a 2-D nested array, got {a.ndim}-D", pointer)
    return a


def _check_expr(value, pointer):
    if value is None or isinstance(value, (int, float)):
        return
    try:
        parse(str(value))
    except ParseError as exc:
        raise ConfigError(f"{exc}", pointer) from exc


def parse_config(data: dict, source: str = "<dict>") -> ProblemSpec:
    """Validate a decoded system file and build the model objects.

    Raises
    ------
    ConfigError
        With ``pointer`` naming the offending key.
    """
    if not isinstance(data, dict):
        raise ConfigError("system file must contain a JSON object", "")
    dims = _require(data, "dims", "")
    for k in ("n", "m", "p", "q"):
        v = _require(dims, k, "/dims")
        if not isinstance(v, int) or v < 1:
            raise ConfigError(f"dimension {k} must be a positive integer", f"/dims/{k}")
    delays = _require(data, "delays", "")
    if not isinstance(delays, list) or not delays:
        raise ConfigError("delays must be a non-empty list", "/delays")
    nu = len(delays)
    pw = data.get("pointwise", {})
    kwargs = {}
    for key in ("A", "B", "C", "BB"):
        lst = pw.get(key, [])
        if not isinstance(lst, list):
            raise ConfigError("expected a list of matrices", f"/pointwise/{key}")
        kwargs[key] = [_matrix(a, f"/pointwise/{key}/{i}") for i, a in enumerate(lst)]
    for key in ("D1", "D2"):
        if key in pw:
            kwargs[key] = _matrix(pw[key], f"/pointwise/{key}")
    kernels = data.get("kernels", [])
    if len(kernels) > nu:
        raise ConfigError(f"{len(kernels)} kernel sets for {nu} delay intervals", "/kernels")
    for i, k in enumerate(kernels):
        for key in k:
            if key not in KERNEL_KEYS:
                raise ConfigError(f"unknown kernel key {key!r}", f"/kernels/{i}/{key}")
    basis = _require(data, "basis", "")
    if not isinstance(basis, list) or len(basis) != nu:
        raise ConfigError(f"basis must list one entry per delay interval ({nu})", "/basis")
    for i, b in enumerate(basis):
        _require(b, "f", f"/basis/{i}")
    for i, k in enumerate(kernels):
        for key, grid in k.items():
            for r, row in enumerate(grid or []):
                for c, e in enumerate(row):
                    _check_expr(e, f"/kernels/{i}/{key}/{r}/{c}")
    for i, b in enumerate(basis):
        for block in ("phi", "varphi", "f"):
            for j, e in enumerate(b.get(block, [])):
                _check_expr(e, f"/basis/{i}/{block}/{j}")
    mode = data.get("mode", "static")
    try:
        system = DelaySystem(dims["n"], dims["m"], dims["p"], dims["q"], delays, kernels=kernels,
                             mode=mode, name=data.get("name", ""), **kwargs)
    except KrasError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc), "/pointwise" if isinstance(exc, DimensionMismatch) else "") from exc
    except ValueError as exc:
        pointer = "/mode" if "mode" in str(exc) else "/delays" if "delays" in str(exc) else ""
        raise ConfigError(str(exc), pointer) from exc
    sr = data.get("supply_rate", {"type": "l2_gain"})
    if sr.get("type", "l2_gain") == "l2_gain":
        supply = SupplyRate.l2_gain(system.m, system.q)
    else:
        try:
            supply = SupplyRate(sr["J_tilde"], sr["J1"], sr.get("J2"), sr["J3"])
        except KeyError as exc:
            raise ConfigError(f"missing supply-rate block {exc.args[0]!r}", f"/supply_rate/{exc.args[0]}") from None
        except ValueError as exc:
            raise ConfigError(str(exc), "/supply_rate") from exc
        if supply.m != system.m or supply.q != system.q:
            raise ConfigError("supply-rate dimensions do not match dims", "/supply_rate")
    algorithm = dict(ALGORITHM_DEFAULTS)
    algorithm.update(data.get("algorithm", {}))
    verification = dict(VERIFICATION_DEFAULTS)
    verification.update(data.get("verification", {}))
    bases = [{"f": list(b["f"]), "varphi": list(b.get("varphi", [])), "phi": list(b.get("phi", []))}
             for b in basis]
    return ProblemSpec(data.get("name", Path(source).stem), system, bases, supply, algorithm, verification, data)


def load_config(path) -> ProblemSpec:
    """Read and validate a JSON system file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}", "") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}", "") from None
    return parse_config(data, str(path))


def builtin_config(name: str) -> dict:
    """Decoded copy of a system file shipped with the package (``sec61`` or ``sec62``)."""
    ref = resources.files("kras") / "data" / f"{name}.json"
    return json.loads(ref.read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# generator for the shipped two-delay benchmark

_PHI1 = "1/(sin(1.2*t)^2 + 1)"
_PHI2 = "1/(cos(0.7*t)^2 + 1)"


def _f_block(sigma: int, lam: int, omega: int) -> list:
    f = ["1"] + ["t" if i == 1 else f"t^{i}" for i in range(1, sigma + 1)]
    f += [f"sin({omega * i}*t)" for i in range(1, lam + 1)]
    f += [f"cos({omega * i}*t)" for i in range(1, lam + 1)]
    return f


def benchmark_config(sigma: int = 1, lam: int = 1, delayed_controller: bool = False,
                     mode: str | None = None) -> dict:
    """Two-delay benchmark system with a non-Hurwitz ``A_0``.

    Parameters
    ----------
    sigma, lam : int
        Polynomial degree and number of harmonics in the ``f`` blocks.
    delayed_controller : bool
        Drop every delayed input term (``B_i``, ``B~_i``, ``BB~_i`` for
        ``i >= 1``).  The controller mode then defaults to ``"delayed"``.
    mode : str, optional
        Override the controller mode.
    """
    kernels = [
        {
            "A": [["0.1 + 3*sin(20*t)", "0.8*exp(sin(20*t)) - 0.3*exp(cos(20*t))"],
                  [f"0.3 + {_PHI1}", "3*sin(20*t)"]],
            "B": [[f"0.01*t - 0.01*{_PHI1} + 0.1"], [f"0.1*t + 0.02*{_PHI1}"]],
            "C": [["0.7 + cos(20*t)", f"{_PHI1} - 0.2"], ["0.4 - 0.5*exp(sin(20*t))", "0.8 - sin(20*t)"]],
            "BB": [[f"0.01*t + 0.1*exp(sin(20*t)) - 0.1*{_PHI1}"], ["0.2*exp(sin(20*t))"]],
        },
        {
            "A": [["-10*cos(18*t)", f"0.3*exp(cos(18*t)) - {_PHI2}"],
                  ["0.1*exp(sin(18*t))", "0.2 - 10*cos(18*t)"]],
            "B": [[f"0.2*exp(cos(18*t)) + 0.01*exp(sin(18*t)) + 0.01*{_PHI2}"],
                  ["0.1*exp(cos(18*t)) + 0.02*exp(sin(18*t))"]],
            "C": [["0.2 + sin(18*t)", "0.3 + exp(cos(18*t))"], ["0", f"0.1 - {_PHI2}"]],
            "BB": [[f"0.2*exp(cos(18*t)) + 0.01*exp(sin(18*t)) + 0.1*{_PHI2}"],
                   [f"0.02*exp(sin(18*t)) + 0.2*{_PHI2}"]],
        },
    ]
    B = [[[0.0], [1.0]], [[0.01], [0.1]], [[-0.1], [-0.1]]]
    if delayed_controller:
        B = [B[0], [[0.0], [0.0]], [[0.0], [0.0]]]
        for k in kernels:
            k.pop("B")
            k.pop("BB")
    if mode is None:
        mode = "delayed" if delayed_controller else "static"
    name = f"benchmark-{'delayed-input-free' if delayed_controller else 'full'}-{mode}-s{sigma}-l{lam}"
    return {
        "name": name,
        "dims": {"n": 2, "m": 2, "p": 1, "q": 1},
        "delays": [1.0, 1.7],
        "mode": mode,
        "pointwise": {
            "A": [[[-2.0, 0.0], [2.0, 0.01]], [[-1.0, 0.1], [0.2, 0.0]], [[-0.1, 0.0], [0.0, -0.2]]],
            "B": B,
            "C": [[[-0.1, 0.2], [0.0, 0.1]], [[-0.1, 0.0], [0.0, 0.2]], [[0.0, 0.1], [-0.1, 0.0]]],
            "BB": [],
            "D1": [[0.2], [0.3]],
            "D2": [[0.12], [0.1]],
        },
        "kernels": kernels,
        "basis": [
            {"f": _f_block(sigma, lam, 20), "varphi": [_PHI1], "phi": ["exp(sin(20*t))", "exp(cos(20*t))"]},
            {"f": _f_block(sigma, lam, 18), "varphi": [_PHI2], "phi": ["exp(sin(18*t))", "exp(cos(18*t))"]},
        ],
        "supply_rate": {"type": "l2_gain"},
        "algorithm": dict(ALGORITHM_DEFAULTS),
        "verification": dict(VERIFICATION_DEFAULTS),
    }
