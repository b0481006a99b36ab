"""System description and supply rate."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DimensionMismatch
from .expr import Num, ScalarExpr, as_expr, to_string

__all__ = ["DelaySystem", "SupplyRate", "KERNEL_KEYS"]

KERNEL_KEYS = ("A", "B", "C", "BB")
MODES = ("static", "delayed")


def _mat(a, shape, name):
    if a is None:
        return np.zeros(shape)
    a = np.asarray(a, dtype=float)
    if a.ndim == 1 and shape[1] == 1:
        a = a.reshape(-1, 1)
    if a.ndim == 1 and shape[0] == 1:
        a = a.reshape(1, -1)
    if a.shape != shape:
        raise DimensionMismatch(f"{name} has shape {a.shape}, expected {shape}")
    return a


def _grid(g, shape, name):
    rows, cols = shape
    if g is None:
        return tuple(tuple(Num(0.0) for _ in range(cols)) for _ in range(rows))
    if len(g) != rows or any(len(r) != cols for r in g):
        raise DimensionMismatch(f"kernel {name} must be a {rows}x{cols} grid of expressions")
    return tuple(tuple(as_expr(0.0 if e is None else e) for e in r) for r in g)


def _is_zero_grid(g) -> bool:
    return all(isinstance(e, Num) and e.value == 0.0 for row in g for e in row)


@dataclass
class DelaySystem:
    """Linear system with pointwise and distributed delays.

    ``x'(t) = sum_i A_i x(t-r_i) + B_i u(t-r_i) + sum_i int A~_i(s) x(t+s) + B~_i(s) u(t+s) ds + D1 w``
    and analogously ``z`` with ``C_i``, ``BB_i`` (the output feedthrough of
    the input) and ``D2``.

    Parameters
    ----------
    n, m, p, q : int
        State, output, input and disturbance dimensions.
    delays : sequence of float
        ``r_1 < ... < r_nu`` (``r_0 = 0`` is implicit).
    A, B, C, BB : list of ndarray, optional
        Pointwise matrices for ``i = 0..nu``; missing entries are zero.
    D1, D2 : ndarray, optional
    kernels : list of dict, optional
        One dict per interval with keys ``"A"``, ``"B"``, ``"C"``, ``"BB"``
        mapping to grids of expressions in ``t``.
    mode : {"static", "delayed"}
        ``"static"`` uses ``u = K x``; ``"delayed"`` uses a controller with
        pointwise and distributed delays and requires all delayed input
        blocks to vanish.
    """

    n: int
    m: int
    p: int
    q: int
    delays: tuple
    A: list = None
    B: list = None
    C: list = None
    BB: list = None
    D1: np.ndarray = None
    D2: np.ndarray = None
    kernels: list = None
    mode: str = "static"
    name: str = ""

    def __post_init__(self):
        self.n, self.m, self.p, self.q = (int(v) for v in (self.n, self.m, self.p, self.q))
        if min(self.n, self.m, self.p, self.q) < 1:
            raise DimensionMismatch("all dimensions must be positive")
        d = tuple(float(r) for r in np.atleast_1d(self.delays))
        if not d or d[0] <= 0 or any(b <= a for a, b in zip(d, d[1:])):
            raise ValueError(f"delays must be positive and strictly increasing, got {d}")
        self.delays = d
        nu = len(d)
        n, m, p, q = self.n, self.m, self.p, self.q

        def pw(lst, shape, name):
            lst = list(lst) if lst is not None else []
            if len(lst) > nu + 1:
                raise DimensionMismatch(f"{name} has {len(lst)} entries, expected at most {nu + 1}")
            lst = lst + [None] * (nu + 1 - len(lst))
            return [_mat(a, shape, f"{name}[{i}]") for i, a in enumerate(lst)]

        self.A = pw(self.A, (n, n), "A")
        self.B = pw(self.B, (n, p), "B")
        self.C = pw(self.C, (m, n), "C")
        self.BB = pw(self.BB, (m, p), "BB")
        self.D1 = _mat(self.D1, (n, q), "D1")
        self.D2 = _mat(self.D2, (m, q), "D2")
        kernels = list(self.kernels) if self.kernels is not None else []
        if len(kernels) > nu:
            raise DimensionMismatch(f"{len(kernels)} kernel sets given for {nu} intervals")
        kernels += [{}] * (nu - len(kernels))
        shapes = {"A": (n, n), "B": (n, p), "C": (m, n), "BB": (m, p)}
        self.kernels = []
        for i, k in enumerate(kernels):
            unknown = set(k) - set(KERNEL_KEYS)
            if unknown:
                raise ValueError(f"unknown kernel keys {sorted(unknown)} in interval {i + 1}")
            self.kernels.append({key: _grid(k.get(key), shapes[key], f"{key}~{i + 1}") for key in KERNEL_KEYS})
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "delayed":
            for i in range(1, nu + 1):
                if np.any(self.B[i]) or np.any(self.BB[i]):
                    raise ValueError("delayed-controller mode requires B_i = BB_i = 0 for i >= 1")
            for i, k in enumerate(self.kernels):
                if not (_is_zero_grid(k["B"]) and _is_zero_grid(k["BB"])):
                    raise ValueError(f"delayed-controller mode requires zero input kernels (interval {i + 1})")

    @property
    def nu(self) -> int:
        return len(self.delays)

    @property
    def r(self) -> tuple:
        """``(r_0, r_1, ..., r_nu)`` with ``r_0 = 0``."""
        return (0.0,) + self.delays

    def interval(self, i: int) -> tuple:
        """Interval ``[-r_i, -r_{i-1}]`` for ``i = 1..nu``."""
        return (-self.r[i], -self.r[i - 1])

    def with_mode(self, mode: str) -> "DelaySystem":
        return DelaySystem(self.n, self.m, self.p, self.q, self.delays, self.A, self.B, self.C, self.BB,
                           self.D1, self.D2, [dict(k) for k in self.kernels], mode, self.name)

    def kernel_strings(self) -> list:
        return [{key: [[to_string(e) for e in row] for row in k[key]] for key in KERNEL_KEYS}
                for k in self.kernels]


@dataclass
class SupplyRate:
    """Quadratic supply rate ``s(z, w) = [z; w]^T [[Jt^T J1^-1 Jt, J2], [*, J3]] [z; w]``.

    Use :meth:`l2_gain` for the L2-gain specialization ``J1 = -g I``,
    ``Jt = I``, ``J2 = 0``, ``J3 = g I`` where ``g`` is minimized.
    """

    J_tilde: np.ndarray = None
    J1: np.ndarray = None
    J2: np.ndarray = None
    J3: np.ndarray = None
    kind: str = "general"
    m: int = 0
    q: int = 0

    @classmethod
    def l2_gain(cls, m: int, q: int) -> "SupplyRate":
        return cls(np.eye(m), None, np.zeros((m, q)), None, kind="l2", m=m, q=q)

    def __post_init__(self):
        if self.kind == "l2":
            return
        self.J_tilde = np.atleast_2d(np.asarray(self.J_tilde, dtype=float))
        self.J1 = np.atleast_2d(np.asarray(self.J1, dtype=float))
        self.J3 = np.atleast_2d(np.asarray(self.J3, dtype=float))
        self.m = self.J1.shape[0]
        self.q = self.J3.shape[0]
        self.J2 = np.zeros((self.m, self.q)) if self.J2 is None else np.atleast_2d(np.asarray(self.J2, float))
        if self.J_tilde.shape != (self.m, self.m) or self.J2.shape != (self.m, self.q):
            raise DimensionMismatch("supply-rate blocks have inconsistent shapes")
        if np.linalg.eigvalsh(0.5 * (self.J1 + self.J1.T)).max() >= 0:
            raise ValueError("J1 must be negative definite")

    @property
    def has_gamma(self) -> bool:
        return self.kind == "l2"

    def matrices(self, gamma: float | None = None):
        """Numeric ``(Jt, J1, J2, J3)``; ``gamma`` is required for the L2 form."""
        if self.kind == "l2":
            if gamma is None or gamma <= 0:
                raise ValueError("the L2-gain supply rate needs a positive gamma")
            return np.eye(self.m), -gamma * np.eye(self.m), np.zeros((self.m, self.q)), gamma * np.eye(self.q)
        return self.J_tilde, self.J1, self.J2, self.J3

    def evaluate(self, z: np.ndarray, w: np.ndarray, gamma: float | None = None) -> np.ndarray:
        """Supply rate at samples ``z`` (N x m) and ``w`` (N x q)."""
        Jt, J1, J2, J3 = self.matrices(gamma)
        Zq = Jt.T @ np.linalg.solve(J1, Jt)
        z = np.atleast_2d(z)
        w = np.atleast_2d(w)
        return (np.einsum("ni,ij,nj->n", z, Zq, z) + 2 * np.einsum("ni,ij,nj->n", z, J2, w)
                + np.einsum("ni,ij,nj->n", w, J3, w))

    def to_dict(self) -> dict:
        if self.kind == "l2":
            return {"type": "l2_gain"}
        return {"type": "general", "J_tilde": self.J_tilde.tolist(), "J1": self.J1.tolist(),
                "J2": self.J2.tolist(), "J3": self.J3.tolist()}
