"""Affine matrix expressions in named decision variables.

An :class:`AffineExpr` is ``C0 + sum_v sum_k x_{v,k} C_{v,k}`` where each
decision variable ``v`` is parameterized by a flat vector ``x_v``.  Only
operations that keep the expression affine are allowed; a product of two
variable-dependent expressions raises :class:`BilinearityError`.
"""

from __future__ import annotations

import numbers

import numpy as np

from ..exceptions import BilinearityError, DimensionMismatch

__all__ = ["AffineExpr", "Variable", "bmat", "kron", "blkdiag", "sy", "as_affine", "zeros"]


def _as2d(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        return a.reshape(1, 1)
    if a.ndim == 1:
        return a.reshape(-1, 1)
    if a.ndim != 2:
        raise DimensionMismatch(f"expected a matrix, got an array with {a.ndim} dimensions")
    return a


class AffineExpr:
    """Matrix-valued affine function of decision variables.

    Parameters
    ----------
    const : array_like
        Constant term.
    coeffs : dict, optional
        Variable name to coefficient tensor of shape ``(rows, cols, k)``.
    variables : dict, optional
        Variable name to :class:`Variable`.
    """

    __array_ufunc__ = None  # let numpy defer to the reflected operators
    __slots__ = ("const", "coeffs", "variables")

    def __init__(self, const, coeffs=None, variables=None):
        self.const = _as2d(const)
        self.coeffs = dict(coeffs) if coeffs else {}
        self.variables = dict(variables) if variables else {}

    # -- basic properties -------------------------------------------------
    @property
    def shape(self):
        return self.const.shape

    @property
    def is_constant(self) -> bool:
        return not self.coeffs

    @property
    def T(self) -> "AffineExpr":
        return AffineExpr(self.const.T, {k: c.transpose(1, 0, 2) for k, c in self.coeffs.items()},
                          self.variables)

    def __repr__(self):
        return f"AffineExpr(shape={self.shape}, variables={sorted(self.coeffs)})"

    # -- arithmetic -------------------------------------------------------
    def __add__(self, other):
        other = as_affine(other)
        if other.shape != self.shape:
            raise DimensionMismatch(f"cannot add shapes {self.shape} and {other.shape}")
        coeffs = dict(self.coeffs)
        for k, c in other.coeffs.items():
            coeffs[k] = coeffs[k] + c if k in coeffs else c
        variables = {**self.variables, **other.variables}
        return AffineExpr(self.const + other.const, coeffs, variables)

    __radd__ = __add__

    def __neg__(self):
        return AffineExpr(-self.const, {k: -c for k, c in self.coeffs.items()}, self.variables)

    def __sub__(self, other):
        return self + (-as_affine(other))

    def __rsub__(self, other):
        return as_affine(other) + (-self)

    def __mul__(self, s):
        if not isinstance(s, numbers.Real):
            return NotImplemented
        s = float(s)
        return AffineExpr(self.const * s, {k: c * s for k, c in self.coeffs.items()}, self.variables)

    __rmul__ = __mul__

    def __matmul__(self, other):
        if isinstance(other, AffineExpr):
            if self.is_constant:
                return other._lmul(self.const)
            if other.is_constant:
                return self._rmul(other.const)
            raise BilinearityError(
                f"product of variable-dependent expressions ({sorted(self.coeffs)} and {sorted(other.coeffs)})")
        return self._rmul(_as2d(other))

    def __rmatmul__(self, other):
        return self._lmul(_as2d(other))

    def _lmul(self, L):
        if L.shape[1] != self.shape[0]:
            raise DimensionMismatch(f"cannot multiply {L.shape} by {self.shape}")
        return AffineExpr(L @ self.const, {k: np.tensordot(L, c, axes=(1, 0)) for k, c in self.coeffs.items()},
                          self.variables)

    def _rmul(self, R):
        if self.shape[1] != R.shape[0]:
            raise DimensionMismatch(f"cannot multiply {self.shape} by {R.shape}")
        return AffineExpr(self.const @ R,
                          {k: np.einsum("rck,cb->rbk", c, R) for k, c in self.coeffs.items()},
                          self.variables)

    def __getitem__(self, idx):
        if not (isinstance(idx, tuple) and len(idx) == 2):
            raise IndexError("AffineExpr requires a two-dimensional index")
        i, j = idx
        const = self.const[i, j]
        if const.ndim != 2:
            raise IndexError("use slices so that the result stays a matrix")
        return AffineExpr(const, {k: c[i, j, :] for k, c in self.coeffs.items()}, self.variables)

    def vec(self) -> "AffineExpr":
        """Column-stacked vectorization."""
        r, c = self.shape
        return AffineExpr(self.const.reshape(r * c, 1, order="F"),
                          {k: v.reshape(r * c, 1, v.shape[2], order="F") for k, v in self.coeffs.items()},
                          self.variables)

    # -- evaluation -------------------------------------------------------
    def value(self, values) -> np.ndarray:
        """Substitute variable values.

        Parameters
        ----------
        values : dict
            Variable name to a matrix of the variable's shape or to its
            flat parameter vector.
        """
        out = self.const.copy()
        for k, c in self.coeffs.items():
            var = self.variables[k]
            p = var.params_of(values[k])
            out += c @ p
        return out

    def is_symmetric(self, rtol: float = 1e-12) -> bool:
        if self.shape[0] != self.shape[1]:
            return False
        scale = 1.0 + np.abs(self.const).max(initial=0.0)
        if np.abs(self.const - self.const.T).max(initial=0.0) > rtol * scale:
            return False
        for c in self.coeffs.values():
            s = 1.0 + np.abs(c).max(initial=0.0)
            if np.abs(c - c.transpose(1, 0, 2)).max(initial=0.0) > rtol * s:
                return False
        return True


class Variable(AffineExpr):
    """Matrix decision variable.

    Parameters
    ----------
    name : str
        Unique name.
    shape : tuple of int
        ``(rows, cols)``.
    symmetric : bool
        Symmetric variables are parameterized by their upper triangle.
    """

    __slots__ = ("name", "symmetric", "size")

    def __init__(self, name: str, shape, symmetric: bool = False):
        shape = tuple(int(s) for s in shape) if np.ndim(shape) else (int(shape), int(shape))
        r, c = shape
        if symmetric and r != c:
            raise DimensionMismatch(f"symmetric variable {name} must be square, got {shape}")
        self.name = name
        self.symmetric = symmetric
        if symmetric:
            iu, ju = np.triu_indices(r)
            k = len(iu)
            basis = np.zeros((r, r, k))
            basis[iu, ju, np.arange(k)] = 1.0
            basis[ju, iu, np.arange(k)] = 1.0
        else:
            k = r * c
            basis = np.zeros((r, c, k))
            ii, jj = np.unravel_index(np.arange(k), (r, c))
            basis[ii, jj, np.arange(k)] = 1.0
        self.size = k
        super().__init__(np.zeros(shape), {name: basis}, {})
        self.variables = {name: self}

    def __repr__(self):
        kind = "sym" if self.symmetric else "full"
        return f"Variable({self.name!r}, {self.shape}, {kind})"

    def params_of(self, value) -> np.ndarray:
        """Flat parameter vector of a value given as a matrix or as parameters."""
        v = np.asarray(value, dtype=float)
        if v.ndim == 1 and v.size == self.size:
            return v
        v = _as2d(v)
        if v.shape != self.shape:
            if v.size == self.size:
                return v.ravel()
            raise DimensionMismatch(f"value of {self.name} has shape {v.shape}, expected {self.shape}")
        if self.symmetric:
            iu, ju = np.triu_indices(self.shape[0])
            return 0.5 * (v + v.T)[iu, ju]
        return v.ravel()

    def matrix_of(self, params) -> np.ndarray:
        """Matrix value of a flat parameter vector."""
        params = np.asarray(params, dtype=float).ravel()
        return np.tensordot(self.coeffs[self.name], params, axes=(2, 0))


def as_affine(x) -> AffineExpr:
    if isinstance(x, AffineExpr):
        return x
    return AffineExpr(x)


def zeros(r: int, c: int) -> AffineExpr:
    return AffineExpr(np.zeros((r, c)))


def sy(x) -> AffineExpr:
    """``X + X^T``."""
    x = as_affine(x)
    return x + x.T


def kron(a, b) -> AffineExpr:
    """Kronecker product where at most one factor depends on variables."""
    A, B = as_affine(a), as_affine(b)
    if not A.is_constant and not B.is_constant:
        raise BilinearityError("Kronecker product of two variable-dependent expressions")
    (ar, ac), (br, bc) = A.shape, B.shape
    const = np.kron(A.const, B.const)
    coeffs = {}
    for k, c in A.coeffs.items():
        coeffs[k] = np.einsum("ijk,rc->irjck", c, B.const).reshape(ar * br, ac * bc, c.shape[2])
    for k, c in B.coeffs.items():
        coeffs[k] = np.einsum("ij,rck->irjck", A.const, c).reshape(ar * br, ac * bc, c.shape[2])
    return AffineExpr(const, coeffs, {**A.variables, **B.variables})


def bmat(blocks) -> AffineExpr:
    """Assemble a block matrix.

    Parameters
    ----------
    blocks : list of list
        Entries are :class:`AffineExpr`, arrays, or ``None`` for a zero block
        whose size is inferred from its block row and column.
    """
    nrows = len(blocks)
    ncols = len(blocks[0])
    if any(len(row) != ncols for row in blocks):
        raise DimensionMismatch("block rows have different lengths")
    conv = [[None if b is None else as_affine(b) for b in row] for row in blocks]
    heights = [None] * nrows
    widths = [None] * ncols
    for i, row in enumerate(conv):
        for j, b in enumerate(row):
            if b is None:
                continue
            h, w = b.shape
            if heights[i] is None:
                heights[i] = h
            elif heights[i] != h:
                raise DimensionMismatch(f"block ({i}, {j}) has {h} rows, expected {heights[i]}")
            if widths[j] is None:
                widths[j] = w
            elif widths[j] != w:
                raise DimensionMismatch(f"block ({i}, {j}) has {w} columns, expected {widths[j]}")
    if any(h is None for h in heights) or any(w is None for w in widths):
        raise DimensionMismatch("cannot infer the size of an all-zero block row or column")
    r0 = np.concatenate([[0], np.cumsum(heights)]).astype(int)
    c0 = np.concatenate([[0], np.cumsum(widths)]).astype(int)
    R, C = int(r0[-1]), int(c0[-1])
    const = np.zeros((R, C))
    coeffs: dict = {}
    variables: dict = {}
    for i, row in enumerate(conv):
        for j, b in enumerate(row):
            if b is None:
                continue
            const[r0[i]:r0[i + 1], c0[j]:c0[j + 1]] = b.const
            variables.update(b.variables)
            for k, c in b.coeffs.items():
                if k not in coeffs:
                    coeffs[k] = np.zeros((R, C, c.shape[2]))
                coeffs[k][r0[i]:r0[i + 1], c0[j]:c0[j + 1], :] += c
    return AffineExpr(const, coeffs, variables)


def blkdiag(*blocks) -> AffineExpr:
    """Direct sum of square or rectangular blocks."""
    blocks = [as_affine(b) for b in blocks]
    grid = []
    for i, b in enumerate(blocks):
        row = []
        for j, other in enumerate(blocks):
            row.append(b if i == j else AffineExpr(np.zeros((b.shape[0], other.shape[1]))))
        grid.append(row)
    return bmat(grid)
