"""Exception hierarchy shared by all subpackages."""

from __future__ import annotations


class KrasError(Exception):
    """Base class for every error raised by this package."""


class ParseError(KrasError, ValueError):
    """Malformed expression text.

    Parameters
    ----------
    message : str
        Human readable description.
    offset : int
        Byte offset of the offending token in the source text.
    expected : iterable of str
        Token kinds that would have been accepted at ``offset``.
    """

    def __init__(self, message: str, offset: int, expected=()):
        self.offset = int(offset)
        self.expected = frozenset(expected)
        exp = ", ".join(sorted(self.expected))
        super().__init__(f"{message} at offset {self.offset}" + (f" (expected: {exp})" if exp else ""))


class EvalError(KrasError, ArithmeticError):
    """Division by zero or logarithm of a non-positive value during evaluation."""


class LinearlyDependentBasis(KrasError, ValueError):
    """The normalized basis Gramian is numerically singular."""


class NotClosedUnderDerivative(KrasError, ValueError):
    """``f'`` is not reproduced by ``M h`` within tolerance."""


class NotRepresentable(KrasError, ValueError):
    """A kernel entry is not in the span of the interval basis."""


class NoConvergence(KrasError, RuntimeError):
    """Adaptive quadrature or spectral refinement did not converge."""


class NotPositiveDefinite(KrasError, ValueError):
    """A matrix expected to be positive semidefinite has a significantly negative eigenvalue."""


class DimensionMismatch(KrasError, ValueError):
    """Matrix shapes are inconsistent with the declared dimensions."""


class ConfigError(KrasError, ValueError):
    """Invalid configuration document.

    Parameters
    ----------
    message : str
        Description of the problem.
    pointer : str
        JSON pointer to the offending field.
    """

    def __init__(self, message: str, pointer: str = ""):
        self.pointer = pointer
        super().__init__(f"{message} [{pointer}]" if pointer else message)


class BilinearityError(KrasError, TypeError):
    """Product of two decision-variable dependent expressions."""


class AlphaZero(KrasError, ValueError):
    """The first relaxation scalar of the convex condition is zero."""


class InvalidZ(KrasError, ValueError):
    """The overestimation weight does not satisfy ``0 < Z < I``."""


class SolverFailure(KrasError, RuntimeError):
    """The semidefinite solver stopped without a usable answer.

    Attributes
    ----------
    solution : Solution or None
        The raw solution record including diagnostics.
    """

    def __init__(self, message: str, solution=None):
        self.solution = solution
        super().__init__(message)


class InfeasibleCertificate(KrasError, RuntimeError):
    """The solver returned a certificate of primal infeasibility."""

    def __init__(self, message: str, solution=None):
        self.solution = solution
        super().__init__(message)


class Infeasible(KrasError, RuntimeError):
    """A synthesis or analysis stage found no feasible point."""


class HistoryGap(KrasError, RuntimeError):
    """The simulator requested state history that is not available."""


class ZeroInput(KrasError, ValueError):
    """Empirical gain requested for an identically zero disturbance."""


class WindowTooShort(KrasError, ValueError):
    """The trajectory is shorter than the largest delay."""
