"""Estimator-style facade over the synthesis pipeline.

``fit`` takes a problem description instead of a data matrix, so the class
follows the scikit-learn conventions (constructor parameters, ``get_params``,
``set_params``, fitted attributes with a trailing underscore,
``check_is_fitted``) without being a statistical estimator.  ``predict`` maps
controller features to the control signal.
"""

from __future__ import annotations

from numbers import Integral, Real

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .pipeline import as_spec, context_for, iterate_params
from .synth import iterate, refine_fixed_K, synth_convex

__all__ = ["DissipativeStateFeedback"]

_METHODS = ("convex", "iterate")


class DissipativeStateFeedback(BaseEstimator):
    """Dissipative state-feedback controller for a system with delays.

    Parameters
    ----------
    method : {"convex", "iterate"}
        ``"convex"`` solves the convex synthesis condition once and
        re-certifies the gain; ``"iterate"`` continues with the proximal
        loop.
    alpha : sequence of float
        Relaxation scalars of the convex condition.
    rho1, rho2 : float
        Proximal weights on the functional and gain updates.
    eps : float
        Relative-change stopping tolerance.
    z : float
        Scalar weight ``Z = z I`` of the overestimate, ``0 < z < 1``.
    max_iters : int
        Proximal iterations.
    gain_reg : float
        Gain-size penalty of the convex and fixed-functional steps.
    solver_tol : float
        Interior-point tolerance.

    Attributes
    ----------
    gains_ : ControllerGains
    certificate_ : Certificate
    gamma_ : float or None
        Certified performance level of ``gains_``.
    log_ : IterationLog or None
        Only for ``method="iterate"``.
    context_ : SynthesisContext
    n_features_in_ : int
        ``n`` for a static controller, ``beta n`` for a delayed one.
    """

    def __init__(self, method: str = "iterate", alpha=(5.0,), rho1: float = 1e-2, rho2: float = 1e-2,
                 eps: float = 1e-3, z: float = 0.5, max_iters: int = 50, gain_reg: float = 1e-6,
                 solver_tol: float = 1e-9):
        self.method = method
        self.alpha = alpha
        self.rho1 = rho1
        self.rho2 = rho2
        self.eps = eps
        self.z = z
        self.max_iters = max_iters
        self.gain_reg = gain_reg
        self.solver_tol = solver_tol

    def _check_params(self):
        if self.method not in _METHODS:
            raise ValueError(f"method must be one of {_METHODS}, got {self.method!r}")
        for name in ("rho1", "rho2", "eps", "solver_tol"):
            v = getattr(self, name)
            if not isinstance(v, Real) or v <= 0:
                raise ValueError(f"{name} must be a positive number, got {v!r}")
        if not isinstance(self.gain_reg, Real) or self.gain_reg < 0:
            raise ValueError(f"gain_reg must be non-negative, got {self.gain_reg!r}")
        if not isinstance(self.max_iters, Integral) or self.max_iters < 0:
            raise ValueError(f"max_iters must be a non-negative integer, got {self.max_iters!r}")
        alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        if alpha.ndim != 1 or not np.all(np.isfinite(alpha)):
            raise ValueError("alpha must be a finite sequence")

    def fit(self, X, y=None):
        """Synthesize a controller.

        Parameters
        ----------
        X : ProblemSpec, dict or path
            The problem (system, bases and supply rate).
        y : ignored

        Returns
        -------
        self
        """
        self._check_params()
        spec = as_spec(X)
        ctx = context_for(spec, self.solver_tol)
        alg = dict(spec.algorithm, alpha=list(np.atleast_1d(self.alpha)), rho1=self.rho1, rho2=self.rho2,
                   eps=self.eps, z=self.z, max_iters=self.max_iters, gain_reg=self.gain_reg)
        self.log_ = None
        if self.method == "convex":
            gains, _, _ = synth_convex(ctx, tuple(alg["alpha"]), self.gain_reg)
            cert = refine_fixed_K(ctx, gains)
        else:
            self.log_ = iterate(ctx, iterate_params(alg))
            gains, cert = self.log_.gains, self.log_.certificate
        self.context_ = ctx
        self.gains_ = gains
        self.certificate_ = cert
        self.gamma_ = cert.gamma
        self.n_features_in_ = gains.stacked().shape[1]
        return self

    def predict(self, X) -> np.ndarray:
        """Control signal for rows of controller features.

        Static mode: rows are states ``x``.  Delayed mode: rows are
        ``[x(t), x(t - r_1), ..., x(t - r_nu), int (g_1 kron I) x, ...]``.

        Returns
        -------
        ndarray of shape (N, p)
        """
        check_is_fitted(self, "gains_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, the controller expects {self.n_features_in_}")
        return X @ self.gains_.stacked().T

    def score(self, X=None, y=None) -> float:
        """Negative certified performance level (larger is better)."""
        check_is_fitted(self, "gains_")
        if self.gamma_ is None:
            raise ValueError("the supply rate has no performance parameter to score")
        return -float(self.gamma_)
