"""scikit-learn style wrappers around the solvers.

The operator plays the role of ``X`` and the observed data the role of ``y``;
the reconstruction is stored in ``coef_`` so ``predict(A)`` returns ``A @ coef_``.
Iterative estimators also keep every iterate and the full :class:`RunRecord`.

>>> from mpirtik.problems import make_problem
>>> p = make_problem("spectra", mu=1.0, seed=0)
>>> est = MixedPrecisionIRRegressor(alpha2=1e-2, precisions=(3, 2, 1)).fit(p.A, p.b)
>>> est.coef_.shape
(64,)
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from . import _validation as v
from .filters import (
    effective_filter_set,
    mpir_filters,
    pl_filters_recursive,
    tikhonov_filters,
)
from .linalg import build_preconditioner, kron_svd, KronOperator, matvec, svd
from .solvers import (
    SolverConfig,
    air_run,
    ir_run,
    landweber_run,
    mpir_run,
    pl_run,
    tikhonov_direct,
)

__all__ = [
    "TikhonovRegressor",
    "LandweberRegressor",
    "PreconditionedLandweberRegressor",
    "IterativeRefinementRegressor",
    "MixedPrecisionIRRegressor",
    "CirculantIRRegressor",
]


class _OperatorRegressor(RegressorMixin, BaseEstimator):
    def _check_data(self, X, y):
        A = v.check_operator(X)
        b = v.check_rhs(y, A.shape[0])
        self.n_features_in_ = A.shape[1]
        return A, b

    def predict(self, X):
        check_is_fitted(self, "coef_")
        A = v.check_operator(X)
        if A.shape[1] != self.coef_.shape[0]:
            raise ValueError(f"operator has {A.shape[1]} columns, model has {self.coef_.shape[0]}")
        return matvec(A, self.coef_)

    def _store(self, record):
        self.record_ = record
        self.iterates_ = record.iterates
        self.coef_ = record.x
        self.n_iter_ = record.n_iter
        self.diverged_ = record.diverged
        return self


class TikhonovRegressor(_OperatorRegressor):
    """Standard-form Tikhonov solution via the SVD."""

    def __init__(self, alpha2=1e-2):
        self.alpha2 = alpha2

    def fit(self, X, y):
        A, b = self._check_data(X, y)
        alpha2 = v.check_positive(self.alpha2, "alpha2")
        self.coef_ = tikhonov_direct(A, b, alpha2)
        sigma = (kron_svd(A) if isinstance(A, KronOperator) else svd(A)).sigma
        self.filter_factors_ = tikhonov_filters(sigma, alpha2)
        return self


class LandweberRegressor(_OperatorRegressor):
    def __init__(self, max_iters=10, zeta=1.0):
        self.max_iters = max_iters
        self.zeta = zeta

    def fit(self, X, y, x_true=None):
        A, b = self._check_data(X, y)
        cfg = SolverConfig(alpha2=1.0, max_iters=v.check_iterations(self.max_iters), zeta=self.zeta)
        return self._store(landweber_run(A, b, cfg, x_true=x_true))


class PreconditionedLandweberRegressor(_OperatorRegressor):
    """Landweber preconditioned by ``A^T A + alpha2 I`` built in `precond_precision`.

    All iteration arithmetic runs in `precision`.
    """

    def __init__(self, alpha2=1e-2, max_iters=10, precond_precision="fp64", precision="fp64"):
        self.alpha2 = alpha2
        self.max_iters = max_iters
        self.precond_precision = precond_precision
        self.precision = precision

    def fit(self, X, y, x_true=None):
        A, b = self._check_data(X, y)
        alpha2 = v.check_positive(self.alpha2, "alpha2")
        pr1, pr3 = v.check_format(self.precond_precision), v.check_format(self.precision)
        self.preconditioner_ = build_preconditioner(A, alpha2, pr1)
        k = v.check_iterations(self.max_iters)
        return self._store(pl_run(A, b, self.preconditioner_, k, pr3, x_true=x_true))

    def theoretical_filters(self, X):
        check_is_fitted(self, "preconditioner_")
        sigma = svd(v.check_operator(X)).sigma
        return pl_filters_recursive(sigma, self.preconditioner_, self.n_iter_, v.check_format(self.precision))


class IterativeRefinementRegressor(_OperatorRegressor):
    """Iterative refinement on the Tikhonov normal equations in fp64."""

    def __init__(self, alpha2=1e-2, max_iters=10):
        self.alpha2 = alpha2
        self.max_iters = max_iters

    def fit(self, X, y, x_true=None):
        A, b = self._check_data(X, y)
        cfg = SolverConfig(v.check_positive(self.alpha2, "alpha2"), v.check_iterations(self.max_iters))
        return self._store(ir_run(A, b, cfg, x_true=x_true))


class MixedPrecisionIRRegressor(_OperatorRegressor):
    """Iterative refinement with preconditioner, solve and residual precisions.

    Parameters
    ----------
    alpha2 : float
        Squared regularization parameter.
    max_iters : int
        Number of refinement steps.
    precisions : tuple or str
        ``(Pr1, Pr2, Pr3)`` as shorthand integers (1 = fp64, 2 = fp32,
        3 = fp16) or format names.

    Attributes
    ----------
    coef_ : ndarray
        Final iterate.
    preconditioner_ : TikPreconditioner or KronTikPreconditioner
        The Pr1 preconditioner used by the run.
    record_ : RunRecord
    """

    def __init__(self, alpha2=1e-2, max_iters=10, precisions=(1, 1, 1)):
        self.alpha2 = alpha2
        self.max_iters = max_iters
        self.precisions = precisions

    def fit(self, X, y, x_true=None):
        A, b = self._check_data(X, y)
        triple = v.check_triple(self.precisions)
        cfg = SolverConfig(v.check_positive(self.alpha2, "alpha2"), v.check_iterations(self.max_iters), triple)
        self.preconditioner_ = build_preconditioner(A, cfg.alpha2, triple.pr1)
        self._b = b
        return self._store(mpir_run(A, b, cfg, x_true=x_true, P=self.preconditioner_))

    def theoretical_filters(self, X):
        """Predicted filter factors for every iteration of the fitted run."""
        check_is_fitted(self, "preconditioner_")
        sigma = svd(v.check_operator(X)).sigma
        return mpir_filters(sigma, self.preconditioner_, self.n_iter_, v.check_triple(self.precisions))

    def effective_filters(self, X):
        """Filter factors recovered from the stored iterates."""
        check_is_fitted(self, "preconditioner_")
        f = svd(v.check_operator(X))
        return effective_filter_set(self.iterates_, f, self.preconditioner_.V_M, self._b)

    def filter_gap(self, X):
        """``|Phi_k - Omega_k|`` for k = 0..n_iter_."""
        return np.abs(self.theoretical_filters(X).values - self.effective_filters(X).values)


class CirculantIRRegressor(_OperatorRegressor):
    """Iterative refinement preconditioned by the optimal circulant approximation."""

    def __init__(self, alpha2=1e-1, max_iters=10):
        self.alpha2 = alpha2
        self.max_iters = max_iters

    def fit(self, X, y, x_true=None):
        A, b = self._check_data(X, y)
        cfg = SolverConfig(v.check_positive(self.alpha2, "alpha2"), v.check_iterations(self.max_iters))
        return self._store(air_run(A, b, cfg, x_true=x_true))
