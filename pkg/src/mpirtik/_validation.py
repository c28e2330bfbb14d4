"""Input checks shared by the estimator wrappers."""

from __future__ import annotations

import numbers

import numpy as np
from sklearn.utils.validation import check_array

from .fpsim import FloatFormat, PrecisionTriple, get_format
from .linalg import KronOperator


def check_operator(X):
    """Return a float64 matrix or a :class:`KronOperator` unchanged."""
    if isinstance(X, KronOperator):
        if not (np.isfinite(X.Ar).all() and np.isfinite(X.Ac).all()):
            raise ValueError("Kronecker factors contain non-finite entries")
        return X
    return check_array(X, dtype=np.float64, ensure_2d=True, ensure_all_finite=True)


def check_rhs(y, n_rows: int):
    y = check_array(y, dtype=np.float64, ensure_2d=False, ensure_all_finite=True)
    if y.ndim != 1:
        raise ValueError(f"right-hand side must be 1-D, got shape {y.shape}")
    if y.shape[0] != n_rows:
        raise ValueError(f"right-hand side has {y.shape[0]} entries, operator has {n_rows} rows")
    return y


def check_positive(value, name: str) -> float:
    if not isinstance(value, numbers.Real) or not value > 0:
        raise ValueError(f"{name} must be a positive number, got {value!r}")
    return float(value)


def check_iterations(value, name: str = "max_iters") -> int:
    if not isinstance(value, numbers.Integral) or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_format(value) -> FloatFormat:
    return get_format(value)


def check_triple(value) -> PrecisionTriple:
    return PrecisionTriple.from_spec(value)
