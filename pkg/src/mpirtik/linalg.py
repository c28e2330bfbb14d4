"""Dense and Kronecker-structured linear algebra with simulated precision.

Matrices are plain 2-D float64 ndarrays.  The chopped kernels evaluate every
product and every partial sum in a target :class:`~mpirtik.fpsim.FloatFormat`,
accumulating in ascending index order, so results are reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fpsim import FP64, FloatFormat, round_array

__all__ = [
    "LinAlgFailure",
    "SvdFactors",
    "TikPreconditioner",
    "KronOperator",
    "KronSvd",
    "KronTikPreconditioner",
    "svd",
    "build_preconditioner",
    "precond_solve",
    "chopped_matvec",
    "chopped_matmul",
    "chan_circulant",
    "circulant_eigvals",
    "circulant_matrix",
    "kron_matvec",
    "kron_svd",
    "matvec",
    "rmatvec",
    "save_matrix",
    "load_matrix",
]


class LinAlgFailure(RuntimeError):
    """A decomposition failed or produced data outside tolerance."""


# -- chopped kernels ---------------------------------------------------------


def chopped_matmul(A, B, fmt: FloatFormat = FP64) -> np.ndarray:
    """``A @ B`` with per-operation rounding to `fmt`.

    For every output entry the inner sum runs over k = 0, 1, ... in order,
    rounding the product and the running sum after each step.  With fp64 this
    is the plain sequential double-precision loop.
    """
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    vec = B.ndim == 1
    if vec:
        B = B[:, None]
    if A.ndim != 2 or A.shape[1] != B.shape[0]:
        raise ValueError(f"dimension mismatch: {A.shape} @ {B.shape}")
    A = round_array(A, fmt)
    B = round_array(B, fmt)
    acc = np.zeros((A.shape[0], B.shape[1]))
    for k in range(A.shape[1]):
        prod = round_array(np.multiply.outer(A[:, k], B[k, :]), fmt)
        acc = round_array(acc + prod, fmt)
    return acc[:, 0] if vec else acc


def chopped_matvec(A, x, fmt: FloatFormat = FP64) -> np.ndarray:
    """Row-by-row :func:`~mpirtik.fpsim.chopped_dot` of `A` with `x`."""
    A = np.asarray(A, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or A.ndim != 2 or A.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: {A.shape} @ {x.shape}")
    return chopped_matmul(A, x, fmt)


# -- SVD ---------------------------------------------------------------------


@dataclass(frozen=True)
class SvdFactors:
    """Thin SVD ``A = U diag(sigma) V^T`` with sigma nonincreasing."""

    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray

    @property
    def shape(self):
        return (self.U.shape[0], self.V.shape[0])

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.sigma) @ self.V.T


def svd(A) -> SvdFactors:
    """Native-precision thin SVD of a dense ``m x n`` matrix with ``m >= n``."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ValueError("svd expects a 2-D matrix")
    m, n = A.shape
    if m < n:
        raise ValueError(f"svd requires m >= n, got {m}x{n}")
    if not np.isfinite(A).all():
        raise ValueError("matrix has non-finite entries")
    try:
        U, s, Vt = np.linalg.svd(A, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise LinAlgFailure(f"SVD did not converge: {exc}") from exc
    return SvdFactors(U=U, sigma=s, V=Vt.T.copy())


# -- Tikhonov preconditioner ---------------------------------------------------


@dataclass(frozen=True)
class TikPreconditioner:
    """``M^T M = V_M diag(d_M_sq) V_M^T`` approximating ``A^T A + alpha2 I``.

    `sigma_M_sq` and `d_M_sq` hold values rounded to `format`; `V_M` is kept
    in native precision.
    """

    sigma_M_sq: np.ndarray
    V_M: np.ndarray
    alpha2: float
    d_M_sq: np.ndarray
    format: FloatFormat

    @property
    def n(self) -> int:
        return self.d_M_sq.shape[0]

    def solve(self, s, fmt: FloatFormat = FP64) -> np.ndarray:
        return precond_solve(self, s, fmt)

    def apply(self, x) -> np.ndarray:
        """Native ``(M^T M) x``."""
        return self.V_M @ (self.d_M_sq * (self.V_M.T @ x))


def _spectral_gram(A, pr1: FloatFormat, orient=None):
    """Eigenpairs of the Gram matrix of `A` formed in `pr1`, sorted descending."""
    Ar = round_array(A, pr1)
    G = chopped_matmul(Ar.T, Ar, pr1)
    G = 0.5 * (G + G.T)
    try:
        w, V = np.linalg.eigh(G)
    except np.linalg.LinAlgError as exc:
        raise LinAlgFailure(f"eigendecomposition did not converge: {exc}") from exc
    order = np.argsort(-w, kind="stable")
    w, V = w[order], V[:, order]
    lam_max = max(w[0], 0.0)
    thresh = -G.shape[0] * pr1.unit_roundoff * lam_max
    if w[-1] < thresh:
        raise LinAlgFailure(
            f"rounded Gram matrix is indefinite beyond tolerance: "
            f"min eigenvalue {w[-1]:.3e} < {thresh:.3e}"
        )
    w = np.maximum(w, 0.0)
    if orient is not None:
        flip = np.sum(V * orient, axis=0) < 0
        V[:, flip] *= -1.0
    return round_array(w, pr1), V


def build_preconditioner(A, alpha2: float, pr1: FloatFormat = FP64):
    """Build the spectral Tikhonov preconditioner for `A` in precision `pr1`.

    The Gram matrix ``A^T A`` is formed with chopped kernels in `pr1` and
    eigendecomposed in native precision.  Eigenvalues are clamped at zero
    (tolerance ``n * u(pr1) * lambda_max``) and rounded to `pr1`; the shifted
    values ``d = round(sigma_M_sq + alpha2)`` are what the solve divides by.
    Eigenvector signs are oriented to agree with the native right singular
    vectors of `A`.

    A :class:`KronOperator` yields a :class:`KronTikPreconditioner`.
    """
    if not alpha2 > 0:
        raise ValueError(f"alpha2 must be positive, got {alpha2!r}")
    if isinstance(A, KronOperator):
        return _build_kron_preconditioner(A, alpha2, pr1)
    A = np.asarray(A, dtype=np.float64)
    sigma_sq, V = _spectral_gram(A, pr1, orient=svd(A).V)
    d = round_array(sigma_sq + alpha2, pr1)
    return TikPreconditioner(sigma_M_sq=sigma_sq, V_M=V, alpha2=float(alpha2), d_M_sq=d, format=pr1)


def precond_solve(P, s, fmt: FloatFormat = FP64) -> np.ndarray:
    """Solve ``(M^T M) h = s`` as ``V_M diag(1/d) V_M^T s`` in precision `fmt`."""
    if isinstance(P, KronTikPreconditioner):
        return P.solve(s, fmt)
    s = np.asarray(s, dtype=np.float64)
    if s.shape != (P.n,):
        raise ValueError(f"dimension mismatch: preconditioner is {P.n}, rhs has shape {s.shape}")
    t = chopped_matvec(P.V_M.T, s, fmt)
    t = round_array(t / P.d_M_sq, fmt)
    return chopped_matvec(P.V_M, t, fmt)


# -- circulants ----------------------------------------------------------------


def chan_circulant(A) -> np.ndarray:
    """First column of the circulant closest to `A` in Frobenius norm.

    ``c[k]`` is the mean of ``A[(i + k) % n, i]`` over i.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"chan_circulant needs a square matrix, got shape {A.shape}")
    n = A.shape[0]
    i = np.arange(n)
    return np.array([A[(i + k) % n, i].mean() for k in range(n)])


def circulant_matrix(c) -> np.ndarray:
    """Materialize the circulant with first column `c`: ``C[i, j] = c[(i - j) % n]``."""
    c = np.asarray(c, dtype=np.float64)
    n = c.shape[0]
    i = np.arange(n)
    return c[(i[:, None] - i[None, :]) % n]


def circulant_eigvals(c) -> np.ndarray:
    """Eigenvalues of the circulant with first column `c` (its DFT, index order)."""
    c = np.asarray(c, dtype=np.float64)
    if c.ndim != 1 or c.size < 1:
        raise ValueError("circulant_eigvals needs a non-empty vector")
    return np.fft.fft(c)


# -- Kronecker structure ----------------------------------------------------


@dataclass(frozen=True)
class KronOperator:
    """``A = Ar (x) Ac`` acting on column-major vectorized images.

    An image ``X`` of shape ``(rows(Ac), rows(Ar))`` maps to ``Ac X Ar^T``.
    """

    Ar: np.ndarray
    Ac: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "Ar", np.asarray(self.Ar, dtype=np.float64))
        object.__setattr__(self, "Ac", np.asarray(self.Ac, dtype=np.float64))
        if self.Ar.ndim != 2 or self.Ac.ndim != 2:
            raise ValueError("Kronecker factors must be 2-D")

    @property
    def shape(self):
        return (self.Ar.shape[0] * self.Ac.shape[0], self.Ar.shape[1] * self.Ac.shape[1])

    @property
    def image_shape(self):
        return (self.Ac.shape[1], self.Ar.shape[1])

    @property
    def T(self) -> "KronOperator":
        return KronOperator(self.Ar.T, self.Ac.T)

    def matvec(self, x, fmt: FloatFormat = FP64) -> np.ndarray:
        return kron_matvec(self, x, fmt)

    def to_dense(self) -> np.ndarray:
        return np.kron(self.Ar, self.Ac)

    def __matmul__(self, x):
        return kron_matvec(self, x)


def kron_matvec(K: KronOperator, x, fmt: FloatFormat = FP64) -> np.ndarray:
    """``(Ar (x) Ac) x`` via ``vec(Ac X Ar^T)`` without forming the product."""
    x = np.asarray(x, dtype=np.float64)
    nc_in, nr_in = K.Ac.shape[1], K.Ar.shape[1]
    if x.shape != (nc_in * nr_in,):
        raise ValueError(f"dimension mismatch: operator {K.shape}, vector {x.shape}")
    X = x.reshape((nc_in, nr_in), order="F")
    Y = chopped_matmul(chopped_matmul(K.Ac, X, fmt), K.Ar.T, fmt)
    return Y.ravel(order="F")


@dataclass(frozen=True)
class KronSvd:
    """Factor SVDs of a Kronecker operator plus the descending sort order.

    Singular value number ``p`` (0-based, sorted) is
    ``sr.sigma[order_r[p]] * sc.sigma[order_c[p]]`` and its right singular
    vector is ``kron(sr.V[:, order_r[p]], sc.V[:, order_c[p]])``.
    """

    sr: SvdFactors
    sc: SvdFactors
    order: np.ndarray

    @property
    def grid(self) -> np.ndarray:
        """Products ``sc.sigma[j] * sr.sigma[i]`` laid out as a (len_c, len_r) image."""
        return np.multiply.outer(self.sc.sigma, self.sr.sigma)

    @property
    def sigma_unsorted(self) -> np.ndarray:
        """Products in Kronecker (column-major image) order."""
        return self.grid.ravel(order="F")

    @property
    def sigma(self) -> np.ndarray:
        return self.sigma_unsorted[self.order]

    @property
    def order_r(self) -> np.ndarray:
        return self.order // self.sc.sigma.shape[0]

    @property
    def order_c(self) -> np.ndarray:
        return self.order % self.sc.sigma.shape[0]

    def right_vector(self, p: int) -> np.ndarray:
        return np.kron(self.sr.V[:, self.order_r[p]], self.sc.V[:, self.order_c[p]])

    def left_vector(self, p: int) -> np.ndarray:
        return np.kron(self.sr.U[:, self.order_r[p]], self.sc.U[:, self.order_c[p]])


def kron_svd(K: KronOperator) -> KronSvd:
    """Implicit SVD of ``Ar (x) Ac`` from the SVDs of its factors."""
    sr, sc = svd(K.Ar), svd(K.Ac)
    prods = np.multiply.outer(sc.sigma, sr.sigma).ravel(order="F")
    order = np.argsort(-prods, kind="stable")
    return KronSvd(sr=sr, sc=sc, order=order)


@dataclass(frozen=True)
class KronTikPreconditioner:
    """Tikhonov preconditioner for ``Ar (x) Ac`` held in factored spectral form.

    ``d_grid[j, i] = round(sigma_c_sq[j] * sigma_r_sq[i] + alpha2)`` matches
    the column-major image layout of :class:`KronOperator`.
    """

    sigma_r_sq: np.ndarray
    sigma_c_sq: np.ndarray
    V_r: np.ndarray
    V_c: np.ndarray
    alpha2: float
    sigma_grid: np.ndarray
    d_grid: np.ndarray
    format: FloatFormat = field(default=FP64)

    @property
    def n(self) -> int:
        return self.d_grid.size

    @property
    def d_M_sq(self) -> np.ndarray:
        return self.d_grid.ravel(order="F")

    @property
    def sigma_M_sq(self) -> np.ndarray:
        return self.sigma_grid.ravel(order="F")

    def solve(self, s, fmt: FloatFormat = FP64) -> np.ndarray:
        s = np.asarray(s, dtype=np.float64)
        if s.shape != (self.n,):
            raise ValueError(f"dimension mismatch: preconditioner is {self.n}, rhs has shape {s.shape}")
        S = s.reshape(self.d_grid.shape, order="F")
        T = chopped_matmul(chopped_matmul(self.V_c.T, S, fmt), self.V_r, fmt)
        T = round_array(T / self.d_grid, fmt)
        H = chopped_matmul(chopped_matmul(self.V_c, T, fmt), self.V_r.T, fmt)
        return H.ravel(order="F")


def _build_kron_preconditioner(K: KronOperator, alpha2: float, pr1: FloatFormat):
    wr, Vr = _spectral_gram(K.Ar, pr1, orient=svd(K.Ar).V)
    wc, Vc = _spectral_gram(K.Ac, pr1, orient=svd(K.Ac).V)
    grid = round_array(np.multiply.outer(wc, wr), pr1)
    d = round_array(grid + alpha2, pr1)
    return KronTikPreconditioner(
        sigma_r_sq=wr, sigma_c_sq=wc, V_r=Vr, V_c=Vc, alpha2=float(alpha2),
        sigma_grid=grid, d_grid=d, format=pr1,
    )


# -- operator dispatch ---------------------------------------------------------


def matvec(A, x, fmt: FloatFormat = FP64) -> np.ndarray:
    if isinstance(A, KronOperator):
        return kron_matvec(A, x, fmt)
    return chopped_matvec(A, x, fmt)


def rmatvec(A, x, fmt: FloatFormat = FP64) -> np.ndarray:
    if isinstance(A, KronOperator):
        return kron_matvec(A.T, x, fmt)
    return chopped_matvec(np.asarray(A).T, x, fmt)


def save_matrix(path, A) -> None:
    """Write `A` as ``m n`` followed by rows of 17-significant-digit values."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    m, n = A.shape
    lines = [f"{m} {n}"]
    lines += [" ".join(f"{v:.17g}" for v in row) for row in A]
    Path(path).write_text("\n".join(lines) + "\n")


def load_matrix(path) -> np.ndarray:
    lines = Path(path).read_text().split("\n")
    m, n = (int(t) for t in lines[0].split())
    rows = [ln.split() for ln in lines[1:] if ln.strip()]
    if len(rows) != m or any(len(r) != n for r in rows):
        raise ValueError(f"{path}: expected {m} rows of {n} values")
    return np.array([[float(v) for v in r] for r in rows], dtype=np.float64).reshape(m, n)
