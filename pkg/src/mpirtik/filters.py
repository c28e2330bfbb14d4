"""Filter factors of Tikhonov, Landweber, preconditioned Landweber and IR.

Filter sets are indexed ``values[k, j]`` for iteration k = 0..K and singular
index j (0-based here, 1-based in CSV output).  The recursions take
``sigma_A`` and the preconditioner data ``d = sigma_M^2 + alpha^2`` aligned
index by index.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .fpsim import FP64, FloatFormat, PrecisionTriple, round_array
from .linalg import KronSvd, KronTikPreconditioner, SvdFactors

__all__ = [
    "FilterSet",
    "tikhonov_filters",
    "landweber_filters",
    "pl_filters_closed",
    "pl_filters_recursive",
    "ir_filters",
    "mpir_filters",
    "effective_filters",
    "effective_filter_set",
    "assemble_filtered",
]

KINDS = ("tikhonov", "landweber", "pl_closed", "pl_recursive", "ir_exact", "ir_mixed", "effective")


@dataclass(frozen=True)
class FilterSet:
    values: np.ndarray
    kind: str
    formats: PrecisionTriple | None = None
    flagged: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown filter kind {self.kind!r}")

    @property
    def K(self) -> int:
        return self.values.shape[0] - 1

    def __getitem__(self, k):
        return self.values[k]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "j", "value", "kind", "flagged"])
        flags = self.flagged
        if flags is not None and flags.ndim == 1:
            flags = np.broadcast_to(flags, self.values.shape)
        for k, row in enumerate(self.values):
            for j, v in enumerate(row):
                fl = int(flags[k, j]) if flags is not None else 0
                w.writerow([k, j + 1, f"{v:.17g}", self.kind, fl])
        return buf.getvalue()


def _d(P):
    return np.asarray(P.d_M_sq, dtype=np.float64)


def tikhonov_filters(sigmaA, alpha2: float) -> np.ndarray:
    if not alpha2 > 0:
        raise ValueError(f"alpha2 must be positive, got {alpha2!r}")
    s2 = np.asarray(sigmaA, dtype=np.float64) ** 2
    return s2 / (s2 + alpha2)


def landweber_filters(sigmaA, k: int) -> np.ndarray:
    """``1 - (1 - sigma^2)^k``; requires every sigma <= 1."""
    s = np.asarray(sigmaA, dtype=np.float64)
    if np.any(s > 1):
        raise ValueError("Landweber filters need singular values <= 1 (rescale A)")
    return 1.0 - (1.0 - s**2) ** k


def pl_filters_closed(sigmaA, P, k: int) -> np.ndarray:
    """Closed-form preconditioned Landweber filters ``1 - ((d - sigma_A^2) / d)^k``."""
    s2 = np.asarray(sigmaA, dtype=np.float64) ** 2
    d = _d(P)
    return 1.0 - ((d - s2) / d) ** k


def pl_filters_recursive(sigmaA, P, K: int, pr3: FloatFormat = FP64) -> FilterSet:
    """Preconditioned Landweber filters by the incremental recursion, in `pr3`.

    Each step adds ``(sigma_A^2 (1 - sigma_A^2 / d)^k) / d`` with every
    operation rounded to `pr3`.
    """
    rnd = lambda v: round_array(v, pr3)  # noqa: E731
    s2 = rnd(np.asarray(sigmaA, dtype=np.float64) ** 2)
    d = _d(P)
    base = rnd(1.0 - rnd(s2 / d))
    psi = np.zeros((K + 1, s2.size))
    pw = np.ones_like(s2)
    for k in range(K):
        q = rnd(s2 * pw)
        g = rnd(q / d)
        psi[k + 1] = rnd(psi[k] + g)
        pw = rnd(pw * base)
    return FilterSet(psi, "pl_recursive", formats=None)


def ir_filters(sigmaA, P, K: int) -> FilterSet:
    """Double-precision IR filters written through preconditioned Landweber.

    ``phi_k = psi_k - (alpha2 / d) sum_{i<k} (1 - sigma_A^2/d)^i phi_{k-1-i}``.
    """
    s2 = np.asarray(sigmaA, dtype=np.float64) ** 2
    d = _d(P)
    ratio = 1.0 - s2 / d
    a = P.alpha2 / d
    phi = np.zeros((K + 1, s2.size))
    for k in range(1, K + 1):
        hist = np.zeros_like(s2)
        for i in range(k):
            hist = hist + ratio**i * phi[k - 1 - i]
        phi[k] = pl_filters_closed(sigmaA, P, k) - a * hist
    return FilterSet(phi, "ir_exact")


def mpir_filters(sigmaA, P, K: int, triple: PrecisionTriple) -> FilterSet:
    """Filter factors of mixed precision IR.

    Step k -> k+1 computes, for each index,

    * ``q = d (psi_{k+1} - psi_k) - alpha2 phi_k
      + (alpha2 sigma_A^2 / d) sum_{i<k} (1 - sigma_A^2/d)^i phi_{k-1-i}`` in Pr3,
    * ``g = q / d`` and ``phi_{k+1} = phi_k + g`` in Pr2,

    with psi from :func:`pl_filters_recursive` in Pr3 and ``d`` the Pr1 data
    held by `P`.  The history sum is accumulated for ascending i.
    """
    _, pr2, pr3 = triple
    r3 = lambda v: round_array(v, pr3)  # noqa: E731
    r2 = lambda v: round_array(v, pr2)  # noqa: E731
    s2 = r3(np.asarray(sigmaA, dtype=np.float64) ** 2)
    d = _d(P)
    a2 = float(r3(P.alpha2))
    psi = pl_filters_recursive(sigmaA, P, K, pr3).values
    base = r3(1.0 - r3(s2 / d))
    coef = r3(r3(a2 * s2) / d)
    phi = np.zeros((K + 1, s2.size))
    for k in range(K):
        q = r3(r3(d * r3(psi[k + 1] - psi[k])) - r3(a2 * phi[k]))
        hist = np.zeros_like(s2)
        pw = np.ones_like(s2)
        for i in range(k):
            hist = r3(hist + r3(pw * phi[k - 1 - i]))
            pw = r3(pw * base)
        q = r3(q + r3(coef * hist))
        g = r2(r2(q) / d)
        phi[k + 1] = r2(phi[k] + g)
    return FilterSet(phi, "ir_mixed", formats=triple)


def _coefficients(x, svdA, V_M, b):
    """Return (sigma, V_M^T x, U^T b) in the index order of `svdA`."""
    x = np.asarray(x, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if isinstance(svdA, KronSvd):
        Vr, Vc = (V_M.V_r, V_M.V_c) if isinstance(V_M, KronTikPreconditioner) else V_M
        X = x.reshape((Vc.shape[0], Vr.shape[0]), order="F")
        B = b.reshape((svdA.sc.U.shape[0], svdA.sr.U.shape[0]), order="F")
        c = (Vc.T @ X @ Vr).ravel(order="F")
        beta = (svdA.sc.U.T @ B @ svdA.sr.U).ravel(order="F")
        return svdA.sigma_unsorted, c, beta
    return svdA.sigma, V_M.T @ x, svdA.U.T @ b


def effective_filters(x_k, svdA, V_M, b, guard: float = 1e-14, return_flags: bool = False):
    """Filter factors recovered from an iterate: ``sigma_j (v_Mj^T x) / (u_j^T b)``.

    Entries with ``|u_j^T b| < guard * ||b||`` are flagged as unreliable; their
    quotients are still returned (0 when both numerator and denominator vanish).

    For a Kronecker problem pass a :class:`~mpirtik.linalg.KronSvd` and either a
    :class:`~mpirtik.linalg.KronTikPreconditioner` or a ``(V_r, V_c)`` pair as
    `V_M`; the result is in Kronecker (unsorted) order.
    """
    sigma, c, beta = _coefficients(x_k, svdA, V_M, b)
    nb = np.linalg.norm(b)
    flags = np.abs(beta) < guard * nb
    num = sigma * c
    with np.errstate(divide="ignore", invalid="ignore"):
        omega = np.where(beta != 0, num / np.where(beta != 0, beta, 1.0), np.where(num == 0, 0.0, np.nan))
    if return_flags:
        return omega, flags
    return omega


def effective_filter_set(iterates, svdA, V_M, b, guard: float = 1e-14) -> FilterSet:
    rows, flags = [], None
    for x in iterates:
        om, flags = effective_filters(x, svdA, V_M, b, guard, return_flags=True)
        rows.append(om)
    return FilterSet(np.array(rows), "effective", flagged=flags)


def assemble_filtered(phi, svdA: SvdFactors, V_M, b) -> np.ndarray:
    """``sum_j phi_j (u_j^T b / sigma_j) v_Mj`` (dense problems)."""
    coef = np.asarray(phi) * (svdA.U.T @ b) / svdA.sigma
    return V_M @ coef
