"""Direct and iterative solvers for the Tikhonov problem.

All iterative solvers start from ``x0 = 0`` and return a :class:`RunRecord`.
Where a routine is annotated with precisions, every kernel is evaluated with
per-operation rounding (see :mod:`mpirtik.linalg`); iterates are stored as the
float64 values that a simulated format embeds into.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field

import numpy as np

from .fpsim import FP64, FloatFormat, PrecisionTriple, round_array
from .linalg import (
    KronOperator,
    build_preconditioner,
    chan_circulant,
    circulant_eigvals,
    kron_matvec,
    kron_svd,
    matvec,
    rmatvec,
    svd,
)
from .metrics import rre, srre

__all__ = [
    "DOUBLE",
    "SolverConfig",
    "RunRecord",
    "tikhonov_direct",
    "landweber_run",
    "pl_run",
    "ir_run",
    "mpir_run",
    "air_run",
    "air_preconditioner",
    "ir_from_pl",
    "DIVERGENCE_FACTOR",
]

DOUBLE = PrecisionTriple(FP64, FP64, FP64)
DIVERGENCE_FACTOR = 1e12


@dataclass(frozen=True)
class SolverConfig:
    alpha2: float
    max_iters: int = 10
    precisions: PrecisionTriple = DOUBLE
    zeta: float = 1.0

    def __post_init__(self):
        if not self.alpha2 > 0:
            raise ValueError(f"alpha2 must be positive, got {self.alpha2!r}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ValueError(f"max_iters must be a positive integer, got {self.max_iters!r}")
        if not 0 < self.zeta <= 1:
            raise ValueError(f"zeta must lie in (0, 1], got {self.zeta!r}")
        if not isinstance(self.precisions, PrecisionTriple):
            object.__setattr__(self, "precisions", PrecisionTriple.from_spec(self.precisions))


@dataclass
class RunRecord:
    """Iterates and diagnostics of one solver run.

    ``iterates[k]``, ``residual_norms[k]`` and ``rre_history[k]`` all refer to
    iteration k, with k = 0 the zero starting vector.
    """

    method: str
    iterates: list
    residual_norms: np.ndarray
    rre_history: np.ndarray | None
    diverged: bool
    wall_times: np.ndarray
    label: str = ""
    step_norms: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def n_iter(self) -> int:
        return len(self.iterates) - 1

    @property
    def x(self) -> np.ndarray:
        return self.iterates[-1]

    def srre(self, first: int = 3, last: int = 10):
        """Windowed (mean, std) of the RRE; ``(inf, inf)`` if the run stopped early."""
        if self.rre_history is None:
            raise ValueError("run has no RRE history (no true solution supplied)")
        h = self.rre_history[1:]
        if h.size < last:
            if self.diverged:
                return float("inf"), float("inf")
            raise ValueError(f"run has {h.size} iterations, window needs {last}")
        return srre(h, first, last)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter", "rre", "residual_norm", "diverged"])
        last = self.n_iter
        for k in range(last + 1):
            r = "" if self.rre_history is None else f"{self.rre_history[k]:.17g}"
            w.writerow([k, r, f"{self.residual_norms[k]:.17g}", int(self.diverged and k == last)])
        return buf.getvalue()


def _residual_norm(A, b, x):
    return float(np.linalg.norm(b - matvec(A, x)))


def _iterate(method, A, b, step, max_iters, x_true=None, label=""):
    b = np.asarray(b, dtype=np.float64)
    n = A.shape[1]
    x = np.zeros(n)
    iterates = [x]
    res = [_residual_norm(A, b, x)]
    hist = [rre(x, x_true)] if x_true is not None else None
    times, steps = [], []
    limit = DIVERGENCE_FACTOR * np.linalg.norm(b)
    diverged = False
    for _ in range(max_iters):
        t0 = time.perf_counter()
        x_new = step(x)
        times.append(time.perf_counter() - t0)
        if not np.isfinite(x_new).all():
            diverged = True
            break
        steps.append(float(np.linalg.norm(x_new - x)))
        x = x_new
        iterates.append(x)
        res.append(_residual_norm(A, b, x) if np.linalg.norm(x) <= limit else float("inf"))
        if hist is not None:
            hist.append(rre(x, x_true))
        if np.linalg.norm(x) > limit:
            diverged = True
            break
    return RunRecord(
        method=method, iterates=iterates, residual_norms=np.array(res),
        rre_history=None if hist is None else np.array(hist), diverged=diverged,
        wall_times=np.array(times), label=label, step_norms=np.array(steps),
    )


def _svd_any(A):
    return kron_svd(A) if isinstance(A, KronOperator) else svd(A)


def tikhonov_direct(A, b, alpha2: float) -> np.ndarray:
    """``(A^T A + alpha2 I)^{-1} A^T b`` through the SVD of `A`."""
    if not alpha2 > 0:
        raise ValueError(f"alpha2 must be positive, got {alpha2!r}")
    b = np.asarray(b, dtype=np.float64)
    if isinstance(A, KronOperator):
        f = kron_svd(A)
        B = b.reshape((A.Ac.shape[0], A.Ar.shape[0]), order="F")
        s = f.grid
        C = (f.sc.U.T @ B @ f.sr.U) * (s / (s**2 + alpha2))
        return (f.sc.V @ C @ f.sr.V.T).ravel(order="F")
    f = svd(A)
    return f.V @ ((f.sigma / (f.sigma**2 + alpha2)) * (f.U.T @ b))


def landweber_run(A, b, config: SolverConfig, x_true=None) -> RunRecord:
    """Classical Landweber ``x <- x + zeta A^T (b - A x)`` in double precision."""
    f = _svd_any(A)
    sigma1 = float(np.max(f.sigma))
    if sigma1**2 * config.zeta > 1:
        raise ValueError(f"zeta * sigma_1^2 = {config.zeta * sigma1**2:.6g} exceeds 1")
    b = np.asarray(b, dtype=np.float64)
    zeta = config.zeta

    def step(x):
        return x + zeta * rmatvec(A, b - matvec(A, x))

    return _iterate("landweber", A, b, step, config.max_iters, x_true)


def pl_run(A, b, P, k: int, pr3: FloatFormat = FP64, x_true=None) -> RunRecord:
    """Preconditioned Landweber with every step evaluated in `pr3`.

    `P` is a preconditioner from :func:`~mpirtik.linalg.build_preconditioner`,
    typically built in a lower precision.
    """
    b3 = round_array(b, pr3)

    def step(x):
        r = round_array(b3 - matvec(A, x, pr3), pr3)
        s = rmatvec(A, r, pr3)
        h = P.solve(s, pr3)
        return round_array(x + h, pr3)

    return _iterate("pl", A, b, step, k, x_true)


def _refinement_step(A, b, P, alpha2, pr2, pr3):
    b3 = round_array(b, pr3)
    a3 = float(round_array(alpha2, pr3))

    def step(x):
        r = round_array(b3 - matvec(A, x, pr3), pr3)
        s = round_array(rmatvec(A, r, pr3) - round_array(a3 * x, pr3), pr3)
        h = P.solve(s, pr2)
        return round_array(x + h, pr2)

    return step


def mpir_run(A, b, config: SolverConfig, x_true=None, P=None) -> RunRecord:
    """Mixed precision iterative refinement on the Tikhonov problem.

    The preconditioner is built in Pr1, residual and right-hand side ``s`` are
    formed in Pr3, and the correction solve and update run in Pr2.

    Parameters
    ----------
    A : ndarray or KronOperator
    b : ndarray
    config : SolverConfig
        ``config.precisions`` selects (Pr1, Pr2, Pr3).
    x_true : ndarray, optional
        If given, the RRE of every iterate is recorded.
    P : preconditioner, optional
        Reuse a preconditioner already built in Pr1.
    """
    pr1, pr2, pr3 = config.precisions
    if P is None:
        P = build_preconditioner(A, config.alpha2, pr1)
    step = _refinement_step(A, b, P, config.alpha2, pr2, pr3)
    return _iterate("mpir", A, b, step, config.max_iters, x_true, label=config.precisions.label)


def ir_run(A, b, config: SolverConfig, x_true=None, P=None) -> RunRecord:
    """Iterative refinement in double precision.

    The correction equation is solved with the double-precision spectral
    factorization of ``A^T A + alpha2 I``; this is exactly :func:`mpir_run`
    with all three precisions set to fp64.
    """
    cfg = SolverConfig(config.alpha2, config.max_iters, DOUBLE, config.zeta)
    rec = mpir_run(A, b, cfg, x_true=x_true, P=P)
    rec.method = "ir"
    return rec


def air_preconditioner(A, alpha2: float):
    """Return ``s -> (C^T C + alpha2 I)^{-1} s`` for the optimal circulant ``C`` of `A`.

    For a :class:`KronOperator` each factor is replaced by its optimal
    circulant, so ``C`` is block circulant with circulant blocks and is
    diagonalized by the 2-D DFT.
    """
    if isinstance(A, KronOperator):
        lr = circulant_eigvals(chan_circulant(A.Ar))
        lc = circulant_eigvals(chan_circulant(A.Ac))
        D = np.multiply.outer(np.abs(lc) ** 2, np.abs(lr) ** 2) + alpha2
        shape = D.shape

        def solve(s):
            S = np.asarray(s).reshape(shape, order="F")
            return np.real(np.fft.ifft2(np.fft.fft2(S) / D)).ravel(order="F")

        return solve
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("AIR needs a square matrix or a Kronecker operator")
    d = np.abs(circulant_eigvals(chan_circulant(A))) ** 2 + alpha2

    def solve(s):
        return np.real(np.fft.ifft(np.fft.fft(s) / d))

    return solve


def air_run(A, b, config: SolverConfig, x_true=None) -> RunRecord:
    """Iterative refinement with the circulant preconditioner ``C^T C + alpha2 I``."""
    solve = air_preconditioner(A, config.alpha2)
    b = np.asarray(b, dtype=np.float64)
    alpha2 = config.alpha2

    def step(x):
        s = rmatvec(A, b - matvec(A, x)) - alpha2 * x
        return x + solve(s)

    return _iterate("air", A, b, step, config.max_iters, x_true)


def ir_from_pl(A, P, pl_iterates, ir_iterates, k: int) -> np.ndarray:
    """Assemble the k-th refinement iterate from preconditioned Landweber iterates.

    Evaluates ``x_PL[k] - alpha2 Minv sum_{i<k} (I - A^T A Minv)^i x_IR[k-1-i]``
    in double precision, where ``Minv`` applies ``(M^T M)^{-1}``.
    """
    if k < 1:
        return np.zeros_like(pl_iterates[0])

    def minv(v):
        return P.solve(v, FP64)

    def T(v):
        return v - rmatvec(A, matvec(A, minv(v)))

    acc = np.zeros_like(pl_iterates[0])
    for i in range(k):
        v = ir_iterates[k - 1 - i]
        for _ in range(i):
            v = T(v)
        acc = acc + v
    return pl_iterates[k] - P.alpha2 * minv(acc)
