"""Test problems: the 1-D Spectra blur and a separable 2-D deblurring problem."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .linalg import KronOperator, load_matrix, matvec, save_matrix

__all__ = [
    "InverseProblem",
    "gen_spectra",
    "spectra_signal",
    "gen_deblur2d",
    "disk_image",
    "gaussian_psf",
    "psf_toeplitz",
    "add_noise",
    "make_problem",
    "save_problem",
    "load_problem",
]

# (center as a fraction of n, width in samples, height)
SPECTRA_PEAKS = (
    (0.20, 1.5, 0.8),
    (0.41, 3.0, 1.0),
    (0.56, 1.0, 0.5),
    (0.80, 2.0, 0.7),
)

# (row fraction, column fraction, radius fraction, intensity)
DISKS = (
    (0.30, 0.30, 0.12, 1.0),
    (0.65, 0.40, 0.08, 0.7),
    (0.45, 0.72, 0.10, 0.85),
    (0.80, 0.78, 0.05, 0.5),
)


@dataclass(frozen=True)
class InverseProblem:
    A: object
    b_exact: np.ndarray
    b: np.ndarray
    x_true: np.ndarray
    noise_level_percent: float = 0.0
    seed: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def noise(self) -> np.ndarray:
        return self.b - self.b_exact


def spectra_signal(n: int) -> np.ndarray:
    """Synthetic X-ray-spectrum-like signal: four Gaussian peaks on zero."""
    t = np.arange(n, dtype=np.float64)
    x = np.zeros(n)
    for frac, width, height in SPECTRA_PEAKS:
        x += height * np.exp(-((t - frac * (n - 1)) ** 2) / (2.0 * width**2))
    return x


def gen_spectra(n: int = 64, eta: float = 2.0):
    """Symmetric Gaussian-blur Toeplitz matrix and its bundled true signal.

    ``a[i, j] = exp(-(i - j)**2 / (2 eta**2)) / (eta sqrt(2 pi))``.
    """
    if int(n) != n or n < 2:
        raise ValueError(f"n must be an integer >= 2, got {n!r}")
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta!r}")
    n = int(n)
    k = np.arange(n, dtype=np.float64)
    col = np.exp(-(k**2) / (2.0 * eta**2)) / (eta * np.sqrt(2.0 * np.pi))
    i = np.arange(n)
    A = col[np.abs(i[:, None] - i[None, :])]
    return A, spectra_signal(n)


def gaussian_psf(psf_eta: float, psf_size: int) -> np.ndarray:
    """Separable, unit-mass Gaussian PSF of odd side `psf_size` (rank one)."""
    g = _gauss1d(psf_eta, psf_size)
    return np.outer(g, g)


def _gauss1d(psf_eta, psf_size):
    h = psf_size // 2
    k = np.arange(-h, h + 1, dtype=np.float64)
    with np.errstate(under="ignore"):
        g = np.exp(-(k**2) / (2.0 * psf_eta**2))
    return g / g.sum()


def psf_toeplitz(g, n: int) -> np.ndarray:
    """Banded Toeplitz convolution matrix of 1-D kernel `g` with zero boundaries."""
    g = np.asarray(g, dtype=np.float64)
    h = g.size // 2
    i = np.arange(n)
    off = i[:, None] - i[None, :] + h
    T = np.zeros((n, n))
    inside = (off >= 0) & (off < g.size)
    T[inside] = g[off[inside]]
    return T


def disk_image(nr: int, nc: int) -> np.ndarray:
    """Bright disks on a black background, shape ``(nr, nc)``."""
    r = np.arange(nr)[:, None] / max(nr - 1, 1)
    c = np.arange(nc)[None, :] / max(nc - 1, 1)
    X = np.zeros((nr, nc))
    for rf, cf, rad, val in DISKS:
        X = np.where((r - rf) ** 2 + (c - cf) ** 2 <= rad**2, np.maximum(X, val), X)
    return X


def gen_deblur2d(nr: int = 32, nc: int = 32, psf_eta: float = 2.0, psf_size: int = 9):
    """Separable Gaussian blur ``Ar (x) Ac`` on an ``nr x nc`` image.

    Returns the operator and the column-major vectorized true image.
    """
    if nr < 1 or nc < 1:
        raise ValueError("image sizes must be positive")
    if psf_size % 2 != 1 or psf_size > min(nr, nc):
        raise ValueError(f"psf_size must be odd and <= min(nr, nc), got {psf_size}")
    if not psf_eta > 0:
        raise ValueError(f"psf_eta must be positive, got {psf_eta!r}")
    g = _gauss1d(psf_eta, psf_size)
    K = KronOperator(Ar=psf_toeplitz(g, nc), Ac=psf_toeplitz(g, nr))
    return K, disk_image(nr, nc).ravel(order="F")


def add_noise(b_exact, mu: float, seed: int) -> np.ndarray:
    """Gaussian noise scaled so that ``100 * ||e|| / ||b_exact|| == mu``.

    Draws come from numpy's PCG64 bit generator seeded with `seed`.
    """
    b_exact = np.asarray(b_exact, dtype=np.float64)
    if mu < 0:
        raise ValueError(f"noise level must be >= 0, got {mu!r}")
    if mu == 0:
        return np.zeros_like(b_exact)
    nb = np.linalg.norm(b_exact)
    if nb == 0:
        raise ValueError("cannot scale noise relative to an all-zero right-hand side")
    rng = np.random.Generator(np.random.PCG64(seed))
    e = rng.standard_normal(b_exact.shape)
    return e * (mu / 100.0 * nb / np.linalg.norm(e))


def make_problem(kind: str = "spectra", mu: float = 1.0, seed: int = 42, **params) -> InverseProblem:
    """Generate a named problem and its noisy data."""
    if kind == "spectra":
        n, eta = params.get("n", 64), params.get("eta", 2.0)
        A, x = gen_spectra(n, eta)
        meta = {"kind": "spectra", "n": n, "eta": eta}
    elif kind == "deblur2d":
        p = {"nr": 32, "nc": 32, "psf_eta": 2.0, "psf_size": 9}
        p.update(params)
        A, x = gen_deblur2d(**p)
        meta = {"kind": "deblur2d", **p}
    else:
        raise ValueError(f"unknown problem kind {kind!r}")
    b_exact = A @ x
    e = add_noise(b_exact, mu, seed)
    meta.update(mu=mu, seed=seed)
    return InverseProblem(A=A, b_exact=b_exact, b=b_exact + e, x_true=x,
                          noise_level_percent=float(mu), seed=int(seed), meta=meta)


def _save_vector(path, v):
    Path(path).write_text("".join(f"{x:.17g}\n" for x in v))


def _load_vector(path):
    return np.array([float(t) for t in Path(path).read_text().split()], dtype=np.float64)


def save_problem(problem: InverseProblem, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    if isinstance(problem.A, KronOperator):
        save_matrix(d / "A_r.txt", problem.A.Ar)
        save_matrix(d / "A_c.txt", problem.A.Ac)
    else:
        save_matrix(d / "A.txt", problem.A)
    _save_vector(d / "b.txt", problem.b)
    _save_vector(d / "b_exact.txt", problem.b_exact)
    _save_vector(d / "x_true.txt", problem.x_true)
    meta = dict(problem.meta)
    meta.setdefault("mu", problem.noise_level_percent)
    meta.setdefault("seed", problem.seed)
    (d / "meta").write_text("".join(f"{k} = {v}\n" for k, v in meta.items()))
    return d


def load_problem(directory) -> InverseProblem:
    d = Path(directory)
    meta = {}
    for line in (d / "meta").read_text().splitlines():
        if "=" in line:
            k, v = (t.strip() for t in line.split("=", 1))
            meta[k] = v
    if (d / "A_r.txt").exists():
        A = KronOperator(load_matrix(d / "A_r.txt"), load_matrix(d / "A_c.txt"))
    else:
        A = load_matrix(d / "A.txt")
    x = _load_vector(d / "x_true.txt")
    b_exact = _load_vector(d / "b_exact.txt")
    b = _load_vector(d / "b.txt")
    if matvec(A, x).shape != b.shape:
        raise ValueError(f"{d}: operator and data sizes disagree")
    return InverseProblem(A=A, b_exact=b_exact, b=b, x_true=x,
                          noise_level_percent=float(meta.get("mu", 0.0)),
                          seed=int(meta.get("seed", 0)), meta=meta)
