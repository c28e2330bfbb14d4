"""Simulated reduced-precision floating point.

Values are carried as native float64 arrays and rounded to a target format
after every simulated operation, so a "fp16 number" is simply a double whose
unused fraction bits are zero.  Rounding is round-to-nearest, ties-to-even.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "FloatFormat",
    "PrecisionTriple",
    "FP16",
    "FP32",
    "FP64",
    "PRESETS",
    "NonFiniteInputError",
    "get_format",
    "unit_roundoff",
    "round_value",
    "round_array",
    "chopped_dot",
]


class NonFiniteInputError(ValueError):
    """Raised on NaN input when rounding in strict mode."""


@dataclass(frozen=True)
class FloatFormat:
    """A binary floating-point format described by its bit widths.

    ``mantissa_bits`` counts the stored fraction bits only; the implicit
    leading bit is not included (fp16 has 10, fp32 has 23, fp64 has 52).
    """

    name: str
    exponent_bits: int
    mantissa_bits: int
    supports_subnormals: bool = True

    def __post_init__(self):
        if int(self.exponent_bits) != self.exponent_bits or self.exponent_bits < 2:
            raise ValueError(f"exponent_bits must be an integer >= 2, got {self.exponent_bits!r}")
        if int(self.mantissa_bits) != self.mantissa_bits or self.mantissa_bits < 1:
            raise ValueError(f"mantissa_bits must be an integer >= 1, got {self.mantissa_bits!r}")
        if self.exponent_bits > 11 or self.mantissa_bits > 52:
            raise ValueError("formats wider than binary64 cannot be simulated in doubles")

    @property
    def is_native(self) -> bool:
        return (
            self.exponent_bits == 11
            and self.mantissa_bits == 52
            and self.supports_subnormals
        )

    @property
    def emax(self) -> int:
        return 2 ** (self.exponent_bits - 1) - 1

    @property
    def emin(self) -> int:
        return 1 - self.emax

    @property
    def max_finite(self) -> float:
        return math.ldexp(2.0 - 2.0 ** -self.mantissa_bits, self.emax)

    @property
    def min_normal(self) -> float:
        return math.ldexp(1.0, self.emin)

    @property
    def min_subnormal(self) -> float:
        return math.ldexp(1.0, self.emin - self.mantissa_bits)

    @property
    def unit_roundoff(self) -> float:
        return math.ldexp(1.0, -(self.mantissa_bits + 1))

    def __str__(self):
        return self.name


FP64 = FloatFormat("fp64", 11, 52)
FP32 = FloatFormat("fp32", 8, 23)
FP16 = FloatFormat("fp16", 5, 10)

PRESETS = {"fp64": FP64, "fp32": FP32, "fp16": FP16}
_SHORTHAND = {1: FP64, 2: FP32, 3: FP16}


def get_format(key, custom=None) -> FloatFormat:
    """Look up a format by shorthand integer (1, 2, 3), preset name or custom name."""
    if isinstance(key, FloatFormat):
        return key
    if isinstance(key, (int, np.integer)) and not isinstance(key, bool):
        try:
            return _SHORTHAND[int(key)]
        except KeyError:
            raise KeyError(f"unknown precision shorthand {key!r}; expected 1, 2 or 3") from None
    key = str(key).strip()
    if key.isdigit():
        return get_format(int(key))
    if custom and key in custom:
        return custom[key]
    if key.lower() in PRESETS:
        return PRESETS[key.lower()]
    raise KeyError(f"unknown floating-point format {key!r}")


def unit_roundoff(fmt: FloatFormat) -> float:
    """Return ``2**-(mantissa_bits + 1)``."""
    return fmt.unit_roundoff


@dataclass(frozen=True)
class PrecisionTriple:
    """Preconditioner, working and residual precisions (Pr1 <= Pr2 <= Pr3)."""

    pr1: FloatFormat
    pr2: FloatFormat
    pr3: FloatFormat

    def __post_init__(self):
        u1, u2, u3 = (f.unit_roundoff for f in (self.pr1, self.pr2, self.pr3))
        if not (u1 >= u2 >= u3):
            raise ValueError(
                f"precisions must satisfy Pr1 <= Pr2 <= Pr3, got ({self.pr1}, {self.pr2}, {self.pr3})"
            )

    @classmethod
    def from_spec(cls, spec, custom=None) -> "PrecisionTriple":
        """Build from ``(3, 2, 1)``, ``"(3,2,1)"`` or ``"fp16,fp32,fp64"``."""
        if isinstance(spec, PrecisionTriple):
            return spec
        if isinstance(spec, str):
            parts = [p.strip() for p in spec.strip().strip("()[]").split(",")]
        else:
            parts = list(spec)
        if len(parts) != 3:
            raise ValueError(f"a precision triple needs three entries, got {spec!r}")
        return cls(*(get_format(p, custom) for p in parts))

    @property
    def label(self) -> str:
        inv = {v: k for k, v in _SHORTHAND.items()}
        if all(f in inv for f in self):
            return "(" + ",".join(str(inv[f]) for f in self) + ")"
        return "(" + ",".join(f.name for f in self) + ")"

    def __iter__(self):
        return iter((self.pr1, self.pr2, self.pr3))

    def __str__(self):
        return self.label


def round_array(v, fmt: FloatFormat, strict: bool = False) -> np.ndarray:
    """Round every entry of `v` to the nearest value representable in `fmt`.

    Parameters
    ----------
    v : array_like
        Values in double precision.  ``+-inf`` is passed through.
    fmt : FloatFormat
        Target format.
    strict : bool, optional
        If True, raise :class:`NonFiniteInputError` when `v` contains NaN.
        Otherwise NaN propagates.

    Returns
    -------
    ndarray
        float64 array of the same shape.  Magnitudes beyond the largest
        finite value of `fmt` become ``+-inf``.
    """
    x = np.array(v, dtype=np.float64)
    if strict and np.isnan(x).any():
        raise NonFiniteInputError("NaN encountered while rounding")
    if fmt.is_native:
        return x
    t = fmt.mantissa_bits
    _, e = np.frexp(x)
    # frexp gives x = m * 2**e with 0.5 <= |m| < 1, so the exponent of the
    # leading bit is e - 1.  Below the normal range the quantum stays fixed.
    exp = np.maximum(e - 1, fmt.emin)
    shift = (t - exp).astype(np.int64)
    with np.errstate(invalid="ignore", over="ignore"):
        y = np.ldexp(np.rint(np.ldexp(x, shift)), -shift)
        if not fmt.supports_subnormals:
            tiny = np.abs(y) < fmt.min_normal
            if tiny.any():
                keep = np.abs(x) > 0.5 * fmt.min_normal
                y = np.where(tiny, np.where(keep, np.copysign(fmt.min_normal, x), np.copysign(0.0, x)), y)
        y = np.where(np.abs(y) > fmt.max_finite, np.copysign(np.inf, x), y)
    return y


def round_value(x: float, fmt: FloatFormat, strict: bool = False) -> float:
    """Scalar version of :func:`round_array`."""
    return float(round_array(x, fmt, strict=strict))


def chopped_dot(a, b, fmt: FloatFormat) -> float:
    """Inner product with every product and partial sum rounded to `fmt`.

    Accumulation runs in ascending index order with a single accumulator;
    inputs are rounded to `fmt` first.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    a = round_array(a, fmt)
    b = round_array(b, fmt)
    prods = round_array(a * b, fmt)
    acc = 0.0
    for p in prods:
        acc = round_value(acc + p, fmt)
    return acc
