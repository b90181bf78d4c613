"""Norms on R^m / R^n with exact comparison keys, and the theta matrix type."""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import mpmath

try:
    import gmpy2
except ImportError:  # pragma: no cover
    gmpy2 = None

KINDS = ("sup", "euclidean", "weighted-sup")


@dataclass(frozen=True)
class NormSpec:
    """A norm ||x|| = scale * base(x) on R^dimension.

    ``key`` returns an exact rational that is monotone in the norm:
    the norm itself for sup-type norms, its square for the euclidean norm
    (``power`` records which).  All set-membership decisions compare keys.
    """

    kind: str = "sup"
    dimension: int = 1
    scale: Fraction = Fraction(1)
    weights: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown norm kind {self.kind!r}")
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        object.__setattr__(self, "scale", Fraction(self.scale))
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if self.kind == "weighted-sup":
            if self.weights is None or len(self.weights) != self.dimension:
                raise ValueError("weighted-sup needs one weight per coordinate")
            w = tuple(Fraction(x) for x in self.weights)
            if any(x <= 0 for x in w):
                raise ValueError("weights must be positive")
            object.__setattr__(self, "weights", w)
        elif self.weights is not None:
            raise ValueError("weights only apply to weighted-sup")
        if not self.volume_ok():
            raise ValueError(
                f"unit ball volume {self.unit_ball_volume():.6g} is below 2^{self.dimension}")

    @property
    def power(self) -> int:
        return 2 if self.kind == "euclidean" else 1

    def _w(self):
        return self.weights if self.weights is not None else (1,) * self.dimension

    def unit_ball_volume(self) -> float:
        d = self.dimension
        if self.kind == "euclidean":
            return math.pi ** (d / 2) / math.gamma(d / 2 + 1) / float(self.scale) ** d
        prod = Fraction(1)
        for w in self._w():
            prod *= w
        return float(Fraction(2) ** d / (self.scale ** d * prod))

    def volume_ok(self) -> bool:
        # Non-strict: the absolute value on R (volume exactly 2) must pass.
        d = self.dimension
        if self.kind == "euclidean":
            if d == 1:
                return self.scale <= 1
            return self.unit_ball_volume() >= 2 ** d
        prod = Fraction(1)
        for w in self._w():
            prod *= w
        return self.scale ** d * prod <= 1

    def key(self, x: Sequence) -> Fraction:
        if self.kind == "euclidean":
            return self.scale ** 2 * sum(Fraction(t) ** 2 for t in x)
        return self.scale * max(w * abs(Fraction(t)) for w, t in zip(self._w(), x))

    def int_key(self, x: Sequence[int]):
        """Key up to a fixed positive factor, for integer vectors (fast path)."""
        if self.kind == "euclidean":
            return sum(t * t for t in x)
        if self.weights is None:
            return max(abs(t) for t in x)
        return max(w * abs(t) for w, t in zip(self.weights, x))

    def key_to_norm(self, key) -> float:
        return math.sqrt(key) if self.power == 2 else float(key)

    def norm(self, x: Sequence) -> float:
        if self.kind == "euclidean":
            return float(self.scale) * math.sqrt(sum(float(t) ** 2 for t in x))
        return float(self.scale) * max(float(w) * abs(float(t)) for w, t in zip(self._w(), x))

    def coord_bound(self) -> Fraction:
        """c with max_i |x_i| <= c ||x|| for all x."""
        if self.kind == "euclidean":
            return 1 / self.scale
        return 1 / (self.scale * min(self._w()))

    def ones_norm(self) -> float:
        """Largest norm of a vector whose coordinates lie in [-1, 1]."""
        if self.kind == "euclidean":
            return float(self.scale) * math.sqrt(self.dimension)
        return float(self.scale * max(self._w()))


def abs_norm() -> NormSpec:
    return NormSpec("sup", 1)


def default_norms(m: int, n: int) -> tuple:
    return NormSpec("sup", m), NormSpec("sup", n)


def cmp_exp(key: Fraction, exponent: Fraction) -> int:
    """Sign of key - exp(exponent) for rational key and rational exponent.

    exp of a nonzero rational is transcendental, so equality only happens at
    exponent 0, which is decided exactly.  Otherwise precision is raised
    until the interval evaluation separates the two numbers.
    """
    key = Fraction(key)
    exponent = Fraction(exponent)
    if exponent == 0:
        return (key > 1) - (key < 1)
    if key <= 0:
        return -1
    prec = 128
    while True:
        with iv_precision(prec) as iv:
            diff = iv.mpf(key.numerator) / key.denominator - iv.exp(
                iv.mpf(exponent.numerator) / exponent.denominator)
            if diff.a > 0:
                return 1
            if diff.b < 0:
                return -1
        prec *= 2
        if prec > 1 << 16:  # pragma: no cover - would need astronomically close inputs
            raise ArithmeticError("could not separate key from exp(exponent)")


def _digits(k: int) -> str:
    # gmpy2 converts large integers quickly and without the str() digit cap
    if gmpy2 is not None:
        return gmpy2.mpz(k).digits()
    return str(k)  # pragma: no cover


def rational_str(x) -> str:
    """Exact "num/den" form of a rational."""
    x = Fraction(x)
    return f"{_digits(x.numerator)}/{_digits(x.denominator)}"


def parse_rational(text) -> Fraction:
    """Inverse of :func:`rational_str`; also accepts integers and decimals."""
    if isinstance(text, (int, Fraction)):
        return Fraction(text)
    text = str(text).strip()
    if "/" in text:
        num, den = text.split("/", 1)
        if gmpy2 is not None:
            return Fraction(int(gmpy2.mpz(num.strip())), int(gmpy2.mpz(den.strip())))
        return Fraction(int(num), int(den))  # pragma: no cover
    return Fraction(text)


@contextmanager
def iv_precision(prec: int):
    """mpmath's interval context at ``prec`` bits, restored on exit."""
    iv = mpmath.iv
    old = iv.prec
    iv.prec = prec
    try:
        yield iv
    finally:
        iv.prec = old


def _frac_matrix(rows) -> tuple:
    return tuple(tuple(Fraction(x) for x in row) for row in rows)


@dataclass(frozen=True)
class MatrixTheta:
    """An m x n matrix of exact rationals with an optional error bound.

    ``precision_tag`` bounds the entrywise distance to the ideal real matrix
    this rational stands for (``None`` means theta is exact).
    """

    entries: tuple
    precision_tag: Optional[Fraction] = None
    _int_form: tuple = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        rows = _frac_matrix(self.entries)
        if not rows or not rows[0] or any(len(r) != len(rows[0]) for r in rows):
            raise ValueError("theta must be a nonempty rectangular matrix")
        object.__setattr__(self, "entries", rows)
        if self.precision_tag is not None:
            object.__setattr__(self, "precision_tag", Fraction(self.precision_tag))
        den = 1
        for r in rows:
            for x in r:
                den = den * x.denominator // math.gcd(den, x.denominator)
        nums = tuple(tuple(int(x * den) for x in r) for r in rows)
        object.__setattr__(self, "_int_form", (nums, den))

    @classmethod
    def scalar(cls, value, precision_tag=None) -> "MatrixTheta":
        return cls(((Fraction(value),),), precision_tag)

    @property
    def m(self) -> int:
        return len(self.entries)

    @property
    def n(self) -> int:
        return len(self.entries[0])

    @property
    def int_form(self):
        """(N, D) with theta = N / D, N an integer matrix, D > 0."""
        return self._int_form

    def apply(self, q: Sequence[int]) -> tuple:
        return tuple(sum(row[j] * q[j] for j in range(self.n)) for row in self.entries)

    def residual(self, p: Sequence[int], q: Sequence[int]) -> tuple:
        return tuple(pi + t for pi, t in zip(p, self.apply(q)))

    def __add__(self, other: "MatrixTheta") -> "MatrixTheta":
        return MatrixTheta(tuple(tuple(a + b for a, b in zip(r, s))
                                 for r, s in zip(self.entries, other.entries)))

    def to_strings(self) -> list:
        return [[rational_str(x) for x in row] for row in self.entries]
