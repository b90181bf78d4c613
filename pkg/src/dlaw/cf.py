"""Exact continued fractions, convergents and approximation coefficients.

All inputs are :class:`fractions.Fraction` values.  A real number that is
only known to finite precision is represented by a rational approximation
together with an error bound; :func:`trusted_prefix` says how many partial
quotients of the approximation are shared by every real within that bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

try:
    import gmpy2

    _mpz = gmpy2.mpz
except ImportError:  # pragma: no cover - gmpy2 is a declared dependency
    gmpy2 = None
    _mpz = int


@dataclass(frozen=True)
class CFExpansion:
    a0: int
    partial_quotients: tuple
    trusted_terms: int
    terminated: bool = True

    def __post_init__(self):
        if any(a < 1 for a in self.partial_quotients):
            raise ValueError("partial quotients a_j (j >= 1) must be positive")
        if not 0 <= self.trusted_terms <= len(self.partial_quotients):
            raise ValueError("trusted_terms out of range")

    def __len__(self):
        return len(self.partial_quotients)

    @property
    def quotients(self) -> tuple:
        """All quotients a_0, a_1, ..., a_K."""
        return (self.a0,) + tuple(self.partial_quotients)


@dataclass(frozen=True)
class ConvergentSeq:
    pairs: tuple  # ((p_0, q_0), (p_1, q_1), ...)

    def __len__(self):
        return len(self.pairs)

    def __getitem__(self, k):
        return self.pairs[k]

    def fractions(self) -> list:
        return [Fraction(p, q) for p, q in self.pairs]


def _euclid(num: int, den: int, max_terms: Optional[int]):
    """Quotients of num/den (den > 0); returns (a0, tail, terminated)."""
    a, b = _mpz(num), _mpz(den)
    a0, r = divmod(a, b)
    tail = []
    a, b = b, r
    while b and (max_terms is None or len(tail) < max_terms):
        q, r = divmod(a, b)
        tail.append(int(q))
        a, b = b, r
    return int(a0), tail, not b


def cf_expand(theta: Fraction, max_terms: Optional[int] = None,
              error_bound: Optional[Fraction] = None) -> CFExpansion:
    """Continued fraction of ``theta`` by the Euclidean algorithm.

    At most ``max_terms`` partial quotients a_1.. are produced (all of them
    when ``None``).  If ``error_bound`` is given, ``theta`` is treated as an
    approximation of an unknown real and ``trusted_terms`` counts the leading
    partial quotients certified by :func:`trusted_prefix`.
    """
    theta = Fraction(theta)
    if max_terms is not None and max_terms < 0:
        raise ValueError("max_terms must be >= 0")
    a0, tail, terminated = _euclid(theta.numerator, theta.denominator, max_terms)
    if error_bound is None or error_bound == 0:
        trusted = len(tail)
    else:
        trusted = min(len(tail), trusted_prefix(theta, error_bound))
    return CFExpansion(a0, tuple(tail), trusted, terminated)


def convergents(cf: CFExpansion | Sequence[int]) -> ConvergentSeq:
    """Convergents p_k/q_k via the three-term recurrence."""
    quotients = cf.quotients if isinstance(cf, CFExpansion) else tuple(cf)
    p_prev, q_prev = 1, 0
    p, q = quotients[0], 1
    pairs = [(p, q)]
    for a in quotients[1:]:
        p, p_prev = a * p + p_prev, p
        q, q_prev = a * q + q_prev, q
        pairs.append((p, q))
    return ConvergentSeq(tuple(pairs))


def fold(quotients: Sequence[int]) -> Fraction:
    """Evaluate [a_0; a_1, ..., a_K] exactly."""
    value = Fraction(quotients[-1])
    for a in reversed(quotients[:-1]):
        value = a + 1 / value
    return value


def approx_coefficient(theta: Fraction, p: int, q: int) -> Fraction:
    """q * |theta q - p|, exactly."""
    if q < 1:
        raise ValueError("q must be >= 1")
    return q * abs(Fraction(theta) * q - p)


def _shared_prefix(x: Fraction, y: Fraction) -> int:
    # Cylinder sets are intervals, so a prefix shared by both endpoints (at
    # non-terminal positions) is shared by everything in between.
    ax0, xt, _ = _euclid(x.numerator, x.denominator, None)
    ay0, yt, _ = _euclid(y.numerator, y.denominator, None)
    if ax0 != ay0 or not xt or not yt:
        return 0
    k = 0
    limit = min(len(xt), len(yt)) - 1  # exclude each expansion's last quotient
    while k < limit and xt[k] == yt[k]:
        k += 1
    return k


def trusted_prefix(theta_approx: Fraction, error_bound: Fraction) -> int:
    """Number of leading partial quotients a_1..a_K certified for every real
    within ``error_bound`` of ``theta_approx``.

    Returns 0 when not even a_0, a_1 are certified.  A zero bound trusts the
    whole expansion.
    """
    theta_approx = Fraction(theta_approx)
    error_bound = Fraction(error_bound)
    if error_bound < 0:
        raise ValueError("error_bound must be nonnegative")
    if error_bound == 0:
        return len(cf_expand(theta_approx).partial_quotients)
    return _shared_prefix(theta_approx - error_bound, theta_approx + error_bound)


def legendre_trusted_prefix(theta_approx: Fraction, error_bound: Fraction) -> int:
    """Heuristic count: largest K with 2 q_K q_{K+1} error_bound < 1.

    Cheaper than :func:`trusted_prefix` but not a certificate on its own.
    """
    cf = cf_expand(theta_approx)
    qs = [q for _, q in convergents(cf).pairs]
    k = 0
    while k + 1 < len(qs) and 2 * qs[k] * qs[k + 1] * error_bound < 1:
        k += 1
    return max(k - 1, 0)


@dataclass(frozen=True)
class CoefficientStream:
    """Floating-point statistics of the convergents of one rational theta.

    ``coeff[k]`` is q_k |theta q_k - p_k| and ``log_q[k]`` is log q_k for
    k = 0..K; ``a1`` is the first partial quotient (0 if there is none).
    """

    coeff: np.ndarray
    log_q: np.ndarray
    a1: int
    trusted_terms: int

    def best_mask(self) -> np.ndarray:
        """Convergents that are best approximates (drops k=0 when a_1 = 1)."""
        mask = np.ones(len(self.coeff), dtype=bool)
        if self.a1 == 1:
            mask[0] = False
        return mask


def coefficient_stream(cf: CFExpansion, error_bound: Optional[Fraction] = None) -> CoefficientStream:
    """Approximation coefficients of every convergent, in float64.

    Uses c_k = 1 / (x_{k+1} + q_{k-1}/q_k) where x_{k+1} is the complete
    quotient; both pieces obey contracting recursions, so no big-integer
    convergent is ever formed.

    With ``error_bound`` the stream's ``trusted_terms`` is recomputed by
    :func:`_cylinder_trusted` from the same float data instead of being
    taken from ``cf``.
    """
    quotients = cf.quotients
    big = float(np.finfo(float).max)
    a = np.array([min(float(x), big) for x in quotients])
    K = len(a) - 1
    # complete quotients x_k = a_k + 1/x_{k+1}, with x_K = a_K
    x = np.empty(K + 2)
    x[K + 1] = math.inf
    for k in range(K, 0, -1):
        x[k] = a[k] + (1.0 / x[k + 1] if k < K else 0.0)
    # s_k = q_{k-1}/q_k
    s = np.empty(K + 1)
    s[0] = 0.0
    for k in range(1, K + 1):
        s[k] = 1.0 / (a[k] + s[k - 1])
    coeff = 1.0 / (x[1:K + 2] + s)
    log_q = np.concatenate(([0.0], np.cumsum(-np.log(s[1:]))))
    a1 = int(quotients[1]) if K >= 1 else 0
    trusted = cf.trusted_terms
    if error_bound is not None and error_bound != 0:
        trusted = _cylinder_trusted(a, x, s, log_q, Fraction(error_bound))
    return CoefficientStream(coeff, log_q, a1, trusted)


def _cylinder_trusted(a, x, s, log_q, error_bound: Fraction) -> int:
    """Largest K such that theta +- error_bound stays inside the cylinder of
    [a_0; a_1, ..., a_K].

    That cylinder has endpoints p_K/q_K and (p_K + p_{K-1})/(q_K + q_{K-1});
    the distances from theta to them are
    1 / (q_K^2 (x_{K+1} + s_K)) and
    (x_{K+1} - 1) / (q_K^2 (x_{K+1} + s_K)(1 + s_K)).
    Everything is compared in logs with a factor-2 margin for rounding.
    """
    K = len(a) - 1
    log_eps = math.log(error_bound.numerator) - math.log(error_bound.denominator) + math.log(2)
    trusted = 0
    for k in range(K):  # the final quotient is never certified
        xk = x[k + 1]
        # x_{k+1} - 1 without cancellation
        xm1 = (a[k + 1] - 1) + (1.0 / x[k + 2] if k + 2 <= K else 0.0)
        if xm1 <= 0:
            break
        base = 2 * log_q[k] + math.log(xk + s[k])
        d1 = -base
        d2 = math.log(xm1) - base - math.log1p(s[k])
        if log_eps >= min(d1, d2):
            break
        trusted = k
    return trusted
