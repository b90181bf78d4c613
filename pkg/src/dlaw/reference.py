"""The Doeblin-Lenstra law and estimators of the limit constants.

Conventions: F_F(theta, l, l+1) counts one best approximation per +-(p, q),
so F = 1 counts convergents and its rate is the Levy constant 12 ln 2 / pi^2.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import integrate

from .cf import cf_expand, coefficient_stream
from .errors import HorizonExceeded, InsufficientData
from .lattice import apply_flow, compute_S_Lambda, embed_theta, observable_f
from .norms import MatrixTheta, default_norms

log = logging.getLogger(__name__)

LN2 = math.log(2)
DL_MEAN = 1 / (4 * LN2)
DL_CDF_HALF = 1 / (2 * LN2)


def nu_density(z):
    """1/ln2 on [0, 1/2], (1/z - 1)/ln2 on (1/2, 1], 0 elsewhere."""
    z = np.asarray(z, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where((z >= 0) & (z <= 0.5), 1 / LN2,
                       np.where((z > 0.5) & (z <= 1), (1 / z - 1) / LN2, 0.0))
    return out if out.ndim else float(out)


def nu_cdf(z):
    z = np.asarray(z, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(z <= 0, 0.0,
                       np.where(z <= 0.5, z / LN2,
                                np.where(z <= 1, np.minimum((np.log(2 * z) + 1 - z) / LN2, 1.0), 1.0)))
    return out if out.ndim else float(out)


def nu_functional(F1d) -> float:
    """Integral of F against nu, by adaptive quadrature on each branch."""
    a, _ = integrate.quad(lambda z: F1d(z) / LN2, 0, 0.5, epsabs=1e-13, epsrel=1e-12)
    b, _ = integrate.quad(lambda z: F1d(z) * (1 / z - 1) / LN2, 0.5, 1, epsabs=1e-13, epsrel=1e-12)
    return a + b


def levy_gamma0_1d() -> float:
    """Convergents per unit of log q: 12 ln 2 / pi^2."""
    return 12 * LN2 / math.pi ** 2


def gamma_reference_1d(F1d) -> float:
    """gamma = gamma0 * E_nu[F] for observables of z alone, m = n = 1."""
    return levy_gamma0_1d() * nu_functional(F1d)


@dataclass(frozen=True)
class LimitConstants:
    gamma: float
    gamma0: float
    sigma: float = 0.0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")

    @property
    def beta(self) -> float:
        return self.gamma / self.gamma0


def _z_values(F, z: np.ndarray, signs: np.ndarray) -> np.ndarray:
    if getattr(F, "depends_on_z_only", False):
        return F.of_z(z)
    return np.array([F(float(c), np.array([float(s)]), np.array([1.0])) for c, s in zip(z, signs)])


def convergent_stream(theta: MatrixTheta):
    """(coefficients, log q, residual signs) of the best approximations of a
    1 x 1 theta, with how far the data is certified (in log q)."""
    value = theta.entries[0][0]
    st = coefficient_stream(cf_expand(value), theta.precision_tag)
    mask = st.best_mask()
    k = np.arange(len(st.coeff))
    # residual theta q_k - p_k alternates in sign, positive for even k
    signs = np.where(k % 2 == 0, 1.0, -1.0)
    if theta.precision_tag:
        # c_k needs a_{k+1} and a_{k+2}; q_{K+1} bounds the next denominator
        last = st.trusted_terms - 2
        certified = st.log_q[last + 1] if last >= 0 else 0.0
        keep = k <= last
    else:
        certified = math.inf
        keep = np.ones_like(mask)
    sel = mask & keep
    return st.coeff[sel], st.log_q[sel], signs[sel], certified


def window_sums(F, theta: MatrixTheta, T: int, norms=None, method: str = "auto",
                start: int = 1) -> np.ndarray:
    """X_l = F_F(theta, l, l+1) for l = start .. T (length T - start + 1).

    ``method="cf"`` uses convergents (m = n = 1 with absolute values only);
    ``"lattice"`` evaluates f on a_l u(theta) Z^d.  They agree by the
    best-approximation correspondence, which the test-suite checks.
    ``F`` may also be a list of observables, giving one array each.
    """
    if isinstance(F, (list, tuple)):
        return _window_sums_many(list(F), theta, T, norms, method, start)
    return _window_sums_many([F], theta, T, norms, method, start)[0]


def _window_sums_many(Fs, theta, T, norms, method, start):
    if T < start:
        raise ValueError("T must be >= start")
    m, n = theta.m, theta.n
    norms = norms or default_norms(m, n)
    one_d = m == n == 1 and all(nm.kind != "euclidean" and nm.scale == 1 and nm.weights is None
                                for nm in norms)
    if method == "auto":
        method = "cf" if one_d else "lattice"
    if method == "cf":
        if not one_d:
            raise ValueError("the convergent path needs m = n = 1 with |.|")
        c, lq, sg, certified = convergent_stream(theta)
        if certified < T + 1:
            raise HorizonExceeded(T + 1, certified)
        idx = np.floor(lq).astype(np.int64)
        sel = (idx >= start) & (idx <= T)
        return [np.bincount(idx[sel] - start, weights=_z_values(F, c[sel], sg[sel]),
                            minlength=T - start + 1) for F in Fs]
    if method != "lattice":
        raise ValueError(f"unknown method {method!r}")
    base = embed_theta(theta)
    out = [np.zeros(T - start + 1) for _ in Fs]
    for i, l in enumerate(range(start, T + 1)):
        basis = apply_flow(base, l)
        S = compute_S_Lambda(basis, norms)
        for F, arr in zip(Fs, out):
            arr[i] = observable_f(basis, F, norms, S, signs="normalized")
    return out


def estimate_gamma(F, orbit_theta: MatrixTheta, T: int, norms=None, method: str = "auto"):
    """Birkhoff average (1/T) sum_{l=1..T} f(a_l u(theta) Z^d) and its
    running-average trajectory."""
    if T < 1:
        raise ValueError("T must be >= 1")
    X = window_sums(F, orbit_theta, T, norms, method)
    running = np.cumsum(X) / np.arange(1, T + 1)
    return float(running[-1]), running


def autocovariances(series: Sequence[np.ndarray], cutoff: int, mean: Optional[float] = None):
    """Pooled empirical autocovariances c_0..c_cutoff of several series."""
    series = [np.asarray(s, dtype=float) for s in series]
    if mean is None:
        mean = float(np.mean(np.concatenate(series)))
    c = np.zeros(cutoff + 1)
    for s in range(cutoff + 1):
        num, den = 0.0, 0
        for x in series:
            d = x - mean
            if len(d) > s:
                num += float(d[: len(d) - s] @ d[s:])
                den += len(d) - s
        c[s] = num / den if den else 0.0
    return c


def sigma_from_windows(series: Sequence[np.ndarray], cutoff: int) -> float:
    """sqrt(c_0 + 2 sum_{s=1}^{cutoff} c_s), floored at 0."""
    if cutoff < 0:
        raise ValueError("cutoff must be >= 0")
    T = min(len(s) for s in series)
    if T < 10 * cutoff:
        raise InsufficientData(f"need T >= 10 * cutoff, got T={T}, cutoff={cutoff}")
    c = autocovariances(series, cutoff)
    s2 = c[0] + 2 * c[1:].sum()
    if s2 < 0:
        log.warning("negative variance estimate %.3g floored at 0", s2)
        s2 = 0.0
    return math.sqrt(s2)


def estimate_sigma(F, thetas: Sequence[MatrixTheta], T: int, cutoff: int, norms=None,
                   method: str = "auto") -> float:
    """Long-run standard deviation of f along the orbits, pooled over thetas."""
    if T < 10 * cutoff:
        raise InsufficientData(f"need T >= 10 * cutoff, got T={T}, cutoff={cutoff}")
    return sigma_from_windows([window_sums(F, th, T, norms, method) for th in thetas], cutoff)
