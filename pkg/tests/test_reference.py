import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest

from dlaw.errors import HorizonExceeded, InsufficientData
from dlaw.norms import MatrixTheta
from dlaw.observables import observable
from dlaw.reference import (DL_CDF_HALF, DL_MEAN, LimitConstants, autocovariances,
                            convergent_stream, estimate_gamma, estimate_sigma, gamma_reference_1d,
                            levy_gamma0_1d, nu_cdf, nu_density, nu_functional, sigma_from_windows,
                            window_sums)


def mp_density(z):
    ln2 = mpmath.log(2)
    return 1 / ln2 if z <= 0.5 else (1 / z - 1) / ln2


def mp_integral(f, a, b):
    with mpmath.workdps(30):
        return mpmath.quad(f, [a, b])


def test_density_normalised_and_positive():
    total = mp_integral(mp_density, 0, 0.5) + mp_integral(mp_density, 0.5, 1)
    assert abs(total - 1) < 1e-12
    assert abs(nu_functional(lambda z: 1.0) - 1) < 1e-12
    zs = np.linspace(0, 1, 10_001)
    assert (nu_density(zs) >= 0).all()
    assert nu_density(-0.1) == 0 and nu_density(1.1) == 0


def test_density_continuous_at_half():
    left, right = nu_density(0.5), nu_density(0.5 + 1e-12)
    assert left == pytest.approx(1 / math.log(2))
    assert right == pytest.approx(1 / math.log(2), rel=1e-9)


def test_cdf_matches_integrated_density():
    assert nu_cdf(1.0) == 1.0
    assert nu_cdf(0.0) == 0.0 and nu_cdf(2.0) == 1.0
    assert nu_cdf(0.5) == pytest.approx(float(1 / (2 * mpmath.log(2))), abs=1e-15)
    assert DL_CDF_HALF == pytest.approx(0.72135, abs=1e-5)
    for z in (0.1, 0.37, 0.5, 0.61, 0.8, 0.95, 0.999):
        ref = mp_integral(mp_density, 0, min(z, 0.5))
        if z > 0.5:
            ref += mp_integral(mp_density, 0.5, z)
        assert nu_cdf(z) == pytest.approx(float(ref), abs=1e-12)


def test_cdf_monotone():
    vals = nu_cdf(np.linspace(-0.5, 1.5, 10_000))
    assert (np.diff(vals) >= 0).all()


def test_mean_and_functionals():
    ref = mp_integral(lambda z: z * mp_density(z), 0, 0.5) + mp_integral(lambda z: z * mp_density(z), 0.5, 1)
    assert DL_MEAN == pytest.approx(float(ref), abs=1e-12)
    assert DL_MEAN == pytest.approx(0.36067, abs=1e-5)
    assert nu_functional(lambda z: z) == pytest.approx(float(ref), abs=1e-10)


def test_levy_constants():
    assert levy_gamma0_1d() == pytest.approx(0.8427659, abs=1e-7)
    assert 1 / levy_gamma0_1d() == pytest.approx(1.18657, abs=1e-5)
    assert gamma_reference_1d(lambda z: z) == pytest.approx(levy_gamma0_1d() * DL_MEAN, rel=1e-12)
    c = LimitConstants(0.3, 0.8, 1.0)
    assert c.beta * c.gamma0 == pytest.approx(c.gamma, abs=1e-12)
    with pytest.raises(ValueError):
        LimitConstants(0.3, 0.8, -1.0)


def dyadic_theta(seed, bits):
    rng = np.random.default_rng(seed)
    num = int.from_bytes(rng.bytes(bits // 8), "big")
    return MatrixTheta.scalar(Fraction(num, 1 << bits), Fraction(1, 1 << bits))


@pytest.mark.parametrize("name", ["one", "z", "z2", "ztail"])
def test_window_sums_two_paths(name):
    F = observable(name)
    for seed in range(3):
        th = dyadic_theta(seed, 256)
        a = window_sums(F, th, 12, method="cf")
        b = window_sums(F, th, 12, method="lattice")
        assert np.allclose(a, b, atol=1e-12)


def test_window_sums_many_matches_single():
    th = dyadic_theta(4, 512)
    both = window_sums([observable("z"), observable("one")], th, 50)
    assert np.array_equal(both[0], window_sums(observable("z"), th, 50))
    assert np.array_equal(both[1], window_sums(observable("one"), th, 50))


def test_window_sums_horizon_guard():
    th = dyadic_theta(1, 64)
    with pytest.raises(HorizonExceeded):
        window_sums(observable("z"), th, 40)


def test_convergent_stream_certified():
    th = dyadic_theta(2, 1024)
    c, lq, sg, certified = convergent_stream(th)
    # 1024 bits certify log q up to about 1024 ln 2 / 2
    assert 0.4 * 1024 * math.log(2) < certified < 0.5 * 1024 * math.log(2)
    assert (lq <= certified).all()
    assert ((c > 0) & (c < 1)).all()


def test_estimate_gamma():
    th = dyadic_theta(5, 512)
    est, running = estimate_gamma(observable("one"), th, 1)
    assert est == running[0] == window_sums(observable("one"), th, 1)[0]
    est, running = estimate_gamma(observable("one"), th, 150)
    assert len(running) == 150 and 0.5 < est < 1.2
    with pytest.raises(ValueError):
        estimate_gamma(observable("one"), th, 0)


def test_autocovariances_against_numpy():
    rng = np.random.default_rng(0)
    x = rng.normal(size=500)
    c = autocovariances([x], 5)
    d = x - x.mean()
    for s in range(6):
        assert c[s] == pytest.approx(np.dot(d[: 500 - s], d[s:]) / (500 - s))


def test_sigma_trivial_cases():
    rng = np.random.default_rng(1)
    zeros = [np.zeros(200) for _ in range(3)]
    assert sigma_from_windows(zeros, 10) == 0
    x = [rng.normal(size=300) for _ in range(4)]
    assert sigma_from_windows(x, 0) == pytest.approx(np.concatenate(x).std())
    with pytest.raises(InsufficientData):
        sigma_from_windows(x, 40)
    th = [dyadic_theta(s, 512) for s in range(3)]
    assert estimate_sigma(observable("zero"), th, 100, 5) == 0
    with pytest.raises(InsufficientData):
        estimate_sigma(observable("z"), th, 100, 20)


def test_sigma_of_ar1():
    # AR(1) with phi = 0.5, unit innovations: long-run sd = 1 / (1 - phi) = 2
    rng = np.random.default_rng(2)
    series = []
    for _ in range(20):
        e = rng.normal(size=20_000)
        x = np.empty_like(e)
        x[0] = e[0]
        for i in range(1, len(e)):
            x[i] = 0.5 * x[i - 1] + e[i]
        series.append(x)
    assert sigma_from_windows(series, 40) == pytest.approx(2.0, rel=0.03)
