import math
import random
from fractions import Fraction

import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dlaw.cf import (approx_coefficient, cf_expand, coefficient_stream, convergents, fold,
                     legendre_trusted_prefix, trusted_prefix)


def floor_expansion(x: Fraction):
    """Oracle: x -> 1/(x - floor x), independent of the divmod loop."""
    out = [math.floor(x)]
    x -= out[0]
    while x:
        x = 1 / x
        out.append(math.floor(x))
        x -= out[-1]
    return out


rationals = st.builds(Fraction, st.integers(-10 ** 30, 10 ** 30), st.integers(1, 10 ** 30))


def test_examples():
    assert cf_expand(Fraction(355, 113), 10).quotients == (3, 7, 16)
    assert cf_expand(Fraction(1, 2), 10).quotients == (0, 2)
    assert cf_expand(Fraction(5), 10).quotients == (5,)


def test_max_terms_truncates():
    cf = cf_expand(Fraction(355, 113), 1)
    assert cf.quotients == (3, 7)
    assert not cf.terminated
    assert cf_expand(Fraction(355, 113), 0).quotients == (3,)
    with pytest.raises(ValueError):
        cf_expand(Fraction(1, 3), -1)


def test_convergent_examples():
    assert convergents(cf_expand(Fraction(355, 113))).fractions() == [3, Fraction(22, 7), Fraction(355, 113)]
    assert [q for _, q in convergents([0, 1, 1, 1, 1, 1]).pairs] == [1, 1, 2, 3, 5, 8]
    assert convergents([0, 2]).pairs == ((0, 1), (1, 2))


def test_approx_coefficient_examples():
    assert approx_coefficient(Fraction(355, 113), 22, 7) == Fraction(7, 113)
    assert approx_coefficient(Fraction(1, 2), 1, 2) == 0
    assert approx_coefficient(Fraction(2, 5), 0, 1) == Fraction(2, 5)
    with pytest.raises(ValueError):
        approx_coefficient(Fraction(1, 2), 0, 0)


@given(rationals)
def test_matches_floor_oracle(x):
    assert list(cf_expand(x).quotients) == floor_expansion(x)


@given(rationals)
def test_reconstruction(x):
    cf = cf_expand(x)
    assert fold(cf.quotients) == x
    # Euclid convention: last quotient >= 2 unless the expansion has length 1
    if len(cf.partial_quotients):
        assert cf.partial_quotients[-1] >= 2


@given(rationals)
def test_determinant_identity(x):
    pairs = convergents(cf_expand(x)).pairs
    for k in range(1, len(pairs)):
        (p1, q1), (p0, q0) = pairs[k], pairs[k - 1]
        assert p1 * q0 - p0 * q1 == (-1) ** (k - 1)
        assert math.gcd(p1, q1) == 1
        if k >= 2:
            assert q1 > q0


@given(rationals)
def test_convergent_coefficient_below_one(x):
    for p, q in convergents(cf_expand(x)).pairs[1:]:
        assert approx_coefficient(x, p, q) < 1


def test_golden_mean_coefficients():
    cf = [0] + [1] * 60
    theta = fold(cf)
    target = 1 / mpmath.sqrt(5)
    with mpmath.workdps(60):
        golden = (mpmath.sqrt(5) - 1) / 2
        for k, (p, q) in enumerate(convergents(cf).pairs):
            if 20 <= k <= 50:
                assert abs(float(approx_coefficient(theta, p, q)) - float(target)) < 1e-3
                assert abs(q * abs(golden * q - p) - target) < 1e-3


def test_trusted_prefix_trivial():
    x = Fraction(355, 113)
    assert trusted_prefix(x, 0) == 2
    assert trusted_prefix(x, 1) == 0
    assert cf_expand(x, error_bound=Fraction(0)).trusted_terms == 2


def test_trusted_prefix_against_higher_precision():
    rng = random.Random(11)
    for _ in range(30):
        full = Fraction(rng.getrandbits(512), 1 << 512)
        approx = Fraction(math.floor(full * (1 << 256)), 1 << 256)
        eps = Fraction(1, 1 << 256)
        K = trusted_prefix(approx, eps)
        # the true value lies within eps, so its prefix must agree
        assert cf_expand(full).partial_quotients[:K] == cf_expand(approx).partial_quotients[:K]
        assert abs(K - 0.29 * 256) < 20


def test_trusted_prefix_is_sharp_on_endpoints():
    rng = random.Random(5)
    for _ in range(30):
        x = Fraction(rng.getrandbits(200), 1 << 200)
        eps = Fraction(1, 1 << 100)
        K = trusted_prefix(x, eps)
        lo = cf_expand(x - eps).partial_quotients
        hi = cf_expand(x + eps).partial_quotients
        assert lo[:K] == hi[:K]
        # one more term would either differ or be a terminal quotient
        assert K + 1 >= min(len(lo), len(hi)) or lo[K] != hi[K]


def test_legendre_heuristic_close_to_certificate():
    rng = random.Random(3)
    for _ in range(20):
        x = Fraction(rng.getrandbits(256), 1 << 256)
        eps = Fraction(1, 1 << 256)
        assert abs(legendre_trusted_prefix(x, eps) - trusted_prefix(x, eps)) <= 3


def test_coefficient_stream_matches_exact():
    rng = random.Random(2)
    x = Fraction(rng.getrandbits(2048), 1 << 2048)
    cf = cf_expand(x)
    stream = coefficient_stream(cf)
    pairs = convergents(cf).pairs
    for k in range(0, len(pairs) - 1, 7):
        p, q = pairs[k]
        assert stream.coeff[k] == pytest.approx(float(approx_coefficient(x, p, q)), rel=1e-9)
        assert stream.log_q[k] == pytest.approx(math.log(q), rel=1e-12, abs=1e-12)


def test_stream_certificate_is_conservative():
    # float cylinder certificate never trusts more than the exact one
    rng = random.Random(7)
    for _ in range(60):
        bits = rng.choice([64, 256, 1024])
        x = Fraction(rng.getrandbits(bits + 40), 1 << (bits + 40))
        eps = Fraction(1, 1 << bits)
        fast = coefficient_stream(cf_expand(x), eps).trusted_terms
        exact = trusted_prefix(x, eps)
        assert exact - 3 <= fast <= exact


def test_best_mask_drops_q1_duplicate():
    # a_1 = 1 makes q_0 = q_1 = 1; only the better one is a best approximation
    cf = cf_expand(Fraction(5, 8))
    assert cf.partial_quotients[0] == 1
    mask = coefficient_stream(cf).best_mask()
    assert not mask[0] and mask[1:].all()


@settings(max_examples=50)
@given(st.integers(1, 10 ** 12), st.integers(1, 10 ** 12))
def test_coefficient_stream_terminal_zero(a, b):
    x = Fraction(a, b)
    s = coefficient_stream(cf_expand(x))
    assert s.coeff[-1] == 0.0
