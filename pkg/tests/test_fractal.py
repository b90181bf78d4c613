import math
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from dlaw.errors import IrrationalPower
from dlaw.fractal import (IFSMap, IFSSystem, IFSWord, _mmul, _Ring, cantor_depth, cantor_system,
                          compose, conjugation_check, sample_theta, sample_word, tail_slope,
                          word_images, xi_displayed)

ROT = ((0, -1), (1, 0))  # order 4, not an involution


def rotation_system():
    """m = 2, n = 1 with rho = 1/8, so rho^(1/3) = 1/2 is rational."""
    r = Fraction(1, 8)
    return IFSSystem((IFSMap(r, ROT, ((1,),), ((1,), (0,))),
                      IFSMap(r, ((1, 0), (0, -1)), ((-1,),), ((Fraction(1, 3),), (2,))),
                      IFSMap(r, ((1, 0), (0, 1)), ((1,),), ((0,), (Fraction(-5, 2),)))),
                     (Fraction(1, 2), Fraction(1, 4), Fraction(1, 4)))


def quarter_system():
    """m = n = 1 with rho = 1/4."""
    r = Fraction(1, 4)
    return IFSSystem((IFSMap(r, ((1,),), ((1,),), ((0,),)), IFSMap(r, ((-1,),), ((1,),), ((3,),))),
                     (Fraction(1, 2), Fraction(1, 2)))


def test_cantor_examples():
    cs = cantor_system()
    assert compose(cs, (0,) * 10) == ((0,),)
    for k in (1, 5, 20):
        assert compose(cs, (1,) * k) == ((1 - Fraction(1, 3 ** k),),)
    assert compose(cs, (0, 1)) == ((Fraction(2, 9),),)
    th = sample_theta(cs, 1, word=IFSWord((1,)))
    assert th.entries == ((Fraction(2, 3),),) and th.precision_tag == Fraction(1, 3)
    assert cantor_depth(64) == math.ceil(64 * math.log(2) / math.log(3))
    with pytest.raises(ValueError):
        IFSWord((0, 2)).check(cs)


def test_map_validation():
    with pytest.raises(ValueError):
        IFSMap(Fraction(1, 2), ((2,),), ((1,),), ((0,),))
    with pytest.raises(ValueError):
        IFSMap(Fraction(3, 2), ((1,),), ((1,),), ((0,),))
    with pytest.raises(ValueError):
        IFSSystem((IFSMap(Fraction(1, 3), ((1,),), ((1,),), ((0,),)),), (Fraction(1, 2),))


def test_integer_compose_matches_map_iteration():
    for sys in (cantor_system(), rotation_system(), quarter_system()):
        m, n = sys.dims
        zero = tuple((0,) * n for _ in range(m))
        for seed in range(10):
            w = sample_word(sys, 25, seed).symbols
            assert compose(sys, w) == compose(sys, w, zero)


def test_sampler_determinism_and_tag():
    cs = cantor_system()
    a = sample_theta(cs, 40, rng_seed=7)
    assert a == sample_theta(cs, 40, rng_seed=7)
    assert a.precision_tag == Fraction(1, 3 ** 40)
    # the tag bounds the distance to every extension of the word
    w = sample_word(cs, 40, 7)
    longer = compose(cs, w.symbols + (1,) * 30)
    assert abs(longer[0][0] - a.entries[0][0]) <= a.precision_tag


def test_self_similarity():
    sys = rotation_system()
    rng = np.random.default_rng(3)
    for _ in range(20):
        w = sample_word(sys, 12, rng).symbols
        assert compose(sys, w) == sys.maps[w[0]](compose(sys, w[1:]))


def test_first_symbol_weights():
    sys = rotation_system()
    rng = np.random.default_rng(5)
    first = [sample_word(sys, 3, rng).symbols[0] for _ in range(4000)]
    counts = np.bincount(first, minlength=3)
    expected = 4000 * np.array([0.5, 0.25, 0.25])
    assert stats.chisquare(counts, expected).pvalue > 1e-3


def test_cantor_non_atomicity():
    cs = cantor_system()
    rng = np.random.default_rng(11)
    words = rng.integers(0, 2, size=(100_000, 40))
    # theta is 2 * sum e_k 3^-k, an integer numerator over 3^40
    values = words @ (2 * 3 ** np.arange(39, -1, -1, dtype=object))
    distinct_words = {w.tobytes() for w in words}
    assert len(set(values)) == len(distinct_words)
    w = tuple(int(s) for s in words[0])
    assert compose(cs, w)[0][0] == Fraction(int(values[0]), 3 ** 40)


def test_xi_commutes_with_ahat():
    sys = rotation_system()
    for seed in range(10):
        imgs = word_images(sys, sample_word(sys, 6, seed), exact=True)
        assert _mmul(imgs.xi, imgs.ahat_power) == _mmul(imgs.ahat_power, imgs.xi)
    imgs = word_images(cantor_system(), IFSWord((0, 1, 1)))
    assert not imgs.exact


def test_exact_power_needs_rational_root():
    with pytest.raises(IrrationalPower):
        word_images(cantor_system(), IFSWord((0,)), exact=True)


def test_empty_word_images():
    imgs = word_images(rotation_system(), IFSWord(()), exact=True)
    eye = [[Fraction(int(i == j)) for j in range(3)] for i in range(3)]
    assert imgs.xi == eye and imgs.product == eye and imgs.ahat_power == eye


def test_conjugation_exact():
    for sys in (rotation_system(), quarter_system()):
        m, n = sys.dims
        rng = np.random.default_rng(2)
        for _ in range(10):
            word = sample_word(sys, int(rng.integers(1, 8)), rng)
            tail = compose(sys, sample_word(sys, 10, rng).symbols)
            assert conjugation_check(sys, word, tail, exact=True) == 0
        zero = tuple((0,) * n for _ in range(m))
        assert conjugation_check(sys, (0,), zero, exact=True) == 0


def test_displayed_xi_only_for_involutions():
    sys = rotation_system()
    word = IFSWord((0,))
    assert xi_displayed(sys, word) != tuple(tuple(r) for r in word_images(sys, word, exact=True).xi)
    # the other two maps are involutions, and there both forms agree
    word = IFSWord((1, 2, 1))
    assert xi_displayed(sys, word) == tuple(tuple(r) for r in word_images(sys, word, exact=True).xi)


def test_cantor_conjugation_interval():
    cs = cantor_system()
    word = IFSWord((0,))
    theta = ((Fraction(2, 7),),)
    assert conjugation_check(cs, word, theta) < 1e-12
    rng = np.random.default_rng(9)
    for _ in range(5):
        full = sample_word(cs, 10 + 100, rng).symbols
        head, rest = full[:10], full[10:]
        err = conjugation_check(cs, head, compose(cs, rest[:60]), compose(cs, rest))
        assert err <= 3.0 ** -50


def test_tail_slope_small():
    slope = tail_slope(cantor_system(), l=5, depths=(10, 20, 30, 40), words=10, rng_seed=1)
    assert abs(slope / math.log(1 / 3) - 1) < 0.05
