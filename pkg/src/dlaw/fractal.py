"""Self-similar measures from iterated function systems of similarities.

Each map is kappa_e(theta) = rho (O theta O' + w) on m x n matrices, with a
common ratio rho.  Samples kappa_{e_1} o ... o kappa_{e_D}(0) are exact
rationals carrying the contraction tail as their precision tag.

The group side: each map is also the element
e = diag(O^-1, O') u(w) ahat of SL_{m+n}, with
ahat = diag(rho^{-m/(m+n)} I_m, rho^{n/(m+n)} I_n), and
Xi(h) = diag(A/|det A|^{1/m}, C/|det C|^{1/n})^-1 for h = [[A, B], [0, C]].
Then ahat^l u(kappa_{e_1} o ... o kappa_{e_l}(theta)) = Xi(h) u(theta) h with
h = e_l ... e_1; :func:`conjugation_check` measures both sides in interval
arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import mpmath
import numpy as np

from .errors import IrrationalPower
from .norms import MatrixTheta, iv_precision


def _fmat(rows) -> tuple:
    return tuple(tuple(Fraction(x) for x in r) for r in rows)


def _mul(A, B) -> tuple:
    return tuple(tuple(sum(A[i][k] * B[k][j] for k in range(len(B)))
                       for j in range(len(B[0]))) for i in range(len(A)))


def _add(A, B) -> tuple:
    return tuple(tuple(a + b for a, b in zip(r, s)) for r, s in zip(A, B))


def _scale(c, A) -> tuple:
    return tuple(tuple(c * a for a in r) for r in A)


def _det(A) -> Fraction:
    from .lattice import _det as det
    return det(A)


def _is_signed_permutation(A) -> bool:
    return all(sum(1 for x in r if x != 0) == 1 and all(x in (0, 1, -1) for x in r) for r in A) \
        and all(sum(1 for r in A if r[j] != 0) == 1 for j in range(len(A[0])))


def _max_row_sum(A) -> Fraction:
    return max(sum(abs(x) for x in r) for r in A)


def _max_col_sum(A) -> Fraction:
    return max(sum(abs(r[j]) for r in A) for j in range(len(A[0])))


@dataclass(frozen=True)
class IFSMap:
    rho: Fraction
    O: tuple
    O_prime: tuple
    w: tuple

    def __post_init__(self):
        object.__setattr__(self, "rho", Fraction(self.rho))
        object.__setattr__(self, "O", _fmat(self.O))
        object.__setattr__(self, "O_prime", _fmat(self.O_prime))
        object.__setattr__(self, "w", _fmat(self.w))
        m, n = len(self.O), len(self.O_prime)
        if not 0 < self.rho < 1:
            raise ValueError("rho must lie in (0, 1)")
        if any(len(r) != m for r in self.O) or any(len(r) != n for r in self.O_prime):
            raise ValueError("O and O' must be square")
        if len(self.w) != m or any(len(r) != n for r in self.w):
            raise ValueError("w must be m x n")
        if abs(_det(self.O)) != 1 or abs(_det(self.O_prime)) != 1:
            raise ValueError("O and O' must have |det| = 1")
        ratio = float(self.rho) * np.linalg.norm(self._f(self.O), 2) \
            * np.linalg.norm(self._f(self.O_prime), 2)
        if not ratio < 1:
            raise ValueError(f"map is not a contraction (ratio {ratio:.4g})")

    @staticmethod
    def _f(A) -> np.ndarray:
        return np.array([[float(x) for x in r] for r in A])

    @property
    def dims(self) -> tuple:
        return len(self.O), len(self.O_prime)

    def __call__(self, theta) -> tuple:
        """kappa(theta) for an exact m x n matrix."""
        return _scale(self.rho, _add(_mul(_mul(self.O, _fmat(theta)), self.O_prime), self.w))


@dataclass(frozen=True)
class IFSSystem:
    maps: tuple
    symbol_weights: tuple

    def __post_init__(self):
        if not self.maps:
            raise ValueError("need at least one map")
        object.__setattr__(self, "maps", tuple(self.maps))
        weights = tuple(Fraction(x) for x in self.symbol_weights)
        if len(weights) != len(self.maps) or any(x < 0 for x in weights) or sum(weights) != 1:
            raise ValueError("weights must be a probability vector, one per map")
        object.__setattr__(self, "symbol_weights", weights)
        if len({f.rho for f in self.maps}) != 1:
            raise ValueError("all maps must share rho")
        if len({f.dims for f in self.maps}) != 1:
            raise ValueError("all maps must act on the same matrix shape")

    @property
    def rho(self) -> Fraction:
        return self.maps[0].rho

    @property
    def dims(self) -> tuple:
        return self.maps[0].dims

    def attractor_radius(self) -> Fraction:
        """Entrywise bound r on every point of the attractor."""
        c = max(_max_row_sum(f.O) * _max_col_sum(f.O_prime) for f in self.maps)
        wmax = max(max(abs(x) for r in f.w for x in r) for f in self.maps)
        return self.rho * wmax / (1 - self.rho * c)

    def tail_factor(self) -> Fraction:
        return self.rho * max(_max_row_sum(f.O) * _max_col_sum(f.O_prime) for f in self.maps)


@dataclass(frozen=True)
class IFSWord:
    symbols: tuple

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(int(s) for s in self.symbols))

    def check(self, sys: IFSSystem) -> "IFSWord":
        if any(not 0 <= s < len(sys.maps) for s in self.symbols):
            raise ValueError("word symbol out of range")
        return self

    def __len__(self):
        return len(self.symbols)


def cantor_system() -> IFSSystem:
    """x -> x/3 and x -> (x + 2)/3 with equal weights."""
    third = Fraction(1, 3)
    return IFSSystem((IFSMap(third, ((1,),), ((1,),), ((0,),)),
                      IFSMap(third, ((1,),), ((1,),), ((2,),))),
                     (Fraction(1, 2), Fraction(1, 2)))


def compose(sys: IFSSystem, word: Sequence[int], theta=None) -> tuple:
    """kappa_{e_1} o ... o kappa_{e_L}(theta) exactly (theta defaults to 0)."""
    m, n = sys.dims
    word = IFSWord(word).check(sys).symbols
    if theta is None and all(_is_signed_permutation(f.O) and _is_signed_permutation(f.O_prime)
                             for f in sys.maps):
        return _compose_integer(sys, word)
    x = _fmat(theta) if theta is not None else tuple((Fraction(0),) * n for _ in range(m))
    for s in reversed(word):
        x = sys.maps[s](x)
    return x


def _compose_integer(sys: IFSSystem, word) -> tuple:
    # theta_j = X_j / (c b^j) and X_{j+1} = a (O X_j O' + b^j W)
    m, n = sys.dims
    a, b = sys.rho.numerator, sys.rho.denominator
    c = 1
    for f in sys.maps:
        for r in f.w:
            for x in r:
                c = c * x.denominator // math.gcd(c, x.denominator)
    perms = []
    for f in sys.maps:
        O = [[int(x) for x in r] for r in f.O]
        Op = [[int(x) for x in r] for r in f.O_prime]
        W = [[int(x * c) for x in r] for r in f.w]
        perms.append((O, Op, W))
    X = [[0] * n for _ in range(m)]
    bj = 1
    for s in reversed(word):
        O, Op, W = perms[s]
        OX = [[sum(O[i][k] * X[k][j] for k in range(m)) for j in range(n)] for i in range(m)]
        OXO = [[sum(OX[i][k] * Op[k][j] for k in range(n)) for j in range(n)] for i in range(m)]
        X = [[a * (OXO[i][j] + bj * W[i][j]) for j in range(n)] for i in range(m)]
        bj *= b
    den = c * bj
    return tuple(tuple(Fraction(x, den) for x in r) for r in X)


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_word(sys: IFSSystem, depth: int, rng_seed=None) -> IFSWord:
    if depth < 1:
        raise ValueError("depth must be >= 1")
    rng = _rng(rng_seed)
    p = np.array([float(x) for x in sys.symbol_weights])
    return IFSWord(tuple(rng.choice(len(sys.maps), size=depth, p=p / p.sum())))


def sample_theta(sys: IFSSystem, depth: int, rng_seed=None, word: Optional[IFSWord] = None) -> MatrixTheta:
    """kappa_{e_1} o ... o kappa_{e_depth}(0) for i.i.d. symbols, exactly.

    The precision tag bounds the entrywise distance to the limit point
    of any infinite word extending e_1..e_depth.
    """
    if word is None:
        word = sample_word(sys, depth, rng_seed)
    depth = len(word)
    theta = compose(sys, word.symbols)
    tag = sys.tail_factor() ** depth * sys.attractor_radius()
    return MatrixTheta(theta, tag)


def cantor_depth(bits: int) -> int:
    """Depth whose tag 3^-depth is at most 2^-bits."""
    return math.ceil(bits * math.log(2) / math.log(3))


# --------------------------------------------------------------------------
# group elements


def _rational_root(x: Fraction, k: int) -> Optional[Fraction]:
    def iroot(v):
        r = round(v ** (1.0 / k)) if v < 2 ** 1000 else int(mpmath.nthroot(v, k))
        for t in (r - 1, r, r + 1):
            if t >= 0 and t ** k == v:
                return t
        return None
    p, q = iroot(x.numerator), iroot(x.denominator)
    return None if p is None or q is None else Fraction(p, q)


class _Ring:
    """Scalar arithmetic for matrices: exact Fractions or mpmath intervals."""

    def __init__(self, exact: bool, iv=None):
        self.exact = exact
        self.iv = iv

    def const(self, x: Fraction):
        return x if self.exact else self.iv.mpf(x.numerator) / x.denominator


def _rho_powers(sys: IFSSystem, ring: _Ring):
    """(rho^{-m/d}, rho^{n/d}) in the ring."""
    m, n = sys.dims
    d = m + n
    if ring.exact:
        r = _rational_root(sys.rho, d)
        if r is None:
            raise IrrationalPower(f"rho^(1/{d}) is irrational for rho = {sys.rho}")
        return r ** (-m), r ** n
    iv = ring.iv
    lr = iv.log(ring.const(sys.rho))
    return iv.exp(lr * (-m) / d), iv.exp(lr * n / d)


def _block(A, B, C, zero):
    m, n = len(A), len(C)
    rows = [list(A[i]) + list(B[i]) for i in range(m)]
    rows += [[zero] * m + list(C[i]) for i in range(n)]
    return rows


def _mmul(A, B):
    return [[sum((A[i][k] * B[k][j] for k in range(1, len(B))), A[i][0] * B[0][j])
             for j in range(len(B[0]))] for i in range(len(A))]


def _inv_exact(A) -> tuple:
    d = len(A)
    M = [list(r) + [Fraction(int(i == j)) for j in range(d)] for i, r in enumerate(A)]
    for c in range(d):
        piv = next(r for r in range(c, d) if M[r][c] != 0)
        M[c], M[piv] = M[piv], M[c]
        pv = M[c][c]
        M[c] = [x / pv for x in M[c]]
        for r in range(d):
            if r != c and M[r][c] != 0:
                f = M[r][c]
                M[r] = [x - f * y for x, y in zip(M[r], M[c])]
    return tuple(tuple(r[d:]) for r in M)


def group_element(f: IFSMap, ring: _Ring, powers=None) -> list:
    """e = diag(O^-1, O') u(w) ahat as a (m+n) x (m+n) matrix."""
    m, n = f.dims
    lo, hi = powers
    Oinv = _inv_exact(f.O)
    c = ring.const
    zero = c(Fraction(0))
    A = [[c(x) * lo for x in r] for r in Oinv]
    Bw = _mul(Oinv, f.w)
    B = [[c(x) * hi for x in r] for r in Bw]
    C = [[c(x) * hi for x in r] for r in f.O_prime]
    return _block(A, B, C, zero)


@dataclass
class GroupWordImages:
    xi: list          # Xi(e_l ... e_1)
    product: list     # e_l ... e_1
    ahat_power: list  # ahat^l
    exact: bool


def _identity(d, ring):
    one, zero = ring.const(Fraction(1)), ring.const(Fraction(0))
    return [[one if i == j else zero for j in range(d)] for i in range(d)]


def word_images(sys: IFSSystem, word: IFSWord, exact: bool = False, prec: int = 256,
                ring: Optional[_Ring] = None) -> GroupWordImages:
    """Xi(e_l ... e_1), the product e_l ... e_1 and ahat^l.

    Xi is computed from its definition: the diagonal blocks of the product,
    each normalised to |det| = 1 and then inverted.  Since every O and O'
    has |det| = 1 this equals diag(O_{e_1} ... O_{e_l}, (O'_{e_l} ... O'_{e_1})^-1).
    """
    word = IFSWord(word.symbols if isinstance(word, IFSWord) else word).check(sys)
    if ring is None:
        if exact:
            return _word_images(sys, word, _Ring(True))
        with iv_precision(prec) as iv:
            return _word_images(sys, word, _Ring(False, iv))
    return _word_images(sys, word, ring)


def _word_images(sys, word, ring):
    m, n = sys.dims
    d = m + n
    powers = _rho_powers(sys, ring)
    prod = _identity(d, ring)
    for s in word.symbols:
        prod = _mmul(group_element(sys.maps[s], ring, powers), prod)
    # Xi from the normalised blocks: products of the O^-1 and of the O'
    Ablk, Cblk = _fmat([[int(i == j) for j in range(m)] for i in range(m)]), \
        _fmat([[int(i == j) for j in range(n)] for i in range(n)])
    for s in word.symbols:
        f = sys.maps[s]
        Ablk = _mul(_inv_exact(f.O), Ablk)
        Cblk = _mul(f.O_prime, Cblk)
    Xi_exact = _inv_exact(tuple(tuple(r) for r in _block(Ablk, ((Fraction(0),) * n,) * m, Cblk,
                                                         Fraction(0))))
    xi = [[ring.const(x) for x in r] for r in Xi_exact]
    lo, hi = powers
    l = len(word)
    zero = ring.const(Fraction(0))
    ahat = [[(lo ** l if i < m else hi ** l) if i == j else zero for j in range(d)]
            for i in range(d)]
    return GroupWordImages(xi, prod, ahat, ring.exact)


def xi_displayed(sys: IFSSystem, word: IFSWord) -> tuple:
    """(diag(O_l, O'_l) ... diag(O_1, O'_1))^-1, the product form of Xi.

    Agrees with the definition of Xi when every O is an involution."""
    m, n = sys.dims
    d = m + n
    P = _fmat([[int(i == j) for j in range(d)] for i in range(d)])
    zero = Fraction(0)
    for s in IFSWord(word.symbols if isinstance(word, IFSWord) else word).check(sys).symbols:
        f = sys.maps[s]
        D = tuple(tuple(r) for r in _block(f.O, ((zero,) * n,) * m, f.O_prime, zero))
        P = _mul(D, P)
    return _inv_exact(P)


def _u(theta, ring, m, n):
    one, zero = ring.const(Fraction(1)), ring.const(Fraction(0))
    A = [[one if i == j else zero for j in range(m)] for i in range(m)]
    C = [[one if i == j else zero for j in range(n)] for i in range(n)]
    B = [[ring.const(Fraction(x)) for x in r] for r in theta]
    return _block(A, B, C, zero)


def _max_abs_diff(L, R, ring):
    if ring.exact:
        return max(abs(a - b) for ra, rb in zip(L, R) for a, b in zip(ra, rb))
    worst = 0.0
    for ra, rb in zip(L, R):
        for a, b in zip(ra, rb):
            diff = a - b
            worst = max(worst, float(max(abs(diff.a), abs(diff.b))))
    return worst


def conjugation_check(sys: IFSSystem, word, theta_tail, reference_tail=None,
                      exact: bool = False, prec: int = 256):
    """Max entry difference between ahat^l u(kappa_word(ref)) and
    Xi(word) u(theta_tail) e_l ... e_1, where ref defaults to theta_tail.

    With the default the two sides agree up to interval width (or exactly,
    with ``exact=True`` when rho^(1/(m+n)) is rational).  Passing a deeper
    ``reference_tail`` measures how much truncating the tail costs.
    The returned float is a certified upper bound in interval mode.
    """
    word = IFSWord(word.symbols if isinstance(word, IFSWord) else word).check(sys)
    if len(word) < 1:
        raise ValueError("word must have length >= 1")
    m, n = sys.dims
    tail = _fmat(theta_tail.entries if isinstance(theta_tail, MatrixTheta) else theta_tail)
    ref = tail if reference_tail is None else _fmat(
        reference_tail.entries if isinstance(reference_tail, MatrixTheta) else reference_tail)
    image = compose(sys, word.symbols, ref)

    def run(ring):
        imgs = word_images(sys, word, ring=ring)
        lhs = _mmul(imgs.ahat_power, _u(image, ring, m, n))
        rhs = _mmul(_mmul(imgs.xi, _u(tail, ring, m, n)), imgs.product)
        return _max_abs_diff(lhs, rhs, ring)

    if exact:
        return run(_Ring(True))
    with iv_precision(prec) as iv:
        return run(_Ring(False, iv))


def tail_truncation_errors(sys: IFSSystem, l: int, depths: Sequence[int], words: int = 100,
                           rng_seed=None, prec: int = 256, ref_extra: int = 40) -> np.ndarray:
    """Mean log conjugation error when the tail is cut at each depth.

    For each random infinite word (approximated ``ref_extra`` symbols past
    the largest depth), the left side uses the long tail and the right side
    the truncated one.
    """
    rng = _rng(rng_seed)
    dmax = max(depths)
    out = np.zeros(len(depths))
    for _ in range(words):
        full = sample_word(sys, l + dmax + ref_extra, rng).symbols
        head, rest = full[:l], full[l:]
        ref = compose(sys, rest)
        for i, D in enumerate(depths):
            cut = compose(sys, rest[:D])
            err = conjugation_check(sys, head, cut, ref, prec=prec)
            out[i] += math.log(err)
    return out / words


def tail_slope(sys: IFSSystem, l: int = 10, depths: Sequence[int] = (20, 30, 40, 50, 60),
               words: int = 100, rng_seed=0, prec: int = 256) -> float:
    """Least-squares slope of mean log error against tail depth."""
    errs = tail_truncation_errors(sys, l, depths, words, rng_seed, prec)
    return float(np.polyfit(np.asarray(depths, dtype=float), errs, 1)[0])
