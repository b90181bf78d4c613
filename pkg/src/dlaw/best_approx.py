"""Best approximations of theta in M_{m x n}(R) and the sums F_F(theta, a, b).

A pair (p, q) is a best approximation when no pair other than (+-p, +-q)
has both a residual norm ||p + theta q|| and a denominator norm ||q|| that
are <= those of (p, q).  Exact ties therefore disqualify *both* pairs.

The scan works on integers: with theta = N / D the residual of (p, q) is
R / D where R = D p + N q, so every comparison is an integer comparison.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .errors import DirectionUndefined, HorizonExceeded, RationalDegeneracy, TieBreak
from .norms import MatrixTheta, NormSpec, cmp_exp, default_norms


@dataclass(frozen=True)
class BestApprox:
    p: tuple
    q: tuple
    residual: tuple  # exact p + theta q
    rkey: Fraction   # exact norm key of the residual
    qkey: Fraction
    rnorm: float
    qnorm: float

    def coefficient(self, m: int, n: int) -> float:
        return self.rnorm ** m * self.qnorm ** n

    def directions(self):
        if self.rnorm == 0:
            raise DirectionUndefined(f"zero residual at q={self.q}")
        x = np.array([float(t) for t in self.residual]) / self.rnorm
        y = np.array([float(t) for t in self.q]) / self.qnorm
        return x, y


@dataclass(frozen=True)
class BestApproxSeq:
    items: tuple
    horizon: float
    certified_horizon: float = math.inf

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def __getitem__(self, k):
        return self.items[k]


def _sign_normalized(q) -> bool:
    for t in q:
        if t:
            return t > 0
    return False


def _round_coordinate(s: int, D: int):
    """Integer p minimising |D p + s|; second value flags a tie."""
    r = s % D
    if 2 * r < D:
        return -(s - r) // D, False
    if 2 * r > D:
        return -(s - r) // D - 1, False
    return -(s - r) // D, True


def _minimize(s: Sequence[int], D: int, norm: NormSpec):
    """Minimise the residual key over p for the integer vector s = N q.

    Returns (p, R, key, minimisers) with ``minimisers`` the list of all
    optimal p when there is more than one, else None.
    """
    p, ties = [], []
    for sj in s:
        pj, tie = _round_coordinate(sj, D)
        p.append(pj)
        ties.append(tie)
    R = [D * pj + sj for pj, sj in zip(p, s)]
    key = norm.int_key(R)
    if norm.kind == "euclidean":
        if not any(ties):
            return tuple(p), tuple(R), key, None
        options = [(pj, pj - 1) if tie else (pj,) for pj, tie in zip(p, ties)]
        alts = [c for c in itertools.product(*options)]
        return tuple(p), tuple(R), key, alts
    # sup-type: coordinate j may take any p_j with w_j |D p_j + s_j| <= key
    weights = norm.weights if norm.weights is not None else (1,) * len(s)
    per_coord = []
    multiple = False
    for sj, w in zip(s, weights):
        bound = Fraction(key) / w
        lo = math.ceil((-bound - sj) / D)
        hi = math.floor((bound - sj) / D)
        opts = list(range(lo, hi + 1))
        multiple |= len(opts) > 1
        per_coord.append(opts)
    if not multiple:
        return tuple(p), tuple(R), key, None
    alts = list(itertools.islice(itertools.product(*per_coord), 16))
    return tuple(p), tuple(R), key, alts


def min_residual(theta: MatrixTheta, q: Sequence[int], norm_m: Optional[NormSpec] = None):
    """The p minimising ||p + theta q|| and that minimal norm (as a Fraction
    for sup-type norms; a float for the euclidean norm).

    Raises :class:`TieBreak` if the minimiser is not unique.
    """
    q = tuple(int(t) for t in q)
    if not any(q):
        raise ValueError("q must be nonzero")
    norm_m = norm_m or NormSpec("sup", theta.m)
    N, D = theta.int_form
    s = [sum(row[j] * q[j] for j in range(theta.n)) for row in N]
    p, R, _, alts = _minimize(s, D, norm_m)
    if alts is not None:
        raise TieBreak(q, alts)
    residual = tuple(Fraction(r, D) for r in R)
    key = norm_m.key(residual)
    rnorm = key if norm_m.power == 1 else math.sqrt(key)
    return p, rnorm


def _q_candidates(n: int, norm_n: NormSpec, T: float):
    """Sign-normalised q with ||q|| < e^T, sorted by exact key."""
    power = norm_n.power
    expo = Fraction(T) * power
    bound = float(norm_n.coord_bound()) * math.exp(T) * (1 + 1e-12)
    R = int(math.floor(bound))
    if n == 1:
        # ||q|| = c * q is monotone in q > 0
        return [((q,), norm_n.key((q,))) for q in range(1, _column_cut(norm_n, T) + 1)]
    out = []
    for q in itertools.product(range(-R, R + 1), repeat=n):
        if not _sign_normalized(q):
            continue
        key = norm_n.key(q)
        if cmp_exp(key, expo) < 0:
            out.append((q, key))
    out.sort(key=lambda t: t[1])
    return out


def enumerate_best(theta: MatrixTheta, T: float, norms=None) -> BestApproxSeq:
    """All best approximations with ||q|| < e^T, ordered by ||q||.

    A zero residual is kept as the final record (theta is then an exact
    rational in that direction); :class:`RationalDegeneracy` is raised only
    when it occurs before any record with a positive residual.

    If ``theta`` carries a precision tag, raises :class:`HorizonExceeded`
    when the tag does not certify the structure up to T.
    """
    if T < 0:
        raise ValueError("T must be >= 0")
    m, n = theta.m, theta.n
    norm_m, norm_n = norms or default_norms(m, n)
    if norm_m.dimension != m or norm_n.dimension != n:
        raise ValueError("norm dimensions do not match theta")
    N, D = theta.int_form
    if n == 1 and norm_m.weights is None:
        items = _scan_column(N, D, norm_m, norm_n, T)
    else:
        items = _scan_general(N, D, n, norm_m, norm_n, T)
    seq = BestApproxSeq(tuple(items), T)
    if theta.precision_tag:
        horizon = certified_horizon(seq, theta, norms=(norm_m, norm_n))
        if horizon < T:
            raise HorizonExceeded(T, horizon)
        seq = BestApproxSeq(seq.items, T, horizon)
    return seq


def _record(p, q, R, D, norm_m, norm_n, qkey=None):
    residual = tuple(Fraction(r, D) for r in R)
    rkey = norm_m.key(residual)
    qkey = norm_n.key(q) if qkey is None else qkey
    return BestApprox(tuple(p), tuple(q), residual, rkey, qkey,
                      norm_m.key_to_norm(rkey), norm_n.key_to_norm(qkey))


def _scan_column(N, D, norm_m, norm_n, T):
    """n = 1: every q has its own norm, so only the record test remains.

    A cheap integer key screens candidates; the full minimiser analysis
    (with tie detection) runs only on those that could be records.
    """
    col = [row[0] for row in N]
    half = D // 2
    euclid = norm_m.kind == "euclidean"
    items = []
    best = None
    for q, _ in _q_candidates_column(norm_n, T):
        if euclid:
            key = 0
            for a in col:
                r = (a * q + half) % D - half
                key += r * r
        else:
            key = 0
            for a in col:
                r = abs((a * q + half) % D - half)
                if r > key:
                    key = r
        if best is not None and key >= best:
            continue
        s = [a * q for a in col]
        p, R, key, alts = _minimize(s, D, norm_m)
        if key == 0 and best is None:
            raise RationalDegeneracy(p, (q,))
        if alts is None:
            items.append(_record(p, (q,), R, D, norm_m, norm_n))
        best = key
        if key == 0:
            break
    return items


def _q_candidates_column(norm_n, T):
    hi = _column_cut(norm_n, T)
    return ((q, None) for q in range(1, hi + 1))


def _column_cut(norm_n, T) -> int:
    """Largest q >= 0 with ||q|| < e^T (one-dimensional)."""
    bound = float(norm_n.coord_bound()) * math.exp(T) * (1 + 1e-12)
    hi = int(math.floor(bound))
    expo = Fraction(T) * norm_n.power
    while hi >= 1 and cmp_exp(norm_n.key((hi,)), expo) >= 0:
        hi -= 1
    return hi


def _scan_general(N, D, n, norm_m, norm_n, T):
    cands = _q_candidates(n, norm_n, T)
    items = []
    best_before = None  # smallest residual key among strictly smaller ||q||
    i = 0
    while i < len(cands):
        j = i
        while j < len(cands) and cands[j][1] == cands[i][1]:
            j += 1
        group = []
        for q, qkey in cands[i:j]:
            s = [sum(row[c] * q[c] for c in range(n)) for row in N]
            p, R, key, alts = _minimize(s, D, norm_m)
            if key == 0 and best_before is None:
                raise RationalDegeneracy(p, q)
            group.append((key, alts is None, p, q, R, qkey))
        gmin = min(g[0] for g in group)
        winners = [g for g in group if g[0] == gmin]
        if (len(winners) == 1 and winners[0][1]
                and (best_before is None or gmin < best_before)):
            _, _, p, q, R, qkey = winners[0]
            items.append(_record(p, q, R, D, norm_m, norm_n, qkey))
        if best_before is None or gmin < best_before:
            best_before = gmin
        if gmin == 0:
            # an exact hit ends the record sequence
            break
        i = j
    return items


def certified_horizon(seq: BestApproxSeq, theta: MatrixTheta, norms=None) -> float:
    """Largest T' <= seq.horizon for which the precision tag of theta leaves
    the record structure intact.

    Perturbing theta by at most ``tag`` per entry moves p + theta q by at
    most op * ||q||; the records stay put while the current record residual
    exceeds twice that.
    """
    tag = theta.precision_tag
    if not tag:
        return math.inf
    norm_m, norm_n = norms or default_norms(theta.m, theta.n)
    op = float(tag) * norm_m.ones_norm() * theta.n * float(norm_n.coord_bound())
    qs = [math.log(b.qnorm) for b in seq.items] + [seq.horizon]
    for k, b in enumerate(seq.items):
        h = math.log(b.rnorm / (2 * op)) if b.rnorm > 0 else -math.inf
        if h < qs[k + 1]:
            return max(h, qs[k])
    return math.inf


def diophantine_sum(theta: MatrixTheta, a: float, b: float, F, norms=None,
                    seq: Optional[BestApproxSeq] = None) -> float:
    """Sum of F(||r||^m ||q||^n, r/||r||, q/||q||) over best approximations
    with e^a <= ||q|| < e^b, where r = p + theta q."""
    if not 0 <= a <= b:
        raise ValueError("need 0 <= a <= b")
    m, n = theta.m, theta.n
    norms = norms or default_norms(m, n)
    if seq is None or seq.horizon < b:
        seq = enumerate_best(theta, b, norms)
    return sum(evaluate(F, ba, m, n) for ba in window(seq, a, b, norms[1]))


def evaluate(F, ba: BestApprox, m: int, n: int) -> float:
    """F at (coefficient, directions); directions are skipped for observables
    of z alone, so an exact hit (zero residual) can still be evaluated."""
    if getattr(F, "depends_on_z_only", False):
        return F(ba.coefficient(m, n), None, None)
    return F(ba.coefficient(m, n), *ba.directions())


def window(seq: BestApproxSeq, a: float, b: float, norm_n: NormSpec) -> list:
    """Items of ``seq`` with e^a <= ||q|| < e^b (exact comparisons)."""
    p = norm_n.power
    lo, hi = Fraction(a) * p, Fraction(b) * p
    return [ba for ba in seq.items
            if cmp_exp(ba.qkey, lo) >= 0 and cmp_exp(ba.qkey, hi) < 0]


def counting(seq: BestApproxSeq, T: float, norm_n: NormSpec) -> int:
    """N(theta, T) from an enumerated sequence."""
    return len(window(seq, 0, T, norm_n))
