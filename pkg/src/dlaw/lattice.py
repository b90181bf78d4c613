"""Unimodular lattices a_l B Z^d, the set S_Lambda and the observable f.

A :class:`LatticeBasis` stores an exact rational matrix B together with an
integer flow time l; the lattice it represents is a_l B Z^{m+n} with
a_l = diag(e^{(n/m) l} I_m, e^{-l} I_n).  Because a_l scales each block by
a positive constant, comparisons between vectors of one lattice reduce to
exact comparisons of the pre-flow vectors B z, and comparisons against the
constants 1 and e reduce to :func:`cmp_exp`.  Floating point is only used to
*generate* candidate points (with slack); every membership decision is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .best_approx import BestApproxSeq, enumerate_best, window
from .errors import DirectionUndefined, EnumerationBlowup
from .norms import MatrixTheta, NormSpec, cmp_exp, default_norms

DEFAULT_BUDGET = 10 ** 8


def _det(rows) -> Fraction:
    a = [list(r) for r in rows]
    d = len(a)
    det = Fraction(1)
    for c in range(d):
        piv = next((r for r in range(c, d) if a[r][c] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != c:
            a[c], a[piv] = a[piv], a[c]
            det = -det
        det *= a[c][c]
        for r in range(c + 1, d):
            f = a[r][c] / a[c][c]
            if f:
                for k in range(c, d):
                    a[r][k] -= f * a[c][k]
    return det


def matmul(A, B) -> tuple:
    return tuple(tuple(sum(A[i][k] * B[k][j] for k in range(len(B)))
                       for j in range(len(B[0]))) for i in range(len(A)))


@dataclass(frozen=True)
class LatticeBasis:
    B: tuple
    dims: tuple
    flow: int = 0

    def __post_init__(self):
        rows = tuple(tuple(Fraction(x) for x in r) for r in self.B)
        m, n = self.dims
        d = m + n
        if len(rows) != d or any(len(r) != d for r in rows):
            raise ValueError(f"basis must be {d}x{d}")
        if abs(_det(rows)) != 1:
            raise ValueError("basis must have determinant +-1")
        object.__setattr__(self, "B", rows)
        object.__setattr__(self, "flow", int(self.flow))

    @property
    def d(self) -> int:
        return sum(self.dims)

    def det(self) -> Fraction:
        return _det(self.B)

    def column(self, j: int) -> tuple:
        return tuple(r[j] for r in self.B)

    def pre(self, z: Sequence[int]) -> tuple:
        """Exact pre-flow vector B z."""
        return tuple(sum(r[j] * z[j] for j in range(self.d)) for r in self.B)

    def flow_scales(self) -> np.ndarray:
        m, n = self.dims
        l = self.flow
        return np.array([math.exp(n / m * l)] * m + [math.exp(-l)] * n)

    def realized(self) -> np.ndarray:
        """a_l B in float64."""
        Bf = np.array([[float(x) for x in r] for r in self.B])
        return self.flow_scales()[:, None] * Bf

    def realized_mp(self, prec: int = 128):
        """a_l B as an mpmath matrix at ``prec`` bits."""
        import mpmath
        m, n = self.dims
        with mpmath.workprec(prec):
            sx = mpmath.exp(mpmath.mpf(n) / m * self.flow)
            sy = mpmath.exp(-mpmath.mpf(self.flow))
            return mpmath.matrix([[mpmath.mpf(x.numerator) / x.denominator * (sx if i < m else sy)
                                   for x in r] for i, r in enumerate(self.B)])


def embed_theta(theta: MatrixTheta) -> LatticeBasis:
    """u(theta) = [[I_m, theta], [0, I_n]]."""
    m, n = theta.m, theta.n
    rows = []
    for i in range(m):
        rows.append([Fraction(int(i == j)) for j in range(m)] + list(theta.entries[i]))
    for i in range(n):
        rows.append([Fraction(0)] * m + [Fraction(int(i == j)) for j in range(n)])
    return LatticeBasis(tuple(map(tuple, rows)), (m, n))


def apply_flow(basis: LatticeBasis, l: int) -> LatticeBasis:
    """a_l applied on the left (integer l)."""
    if int(l) != l:
        raise ValueError("flow time must be an integer")
    return LatticeBasis(basis.B, basis.dims, basis.flow + int(l))


def transform(basis: LatticeBasis, g) -> LatticeBasis:
    """g B for a rational matrix g of determinant +-1 (flow must be 0)."""
    if basis.flow != 0:
        raise ValueError("transform needs an unflowed basis")
    g = tuple(tuple(Fraction(x) for x in r) for r in g)
    return LatticeBasis(matmul(g, basis.B), basis.dims)


def change_basis(basis: LatticeBasis, U) -> LatticeBasis:
    """B U for an integer unimodular U: same lattice, different basis."""
    return LatticeBasis(matmul(basis.B, tuple(tuple(Fraction(x) for x in r) for r in U)),
                        basis.dims, basis.flow)


# --------------------------------------------------------------------------
# reduction and enumeration


def _lll(basis: LatticeBasis, delta: float = 0.99):
    """LLL on the realized columns; returns (U, exact columns B U, float a_l B U).

    Column operations are exact, and each float column is recomputed from its
    exact counterpart, so the result is a true basis whatever the rounding.
    """
    d = basis.d
    scales = basis.flow_scales()
    cols = [list(basis.column(j)) for j in range(d)]
    U = [[int(i == j) for j in range(d)] for i in range(d)]  # column j = U[.][j]

    def real(c):
        return np.array([float(x) for x in c]) * scales

    F = [real(c) for c in cols]

    def gram_schmidt():
        bstar, mu = [], np.zeros((d, d))
        for i in range(d):
            v = F[i].copy()
            for j in range(i):
                mu[i, j] = F[i] @ bstar[j] / (bstar[j] @ bstar[j])
                v = v - mu[i, j] * bstar[j]
            bstar.append(v)
        return bstar, mu

    k, guard = 1, 0
    bstar, mu = gram_schmidt()
    while k < d:
        guard += 1
        if guard > 100000:  # pragma: no cover
            break
        for j in range(k - 1, -1, -1):
            r = round(mu[k, j])
            if r:
                cols[k] = [a - r * b for a, b in zip(cols[k], cols[j])]
                for i in range(d):
                    U[i][k] -= r * U[i][j]
                F[k] = real(cols[k])
                bstar, mu = gram_schmidt()
        if bstar[k] @ bstar[k] >= (delta - mu[k, k - 1] ** 2) * (bstar[k - 1] @ bstar[k - 1]):
            k += 1
        else:
            cols[k], cols[k - 1] = cols[k - 1], cols[k]
            F[k], F[k - 1] = F[k - 1], F[k]
            for i in range(d):
                U[i][k], U[i][k - 1] = U[i][k - 1], U[i][k]
            bstar, mu = gram_schmidt()
            k = max(k - 1, 1)
    return U, cols, np.array(F).T


def _sphere_points(M: np.ndarray, radius: float, budget: int):
    """All nonzero integer y with ||M y||_2 <= radius (Fincke-Pohst)."""
    d = M.shape[1]
    R = np.linalg.qr(M, mode="r")
    out = []
    y = [0] * d
    nodes = 0

    def rec(i, rem):
        nonlocal nodes
        if i < 0:
            if any(y):
                out.append(tuple(y))
            return
        c = -sum(R[i, j] * y[j] for j in range(i + 1, d)) / R[i, i]
        span = math.sqrt(max(rem, 0.0)) / abs(R[i, i])
        lo, hi = math.ceil(c - span), math.floor(c + span)
        nodes += max(hi - lo + 1, 0)
        if nodes > budget:
            raise EnumerationBlowup(f"more than {budget} enumeration nodes")
        for yi in range(lo, hi + 1):
            y[i] = yi
            t = R[i, i] * (yi - c)
            rec(i - 1, rem - t * t)
        y[i] = 0

    rec(d - 1, radius * radius * (1 + 1e-9) + 1e-300)
    return out


@dataclass(frozen=True)
class LatticePoint:
    z: tuple            # integer coefficients w.r.t. the basis B
    pre: tuple          # exact B z
    primitive: bool

    def neg(self) -> "LatticePoint":
        return LatticePoint(tuple(-t for t in self.z), tuple(-t for t in self.pre), self.primitive)


def _candidates(basis: LatticeBasis, x_radius: float, y_radius: float, norms,
                budget: int = DEFAULT_BUDGET) -> list:
    """Superset of the lattice points with ||pi1 v|| <= x_radius, ||pi2 v|| <= y_radius."""
    m, n = basis.dims
    norm_m, norm_n = norms
    cx = float(norm_m.coord_bound()) * float(x_radius)
    cy = float(norm_n.coord_bound()) * float(y_radius)
    radius = math.sqrt(m * cx * cx + n * cy * cy)
    if radius == 0:
        return []
    U, cols, M = _lll(basis)
    pts = []
    for y in _sphere_points(M, radius, budget):
        z = tuple(sum(U[i][j] * y[j] for j in range(basis.d)) for i in range(basis.d))
        pre = tuple(sum(cols[j][i] * y[j] for j in range(basis.d)) for i in range(basis.d))
        g = 0
        for t in z:
            g = math.gcd(g, t)
        pts.append(LatticePoint(z, pre, g == 1))
    return pts


def _split(basis: LatticeBasis, pre):
    m = basis.dims[0]
    return pre[:m], pre[m:]


@dataclass(frozen=True)
class BoxSpec:
    x_radius: Fraction
    y_radius: Fraction
    norms: tuple = None

    def __post_init__(self):
        object.__setattr__(self, "x_radius", Fraction(self.x_radius))
        object.__setattr__(self, "y_radius", Fraction(self.y_radius))
        if self.x_radius < 0 or self.y_radius < 0:
            raise ValueError("radii must be nonnegative")


def _within(key: Fraction, radius: Fraction, power: int, log_scale: Fraction) -> bool:
    """Is exp(log_scale) * ||.|| <= radius, given the exact key of ||.||?"""
    if radius == 0:
        return key == 0
    # key * e^{power log_scale} <= radius^power
    return cmp_exp(key / radius ** power, -power * log_scale) <= 0


def points_in_box(basis: LatticeBasis, box: BoxSpec, budget: int = DEFAULT_BUDGET) -> list:
    """All nonzero v in the lattice with ||pi1 v|| <= x_radius and
    ||pi2 v|| <= y_radius, as :class:`LatticePoint` (both signs)."""
    m, n = basis.dims
    norms = box.norms or default_norms(m, n)
    norm_m, norm_n = norms
    l = Fraction(basis.flow)
    sx, sy = Fraction(n, m) * l, -l
    out = []
    for pt in _candidates(basis, float(box.x_radius) * (1 + 1e-9),
                          float(box.y_radius) * (1 + 1e-9), norms, budget):
        x, y = _split(basis, pt.pre)
        if (_within(norm_m.key(x), box.x_radius, norm_m.power, sx)
                and _within(norm_n.key(y), box.y_radius, norm_n.power, sy)):
            out.append(pt)
    return out


def points_in_box_bruteforce(basis: LatticeBasis, box: BoxSpec) -> list:
    """Oracle: scan the coefficient box ||z||_inf <= ||(a_l B)^-1||_inf * r."""
    m, n = basis.dims
    norms = box.norms or default_norms(m, n)
    Minv = np.linalg.inv(basis.realized())
    r = max(float(norms[0].coord_bound() * box.x_radius),
            float(norms[1].coord_bound() * box.y_radius))
    K = int(math.floor(np.abs(Minv).sum(axis=1).max() * r * (1 + 1e-9) + 1e-9))
    if (2 * K + 1) ** basis.d > DEFAULT_BUDGET:
        raise EnumerationBlowup(f"coefficient box of radius {K} too large")
    l = Fraction(basis.flow)
    out = []
    import itertools
    for z in itertools.product(range(-K, K + 1), repeat=basis.d):
        if not any(z):
            continue
        pre = basis.pre(z)
        x, y = _split(basis, pre)
        if (_within(norms[0].key(x), box.x_radius, norms[0].power, Fraction(n, m) * l)
                and _within(norms[1].key(y), box.y_radius, norms[1].power, -l)):
            g = 0
            for t in z:
                g = math.gcd(g, t)
            out.append(LatticePoint(tuple(z), pre, g == 1))
    return out


# --------------------------------------------------------------------------
# S_Lambda and f


@dataclass(frozen=True)
class SLambda:
    """One representative per +-pair; ``len`` counts both signs."""

    points: tuple
    basis: LatticeBasis = field(repr=False)

    def __len__(self):
        return 2 * len(self.points)

    def pre_set(self) -> set:
        """Exact pre-flow vectors, both signs."""
        return {p.pre for p in self.points} | {p.neg().pre for p in self.points}


def _canonical(pt: LatticePoint) -> LatticePoint:
    for t in pt.z:
        if t:
            return pt if t > 0 else pt.neg()
    return pt


def compute_S_Lambda(basis: LatticeBasis, norms=None, budget: int = DEFAULT_BUDGET) -> SLambda:
    """Primitive v with 1 <= ||pi2 v|| < e, ||pi1 v|| <= 1 whose box C_v holds
    no primitive lattice points other than +-v."""
    m, n = basis.dims
    norm_m, norm_n = norms or default_norms(m, n)
    l = Fraction(basis.flow)
    px, py = norm_m.power, norm_n.power
    cands = [p for p in _candidates(basis, 1 + 1e-9, math.e * (1 + 1e-9),
                                    (norm_m, norm_n), budget) if p.primitive]
    keyed = []
    for pt in cands:
        x, y = _split(basis, pt.pre)
        keyed.append((pt, norm_m.key(x), norm_n.key(y)))
    chosen = {}
    for pt, kx, ky in keyed:
        if cmp_exp(ky, py * l) < 0 or cmp_exp(ky, py * (l + 1)) >= 0:
            continue
        if cmp_exp(kx, -px * Fraction(n, m) * l) > 0:
            continue
        inside = sum(1 for _, kx2, ky2 in keyed if kx2 <= kx and ky2 <= ky)
        if inside == 2:
            c = _canonical(pt)
            chosen[c.z] = c
    return SLambda(tuple(chosen[z] for z in sorted(chosen)), basis)


def phi(pre_x, pre_y, norms, dims):
    """phi(v) = (||x||^m ||y||^n, x/||x||, y/||y||) from pre-flow blocks.

    The flow scalings cancel in the first entry and do not move directions.
    """
    m, n = dims
    norm_m, norm_n = norms
    kx, ky = norm_m.key(pre_x), norm_n.key(pre_y)
    if kx == 0 or ky == 0:
        raise DirectionUndefined(f"zero block in vector {tuple(pre_x) + tuple(pre_y)}")
    nx, ny = norm_m.key_to_norm(kx), norm_n.key_to_norm(ky)
    x = np.array([float(t) for t in pre_x]) / nx
    y = np.array([float(t) for t in pre_y]) / ny
    return nx ** m * ny ** n, x, y


def observable_f(basis: LatticeBasis, F, norms=None, S: Optional[SLambda] = None,
                 signs: str = "both") -> float:
    """f(Lambda) = sum over v in S_Lambda (both signs) of F(phi(v)).

    With ``signs="normalized"`` only the member of each +-pair whose y-block
    has a positive first nonzero entry is used; this is the convention of
    sign-normalised best approximations (one per +-(p, q)).
    """
    if signs not in ("both", "normalized"):
        raise ValueError("signs must be 'both' or 'normalized'")
    norms = norms or default_norms(*basis.dims)
    S = S if S is not None else compute_S_Lambda(basis, norms)
    total = 0.0
    for pt in S.points:
        x, y = _split(basis, pt.pre)
        z, xd, yd = phi(x, y, norms, basis.dims)
        if signs == "both":
            total += F(z, xd, yd) + F(z, -xd, -yd)
        else:
            first = next(t for t in y if t != 0)
            total += F(z, xd, yd) if first > 0 else F(z, -xd, -yd)
    return total


def perturbation_phi(v, delta: float, norms=None, dims=(1, 1)) -> int:
    """phi_delta: 1 on the shell between the enlarged and the shrunken window."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    m, n = dims
    norm_m, norm_n = norms or default_norms(m, n)
    nx, ny = norm_m.norm(v[:m]), norm_n.norm(v[m:])
    outer = nx <= 1 + delta and 1 - delta <= ny <= math.e + delta
    inner = nx < 1 - delta and 1 + delta < ny < math.e - delta
    return int(outer and not inner)


def perturbation_Phi(v, w, delta: float, norms=None, dims=(1, 1)) -> int:
    """Phi_delta: both in the enlarged box and one projected norm nearly equal."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    m, n = dims
    norm_m, norm_n = norms or default_norms(m, n)
    nvx, nvy = norm_m.norm(v[:m]), norm_n.norm(v[m:])
    nwx, nwy = norm_m.norm(w[:m]), norm_n.norm(w[m:])
    box = (nvx <= 1 + delta and nvy <= math.e + delta
           and nwx <= 1 + delta and nwy <= math.e + delta)
    return int(box and (abs(nvx - nwx) <= delta or abs(nvy - nwy) <= delta))


def perturbation_sums(basis: LatticeBasis, delta: float, norms=None):
    """(sum of phi_delta over primitive v, sum of Phi_delta over ordered
    pairs of primitive v, w with w != +-v)."""
    m, n = basis.dims
    norms = norms or default_norms(m, n)
    pts = [p for p in _candidates(basis, (1 + delta) * (1 + 1e-9),
                                  (math.e + delta) * (1 + 1e-9), norms) if p.primitive]
    scales = basis.flow_scales()
    vecs = [np.array([float(t) for t in p.pre]) * scales for p in pts]
    s1 = sum(perturbation_phi(v, delta, norms, (m, n)) for v in vecs)
    s2 = 0
    for i, v in enumerate(vecs):
        for j, w in enumerate(vecs):
            if pts[i].z == pts[j].z or pts[i].z == tuple(-t for t in pts[j].z):
                continue
            s2 += perturbation_Phi(v, w, delta, norms, (m, n))
    return s1, s2


# --------------------------------------------------------------------------
# correspondence with best approximations


@dataclass(frozen=True)
class Correspondence:
    lhs: float
    rhs: float
    equal: bool
    best_vectors: frozenset
    s_vectors: frozenset


def correspondence_check(theta: MatrixTheta, l: int, F, norms=None,
                         seq: Optional[BestApproxSeq] = None, tol: float = 1e-9) -> Correspondence:
    """Compare F_F(theta, l, l+1) with f(a_l u(theta) Z^d), as sets and sums.

    ``lhs`` sums over both members of each +-pair of best approximations,
    i.e. twice :func:`diophantine_sum` for observables even in the directions.
    """
    m, n = theta.m, theta.n
    norms = norms or default_norms(m, n)
    if seq is None or seq.horizon < l + 1:
        seq = enumerate_best(theta, l + 1, norms)
    items = window(seq, l, l + 1, norms[1])
    best = set()
    lhs = 0.0
    for ba in items:
        v = tuple(ba.residual) + tuple(Fraction(t) for t in ba.q)
        best.add(v)
        best.add(tuple(-t for t in v))
        # (p, q) and (-p, -q) are both best approximations; f sees both
        x, y = ba.directions()
        lhs += F(ba.coefficient(m, n), x, y) + F(ba.coefficient(m, n), -x, -y)
    basis = apply_flow(embed_theta(theta), l)
    S = compute_S_Lambda(basis, norms)
    s_set = S.pre_set()
    rhs = observable_f(basis, F, norms, S)
    equal = best == s_set and abs(lhs - rhs) <= tol * max(1.0, abs(lhs))
    return Correspondence(lhs, rhs, equal, frozenset(best), frozenset(s_set))


def shortest_vector(basis: LatticeBasis, norms=None) -> float:
    """min over nonzero v of max(||pi1 v||, ||pi2 v||), in float."""
    m, n = basis.dims
    norms = norms or default_norms(m, n)
    U, cols, M = _lll(basis)
    scales = basis.flow_scales()

    def combined(pre):
        v = np.array([float(t) for t in pre]) * scales
        return max(norms[0].norm(v[:m]), norms[1].norm(v[m:]))

    ub = min(combined(c) for c in cols)
    pts = _candidates(basis, ub * (1 + 1e-9), ub * (1 + 1e-9), norms)
    return min([ub] + [combined(p.pre) for p in pts])
