"""Experiment drivers: Doeblin-Lenstra averages, CLT, rate fits, fractal
runs, correlation decay probes and the best-approximation correspondence.

Every trial draws its randomness from ``SeedSequence(seed).spawn(trials)``,
so results do not depend on the number of worker processes.
"""

from __future__ import annotations

import hashlib
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from typing import Optional

import numpy as np
from scipy import integrate, stats

from .best_approx import enumerate_best
from .errors import ConfigError, DirectionUndefined, HorizonExceeded, InsufficientData
from .fractal import IFSSystem, cantor_depth, cantor_system, sample_theta as ifs_sample
from .lattice import (LatticeBasis, apply_flow, compute_S_Lambda, correspondence_check,
                      embed_theta, observable_f, perturbation_sums, phi, shortest_vector,
                      transform)
from .norms import MatrixTheta, NormSpec, default_norms
from .observables import OBSERVABLES, observable
from .reference import (DL_MEAN, convergent_stream, gamma_reference_1d, levy_gamma0_1d,
                        nu_functional, sigma_from_windows, window_sums)

MODES = ("dl", "clt", "fractal", "rate", "correlation", "lemma51")
LEVY_LOG_RATE = math.pi ** 2 / (12 * math.log(2))  # a.e. limit of log(q_N) / N
EPS_LOG = 0.1
PROBES = ("bump", "const")


@dataclass(frozen=True)
class RunConfig:
    mode: str
    m: int = 1
    n: int = 1
    norms: Optional[tuple] = None
    observable: str = "z"
    horizon: int = 1000
    trials: int = 10
    seed: int = 0
    measure: str = "lebesgue"
    bits: Optional[int] = None
    out: Optional[str] = None
    cutoff: int = 20
    eps: float = EPS_LOG
    timing: bool = True
    threads: int = 1
    gamma: Optional[float] = None
    ifs: Optional[IFSSystem] = field(default=None, compare=False)
    grid: Optional[tuple] = None
    r: int = 1
    samples: int = 400
    probe: str = "bump"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {', '.join(MODES)}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if self.m < 1 or self.n < 1:
            raise ConfigError("m and n must be >= 1")
        if self.observable not in OBSERVABLES:
            raise ConfigError(f"unknown observable {self.observable!r}")
        if not (self.measure == "lebesgue" or self.measure.startswith("ifs:")):
            raise ConfigError("measure must be 'lebesgue' or 'ifs:<name>'")
        if self.measure.startswith("ifs:") and self.measure != "ifs:cantor" and self.ifs is None:
            raise ConfigError(f"measure {self.measure!r} needs an 'ifs' definition")
        if self.bits is not None and self.bits < 8:
            raise ConfigError("bits must be >= 8")
        if self.cutoff < 0:
            raise ConfigError("cutoff must be >= 0")
        if self.r not in (1, 2):
            raise ConfigError("r must be 1 or 2")
        if self.probe not in PROBES:
            raise ConfigError(f"unknown probe {self.probe!r}; expected one of {', '.join(PROBES)}")
        if self.norms is not None:
            nm, nn = self.norms
            if nm.dimension != self.m or nn.dimension != self.n:
                raise ConfigError("norm dimensions do not match (m, n)")

    def norm_pair(self) -> tuple:
        return self.norms or default_norms(self.m, self.n)

    def precision_bits(self) -> int:
        """Binary digits per entry of theta needed to certify the horizon."""
        if self.bits is not None:
            return self.bits
        if self.mode in ("dl", "fractal") and self.m == self.n == 1:
            nats = self.horizon * LEVY_LOG_RATE
        elif self.mode in ("dl", "fractal"):
            # up to 2N units of log ||q|| (records are about one per unit),
            # and the residual shrinks like ||q||^(-n/m)
            nats = self.horizon * (1 + self.n / self.m)
        else:
            nats = self.horizon + 1
        # convergents need q_k^2 * error < 1 with a 10% margin
        return math.ceil(2.2 * nats / math.log(2)) + 64

    def ifs_system(self) -> Optional[IFSSystem]:
        if not self.measure.startswith("ifs:"):
            return None
        return self.ifs if self.ifs is not None else cantor_system()


@dataclass(frozen=True)
class ExperimentRecord:
    trial: int
    checkpoint_T: float
    sum_F: float
    count_N: int
    err_gamma: float
    err_gamma0: float
    clt_stat: float
    seed: int
    wall_ms: float

    def __post_init__(self):
        for name in ("err_gamma", "err_gamma0"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


FIELDS = tuple(ExperimentRecord.__dataclass_fields__)


@dataclass
class RunResult:
    config: RunConfig
    records: list
    summary: dict
    digests: dict = field(default_factory=dict)  # trial -> sha256 of theta
    failures: list = field(default_factory=list)


# --------------------------------------------------------------------------
# sampling


def trial_seeds(config: RunConfig) -> list:
    return np.random.SeedSequence(config.seed).spawn(config.trials)


def seed_label(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1)[0])


def dyadic(rng: np.random.Generator, bits: int) -> Fraction:
    raw = int.from_bytes(rng.bytes((bits + 7) // 8), "little")
    return Fraction(raw & ((1 << bits) - 1), 1 << bits)


def sample_theta(config: RunConfig, rng: np.random.Generator) -> MatrixTheta:
    """Lebesgue: uniform dyadic entries in [0, 1); IFS: exact word image."""
    bits = config.precision_bits()
    sys = config.ifs_system()
    if sys is None:
        entries = tuple(tuple(dyadic(rng, bits) for _ in range(config.n)) for _ in range(config.m))
        return MatrixTheta(entries, Fraction(1, 1 << bits))
    if sys.dims != (config.m, config.n):
        raise ConfigError("IFS dimensions do not match (m, n)")
    # depth so that the tail tag drops below 2^-bits
    factor = float(sys.tail_factor())
    depth = max(1, math.ceil(bits * math.log(2) / -math.log(factor)))
    return ifs_sample(sys, depth, rng)


def theta_digest(theta: MatrixTheta) -> str:
    h = hashlib.sha256()
    for row in theta.entries:
        for x in row:
            for k in (x.numerator, x.denominator):
                h.update(k.to_bytes((k.bit_length() + 8) // 8, "little", signed=True))
    return h.hexdigest()


def reference_gamma(config: RunConfig) -> Optional[float]:
    """gamma for the configured observable when a closed form exists."""
    if config.gamma is not None:
        return config.gamma
    F = observable(config.observable, config.m, config.n)
    if config.m == config.n == 1 and config.norms is None and F.depends_on_z_only:
        return gamma_reference_1d(lambda z: float(F.of_z(np.array([z]))[0]))
    return None


def reference_beta(config: RunConfig) -> Optional[float]:
    g = reference_gamma(config)
    return None if g is None else g / levy_gamma0_1d()


# --------------------------------------------------------------------------
# workers (top level so they pickle)


def _elapsed(config, t0) -> float:
    return (time.perf_counter() - t0) * 1000 if config.timing else 0.0


def _dl_trial(config: RunConfig, index: int, ss) -> dict:
    """Running averages over the first N best approximates."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(ss)
    theta = sample_theta(config, rng)
    F = observable(config.observable, config.m, config.n)
    N = config.horizon
    if config.m == config.n == 1 and config.norms is None:
        c, lq, sg, certified = convergent_stream(theta)
        if len(c) < N or lq[N - 1] >= certified:
            raise HorizonExceeded(N, len(c))
        vals = F.of_z(c[:N]) if F.depends_on_z_only else np.array(
            [F(float(z), np.array([s]), np.array([1.0])) for z, s in zip(c[:N], sg[:N])])
        coeffs, logq = c[:N], lq[:N]
    else:
        coeffs, logq, vals = _lattice_records(theta, N, F, config.norm_pair())
    return {"theta": theta_digest(theta), "vals": vals, "coeffs": coeffs, "logq": logq,
            "seed": seed_label(ss), "wall_ms": _elapsed(config, t0)}


def _lattice_records(theta: MatrixTheta, N: int, F, norms):
    """First N best approximations read off S of a_l u(theta) Z^d, l = 0, 1, ...

    Each window [e^l, e^{l+1}) costs one lattice enumeration, where a direct
    scan over q would cost e^l.  Records are checked against the precision
    tag as in :func:`certified_horizon`.
    """
    m, n = theta.m, theta.n
    norm_m, norm_n = norms
    base = embed_theta(theta)
    tag = float(theta.precision_tag or 0)
    op = tag * norm_m.ones_norm() * n * float(norm_n.coord_bound())
    coeffs, logq, vals = [], [], []
    l = 0
    while len(coeffs) < N:
        S = compute_S_Lambda(apply_flow(base, l), norms)
        rows = []
        for pt in S.points:
            x, y = pt.pre[:m], pt.pre[m:]
            if next(t for t in y if t) < 0:
                x, y = tuple(-t for t in x), tuple(-t for t in y)
            rows.append((norm_n.key(y), x, y))
        for _, x, y in sorted(rows):
            z, xd, yd = phi(x, y, norms, (m, n))
            qn = norm_n.norm(y)
            if op and norm_m.norm(x) <= 2 * op * qn:
                raise HorizonExceeded(N, len(coeffs))
            coeffs.append(z)
            logq.append(math.log(qn))
            vals.append(F(z, xd, yd))
        l += 1
    return np.array(coeffs[:N]), np.array(logq[:N]), np.array(vals[:N])


def _window_trial(config: RunConfig, index: int, ss) -> dict:
    """Window sums X_0..X_{T-1} of F and of the constant 1."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(ss)
    theta = sample_theta(config, rng)
    F = observable(config.observable, config.m, config.n)
    T = config.horizon
    X, C = window_sums([F, observable("one")], theta, T - 1, config.norms, start=0)
    return {"theta": theta_digest(theta), "X": X, "C": C, "seed": seed_label(ss),
            "wall_ms": _elapsed(config, t0)}


def _run_trials(config: RunConfig, worker) -> tuple:
    seeds = trial_seeds(config)
    jobs = [(config, i, ss) for i, ss in enumerate(seeds)]
    results, failures = [None] * len(jobs), []
    threads = _threads(config)
    if threads > 1:
        with ProcessPoolExecutor(threads) as pool:
            futs = [pool.submit(_guarded, worker, *job) for job in jobs]
            outs = [f.result() for f in futs]
    else:
        outs = [_guarded(worker, *job) for job in jobs]
    for i, (ok, val) in enumerate(outs):
        if ok:
            results[i] = val
        else:
            failures.append({"trial": i, "error": val})
    return results, failures


def _guarded(worker, config, index, ss):
    try:
        return True, worker(config, index, ss)
    except (HorizonExceeded, DirectionUndefined, ArithmeticError) as exc:
        return False, f"{type(exc).__name__}: {exc}"


def _threads(config: RunConfig) -> int:
    env = os.environ.get("DLX_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"DLX_THREADS must be an integer, got {env!r}")
    return max(1, config.threads)


def log_checkpoints(lo: float, hi: float, count: int) -> list:
    pts = np.unique(np.round(np.geomspace(lo, hi, count)).astype(int))
    return [int(x) for x in pts]


# --------------------------------------------------------------------------
# drivers


def run_dl(config: RunConfig) -> RunResult:
    """Running average of F along the first N best approximates per trial."""
    results, failures = _run_trials(config, _dl_trial)
    beta = reference_beta(config)
    g0 = levy_gamma0_1d()
    N = config.horizon
    checkpoints = log_checkpoints(10, N, 13) if N >= 10 else [N]
    records, digests, averages, pooled = [], {}, [], []
    for i, res in enumerate(results):
        if res is None:
            continue
        digests[i] = res["theta"]
        csum = np.cumsum(res["vals"])
        for k in checkpoints:
            s = float(csum[k - 1])
            ref = beta if beta is not None else float("nan")
            err = s / k - ref if beta is not None else 0.0
            logq = float(res["logq"][k - 1])
            rate_err = (k / logq - g0) if logq > 0 else 0.0
            records.append(ExperimentRecord(i, k, s, k, err, rate_err,
                                            err * math.sqrt(k), res["seed"], res["wall_ms"]))
        averages.append(float(csum[-1]) / N)
        pooled.append(res["coeffs"])
    summary = {"mode": config.mode, "trials_ok": len(averages), "trials_failed": len(failures)}
    if averages:
        coeffs = np.concatenate(pooled)
        summary.update({
            "grand_mean": float(np.mean(averages)),
            "trial_sd": float(np.std(averages, ddof=1)) if len(averages) > 1 else 0.0,
            "reference_beta": beta,
            "pooled_cdf_half": float(np.mean(coeffs <= 0.5)),
            "cdf_sup_distance": cdf_sup_distance(coeffs),
            "pooled_count": int(len(coeffs)),
        })
    return RunResult(config, records, summary, digests, failures)


def pooled_coefficients(config: RunConfig) -> np.ndarray:
    results, _ = _run_trials(config, _dl_trial)
    return np.concatenate([r["coeffs"] for r in results if r is not None])


def cdf_sup_distance(coeffs: np.ndarray, grid_points: int = 100) -> float:
    from .reference import nu_cdf
    grid = np.linspace(0, 1, grid_points)
    emp = np.searchsorted(np.sort(coeffs), grid, side="right") / len(coeffs)
    return float(np.max(np.abs(emp - nu_cdf(grid))))


def _window_records(config, results, gamma):
    g0 = levy_gamma0_1d()
    T = config.horizon
    checkpoints = log_checkpoints(min(100, T), T, 31) if T >= 10 else [T]
    records, digests = [], {}
    for i, res in enumerate(results):
        if res is None:
            continue
        digests[i] = res["theta"]
        cx, cc = np.cumsum(res["X"]), np.cumsum(res["C"])
        for t in checkpoints:
            s, cnt = float(cx[t - 1]), int(round(cc[t - 1]))
            err = s - gamma * t
            records.append(ExperimentRecord(i, t, s, cnt, err, cnt - g0 * t,
                                            err / math.sqrt(t), res["seed"], res["wall_ms"]))
    return records, digests, checkpoints


def _gamma_for(config, results) -> tuple:
    g = reference_gamma(config)
    if g is not None:
        return g, "reference"
    ok = [r for r in results if r is not None]
    return float(np.mean([r["X"].sum() for r in ok]) / config.horizon), "pooled"


def ks_distances(stats_: np.ndarray, sigma_hat: float) -> dict:
    stats_ = np.asarray(stats_, dtype=float)
    if np.all(stats_ == 0):
        return {"ks_fit": 0.0, "ks_sigma_hat": 0.0, "sigma_fit": 0.0}
    sigma_fit = float(np.sqrt(np.mean(stats_ ** 2)))
    out = {"ks_fit": float(stats.kstest(stats_, "norm", args=(0, sigma_fit)).statistic),
           "sigma_fit": sigma_fit}
    out["ks_sigma_hat"] = (float(stats.kstest(stats_, "norm", args=(0, sigma_hat)).statistic)
                           if sigma_hat > 0 else 1.0)
    return out


def run_clt(config: RunConfig) -> RunResult:
    """(F_F(theta, T) - gamma T) / sqrt(T) across trials, with KS distances."""
    if config.trials < 50:
        raise InsufficientData("the CLT run needs at least 50 trials")
    results, failures = _run_trials(config, _window_trial)
    ok = [r for r in results if r is not None]
    if len(ok) < 50:
        raise InsufficientData(f"only {len(ok)} trials succeeded")
    gamma, source = _gamma_for(config, results)
    records, digests, _ = _window_records(config, results, gamma)
    T = config.horizon
    stat = np.array([(r["X"].sum() - gamma * T) / math.sqrt(T) for r in ok])
    series = [r["X"] for r in ok]
    cutoff = min(config.cutoff, T // 10)
    sigma_hat = sigma_from_windows(series, cutoff)
    summary = {"mode": "clt", "trials_ok": len(ok), "trials_failed": len(failures),
               "gamma": gamma, "gamma_source": source, "sigma_hat": sigma_hat,
               "cutoff": cutoff, "stat_mean": float(stat.mean()),
               "stat_var": float(stat.var(ddof=1))}
    summary.update(ks_distances(stat, sigma_hat))
    summary["var_ratio"] = summary["stat_var"] / sigma_hat ** 2 if sigma_hat > 0 else float("nan")
    ecdf_x = np.sort(stat)
    summary["ecdf"] = [[float(x), (k + 1) / len(stat)] for k, x in enumerate(ecdf_x)]
    result = RunResult(config, records, summary, digests, failures)
    result.series = series
    return result


def fit_rate(T, errors, q: float = 0.9) -> float:
    """Slope of the q-quantile regression of log|error| on log T."""
    import statsmodels.api as sm
    T = np.asarray(T, dtype=float)
    e = np.abs(np.asarray(errors, dtype=float))
    keep = e > 0
    X = sm.add_constant(np.log(T[keep]))
    res = sm.QuantReg(np.log(e[keep]), X).fit(q=q)
    return float(res.params[1])


def run_rate_fit(config: RunConfig) -> RunResult:
    """0.9-quantile slope of log|F_F(theta, T) - gamma T| against log T."""
    results, failures = _run_trials(config, _window_trial)
    gamma, source = _gamma_for(config, results)
    records, digests, checkpoints = _window_records(config, results, gamma)
    Ts = np.array([r.checkpoint_T for r in records if r.checkpoint_T >= 100])
    errs = np.array([r.err_gamma for r in records if r.checkpoint_T >= 100])
    slope = fit_rate(Ts, errs) if len(Ts) else float("nan")
    eps = config.eps
    norm_stat = []
    for i in digests:
        rows = [r for r in records if r.trial == i and r.checkpoint_T >= 3]
        norm_stat.append(max(abs(r.err_gamma) / (math.sqrt(r.checkpoint_T)
                                                 * math.log(r.checkpoint_T) ** (1.5 + eps))
                             for r in rows))
    summary = {"mode": "rate", "trials_ok": len(digests), "trials_failed": len(failures),
               "gamma": gamma, "gamma_source": source, "slope_q90": slope, "eps": eps,
               "normalized_sup_max": float(max(norm_stat)) if norm_stat else float("nan"),
               "normalized_sup_median": float(np.median(norm_stat)) if norm_stat else float("nan"),
               "checkpoints": checkpoints}
    return RunResult(config, records, summary, digests, failures)


def planted_rate_check(trials: int = 200, seed: int = 0, q: float = 0.9) -> float:
    """Harness self-test: errors sqrt(T) |Z| must give slope 0.5."""
    rng = np.random.default_rng(seed)
    T = np.array(log_checkpoints(100, 10 ** 5, 31), dtype=float)
    Ts = np.tile(T, trials)
    errs = np.sqrt(Ts) * np.abs(rng.standard_normal(len(Ts)))
    return fit_rate(Ts, errs, q)


def run_fractal(config: RunConfig, words: int = 100, l_max: int = 20, tail_depth: int = 60) -> RunResult:
    """DL averages under the IFS measure, plus conjugation-identity checks."""
    from .fractal import IFSWord, conjugation_check, sample_word, tail_slope
    cfg = config if config.measure.startswith("ifs:") else replace(config, measure="ifs:cantor")
    out = run_dl(replace(cfg, mode="dl"))
    sys = cfg.ifs_system()
    rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(config.trials + 1)[-1])
    worst = 0.0
    for _ in range(words):
        l = int(rng.integers(1, l_max + 1))
        word = sample_word(sys, l + tail_depth, rng).symbols
        tail = MatrixTheta(_compose(sys, word[l:]))
        worst = max(worst, conjugation_check(sys, IFSWord(word[:l]), tail))
    out.summary.update({"mode": "fractal", "conjugation_max_error": worst,
                        "tail_slope": tail_slope(sys, words=min(words, 100), rng_seed=config.seed),
                        "log_rho": math.log(float(sys.rho))})
    out.config = config
    return out


def _compose(sys, word):
    from .fractal import compose
    return compose(sys, word)


# --------------------------------------------------------------------------
# correlation decay


def bump(s, lo: float = 0.2, hi: float = 0.6) -> float:
    """Smooth bump supported on (lo, hi), peak 1 at the midpoint."""
    u = (2 * s - lo - hi) / (hi - lo)
    if abs(u) >= 1:
        return 0.0
    return math.exp(1 - 1 / (1 - u * u))


def lambda1_2d(theta: float, t: float) -> float:
    """Shortest nonzero vector of a_t u(theta) Z^2 in the max of |x|, |y|."""
    b1 = np.array([math.exp(t), 0.0])
    b2 = np.array([math.exp(t) * theta, math.exp(-t)])
    # Lagrange reduction then a small search for the sup norm
    if b1 @ b1 > b2 @ b2:
        b1, b2 = b2, b1
    while True:
        mu = round((b1 @ b2) / (b1 @ b1))
        b2 = b2 - mu * b1
        if b2 @ b2 >= b1 @ b1:
            break
        b1, b2 = b2, b1
    best = math.inf
    for i in range(-3, 4):
        for j in range(-3, 4):
            if i or j:
                v = i * b1 + j * b2
                best = min(best, max(abs(v[0]), abs(v[1])))
    return best


def haar_bump_mean_2d(lo: float = 0.2, hi: float = 0.6) -> float:
    """E[bump(lambda_1)] on SL_2(R)/SL_2(Z) with the sup norm.

    For s < 1/sqrt(2) at most one +-pair of primitive vectors fits in the
    square of radius s, so P(lambda_1 < s) = (4 s^2 / 2) / zeta(2) = 12 s^2 / pi^2.
    """
    if hi > 1 / math.sqrt(2):
        raise ValueError("closed form needs hi < 1/sqrt(2)")
    val, _ = integrate.quad(lambda s: bump(s, lo, hi) * 24 * s / math.pi ** 2, lo, hi,
                            epsabs=1e-13)
    return val


def _lambda1(config: RunConfig, theta_frac, t) -> float:
    if config.m == config.n == 1 and config.norms is None:
        return lambda1_2d(float(theta_frac.entries[0][0]), t)
    basis = apply_flow(embed_theta(theta_frac), int(t))
    return shortest_vector(basis, config.norm_pair())


def run_correlation(config: RunConfig) -> RunResult:
    """Monte-Carlo discrepancy of bump(lambda_1) correlations along a_t.

    r = 1: mean_theta F(a_t u(theta)) - mu_X(F).
    r = 2: mean_theta F(a_t u) F(a_{2t} u) - mu_X(F)^2, gap D = t.
    """
    grid = tuple(config.grid) if config.grid else tuple(range(2, 21, 2))
    probe = bump if config.probe == "bump" else (lambda s: 1.0)
    if config.probe == "const":
        mu = 1.0
        mu_source = "constant"
    elif config.m == config.n == 1 and config.norms is None:
        mu = haar_bump_mean_2d()
        mu_source = "closed form"
    else:
        mu = _orbit_mean(config)
        mu_source = "orbit proxy"
    rng = np.random.default_rng(config.seed)
    bits = 96
    disc, se = [], []
    for t in grid:
        vals = []
        for _ in range(config.samples):
            th = MatrixTheta(tuple(tuple(dyadic(rng, bits) for _ in range(config.n))
                                   for _ in range(config.m)))
            v = probe(_lambda1(config, th, t))
            if config.r == 2:
                v *= probe(_lambda1(config, th, 2 * t))
            vals.append(v)
        vals = np.array(vals)
        target = mu if config.r == 1 else mu * mu
        disc.append(float(vals.mean() - target))
        se.append(float(vals.std(ddof=1) / math.sqrt(len(vals))))
    absd = np.abs(disc)
    rho = (float(stats.spearmanr(grid, absd).statistic)
           if len(grid) > 2 and np.ptp(absd) > 0 else float("nan"))
    resolved = [i for i in range(len(grid)) if absd[i] > 2 * se[i]]
    slope = (float(np.polyfit(np.array(grid, float)[resolved], np.log(absd[resolved]), 1)[0])
             if len(resolved) >= 2 else float("nan"))
    summary = {"mode": "correlation", "r": config.r, "probe": config.probe, "grid": list(grid), "discrepancy": disc,
               "std_error": se, "spearman": rho, "log_slope": slope, "mu_X": mu,
               "mu_source": mu_source, "resolved_points": len(resolved)}
    records = [ExperimentRecord(0, float(t), d, config.samples, d, 0.0, d / s if s > 0 else 0.0,
                                config.seed, 0.0) for t, d, s in zip(grid, disc, se)]
    return RunResult(config, records, summary)


def _orbit_mean(config: RunConfig, orbit: int = 200, starts: int = 5) -> float:
    rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(2)[1])
    vals = []
    for _ in range(starts):
        th = MatrixTheta(tuple(tuple(dyadic(rng, 4096) for _ in range(config.n))
                               for _ in range(config.m)))
        for l in range(1, orbit + 1):
            vals.append(bump(_lambda1(config, th, l)))
    return float(np.mean(vals))


# --------------------------------------------------------------------------
# correspondence and perturbation checks


def run_lemma51(config: RunConfig) -> RunResult:
    """For random theta, compare best approximations in [e^l, e^{l+1}) with
    S_{a_l u(theta) Z^d} for every l <= horizon."""
    l_max = config.horizon
    bits = config.bits or 256
    F = observable(config.observable, config.m, config.n)
    seeds = trial_seeds(config)
    records, failures, skipped, digests = [], [], [], {}
    passed = 0
    M_hat = 0
    for i, ss in enumerate(seeds):
        t0 = time.perf_counter()
        rng = np.random.default_rng(ss)
        theta = MatrixTheta(tuple(tuple(dyadic(rng, bits) for _ in range(config.n))
                                  for _ in range(config.m)), Fraction(1, 1 << bits))
        digests[i] = theta_digest(theta)
        try:
            seq = enumerate_best(theta, l_max + 1, config.norm_pair())
        except HorizonExceeded as exc:
            skipped.append({"trial": i, "reason": str(exc)})
            continue
        ok = True
        total_best = 0
        for l in range(l_max + 1):
            res = correspondence_check(theta, l, F, config.norm_pair(), seq)
            total_best += len(res.best_vectors) // 2
            M_hat = max(M_hat, len(res.s_vectors))
            if not res.equal:
                ok = False
                failures.append({"trial": i, "l": l, "theta": theta.to_strings(),
                                 "best": sorted(map(str, res.best_vectors)),
                                 "S": sorted(map(str, res.s_vectors))})
        passed += ok
        records.append(ExperimentRecord(i, float(l_max), float(ok), total_best, 0.0, 0.0, 0.0,
                                        seed_label(ss), _elapsed(config, t0)))
    done = config.trials - len(skipped)
    summary = {"mode": "lemma51", "trials": config.trials, "skipped": len(skipped),
               "passed": passed, "pass_rate": passed / done if done else float("nan"),
               "M_hat": M_hat, "skip_reasons": skipped}
    return RunResult(config, records, summary, digests, failures)


def random_lattice(rng: np.random.Generator, m: int, n: int, bits: int = 48) -> LatticeBasis:
    """Proxy sampler: diag(r) u(theta) L with random rationals, det = 1."""
    d = m + n
    r = [Fraction(int(rng.integers(1 << 10, 1 << 12)), int(rng.integers(1 << 10, 1 << 12)))
         for _ in range(d - 1)]
    prod = Fraction(1)
    for x in r:
        prod *= x
    r.append(1 / prod)
    theta = MatrixTheta(tuple(tuple(dyadic(rng, bits) for _ in range(n)) for _ in range(m)))
    U = embed_theta(theta).B
    L = [[Fraction(int(i == j)) for j in range(d)] for i in range(d)]
    for i in range(d):
        for j in range(i):
            L[i][j] = Fraction(int(rng.integers(-2, 3)), 1 << int(rng.integers(0, 4)))
    rows = [[r[i] * sum(U[i][k] * L[k][j] for k in range(d)) for j in range(d)] for i in range(d)]
    return LatticeBasis(tuple(map(tuple, rows)), (m, n))


def random_perturbation(rng: np.random.Generator, d: int, eps: Fraction, factors: int = 3):
    """Product of elementary unipotents I + s eps E_ij (exact, det 1)."""
    g = [[Fraction(int(i == j)) for j in range(d)] for i in range(d)]
    for _ in range(factors):
        i, j = rng.choice(d, size=2, replace=False)
        s = 1 if rng.random() < 0.5 else -1
        E = [[Fraction(int(a == b)) for b in range(d)] for a in range(d)]
        E[i][j] = s * eps
        g = [[sum(g[a][k] * E[k][b] for k in range(d)) for b in range(d)] for a in range(d)]
    return tuple(map(tuple, g))


def op_norm_inf(g) -> float:
    """Max-row-sum norm of g - I (the operator norm for sup norms)."""
    d = len(g)
    return float(max(sum(abs(g[i][j] - (i == j)) for j in range(d)) for i in range(d)))


def lemma53_check(trials: int = 100, eps_list=(Fraction(1, 1000), Fraction(1, 10000)),
                  m: int = 1, n: int = 1, seed: int = 0, calibration: int = 1000,
                  observable_name: str = "z") -> dict:
    """Check |f(g L) - f(L)| <= (sum phi_{C eps} + sum Phi_{C eps}) |F|_0
    + M_hat lip(F o phi) C eps on random lattices.

    C = 2 C0 e, where C0 is the largest ||g - I|| / eps over the
    perturbations used; M_hat is the largest #S seen.
    """
    rng = np.random.default_rng(seed)
    norms = default_norms(m, n)
    F = observable(observable_name, m, n)
    d = m + n
    sizes = []
    for _ in range(calibration):
        sizes.append(len(compute_S_Lambda(random_lattice(rng, m, n), norms)))
    cases = []
    for _ in range(trials):
        L = random_lattice(rng, m, n)
        for eps in eps_list:
            cases.append((L, eps, random_perturbation(rng, d, Fraction(eps))))
    C0 = max(op_norm_inf(g) / float(eps) for _, eps, g in cases)
    C = 2 * C0 * math.e
    violations, margins = [], []
    for L, eps, g in cases:
        gL = transform(L, g)
        S, gS = compute_S_Lambda(L, norms), compute_S_Lambda(gL, norms)
        sizes += [len(S), len(gS)]
        lhs = abs(observable_f(gL, F, norms, gS) - observable_f(L, F, norms, S))
        s1, s2 = perturbation_sums(L, C * float(eps), norms)
        rhs = (s1 + s2) * F.c0_bound + max(sizes) * F.lip_bound * C * float(eps)
        margins.append(rhs - lhs)
        if lhs > rhs:
            violations.append({"eps": str(eps), "lhs": lhs, "rhs": rhs, "sums": (s1, s2)})
    return {"violations": violations, "C0": C0, "C": C, "M_hat": max(sizes),
            "cases": len(cases), "min_margin": float(min(margins))}


DRIVERS = {"dl": run_dl, "clt": run_clt, "rate": run_rate_fit, "fractal": run_fractal,
           "correlation": run_correlation, "lemma51": run_lemma51}


def run(config: RunConfig) -> RunResult:
    return DRIVERS[config.mode](config)
