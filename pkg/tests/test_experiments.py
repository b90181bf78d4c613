import dataclasses
import math

import numpy as np
import pytest

from dlaw.errors import ConfigError, InsufficientData
from dlaw.experiments import (RunConfig, bump, cdf_sup_distance, haar_bump_mean_2d, lambda1_2d,
                              lemma53_check, log_checkpoints, planted_rate_check, run,
                              run_correlation, trial_seeds)
from dlaw.reference import DL_MEAN, levy_gamma0_1d


def test_config_validation():
    for bad in (dict(mode="nope"), dict(mode="dl", trials=0), dict(mode="dl", horizon=0),
                dict(mode="dl", observable="w"), dict(mode="dl", measure="gauss"),
                dict(mode="dl", measure="ifs:koch"), dict(mode="dl", bits=4),
                dict(mode="dl", cutoff=-1), dict(mode="correlation", r=3),
                dict(mode="correlation", probe="x")):
        with pytest.raises(ConfigError):
            RunConfig(**bad)


def test_precision_bits():
    cfg = RunConfig("dl", horizon=10_000)
    nats = 10_000 * math.pi ** 2 / (12 * math.log(2))
    assert cfg.precision_bits() == math.ceil(2.2 * nats / math.log(2)) + 64
    assert RunConfig("rate", horizon=1000).precision_bits() == math.ceil(2.2 * 1001 / math.log(2)) + 64
    assert RunConfig("dl", bits=300).precision_bits() == 300


def test_log_checkpoints_increasing():
    pts = log_checkpoints(100, 10 ** 5, 31)
    assert pts[0] == 100 and pts[-1] == 10 ** 5
    assert all(b > a for a, b in zip(pts, pts[1:]))


def test_dl_determinism():
    cfg = RunConfig("dl", horizon=300, trials=4, seed=5, timing=False)
    a, b = run(cfg), run(cfg)
    assert a.records == b.records and a.digests == b.digests
    c = run(dataclasses.replace(cfg, seed=6))
    assert c.digests != a.digests


def test_dl_parallel_matches_serial():
    cfg = RunConfig("dl", horizon=200, trials=3, seed=2, timing=False)
    assert run(cfg).records == run(dataclasses.replace(cfg, threads=2)).records


def test_threads_env_override(monkeypatch):
    from dlaw.experiments import _threads
    monkeypatch.setenv("DLX_THREADS", "3")
    assert _threads(RunConfig("dl")) == 3
    monkeypatch.setenv("DLX_THREADS", "x")
    with pytest.raises(ConfigError):
        _threads(RunConfig("dl"))


def test_dl_constant_observable():
    res = run(RunConfig("dl", observable="one", horizon=500, trials=3, timing=False))
    for r in res.records:
        assert r.sum_F == r.checkpoint_T and r.err_gamma == 0


def test_dl_small_run_near_reference():
    res = run(RunConfig("dl", horizon=2000, trials=8, seed=1))
    assert abs(res.summary["grand_mean"] - DL_MEAN) < 0.02
    assert res.summary["reference_beta"] == pytest.approx(DL_MEAN)
    assert len(res.digests) == 8
    for r in res.records:
        assert math.isfinite(r.err_gamma) and math.isfinite(r.err_gamma0)


def test_trial_failures_are_recorded():
    # 40 bits cannot certify 200 convergents: every trial fails, none crash the batch
    res = run(RunConfig("dl", horizon=200, trials=3, bits=40))
    assert len(res.failures) == 3 and res.records == []
    assert "HorizonExceeded" in res.failures[0]["error"]


def test_general_dimension_dl():
    res = run(RunConfig("dl", m=2, n=1, horizon=20, trials=2, seed=3, observable="z"))
    assert res.summary["trials_ok"] == 2
    assert 0 < res.summary["grand_mean"] < 2


def test_lattice_records_match_scan():
    # records read off S_Lambda along the flow equal the direct best-approximation scan
    from dlaw.best_approx import enumerate_best
    from dlaw.experiments import _lattice_records, sample_theta
    from dlaw.observables import observable
    for m, n in ((2, 1), (1, 2)):
        cfg = RunConfig("dl", m=m, n=n, horizon=6, trials=1, seed=3)
        th = sample_theta(cfg, np.random.default_rng(trial_seeds(cfg)[0]))
        c, lq, _ = _lattice_records(th, 6, observable("z"), cfg.norm_pair())
        seq = enumerate_best(th, float(lq[-1]) + 0.5, cfg.norm_pair())
        assert np.allclose(c, [b.coefficient(m, n) for b in seq.items[:6]])
        assert np.allclose(lq, [math.log(b.qnorm) for b in seq.items[:6]])


def test_window_count_identity():
    # F = 1 through the window path equals the convergent count exactly
    res = run(RunConfig("rate", observable="one", horizon=300, trials=3, timing=False))
    for r in res.records:
        assert r.sum_F == r.count_N
        assert abs(r.err_gamma - r.err_gamma0) < 1e-9
    assert res.summary["gamma"] == pytest.approx(levy_gamma0_1d())


def test_checkpoint_additivity():
    from dlaw.experiments import _window_trial
    cfg = RunConfig("rate", horizon=400, trials=1, seed=4)
    out = _window_trial(cfg, 0, trial_seeds(cfg)[0])
    X = out["X"]
    for a, b in ((10, 100), (100, 400), (0, 400)):
        assert math.isclose(X[:b].sum(), X[:a].sum() + X[a:b].sum(), abs_tol=1e-9)


def test_clt_contracts():
    with pytest.raises(InsufficientData):
        run(RunConfig("clt", trials=10, horizon=200))
    res = run(RunConfig("clt", observable="zero", trials=50, horizon=200))
    assert res.summary["ks_fit"] == 0 and res.summary["sigma_hat"] == 0
    assert all(r.clt_stat == 0 for r in res.records)


def test_clt_small():
    res = run(RunConfig("clt", trials=60, horizon=1000, seed=2))
    s = res.summary
    assert 0 < s["sigma_hat"] < 2
    assert 0.3 < s["var_ratio"] < 3
    assert len(s["ecdf"]) == 60


def test_planted_rate():
    assert abs(planted_rate_check() - 0.5) < 0.02


def test_rate_small():
    res = run(RunConfig("rate", horizon=2000, trials=5, seed=1))
    s = res.summary
    assert math.isfinite(s["slope_q90"]) and s["slope_q90"] < 1
    assert s["normalized_sup_max"] > 0


def test_fractal_small():
    res = run(RunConfig("fractal", measure="ifs:cantor", horizon=500, trials=3, seed=1))
    s = res.summary
    assert s["trials_ok"] == 3
    assert s["conjugation_max_error"] <= 1e-9
    assert s["log_rho"] == pytest.approx(math.log(1 / 3))


def haar_mc_bump_mean(samples, seed):
    """Oracle: Haar lattices from the SL2 fundamental domain and a random rotation."""
    rng = np.random.default_rng(seed)
    vals = []
    while len(vals) < samples:
        x = rng.uniform(-0.5, 0.5)
        # density 1/y^2 on y >= sqrt(3)/2, sampled by inversion, then |z| >= 1 by rejection
        y = (math.sqrt(3) / 2) / rng.uniform()
        if x * x + y * y < 1:
            continue
        phi = rng.uniform(0, 2 * math.pi)
        R = np.array([[math.cos(phi), -math.sin(phi)], [math.sin(phi), math.cos(phi)]])
        b1 = R @ np.array([1 / math.sqrt(y), 0.0])
        b2 = R @ np.array([x / math.sqrt(y), math.sqrt(y)])
        best = min(max(abs(v[0]), abs(v[1])) for i in range(-3, 4) for j in range(-3, 4)
                   if i or j for v in [i * b1 + j * b2])
        vals.append(bump(best))
    return float(np.mean(vals)), float(np.std(vals) / math.sqrt(samples))


def test_haar_bump_mean_closed_form():
    exact = haar_bump_mean_2d()
    mc, se = haar_mc_bump_mean(20_000, 0)
    assert abs(exact - mc) < 4 * se


def test_lambda1_2d():
    assert lambda1_2d(0.0, 0.0) == pytest.approx(1.0)
    # a_t u(0) Z^2 has (0, e^-t)
    assert lambda1_2d(0.0, 2.0) == pytest.approx(math.exp(-2))


def test_correlation_probes():
    const = run_correlation(RunConfig("correlation", probe="const", samples=20, grid=(1, 2, 3)))
    assert const.summary["discrepancy"] == [0.0, 0.0, 0.0]
    grid = (0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0)
    res = run_correlation(RunConfig("correlation", samples=2000, grid=grid, seed=1))
    d, se = np.array(res.summary["discrepancy"]), np.array(res.summary["std_error"])
    # lambda_1 = 1 at t = 0, outside the bump's support
    assert d[0] == pytest.approx(-haar_bump_mean_2d())
    assert (np.abs(d[-3:]) < 4 * se[-3:]).all()
    assert res.summary["spearman"] < -0.6
    r2 = run_correlation(RunConfig("correlation", r=2, samples=1000, grid=(0, 1, 2, 3), seed=1))
    d2 = np.abs(r2.summary["discrepancy"])
    assert d2[0] > d2[-1]


def test_lemma51_small():
    res = run(RunConfig("lemma51", horizon=8, trials=10, seed=3))
    assert res.summary["pass_rate"] == 1.0 and not res.failures
    assert res.summary["M_hat"] >= 2
    res = run(RunConfig("lemma51", m=2, n=1, horizon=3, trials=3, seed=3))
    assert res.summary["pass_rate"] == 1.0


def test_lemma51_boundary_skip():
    res = run(RunConfig("lemma51", horizon=12, trials=4, bits=16))
    assert res.summary["skipped"] == 4
    assert res.summary["skip_reasons"][0]["reason"]
    assert not res.failures


def test_lemma53_small():
    out = lemma53_check(trials=10, calibration=50, seed=1)
    assert out["violations"] == []
    assert out["C"] == pytest.approx(2 * out["C0"] * math.e)


def test_cdf_sup_distance():
    rng = np.random.default_rng(0)
    # inverse-CDF sampling from nu as an oracle population
    from scipy.optimize import brentq
    from dlaw.reference import nu_cdf
    u = rng.uniform(size=4000)
    xs = np.array([brentq(lambda z: nu_cdf(z) - t, 0, 1) for t in u])
    assert cdf_sup_distance(xs) < 0.03
    assert cdf_sup_distance(rng.uniform(size=4000)) > 0.1
