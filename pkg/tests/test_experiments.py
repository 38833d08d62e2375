import json
import math

import numpy as np
import pytest

from rigidsolve.experiments import (
    EXPERIMENTS,
    Check,
    ExperimentResult,
    abp_gamma_bound,
    abp_per_k_bound,
    exp_abp_gamma,
    exp_anomaly_identity,
    exp_anomaly_product,
    exp_kappa_moments,
    exp_line_restriction,
    exp_solve_stats,
    exp_trace_moments,
    exp_weyl_identity,
    results_to_csv,
    run_experiment,
)
from rigidsolve.numerics import InvalidArgument, RandomStream, sample_uniform_ball
from rigidsolve.poly import DensePoly


def test_check_relations():
    assert Check("x", 1.0, 0.1, 1.2, "==").passed
    assert not Check("x", 1.0, 0.01, 1.2, "==").passed
    assert Check("x", 1.25, 0.1, 1.0, "<=").passed
    assert not Check("x", 1.5, 0.1, 1.0, "<=").passed
    assert Check("x", 0.8, 0.1, 1.0, ">=").passed
    assert not Check("x", math.nan, 0.1, 1.0, "<=").passed
    with pytest.raises(InvalidArgument):
        Check("x", 1.0, 0.1, 1.0, "<")


def test_verdicts():
    ok = ExperimentResult("t", {}, [Check("a", 1.0, 0.1, 1.0, "==")], 10, 1)
    bad = ExperimentResult("t", {}, [Check("a", 2.0, 0.1, 1.0, "==")], 10, 1)
    inc = ExperimentResult("t", {}, [Check("a", 1.0, 0.1, 1.0, "==")], 10, 1, inconclusive=True)
    assert (ok.verdict, bad.verdict, inc.verdict) == ("pass", "fail", "inconclusive")
    d = json.loads(ok.to_json())
    assert d["verdict"] == "pass" and d["seed"] == 1
    assert "name,check" in results_to_csv([ok, bad])


def test_kappa_moments_examples():
    r = exp_kappa_moments(2, 1.0, trials=20000, seed=1)
    assert r.verdict == "pass"
    assert r.checks[0].target == 8 and r.checks[1].target == 24
    r = exp_kappa_moments(3, 1.5, trials=20000, seed=2)
    assert r.checks[0].target == pytest.approx(162)
    assert r.verdict == "pass"
    with pytest.raises(InvalidArgument):
        exp_kappa_moments(2, 2.0, trials=2000)
    with pytest.raises(InvalidArgument):
        exp_kappa_moments(2, 1.0, trials=10)


def test_kappa_moments_rigid_pairs():
    r = exp_kappa_moments(2, 1.0, trials=2000, seed=3, rigid_trials=300)
    assert r.verdict == "pass"
    assert "rigid" in r.checks[-1].label


def test_anomaly_product_examples():
    assert exp_anomaly_product((3, 3), trials=40000, seed=4).checks[0].target == pytest.approx(2)
    r = exp_anomaly_product((3, 4, 3), trials=40000, seed=5)
    assert r.checks[0].target == pytest.approx(7 / 3) and r.verdict == "pass"
    r = exp_anomaly_product((2, 4), trials=40000, seed=6, fixed=np.eye(2))
    assert r.checks[0].target == pytest.approx(7 / 3) and r.verdict == "pass"
    with pytest.raises(InvalidArgument):
        exp_anomaly_product((1, 3))


def test_anomaly_identity():
    r = exp_anomaly_identity(4, 10**5, seed=7)
    assert r.verdict == "pass" and r.checks[0].target == pytest.approx(4 / 3)


def test_trace_moment_examples():
    r = exp_trace_moments(2, 20000, seed=8, p=np.eye(2), q=np.eye(2))
    assert r.checks[0].target == pytest.approx(2) and r.checks[1].target == pytest.approx(4)
    assert r.verdict == "pass"
    assert exp_trace_moments(3, 20000, seed=9).verdict == "pass"


def test_weyl_examples():
    # sphere: z0^d has C(n+d,d) E|z0^d|^2 = 1
    f = DensePoly.from_terms(2, 3, {(3, 0, 0): 1.0})
    r = exp_weyl_identity(trials=40000, seed=10, f=f)
    assert r.verdict == "pass" and r.extra["weyl_norm_sq"] == pytest.approx(1)
    assert exp_weyl_identity(3, 4, trials=40000, seed=11).verdict == "pass"


def test_ball_monomial_moment():
    # E_ball |w^alpha|^2 = (n+1)! alpha! / (n+1+d)!
    n, alpha = 2, (2, 1, 0)
    w = sample_uniform_ball(n + 1, RandomStream(12), size=400000)
    vals = np.abs(np.prod(w ** np.array(alpha), axis=1)) ** 2
    exact = math.factorial(n + 1) * 2 * 1 * 1 / math.factorial(n + 1 + 3)
    assert abs(vals.mean() - exact) <= 3 * vals.std() / math.sqrt(vals.size)


def test_abp_bounds_formulae():
    assert abp_gamma_bound(3, 3) == pytest.approx(0.75 * 27 * 6 * math.log(3))
    assert abp_gamma_bound(3, 3) == pytest.approx(133.5, abs=0.1)
    assert abp_per_k_bound(2, 2, 2) == pytest.approx(1 / 4 * 1 * 6 * 2)


def test_abp_gamma_small():
    r = exp_abp_gamma(2, 2, (2,), zero_samples=15, abp_samples=15, seed=13)
    assert r.verdict == "pass" and len(r.checks) == 2
    with pytest.raises(InvalidArgument):
        exp_abp_gamma(2, 3, (1, 2))


def test_line_restriction_small():
    r = exp_line_restriction(2, 3, polys=2, lines=60, seed=14)
    assert r.verdict == "pass" and len(r.checks) == 2


def test_solve_stats_linear_systems():
    r = exp_solve_stats(2, 1, instances=4, kind="linear", seed=15, gamma_zero_samples=0)
    rows = r.extra["rows"]
    assert all(row["terminated"] and row["verified"] for row in rows)
    assert all(row["steps"] <= 2 for row in rows)


def test_registry_and_reproducibility():
    assert set(EXPERIMENTS) >= {"kappa-moments", "anomaly-product", "trace-moments",
                                "weyl-identity", "abp-gamma", "solve-stats"}
    a = run_experiment("trace-moments", r=2, trials=10**4, seed=16).to_json()
    b = run_experiment("trace-moments", r=2, trials=10**4, seed=16).to_json()
    assert a == b
    c = run_experiment("kappa-moments", n=2, trials=4000, seed=17, threads=3, chunk=1000).to_json()
    d = run_experiment("kappa-moments", n=2, trials=4000, seed=17, threads=1, chunk=1000).to_json()
    assert c == d
    with pytest.raises(InvalidArgument):
        run_experiment("nope")
