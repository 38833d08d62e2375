import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rigidsolve.blackbox import BlackBoxPoly, BlackBoxSystem
from rigidsolve.experiments import random_system
from rigidsolve.numerics import (
    HardFailure,
    InvalidArgument,
    RandomStream,
    is_unitary,
    proj_distance,
    sample_haar_unitary,
    sample_uniform_sphere,
)
from rigidsolve.poly import DensePoly, weyl_norm
from rigidsolve.solver import (
    FAIL,
    RigidPath,
    beta,
    bb_nc,
    bb_solve,
    boost,
    boost_bb_solve,
    boost_steps,
    bounded_bb_nc,
    build_path,
    identity_tuple,
    newton_proj,
    sample_rigid_pair,
    verify_approximate_zero,
)

seeds = st.integers(0, 2**32 - 1)
# Reduced step constant for end-to-end runs inside the unit suite. The
# guarantee-carrying constant (240) is exercised in the acceptance suite.
FAST = 1.0


def kostlan_system(n, d, seed):
    g = RandomStream(seed)
    dense = [DensePoly.kostlan(n, d, g.child(i)) for i in range(n)]
    return dense, BlackBoxSystem([BlackBoxPoly.from_dense(p) for p in dense])


def refined_zero(F, seed, iters=60):
    # a regular zero obtained by solving from a rigid pair with many Newton steps
    v, zeta = sample_rigid_pair(F, RandomStream(seed))
    G = F.act(v)
    return G, zeta


def linear_zero(F):
    jac = F.jacobian(np.zeros(F.n + 1))
    _, _, vh = np.linalg.svd(jac)
    return vh[-1].conj()


def test_newton_fixed_point_at_zero():
    _, F = kostlan_system(2, 2, 0)
    G, zeta = refined_zero(F, 1)
    assert proj_distance(newton_proj(G, zeta), zeta) <= 1e-12
    assert beta(G, zeta) <= 1e-12


def test_newton_linear_one_step():
    _, F = kostlan_system(3, 1, 2)
    z = sample_uniform_sphere(4, RandomStream(3))
    assert proj_distance(newton_proj(F, z), linear_zero(F)) <= 1e-10


def test_newton_quadratic_convergence():
    _, F = kostlan_system(2, 2, 4)
    G, zeta = refined_zero(F, 5)
    z = zeta + 1e-3 * sample_uniform_sphere(3, RandomStream(6))
    d = [proj_distance(z, zeta)]
    for _ in range(4):
        z = newton_proj(G, z)
        d.append(proj_distance(z, zeta))
    ratios = [d[k + 1] / d[k] ** 2 for k in range(3) if d[k] > 1e-7]
    assert len(ratios) >= 2
    assert max(ratios) < 100
    assert d[-1] < 1e-13


def test_newton_singular_raises():
    f = BlackBoxPoly.from_dense(DensePoly.from_terms(1, 2, {(2, 0): 1.0}))
    F = BlackBoxSystem([f])
    from rigidsolve.numerics import SingularPoint

    with pytest.raises(SingularPoint):
        newton_proj(F, np.array([0.0, 1.0]))


@given(seeds)
def test_beta_equivariance(seed):
    _, F = kostlan_system(2, 3, seed)
    z = sample_uniform_sphere(3, RandomStream(seed).child(1))
    u = sample_haar_unitary(3, RandomStream(seed).child(2))
    a = beta(F, z)
    b = beta(F.act(np.array([u, u])), u @ z)
    assert a > 0
    assert abs(a - b) <= 1e-10


def test_build_path_examples():
    v = np.array([sample_haar_unitary(3, RandomStream(i)) for i in range(2)])
    assert build_path(v, v).T == 0.0
    th = 0.8
    p = build_path(np.eye(3)[None].astype(complex), np.array([np.diag([np.exp(1j * th), 1, 1])]))
    assert p.T == pytest.approx(th)
    assert np.allclose(p.generators[0], np.diag([1j * th, 0, 0]), atol=1e-12)


@given(seeds, st.integers(1, 3))
def test_path_endpoints_and_speed(seed, n):
    g = RandomStream(seed)
    v = np.array([sample_haar_unitary(n + 1, g.child(0, i)) for i in range(n)])
    u = np.array([sample_haar_unitary(n + 1, g.child(1, i)) for i in range(n)])
    p = RigidPath(v, u)
    assert np.max(np.abs(p.at(0) - v)) <= 1e-10
    assert np.max(np.abs(p.at(p.T) - u)) <= 1e-10
    t = p.T * 0.37
    dt = 1e-6
    speed = np.linalg.norm(p.at(t + dt) - p.at(t)) / dt
    assert speed <= 1 + 1e-4
    assert all(is_unitary(w, 1e-12) for w in p.at(t))


def test_rigid_pair_residuals():
    g = RandomStream(7)
    for i in range(1000):
        dense, F = kostlan_system(2, 2, 1000 + i)
        v, zeta = sample_rigid_pair(F, g.child(i))
        for p, vi in zip(dense, v):
            assert abs(p.eval(vi.conj().T @ zeta)) <= 1e-9 * weyl_norm(p)


def test_rigid_pair_marginals():
    _, F = kostlan_system(2, 2, 8)
    g = RandomStream(9)
    tr, z0 = [], []
    for i in range(10000):
        v, zeta = sample_rigid_pair(F, g.child(i))
        tr.append([abs(np.trace(vi)) ** 2 for vi in v])
        z0.append(abs(zeta[0]) ** 2)
    tr = np.mean(tr, axis=0)
    assert np.all(np.abs(tr - 1) < 0.05)
    assert abs(np.mean(z0) - 1 / 3) < 0.01


def test_rigid_pair_condition_law_on_linear_systems():
    # For linear systems the rigid pair has an explicit law: kappa is
    # 1/sigma_min of a matrix with i.i.d. uniform unit rows in C^(n+1).
    g = RandomStream(10)
    k2 = []
    from rigidsolve.gamma import kappa

    for i in range(4000):
        _, F = kostlan_system(2, 1, 50_000 + i)
        v, zeta = sample_rigid_pair(F, g.child(i))
        k2.append(kappa(F.act(v), zeta).kappa ** 2)
    rows = sample_uniform_sphere(3, RandomStream(11), size=(200000, 2))
    ref = np.mean(np.linalg.svd(rows, compute_uv=False)[:, -1] ** -2.0)
    k2 = np.array(k2)
    assert abs(k2.mean() - ref) <= 3 * k2.std() / math.sqrt(k2.size) + 0.05


def test_bounded_nc_trivial_path():
    _, F = kostlan_system(2, 2, 12)
    v, zeta = sample_rigid_pair(F, RandomStream(13))
    rec = []
    w = bounded_bb_nc(F, v, v, zeta, 1, 0.25, RandomStream(14), record=rec)
    assert w is not FAIL and proj_distance(w, zeta) <= 1e-15
    assert rec[0].steps == 1 and rec[0].success


def test_bounded_nc_budget_exhaustion():
    _, F = kostlan_system(2, 2, 15)
    v, zeta = sample_rigid_pair(F, RandomStream(16))
    rec = []
    assert bounded_bb_nc(F, identity_tuple(2), v, zeta, 1, 0.25, RandomStream(17),
                         record=rec) is FAIL
    assert rec[0].reason == "step budget exhausted"


def test_bounded_nc_validates():
    _, F = kostlan_system(2, 2, 15)
    with pytest.raises(InvalidArgument):
        bounded_bb_nc(F, identity_tuple(2), identity_tuple(2), np.ones(3), 0, 0.25, RandomStream(0))


def test_bounded_nc_monotone_in_budget():
    _, F = kostlan_system(2, 2, 18)
    v, zeta = sample_rigid_pair(F, RandomStream(19))
    u = identity_tuple(2)
    runs = {}
    for kmax in (64, 256, 4096, 8192):
        rec = []
        w = bounded_bb_nc(F, u, v, zeta, kmax, 0.25, RandomStream(20), eta=1e-3, record=rec,
                          step_constant=FAST)
        runs[kmax] = (w, rec[0])
    ok = [k for k, (w, _) in runs.items() if w is not FAIL]
    assert ok, "no budget succeeded"
    first = min(ok)
    for k in runs:
        if k >= first:
            assert runs[k][0] is not FAIL
            assert runs[k][1].steps == runs[first][1].steps
            assert np.array_equal(runs[k][0], runs[first][0])


def test_step_lengths_positive_and_time_increasing(monkeypatch):
    import rigidsolve.solver as solver

    _, F = kostlan_system(2, 2, 21)
    v, zeta = sample_rigid_pair(F, RandomStream(22))
    ts = []
    orig = solver.RigidPath.at

    def spy(self, t):
        ts.append(t)
        return orig(self, t)

    monkeypatch.setattr(solver.RigidPath, "at", spy)
    bounded_bb_nc(F, identity_tuple(2), v, zeta, 50, 0.25, RandomStream(23), step_constant=FAST)
    incr = np.diff(ts[::2])  # at() is called before and after each increment
    assert np.all(incr > 0) and np.all(np.isfinite(incr))


def test_bb_nc_trivial_and_schedule():
    _, F = kostlan_system(2, 2, 24)
    v, zeta = sample_rigid_pair(F, RandomStream(25))
    rec = []
    w = bb_nc(F, v, v, zeta, 0.25, RandomStream(26), record=rec)
    assert w is not FAIL
    assert [r.kmax for r in rec] == [2] and rec[0].steps == 1
    rec = []
    w = bb_nc(F, identity_tuple(2), v, zeta, 0.25, RandomStream(27), record=rec,
              step_constant=FAST)
    assert w is not FAIL
    sched = [r.kmax for r in rec]
    assert sched == [2 ** (i + 1) for i in range(len(sched))]
    assert all(not r.success for r in rec[:-1]) and rec[-1].success


def test_bb_nc_ceiling():
    _, F = kostlan_system(2, 2, 28)
    v, zeta = sample_rigid_pair(F, RandomStream(29))
    with pytest.raises(HardFailure):
        bb_nc(F, identity_tuple(2), v, zeta, 0.25, RandomStream(30), max_kmax=4)
    with pytest.raises(InvalidArgument):
        bb_nc(F, identity_tuple(2), v, zeta, 0.3, RandomStream(30))


def test_bb_solve_linear_system():
    # All gammas vanish, so one step jumps to the end of the path and the
    # continuation returns its current point. For a linear system every point
    # is an approximate zero: one Newton step lands on the unique zero.
    _, F = kostlan_system(3, 1, 31)
    rec = []
    w = bb_solve(F, 0.25, RandomStream(32), record=rec)
    assert sum(r.steps for r in rec) <= 2
    z = newton_proj(F, w)
    assert np.max(np.abs(F.evaluate(z)) / np.linalg.norm(F.jacobian(z), axis=1)) <= 1e-9
    assert proj_distance(z, linear_zero(F)) <= 1e-9
    rep = boost_bb_solve(F, 1e-6, RandomStream(32), report=True)
    assert rep.success and rep.steps <= 2
    assert proj_distance(rep.result, linear_zero(F)) <= 1e-9


def test_bb_solve_output_passes_boost():
    passes = 0
    for i in range(6):
        _, F = kostlan_system(2, 2, 300 + i)
        w = bb_solve(F, 0.25, RandomStream(i), step_constant=FAST)
        passes += boost(F, w, 1e-6, RandomStream(100 + i)) is not FAIL
    assert passes / 6 >= 0.5


def test_eval_accounting():
    _, F = kostlan_system(2, 2, 33)
    rec = []
    before = F.evals
    w = bb_nc(F, identity_tuple(2), *sample_rigid_pair(F, RandomStream(34)), 0.25,
              RandomStream(35), record=rec, step_constant=FAST)
    assert w is not FAIL
    mid = F.evals
    # evaluations in the stage records cover the continuation exactly
    assert sum(r.evals for r in rec) <= mid - before


def test_boost_steps_examples():
    assert boost_steps(3, 2, 1e-30) == 8
    assert boost_steps(2, 2, 1e-6) == 6


def test_boost_exact_zero_accepts():
    _, F = kostlan_system(2, 3, 36)
    G, zeta = refined_zero(F, 37)
    info = []
    z = boost(G, zeta, 1e-6, RandomStream(38), info=info)
    assert z is not FAIL and info[0].success


def _far_point_trials(trials=1000):
    g = RandomStream(39)
    out = []
    for i in range(trials):
        _, F = kostlan_system(2, 3, 400_000 + i)
        w = sample_uniform_sphere(3, g.child(i, 0))
        out.append((F, boost(F, w, 1e-6, g.child(i, 1))))
    return out


@pytest.fixture(scope="module")
def far_point_trials():
    return _far_point_trials()


@pytest.mark.xfail(strict=True, reason="the k Newton steps inside boost converge from a large "
                   "share of uniform starting points; those outputs are genuine approximate zeros")
def test_boost_rejects_far_points(far_point_trials):
    rejects = sum(z is FAIL for _, z in far_point_trials)
    assert rejects / len(far_point_trials) >= 0.95


def test_boost_never_accepts_a_non_zero(far_point_trials):
    accepted = [(F, z) for F, z in far_point_trials if z is not FAIL]
    assert 0 < len(accepted) < len(far_point_trials)
    assert all(verify_approximate_zero(F, z)["ok"] for F, z in accepted)


def test_boost_validates_eps():
    _, F = kostlan_system(2, 2, 40)
    with pytest.raises(InvalidArgument):
        boost(F, np.ones(3), 0.7, RandomStream(0))


def test_boost_bb_solve_determinism_and_verification():
    _, F = kostlan_system(2, 2, 41)
    a = boost_bb_solve(F, 1e-6, RandomStream(42), report=True, step_constant=FAST)
    _, F2 = kostlan_system(2, 2, 41)
    b = boost_bb_solve(F2, 1e-6, RandomStream(42), report=True, step_constant=FAST)
    assert a.success and a.to_json() == b.to_json()
    ver = verify_approximate_zero(F, a.result)
    assert ver["ok"] and ver["residual"] <= 1e-12
    d = ver["distances"]
    assert all(d[k] <= 2.0 ** (1 - 2**k) * d[0] + 1e-13 for k in range(len(d)))


def test_boost_bb_solve_attempt_ceiling():
    _, F = kostlan_system(2, 2, 43)
    rep = boost_bb_solve(F, 1e-6, RandomStream(44), report=True, max_attempts=1, max_kmax=2)
    assert not rep.success and rep.result is None and rep.error
    with pytest.raises(HardFailure):
        boost_bb_solve(F, 1e-6, RandomStream(44), max_attempts=1, max_kmax=2)


def test_equivariance_success_rates():
    # Solving u.F and solving F have the same success statistics.
    u = sample_haar_unitary(3, RandomStream(45))
    ok_f, ok_uf = 0, 0
    trials = 6
    for i in range(trials):
        dense, F = kostlan_system(2, 2, 500 + i)
        uF = BlackBoxSystem([BlackBoxPoly.from_dense(p.unitary_action(u)) for p in dense])
        ok_f += boost_bb_solve(F, 1e-6, RandomStream(i), report=True, step_constant=FAST).success
        ok_uf += boost_bb_solve(uF, 1e-6, RandomStream(i + 99), report=True,
                                step_constant=FAST).success
    assert ok_f == ok_uf == trials


def test_random_system_kinds():
    for kind in ("kostlan", "abp", "linear"):
        F = random_system(kind, 2, 2, RandomStream(0))
        assert F.is_square()
    with pytest.raises(InvalidArgument):
        random_system("nope", 2, 2, RandomStream(0))
