import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import minimize
from scipy.special import comb

from rigidsolve.numerics import (
    InvalidArgument,
    RandomStream,
    SingularPoint,
    normalize,
    proj_distance,
    sample_haar_unitary,
    sample_std_gaussian_vector,
    sample_uniform_sphere,
)
from rigidsolve.poly import (
    BivariateHomog,
    DensePoly,
    dense_gradient,
    gamma_frob_exact,
    monomial_exponents,
    random_line_basis,
    restrict_to_line,
    sample_uniform_zero,
    sample_uniform_zero_dense,
    taylor_shift,
    univariate_proj_roots,
    weyl_norm,
    weyl_norm_sq,
)

seeds = st.integers(0, 2**32 - 1)
small_n = st.integers(1, 3)
small_d = st.integers(1, 4)


def mono(n, alpha, c=1.0):
    return DensePoly.from_terms(n, sum(alpha), {tuple(alpha): c})


def test_monomial_count():
    for n in range(4):
        for d in range(5):
            assert len(monomial_exponents(n, d)) == comb(n + d, d, exact=True)
    assert tuple(monomial_exponents(2, 3)[0]) == (3, 0, 0)


def test_duplicate_terms_merge_and_validation():
    f = DensePoly(1, 2, [[2, 0], [2, 0], [1, 1]], [1.0, 2.0, 1j])
    assert f.coefficient((2, 0)) == 3.0
    with pytest.raises(InvalidArgument):
        DensePoly(1, 2, [[1, 0]], [1.0])


@given(seeds, small_n, small_d)
def test_homogeneity(seed, n, d):
    g = RandomStream(seed)
    f = DensePoly.random(n, d, g.child(0))
    z = sample_std_gaussian_vector(n + 1, g.child(1))
    lam = complex(*g.child(2).standard_normal(2))
    assert abs(f.eval(lam * z) - lam**d * f.eval(z)) <= 1e-10 * (1 + abs(lam) ** d * abs(f.eval(z)))


def test_weyl_norm_examples():
    assert weyl_norm(mono(2, (3, 0, 0))) == pytest.approx(1.0)
    assert weyl_norm_sq(mono(1, (1, 1))) == pytest.approx(0.5)


def test_weyl_norm_sphere_identity():
    f = DensePoly.random(2, 3, RandomStream(1))
    z = sample_uniform_sphere(3, RandomStream(2), size=10**6)
    mc = comb(5, 3) * np.mean(np.abs(f.eval(z)) ** 2)
    assert abs(mc / weyl_norm_sq(f) - 1) < 0.01


@given(seeds, small_n, small_d)
def test_weyl_unitary_invariance(seed, n, d):
    g = RandomStream(seed)
    f = DensePoly.random(n, d, g.child(0))
    u = sample_haar_unitary(n + 1, g.child(1))
    assert abs(weyl_norm(f.unitary_action(u)) - weyl_norm(f)) <= 1e-10 * max(1.0, weyl_norm(f))


@given(seeds, small_n, small_d)
def test_weyl_sup_sandwich(seed, n, d):
    g = RandomStream(seed)
    f = DensePoly.random(n, d, g.child(0))
    z = sample_uniform_sphere(n + 1, g.child(1), size=10**4)
    vals = np.abs(f.eval(z)) ** 2
    w2 = weyl_norm_sq(f)
    assert np.max(vals) <= w2 * (1 + 1e-12)
    assert np.max(vals) >= w2 / comb(n + d, d)


def test_weyl_sup_lower_bound_attained_for_pure_power():
    # z0^d attains the upper bound at e0 and the lower one is exact for the Weyl average
    f = mono(2, (3, 0, 0))
    assert abs(f.eval(np.array([1, 0, 0], dtype=complex))) ** 2 == pytest.approx(weyl_norm_sq(f))


def test_taylor_shift_examples():
    f = DensePoly.random(2, 3, RandomStream(3))
    comps = taylor_shift(f, np.zeros(3))
    assert weyl_norm(comps[3] - f) < 1e-14
    assert all(weyl_norm(c) < 1e-14 for c in comps[:3])
    sq = mono(1, (2, 0))
    c = taylor_shift(sq, np.array([1.0, 0.0]))
    assert c[0].coefficient((0, 0)) == pytest.approx(1)
    assert c[1].coefficient((1, 0)) == pytest.approx(2)
    assert c[2].coefficient((2, 0)) == pytest.approx(1)


@given(seeds, small_n, small_d)
def test_taylor_shift_reconstructs(seed, n, d):
    g = RandomStream(seed)
    f = DensePoly.random(n, d, g.child(0))
    z, x = sample_std_gaussian_vector(n + 1, g.child(1), size=2)
    total = sum(c.eval(x) for c in taylor_shift(f, z))
    scale = sum(abs(c.eval(x)) for c in taylor_shift(f, z)) + 1.0
    assert abs(total - f.eval(z + x)) <= 1e-10 * scale


def _gamma_by_hand(f, z):
    comps = taylor_shift(f, z)
    g1 = weyl_norm(comps[1])
    return max((weyl_norm(comps[k]) / g1) ** (1 / (k - 1)) for k in range(2, f.degree + 1))


def test_gamma_frob_examples():
    lin = DensePoly.linear([1.0, 2.0, 3.0])
    assert gamma_frob_exact(lin, np.array([1.0, 0, 0])) == 0.0
    f = DensePoly.from_terms(1, 2, {(2, 0): 1.0, (0, 2): -1.0})
    z = np.array([1.0, 1.0]) / math.sqrt(2)
    # d f = (2 z0, -2 z1) -> ||.|| = 2; f_2 = f with ||f||_W = sqrt(2)
    assert gamma_frob_exact(f, z) == pytest.approx(math.sqrt(2) / 2)
    assert gamma_frob_exact(f, z) == pytest.approx(_gamma_by_hand(f, z))


def test_gamma_frob_singular():
    f = mono(1, (2, 0))
    with pytest.raises(SingularPoint):
        gamma_frob_exact(f, np.array([0.0, 1.0]))


@given(seeds, small_n, st.integers(2, 4))
def test_gamma_frob_scale_invariance(seed, n, d):
    g = RandomStream(seed)
    f = DensePoly.random(n, d, g.child(0))
    z = sample_uniform_sphere(n + 1, g.child(1))
    c = complex(*g.child(2).standard_normal(2)) * 10
    assert abs(gamma_frob_exact(f.scale(c), z) - gamma_frob_exact(f, z)) <= 1e-12 * gamma_frob_exact(f, z)


@given(seeds, small_n, st.integers(2, 4))
def test_gamma_frob_lower_bound_at_zeros(seed, n, d):
    g = RandomStream(seed)
    f = DensePoly.kostlan(n, d, g.child(0))
    zeta = sample_uniform_zero(f, g.child(1))
    assert gamma_frob_exact(f, zeta) >= (d - 1) / 2 - 1e-9


def _max_on_sphere(p: DensePoly, starts=12, seed=0):
    m = p.n + 1
    g = np.random.default_rng(seed)

    def neg(x):
        v = x[:m] + 1j * x[m:]
        return -abs(p.eval(v / np.linalg.norm(v)))

    return max(-minimize(neg, g.standard_normal(2 * m), method="BFGS").fun for _ in range(starts))


def test_gamma_operator_sandwich():
    # gamma (operator norms) <= gamma_Frob <= (n+1) gamma
    for seed in range(6):
        g = RandomStream(seed)
        n, d = 1 + seed % 2, 3
        f = DensePoly.kostlan(n, d, g.child(0))
        z = sample_uniform_zero(f, g.child(1))
        comps = taylor_shift(f, z)
        g1 = np.linalg.norm(dense_gradient(f, z))
        gam = max((_max_on_sphere(comps[k], seed=seed) / g1) ** (1 / (k - 1)) for k in range(2, d + 1))
        gf = gamma_frob_exact(f, z)
        assert gam <= gf * (1 + 1e-6)
        assert gf <= (n + 1) * gam


def test_restrict_to_line_examples():
    f = mono(1, (2, 0))
    g = restrict_to_line(f, np.array([1.0, 0]), np.array([0, 1.0]))
    assert np.allclose(g.coeffs, [1, 0, 0])
    h = DensePoly.random(2, 3, RandomStream(4))
    b0, b1 = random_line_basis(3, RandomStream(5))
    r = restrict_to_line(h, b0, b1)
    assert r.degree == 3
    st_ = sample_std_gaussian_vector(2, RandomStream(6), size=10)
    direct = h.eval(st_[:, :1] * b0 + st_[:, 1:] * b1)
    assert np.max(np.abs(r(st_[:, 0], st_[:, 1]) - direct)) <= 1e-10 * np.max(np.abs(direct))


def test_bivariate_to_dense_roundtrip():
    g = BivariateHomog(np.array([1.0, 2.0, 3.0j]))
    d = g.to_dense()
    p = np.array([0.3 + 1j, -0.7])
    assert d.eval(p) == pytest.approx(g(p))


def test_proj_roots_examples():
    r = univariate_proj_roots(BivariateHomog(np.array([0.0, 1.0, 0.0])), RandomStream(1))
    targets = [np.array([1, 0]), np.array([0, 1])]
    assert sorted(min(proj_distance(x, t) for x in r) for t in targets)[-1] < 1e-12
    r = univariate_proj_roots(BivariateHomog(np.array([1.0, 0.0, 1.0])), RandomStream(2))
    targets = [np.array([1, 1j]), np.array([1, -1j])]
    for t in targets:
        assert min(proj_distance(x, t) for x in r) < 1e-12


def test_proj_roots_zero_form():
    with pytest.raises(InvalidArgument):
        univariate_proj_roots(BivariateHomog(np.zeros(3)), RandomStream(0))


def test_proj_roots_residual_and_guard():
    g = RandomStream(7)
    attempts = []
    for i in range(1000):
        c = sample_std_gaussian_vector(7, g.child(i, 0))
        form = BivariateHomog(c)
        roots, a = univariate_proj_roots(form, g.child(i, 1), return_attempts=True)
        attempts.append(a)
        assert len(roots) == 6
        for p in roots:
            grad = form.gradient(p)
            assert abs(form(p)) / np.linalg.norm(grad) <= 1e-12
    assert np.mean(attempts) <= 2.2


def test_proj_roots_cluster_warning():
    form = BivariateHomog(np.array([1.0, -2.0, 1.0]))  # (z0 - z1)^2
    with pytest.warns(RuntimeWarning):
        univariate_proj_roots(form, RandomStream(0))


def test_uniform_zero_of_hyperplane():
    f = DensePoly.linear([1.0, 0.0, 0.0])
    g = RandomStream(8)
    pts = np.array([sample_uniform_zero_dense(f, g.child(i)) for i in range(20000)])
    assert np.max(np.abs(pts[:, 0])) < 1e-12
    assert abs(np.mean(np.abs(pts[:, 1]) ** 2) - 0.5) < 0.01


def test_uniform_zero_residual_cubics():
    g = RandomStream(9)
    for i in range(1000):
        f = DensePoly.random(2, 3, g.child(i, 0))
        z = sample_uniform_zero(f, g.child(i, 1))
        assert abs(f.eval(z)) <= 1e-10 * weyl_norm(f)


def test_uniform_zero_component_frequencies():
    f = mono(2, (1, 1, 1))
    g = RandomStream(10)
    counts = np.zeros(3)
    trials = 3000
    for i in range(trials):
        z = sample_uniform_zero(f, g.child(i))
        counts[np.argmin(np.abs(z))] += 1
    assert np.all(np.abs(counts / trials - 1 / 3) < 0.02)


def test_dense_json_roundtrip():
    f = DensePoly.random(2, 3, RandomStream(11))
    assert weyl_norm(DensePoly.from_json(f.to_json()) - f) == 0.0
