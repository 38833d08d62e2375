"""Dense homogeneous polynomials: the exact oracle side of the package.

A :class:`DensePoly` stores an exponent matrix and a coefficient vector.
It supports batched evaluation, Weyl norms, Taylor shifts (homogeneous
components of ``x -> f(z + x)``), exact gamma_Frob, restriction to lines,
projective roots of bivariate forms and uniform sampling on the zero set.
"""

from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import comb, gammaln

from .numerics import (
    InvalidArgument,
    NumericFailure,
    SingularPoint,
    as_stream,
    normalize,
    sample_haar_unitary,
    sample_std_gaussian_matrix,
    sample_std_gaussian_vector,
)

__all__ = [
    "DensePoly",
    "BivariateHomog",
    "monomial_exponents",
    "weyl_norm",
    "weyl_norm_sq",
    "taylor_shift",
    "dense_gradient",
    "gamma_frob_exact",
    "restrict_to_line",
    "univariate_proj_roots",
    "sample_uniform_zero",
    "sample_uniform_zero_dense",
    "random_line_basis",
]


@lru_cache(maxsize=None)
def _monomials(nvars: int, degree: int) -> np.ndarray:
    out = []
    for c in itertools.combinations_with_replacement(range(nvars), degree):
        a = [0] * nvars
        for j in c:
            a[j] += 1
        out.append(a)
    arr = np.array(out, dtype=np.int64).reshape(-1, nvars)
    # Lexicographically decreasing, so z_0^d comes first.
    order = np.lexsort(arr.T[::-1])[::-1]
    arr = arr[order]
    arr.setflags(write=False)
    return arr


def monomial_exponents(n: int, degree: int) -> np.ndarray:
    """All exponent vectors of degree ``degree`` in ``n+1`` variables."""
    return _monomials(n + 1, degree)


def _log_multinomial_weight(exps: np.ndarray) -> np.ndarray:
    """log(alpha! / |alpha|!) for each row."""
    d = exps.sum(axis=1)
    return gammaln(exps + 1).sum(axis=1) - gammaln(d + 1)


class DensePoly:
    """Homogeneous polynomial in z_0..z_n given by its monomial coefficients.

    Parameters
    ----------
    n : int
        Number of variables minus one.
    degree : int
        Homogeneous degree.
    exps : array of shape (m, n+1)
        Exponent vectors, each summing to ``degree``.
    coeffs : array of shape (m,)
        Complex coefficients.
    """

    def __init__(self, n: int, degree: int, exps, coeffs):
        exps = np.asarray(exps, dtype=np.int64).reshape(-1, n + 1)
        coeffs = np.asarray(coeffs, dtype=complex).reshape(-1)
        if exps.shape[0] != coeffs.shape[0]:
            raise InvalidArgument("exps and coeffs length mismatch")
        if np.any(exps < 0) or np.any(exps.sum(axis=1) != degree):
            raise InvalidArgument("every exponent vector must be nonnegative and sum to the degree")
        if not np.all(np.isfinite(coeffs)):
            raise InvalidArgument("non-finite coefficient")
        # merge duplicate exponents
        if exps.shape[0] > 1:
            uniq, inv = np.unique(exps, axis=0, return_inverse=True)
            if uniq.shape[0] != exps.shape[0]:
                merged = np.zeros(uniq.shape[0], dtype=complex)
                np.add.at(merged, inv.reshape(-1), coeffs)
                exps, coeffs = uniq, merged
        self.n = int(n)
        self.degree = int(degree)
        self.exps = exps
        self.coeffs = coeffs
        self.exps.setflags(write=False)
        self.coeffs.setflags(write=False)

    # constructors -------------------------------------------------------
    @classmethod
    def from_terms(cls, n: int, degree: int, terms: dict) -> "DensePoly":
        if not terms:
            return cls.zero(n, degree)
        exps = np.array(list(terms.keys()), dtype=np.int64)
        return cls(n, degree, exps, np.array(list(terms.values()), dtype=complex))

    @classmethod
    def zero(cls, n: int, degree: int) -> "DensePoly":
        return cls(n, degree, np.zeros((0, n + 1), dtype=np.int64), np.zeros(0, dtype=complex))

    @classmethod
    def linear(cls, coeffs) -> "DensePoly":
        c = np.asarray(coeffs, dtype=complex)
        return cls(c.shape[0] - 1, 1, np.eye(c.shape[0], dtype=np.int64), c)

    @classmethod
    def kostlan(cls, n: int, degree: int, rng) -> "DensePoly":
        """Kostlan random polynomial: c_alpha = sqrt(d!/alpha!) * complex Gaussian."""
        exps = monomial_exponents(n, degree)
        g = sample_std_gaussian_vector(exps.shape[0], rng)
        w = np.exp(-0.5 * _log_multinomial_weight(exps))
        return cls(n, degree, exps, w * g)

    @classmethod
    def random(cls, n: int, degree: int, rng) -> "DensePoly":
        """Random polynomial with i.i.d. complex Gaussian monomial coefficients."""
        exps = monomial_exponents(n, degree)
        return cls(n, degree, exps, sample_std_gaussian_vector(exps.shape[0], rng))

    # evaluation ---------------------------------------------------------
    def __call__(self, z) -> np.ndarray:
        return self.eval(z)

    def eval(self, z):
        """Evaluate at ``z`` of shape (..., n+1); returns shape (...)."""
        z = np.asarray(z, dtype=complex)
        if z.shape[-1] != self.n + 1:
            raise InvalidArgument(f"expected last axis {self.n + 1}, got {z.shape[-1]}")
        if self.coeffs.size == 0:
            return np.zeros(z.shape[:-1], dtype=complex)[()]
        if self.degree == 0:
            return np.full(z.shape[:-1], self.coeffs.sum(), dtype=complex)[()]
        # powers table: (..., n+1, degree+1)
        pw = z[..., :, None] ** np.arange(self.degree + 1)
        cols = np.arange(self.n + 1)
        mons = np.prod(pw[..., cols, self.exps], axis=-1)  # (..., m)
        return (mons @ self.coeffs)[()]

    # algebra --------------------------------------------------------------
    def scale(self, c) -> "DensePoly":
        return DensePoly(self.n, self.degree, self.exps, self.coeffs * c)

    def __add__(self, other: "DensePoly") -> "DensePoly":
        if (self.n, self.degree) != (other.n, other.degree):
            raise InvalidArgument("shape mismatch")
        return DensePoly(
            self.n, self.degree,
            np.vstack([self.exps, other.exps]),
            np.concatenate([self.coeffs, other.coeffs]),
        )

    def __sub__(self, other):
        return self + other.scale(-1.0)

    def __mul__(self, other: "DensePoly") -> "DensePoly":
        if self.n != other.n:
            raise InvalidArgument("variable count mismatch")
        e = (self.exps[:, None, :] + other.exps[None, :, :]).reshape(-1, self.n + 1)
        c = (self.coeffs[:, None] * other.coeffs[None, :]).reshape(-1)
        return DensePoly(self.n, self.degree + other.degree, e, c)

    def compose_linear(self, a) -> "DensePoly":
        """The polynomial ``x -> f(a @ x)`` for a square matrix ``a``."""
        a = np.asarray(a, dtype=complex)
        m = self.n + 1
        if a.shape != (m, m):
            raise InvalidArgument("matrix shape mismatch")
        forms = [DensePoly.linear(a[j]) for j in range(m)]
        one = DensePoly(self.n, 0, np.zeros((1, m), dtype=np.int64), [1.0])
        # cache powers of each linear form
        pows = [[one] for _ in range(m)]
        for j in range(m):
            for _ in range(self.degree):
                pows[j].append(pows[j][-1] * forms[j])
        out = DensePoly.zero(self.n, self.degree)
        for alpha, c in zip(self.exps, self.coeffs):
            term = one.scale(c)
            for j in range(m):
                if alpha[j]:
                    term = term * pows[j][alpha[j]]
            out = out + term
        return out

    def unitary_action(self, u) -> "DensePoly":
        """The polynomial ``z -> f(u^* z)``."""
        return self.compose_linear(np.asarray(u).conj().T)

    def pruned(self, tol=0.0) -> "DensePoly":
        keep = np.abs(self.coeffs) > tol
        return DensePoly(self.n, self.degree, self.exps[keep], self.coeffs[keep])

    def coefficient(self, alpha) -> complex:
        hit = np.all(self.exps == np.asarray(alpha), axis=1)
        return complex(self.coeffs[hit].sum())

    def __repr__(self):
        return f"DensePoly(n={self.n}, degree={self.degree}, terms={self.coeffs.size})"

    # serialization ------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "degree": self.degree,
            "terms": [
                {"alpha": [int(a) for a in alpha], "re": float(c.real), "im": float(c.imag)}
                for alpha, c in zip(self.exps, self.coeffs)
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DensePoly":
        try:
            n = int(d["n"])
            degree = int(d["degree"])
            terms = d["terms"]
            exps = np.array([t["alpha"] for t in terms], dtype=np.int64).reshape(-1, n + 1)
            coeffs = np.array([complex(t.get("re", 0.0), t.get("im", 0.0)) for t in terms])
        except (KeyError, TypeError) as exc:
            raise InvalidArgument(f"malformed dense polynomial: {exc}") from exc
        return cls(n, degree, exps, coeffs)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "DensePoly":
        return cls.from_dict(json.loads(s))


def weyl_norm_sq(f: DensePoly) -> float:
    """Squared Weyl norm: sum of (alpha!/d!) |c_alpha|^2."""
    if f.coeffs.size == 0:
        return 0.0
    w = np.exp(_log_multinomial_weight(f.exps))
    return float(np.sum(w * np.abs(f.coeffs) ** 2))


def weyl_norm(f: DensePoly) -> float:
    """Weyl norm of a homogeneous polynomial."""
    return math.sqrt(weyl_norm_sq(f))


def dense_gradient(f: DensePoly, z) -> np.ndarray:
    """Exact gradient (d f / d z_j)_j at ``z``."""
    z = np.asarray(z, dtype=complex)
    grad = np.zeros(f.n + 1, dtype=complex)
    for j in range(f.n + 1):
        mask = f.exps[:, j] > 0
        if not np.any(mask):
            continue
        e = f.exps[mask].copy()
        c = f.coeffs[mask] * e[:, j]
        e[:, j] -= 1
        grad[j] = DensePoly(f.n, f.degree - 1, e, c)(z)
    return grad


def taylor_shift(f: DensePoly, z) -> list[DensePoly]:
    """Homogeneous components g_0..g_d of ``x -> f(z + x)``.

    The coefficient of x^beta in g_|beta| is
    sum over alpha >= beta of c_alpha * prod_j C(alpha_j, beta_j) z_j^(alpha_j - beta_j).
    """
    z = np.asarray(z, dtype=complex)
    if z.shape != (f.n + 1,):
        raise InvalidArgument("point dimension mismatch")
    out = []
    for k in range(f.degree + 1):
        beta = monomial_exponents(f.n, k)
        if f.coeffs.size == 0:
            out.append(DensePoly.zero(f.n, k))
            continue
        diff = f.exps[None, :, :] - beta[:, None, :]  # (p, m, n+1)
        valid = np.all(diff >= 0, axis=-1)
        dpos = np.where(diff >= 0, diff, 0)
        bc = np.prod(comb(f.exps[None, :, :], beta[:, None, :], exact=False), axis=-1)
        zp = np.prod(z ** dpos, axis=-1)
        mat = np.where(valid, bc * zp, 0.0)
        out.append(DensePoly(f.n, k, beta, mat @ f.coeffs))
    return out


def gamma_frob_exact(f: DensePoly, z, return_parts=False):
    """Exact gamma_Frob of ``f`` at the unit representative of ``z``.

    Returns max over k=2..d of (||g_k||_W / ||d_z f||)^(1/(k-1)) where g_k are
    the Taylor-shift components; 0 when d < 2.
    """
    z = normalize(z)
    comps = taylor_shift(f, z)
    grad_norm = weyl_norm(comps[1]) if f.degree >= 1 else 0.0
    if grad_norm == 0.0:
        raise SingularPoint("gradient vanishes at z")
    ratios = {}
    for k in range(2, f.degree + 1):
        ratios[k] = (weyl_norm(comps[k]) / grad_norm) ** (1.0 / (k - 1))
    val = max(ratios.values()) if ratios else 0.0
    if return_parts:
        return val, grad_norm, ratios
    return val


@dataclass(frozen=True)
class BivariateHomog:
    """Bivariate form sum_j coeffs[j] * s^(d-j) * t^j."""

    coeffs: np.ndarray

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def __call__(self, s, t=None):
        if t is None:
            p = np.asarray(s, dtype=complex)
            s, t = p[..., 0], p[..., 1]
        d = self.degree
        j = np.arange(d + 1)
        s = np.asarray(s, dtype=complex)[..., None]
        t = np.asarray(t, dtype=complex)[..., None]
        return np.sum(self.coeffs * s ** (d - j) * t ** j, axis=-1)[()]

    def gradient(self, p) -> np.ndarray:
        s, t = complex(p[0]), complex(p[1])
        d = self.degree
        ds = sum(self.coeffs[j] * (d - j) * s ** (d - j - 1) * t ** j for j in range(d))
        dt = sum(self.coeffs[j] * j * s ** (d - j) * t ** (j - 1) for j in range(1, d + 1))
        return np.array([ds, dt])

    def to_dense(self) -> DensePoly:
        d = self.degree
        exps = np.array([[d - j, j] for j in range(d + 1)], dtype=np.int64)
        return DensePoly(1, d, exps, self.coeffs)


def _roots_of_unity(m: int) -> np.ndarray:
    k = np.arange(m)
    return np.exp(2j * np.pi * k / m)


def restrict_to_line(f, b0, b1) -> BivariateHomog:
    """Restriction ``(s, t) -> f(s*b0 + t*b1)`` from d+1 evaluations.

    Works for any evaluable object with ``degree`` and a batched ``__call__``
    (dense polynomials and black-box handles alike).
    """
    b0 = np.asarray(b0, dtype=complex)
    b1 = np.asarray(b1, dtype=complex)
    d = int(f.degree)
    om = _roots_of_unity(d + 1)
    pts = b0[None, :] + om[:, None] * b1[None, :]
    vals = np.asarray(f(pts), dtype=complex)
    return BivariateHomog(np.fft.fft(vals) / (d + 1))


def random_line_basis(dim: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal pair spanning a uniformly random 2-plane of C^dim."""
    q, _ = np.linalg.qr(sample_std_gaussian_matrix(dim, 2, rng))
    return q[:, 0], q[:, 1]


def _aberth(c: np.ndarray, max_iter=500) -> tuple[np.ndarray, bool]:
    """Roots of sum_j c[j] x^j by Aberth-Ehrlich iteration."""
    d = len(c) - 1
    c = c / c[-1]
    if d == 1:
        return np.array([-c[0]]), True
    dc = c[1:] * np.arange(1, d + 1)
    # Initial guesses on a circle of radius given by the coefficient geometric mean,
    # rotated off the real axis to break symmetry.
    r = max(abs(c[0]) ** (1.0 / d), 1e-3)
    x = r * np.exp(1j * (2 * np.pi * np.arange(d) / d + 0.4))
    converged = False
    for _ in range(max_iter):
        p = np.polynomial.polynomial.polyval(x, c)
        dp = np.polynomial.polynomial.polyval(x, dc)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = p / dp
            diff = x[:, None] - x[None, :]
            np.fill_diagonal(diff, 1.0)
            inv = 1.0 / diff
            np.fill_diagonal(inv, 0.0)
            corr = ratio / (1.0 - ratio * inv.sum(axis=1))
        corr = np.where(np.isfinite(corr), corr, 0.0)
        x = x - corr
        if np.all(np.abs(corr) <= 1e-15 * np.maximum(1.0, np.abs(x))):
            converged = True
            break
    return x, converged


def _polish_affine(x, c, steps=3):
    dc = c[1:] * np.arange(1, len(c))
    for _ in range(steps):
        p = np.polynomial.polynomial.polyval(x, c)
        dp = np.polynomial.polynomial.polyval(x, dc)
        step = np.where(dp != 0, p / np.where(dp != 0, dp, 1.0), 0.0)
        x = x - step
    return x


def _proj_residual(g: BivariateHomog, p) -> float:
    gr = np.linalg.norm(g.gradient(p))
    val = abs(g(p))
    if gr == 0:
        return math.inf if val > 0 else 0.0
    return float(val / gr)


def univariate_proj_roots(g: BivariateHomog, rng=None, max_restarts=64,
                          return_attempts=False, tol=1e-12):
    """All d projective roots of a bivariate form, as unit vectors in C^2.

    A Haar-random rotation u of C^2 is drawn and ``x -> g(u (1, x))`` is
    solved; the draw is repeated while some affine root has modulus above
    2*sqrt(d), so all returned roots are computed in a well-scaled chart.
    """
    c = np.asarray(g.coeffs, dtype=complex)
    d = len(c) - 1
    scale = np.max(np.abs(c)) if c.size else 0.0
    if d < 1 or scale == 0.0:
        raise InvalidArgument("univariate_proj_roots needs a nonzero form of degree >= 1")
    rng = as_stream(rng)
    bound = 2.0 * math.sqrt(d)
    om = _roots_of_unity(d + 1)
    best = None
    for attempt in range(1, max_restarts + 1):
        u = sample_haar_unitary(2, rng)
        # q(x) = g(u @ (1, x)), coefficients via evaluation on the unit circle.
        pts = u[None, :, 0] + om[:, None] * u[None, :, 1]
        q = np.fft.fft(g(pts)) / (d + 1)
        if abs(q[-1]) <= 1e-14 * np.max(np.abs(q)):
            continue
        x, ok = _aberth(q)
        x = _polish_affine(x, q)
        if not ok or np.any(~np.isfinite(x)):
            continue
        if np.max(np.abs(x)) > bound:
            best = (u, x)
            continue
        best = (u, x)
        break
    else:
        if best is None:
            raise NumericFailure("univariate root finder did not converge")
        attempt = max_restarts
    u, x = best
    pts = (u[:, 0][None, :] + x[:, None] * u[:, 1][None, :])
    pts = pts / np.linalg.norm(pts, axis=1, keepdims=True)
    res = np.array([_proj_residual(g, p) for p in pts]) / 1.0
    if np.any(res > tol * max(1.0, scale)):
        # multiple or clustered roots: report without certification
        sep = np.abs(x[:, None] - x[None, :]) + np.eye(d) * np.inf
        warnings.warn(
            f"clustered roots: min separation {sep.min():.3e}, max residual {res.max():.3e}",
            RuntimeWarning,
            stacklevel=2,
        )
    roots = [pts[i] for i in range(d)]
    if return_attempts:
        return roots, attempt
    return roots


def sample_uniform_zero(f, rng, refine=True) -> np.ndarray:
    """Uniformly distributed point on the zero set of ``f`` in P^n.

    Draws a uniformly random projective line, restricts ``f`` to it, and picks
    one of the d intersection points uniformly. ``f`` can be dense or a
    black-box handle (anything with ``n``, ``degree`` and batched evaluation).
    """
    if f.degree < 1:
        raise InvalidArgument("zero sampling needs degree >= 1")
    rng = as_stream(rng)
    for _ in range(64):
        b0, b1 = random_line_basis(f.n + 1, rng)
        g = restrict_to_line(f, b0, b1)
        if np.max(np.abs(g.coeffs)) == 0.0:
            continue
        roots = univariate_proj_roots(g, rng)
        i = int(rng.integers(len(roots)))
        s, t = roots[i]
        zeta = normalize(s * b0 + t * b1)
        if refine:
            zeta = _refine_hypersurface(f, zeta)
        return zeta
    raise NumericFailure("could not find a line meeting the hypersurface properly")


def _refine_hypersurface(f, z, steps=2):
    """A couple of minimal-norm Newton steps for a single equation."""
    if isinstance(f, DensePoly):
        for _ in range(steps):
            val = f(z)
            gr = dense_gradient(f, z)
            gg = np.vdot(gr, gr).real
            if gg == 0 or val == 0:
                break
            # conj(gr) direction: d f(z + w) = gr . w
            z = normalize(z - val * gr.conj() / gg)
    return z


def sample_uniform_zero_dense(f: DensePoly, rng) -> np.ndarray:
    return sample_uniform_zero(f, rng)
