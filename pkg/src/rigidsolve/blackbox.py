"""Black-box polynomials: evaluation handles with an evaluation counter.

Everything here touches a polynomial only through point evaluations.
Derivatives and homogeneous components are read off discrete Fourier
transforms of values at roots of unity, so they are exact for polynomials
up to roundoff and their cost is a known number of evaluations.
"""

from __future__ import annotations

import json
import threading
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .numerics import InvalidArgument, NumericFailure, as_stream, sample_std_gaussian_vector

__all__ = [
    "EvalCounter",
    "BlackBoxPoly",
    "BlackBoxSystem",
    "bb_eval",
    "bb_directional_derivative",
    "bb_gradient",
    "bb_hom_components",
    "bb_degree_probe",
    "bb_unitary_action",
    "shift",
    "system_from_dict",
    "system_to_dict",
    "load_system",
]


class EvalCounter:
    """Monotone, thread-safe count of point evaluations."""

    def __init__(self):
        self._count = 0
        self._lock = threading.Lock()

    def add(self, k: int) -> None:
        with self._lock:
            self._count += int(k)

    @property
    def count(self) -> int:
        return self._count

    def __repr__(self):
        return f"EvalCounter({self._count})"


class BlackBoxPoly:
    """Evaluation handle for a polynomial in z_0..z_n of degree at most ``degree``.

    ``fn`` maps an array of shape (..., n+1) to values of shape (...). Each
    point evaluated adds one to ``counter``; derived handles (shifts, unitary
    actions) share the counter of the handle they wrap.
    """

    def __init__(self, fn: Callable, n: int, degree: int, cost_L: int = 1,
                 counter: EvalCounter | None = None, homogeneous: bool = True,
                 source=None, name: str = ""):
        if n < 0 or degree < 0:
            raise InvalidArgument("n and degree must be nonnegative")
        self.fn = fn
        self.n = int(n)
        self.degree = int(degree)
        self.cost_L = int(cost_L)
        self.counter = counter if counter is not None else EvalCounter()
        self.homogeneous = homogeneous
        # Optional exact representation (DensePoly or ABP) for oracle use only.
        self.source = source
        self.name = name

    @property
    def evals(self) -> int:
        return self.counter.count

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        if z.shape[-1] != self.n + 1:
            raise InvalidArgument(f"expected points in C^{self.n + 1}, got shape {z.shape}")
        self.counter.add(int(np.prod(z.shape[:-1], dtype=np.int64)))
        out = np.asarray(self.fn(z), dtype=complex)
        if not np.all(np.isfinite(out)):
            raise NumericFailure("black-box evaluation returned a non-finite value", point=z)
        return out[()]

    def __repr__(self):
        kind = "" if self.homogeneous else ", inhomogeneous"
        return f"BlackBoxPoly(n={self.n}, degree={self.degree}, L={self.cost_L}{kind})"

    # constructors -------------------------------------------------------
    @classmethod
    def from_dense(cls, f) -> "BlackBoxPoly":
        cost = max(1, int(f.coeffs.size) * (f.degree + 1))
        return cls(f.eval, f.n, f.degree, cost_L=cost, source=f, name="dense")

    @classmethod
    def from_abp(cls, a) -> "BlackBoxPoly":
        from .abp import abp_eval, abp_cost

        return cls(lambda z: abp_eval(a, z), a.n, a.degree, cost_L=abp_cost(a), source=a,
                   name="abp")

    @classmethod
    def from_callable(cls, fn: Callable, n: int, degree: int, cost_L: int = 1) -> "BlackBoxPoly":
        return cls(fn, n, degree, cost_L=cost_L, name="callable")

    # derived handles ---------------------------------------------------------
    def derived(self, fn: Callable, extra_cost: int = 0, homogeneous=None) -> "BlackBoxPoly":
        return BlackBoxPoly(
            fn, self.n, self.degree, cost_L=self.cost_L + extra_cost, counter=self.counter,
            homogeneous=self.homogeneous if homogeneous is None else homogeneous,
            source=None, name=self.name,
        )


def bb_eval(f: BlackBoxPoly, z):
    """Evaluate ``f`` at one point or a batch of points."""
    return f(z)


@lru_cache(maxsize=64)
def _roots_of_unity(m: int) -> np.ndarray:
    out = np.exp(2j * np.pi * np.arange(m) / m)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=64)
def _gradient_offsets(dim: int, m: int) -> np.ndarray:
    """Points w^i e_j, shape (dim, m, dim)."""
    out = _roots_of_unity(m)[None, :, None] * np.eye(dim)[:, None, :]
    out.setflags(write=False)
    return out


def bb_directional_derivative(f: BlackBoxPoly, z, v) -> complex:
    """d_z f(v) from the d+1 values f(z + w^i v), w a primitive (d+1)-th root of unity."""
    z = np.asarray(z, dtype=complex)
    v = np.asarray(v, dtype=complex)
    if not np.any(v):
        raise InvalidArgument("direction must be nonzero")
    m = f.degree + 1
    pts = z[None, :] + _roots_of_unity(m)[:, None] * v[None, :]
    vals = f(pts)
    return complex(np.fft.fft(vals)[1 % m] / m) if m > 1 else 0j


def _gradient_with_value(f: BlackBoxPoly, z):
    z = np.asarray(z, dtype=complex)
    m = f.degree + 1
    dim = f.n + 1
    pts = z + _gradient_offsets(dim, m)  # (dim, m, dim)
    vals = f(pts)
    if m == 1:
        return np.zeros(dim, dtype=complex), complex(vals[0, 0])
    coef = np.fft.fft(vals, axis=1) / m
    grad = coef[:, 1]
    # entries at the roundoff level of the sampled values are exact zeros
    grad[np.abs(grad) <= 4 * np.finfo(float).eps * np.max(np.abs(vals))] = 0.0
    # the constant coefficient of t -> f(z + t e_j) is f(z) for every j
    return grad, complex(np.mean(coef[:, 0]))


def bb_gradient(f: BlackBoxPoly, z, return_value=False):
    """Gradient of ``f`` at ``z`` from (n+1)(d+1) evaluations.

    With ``return_value`` the value f(z) (one of the sampled points) is also
    returned at no extra cost.
    """
    grad, value = _gradient_with_value(f, z)
    if return_value:
        return grad, value
    return grad


def bb_hom_components(f: BlackBoxPoly, w) -> np.ndarray:
    """Homogeneous components f_0(w), ..., f_d(w) by an inverse DFT.

    ``w`` may be one point (returns shape (d+1,)) or a batch of shape
    (s, n+1) (returns shape (d+1, s)). Costs d+1 evaluations per point.
    """
    w = np.asarray(w, dtype=complex)
    m = f.degree + 1
    xi = _roots_of_unity(m)
    pts = xi.reshape((m,) + (1,) * w.ndim) * w[None]
    vals = f(pts)
    return np.fft.fft(vals, axis=0) / m


def bb_degree_probe(f: BlackBoxPoly, rng=None, line=None, rtol=1e-10):
    """Degree of ``f`` on a random affine line ``t -> a + t b``.

    Returns ``(degree, degenerate)``; ``degenerate`` is True when ``f``
    vanishes identically on the line. ``line`` forces a specific ``(a, b)``.
    """
    if line is None:
        rng = as_stream(rng)
        a = sample_std_gaussian_vector(f.n + 1, rng)
        b = sample_std_gaussian_vector(f.n + 1, rng)
    else:
        a, b = (np.asarray(x, dtype=complex) for x in line)
    m = f.degree + 2
    om = _roots_of_unity(m)
    vals = f(a[None, :] + om[:, None] * b[None, :])
    c = np.fft.fft(vals) / m
    mag = np.abs(c)
    top = mag.max()
    if top == 0.0 or not np.isfinite(top):
        return 0, True
    nz = np.nonzero(mag > rtol * top)[0]
    return int(nz[-1]), False


def shift(f: BlackBoxPoly, z) -> BlackBoxPoly:
    """Handle for ``x -> f(z + x)`` sharing the counter of ``f``."""
    z = np.asarray(z, dtype=complex)
    base = f.fn
    return f.derived(lambda x: base(x + z), extra_cost=f.n + 1, homogeneous=False)


def _act(f: BlackBoxPoly, u) -> BlackBoxPoly:
    u = np.asarray(u, dtype=complex)
    if u.shape != (f.n + 1, f.n + 1):
        raise InvalidArgument(f"unitary of shape {u.shape} does not match n+1 = {f.n + 1}")
    uc = u.conj()
    base = f.fn
    # (u^* z)_a = sum_b conj(u_ba) z_b, i.e. z @ conj(u) for row-stacked points
    return f.derived(lambda z: base(z @ uc), extra_cost=2 * (f.n + 1) ** 2)


class BlackBoxSystem:
    """Square system of n black-box polynomials in n+1 variables."""

    def __init__(self, polys: Sequence[BlackBoxPoly]):
        polys = list(polys)
        if not polys:
            raise InvalidArgument("system needs at least one polynomial")
        n = polys[0].n
        if any(p.n != n for p in polys):
            raise InvalidArgument("all components must share n")
        self.polys = polys
        self.n = n

    def __len__(self):
        return len(self.polys)

    def __iter__(self):
        return iter(self.polys)

    def __getitem__(self, i):
        return self.polys[i]

    @property
    def degrees(self) -> list[int]:
        return [p.degree for p in self.polys]

    @property
    def max_degree(self) -> int:
        return max(self.degrees)

    @property
    def L_total(self) -> int:
        return sum(p.cost_L for p in self.polys)

    @property
    def evals(self) -> int:
        seen = {}
        for p in self.polys:
            seen[id(p.counter)] = p.counter.count
        return sum(seen.values())

    def is_square(self) -> bool:
        return len(self.polys) == self.n

    def evaluate(self, z) -> np.ndarray:
        return np.array([p(z) for p in self.polys])

    def jacobian(self, z, return_value=False):
        rows, vals = zip(*(bb_gradient(p, z, return_value=True) for p in self.polys))
        jac = np.array(rows)
        if return_value:
            return jac, np.array(vals)
        return jac

    def act(self, u) -> "BlackBoxSystem":
        return bb_unitary_action(u, self)


def bb_unitary_action(u, F):
    """The system ``(f_1(u_1^* z), ..., f_n(u_n^* z))``.

    ``u`` is a sequence of n unitary matrices (or one matrix applied to every
    component). ``F`` may also be a single :class:`BlackBoxPoly`.
    """
    if isinstance(F, BlackBoxPoly):
        return _act(F, u)
    u = np.asarray(u, dtype=complex)
    if u.ndim == 2:
        u = np.broadcast_to(u, (len(F),) + u.shape)
    if u.shape[0] != len(F):
        raise InvalidArgument(f"{u.shape[0]} unitaries for {len(F)} polynomials")
    return BlackBoxSystem([_act(p, ui) for p, ui in zip(F.polys, u)])


# ----------------------------------------------------------------------------
# JSON systems


def _builtin(spec: dict, n: int, rng) -> BlackBoxPoly:
    from .abp import abp_sample_gaussian
    from .poly import DensePoly

    name = spec["builtin"]
    degree = int(spec.get("degree", 2))
    if name == "kostlan":
        return BlackBoxPoly.from_dense(DensePoly.kostlan(n, degree, rng))
    if name == "linear":
        return BlackBoxPoly.from_dense(DensePoly.kostlan(n, 1, rng))
    if name == "abp":
        profile = tuple(int(r) for r in spec.get("profile", [2] * (degree - 1)))
        return BlackBoxPoly.from_abp(abp_sample_gaussian(n, profile, rng))
    raise InvalidArgument(f"unknown builtin polynomial {name!r}")


def poly_from_dict(d: dict, n: int | None = None, rng=None) -> BlackBoxPoly:
    from .abp import ABP
    from .poly import DensePoly

    if not isinstance(d, dict):
        raise InvalidArgument("polynomial entry must be a JSON object")
    if "builtin" in d:
        if n is None:
            raise InvalidArgument("builtin entries need the system n")
        return _builtin(d, n, rng)
    if "tensors" in d:
        return BlackBoxPoly.from_abp(ABP.from_dict(d))
    if "terms" in d:
        return BlackBoxPoly.from_dense(DensePoly.from_dict(d))
    raise InvalidArgument("polynomial entry is neither dense, ABP nor builtin")


def system_from_dict(d: dict, rng=None) -> BlackBoxSystem:
    """Build a system from ``{"n": int, "polys": [...]}``.

    Builtin entries (``{"builtin": "kostlan"|"abp"|"linear", ...}``) are
    sampled from ``rng``, a child stream per entry.
    """
    try:
        n = int(d["n"])
        entries = d["polys"]
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidArgument(f"malformed system: {exc}") from exc
    rng = as_stream(rng)
    polys = [poly_from_dict(e, n, rng.child(1000 + i)) for i, e in enumerate(entries)]
    if any(p.n != n for p in polys):
        raise InvalidArgument("polynomial variable count does not match system n")
    return BlackBoxSystem(polys)


def system_to_dict(F: BlackBoxSystem) -> dict:
    polys = []
    for p in F.polys:
        if p.source is None:
            raise InvalidArgument("only systems built from dense or ABP data can be serialized")
        polys.append(p.source.to_dict())
    return {"n": F.n, "polys": polys}


def load_system(path, rng=None) -> BlackBoxSystem:
    with open(path) as fh:
        d = json.load(fh)
    return system_from_dict(d, rng)
