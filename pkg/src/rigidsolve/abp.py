"""Algebraic branching programs in matrix form.

An ABP of degree d in z_0..z_n is a chain of linear matrix pencils
A_i(z) = sum_j A_ij z_j of shape r_{i-1} x r_i, and computes
f(z) = tr(A_1(z) ... A_d(z)). Solver inputs use r_0 = r_d = 1; experiments
may use the relaxed form r_0 = r_d > 1.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .numerics import (
    InvalidArgument,
    ResourceError,
    as_stream,
    sample_std_gaussian_matrix,
    sample_std_gaussian_vector,
)

__all__ = [
    "ABP",
    "abp_sample_gaussian",
    "abp_eval",
    "abp_cost",
    "abp_to_dense",
    "abp_shape_report",
    "anomaly_samples",
    "anomaly_mc",
    "anomaly_exact",
    "DENSE_CAP",
]

DENSE_CAP = 10**5
ANOMALY_WARN = 1e3


@dataclass(frozen=True)
class ABP:
    """Layered coefficient tensors; ``tensors[i]`` has shape (n+1, r_i, r_{i+1})."""

    n: int
    tensors: tuple

    def __post_init__(self):
        ts = tuple(np.asarray(t, dtype=complex) for t in self.tensors)
        if not ts:
            raise InvalidArgument("an ABP needs at least one layer")
        for i, t in enumerate(ts):
            if t.ndim != 3 or t.shape[0] != self.n + 1:
                raise InvalidArgument(f"layer {i} has shape {t.shape}, expected (n+1, r, r')")
            if i and ts[i - 1].shape[2] != t.shape[1]:
                raise InvalidArgument(f"layer {i} does not chain with layer {i - 1}")
            t.setflags(write=False)
        if ts[0].shape[1] != ts[-1].shape[2]:
            raise InvalidArgument("first and last widths must agree (r_0 = r_d)")
        object.__setattr__(self, "tensors", ts)

    @property
    def degree(self) -> int:
        return len(self.tensors)

    @property
    def widths(self) -> tuple:
        """(r_0, r_1, ..., r_d)."""
        return (self.tensors[0].shape[1],) + tuple(t.shape[2] for t in self.tensors)

    @property
    def profile(self) -> tuple:
        """Inner widths (r_1, ..., r_{d-1})."""
        return self.widths[1:-1]

    def cyclic_shift(self, k: int = 1) -> "ABP":
        k %= self.degree
        return ABP(self.n, self.tensors[k:] + self.tensors[:k])

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "degree": self.degree,
            "profile": list(self.profile),
            "tensors": [
                [[[[float(x.real), float(x.imag)] for x in row] for row in mat] for mat in t]
                for t in self.tensors
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ABP":
        try:
            n = int(d["n"])
            tensors = []
            for layer in d["tensors"]:
                arr = np.asarray(layer, dtype=float)
                if arr.ndim != 4 or arr.shape[-1] != 2:
                    raise InvalidArgument("tensor entries must be [re, im] pairs")
                tensors.append(arr[..., 0] + 1j * arr[..., 1])
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidArgument(f"malformed ABP: {exc}") from exc
        a = cls(n, tuple(tensors))
        if "degree" in d and int(d["degree"]) != a.degree:
            raise InvalidArgument("declared degree does not match the number of layers")
        if "profile" in d and tuple(int(r) for r in d["profile"]) != a.profile:
            raise InvalidArgument("declared profile does not match tensor shapes")
        return a

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "ABP":
        return cls.from_dict(json.loads(s))


def _check_profile(profile) -> tuple:
    profile = tuple(int(r) for r in profile)
    if any(r < 1 for r in profile):
        raise InvalidArgument(f"layer widths must be >= 1, got {profile}")
    return profile


def abp_sample_gaussian(n: int, profile, rng, r0: int = 1) -> ABP:
    """Gaussian random ABP: every coefficient i.i.d. complex standard Gaussian.

    ``profile`` lists the inner widths; the degree is ``len(profile) + 1``.
    """
    if n < 0:
        raise InvalidArgument("n must be >= 0")
    profile = _check_profile(profile)
    widths = (int(r0),) + profile + (int(r0),)
    rng = as_stream(rng)
    tensors = tuple(
        sample_std_gaussian_matrix(widths[i], widths[i + 1], rng, size=n + 1)
        for i in range(len(widths) - 1)
    )
    return ABP(n, tensors)


def abp_eval(a: ABP, z):
    """tr(A_1(z) ... A_d(z)) for one point or a batch of shape (..., n+1)."""
    z = np.asarray(z, dtype=complex)
    if z.shape[-1] != a.n + 1:
        raise InvalidArgument(f"expected points in C^{a.n + 1}, got shape {z.shape}")
    lead = z.shape[:-1]
    zf = z.reshape(-1, a.n + 1)
    acc = None
    for t in a.tensors:
        _, r, c = t.shape
        layer = (zf @ t.reshape(a.n + 1, r * c)).reshape(-1, r, c)
        acc = layer if acc is None else acc @ layer
    out = np.trace(acc, axis1=1, axis2=2)
    return out.reshape(lead)[()]


def abp_cost(a: ABP) -> int:
    """Arithmetic operation count of one evaluation (pencils plus products)."""
    w = a.widths
    pencils = sum(2 * (a.n + 1) * w[i] * w[i + 1] for i in range(a.degree))
    products = sum(2 * w[0] * w[i] * w[i + 1] for i in range(1, a.degree))
    return pencils + products + w[0]


def abp_to_dense(a: ABP, cap: int = DENSE_CAP):
    """Exact monomial expansion of the ABP polynomial."""
    from .poly import DensePoly

    size = math.comb(a.n + a.degree, a.degree)
    if size > cap:
        raise ResourceError(f"dense expansion needs {size} coefficients, cap is {cap}")
    m = a.n + 1
    r0 = a.widths[0]
    cur = {(0,) * m: np.eye(r0, dtype=complex)}
    for t in a.tensors:
        nxt: dict = {}
        for alpha, mat in cur.items():
            for j in range(m):
                beta = list(alpha)
                beta[j] += 1
                beta = tuple(beta)
                prod = mat @ t[j]
                if beta in nxt:
                    nxt[beta] = nxt[beta] + prod
                else:
                    nxt[beta] = prod
        cur = nxt
    exps = np.array(list(cur.keys()), dtype=np.int64)
    coeffs = np.array([np.trace(mat) for mat in cur.values()])
    return DensePoly(a.n, a.degree, exps, coeffs)


def abp_shape_report(a: ABP) -> dict:
    """Irreducibility hypothesis (inner widths >= 2) and edge count check.

    ``singular`` flags programs with at most n edges, whose hypersurface is
    necessarily singular.
    """
    w = a.widths
    edges = sum(w[i] * w[i + 1] for i in range(a.degree))
    return {
        "degree": a.degree,
        "profile": list(a.profile),
        "irreducible": all(r >= 2 for r in a.profile),
        "edge_count": int(edges),
        "singular": bool(edges <= a.n),
    }


def anomaly_samples(p, samples: int, rng) -> np.ndarray:
    """Samples of ||P||_F^2 / ||P x||^2 for complex standard Gaussian x."""
    p = np.asarray(p, dtype=complex)
    if p.ndim != 2 or not np.any(p):
        raise InvalidArgument("anomaly needs a nonzero matrix")
    if samples < 1:
        raise InvalidArgument("samples must be >= 1")
    x = sample_std_gaussian_vector(p.shape[1], rng, size=samples)
    px = x @ p.T
    fro2 = np.sum(np.abs(p) ** 2)
    with np.errstate(divide="ignore"):
        return fro2 / np.sum(np.abs(px) ** 2, axis=1)


def anomaly_mc(p, samples: int, rng, return_stderr=False):
    """Monte-Carlo estimate of the anomaly E[||P||_F^2 / ||P x||^2].

    Warns when P is numerically of rank one (the anomaly is infinite) or when
    some sample exceeds 1e3, a symptom of near rank-one P.
    """
    p = np.asarray(p, dtype=complex)
    vals = anomaly_samples(p, samples, rng)
    sv = np.linalg.svd(p, compute_uv=False)
    if sv.size < 2 or sv[1] <= 1e-12 * sv[0]:
        warnings.warn("matrix has rank one: the anomaly is infinite", RuntimeWarning,
                      stacklevel=2)
    elif np.max(vals) > ANOMALY_WARN:
        warnings.warn(
            f"anomaly estimator unstable: sample maximum {np.max(vals):.3g} exceeds {ANOMALY_WARN:g}",
            RuntimeWarning, stacklevel=2,
        )
    mean = float(np.mean(vals))
    if return_stderr:
        se = float(np.std(vals, ddof=1) / math.sqrt(samples)) if samples > 1 else math.inf
        return mean, se
    return mean


def anomaly_exact(p) -> float:
    """Anomaly by quadrature: ||P||_F^2 * int_0^inf prod_i (1 + s sigma_i^2)^-1 ds."""
    sv = np.linalg.svd(np.asarray(p, dtype=complex), compute_uv=False)
    sv = sv[sv > 1e-14 * sv[0]]
    if sv.size < 2:
        return math.inf
    s2 = sv**2

    def integrand(s):
        return float(np.prod(1.0 / (1.0 + s * s2)))

    val, _ = integrate.quad(integrand, 0, np.inf, epsabs=0, epsrel=1e-12, limit=200)
    return float(np.sum(s2) * val)
