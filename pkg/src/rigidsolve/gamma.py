"""Randomized gamma_Frob estimation, incidence condition number and averaged gamma.

``gamma_prob`` upper-bounds gamma_Frob(f, z) from black-box evaluations only:
it averages |h_k(w)|^2 over points w uniform in the unit ball, where h_k is
the degree-k component of h = f(z + .), and rescales by constants that turn
the average into an over-estimate with high probability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .blackbox import BlackBoxPoly, bb_gradient, bb_hom_components, shift
from .numerics import (
    InvalidArgument,
    SingularPoint,
    as_stream,
    normalize,
    orth_complement,
    sample_uniform_ball,
)

__all__ = [
    "GammaEstimate",
    "ConditionReport",
    "BigGammaResult",
    "sample_count",
    "gamma_prob",
    "kappa",
    "split_gamma_frob",
    "big_gamma_mc",
    "gamma_frob_at_zeros",
]


SINGULAR_RTOL = 1e-14
# Multiple roots are located only to about sqrt(machine eps), so a zero whose
# gradient is below 1e-7 ||f||_W is treated as singular.
ZERO_GRAD_RTOL = 1e-14


def _log_binom(a: int, b: int) -> float:
    return float(gammaln(a + 1) - gammaln(b + 1) - gammaln(a - b + 1))


def sample_count(degree: int, eps: float) -> int:
    """s = ceil(1 + log2(d / eps))."""
    return int(math.ceil(1.0 + math.log2(degree / eps)))


@dataclass
class GammaEstimate:
    value: float
    s: int
    eps: float
    mu2_hat: dict = field(default_factory=dict)
    c2: dict = field(default_factory=dict)
    eval_cost: int = 0
    grad: np.ndarray | None = None
    f_value: complex = 0j

    @property
    def grad_norm(self) -> float:
        return float(np.linalg.norm(self.grad)) if self.grad is not None else 0.0

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "s": self.s,
            "eps": self.eps,
            "mu2_hat": {str(k): v for k, v in self.mu2_hat.items()},
            "c2": {str(k): v for k, v in self.c2.items()},
            "eval_cost": self.eval_cost,
            "grad_norm": self.grad_norm,
        }


def gamma_prob(f: BlackBoxPoly, z, eps: float, rng) -> GammaEstimate:
    """Probabilistic upper estimate of gamma_Frob(f, z).

    With s = ceil(1 + log2(d/eps)) points w_i uniform in the unit ball and
    mu2_k = mean_i |h_k(w_i)|^2, returns

        max_{2<=k<=d} ((32 n k)^k ||d_0 h||^-2 C(n+1+k, k) mu2_k)^(1/(2k-2)).

    Costs exactly s(d+1) + (n+1)(d+1) evaluations of ``f``. For d < 2 the
    value is 0 and only the gradient is evaluated.
    """
    if not 0.0 < eps < 1.0:
        raise InvalidArgument(f"eps must lie in (0, 1), got {eps}")
    z = normalize(z)
    if z.shape != (f.n + 1,):
        raise InvalidArgument("point dimension mismatch")
    n, d = f.n, f.degree
    start = f.evals
    h = shift(f, z)
    grad, fval = bb_gradient(h, np.zeros(n + 1, dtype=complex), return_value=True)
    g2 = float(np.sum(np.abs(grad) ** 2))
    if g2 == 0.0:
        raise SingularPoint("gradient vanishes at z", point=z)
    if d < 2:
        return GammaEstimate(0.0, 0, eps, eval_cost=f.evals - start, grad=grad, f_value=fval)
    s = sample_count(d, eps)
    w = sample_uniform_ball(n + 1, as_stream(rng), size=s)
    comps = bb_hom_components(h, w)  # (d+1, s)
    mu2 = np.mean(np.abs(comps) ** 2, axis=1)
    best = 0.0
    mu2_hat, c2 = {}, {}
    log_g2 = math.log(g2)
    for k in range(2, d + 1):
        m = float(mu2[k])
        mu2_hat[k] = m
        if m <= 0.0:
            # all samples hit zeros of h_k: the term contributes 0
            c2[k] = 0.0
            continue
        log_c = k * math.log(32.0 * n * k) - log_g2 + _log_binom(n + 1 + k, k) + math.log(m)
        c2[k] = math.exp(log_c)
        best = max(best, math.exp(log_c / (2 * k - 2)))
    return GammaEstimate(best, s, eps, mu2_hat, c2, f.evals - start, grad, fval)


@dataclass
class ConditionReport:
    kappa: float
    sigma_min: float
    grad_norms: np.ndarray

    def to_dict(self) -> dict:
        return {
            "kappa": self.kappa,
            "sigma_min": self.sigma_min,
            "grad_norms": [float(x) for x in self.grad_norms],
        }


def kappa(F, z, grads=None) -> ConditionReport:
    """Incidence condition number: 1 / sigma_min of the gradient-normalized
    Jacobian restricted to the Hermitian complement of z.

    ``grads`` (n x (n+1)) may carry precomputed gradients at the unit
    representative of ``z``; otherwise they are evaluated through ``F``.
    """
    z = normalize(z)
    if grads is None:
        grads = F.jacobian(z)
    grads = np.asarray(grads, dtype=complex)
    norms = np.linalg.norm(grads, axis=1)
    if np.any(norms == 0.0):
        raise SingularPoint("some component gradient vanishes", point=z)
    m = (grads / norms[:, None]) @ orth_complement(z)
    sv = np.linalg.svd(m, compute_uv=False)
    smin = float(sv[-1]) if sv.size else 0.0
    # rank deficiency up to roundoff counts as singular
    k = math.inf if smin <= SINGULAR_RTOL * max(float(sv[0]), 1.0) else 1.0 / smin
    return ConditionReport(k, smin, norms)


def split_gamma_frob(F, z, per_poly_gammas, grads=None) -> float:
    """kappa(F, z) times the l2 norm of the per-polynomial gammas."""
    g = np.asarray(per_poly_gammas, dtype=float)
    if F is not None and g.shape != (len(F),):
        raise InvalidArgument("need one gamma per polynomial")
    gn = float(np.linalg.norm(g))
    if gn == 0.0:
        return 0.0
    return kappa(F, z, grads).kappa * gn


def _dense_oracle(f):
    from .abp import ABP, abp_to_dense
    from .poly import DensePoly

    if isinstance(f, DensePoly):
        return f
    if isinstance(f, ABP):
        return abp_to_dense(f)
    if isinstance(f, BlackBoxPoly) and f.source is not None:
        return _dense_oracle(f.source)
    raise InvalidArgument("averaged gamma needs a dense or ABP representation")


def gamma_frob_at_zeros(f, count: int, rng):
    """gamma_Frob^2 and per-degree ratios ||g_k||_W^2 / ||d f||^2 at uniform zeros.

    Returns ``(gamma2, ratios, singular)`` where ``gamma2`` has one entry per
    regular sampled zero, ``ratios`` has shape (len(gamma2), d-1) for k=2..d,
    and ``singular`` counts zeros with vanishing gradient (excluded).
    """
    from .poly import sample_uniform_zero, taylor_shift, weyl_norm_sq

    dense = _dense_oracle(f)
    rng = as_stream(rng)
    d = dense.degree
    g2, ratios, singular = [], [], 0
    for i in range(count):
        zeta = sample_uniform_zero(dense, rng.child(i))
        comps = taylor_shift(dense, zeta)
        gn2 = weyl_norm_sq(comps[1])
        if gn2 <= ZERO_GRAD_RTOL * max(weyl_norm_sq(dense), 1e-300):
            singular += 1
            continue
        r = np.array([weyl_norm_sq(comps[k]) / gn2 for k in range(2, d + 1)])
        ks = np.arange(2, d + 1)
        g2.append(float(np.max(r ** (1.0 / (ks - 1)))) if r.size else 0.0)
        ratios.append(r)
    return np.array(g2), np.array(ratios).reshape(len(g2), max(d - 1, 0)), singular


@dataclass
class BigGammaResult:
    value: float
    stderr: float
    mean_sq: float
    stderr_sq: float
    samples: int
    singular_count: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def big_gamma_mc(f, zero_samples: int, rng) -> BigGammaResult:
    """Monte-Carlo averaged gamma: (E_zeta gamma_Frob(f, zeta)^2)^(1/2).

    The expectation is over uniform zeros of ``f``; ``f`` is a DensePoly, an
    ABP, or a black-box handle carrying one of these as its source. Zeros with
    vanishing gradient are excluded and counted in ``singular_count``.
    """
    dense = _dense_oracle(f)
    if dense.degree < 2:
        raise InvalidArgument("averaged gamma needs degree >= 2")
    g2, _, singular = gamma_frob_at_zeros(dense, zero_samples, rng)
    m = g2.size
    mean_sq = float(np.mean(g2)) if m else math.inf
    se_sq = float(np.std(g2, ddof=1) / math.sqrt(m)) if m > 1 else math.inf
    value = math.sqrt(mean_sq)
    se = se_sq / (2 * value) if value > 0 else math.inf
    return BigGammaResult(value, se, mean_sq, se_sq, m, singular)
