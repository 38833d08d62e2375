"""Rigid-path continuation for black-box polynomial systems.

A system F = (f_1, ..., f_n) is moved by a tuple of unitaries w = (w_1..w_n)
acting as (w.F)_i(z) = f_i(w_i^* z). Starting from a pair (v, zeta) where
zeta is a known zero of v.F, the zero is tracked along a geodesic from v to
the target u. Step lengths come from randomized gamma estimates and the
incidence condition number, so only evaluations of F are ever used.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .blackbox import BlackBoxSystem, bb_gradient, bb_unitary_action
from .gamma import gamma_prob, kappa
from .numerics import (
    HardFailure,
    InvalidArgument,
    NumericFailure,
    SingularPoint,
    as_stream,
    normalize,
    orth_complement,
    proj_distance,
    sample_uniform_sphere,
    sample_unitary_mapping,
    unitary_log_geodesic,
)
from .poly import sample_uniform_zero

__all__ = [
    "FAIL",
    "STEP_CONSTANT",
    "DEFAULT_ALPHA0",
    "RigidPath",
    "StageRecord",
    "SolveReport",
    "identity_tuple",
    "build_path",
    "newton_proj",
    "beta",
    "sample_rigid_pair",
    "bounded_bb_nc",
    "bb_nc",
    "bb_solve",
    "boost_steps",
    "boost",
    "boost_bb_solve",
    "solve_report",
    "verify_approximate_zero",
]

FAIL = None
STEP_CONSTANT = 240.0
DEFAULT_ALPHA0 = 0.03
DEFAULT_MAX_KMAX = 2**24
DEFAULT_MAX_ATTEMPTS = 64


def identity_tuple(n: int) -> np.ndarray:
    return np.broadcast_to(np.eye(n + 1, dtype=complex), (n, n + 1, n + 1)).copy()


class RigidPath:
    """Product geodesic t -> (v_i exp((t/T) Lambda_i))_i on [0, T].

    T is the l2 aggregate of the per-factor Frobenius lengths, so the path
    has unit speed in the product metric.
    """

    def __init__(self, v, u):
        v = np.asarray(v, dtype=complex)
        u = np.asarray(u, dtype=complex)
        if v.shape != u.shape or v.ndim != 3 or v.shape[1] != v.shape[2]:
            raise InvalidArgument("v and u must be tuples of equal-size square matrices")
        self.v = v
        self.u = u
        gens, lengths, vecs, phases = [], [], [], []
        for vi, ui in zip(v, u):
            g, ell, zv, ph = unitary_log_geodesic(vi, ui)
            gens.append(g)
            lengths.append(ell)
            vecs.append(zv)
            phases.append(ph)
        self.generators = np.array(gens)
        self.lengths = np.array(lengths)
        self._vecs = np.array(vecs)
        self._vecs_h = np.conj(np.swapaxes(self._vecs, 1, 2))
        self._phases = np.array(phases)
        self._v_vecs = v @ self._vecs
        self.T = float(np.sqrt(np.sum(self.lengths**2)))

    def at(self, t: float) -> np.ndarray:
        if self.T == 0.0:
            return self.v.copy()
        s = min(max(t, 0.0), self.T) / self.T
        d = np.exp(1j * s * self._phases)
        return (self._v_vecs * d[:, None, :]) @ self._vecs_h


def build_path(v, u) -> RigidPath:
    return RigidPath(v, u)


def _newton_direction(F, z, jac=None, values=None):
    """Solve (J Q) y = F(z) in the chart z^perp; returns (Q, y)."""
    if jac is None or values is None:
        jac, values = F.jacobian(z, return_value=True)
    q = orth_complement(z)
    a = jac @ q
    sv = np.linalg.svd(a, compute_uv=False)
    if sv[-1] <= 1e-14 * max(sv[0], 1e-300) or not np.all(np.isfinite(sv)):
        raise SingularPoint("restricted Jacobian is singular", point=z)
    y = np.linalg.solve(a, values)
    return q, y


def newton_proj(F, z, jac=None, values=None) -> np.ndarray:
    """One projective Newton step z -> normalize(z - Q y)."""
    z = normalize(z)
    q, y = _newton_direction(F, z, jac, values)
    return normalize(z - q @ y)


def beta(F, z) -> float:
    """Projective distance from z to its Newton image.

    Since Q y is orthogonal to z this equals atan(||y||), which avoids the
    cancellation of comparing two nearly equal unit vectors.
    """
    z = normalize(z)
    _, y = _newton_direction(F, z)
    return float(math.atan(np.linalg.norm(y)))


def _refine_on_hypersurface(f, z, steps=2):
    for _ in range(steps):
        gr, val = bb_gradient(f, z, return_value=True)
        gg = float(np.vdot(gr, gr).real)
        if gg == 0.0 or val == 0:
            break
        z = normalize(z - val * gr.conj() / gg)
    return z


def _restricted_normalized_jacobian(grads, z) -> np.ndarray:
    grads = np.asarray(grads, dtype=complex)
    norms = np.linalg.norm(grads, axis=1)
    if np.any(norms == 0.0):
        raise SingularPoint("some component gradient vanishes", point=z)
    return (grads / norms[:, None]) @ orth_complement(z)


def sample_rigid_pair(F: BlackBoxSystem, rng, max_tries: int = 10000, return_tries=False):
    """Uniform v in U(n+1)^n together with a uniform zero zeta of v.F.

    Proposal: zeta uniform on P^n; for each i a uniform zero xi_i of f_i
    (through a random line) and a uniform unitary v_i sending xi_i to zeta.
    This proposal is the natural measure on the incidence variety; relative
    to the target law its density carries a factor 1/|det M|^2, where M is
    the n x n gradient-normalized Jacobian of v.F restricted to zeta^perp.
    The proposal is therefore accepted with probability |det M|^2 (at most
    1 since M has unit rows). Only evaluations of F are used.
    """
    rng = as_stream(rng)
    n = F.n
    for attempt in range(max_tries):
        r = rng.child(attempt)
        zeta = sample_uniform_sphere(n + 1, r.child(0))
        vs = []
        for i, f in enumerate(F.polys):
            xi = sample_uniform_zero(f, r.child(1, i), refine=False)
            xi = _refine_on_hypersurface(f, xi)
            vs.append(sample_unitary_mapping(xi, zeta, r.child(2, i)))
        v = np.array(vs)
        m = _restricted_normalized_jacobian(bb_unitary_action(v, F).jacobian(zeta), zeta)
        accept = abs(np.linalg.det(m)) ** 2
        if r.child(3).random() < accept:
            if return_tries:
                return v, zeta, attempt + 1
            return v, zeta
    raise HardFailure(f"rigid pair sampling rejected {max_tries} proposals")


@dataclass
class StageRecord:
    kmax: int
    steps: int
    success: bool
    evals: int
    reason: str = ""

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def bounded_bb_nc(F: BlackBoxSystem, u, v, z, kmax: int, eps: float, rng,
                  eta: float | None = None, path: RigidPath | None = None,
                  record: list | None = None, step_constant: float = STEP_CONSTANT,
                  deadline: float | None = None):
    """Continuation with at most ``kmax`` steps; returns a point or FAIL (None).

    Each step estimates gamma for every component of w(t).F at z with failure
    probability eta = eps/(n kmax), advances t by
    1 / (240 kappa(w(t).F, z)^2 ||(g_i)||), stops once t reaches T, and
    otherwise applies one Newton step for w(t).F at the new t.
    Random draws are consumed from ``rng`` in the fixed order (step, component).
    ``eta`` may be overridden (testing hook); ``record`` receives a StageRecord.
    ``step_constant`` replaces the constant 240 (diagnostic use only: smaller
    values void the approximate-zero guarantee). Passing the wall-clock
    ``deadline`` (``time.monotonic()`` value) raises HardFailure.
    """
    if kmax < 1:
        raise InvalidArgument("kmax must be >= 1")
    if not 0.0 < eps < 1.0:
        raise InvalidArgument("eps must lie in (0, 1)")
    rng = as_stream(rng)
    n = F.n
    eta = eps / (n * kmax) if eta is None else eta
    path = build_path(v, u) if path is None else path
    z = normalize(z)
    start = F.evals
    t = 0.0
    steps = 0

    def done(ok, reason=""):
        if record is not None:
            record.append(StageRecord(kmax, steps, ok, F.evals - start, reason))
        return z if ok else FAIL

    for k in range(1, kmax + 1):
        steps = k
        if deadline is not None and k % 64 == 0 and time.monotonic() > deadline:
            done(False, "deadline")
            raise HardFailure("wall-clock deadline passed during continuation")
        G = bb_unitary_action(path.at(t), F)
        ests = [gamma_prob(G[i], z, eta, rng) for i in range(n)]
        grads = np.array([e.grad for e in ests])
        kap = kappa(G, z, grads).kappa
        if not math.isfinite(kap):
            return done(False, "kappa infinite")
        gnorm = math.sqrt(sum(e.value**2 for e in ests))
        if gnorm == 0.0:
            t = math.inf
        else:
            t += 1.0 / (step_constant * kap**2 * gnorm)
        if t >= path.T:
            return done(True)
        try:
            z = newton_proj(bb_unitary_action(path.at(t), F), z)
        except (SingularPoint, NumericFailure):
            return done(False, "newton step failed")
    return done(False, "step budget exhausted")


def bb_nc(F: BlackBoxSystem, u, v, z, eps: float, rng, max_kmax: int = DEFAULT_MAX_KMAX,
          record: list | None = None, step_constant: float = STEP_CONSTANT,
          deadline: float | None = None):
    """Doubling driver: kmax = 2, 4, 8, ... until a bounded run succeeds."""
    if not 0.0 < eps <= 0.25:
        raise InvalidArgument("eps must lie in (0, 1/4]")
    rng = as_stream(rng)
    path = build_path(v, u)
    kmax = 1
    stage = 0
    while True:
        kmax *= 2
        if kmax > max_kmax:
            raise HardFailure(f"continuation did not finish within kmax <= {max_kmax}")
        w = bounded_bb_nc(F, u, v, z, kmax, eps, rng.child(stage), path=path, record=record,
                          step_constant=step_constant, deadline=deadline)
        stage += 1
        if w is not FAIL:
            return w


def bb_solve(F: BlackBoxSystem, eps: float, rng, max_kmax: int = DEFAULT_MAX_KMAX,
             record: list | None = None, step_constant: float = STEP_CONSTANT,
             deadline: float | None = None):
    """Sample a rigid pair (v, zeta) and continue from v to the identity."""
    if not F.is_square():
        raise InvalidArgument("system must have n polynomials in n+1 variables")
    rng = as_stream(rng)
    v, zeta = sample_rigid_pair(F, rng.child(0))
    return bb_nc(F, identity_tuple(F.n), v, zeta, eps, rng.child(1), max_kmax=max_kmax,
                 record=record, step_constant=step_constant, deadline=deadline)


def boost_steps(n: int, degree: int, eps: float, alpha0: float = DEFAULT_ALPHA0) -> int:
    """k = ceil(max(1 + log2 log2(20 n^2 d / alpha0), 1 + log2 log2(1/eps)))."""
    a = 1.0 + math.log2(math.log2(20.0 * n * n * degree / alpha0))
    b = 1.0 + math.log2(math.log2(1.0 / eps))
    return int(math.ceil(max(a, b)))


@dataclass
class BoostInfo:
    success: bool
    k: int
    beta: float = math.nan
    c: float = math.nan
    log2_test: float = math.nan
    reason: str = ""

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def boost(F: BlackBoxSystem, w, eps: float, rng, alpha0: float = DEFAULT_ALPHA0,
          info: list | None = None):
    """Refine w by k Newton steps and accept it when 2^(2^(k-1)) beta c <= alpha0.

    c = kappa(F, z) * ||(gamma_prob(f_i, z, 1/(4n)))_i||. Returns the refined
    point or FAIL (None). The test is evaluated in the log2 domain.
    """
    if not 0.0 < eps < 0.5:
        raise InvalidArgument("eps must lie in (0, 1/2)")
    rng = as_stream(rng)
    n = F.n
    k = boost_steps(n, F.max_degree, eps, alpha0)

    def out(ok, z, **kw):
        if info is not None:
            info.append(BoostInfo(ok, k, **kw))
        return z if ok else FAIL

    z = normalize(w)
    try:
        for _ in range(k):
            z = newton_proj(F, z)
        b = beta(F, z)
        ests = [gamma_prob(F[i], z, 1.0 / (4 * n), rng.child(i)) for i in range(n)]
    except (SingularPoint, NumericFailure) as exc:
        return out(False, None, reason=str(exc))
    gnorm = math.sqrt(sum(e.value**2 for e in ests))
    kap = kappa(F, z, np.array([e.grad for e in ests])).kappa
    c = kap * gnorm
    if b == 0.0 or c == 0.0:
        return out(True, z, beta=b, c=c, log2_test=-math.inf)
    if not math.isfinite(c):
        return out(False, None, beta=b, c=c, reason="kappa infinite")
    lhs = 2.0 ** (k - 1) + math.log2(b) + math.log2(c)
    ok = lhs <= math.log2(alpha0)
    return out(ok, z, beta=b, c=c, log2_test=lhs)


@dataclass
class SolveReport:
    result: np.ndarray | None
    success: bool
    steps: int
    evals: int
    attempts: int
    seed: int | None
    eps: float
    stages: list = field(default_factory=list)
    boosts: list = field(default_factory=list)
    wall_time: float = 0.0
    error: str = ""

    @property
    def kmax_schedule(self) -> list:
        return [s.kmax for s in self.stages]

    def to_dict(self, include_time=False) -> dict:
        d = {
            "result": "FAIL" if self.result is None
            else [[float(x.real), float(x.imag)] for x in self.result],
            "success": self.success,
            "steps": self.steps,
            "evals": self.evals,
            "attempts": self.attempts,
            "kmax_schedule": self.kmax_schedule,
            "stages": [s.to_dict() for s in self.stages],
            "boosts": [b.to_dict() for b in self.boosts],
            "eps": self.eps,
            "seed": self.seed,
        }
        if self.error:
            d["error"] = self.error
        if include_time:
            d["wall_time"] = self.wall_time
        return d

    def to_json(self, include_time=False) -> str:
        return json.dumps(self.to_dict(include_time), sort_keys=True)


def boost_bb_solve(F: BlackBoxSystem, eps: float, rng, alpha0: float = DEFAULT_ALPHA0,
                   max_attempts: int = DEFAULT_MAX_ATTEMPTS,
                   max_kmax: int = DEFAULT_MAX_KMAX, report: bool = False,
                   step_constant: float = STEP_CONSTANT, deadline: float | None = None):
    """Repeat (bb_solve at eps=1/4, then boost at eps) until boost accepts.

    Returns the point, or a :class:`SolveReport` when ``report`` is True.
    Raises HardFailure after ``max_attempts`` rejected attempts, or when the
    wall-clock ``deadline`` (a ``time.monotonic()`` value) passes.
    """
    rng = as_stream(rng)
    t0 = time.perf_counter()
    start = F.evals
    stages: list = []
    boosts: list = []
    z = FAIL
    attempt = 0
    error = ""
    try:
        for attempt in range(1, max_attempts + 1):
            w = bb_solve(F, 0.25, rng.child(attempt, 0), max_kmax=max_kmax, record=stages,
                         step_constant=step_constant, deadline=deadline)
            z = boost(F, w, eps, rng.child(attempt, 1), alpha0=alpha0, info=boosts)
            if z is not FAIL:
                break
        else:
            raise HardFailure(f"no boosted zero after {max_attempts} attempts")
    except HardFailure as exc:
        if not report:
            raise
        error = str(exc)
        z = FAIL
    if not report:
        return z
    return SolveReport(
        result=z,
        success=z is not FAIL,
        steps=sum(s.steps for s in stages),
        evals=F.evals - start,
        attempts=attempt,
        seed=rng.seed,
        eps=eps,
        stages=stages,
        boosts=boosts,
        wall_time=time.perf_counter() - t0,
        error=error,
    )


def solve_report(F, eps, rng, **kw) -> SolveReport:
    return boost_bb_solve(F, eps, rng, report=True, **kw)


def verify_approximate_zero(F, z, newton_steps: int = 5, residual_tol: float = 1e-12,
                            floor: float = 1e-13) -> dict:
    """Newton-based check that z behaves as an approximate zero of F.

    Runs ``newton_steps`` Newton steps; requires the gradient-normalized
    residual max_i |f_i| / ||d f_i|| at the final point to be at most
    ``residual_tol``, and the distances d_k = d(N^k z, N^K z) to satisfy
    d_k <= 2^(1 - 2^k) d_0 + floor.
    """
    pts = [normalize(z)]
    try:
        for _ in range(newton_steps):
            pts.append(newton_proj(F, pts[-1]))
    except (SingularPoint, NumericFailure) as exc:
        return {"ok": False, "reason": str(exc)}
    last = pts[-1]
    jac, vals = F.jacobian(last, return_value=True)
    res = float(np.max(np.abs(vals) / np.linalg.norm(jac, axis=1)))
    d = [proj_distance(p, last) for p in pts[:-1]]
    contraction = all(d[k] <= 2.0 ** (1 - 2**k) * d[0] + floor for k in range(len(d)))
    return {
        "ok": bool(res <= residual_tol and contraction),
        "residual": res,
        "distances": d,
        "contraction": contraction,
    }
