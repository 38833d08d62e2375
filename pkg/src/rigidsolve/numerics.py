"""Complex linear algebra, random sampling and projective geometry helpers.

All samplers take an explicit random source (a :class:`RandomStream`, a
``numpy.random.Generator`` or an integer seed) and are deterministic given it.
Complex Gaussians follow the convention where real and imaginary parts are
independent centred normals of variance 1/2, so ``E|x|^2 = 1`` per entry.
"""

from __future__ import annotations

import math
import os

import numpy as np
import scipy.linalg

__all__ = [
    "RandomStream",
    "as_stream",
    "resolve_seed",
    "sample_std_gaussian_vector",
    "sample_std_gaussian_matrix",
    "sample_uniform_sphere",
    "sample_uniform_ball",
    "sample_haar_unitary",
    "sample_unitary_mapping",
    "unit_completion",
    "orth_complement",
    "normalize",
    "proj_distance",
    "smallest_singular",
    "unitary_log_geodesic",
    "is_unitary",
    "InvalidArgument",
    "NumericFailure",
    "SingularPoint",
    "ResourceError",
    "HardFailure",
]


class InvalidArgument(ValueError):
    """Argument outside an operation's domain."""


class NumericFailure(ArithmeticError):
    """Non-finite value or non-convergence in a numerical routine."""

    def __init__(self, msg, point=None):
        super().__init__(msg)
        self.point = point


class SingularPoint(NumericFailure):
    """A gradient or restricted Jacobian vanishes where it must not."""


class ResourceError(RuntimeError):
    """A configured size cap would be exceeded."""


class HardFailure(RuntimeError):
    """An iteration ceiling was hit (the algorithm would not terminate)."""

#: Phase nudge applied to v^{-1}u when an eigenvalue sits exactly on the branch cut.
PHASE_ROUNDOFF = 64 * np.finfo(float).eps
BRANCH_CUT_NUDGE = 1e-12


class RandomStream:
    """Seeded, keyed random stream.

    A stream is identified by a 64-bit ``seed`` and a tuple ``key``. Child
    streams are derived with :meth:`child`, so independent parts of an
    algorithm can draw from disjoint, reproducible sub-streams regardless of
    the order in which they run.

    Generator methods (``standard_normal``, ``random``, ``integers``...) are
    forwarded to the underlying :class:`numpy.random.Generator`.
    """

    def __init__(self, seed: int, key: tuple = ()):
        self.seed = int(seed) % (1 << 64)
        self.key = tuple(int(k) for k in key)
        ss = np.random.SeedSequence(self.seed, spawn_key=self.key)
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def child(self, *key: int) -> "RandomStream":
        return RandomStream(self.seed, self.key + tuple(key))

    def __getattr__(self, name):
        return getattr(self.generator, name)

    def __repr__(self):
        return f"RandomStream(seed={self.seed}, key={self.key})"


def resolve_seed(seed=None) -> int:
    """Return ``seed`` if given, else ``$RIGIDSOLVE_SEED``, else a fresh random seed."""
    if seed is not None:
        return int(seed) % (1 << 64)
    env = os.environ.get("RIGIDSOLVE_SEED")
    if env:
        return int(env) % (1 << 64)
    return int(np.random.SeedSequence().generate_state(1, np.uint64)[0])


def as_stream(rng=None) -> RandomStream:
    """Coerce ``rng`` (stream, generator, int or None) to a :class:`RandomStream`."""
    if isinstance(rng, RandomStream):
        return rng
    if isinstance(rng, np.random.Generator):
        return RandomStream(int(rng.integers(0, 2**63)))
    return RandomStream(resolve_seed(rng))


def _gen(rng):
    if isinstance(rng, RandomStream):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    return as_stream(rng).generator


def _check_dim(dim):
    if int(dim) < 1:
        raise InvalidArgument(f"dimension must be >= 1, got {dim}")
    return int(dim)


def sample_std_gaussian_vector(dim, rng, size=None) -> np.ndarray:
    """Complex standard Gaussian vector(s) of length ``dim``.

    With ``size`` given, returns an array of shape ``(*size, dim)``.
    """
    dim = _check_dim(dim)
    g = _gen(rng)
    shape = (dim,) if size is None else tuple(np.atleast_1d(size)) + (dim,)
    return (g.standard_normal(shape) + 1j * g.standard_normal(shape)) / math.sqrt(2.0)


def sample_std_gaussian_matrix(rows, cols, rng, size=None) -> np.ndarray:
    """Complex standard Gaussian (Ginibre) matrix, entries with ``E|x|^2 = 1``."""
    g = _gen(rng)
    shape = (rows, cols) if size is None else tuple(np.atleast_1d(size)) + (rows, cols)
    return (g.standard_normal(shape) + 1j * g.standard_normal(shape)) / math.sqrt(2.0)


def sample_uniform_sphere(dim, rng, size=None) -> np.ndarray:
    """Uniform point(s) on the unit sphere of C^dim."""
    x = sample_std_gaussian_vector(dim, rng, size)
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def sample_uniform_ball(dim, rng, size=None) -> np.ndarray:
    """Uniform point(s) in the unit ball of C^dim (real dimension 2*dim)."""
    dim = _check_dim(dim)
    g = _gen(rng)
    x = sample_uniform_sphere(dim, g, size)
    r_shape = x.shape[:-1] + (1,)
    radius = g.random(r_shape) ** (1.0 / (2 * dim))
    return x * radius


def sample_haar_unitary(m, rng) -> np.ndarray:
    """Haar-distributed unitary matrix of size ``m`` (QR with phase-fixed R)."""
    m = _check_dim(m)
    z = sample_std_gaussian_matrix(m, m, rng)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    ph = d / np.abs(d)
    return q * ph[np.newaxis, :]


def normalize(z) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    nrm = np.linalg.norm(z)
    if nrm == 0 or not np.isfinite(nrm):
        raise InvalidArgument("cannot normalize a zero or non-finite vector")
    return z / nrm


def unit_completion(x) -> np.ndarray:
    """Unitary matrix whose first column is the unit vector ``x``."""
    x = normalize(x)
    m = x.shape[0]
    # Householder reflection sending e_0 to x (up to the phase of x_0).
    phase = x[0] / abs(x[0]) if x[0] != 0 else 1.0
    e0 = np.zeros(m, dtype=complex)
    e0[0] = 1.0
    v = x - phase * e0
    nv = np.linalg.norm(v)
    if nv < 1e-300:
        h = np.eye(m, dtype=complex)
    else:
        v = v / nv
        h = np.eye(m, dtype=complex) - 2.0 * np.outer(v, v.conj())
    # h e_0 = -phase * ... ; fix the sign so the first column equals x exactly.
    h = h * (-1.0)
    col = h[:, 0]
    c = np.vdot(col, x)
    h[:, 0] = col * (c / abs(c))
    return h


def orth_complement(z) -> np.ndarray:
    """Orthonormal basis (as columns) of the Hermitian complement of ``z``."""
    return unit_completion(z)[:, 1:]


def sample_unitary_mapping(source, target, rng) -> np.ndarray:
    """Uniform unitary among those sending the projective point ``source`` to ``target``.

    The result is a fixed transporter composed with a Haar-random element of
    the stabilizer of ``[source]`` in U(m) (a U(1) x U(m-1) subgroup).
    """
    s = normalize(source)
    t = normalize(target)
    if s.shape != t.shape:
        raise InvalidArgument(f"dimension mismatch: {s.shape} vs {t.shape}")
    m = s.shape[0]
    g = _gen(rng)
    qs = unit_completion(s)
    qt = unit_completion(t)
    stab = np.zeros((m, m), dtype=complex)
    stab[0, 0] = np.exp(2j * np.pi * g.random())
    if m > 1:
        stab[1:, 1:] = sample_haar_unitary(m - 1, g)
    return qt @ stab @ qs.conj().T


def proj_distance(z, w) -> float:
    """Angle in [0, pi/2] between the complex lines through ``z`` and ``w``."""
    z = normalize(z)
    w = normalize(w)
    if z.shape != w.shape:
        raise InvalidArgument("dimension mismatch")
    p = np.vdot(z, w)
    perp = w - p * z
    return float(math.atan2(np.linalg.norm(perp), abs(p)))


def smallest_singular(m) -> float:
    """Smallest of the min(rows, cols) singular values of ``m``."""
    m = np.asarray(m, dtype=complex)
    if not np.all(np.isfinite(m)):
        raise InvalidArgument("matrix has non-finite entries")
    return float(np.linalg.svd(m, compute_uv=False)[-1])


def is_unitary(u, tol=1e-12) -> bool:
    u = np.asarray(u)
    m = u.shape[-1]
    err = np.linalg.norm(u.conj().T @ u - np.eye(m))
    return bool(err <= tol * m)


def _unitary_eig(w):
    """Eigen-decomposition ``w = Z diag(lam) Z^*`` of a unitary matrix."""
    t, z = scipy.linalg.schur(w, output="complex")
    return np.diagonal(t).copy(), z


def unitary_log_geodesic(v, u):
    """Principal logarithm of ``v^{-1} u``.

    Returns ``(generator, length, eigvecs, phases)`` where ``generator`` is
    skew-Hermitian with eigenvalues ``i*phase``, phases in (-pi, pi], and
    ``length`` is its Frobenius norm. ``v @ expm(s * generator)`` for
    s in [0, 1] is a constant-speed geodesic from ``v`` to ``u``.
    """
    v = np.asarray(v, dtype=complex)
    u = np.asarray(u, dtype=complex)
    if v.shape != u.shape or v.shape[0] != v.shape[1]:
        raise InvalidArgument("v and u must be square matrices of the same size")
    w = v.conj().T @ u
    lam, z = _unitary_eig(w)
    phases = np.angle(lam)
    if np.any(np.isclose(np.abs(phases), np.pi, rtol=0, atol=1e-15)):
        lam, z = _unitary_eig(w * np.exp(1j * BRANCH_CUT_NUDGE))
        phases = np.angle(lam) - BRANCH_CUT_NUDGE
    # phases at roundoff level come from v^{-1} u = I up to rounding
    phases[np.abs(phases) <= PHASE_ROUNDOFF] = 0.0
    gen = (z * (1j * phases)[np.newaxis, :]) @ z.conj().T
    length = float(np.linalg.norm(phases))
    return gen, length, z, phases
