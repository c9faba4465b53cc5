"""Microscopic potential families U(q) on the 2D configuration space.

Three families are supported: a quadratic spring well, the finitely
extensible nonlinear elastic (FENE) dumbbell, and a two-well potential.
Each provides the analytic potential, gradient, Hessian, the list of
strict local minima, and, where the gradient is radial, the scalar
structure factor Psi with grad U = Psi(q) q.
"""

from dataclasses import dataclass, field

import numpy as np

# FENE evaluation closer to the extension limit than this margin is out of
# domain: the log diverges and the Gibbs weight is zero to double precision.
FENE_MARGIN = 1e-12


class DomainError(ValueError):
    """Configuration vector outside the potential's domain."""


class StructureError(ValueError):
    """Requested radial structure is not available for this family."""


@dataclass(frozen=True)
class Quadratic:
    """U(q) = 0.5 (q - qstar)^T A^{-1} (q - qstar) with A symmetric positive definite."""

    A: np.ndarray
    qstar: np.ndarray = field(default=None)

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        if A.shape != (2, 2):
            raise ValueError("A must be a 2x2 matrix")
        if not np.allclose(A, A.T, rtol=0.0, atol=1e-12):
            raise ValueError("A must be symmetric")
        if np.any(np.linalg.eigvalsh(A) <= 0.0):
            raise ValueError("A must be positive definite")
        qstar = np.zeros(2) if self.qstar is None else np.array(self.qstar, dtype=float)
        if qstar.shape != (2,):
            raise ValueError("qstar must be a 2-vector")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "qstar", qstar)
        object.__setattr__(self, "_Ainv", np.linalg.inv(A))

    @property
    def Ainv(self):
        return self._Ainv


@dataclass(frozen=True)
class FENE:
    """U(q) = -(H Q0^2 / 2) log(1 - |q|^2/Q0^2) on the open disk |q| < Q0."""

    H: float
    Q0: float

    def __post_init__(self):
        if self.H <= 0.0 or self.Q0 <= 0.0:
            raise ValueError("H and Q0 must be positive")


@dataclass(frozen=True)
class DoubleWell:
    """U(q) = H1 (q1^2 - 1)^2 + H2 q2^2 with minima at (+-1, 0)."""

    H1: float
    H2: float

    def __post_init__(self):
        if self.H1 <= 0.0 or self.H2 <= 0.0:
            raise ValueError("H1 and H2 must be positive")


def _fene_s(spec, q):
    """|q|^2/Q0^2 with the near-boundary domain guard applied."""
    q = np.asarray(q, dtype=float)
    s = (q[..., 0] ** 2 + q[..., 1] ** 2) / spec.Q0**2
    if np.any(s >= (1.0 - FENE_MARGIN) ** 2):
        raise DomainError("FENE configuration at or beyond the extension limit")
    return s


def potential(spec, q):
    """Evaluate U(q). Vectorized over leading axes of q (shape (..., 2))."""
    q = np.asarray(q, dtype=float)
    if isinstance(spec, Quadratic):
        d = q - spec.qstar
        return 0.5 * np.einsum("...i,ij,...j->...", d, spec.Ainv, d)
    if isinstance(spec, FENE):
        s = _fene_s(spec, q)
        return -0.5 * spec.H * spec.Q0**2 * np.log1p(-s)
    if isinstance(spec, DoubleWell):
        return spec.H1 * (q[..., 0] ** 2 - 1.0) ** 2 + spec.H2 * q[..., 1] ** 2
    raise TypeError(f"unknown potential spec {type(spec).__name__}")


def gradient(spec, q):
    """Analytic grad U(q), shape (..., 2)."""
    q = np.asarray(q, dtype=float)
    if isinstance(spec, Quadratic):
        d = q - spec.qstar
        return np.einsum("ij,...j->...i", spec.Ainv, d)
    if isinstance(spec, FENE):
        s = _fene_s(spec, q)
        return spec.H * q / (1.0 - s)[..., None]
    if isinstance(spec, DoubleWell):
        g = np.empty_like(q)
        g[..., 0] = 4.0 * spec.H1 * q[..., 0] * (q[..., 0] ** 2 - 1.0)
        g[..., 1] = 2.0 * spec.H2 * q[..., 1]
        return g
    raise TypeError(f"unknown potential spec {type(spec).__name__}")


def hessian(spec, q):
    """Analytic Hessian of U, shape (..., 2, 2), symmetric."""
    q = np.asarray(q, dtype=float)
    shape = q.shape[:-1] + (2, 2)
    if isinstance(spec, Quadratic):
        return np.broadcast_to(spec.Ainv, shape).copy()
    if isinstance(spec, FENE):
        s = _fene_s(spec, q)
        one_minus = 1.0 - s
        h = np.zeros(shape)
        pref = spec.H / one_minus
        outer = 2.0 * spec.H / (spec.Q0**2 * one_minus**2)
        h[..., 0, 0] = pref + outer * q[..., 0] ** 2
        h[..., 1, 1] = pref + outer * q[..., 1] ** 2
        h[..., 0, 1] = outer * q[..., 0] * q[..., 1]
        h[..., 1, 0] = h[..., 0, 1]
        return h
    if isinstance(spec, DoubleWell):
        h = np.zeros(shape)
        h[..., 0, 0] = 4.0 * spec.H1 * (3.0 * q[..., 0] ** 2 - 1.0)
        h[..., 1, 1] = 2.0 * spec.H2
        return h
    raise TypeError(f"unknown potential spec {type(spec).__name__}")


def local_minima(spec):
    """All strict local minima as a list of (qstar, hessian) pairs."""
    if isinstance(spec, Quadratic):
        return [(spec.qstar.copy(), spec.Ainv.copy())]
    if isinstance(spec, FENE):
        return [(np.zeros(2), spec.H * np.eye(2))]
    if isinstance(spec, DoubleWell):
        hess = np.diag([8.0 * spec.H1, 2.0 * spec.H2])
        return [
            (np.array([1.0, 0.0]), hess.copy()),
            (np.array([-1.0, 0.0]), hess.copy()),
        ]
    raise TypeError(f"unknown potential spec {type(spec).__name__}")


def has_radial_structure(spec):
    """True when grad U = Psi(q) q for a scalar Psi."""
    if isinstance(spec, FENE):
        return True
    if isinstance(spec, Quadratic):
        iso = abs(spec.A[0, 0] - spec.A[1, 1]) < 1e-14 and abs(spec.A[0, 1]) < 1e-14
        return iso and np.all(spec.qstar == 0.0)
    return False


def radial_psi(spec, q):
    """Scalar Psi(q) with grad U = Psi(q) q, where the structure exists.

    Raises StructureError for the double well and anisotropic or shifted
    quadratic wells: there the gradient is not parallel to q, so only the
    potential-flow closure branch applies.
    """
    if not has_radial_structure(spec):
        raise StructureError("radial structure unavailable for this potential")
    q = np.asarray(q, dtype=float)
    if isinstance(spec, Quadratic):
        psi = np.full(q.shape[:-1], 1.0 / spec.A[0, 0])
        return psi if psi.shape else float(psi)
    s = _fene_s(spec, q)
    out = spec.H / (1.0 - s)
    return out if np.ndim(out) else float(out)
