"""Asymptotic density expansion, stress expansion and closure forcing.

The truncated stationary density for a prescribed velocity gradient is

    f(q) ~ C_gamma [sum_n gamma^{2n}/((2c)^n n!) (q^T grad_u q)^n] e^{-U/gamma^2}

with the matching stress expansion

    tau = (f0/m0) sum_n gamma^{2n+2}/((2c)^n n!) (gamma^{-2} G_n - m_n I)

truncated at the requested closure order. The gamma^2 bracket vanishes
identically and is returned as an exact zero. For symmetric velocity
gradients the full series sums to the tilted Gibbs density
e^{-U/gamma^2 + gamma^2 (q^T grad_u q)/(2c)}, which is an exact stationary
solution and serves as the reference in tests.
"""

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import potentials as pot


class IllPosedTruncationError(ValueError):
    """Truncated density has non-positive mass: expansion invalid here."""


@dataclass(frozen=True)
class ScalingParams:
    """Scaling constants of the micro-macro coupling.

    gamma is the thermal scale (gamma^2 = k_B T), c the deformation balance
    ratio, lam the macro-micro energy ratio, eta the fluid viscosity and rho
    the fluid density. D = c/gamma^4 and lambda_tilde = lam*gamma^4 are
    always derived, never set independently.
    """

    gamma: float
    c: float = 1.0
    lam: float = 0.0
    eta: float = 0.0
    rho: float = 1.0
    D: float = field(init=False)
    lambda_tilde: float = field(init=False)

    def __post_init__(self):
        if self.gamma <= 0.0:
            raise ValueError("gamma must be positive")
        if self.c <= 0.0:
            raise ValueError("c must be positive")
        if self.lam < 0.0 or self.eta < 0.0:
            raise ValueError("lam and eta must be nonnegative")
        if self.rho <= 0.0:
            raise ValueError("rho must be positive")
        object.__setattr__(self, "D", self.c / self.gamma**4)
        object.__setattr__(self, "lambda_tilde", self.lam * self.gamma**4)


class ClosureOrder(enum.Enum):
    """Truncation order: number of correction terms kept in the expansion."""

    GAMMA2 = 1
    GAMMA4 = 2
    GAMMA6 = 3

    @property
    def degree(self):
        """Polynomial degree in (q^T grad_u q) of the truncated density."""
        return self.value


def density_coefficients(params, order):
    """Coefficients of (q^T grad_u q)^n, n = 0..degree, in the density.

    Term n carries gamma^{2n}/((2c)^n n!), so at gamma = c = 1 the full list
    reads [1, 1/2, 1/8, 1/48].
    """
    g2 = params.gamma**2
    tc = 2.0 * params.c
    return [g2**n / (tc**n * math.factorial(n)) for n in range(order.degree + 1)]


def _check_assumption(spec, gradu):
    gradu = np.asarray(gradu, dtype=float)
    symmetric = np.array_equal(gradu, gradu.T) or np.allclose(gradu, gradu.T, atol=1e-12)
    if not symmetric and not pot.has_radial_structure(spec):
        warnings.warn(
            "velocity gradient is not symmetric and the potential is not "
            "radial: the expansion is formal only here",
            stacklevel=3,
        )
    return gradu


def eval_density(spec, gradu, params, order, q):
    """Unnormalized truncated density at configuration points q (..., 2).

    The polynomial prefactor may go negative far from the origin at large
    gamma |grad_u|; the signed value is returned (see normalize_density for
    the ill-posedness check).
    """
    gradu = _check_assumption(spec, gradu)
    q = np.asarray(q, dtype=float)
    p = np.einsum("...i,ij,...j->...", q, gradu, q)
    coeffs = density_coefficients(params, order)
    prefactor = np.zeros_like(p)
    for cn in reversed(coeffs):
        prefactor = prefactor * p + cn
    return prefactor * np.exp(-pot.potential(spec, q) / params.gamma**2)


def exact_tilted_density(spec, gradu, params, q):
    """Unnormalized tilted Gibbs density, the full series of eval_density.

    For a symmetric velocity gradient this is an exact stationary solution
    of the configurational evolution; it is the reference the truncations
    are compared against.
    """
    gradu = _check_assumption(spec, gradu)
    q = np.asarray(q, dtype=float)
    p = np.einsum("...i,ij,...j->...", q, gradu, q)
    g2 = params.gamma**2
    return np.exp(-pot.potential(spec, q) / g2 + g2 * p / (2.0 * params.c))


def normalize_density(spec, gradu, params, order, grid):
    """Normalizing constant C_gamma = 1/integral of eval_density over grid.

    Raises IllPosedTruncationError when the integral is not positive, which
    signals that the truncation is invalid at these parameters rather than
    silently normalizing a signed density.
    """
    values = eval_density(spec, gradu, params, order, grid.nodes)
    mass = float(np.sum(grid.weights * values))
    if mass <= 0.0:
        raise IllPosedTruncationError(
            f"truncated density mass {mass:.3e} is not positive at "
            f"gamma={params.gamma}, order={order.name}"
        )
    return 1.0 / mass


def clamped_mass_fraction(spec, gradu, params, order, grid):
    """Fraction of quadrature mass lost when clamping negative values at 0."""
    values = eval_density(spec, gradu, params, order, grid.nodes)
    total = float(np.sum(grid.weights * np.abs(values)))
    if total == 0.0:
        return 0.0
    negative = float(np.sum(grid.weights * np.clip(-values, 0.0, None)))
    return negative / total


def marginals(spec, gradu, params, order, grid, axis, bins):
    """Binned marginal of the normalized density along axis 1 or 2.

    Returns (centers, profile) with uniform bins spanning the quadrature
    domain; profile integrates to 1 (bin width times sum) up to quadrature
    and clamping error. Negative density values are clamped at zero for
    display, per the negative-prefactor policy.
    """
    if axis not in (1, 2):
        raise ValueError("axis must be 1 or 2")
    cg = normalize_density(spec, gradu, params, order, grid)
    values = np.clip(cg * eval_density(spec, gradu, params, order, grid.nodes), 0.0, None)
    extent = grid.domain
    edges = np.linspace(-extent, extent, bins + 1)
    coord = grid.nodes[:, axis - 1]
    idx = np.clip(np.digitize(coord, edges) - 1, 0, bins - 1)
    mass = np.zeros(bins)
    np.add.at(mass, idx, grid.weights * values)
    width = edges[1] - edges[0]
    centers = 0.5 * (edges[:-1] + edges[1:])
    return centers, mass / width


def stress_expansion(moments, f0, params, order):
    """Elastic stress from a MomentSet, truncated at the closure order.

    Keeps `order.degree` brackets. The gamma^2 bracket is analytically zero
    (G0 = gamma^2 m0 I) and is contributed as an exact zero rather than by
    numerical subtraction.
    """
    g2 = params.gamma**2
    tc = 2.0 * params.c
    tau = np.zeros((2, 2))
    for n in range(1, order.degree):
        Gn = (moments.G1, moments.G2)[n - 1]
        mn = (moments.m1, moments.m2)[n - 1]
        coeff = g2 ** (n + 1) / (tc**n * math.factorial(n))
        tau = tau + coeff * (Gn / g2 - mn * np.eye(2))
    return (f0 / moments.m0) * tau


def stress_quadratic_analytic(f0, gradu, qstar, A, gamma):
    """Closed-form stress for the quadratic potential at scaling c = 1.

    Evaluates the leading-order expansion in gamma using the exact Gaussian
    moments around qstar with covariance gamma^2 A: through O(gamma^8) the
    terms reproduce the four-line explicit formula (strain times
    q* (x) q* at gamma^4, the A terms at gamma^6, the mixed terms at
    gamma^8), and the Gaussian completion keeps the value consistent with
    stress_expansion on exact quadratic moments at machine precision.
    """
    gradu = np.asarray(gradu, dtype=float)
    qstar = np.asarray(qstar, dtype=float)
    A = np.asarray(A, dtype=float)
    S = 0.5 * (gradu + gradu.T)
    g2 = gamma**2
    M2 = g2 * A + np.outer(qstar, qstar)
    # S : M4 for a Gaussian with mean qstar, covariance gamma^2 A
    mu_s_mu = qstar @ S @ qstar
    ASmu = A @ S @ qstar
    SM4 = (
        mu_s_mu * np.outer(qstar, qstar)
        + g2
        * (
            mu_s_mu * A
            + 2.0 * (np.outer(qstar, ASmu) + np.outer(ASmu, qstar))
            + np.trace(S @ A) * np.outer(qstar, qstar)
        )
        + g2**2 * (np.trace(S @ A) * A + 2.0 * A @ S @ A)
    )
    return f0 * (gamma**4 * S @ M2 + 0.5 * gamma**6 * S @ SM4)


def closure_forcing(f0_field, gradu_field, M2tilde, params):
    """Assemble the closure stress field (lambda_tilde/c) f0 S M2tilde.

    f0_field has shape (...,), gradu_field (..., 2, 2); the result is the
    tensor field (..., 2, 2) whose divergence forces the momentum equation.
    Both macroscopic closure models use this assembly: the caller passes
    either the prescribed background gradient or the evolving spectral one.
    """
    f0_field = np.asarray(f0_field, dtype=float)
    gradu_field = np.asarray(gradu_field, dtype=float)
    S = 0.5 * (gradu_field + np.swapaxes(gradu_field, -1, -2))
    pref = params.lambda_tilde / params.c
    return pref * f0_field[..., None, None] * (S @ M2tilde)


def recurrence_residual(gradu, params, n, sample_points, condition="ii"):
    """Residual of the order-n recurrence defining the expansion terms.

    With f_n(q) = (q^T grad_u q)^n / ((2c)^n n!), condition "ii" measures
    max |(q^T grad_u q) f_n - c q . grad_q f_{n+1}|, which vanishes
    identically; condition "i" measures the vector residual
    max ||(grad_u q) f_n - c grad_q f_{n+1}||, zero iff grad_u is symmetric.
    """
    if n not in (1, 2, 3):
        raise ValueError("n must be 1, 2 or 3")
    if condition not in ("i", "ii"):
        raise ValueError("condition must be 'i' or 'ii'")
    gradu = np.asarray(gradu, dtype=float)
    B = 0.5 * (gradu + gradu.T)
    c = params.c
    tc = 2.0 * c
    worst = 0.0
    for q in sample_points:
        q = np.asarray(q, dtype=float)
        p = q @ gradu @ q
        fn = p**n / (tc**n * math.factorial(n))
        # grad_q f_{n+1} = (q^T grad_u q)^n 2 B q / ((2c)^{n+1} n!)
        grad_fnp1 = p**n * 2.0 * (B @ q) / (tc ** (n + 1) * math.factorial(n))
        if condition == "ii":
            worst = max(worst, abs(p * fn - c * q @ grad_fnp1))
        else:
            worst = max(worst, float(np.linalg.norm((gradu @ q) * fn - c * grad_fnp1)))
    return worst
