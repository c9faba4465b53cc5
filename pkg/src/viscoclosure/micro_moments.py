"""Gibbs-weighted microscopic moments by deterministic quadrature.

Moments of the equilibrium weight e^{-U/gamma^2}:

    m_n = integral (q^T grad_u q)^n e^{-U/gamma^2} dq
    G_n = integral (grad U (x) q) (q^T grad_u q)^n e^{-U/gamma^2} dq

plus the normalized second and fourth moments M2tilde, M4tilde, and a
Laplace-method evaluation that sums closed-form Gaussian moments around
the potential minima.
"""

from dataclasses import dataclass
from itertools import permutations

import numpy as np
from scipy.special import roots_jacobi

from . import potentials as pot

# Gibbs weights below this threshold are irrelevant at double precision;
# used for domain truncation and for masking stiff boundary cells.
GIBBS_FLOOR = 1e-16


@dataclass
class QuadratureGrid:
    """Quadrature nodes and weights for one (potential, gamma) pair."""

    nodes: np.ndarray  # (K, 2)
    weights: np.ndarray  # (K,)
    gibbs: np.ndarray  # (K,) cached e^{-U/gamma^2}
    gamma: float
    spec: object
    domain: float  # disk radius (FENE) or square half-width
    kind: str  # "disk" or "square"

    def __post_init__(self):
        if np.sum(self.weights * self.gibbs) <= 0.0:
            raise ValueError("quadrature carries no Gibbs mass (m0 <= 0)")


@dataclass
class MomentSet:
    """Moments m0..m2, G0..G2, M2tilde, M4tilde for one (spec, gamma, gradu)."""

    m0: float
    m1: float
    m2: float
    G0: np.ndarray
    G1: np.ndarray
    G2: np.ndarray
    M2tilde: np.ndarray
    M4tilde: np.ndarray
    gradu: np.ndarray


def _square_half_width(spec, gamma):
    """Smallest axis half-width with Gibbs weight below GIBBS_FLOOR, doubled."""
    target = -gamma**2 * np.log(GIBBS_FLOOR)

    def axis_root(axis):
        e = np.zeros(2)
        e[axis] = 1.0
        # start beyond the outermost minimum coordinate on this axis
        lo = max(abs(m[0][axis]) for m in pot.local_minima(spec)) + 1e-9
        hi = max(2.0 * lo, 1.0)
        while pot.potential(spec, hi * e) < target:
            hi *= 2.0
            if hi > 1e8:
                raise ValueError("failed to bracket the domain truncation radius")
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if pot.potential(spec, mid * e) < target:
                lo = mid
            else:
                hi = mid
        return hi

    return 2.0 * max(axis_root(0), axis_root(1))


def build_quadrature(spec, gamma, resolution=128):
    """Build the quadrature grid for a potential family at scale gamma.

    FENE uses a polar grid: Gauss-Jacobi in s = r^2/Q0^2 with weight
    (1-s)^(b-1), b = H Q0^2 / (2 gamma^2), times 2*resolution uniform
    angles. The Jacobi weight absorbs both the Gibbs factor (1-s)^b and
    the integrable (1-s)^(b-1) endpoint behavior of grad-U integrands, so
    every moment integral is exact up to the polynomial degree of the rule.
    Square-domain families use tensor Gauss-Legendre on [-Lq, Lq]^2 with Lq
    chosen so the Gibbs weight is below 1e-16 on the boundary, then doubled.
    """
    if gamma <= 0.0:
        raise ValueError("gamma must be positive")
    if resolution < 8:
        raise ValueError("resolution must be at least 8")

    if isinstance(spec, pot.FENE):
        b = spec.H * spec.Q0**2 / (2.0 * gamma**2)
        with np.errstate(over="ignore", invalid="ignore"):
            s, v = roots_jacobi(resolution, b - 1.0, 0.0)
            s = 0.5 * (s + 1.0)
            # de-weight the Jacobi factor so that weight * gibbs carries it back
            wr = (spec.Q0**2 / 2.0) * 2.0**-b * v * (1.0 - s) ** (1.0 - b)
        if not np.all(np.isfinite(wr)):
            raise ValueError("FENE quadrature weights overflow; gamma too small")
        r = spec.Q0 * np.sqrt(s)
        ntheta = 2 * resolution
        theta = np.arange(ntheta) * (2.0 * np.pi / ntheta)
        wth = np.full(ntheta, 2.0 * np.pi / ntheta)
        rr = np.repeat(r, ntheta)
        tt = np.tile(theta, resolution)
        nodes = np.stack([rr * np.cos(tt), rr * np.sin(tt)], axis=-1)
        weights = np.repeat(wr, ntheta) * np.tile(wth, resolution)
        domain, kind = spec.Q0, "disk"
    else:
        half = _square_half_width(spec, gamma)
        x, w = np.polynomial.legendre.leggauss(resolution)
        g = half * x
        wg = half * w
        q1, q2 = np.meshgrid(g, g, indexing="ij")
        nodes = np.stack([q1.ravel(), q2.ravel()], axis=-1)
        weights = np.outer(wg, wg).ravel()
        domain, kind = half, "square"

    gibbs = np.exp(-pot.potential(spec, nodes) / gamma**2)
    return QuadratureGrid(nodes, weights, gibbs, float(gamma), spec, domain, kind)


def _pvals(grid, gradu):
    q = grid.nodes
    return np.einsum("ki,ij,kj->k", q, np.asarray(gradu, dtype=float), q)


def moment_m(grid, gradu, n):
    """Scalar moment m_n = sum w gibbs (q^T gradu q)^n; n=0 ignores gradu."""
    if n not in (0, 1, 2):
        raise ValueError("n must be 0, 1 or 2")
    wg = grid.weights * grid.gibbs
    if n == 0:
        return float(np.sum(wg))
    return float(np.sum(wg * _pvals(grid, gradu) ** n))


def moment_G(grid, gradu, n):
    """Matrix moment G_n = sum w gibbs (grad U (x) q) (q^T gradu q)^n."""
    if n not in (0, 1, 2):
        raise ValueError("n must be 0, 1 or 2")
    wg = grid.weights * grid.gibbs
    if n > 0:
        wg = wg * _pvals(grid, gradu) ** n
    gu = pot.gradient(grid.spec, grid.nodes)
    return np.einsum("k,ki,kj->ij", wg, gu, grid.nodes)


def normalized_moments(grid, gradu):
    """Full MomentSet by quadrature, including M2tilde and M4tilde."""
    gradu = np.asarray(gradu, dtype=float)
    wg = grid.weights * grid.gibbs
    m0 = float(np.sum(wg))
    q = grid.nodes
    M2 = np.einsum("k,ki,kj->ij", wg, q, q) / m0
    M2 = 0.5 * (M2 + M2.T)
    M4 = np.einsum("k,ki,kj,kl,km->ijlm", wg, q, q, q, q) / m0
    M4 = _symmetrize4(M4)
    return MomentSet(
        m0=m0,
        m1=moment_m(grid, gradu, 1),
        m2=moment_m(grid, gradu, 2),
        G0=moment_G(grid, gradu, 0),
        G1=moment_G(grid, gradu, 1),
        G2=moment_G(grid, gradu, 2),
        M2tilde=M2,
        M4tilde=M4,
        gradu=gradu.copy(),
    )


def _symmetrize4(M4):
    out = np.zeros_like(M4)
    for perm in set(permutations(range(4))):
        out += np.transpose(M4, perm)
    return out / 24.0


def _gauss_fourth(mu, S):
    """Non-central Gaussian fourth moment E[q_i q_j q_k q_l] (Isserlis)."""
    E = np.einsum("ij,kl->ijkl", S, S)
    E += np.einsum("ik,jl->ijkl", S, S)
    E += np.einsum("il,jk->ijkl", S, S)
    mm = np.outer(mu, mu)
    E += np.einsum("ij,kl->ijkl", mm, S) + np.einsum("ij,kl->ijkl", S, mm)
    E += np.einsum("ik,jl->ijkl", mm, S) + np.einsum("ik,jl->ijkl", S, mm)
    E += np.einsum("il,jk->ijkl", mm, S) + np.einsum("il,jk->ijkl", S, mm)
    E += np.einsum("i,j,k,l->ijkl", mu, mu, mu, mu)
    return E


def laplace_moments(spec, gamma, gradu):
    """Moment set from the Laplace method: Gaussian moments per minimum.

    Each minimum (qstar, hessian) contributes the closed-form moments of
    N(qstar, gamma^2 A) with A = hessian^{-1}, weighted by
    e^{-U(qstar)/gamma^2} (det A)^{1/2}. Exact for quadratic wells.
    """
    if gamma <= 0.0:
        raise ValueError("gamma must be positive")
    gradu = np.asarray(gradu, dtype=float)
    B = 0.5 * (gradu + gradu.T)

    minima = pot.local_minima(spec)
    raw_w, stats = [], []
    for mu, hess in minima:
        A = np.linalg.inv(hess)
        S = gamma**2 * A
        w = np.exp(-pot.potential(spec, mu) / gamma**2) * np.sqrt(np.linalg.det(A))
        EP = np.trace(B @ S) + mu @ B @ mu
        EP2 = EP**2 + 2.0 * np.trace(B @ S @ B @ S) + 4.0 * mu @ B @ S @ B @ mu
        raw_w.append(w)
        stats.append((mu, S, EP, EP2))

    wsum = float(np.sum(raw_w))
    p = np.asarray(raw_w) / wsum
    m0 = 2.0 * np.pi * gamma**2 * wsum
    m1 = m0 * float(np.sum([pj * s[2] for pj, s in zip(p, stats)]))
    m2 = m0 * float(np.sum([pj * s[3] for pj, s in zip(p, stats)]))

    M2 = np.zeros((2, 2))
    M4 = np.zeros((2, 2, 2, 2))
    for pj, (mu, S, _, _) in zip(p, stats):
        M2 += pj * (S + np.outer(mu, mu))
        M4 += pj * _gauss_fourth(mu, S)
    M4 = _symmetrize4(M4)

    # G_n via the integration-by-parts identities, exact per Gaussian factor:
    # G_n = gamma^2 m_n I + 2 n gamma^2 B (integral P^{n-1} q (x) q gibbs)
    I2 = np.eye(2)
    G0 = gamma**2 * m0 * I2
    G1 = gamma**2 * m1 * I2 + 2.0 * gamma**2 * (B @ (m0 * M2))
    T = np.einsum("ij,ijkl->kl", B, M4)
    G2 = gamma**2 * m2 * I2 + 4.0 * gamma**2 * (B @ (m0 * T))
    return MomentSet(m0, m1, m2, G0, G1, G2, M2, M4, gradu.copy())
