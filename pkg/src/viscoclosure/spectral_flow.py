"""Periodic 2D pseudo-spectral vorticity-streamfunction solver.

Fourier collocation with 2/3-rule dealiasing and classical RK4. Supplies
the plain Navier-Stokes core, the perturbation-vorticity model driven by an
analytic straining background, the fully coupled vorticity model forced by
curl(div tau), and passive transport of the macroscopic density field.
"""

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import j0, j1

# first positive zero of J1: sets the Lamb-Chaplygin dipole eigenvalue k R
LAMB_CHAPLYGIN_KR = 3.8317059702


def _is_pow2(n):
    return n >= 1 and (n & (n - 1)) == 0


@dataclass
class FlowState:
    """Vorticity, transported density and the spectral workspace."""

    nx: int
    ny: int
    Lx: float
    Ly: float
    omega: np.ndarray
    density: np.ndarray
    time: float = 0.0
    KX: np.ndarray = field(default=None, repr=False)
    KY: np.ndarray = field(default=None, repr=False)
    K2: np.ndarray = field(default=None, repr=False)
    dealias: np.ndarray = field(default=None, repr=False)


@dataclass(frozen=True)
class BackgroundFlow:
    """Analytic straining background u_tilde = (kappa x, -kappa y).

    The linear coordinates are centered in the domain and rolled off to zero
    with a cosine taper over the outer `taper_fraction` of each half-width,
    so the non-periodic background coexists with the periodic fields.
    """

    kappa: float
    taper_fraction: float = 0.1


def init_grid(nx=128, ny=128, Lx=2.0 * np.pi, Ly=2.0 * np.pi):
    """Zeroed flow state with precomputed wavenumbers and dealias mask."""
    if not (_is_pow2(nx) and _is_pow2(ny)) or nx < 32 or ny < 32:
        raise ValueError("nx and ny must be powers of two, at least 32")
    if Lx <= 0.0 or Ly <= 0.0:
        raise ValueError("domain lengths must be positive")
    kx = 2.0 * np.pi * np.fft.fftfreq(nx, d=Lx / nx)
    ky = 2.0 * np.pi * np.fft.rfftfreq(ny, d=Ly / ny)
    KX, KY = np.meshgrid(kx, ky, indexing="ij")
    K2 = KX**2 + KY**2
    mx = np.abs(np.fft.fftfreq(nx, d=1.0 / nx)) <= nx / 3.0
    my = np.fft.rfftfreq(ny, d=1.0 / ny) <= ny / 3.0
    mask = np.outer(mx, my)
    return FlowState(
        nx=nx,
        ny=ny,
        Lx=Lx,
        Ly=Ly,
        omega=np.zeros((nx, ny)),
        density=np.zeros((nx, ny)),
        KX=KX,
        KY=KY,
        K2=K2,
        dealias=mask,
    )


def grid_coordinates(state):
    """Node coordinates (X, Y) with x in [0, Lx), y in [0, Ly)."""
    xs = np.arange(state.nx) * (state.Lx / state.nx)
    ys = np.arange(state.ny) * (state.Ly / state.ny)
    return np.meshgrid(xs, ys, indexing="ij")


def _dx(state, f):
    return np.fft.irfft2(1j * state.KX * state.dealias * np.fft.rfft2(f), s=(state.nx, state.ny))


def _dy(state, f):
    return np.fft.irfft2(1j * state.KY * state.dealias * np.fft.rfft2(f), s=(state.nx, state.ny))


def _laplacian(state, f):
    return np.fft.irfft2(-state.K2 * state.dealias * np.fft.rfft2(f), s=(state.nx, state.ny))


def poisson_velocity(state):
    """Velocity (2, nx, ny) from the streamfunction solve laplacian(psi) = omega."""
    what = np.fft.rfft2(state.omega) * state.dealias
    what[0, 0] = 0.0
    psi_hat = np.zeros_like(what)
    nonzero = state.K2 > 0.0
    psi_hat[nonzero] = -what[nonzero] / state.K2[nonzero]
    vx = np.fft.irfft2(-1j * state.KY * psi_hat, s=(state.nx, state.ny))
    vy = np.fft.irfft2(1j * state.KX * psi_hat, s=(state.nx, state.ny))
    return np.stack([vx, vy])


def velocity_gradient(state):
    """Spectral velocity gradient field, shape (nx, ny, 2, 2)."""
    v = poisson_velocity(state)
    g = np.empty((state.nx, state.ny, 2, 2))
    g[..., 0, 0] = _dx(state, v[0])
    g[..., 0, 1] = _dy(state, v[0])
    g[..., 1, 0] = _dx(state, v[1])
    g[..., 1, 1] = _dy(state, v[1])
    return g


def _tapered_coordinates(state, taper_fraction):
    """Centered x, y coordinates rolled to zero over the outer taper zone."""
    X, Y = grid_coordinates(state)

    def taper(z, half):
        a = np.abs(z)
        inner = (1.0 - taper_fraction) * half
        w = np.ones_like(z)
        edge = a > inner
        w[edge] = 0.5 * (1.0 + np.cos(np.pi * (a[edge] - inner) / (half - inner)))
        return z * w

    xc = X - 0.5 * state.Lx
    yc = Y - 0.5 * state.Ly
    return taper(xc, 0.5 * state.Lx), taper(yc, 0.5 * state.Ly)


def background_velocity(state, background):
    """Tapered straining background (kappa x, -kappa y) on the grid."""
    xt, yt = _tapered_coordinates(state, background.taper_fraction)
    return np.stack([background.kappa * xt, -background.kappa * yt])


def _tau_component(tau_field, i, j, shape):
    comp = np.asarray(tau_field, dtype=float)[..., i, j]
    return np.broadcast_to(comp, shape)


def vorticity_rhs_perturbation(state, u_tilde, tau_field, f0_field, params):
    """Right-hand side of the perturbation model.

    domega/dt = -u_tilde . grad omega - v . grad omega + eta lap omega
                + lam [(tau22 - tau11) dxy f0 + tau21 dxx f0 - tau12 dyy f0]
    df0/dt    = -u_tilde . grad f0 - v . grad f0
    """
    v = poisson_velocity(state)
    ub = background_velocity(state, u_tilde)
    wx, wy = _dx(state, state.omega), _dy(state, state.omega)
    fx, fy = _dx(state, f0_field), _dy(state, f0_field)

    shape = (state.nx, state.ny)
    t11 = _tau_component(tau_field, 0, 0, shape)
    t12 = _tau_component(tau_field, 0, 1, shape)
    t21 = _tau_component(tau_field, 1, 0, shape)
    t22 = _tau_component(tau_field, 1, 1, shape)
    fxx = _dx(state, fx)
    fyy = _dy(state, fy)
    fxy = _dy(state, fx)
    forcing = params.lam * ((t22 - t11) * fxy + t21 * fxx - t12 * fyy)

    domega = (
        -(ub[0] + v[0]) * wx
        - (ub[1] + v[1]) * wy
        + params.eta * _laplacian(state, state.omega)
        + forcing
    )
    df0 = -(ub[0] + v[0]) * fx - (ub[1] + v[1]) * fy
    return domega, df0


def vorticity_rhs_coupled(state, tau_field, params):
    """Right-hand side of the fully coupled model.

    domega/dt = -u . grad omega + eta lap omega + lam curl(div tau) . k_hat
    dN/dt     = -u . grad N

    with (div tau)_i = d_j tau_ij taken row-wise, so the curl forcing reads
    dxx tau21 + dxy (tau22 - tau11) - dyy tau12.
    """
    v = poisson_velocity(state)
    wx, wy = _dx(state, state.omega), _dy(state, state.omega)
    nx_, ny_ = _dx(state, state.density), _dy(state, state.density)

    shape = (state.nx, state.ny)
    t11 = _tau_component(tau_field, 0, 0, shape)
    t12 = _tau_component(tau_field, 0, 1, shape)
    t21 = _tau_component(tau_field, 1, 0, shape)
    t22 = _tau_component(tau_field, 1, 1, shape)
    forcing = params.lam * (
        _dx(state, _dx(state, t21)) + _dx(state, _dy(state, t22 - t11)) - _dy(state, _dy(state, t12))
    )

    domega = -v[0] * wx - v[1] * wy + params.eta * _laplacian(state, state.omega) + forcing
    dN = -v[0] * nx_ - v[1] * ny_
    return domega, dN


def cfl_number(state, dt, eta=0.0):
    """Advective plus viscous stability number of the spectral RK4 step."""
    v = poisson_velocity(state)
    umax = float(np.max(np.abs(v)))
    h = min(state.Lx / state.nx, state.Ly / state.ny)
    return dt * (umax / h + eta * 4.0 * np.pi**2 / h**2)


def rk4_step(state, rhs, dt, eta=0.0):
    """Classical RK4 update of (omega, density) under the given rhs.

    If the CFL number exceeds 0.5 the step is split into halved substeps
    (with a warning); more than eight halvings aborts with a diagnostic.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    number = cfl_number(state, dt, eta)
    if number > 0.5:
        halvings = math.ceil(math.log2(number / 0.5))
        if halvings > 8:
            raise RuntimeError(
                f"CFL number {number:.2f} requires more than 8 halvings; "
                "the flow has likely blown up"
            )
        warnings.warn(
            f"CFL number {number:.2f} > 0.5: halving dt {halvings} time(s)",
            stacklevel=2,
        )
        sub = 2**halvings
        for _ in range(sub):
            state = _rk4_single(state, rhs, dt / sub)
        return state
    return _rk4_single(state, rhs, dt)


def _rk4_single(state, rhs, dt):
    def at(w, d):
        return replace(state, omega=w, density=d)

    w0, d0 = state.omega, state.density
    k1w, k1d = rhs(state)
    k2w, k2d = rhs(at(w0 + 0.5 * dt * k1w, d0 + 0.5 * dt * k1d))
    k3w, k3d = rhs(at(w0 + 0.5 * dt * k2w, d0 + 0.5 * dt * k2d))
    k4w, k4d = rhs(at(w0 + dt * k3w, d0 + dt * k3d))
    w = w0 + (dt / 6.0) * (k1w + 2.0 * k2w + 2.0 * k3w + k4w)
    d = d0 + (dt / 6.0) * (k1d + 2.0 * k2d + 2.0 * k3d + k4d)
    return replace(state, omega=w, density=d, time=state.time + dt)


def kinetic_energy(state):
    """Total kinetic energy integral |v|^2 dx (no 1/2 factor)."""
    v = poisson_velocity(state)
    dA = (state.Lx / state.nx) * (state.Ly / state.ny)
    return float(np.sum(v[0] ** 2 + v[1] ** 2) * dA)


def lamb_chaplygin(state, U0=1.0, R=None, center=None):
    """Set the vorticity to a Lamb-Chaplygin dipole translating along +x.

    Inside r < R: omega = -(2 U0 k / J0(kR)) J1(kr) sin(theta) with
    k R = 3.8317059702; zero outside; grid mean removed.
    """
    if R is None:
        R = state.Lx / 8.0
    if center is None:
        center = (0.5 * state.Lx, 0.5 * state.Ly)
    if R >= min(state.Lx, state.Ly) / 4.0:
        raise ValueError("dipole radius must be below a quarter of the domain")
    X, Y = grid_coordinates(state)
    rx = X - center[0]
    ry = Y - center[1]
    r = np.hypot(rx, ry)
    theta = np.arctan2(ry, rx)
    k = LAMB_CHAPLYGIN_KR / R
    omega = np.where(r < R, -(2.0 * U0 * k / j0(LAMB_CHAPLYGIN_KR)) * j1(k * r) * np.sin(theta), 0.0)
    omega -= omega.mean()
    return replace(state, omega=omega)


def gaussian_density(state, sigma_x=0.1, sigma_y=0.75, normalization="paper"):
    """Set the density to a centered anisotropic Gaussian.

    normalization="paper" uses the constant 1/(2 pi sqrt(sigma_x^2 + sigma_y^2));
    "standard" uses 1/(2 pi sigma_x sigma_y) so the field integrates to 1.
    """
    if normalization == "paper":
        const = 1.0 / (2.0 * np.pi * np.sqrt(sigma_x**2 + sigma_y**2))
    elif normalization == "standard":
        const = 1.0 / (2.0 * np.pi * sigma_x * sigma_y)
    else:
        raise ValueError("normalization must be 'paper' or 'standard'")
    X, Y = grid_coordinates(state)
    xc = X - 0.5 * state.Lx
    yc = Y - 0.5 * state.Ly
    dens = const * np.exp(-(xc**2) / (2.0 * sigma_x**2) - yc**2 / (2.0 * sigma_y**2))
    return replace(state, density=dens)
