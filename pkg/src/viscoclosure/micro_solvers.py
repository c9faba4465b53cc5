"""Microscopic ground-truth solvers.

Euler-Maruyama Monte-Carlo ensembles for the homogeneous configuration SDE

    dQ = (grad_u Q - D grad_q U(Q)) dt + sqrt(2 D) gamma dB,

Brownian-configuration-field ensembles over a periodic macro grid, a
deterministic stationary Fokker-Planck oracle (sparse finite differences),
ensemble estimators, and Gaussian smoothing of noisy stress fields.

All randomness comes from counter-based Philox streams keyed by
(seed, lane, retry, step), so a fixed seed and schedule reproduces ensembles
bit-identically regardless of how the vectorized work is laid out.
"""

import warnings
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from . import micro_moments as mm
from . import potentials as pot

# rejection boundary for finitely extensible samples, slightly inside the
# potential's own domain guard so gradients stay finite after acceptance
FENE_REJECT = 1e-9
MAX_RETRIES = 100
FALLBACK_DEPTH = 30


class StepSizeError(RuntimeError):
    """A step failed a stability bound (FENE confinement or advection CFL)."""


@dataclass
class Ensemble:
    """Homogeneous Monte-Carlo ensemble of M configuration vectors."""

    samples: np.ndarray  # (M, 2)
    M: int
    time: float
    rng_seed: int
    spec: object
    params: object
    step: int = 0


@dataclass
class ConfigurationFieldSet:
    """M Brownian configuration fields Q^i(x, t) on a periodic macro grid."""

    fields: np.ndarray  # (M, nx, ny, 2)
    nx: int
    ny: int
    Lx: float
    Ly: float
    time: float
    rng_seed: int
    spec: object
    params: object
    step: int = 0


def _stream(seed, lane, retry, step):
    key = np.uint64(seed)
    counter = [np.uint64(retry), np.uint64(lane), np.uint64(0), np.uint64(step)]
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def _fene_ok(spec, q):
    if not isinstance(spec, pot.FENE):
        return np.ones(q.shape[:-1], dtype=bool)
    r2 = np.sum(q * q, axis=-1)
    return r2 < (spec.Q0 * (1.0 - FENE_REJECT)) ** 2


def _max_stiffness(spec):
    return max(float(np.linalg.eigvalsh(h).max()) for _, h in pot.local_minima(spec))


def _min_stiffness(spec):
    return min(float(np.linalg.eigvalsh(h).min()) for _, h in pot.local_minima(spec))


def _advance_stuck(spec, p, gradu_rows, q, seed, lane, step, dt, counter, depth=1):
    """Advance near-boundary FENE samples over dt by recursively halved steps.

    A sample sitting very close to the extension limit can see its explicit
    spring drift overshoot the disk by many noise widths, in which case no
    fresh noise draw can land the full step inside. Such samples are advanced
    by the same update law over two half steps; halving repeats per sample
    until every substep lands inside the disk. The draw counter increments on
    every noise draw so the substep streams never collide with the main ones.
    """
    if depth > FALLBACK_DEPTH:
        raise StepSizeError(
            "FENE confinement failed at the substep depth cap; reduce dt"
        )
    half = 0.5 * dt
    sig = np.sqrt(2.0 * p.D) * p.gamma * np.sqrt(half)
    for _ in range(2):
        drift = np.einsum("kij,kj->ki", gradu_rows, q) - p.D * pot.gradient(spec, q)
        base = q + half * drift
        counter[0] += 1
        xi = _stream(seed, lane, counter[0], step).standard_normal(q.shape)
        new = base + sig * xi
        ok = _fene_ok(spec, new)
        for _retry in range(MAX_RETRIES):
            if ok.all():
                break
            idx = np.flatnonzero(~ok)
            counter[0] += 1
            xi = _stream(seed, lane, counter[0], step).standard_normal((idx.size, 2))
            new[idx] = base[idx] + sig * xi
            ok[idx] = _fene_ok(spec, new[idx])
        if not ok.all():
            idx = np.flatnonzero(~ok)
            new[idx] = _advance_stuck(
                spec, p, gradu_rows[idx], q[idx], seed, lane, step, half, counter, depth + 1
            )
        q = new
    return q


def init_ensemble(spec, params, M=50000, seed=0, init_std=0.1):
    """Ensemble of M iid N(0, init_std^2 I) samples (redrawn inside FENE)."""
    if M < 1:
        raise ValueError("M must be at least 1")
    if init_std <= 0.0:
        raise ValueError("init_std must be positive")
    samples = init_std * _stream(seed, 0, 0, 0).standard_normal((M, 2))
    pending = np.flatnonzero(~_fene_ok(spec, samples))
    for retry in range(1, MAX_RETRIES + 1):
        if pending.size == 0:
            break
        redraw = init_std * _stream(seed, 0, retry, 0).standard_normal((M, 2))
        samples[pending] = redraw[pending]
        pending = pending[~_fene_ok(spec, samples[pending])]
    if pending.size:
        raise StepSizeError("init_std too large for the FENE domain")
    return Ensemble(samples, M, 0.0, int(seed), spec, params)


def em_step(ens, gradu, dt):
    """One Euler-Maruyama step under a constant velocity gradient.

    FENE samples stepping past |q| = Q0(1 - 1e-9) are retried with fresh
    noise (same drift), up to 100 times. Samples still outside after the
    retry budget sit in the thin rim layer where the explicit spring drift
    overshoots the disk by more than any plausible noise draw; those are
    advanced by recursively halved substeps of the same update law.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    p = ens.params
    if dt * p.D * _max_stiffness(ens.spec) > 0.5:
        warnings.warn(
            "dt*D*stiffness exceeds 0.5: the relaxation step is marginally stable",
            stacklevel=2,
        )
    gradu = np.asarray(gradu, dtype=float)
    q = ens.samples
    base = q + dt * (q @ gradu.T - p.D * pot.gradient(ens.spec, q))
    sig = np.sqrt(2.0 * p.D) * p.gamma * np.sqrt(dt)
    step = ens.step + 1
    new = base + sig * _stream(ens.rng_seed, 0, 0, step).standard_normal(q.shape)
    pending = np.flatnonzero(~_fene_ok(ens.spec, new))
    stuck = pending[:0]
    if pending.size:
        # drift overshoots this far outside the disk cannot be rescued by
        # any plausible noise draw; skip their retry budget
        far = np.hypot(base[pending, 0], base[pending, 1]) > ens.spec.Q0 + 6.0 * sig
        stuck, pending = pending[far], pending[~far]
    for retry in range(1, MAX_RETRIES + 1):
        if pending.size == 0:
            break
        xi = _stream(ens.rng_seed, 0, retry, step).standard_normal((pending.size, 2))
        new[pending] = base[pending] + sig * xi
        pending = pending[~_fene_ok(ens.spec, new[pending])]
    pending = np.concatenate((pending, stuck))
    if pending.size:
        rows = np.broadcast_to(gradu, (pending.size, 2, 2))
        new[pending] = _advance_stuck(
            ens.spec, p, rows, q[pending], ens.rng_seed, 2, step, dt, [0]
        )
    return replace(ens, samples=new, time=ens.time + dt, step=step)


def estimate_stress(ens):
    """Ensemble stress (1/M) sum grad U(Q^i) (x) Q^i."""
    g = pot.gradient(ens.spec, ens.samples)
    return np.einsum("ki,kj->ij", g, ens.samples) / ens.M


def estimate_energy(ens):
    """Ensemble elastic energy, the sample mean of U."""
    return float(np.mean(pot.potential(ens.spec, ens.samples)))


def time_averaged_estimates(ens, gradu, dt, burn_in_steps, n_snapshots=500, snapshot_stride=1):
    """Stress and energy averaged over n_snapshots post-burn-in snapshots.

    With the defaults this pools M x 500 sample states. Snapshots separated
    by less than the decorrelation time still average correctly but reduce
    the effective sample count.
    """
    for _ in range(burn_in_steps):
        ens = em_step(ens, gradu, dt)
    tau = np.zeros((2, 2))
    energy = 0.0
    for k in range(n_snapshots):
        if k > 0:
            for _ in range(snapshot_stride):
                ens = em_step(ens, gradu, dt)
        tau += estimate_stress(ens)
        energy += estimate_energy(ens)
    return tau / n_snapshots, energy / n_snapshots


def histogram2d(ens, bins, extent):
    """Normalized 2D sample histogram on [-extent, extent]^2."""
    edges = np.linspace(-extent, extent, bins + 1)
    h, _, _ = np.histogram2d(ens.samples[:, 0], ens.samples[:, 1], bins=(edges, edges), density=True)
    return h


def _gibbs_on_grid(spec, gamma, qgrid):
    """Gibbs weight on arbitrary points, zero outside the FENE disk."""
    if isinstance(spec, pot.FENE):
        r2 = np.sum(qgrid * qgrid, axis=-1)
        s = r2 / spec.Q0**2
        inside = s < 1.0 - 1e-12
        u = -0.5 * spec.H * spec.Q0**2 * np.log1p(-np.where(inside, s, 0.0))
        return np.where(inside, np.exp(-u / gamma**2), 0.0)
    return np.exp(-pot.potential(spec, qgrid) / gamma**2)


def fp_oracle_coordinates(spec, gamma, grid_n):
    """Cell-center coordinates of the stationary oracle grid."""
    if isinstance(spec, pot.FENE):
        half = spec.Q0
    else:
        half = mm._square_half_width(spec, gamma)
    h = 2.0 * half / grid_n
    xs = -half + (np.arange(grid_n) + 0.5) * h
    return xs, xs.copy()


def _potential_or_inf(spec, pts):
    """Potential values with +inf outside the FENE disk."""
    if isinstance(spec, pot.FENE):
        s = np.sum(pts * pts, axis=-1) / spec.Q0**2
        inside = s < 1.0 - 1e-12
        u = -0.5 * spec.H * spec.Q0**2 * np.log1p(-np.where(inside, s, 0.0))
        return np.where(inside, u, np.inf)
    return pot.potential(spec, pts)


def stationary_fp_oracle(spec, gradu, params, grid_n):
    """Deterministic stationary density by Gibbs-fitted finite volumes.

    Solves div[(grad_u q) f - D gamma^2 grad f - D f grad U] = 0 on the
    truncated domain (the same truncation micro_moments uses). The
    relaxation-diffusion part of the face flux is written in the
    exponentially fitted form D gamma^2 e^{-U/gamma^2} d(f e^{U/gamma^2})
    so the discrete kernel at grad_u = 0 is the Gibbs density exactly;
    the flow advection is a second-order central average. No-flux faces,
    cells of negligible Gibbs weight pinned to zero, and one equation
    replaced by the normalization sum(f) h^2 = 1. Returns the
    (grid_n, grid_n) density with tiny negatives clamped to zero.
    """
    if grid_n < 64:
        raise ValueError("grid_n must be at least 64")
    gradu = np.asarray(gradu, dtype=float)
    gamma, D = params.gamma, params.D
    xs, ys = fp_oracle_coordinates(spec, gamma, grid_n)
    h = xs[1] - xs[0]
    n = grid_n

    X, Y = np.meshgrid(xs, ys, indexing="ij")
    centers = np.stack([X, Y], axis=-1)
    gibbs = _gibbs_on_grid(spec, gamma, centers)
    active = gibbs >= mm.GIBBS_FLOOR * gibbs.max()
    U_cell = _potential_or_inf(spec, centers)

    rows, cols, vals = [], [], []

    def face_terms(left, right, face_pts, axis):
        left_flat = left[0] * n + left[1]
        right_flat = right[0] * n + right[1]
        an = (face_pts @ gradu.T)[:, axis]
        u_face = _potential_or_inf(spec, face_pts)
        g2 = gamma**2
        # e^{(U_cell - U_face)/gamma^2}: 0 on faces beyond the FENE rim,
        # which closes the flux there without a separate wall case
        ratio_l = np.exp(np.minimum((U_cell[left] - u_face) / g2, 700.0))
        ratio_r = np.exp(np.minimum((U_cell[right] - u_face) / g2, 700.0))
        blocked = ~np.isfinite(u_face)
        adv = np.where(blocked, 0.0, 0.5 * an)
        alpha = adv + D * gamma**2 * ratio_l / h
        beta = adv - D * gamma**2 * ratio_r / h
        # divergence contribution: +J/h to the left cell, -J/h to the right
        rows.extend([left_flat, left_flat, right_flat, right_flat])
        cols.extend([left_flat, right_flat, left_flat, right_flat])
        vals.extend([alpha / h, beta / h, -alpha / h, -beta / h])

    # x-direction faces between (i, j) and (i+1, j)
    fi, fj = np.nonzero(active[:-1, :] & active[1:, :])
    if fi.size:
        pts = np.stack([xs[fi] + 0.5 * h, ys[fj]], axis=-1)
        face_terms((fi, fj), (fi + 1, fj), pts, 0)

    # y-direction faces between (i, j) and (i, j+1)
    fi, fj = np.nonzero(active[:, :-1] & active[:, 1:])
    if fi.size:
        pts = np.stack([xs[fi], ys[fj] + 0.5 * h], axis=-1)
        face_terms((fi, fj), (fi, fj + 1), pts, 1)

    # pin inactive cells to zero
    dead = np.flatnonzero(~active.ravel())
    rows.append(dead)
    cols.append(dead)
    vals.append(np.ones(dead.size))

    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate([np.asarray(v, dtype=float) for v in vals])
    A = scipy.sparse.coo_matrix((vals, (rows, cols)), shape=(n * n, n * n)).tolil()

    k0 = int(np.argmax(gibbs))
    A[k0, :] = h * h
    rhs = np.zeros(n * n)
    rhs[k0] = 1.0

    try:
        f = scipy.sparse.linalg.spsolve(A.tocsr(), rhs)
    except RuntimeError as exc:
        raise RuntimeError(f"stationary oracle system could not be solved: {exc}")
    if not np.all(np.isfinite(f)):
        raise RuntimeError("stationary oracle system is singular at these parameters")
    return np.clip(f.reshape(n, n), 0.0, None)


def init_configuration_fields(spec, params, M, nx, ny, Lx, Ly, seed=0, init_std=0.1):
    """M iid N(0, init_std^2 I) configuration fields on an nx x ny grid."""
    if M < 1:
        raise ValueError("M must be at least 1")
    fields = init_std * _stream(seed, 1, 0, 0).standard_normal((M, nx, ny, 2))
    bad = ~_fene_ok(spec, fields)
    for retry in range(1, MAX_RETRIES + 1):
        if not bad.any():
            break
        redraw = init_std * _stream(seed, 1, retry, 0).standard_normal(fields.shape)
        fields[bad] = redraw[bad]
        bad = ~_fene_ok(spec, fields)
    if bad.any():
        raise StepSizeError("init_std too large for the FENE domain")
    return ConfigurationFieldSet(fields, nx, ny, Lx, Ly, 0.0, int(seed), spec, params)


def _bilinear_periodic(fields, xd, yd, dx, dy):
    """Periodic bilinear interpolation of (M, nx, ny, 2) fields at (xd, yd)."""
    nx, ny = fields.shape[1], fields.shape[2]
    sx = xd / dx
    sy = yd / dy
    i0 = np.floor(sx).astype(int)
    j0 = np.floor(sy).astype(int)
    wx = (sx - i0)[..., None]
    wy = (sy - j0)[..., None]
    i0 %= nx
    j0 %= ny
    i1 = (i0 + 1) % nx
    j1 = (j0 + 1) % ny
    f00 = fields[:, i0, j0]
    f10 = fields[:, i1, j0]
    f01 = fields[:, i0, j1]
    f11 = fields[:, i1, j1]
    return (
        (1.0 - wx) * (1.0 - wy) * f00
        + wx * (1.0 - wy) * f10
        + (1.0 - wx) * wy * f01
        + wx * wy * f11
    )


def bcf_step(fields, u_field, gradu_field, dt, noise="shared"):
    """One Brownian-configuration-field step: advect, deform-relax, kick.

    Semi-Lagrangian advection backtraces x - u dt with periodic bilinear
    interpolation, the local deformation-relaxation Euler step uses the
    node-local velocity gradient, and the Brownian increment is shared
    across space per field (default) or drawn per node (noise="independent").
    FENE violations are retried with fresh node-local noise as in em_step,
    with the same halved-substep fallback for unrescuable rim samples.
    """
    if noise not in ("shared", "independent"):
        raise ValueError("noise must be 'shared' or 'independent'")
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    p = fields.params
    dx = fields.Lx / fields.nx
    dy = fields.Ly / fields.ny
    umax = float(np.max(np.abs(u_field)))
    if dt * umax / min(dx, dy) > 0.5:
        raise StepSizeError(
            f"advection CFL violated: dt*max|u|/dx = {dt * umax / min(dx, dy):.3f} > 0.5"
        )

    xs = np.arange(fields.nx) * dx
    ys = np.arange(fields.ny) * dy
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    xd = X - u_field[..., 0] * dt
    yd = Y - u_field[..., 1] * dt
    q = _bilinear_periodic(fields.fields, xd, yd, dx, dy)

    base = q + dt * (
        np.einsum("xyij,mxyj->mxyi", gradu_field, q) - p.D * pot.gradient(fields.spec, q)
    )
    sig = np.sqrt(2.0 * p.D) * p.gamma * np.sqrt(dt)
    step = fields.step + 1
    gen = _stream(fields.rng_seed, 1, 0, step)
    if noise == "shared":
        xi = gen.standard_normal((fields.fields.shape[0], 1, 1, 2))
    else:
        xi = gen.standard_normal(base.shape)
    new = np.ascontiguousarray(base + sig * xi)

    qf = np.ascontiguousarray(q).reshape(-1, 2)
    basef = np.ascontiguousarray(base).reshape(-1, 2)
    newf = new.reshape(-1, 2)
    pending = np.flatnonzero(~_fene_ok(fields.spec, newf))
    stuck = pending[:0]
    if pending.size:
        far = np.hypot(basef[pending, 0], basef[pending, 1]) > fields.spec.Q0 + 6.0 * sig
        stuck, pending = pending[far], pending[~far]
    for retry in range(1, MAX_RETRIES + 1):
        if pending.size == 0:
            break
        fresh = _stream(fields.rng_seed, 1, retry, step).standard_normal((pending.size, 2))
        newf[pending] = basef[pending] + sig * fresh
        pending = pending[~_fene_ok(fields.spec, newf[pending])]
    pending = np.concatenate((pending, stuck))
    if pending.size:
        _, ix, iy = np.unravel_index(pending, fields.fields.shape[:-1])
        newf[pending] = _advance_stuck(
            fields.spec, p, gradu_field[ix, iy], qf[pending], fields.rng_seed, 3, step, dt, [0]
        )
    return replace(fields, fields=new, time=fields.time + dt, step=step)


def stress_field_from_fields(fields, N_field):
    """Per-node ensemble stress scaled by the particle density N(x, t)."""
    g = pot.gradient(fields.spec, fields.fields)
    tau = np.einsum("mxyi,mxyj->xyij", g, fields.fields) / fields.fields.shape[0]
    return np.asarray(N_field, dtype=float)[..., None, None] * tau


def smooth_stress_field(raw, kernel_std_cells):
    """Periodic Gaussian smoothing of a (nx, ny, 2, 2) field, entrywise.

    Spectral multiplication by exp(-|k|^2 sigma^2 / 2) with sigma in cell
    units; the spatial mean of every entry is preserved exactly.
    """
    if kernel_std_cells < 0.0:
        raise ValueError("kernel_std_cells must be nonnegative")
    if kernel_std_cells == 0.0:
        return np.array(raw, copy=True)
    raw = np.asarray(raw, dtype=float)
    nx, ny = raw.shape[0], raw.shape[1]
    kx = 2.0 * np.pi * np.fft.fftfreq(nx, d=1.0)
    ky = 2.0 * np.pi * np.fft.rfftfreq(ny, d=1.0)
    mult = np.exp(-0.5 * (kx[:, None] ** 2 + ky[None, :] ** 2) * kernel_std_cells**2)
    out = np.empty_like(raw)
    for i in range(raw.shape[2]):
        for j in range(raw.shape[3]):
            spec_ij = np.fft.rfft2(raw[:, :, i, j])
            out[:, :, i, j] = np.fft.irfft2(spec_ij * mult, s=(nx, ny))
    return out
