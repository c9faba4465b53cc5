"""Scenario runner: configs, run directories and the paper-style experiments.

Configs are TOML (or the JSON metadata written next to every run). All
derived parameters (D, lambda_tilde) are recomputed from the balance laws,
never read from file. Run directories are self-describing: re-running a
scenario from its own metadata reproduces every CSV byte-for-byte.

Grid files use the convention: one header line `# nx ny Lx Ly time`, then
nx*ny values, one per row, row-major.
"""

import copy
import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

try:
    import tomllib as _toml
except ModuleNotFoundError:
    import tomli as _toml

from . import __version__
from . import asymptotic_closure as ac
from . import energy_diagnostics as ed
from . import micro_moments as mm
from . import micro_solvers as ms
from . import potentials as pot
from . import spectral_flow as sf


class ConfigError(ValueError):
    """Configuration file is malformed or inconsistent."""


_DEFAULTS = {
    "scenario": {"name": ""},
    "potential": {
        "family": "fene",
        "H": 0.1,
        "Q0": 1.5,
        "A": [[1.0, 0.0], [0.0, 1.0]],
        "qstar": [0.0, 0.0],
        "H1": 0.05,
        "H2": 0.1,
    },
    "scaling": {"gamma": 0.5, "c": 1.0, "lambda": 1.0, "eta": 0.01, "rho": 1.0},
    "flow": {
        "kappa": 2.0,
        "nx": 256,
        "ny": 256,
        "Lx": 2.0 * np.pi,
        "Ly": 4.0 * np.pi,
        "dt": 1e-3,
        "T": 1.0,
        "taper": 0.1,
        "snapshots": 5,
    },
    "mc": {"M": 50000, "dt": 1e-3, "T": 1.0, "seed": 0, "snapshots": 500},
    "bcf": {"M": 2000, "noise": "shared", "kernel_std": 2.0},
    "density": {"sigma_x": 0.1, "sigma_y": 0.75, "normalization": "paper"},
    "quadrature": {"resolution": 256},
    "closure": {"order": "gamma6", "source": "closure", "grid_n": 256},
    "coupled": {
        "nx": 64,
        "Lx": 2.0 * np.pi,
        "dt": 0.01,
        "T": 0.5,
        "U0": 1.0,
        "density": "constant",
    },
    "output": {"dir": ""},
    "sweep": {"gamma_list": [0.1, 0.15, 0.2, 0.3], "kappa_list": [2.0]},
}

_SCENARIOS = ("density_benchmark", "induced_vorticity", "coupled")


@dataclass
class ScenarioConfig:
    """Effective configuration: defaults overlaid with one parsed file."""

    scenario: str = ""
    potential: dict = field(default_factory=dict)
    scaling: dict = field(default_factory=dict)
    flow: dict = field(default_factory=dict)
    mc: dict = field(default_factory=dict)
    bcf: dict = field(default_factory=dict)
    density: dict = field(default_factory=dict)
    quadrature: dict = field(default_factory=dict)
    closure: dict = field(default_factory=dict)
    coupled: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)

    def spec(self):
        p = self.potential
        family = p["family"]
        if family == "fene":
            return pot.FENE(H=float(p["H"]), Q0=float(p["Q0"]))
        if family == "quadratic":
            return pot.Quadratic(A=np.asarray(p["A"], dtype=float), qstar=np.asarray(p["qstar"], dtype=float))
        if family == "double_well":
            return pot.DoubleWell(H1=float(p["H1"]), H2=float(p["H2"]))
        raise ConfigError(f"unknown potential family '{family}'")

    def params(self, gamma=None):
        s = self.scaling
        return ac.ScalingParams(
            gamma=float(s["gamma"] if gamma is None else gamma),
            c=float(s["c"]),
            lam=float(s["lambda"]),
            eta=float(s["eta"]),
            rho=float(s["rho"]),
        )

    def order(self):
        name = str(self.closure["order"]).upper()
        try:
            return ac.ClosureOrder[name]
        except KeyError:
            raise ConfigError(f"unknown closure order '{self.closure['order']}'")


def _merge(defaults, data, path):
    # Deep-copy so no config ever aliases the module-level defaults (or the
    # parsed file data): configs are mutated freely by callers.
    out = copy.deepcopy(defaults)
    for key, value in data.items():
        if key not in defaults:
            raise ConfigError(f"unknown key '{path}.{key}'" if path else f"unknown key '{key}'")
        if isinstance(defaults[key], dict) and isinstance(value, dict):
            out[key] = _merge(defaults[key], value, f"{path}.{key}" if path else key)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path):
    """Parse a TOML config (or JSON run metadata) into a ScenarioConfig."""
    if str(path).endswith(".json"):
        with open(path, "r") as fh:
            data = json.load(fh)
        data.pop("derived", None)
        data.pop("code_version", None)
    else:
        with open(path, "rb") as fh:
            try:
                data = _toml.load(fh)
            except _toml.TOMLDecodeError as exc:
                raise ConfigError(f"{path}: {exc}")
    merged = _merge(_DEFAULTS, data, "")
    name = merged["scenario"]["name"]
    if name and name not in _SCENARIOS:
        raise ConfigError(f"unknown scenario '{name}'")
    blocks = {k: merged[k] for k in _DEFAULTS if k != "scenario"}
    return ScenarioConfig(scenario=name, **blocks)


def default_config(scenario=""):
    """ScenarioConfig holding only the defaults."""
    merged = _merge(_DEFAULTS, {}, "")
    blocks = {k: merged[k] for k in _DEFAULTS if k != "scenario"}
    return ScenarioConfig(scenario=scenario, **blocks)


def apply_paper_scale(config):
    """Raise the reduced desk-scale settings to the paper's values."""
    config.sweep["gamma_list"] = [round(0.1 * k, 2) for k in range(1, 11)]
    config.sweep["kappa_list"] = [float(k) for k in range(1, 11)]
    config.mc["M"] = 50000
    config.bcf["M"] = 50000
    config.coupled["nx"] = 256
    return config


def write_run_metadata(run_dir, config, code_version=__version__, seeds=None):
    """Write metadata.json: every effective parameter plus derived values."""
    params = config.params()
    payload = {
        "scenario": {"name": config.scenario},
        "potential": config.potential,
        "scaling": config.scaling,
        "flow": config.flow,
        "mc": config.mc,
        "bcf": config.bcf,
        "density": config.density,
        "quadrature": config.quadrature,
        "closure": config.closure,
        "coupled": config.coupled,
        "output": config.output,
        "sweep": config.sweep,
        "code_version": code_version,
        "derived": {
            "D": params.D,
            "lambda_tilde": params.lambda_tilde,
            "seeds": seeds if seeds is not None else [config.mc["seed"]],
        },
    }
    path = os.path.join(run_dir, "metadata.json")
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def write_grid_csv(path, grid, Lx, Ly, time):
    """Grid file: `# nx ny Lx Ly time` header, then nx*ny rows, row-major."""
    grid = np.asarray(grid, dtype=float)
    nx, ny = grid.shape
    header = f"{nx} {ny} {Lx:.17g} {Ly:.17g} {time:.17g}"
    np.savetxt(path, grid.ravel()[:, None], fmt="%.17g", header=header)


def write_series_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def _ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


def _run_dir(config, fallback_name):
    out = config.output.get("dir") or os.path.join("runs", fallback_name)
    return _ensure_dir(out)


def closure_stress_field(f0_field, gradu_field, M2tilde, params):
    """Raw leading-order stress field (gamma^4/c) f0 S M2tilde.

    This is the physical elastic stress; the flow right-hand sides multiply
    it by the coupling lambda, so the lambda_tilde prefactor of
    closure_forcing must not be applied again here.
    """
    f0 = np.asarray(f0_field, dtype=float)
    s = 0.5 * (gradu_field + np.swapaxes(gradu_field, -1, -2))
    return (params.gamma**4 / params.c) * f0[..., None, None] * (s @ M2tilde)


def _fp_density_and_observables(spec, gradu, params, grid_n):
    """Oracle density plus its raw stress and energy integrals.

    The symmetric stress part comes from the stationary moment-flux balance
    tau_sym = gamma^2 I + (gradu M2 + M2 gradu^T) / (2D), whose q (x) q
    integrand is smooth; the direct grad-U cell sum is kept only for the
    antisymmetric part (zero for radial potentials), since its integrand is
    boundary-singular on the FENE disk.
    """
    f = ms.stationary_fp_oracle(spec, gradu, params, grid_n)
    xs, ys = ms.fp_oracle_coordinates(spec, params.gamma, grid_n)
    h = xs[1] - xs[0]
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    nodes = np.stack([X, Y], axis=-1)
    gibbs = ms._gibbs_on_grid(spec, params.gamma, nodes)
    live = gibbs > 0.0
    grad = np.zeros_like(nodes)
    grad[live] = pot.gradient(spec, nodes[live])
    u_vals = np.zeros(X.shape)
    u_vals[live] = pot.potential(spec, nodes[live])
    gradu = np.asarray(gradu, dtype=float)
    M2 = np.einsum("xy,xyi,xyj->ij", f, nodes, nodes) * h * h
    tau_sym = params.gamma**2 * np.eye(2) + (gradu @ M2 + M2 @ gradu.T) / (2.0 * params.D)
    raw = np.einsum("xy,xyi,xyj->ij", f, grad, nodes) * h * h
    tau = tau_sym + 0.5 * (raw - raw.T)
    energy = float(np.sum(f * u_vals) * h * h)
    return f, xs, tau, energy


def _closure_density_on_grid(spec, gradu, params, order, xs):
    """Normalized truncated density sampled on the oracle grid."""
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    nodes = np.stack([X, Y], axis=-1)
    h = xs[1] - xs[0]
    if isinstance(spec, pot.FENE):
        inside = np.sum(nodes * nodes, axis=-1) < (spec.Q0 * (1.0 - 1e-9)) ** 2
    else:
        inside = np.ones(X.shape, dtype=bool)
    vals = np.zeros(X.shape)
    vals[inside] = ac.eval_density(spec, gradu, params, order, nodes[inside])
    mass = float(np.sum(vals) * h * h)
    if mass <= 0.0:
        raise ac.IllPosedTruncationError(f"non-positive closure mass at gamma={params.gamma}")
    vals /= mass
    clamped = float(np.sum(np.clip(-vals, 0.0, None)) * h * h)
    return np.clip(vals, 0.0, None), clamped


def _closure_observables(spec, grid, gradu, params, order):
    """Raw stress (brackets) and energy of the truncated closure density."""
    moments = mm.normalized_moments(grid, gradu)
    tau = ac.stress_expansion(moments, 1.0, params, order)
    cg = ac.normalize_density(spec, gradu, params, order, grid)
    vals = ac.eval_density(spec, gradu, params, order, grid.nodes)
    energy = float(np.sum(grid.weights * vals * pot.potential(spec, grid.nodes)) * cg)
    return tau, energy


def _pooled_equilibrium_samples(spec, params, gradu, mc_cfg, n_pool=25, stride=40):
    """Equilibrated ensemble plus a pool of decorrelated snapshot samples."""
    ens = ms.init_ensemble(spec, params, M=int(mc_cfg["M"]), seed=int(mc_cfg["seed"]))
    dt = float(mc_cfg["dt"])
    relax_rate = params.D * ms._min_stiffness(spec)
    burn = max(200, int(np.ceil(5.0 / max(relax_rate, 1e-12) / dt)))
    for _ in range(burn):
        ens = ms.em_step(ens, gradu, dt)
    chunks = [ens.samples.copy()]
    for _ in range(n_pool - 1):
        for _ in range(stride):
            ens = ms.em_step(ens, gradu, dt)
        chunks.append(ens.samples.copy())
    return ens, np.concatenate(chunks, axis=0)


def _hist2d_on_edges(samples, edges):
    h, _, _ = np.histogram2d(samples[:, 0], samples[:, 1], bins=(edges, edges), density=True)
    return h


def run_density_benchmark(config):
    """Homogeneous-flow density and stress benchmark over the (gamma, kappa) sweep.

    For every sweep point: Monte-Carlo equilibrium, stationary oracle
    density, and the truncated closure densities at Gamma4 and Gamma6, with
    tau11 - tau22 / energy tables, error-vs-gamma table, 2D grids and
    marginals (series: mc, fp, gamma4, gamma6).
    """
    run_dir = _run_dir(config, "density_benchmark")
    spec = config.spec()
    grid_n = int(config.closure["grid_n"])
    resolution = int(config.quadrature["resolution"])
    kappa_list = [float(k) for k in config.sweep["kappa_list"]]
    gamma_list = [float(g) for g in config.sweep["gamma_list"]]
    write_run_metadata(run_dir, config)

    table = []
    err_rows = []
    for gamma in gamma_list:
        params = config.params(gamma=gamma)
        grid = mm.build_quadrature(spec, gamma, resolution)
        for kappa in kappa_list:
            gradu = np.diag([kappa, -kappa])
            point = {"gamma": gamma, "kappa": kappa}

            tau_mc, e_mc = ms.time_averaged_estimates(
                ms.init_ensemble(spec, params, M=int(config.mc["M"]), seed=int(config.mc["seed"])),
                gradu,
                float(config.mc["dt"]),
                burn_in_steps=max(
                    200,
                    int(
                        np.ceil(
                            5.0
                            / max(params.D * ms._min_stiffness(spec), 1e-12)
                            / float(config.mc["dt"])
                        )
                    ),
                ),
                n_snapshots=int(config.mc["snapshots"]),
                snapshot_stride=2,
            )

            f_fp, xs, tau_fp, e_fp = _fp_density_and_observables(spec, gradu, params, grid_n)

            results = {}
            for name, order in (("gamma4", ac.ClosureOrder.GAMMA4), ("gamma6", ac.ClosureOrder.GAMMA6)):
                try:
                    results[name] = _closure_observables(spec, grid, gradu, params, order)
                except ac.IllPosedTruncationError:
                    results[name] = (np.full((2, 2), np.nan), np.nan)
                    point[f"ill_posed_{name}"] = True

            def taud(t):
                return t[0, 0] - t[1, 1]

            t4, e4 = results["gamma4"]
            t6, e6 = results["gamma6"]
            table.append(
                [gamma, kappa, taud(tau_mc), taud(tau_fp), taud(t4), taud(t6), e_mc, e_fp, e4, e6]
            )
            err_rows.append(
                [gamma, kappa, abs(taud(t4) - taud(tau_fp)), abs(taud(t6) - taud(tau_fp))]
            )

            pdir = _ensure_dir(os.path.join(run_dir, f"point_gamma{gamma:g}_kappa{kappa:g}"))
            _, pool = _pooled_equilibrium_samples(spec, params, gradu, config.mc)
            half = xs[-1] + 0.5 * (xs[1] - xs[0])
            edges64 = np.linspace(-half, half, 65)
            h_mc = _hist2d_on_edges(pool, edges64)
            clamped = {}
            grids = {"fp": f_fp}
            for name, order in (("gamma4", ac.ClosureOrder.GAMMA4), ("gamma6", ac.ClosureOrder.GAMMA6)):
                try:
                    grids[name], clamped[name] = _closure_density_on_grid(spec, gradu, params, order, xs)
                except ac.IllPosedTruncationError:
                    grids[name] = np.zeros_like(f_fp)
                    clamped[name] = float("nan")

            write_grid_csv(os.path.join(pdir, "density_mc.csv"), h_mc, 2 * half, 2 * half, 0.0)
            for name in ("fp", "gamma4", "gamma6"):
                write_grid_csv(
                    os.path.join(pdir, f"density_{name}.csv"), grids[name], 2 * half, 2 * half, 0.0
                )

            h = xs[1] - xs[0]
            for axis, fname in ((0, "marginal_q1.csv"), (1, "marginal_q2.csv")):
                centers = 0.5 * (edges64[:-1] + edges64[1:])
                rows = np.column_stack(
                    [
                        centers,
                        h_mc.sum(axis=1 - axis) * (edges64[1] - edges64[0]),
                        _marginal_on_centers(grids["fp"].sum(axis=1 - axis) * h, xs, centers),
                        _marginal_on_centers(grids["gamma4"].sum(axis=1 - axis) * h, xs, centers),
                        _marginal_on_centers(grids["gamma6"].sum(axis=1 - axis) * h, xs, centers),
                    ]
                )
                write_series_csv(os.path.join(pdir, fname), "q,mc,fp,gamma4,gamma6", rows)

            with open(os.path.join(pdir, "point.json"), "w") as fh:
                json.dump({**point, "clamped_mass": clamped}, fh, indent=2, sort_keys=True)
                fh.write("\n")

    write_series_csv(
        os.path.join(run_dir, "stress_table.csv"),
        "gamma,kappa,taud_mc,taud_fp,taud_gamma4,taud_gamma6,E_mc,E_fp,E_gamma4,E_gamma6",
        table,
    )
    write_series_csv(
        os.path.join(run_dir, "err_vs_gamma.csv"), "gamma,kappa,err_gamma4,err_gamma6", err_rows
    )
    return run_dir


def _marginal_on_centers(values, xs, centers):
    """Grid marginal rebinned onto the histogram centers.

    Uses exact block means when the grid size is a multiple of the center
    count, linear interpolation otherwise.
    """
    factor = xs.size // centers.size
    if factor >= 1 and xs.size == factor * centers.size:
        return values.reshape(centers.size, factor).mean(axis=1)
    return np.interp(centers, xs, values)


def _mc_equilibrium_stress(spec, params, gradu, mc_cfg):
    """Kramers-form stationary stress from the time-averaged second moment.

    At stationarity d<q x q>/dt = 0 gives, for any potential and any
    constant gradu, the exact identity

        sym tau = gamma^2 I + (gradu M2 + M2 gradu^T) / (2 D),

    so the equilibrium stress can be estimated through the sample second
    moment, whose integrand is bounded on the FENE disk. The direct
    grad-U(q) x q average has a boundary-singular integrand there
    (infinite variance once H Q0^2 < 2 gamma^2) and its Euler-Maruyama
    boundary layer biases the rim contribution, so it is kept for the
    reported estimates but not used as a flow forcing source.
    """
    dt = float(mc_cfg["dt"])
    ens = ms.init_ensemble(spec, params, M=int(mc_cfg["M"]), seed=int(mc_cfg["seed"]))
    relax_rate = params.D * ms._min_stiffness(spec)
    burn = max(200, int(np.ceil(5.0 / max(relax_rate, 1e-12) / dt)))
    for _ in range(burn):
        ens = ms.em_step(ens, gradu, dt)
    m2 = np.zeros((2, 2))
    n_snapshots = int(mc_cfg["snapshots"])
    for k in range(n_snapshots):
        if k:
            for _ in range(2):
                ens = ms.em_step(ens, gradu, dt)
        m2 += np.einsum("mi,mj->ij", ens.samples, ens.samples) / ens.M
    m2 /= n_snapshots
    return params.gamma**2 * np.eye(2) + (gradu @ m2 + m2 @ gradu.T) / (2.0 * params.D)


def _equilibrium_stress(config, spec, params, gradu):
    """Constant raw stress for the perturbation model, per config source."""
    source = config.closure["source"]
    grid = mm.build_quadrature(spec, params.gamma, int(config.quadrature["resolution"]))
    moments = mm.normalized_moments(grid, gradu)
    if source == "closure":
        return ac.stress_expansion(moments, 1.0, params, config.order()), moments
    if source == "mc":
        return _mc_equilibrium_stress(spec, params, gradu, config.mc), moments
    if source == "fp_oracle":
        _, _, tau, _ = _fp_density_and_observables(spec, gradu, params, int(config.closure["grid_n"]))
        return tau, moments
    raise ConfigError(f"unknown closure source '{source}'")


def run_induced_vorticity(config):
    """Perturbation-vorticity experiment: strain background plus density blob.

    Zero initial vorticity; the constant equilibrium stress (closure or MC
    per config) forces the vorticity through the density derivatives. Emits
    omega / f0 snapshot grids, the KE time series and the energy CSV.
    """
    run_dir = _run_dir(config, "induced_vorticity")
    spec = config.spec()
    params = config.params()
    kappa = float(config.flow["kappa"])
    gradu = np.diag([kappa, -kappa])
    write_run_metadata(run_dir, config)

    tau, moments = _equilibrium_stress(config, spec, params, gradu)
    bg = sf.BackgroundFlow(kappa=kappa, taper_fraction=float(config.flow["taper"]))

    state = sf.init_grid(
        int(config.flow["nx"]), int(config.flow["ny"]), float(config.flow["Lx"]), float(config.flow["Ly"])
    )
    state = sf.gaussian_density(
        state,
        sigma_x=float(config.density["sigma_x"]),
        sigma_y=float(config.density["sigma_y"]),
        normalization=config.density["normalization"],
    )

    def rhs(st):
        return sf.vorticity_rhs_perturbation(st, bg, tau, st.density, params)

    dt = float(config.flow["dt"])
    n_steps = int(round(float(config.flow["T"]) / dt))
    snap_every = max(1, n_steps // max(int(config.flow["snapshots"]) - 1, 1))

    reports = [(None, ed.closure_energy(state, moments, params))]
    ke_rows = [[0.0, sf.kinetic_energy(state)]]
    snap_idx = 0
    write_grid_csv(os.path.join(run_dir, f"omega_t{snap_idx}.csv"), state.omega, state.Lx, state.Ly, state.time)
    write_grid_csv(os.path.join(run_dir, f"f0_t{snap_idx}.csv"), state.density, state.Lx, state.Ly, state.time)

    for k in range(1, n_steps + 1):
        state = sf.rk4_step(state, rhs, dt, eta=params.eta)
        reports.append((None, ed.closure_energy(state, moments, params)))
        ke_rows.append([state.time, sf.kinetic_energy(state)])
        if k % snap_every == 0 or k == n_steps:
            snap_idx += 1
            write_grid_csv(
                os.path.join(run_dir, f"omega_t{snap_idx}.csv"), state.omega, state.Lx, state.Ly, state.time
            )
            write_grid_csv(
                os.path.join(run_dir, f"f0_t{snap_idx}.csv"), state.density, state.Lx, state.Ly, state.time
            )

    _write_energy_csv(run_dir, reports, dt)
    write_series_csv(os.path.join(run_dir, "ke.csv"), "t,value", ke_rows)
    write_series_csv(
        os.path.join(run_dir, "stress.csv"),
        "tau11,tau12,tau21,tau22",
        [[tau[0, 0], tau[0, 1], tau[1, 0], tau[1, 1]]],
    )
    return run_dir


def _write_energy_csv(run_dir, reports, dt):
    residual = ed.energy_residual(reports, dt)
    rows = [
        [r.time, r.kinetic, r.micro_free, r.macro_dissipation, r.micro_dissipation, res]
        for (_, r), res in zip(reports, residual)
    ]
    write_series_csv(
        os.path.join(run_dir, "energy.csv"),
        "t,kinetic,micro_free,macro_dissip,micro_dissip,residual",
        rows,
    )


def run_coupled(config):
    """Fully coupled experiment: Lamb-Chaplygin dipole with micro stress.

    The stress source is the closure field or smoothed Brownian
    configuration-field ensembles; N is constant or advected. Emits omega
    and N snapshots, raw/smoothed/closure stress grids at the final time,
    the y = 0 vorticity cross-section and the energy CSV.
    """
    run_dir = _run_dir(config, "coupled")
    spec = config.spec()
    params = config.params()
    write_run_metadata(run_dir, config)

    nx = int(config.coupled["nx"])
    L = float(config.coupled["Lx"])
    dt = float(config.coupled["dt"])
    n_steps = int(round(float(config.coupled["T"]) / dt))
    state = sf.init_grid(nx, nx, L, L)
    state = sf.lamb_chaplygin(state, U0=float(config.coupled["U0"]))
    if config.coupled["density"] == "constant":
        state = replace(state, density=np.ones((nx, nx)))
    elif config.coupled["density"] == "advected":
        state = sf.gaussian_density(
            state,
            sigma_x=float(config.density["sigma_x"]),
            sigma_y=float(config.density["sigma_y"]),
            normalization=config.density["normalization"],
        )
    else:
        raise ConfigError("coupled.density must be 'constant' or 'advected'")

    grid = mm.build_quadrature(spec, params.gamma, int(config.quadrature["resolution"]))
    moments = mm.normalized_moments(grid, np.zeros((2, 2)))
    source = config.closure["source"]
    kernel = float(config.bcf["kernel_std"])

    fields = None
    n_sub = 1
    if source == "mc":
        ens = ms.init_ensemble(spec, params, M=int(config.bcf["M"]), seed=int(config.mc["seed"]))
        stable_rate = params.D * ms._max_stiffness(spec)
        relax_rate = params.D * ms._min_stiffness(spec)
        sde_limit = 0.4 / max(stable_rate, 1e-12)
        if isinstance(spec, pot.FENE):
            # Brownian kicks must also resolve the rim boundary layer:
            # sqrt(2 D dt) gamma comparable to Q0 piles retried samples
            # against the extension limit and spikes the sampled stress
            sde_limit = min(sde_limit, 0.03 / max(relax_rate, 1e-12))
        sde_dt = min(dt, sde_limit)
        for _ in range(int(np.ceil(5.0 / max(relax_rate, 1e-12) / sde_dt))):
            ens = ms.em_step(ens, np.zeros((2, 2)), sde_dt)
        n_sub = max(1, int(np.ceil(dt / sde_limit)))
        tiled = np.broadcast_to(ens.samples[:, None, None, :], (ens.M, nx, nx, 2)).copy()
        fields = ms.ConfigurationFieldSet(
            tiled, nx, nx, L, L, 0.0, int(config.mc["seed"]), spec, params
        )

    def closure_rhs(st):
        tau = closure_stress_field(st.density, sf.velocity_gradient(st), moments.M2tilde, params)
        return sf.vorticity_rhs_coupled(st, tau, params)

    tau_s = raw = None
    reports = [(None, ed.closure_energy(state, moments, params))]
    snap_idx = 0
    write_grid_csv(os.path.join(run_dir, f"omega_t{snap_idx}.csv"), state.omega, L, L, state.time)
    write_grid_csv(os.path.join(run_dir, f"density_t{snap_idx}.csv"), state.density, L, L, state.time)
    snap_every = max(1, n_steps // max(int(config.flow["snapshots"]) - 1, 1))

    for k in range(1, n_steps + 1):
        if source == "closure":
            state = sf.rk4_step(state, closure_rhs, dt, eta=params.eta)
        else:
            # MC stress is frozen over each flow step, and the configuration
            # fields advance with the pre-step velocity that produced it.
            raw = ms.stress_field_from_fields(fields, state.density)
            tau_s = ms.smooth_stress_field(raw, kernel)
            u_field = np.moveaxis(sf.poisson_velocity(state), 0, -1)
            gradu_field = sf.velocity_gradient(state)

            def rhs(st):
                return sf.vorticity_rhs_coupled(st, tau_s, params)

            state = sf.rk4_step(state, rhs, dt, eta=params.eta)
            for _ in range(n_sub):
                fields = ms.bcf_step(
                    fields, u_field, gradu_field, dt / n_sub, noise=config.bcf["noise"]
                )
        reports.append((None, ed.closure_energy(state, moments, params)))
        if k % snap_every == 0 or k == n_steps:
            snap_idx += 1
            write_grid_csv(os.path.join(run_dir, f"omega_t{snap_idx}.csv"), state.omega, L, L, state.time)
            write_grid_csv(
                os.path.join(run_dir, f"density_t{snap_idx}.csv"), state.density, L, L, state.time
            )

    closure_tau = closure_stress_field(
        state.density, sf.velocity_gradient(state), moments.M2tilde, params
    )
    if fields is not None:
        raw = ms.stress_field_from_fields(fields, state.density)
        tau_s = ms.smooth_stress_field(raw, kernel)
    comps = {"11": (0, 0), "12": (0, 1), "21": (1, 0), "22": (1, 1)}
    for name, (i, j) in comps.items():
        write_grid_csv(os.path.join(run_dir, f"tau{name}_closure.csv"), closure_tau[..., i, j], L, L, state.time)
        if raw is not None:
            write_grid_csv(os.path.join(run_dir, f"tau{name}_raw.csv"), raw[..., i, j], L, L, state.time)
            write_grid_csv(os.path.join(run_dir, f"tau{name}_smooth.csv"), tau_s[..., i, j], L, L, state.time)

    xs = np.arange(nx) * (L / nx)
    j0 = nx // 2
    write_series_csv(
        os.path.join(run_dir, "profile_y0.csv"),
        "x,omega,density",
        np.column_stack([xs, state.omega[:, j0], state.density[:, j0]]),
    )
    _write_energy_csv(run_dir, reports, dt)
    return run_dir


def run_relax(config):
    """Homogeneous MC relaxation: stress/energy series and final histogram."""
    run_dir = _run_dir(config, "relax")
    spec = config.spec()
    params = config.params()
    kappa = float(config.flow["kappa"])
    gradu = np.diag([kappa, -kappa])
    write_run_metadata(run_dir, config)

    dt = float(config.mc["dt"])
    n_steps = int(round(float(config.mc["T"]) / dt))
    n_snap = min(int(config.mc["snapshots"]), n_steps)
    every = max(1, n_steps // n_snap)
    ens = ms.init_ensemble(spec, params, M=int(config.mc["M"]), seed=int(config.mc["seed"]))
    rows = []
    for k in range(n_steps + 1):
        if k % every == 0 or k == n_steps:
            tau = ms.estimate_stress(ens)
            rows.append([ens.time, tau[0, 0], tau[0, 1], tau[1, 0], tau[1, 1], ms.estimate_energy(ens)])
        if k < n_steps:
            ens = ms.em_step(ens, gradu, dt)

    write_series_csv(os.path.join(run_dir, "series.csv"), "t,tau11,tau12,tau21,tau22,energy", rows)
    if isinstance(spec, pot.FENE):
        extent = spec.Q0
    else:
        extent = mm._square_half_width(spec, params.gamma) / 2.0
    hist = ms.histogram2d(ens, bins=64, extent=extent)
    write_grid_csv(os.path.join(run_dir, "final_histogram.csv"), hist, 2 * extent, 2 * extent, ens.time)
    return run_dir


def run_moments(config):
    """Write quadrature and Laplace moment sets for the configured point."""
    run_dir = _run_dir(config, "moments")
    spec = config.spec()
    params = config.params()
    kappa = float(config.flow["kappa"])
    gradu = np.diag([kappa, -kappa])
    write_run_metadata(run_dir, config)
    grid = mm.build_quadrature(spec, params.gamma, int(config.quadrature["resolution"]))
    rows = []
    for name, mset in (
        ("quadrature", mm.normalized_moments(grid, gradu)),
        ("laplace", mm.laplace_moments(spec, params.gamma, gradu)),
    ):
        rows.append(
            [
                {"quadrature": 0.0, "laplace": 1.0}[name],
                mset.m0,
                mset.m1,
                mset.m2,
                mset.G1[0, 0],
                mset.G1[1, 1],
                mset.M2tilde[0, 0],
                mset.M2tilde[0, 1],
                mset.M2tilde[1, 1],
            ]
        )
    write_series_csv(
        os.path.join(run_dir, "moments.csv"),
        "is_laplace,m0,m1,m2,G1_11,G1_22,M2_11,M2_12,M2_22",
        rows,
    )
    return run_dir


def run_stress(config):
    """Write closure stress entries at the configured (potential, gamma, kappa)."""
    run_dir = _run_dir(config, "stress")
    spec = config.spec()
    params = config.params()
    kappa = float(config.flow["kappa"])
    gradu = np.diag([kappa, -kappa])
    write_run_metadata(run_dir, config)
    grid = mm.build_quadrature(spec, params.gamma, int(config.quadrature["resolution"]))
    moments = mm.normalized_moments(grid, gradu)
    rows = []
    for order in (ac.ClosureOrder.GAMMA2, ac.ClosureOrder.GAMMA4, ac.ClosureOrder.GAMMA6):
        tau = ac.stress_expansion(moments, 1.0, params, order)
        rows.append([float(order.degree), tau[0, 0], tau[0, 1], tau[1, 0], tau[1, 1]])
    write_series_csv(
        os.path.join(run_dir, "stress.csv"), "degree,tau11,tau12,tau21,tau22", rows
    )
    return run_dir


def run_sweep(config):
    """Error-scaling sweep: the benchmark's stress/error tables, no grids."""
    run_dir = _run_dir(config, "sweep")
    spec = config.spec()
    grid_n = int(config.closure["grid_n"])
    resolution = int(config.quadrature["resolution"])
    write_run_metadata(run_dir, config)
    table, err_rows = [], []
    for gamma in [float(g) for g in config.sweep["gamma_list"]]:
        params = config.params(gamma=gamma)
        grid = mm.build_quadrature(spec, gamma, resolution)
        for kappa in [float(k) for k in config.sweep["kappa_list"]]:
            gradu = np.diag([kappa, -kappa])
            _, _, tau_fp, e_fp = _fp_density_and_observables(spec, gradu, params, grid_n)
            row = [gamma, kappa]
            errs = [gamma, kappa]
            for order in (ac.ClosureOrder.GAMMA4, ac.ClosureOrder.GAMMA6):
                try:
                    tau, energy = _closure_observables(spec, grid, gradu, params, order)
                    taud = tau[0, 0] - tau[1, 1]
                except ac.IllPosedTruncationError:
                    taud, energy = float("nan"), float("nan")
                row.extend([taud, energy])
                errs.append(abs(taud - (tau_fp[0, 0] - tau_fp[1, 1])))
            row.extend([tau_fp[0, 0] - tau_fp[1, 1], e_fp])
            table.append(row)
            err_rows.append(errs)
    write_series_csv(
        os.path.join(run_dir, "stress_table.csv"),
        "gamma,kappa,taud_gamma4,E_gamma4,taud_gamma6,E_gamma6,taud_fp,E_fp",
        table,
    )
    write_series_csv(
        os.path.join(run_dir, "err_vs_gamma.csv"), "gamma,kappa,err_gamma4,err_gamma6", err_rows
    )
    return run_dir
