"""Post-hoc figure rendering for scenario run directories.

Each entry point reads the CSV/grid artifacts written by the scenario
runners and renders deterministic PNG panels: density heatmaps with
marginal overlays, stress/energy comparison curves over gamma, log-log
error-scaling plots, vorticity/density snapshot panels with the y = 0
cross-section, and energy/kinetic-energy time series. Rendering is
headless and read-only over the run directory; images land in a separate
output directory.
"""

import glob
import json
import os
import re

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "FigureDataError",
    "GridFile",
    "read_grid_csv",
    "read_series_csv",
    "plot_density_panel",
    "plot_scaling",
    "plot_flow_panels",
    "plot_energy",
]

_CMAP = "viridis"
_DPI = 110

plt.rcParams.update(
    {
        "figure.dpi": _DPI,
        "savefig.dpi": _DPI,
        "font.size": 9,
        "axes.titlesize": 9,
        "axes.labelsize": 9,
        "legend.fontsize": 8,
        "svg.hashsalt": "figures",
    }
)


class FigureDataError(FileNotFoundError):
    """A run-directory artifact needed by a panel is missing or malformed."""


class GridFile:
    """Parsed grid CSV: `# nx ny Lx Ly time` header, nx*ny rows, row-major."""

    def __init__(self, nx, ny, Lx, Ly, time, values):
        if values.size != nx * ny:
            raise FigureDataError(f"grid row count {values.size} != nx*ny = {nx * ny}")
        self.nx = nx
        self.ny = ny
        self.Lx = Lx
        self.Ly = Ly
        self.time = time
        self.values = values.reshape(nx, ny)


def read_grid_csv(path):
    """Load one grid CSV into a GridFile."""
    if not os.path.isfile(path):
        raise FigureDataError(f"missing grid file: {path}")
    with open(path) as fh:
        header = fh.readline()
    if not header.startswith("#"):
        raise FigureDataError(f"grid file lacks the '# nx ny Lx Ly time' header: {path}")
    toks = header.lstrip("#").split()
    if len(toks) != 5:
        raise FigureDataError(f"malformed grid header in {path!r}: {header.strip()!r}")
    vals = np.loadtxt(path, comments="#", ndmin=1)
    return GridFile(int(toks[0]), int(toks[1]), float(toks[2]), float(toks[3]), float(toks[4]), vals)


def read_series_csv(path):
    """Load a header,comma-separated series CSV as (column names, 2D array)."""
    if not os.path.isfile(path):
        raise FigureDataError(f"missing series file: {path}")
    with open(path) as fh:
        names = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.size and data.shape[1] != len(names):
        raise FigureDataError(f"column mismatch in {path!r}")
    return names, data


def _outdir(out):
    os.makedirs(out, exist_ok=True)
    return out


def _save(fig, out, name):
    path = os.path.join(_outdir(out), name)
    fig.savefig(path, metadata={"Software": "figures"})
    plt.close(fig)
    return path


def _imshow(ax, grid, title):
    im = ax.imshow(
        grid.values.T,
        origin="lower",
        extent=(0.0, grid.Lx, 0.0, grid.Ly),
        cmap=_CMAP,
        aspect="auto",
        interpolation="nearest",
    )
    ax.set_title(title)
    return im


def _centered_imshow(ax, grid, title):
    half_x, half_y = 0.5 * grid.Lx, 0.5 * grid.Ly
    im = ax.imshow(
        grid.values.T,
        origin="lower",
        extent=(-half_x, half_x, -half_y, half_y),
        cmap=_CMAP,
        aspect="equal",
        interpolation="nearest",
    )
    ax.set_title(title)
    return im


def _point_dirs(run_dir):
    """Benchmark point directories under run_dir, or run_dir itself."""
    if os.path.isfile(os.path.join(run_dir, "density_mc.csv")):
        return [run_dir]
    points = sorted(glob.glob(os.path.join(run_dir, "point_gamma*_kappa*")))
    if not points:
        raise FigureDataError(f"no density grids or point directories in {run_dir}")
    return points


def plot_density_panel(run_dir, out="figures_out"):
    """Density heatmaps (MC, FP oracle, Gamma4, Gamma6) with marginal overlays.

    Renders one panel per benchmark point: a 2x4 layout with the four 2D
    density grids on top and the q1/q2 marginal overlays below.
    """
    written = []
    for pdir in _point_dirs(run_dir):
        grids = {name: read_grid_csv(os.path.join(pdir, f"density_{name}.csv"))
                 for name in ("mc", "fp", "gamma4", "gamma6")}
        fig, axes = plt.subplots(2, 4, figsize=(11.0, 5.2))
        vmax = max(float(g.values.max()) for g in grids.values())
        for ax, (name, grid) in zip(axes[0], grids.items()):
            im = _centered_imshow(ax, grid, name)
            im.set_clim(0.0, vmax)
            ax.set_xlabel("q1")
            ax.set_ylabel("q2")
        for axis, fname, ax in (
            (0, "marginal_q1.csv", axes[1, 0]),
            (1, "marginal_q2.csv", axes[1, 1]),
        ):
            names, data = read_series_csv(os.path.join(pdir, fname))
            ax.plot(data[:, 0], data[:, 1], "k.", ms=3, label="mc")
            for col, style in (("fp", "-"), ("gamma4", "--"), ("gamma6", ":")):
                ax.plot(data[:, 0], data[:, names.index(col)], style, label=col)
            ax.set_xlabel(f"q{axis + 1}")
            ax.set_ylabel("marginal density")
            ax.legend(frameon=False)
        for ax in axes[1, 2:]:
            ax.axis("off")
        fig.tight_layout()
        tag = os.path.basename(pdir.rstrip(os.sep))
        written.append(_save(fig, out, f"density_{tag}.png"))
    return written


def plot_scaling(run_dir, out="figures_out"):
    """Log-log closure-stress error versus gamma with slope guide lines."""
    names, data = read_series_csv(os.path.join(run_dir, "err_vs_gamma.csv"))
    gammas = data[:, names.index("gamma")]
    fig, ax = plt.subplots(figsize=(4.6, 3.6))
    for col, marker in (("err_gamma4", "o"), ("err_gamma6", "s")):
        err = data[:, names.index(col)]
        keep = err > 0
        ax.loglog(gammas[keep], err[keep], marker + "-", label=col)
    gref = np.array([gammas.min(), gammas.max()])
    base = max(float(data[:, names.index("err_gamma4")].max()), 1e-300)
    for slope, style in ((4, "--"), (6, ":")):
        guide = base * (gref / gref.max()) ** slope
        ax.loglog(gref, guide, "k" + style, lw=0.8, label=f"slope {slope}")
    ax.set_xlabel("gamma")
    ax.set_ylabel("|tau11 - tau22| error vs oracle")
    ax.legend(frameon=False)
    fig.tight_layout()
    return [_save(fig, out, "scaling.png")]


def _snapshot_files(run_dir, stem):
    pattern = re.compile(rf"{re.escape(stem)}_t(\d+)\.csv$")
    found = []
    for path in glob.glob(os.path.join(run_dir, f"{stem}_t*.csv")):
        m = pattern.search(os.path.basename(path))
        if m:
            found.append((int(m.group(1)), path))
    return [path for _, path in sorted(found)]


def plot_flow_panels(run_dir, out="figures_out"):
    """Vorticity and density snapshot panels plus the y = 0 cross-section."""
    written = []
    stems = [s for s in ("omega", "f0", "density") if _snapshot_files(run_dir, s)]
    if not stems:
        raise FigureDataError(f"no snapshot grids in {run_dir}")
    for stem in stems:
        files = _snapshot_files(run_dir, stem)
        grids = [read_grid_csv(p) for p in files]
        fig, axes = plt.subplots(1, len(grids), figsize=(2.6 * len(grids), 2.9), squeeze=False)
        lim = max(max(abs(float(g.values.min())), abs(float(g.values.max()))) for g in grids)
        lim = lim or 1.0
        for ax, grid in zip(axes[0], grids):
            im = _imshow(ax, grid, f"t = {grid.time:g}")
            if stem == "omega":
                im.set_cmap("RdBu_r")
                im.set_clim(-lim, lim)
            ax.set_xlabel("x")
            ax.set_ylabel("y")
        fig.tight_layout()
        written.append(_save(fig, out, f"flow_{stem}.png"))
    profile = os.path.join(run_dir, "profile_y0.csv")
    if os.path.isfile(profile):
        names, data = read_series_csv(profile)
        fig, ax = plt.subplots(figsize=(4.6, 3.2))
        for col in names[1:]:
            ax.plot(data[:, 0], data[:, names.index(col)], label=col)
        ax.set_xlabel("x")
        ax.set_ylabel("y = 0 section")
        ax.legend(frameon=False)
        fig.tight_layout()
        written.append(_save(fig, out, "flow_profile.png"))
    return written


def plot_energy(run_dir, out="figures_out"):
    """Energy budget / kinetic-energy curves, or comparison-vs-gamma tables.

    Flow runs (energy.csv, optional ke.csv) render the component time
    series with the balance residual; benchmark runs (stress_table.csv)
    render the stress and energy comparison curves over gamma.
    """
    written = []
    energy = os.path.join(run_dir, "energy.csv")
    if os.path.isfile(energy):
        names, data = read_series_csv(energy)
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8.4, 3.2))
        for col in ("kinetic", "micro_free", "macro_dissip", "micro_dissip"):
            ax1.plot(data[:, 0], data[:, names.index(col)], label=col)
        ke = os.path.join(run_dir, "ke.csv")
        if os.path.isfile(ke):
            knames, kdata = read_series_csv(ke)
            ax1.plot(kdata[:, 0], kdata[:, 1], "k--", label="ke series")
        ax1.set_xlabel("t")
        ax1.set_ylabel("energy")
        ax1.legend(frameon=False)
        ax2.plot(data[:, 0], data[:, names.index("residual")])
        ax2.set_xlabel("t")
        ax2.set_ylabel("balance residual")
        fig.tight_layout()
        written.append(_save(fig, out, "energy.png"))
    table = os.path.join(run_dir, "stress_table.csv")
    if os.path.isfile(table):
        names, data = read_series_csv(table)
        gammas = data[:, names.index("gamma")]
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8.4, 3.2))
        for ax, cols, ylabel in (
            (ax1, ("taud_mc", "taud_fp", "taud_gamma4", "taud_gamma6"), "tau11 - tau22"),
            (ax2, ("E_mc", "E_fp", "E_gamma4", "E_gamma6"), "elastic energy"),
        ):
            for col, style in zip(cols, ("k.", "-", "--", ":")):
                ax.plot(gammas, data[:, names.index(col)], style, label=col)
            ax.set_xlabel("gamma")
            ax.set_ylabel(ylabel)
            ax.legend(frameon=False)
        fig.tight_layout()
        written.append(_save(fig, out, "comparison.png"))
    if not written:
        raise FigureDataError(f"neither energy.csv nor stress_table.csv in {run_dir}")
    return written
