"""Reduced density-benchmark sweep with figure-ready artifacts.

The density benchmark drives all four density sources (Monte-Carlo ensemble,
deterministic oracle, and the two closure truncations) across a gamma sweep
and tabulates stresses, energies, and closure errors. The script runs a
small two-point sweep, prints the error table, and renders the density and
scaling panels from the run directory it leaves behind.

Run from the repository root:

    python demos/06_benchmark_sweep.py
"""

import os

import numpy as np

import viscoclosure.scenarios as sc


def main():
    config = sc.default_config("density_benchmark")
    config.sweep.update({"gamma_list": [0.2, 0.3], "kappa_list": [2.0]})
    config.quadrature["resolution"] = 128
    config.closure["grid_n"] = 96
    config.mc.update({"M": 5000, "snapshots": 100})
    config.output["dir"] = os.path.join("demo_out", "benchmark")

    print("running reduced density benchmark (gamma in {0.2, 0.3}, kappa = 2)...")
    run_dir = sc.run_density_benchmark(config)
    print(f"run directory: {run_dir}")
    print()

    table = np.loadtxt(os.path.join(run_dir, "stress_table.csv"), delimiter=",", skiprows=1)
    table = np.atleast_2d(table)
    print(f"{'gamma':>6} {'taud_mc':>10} {'taud_fp':>10} {'taud_g4':>10} {'taud_g6':>10}")
    for row in table:
        print(f"{row[0]:>6.2f} {row[2]:>10.5f} {row[3]:>10.5f} {row[4]:>10.5f} {row[5]:>10.5f}")

    errs = np.loadtxt(os.path.join(run_dir, "err_vs_gamma.csv"), delimiter=",", skiprows=1)
    errs = np.atleast_2d(errs)
    print()
    print(f"{'gamma':>6} {'closure error g4':>17} {'closure error g6':>17}")
    for row in errs:
        print(f"{row[0]:>6.2f} {row[2]:>17.3e} {row[3]:>17.3e}")
    print()
    print("Two things to notice. The Monte-Carlo stress column is sampling-noise")
    print("dominated at this reduced ensemble size (its grad-U integrand is")
    print("boundary-singular on the FENE disk and converges slowly), which is")
    print("exactly the gap the deterministic closure columns fill. And the two")
    print("truncations tabulate the same stress difference in a pure-strain")
    print("flow even though their densities differ (compare demo 01).")
    print()
    print("render the panels with:")
    print(f"  python -m figures density {run_dir}")
    print(f"  python -m figures scaling {run_dir}")


if __name__ == "__main__":
    main()
