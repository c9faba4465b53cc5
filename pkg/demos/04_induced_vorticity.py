"""Vorticity induced by an inhomogeneous polymer blob in a strain background.

A Gaussian polymer-density blob sits in an extensional background flow that,
by itself, carries no vorticity. The equilibrium polymeric stress is constant
in space, so every bit of perturbation vorticity is induced by density
gradients acting through the stress coupling. The script runs the scenario at
a reduced grid, prints the growth of the perturbation kinetic energy from its
exact zero start, and leaves behind a run directory that the figures package
can render.

Run from the repository root:

    python demos/04_induced_vorticity.py
"""

import os

import numpy as np

import viscoclosure.scenarios as sc


def main():
    config = sc.default_config("induced_vorticity")
    # Reduced scale: a gentler strain and a wider blob keep the advected
    # density resolved on a 128^2 grid for the whole run (the background
    # compresses sigma_y by e^{-kappa t}, which at the full kappa = 2 and
    # sigma_x = 0.1 needs the default 256^2 grid).
    config.flow.update({"nx": 128, "ny": 128, "kappa": 1.0, "dt": 2e-3, "T": 1.0, "snapshots": 5})
    config.density["sigma_x"] = 0.3
    config.closure["grid_n"] = 128
    config.quadrature["resolution"] = 128
    config.output["dir"] = os.path.join("demo_out", "induced_vorticity")

    print("running induced-vorticity scenario (FENE, closure stress source)...")
    run_dir = sc.run_induced_vorticity(config)
    print(f"run directory: {run_dir}")
    print()

    ke = np.loadtxt(os.path.join(run_dir, "ke.csv"), delimiter=",", skiprows=1)
    stress = np.loadtxt(os.path.join(run_dir, "stress.csv"), delimiter=",", skiprows=1)
    print(f"equilibrium stress: tau11 = {stress[0]:.5f}, tau22 = {stress[3]:.5f}")
    print(f"normal-stress difference driving the flow: {stress[0] - stress[3]:.5f}")
    print()
    print(f"{'t':>6} {'perturbation KE':>16}")
    for i in np.linspace(0, len(ke) - 1, 6).astype(int):
        print(f"{ke[i, 0]:>6.2f} {ke[i, 1]:>16.6e}")
    print()
    print(f"KE starts at exactly {ke[0, 1]:.1f} and stays bounded: the blob's")
    print("density gradients source a quadrupolar vorticity field that saturates")
    print("as the blob is stretched and diffused by the background strain.")
    print()
    print("render the snapshots with:")
    print(f"  python -m figures flow {run_dir}")
    print(f"  python -m figures energy {run_dir}")


if __name__ == "__main__":
    main()
