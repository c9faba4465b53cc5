"""Asymptotic closure densities versus the deterministic stationary oracle.

For a FENE dumbbell in a pure-strain background gradient, the stationary
configuration density is computed three ways: the fourth-order closure
expansion, the sixth-order closure expansion, and the deterministic
Fokker-Planck oracle on a fine grid. The script prints the resulting
polymeric stresses and total-variation distances so the closure quality at a
moderate gamma can be read off directly.

Run from the repository root:

    python demos/01_closure_density.py
"""

import numpy as np

import viscoclosure.asymptotic_closure as ac
import viscoclosure.micro_moments as mm
import viscoclosure.micro_solvers as ms
import viscoclosure.potentials as pot


def main():
    spec = pot.FENE(H=0.1, Q0=1.5)
    params = ac.ScalingParams(gamma=0.3, c=1.0, lam=1.0, eta=0.01, rho=1.0)
    kappa = 2.0
    gradu = np.array([[kappa, 0.0], [0.0, -kappa]])

    print(f"FENE dumbbell, gamma = {params.gamma}, kappa = {kappa}")
    print(f"diffusion D = c / gamma^4 = {params.D:.4g}")
    print()

    # Deterministic oracle density and its stress. At stationarity the
    # second-moment balance gives tau = gamma^2 I + (gradu M2 + M2 gradu^T)/2D,
    # which avoids the boundary-singular grad-U integrand on the FENE disk.
    grid_n = 192
    f_fp = ms.stationary_fp_oracle(spec, gradu, params, grid_n)
    xs, _ = ms.fp_oracle_coordinates(spec, params.gamma, grid_n)
    h = xs[1] - xs[0]
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    nodes = np.stack([X, Y], axis=-1)
    M2 = np.einsum("xy,xyi,xyj->ij", f_fp, nodes, nodes) * h * h
    tau_fp = params.gamma**2 * np.eye(2) + (gradu @ M2 + M2 @ gradu.T) / (2.0 * params.D)

    grid = mm.build_quadrature(spec, params.gamma, 256)
    moments = mm.normalized_moments(grid, gradu)
    inside = np.sum(nodes * nodes, axis=-1) < (spec.Q0 * (1.0 - 1e-9)) ** 2

    print(f"{'source':<10} {'tau11':>10} {'tau22':>10} {'tau11-tau22':>12} {'TV vs oracle':>13}")
    print(
        f"{'oracle':<10} {tau_fp[0, 0]:>10.6f} {tau_fp[1, 1]:>10.6f} "
        f"{tau_fp[0, 0] - tau_fp[1, 1]:>12.6f} {'-':>13}"
    )

    for order in (ac.ClosureOrder.GAMMA4, ac.ClosureOrder.GAMMA6):
        # stress_expansion carries the equilibrium bracket G0 = gamma^2 m0 I
        # as an exact zero; add it back for a like-for-like table.
        tau = params.gamma**2 * np.eye(2) + ac.stress_expansion(moments, 1.0, params, order)
        vals = np.zeros(X.shape)
        vals[inside] = ac.eval_density(spec, gradu, params, order, nodes[inside])
        vals = np.clip(vals, 0.0, None)
        vals /= np.sum(vals) * h * h
        tv = 0.5 * float(np.sum(np.abs(vals - f_fp)) * h * h)
        name = "gamma^4" if order is ac.ClosureOrder.GAMMA4 else "gamma^6"
        print(
            f"{name:<10} {tau[0, 0]:>10.6f} {tau[1, 1]:>10.6f} "
            f"{tau[0, 0] - tau[1, 1]:>12.6f} {tv:>13.3e}"
        )

    print()
    print("Both truncations agree with the oracle to a few parts per thousand")
    print("at this gamma; raise gamma in the script to watch the expansions")
    print("separate from the oracle as the scaling assumption degrades.")


if __name__ == "__main__":
    main()
