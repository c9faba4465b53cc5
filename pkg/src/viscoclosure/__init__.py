"""Multiscale viscoelastic-fluid toolkit.

Implements an asymptotic closure for micro-macro polymeric-fluid models
(explicit density and stress expansions at the fast-relaxation limit)
alongside ground-truth microscopic solvers (Monte-Carlo SDE ensembles,
a deterministic stationary Fokker-Planck oracle) and a pseudo-spectral
2D vorticity flow solver, with energy diagnostics and scenario runners.
"""

__version__ = "0.1.0"

import os as _os

# Cap worker threads before the numerical libraries initialize their pools.
_cap = _os.environ.get("VISCO_THREADS")
if _cap:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _cap)

from .potentials import (
    Quadratic,
    FENE,
    DoubleWell,
    DomainError,
    StructureError,
    potential,
    gradient,
    hessian,
    local_minima,
    radial_psi,
)
from .asymptotic_closure import (
    ScalingParams,
    ClosureOrder,
    IllPosedTruncationError,
    density_coefficients,
    eval_density,
    normalize_density,
    marginals,
    stress_expansion,
    stress_quadratic_analytic,
    closure_forcing,
    recurrence_residual,
)
from .micro_moments import (
    QuadratureGrid,
    MomentSet,
    build_quadrature,
    moment_m,
    moment_G,
    normalized_moments,
    laplace_moments,
)

__all__ = [
    "Quadratic",
    "FENE",
    "DoubleWell",
    "DomainError",
    "StructureError",
    "potential",
    "gradient",
    "hessian",
    "local_minima",
    "radial_psi",
    "ScalingParams",
    "ClosureOrder",
    "IllPosedTruncationError",
    "density_coefficients",
    "eval_density",
    "normalize_density",
    "marginals",
    "stress_expansion",
    "stress_quadratic_analytic",
    "closure_forcing",
    "recurrence_residual",
    "QuadratureGrid",
    "MomentSet",
    "build_quadrature",
    "moment_m",
    "moment_G",
    "normalized_moments",
    "laplace_moments",
    "__version__",
]
