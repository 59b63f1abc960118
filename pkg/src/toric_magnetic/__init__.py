"""Magnetic geodesics on toric Kahler potentials.

A discrete Landau-Hall functional on paths of convex potentials over a box,
its exact gradient, residuals of the geodesic and magnetic geodesic
equations, Legendre-transform references and a continuation solver.
"""

from .functional import (
    CouplingConfig,
    GradCheckRow,
    PotentialPath,
    energy,
    gradient_check,
    lh,
    lh_gradient,
    magnetic_term,
)
from .grid import (
    EndpointDerivativeError,
    Grid,
    HessField,
    ScalarField,
    TimeAxis,
    VectorField,
    gradient_fd,
    hessian_fd,
    integrate,
    time_derivative,
)
from .ma_ops import (
    ConvexityError,
    RangeCoverageError,
    ToricBackground,
    ToricPotential,
    cofactor_pairing,
    legendre,
    ma_density,
    md,
    mixed_ma_density,
)
from .residuals import (
    ResidualReport,
    energy_profile,
    geodesic_residual,
    hcma_residual,
    magnetic_residual,
)
from .solver import (
    SolveResult,
    SolverConfig,
    SolverPreconditionError,
    dual_interpolation_geodesic,
    oracle_geodesic,
    quadratic_geodesic,
    solve,
)

__version__ = "0.1.0"
