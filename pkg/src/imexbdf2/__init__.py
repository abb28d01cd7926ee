"""Variable time-step IMEX BDF2 for 1-D parabolic integro-differential equations."""

from .kernels import (
    bdf2_kernels,
    dcc_explicit,
    dcc_from_doc,
    doc_kernels,
)
from .mesh import C_R, R_MAX, TimeMesh, build_graded_mesh, check_ratio_condition
from .problems import (
    MertonParams,
    PideProblem,
    manufactured_problem,
    merton_problem,
    merton_reference_price,
    price_at,
)
from .spatial import IntegralOperator, SpatialGrid, l2_norm
from .stepper import SolveResult, run

__version__ = "0.1.0"
