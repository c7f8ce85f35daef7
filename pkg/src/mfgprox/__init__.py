"""Proximal splitting solvers for discrete ergodic mean-field equilibria on
the periodic unit square: a forward-backward engine for objectives with
ball-restricted curvature, the dual problem machinery it drives, baseline
splittings, primal recovery, and an experiment CLI."""

from .convex import (
    Cone,
    ell_star_quad,
    ell_star_quad_prime,
    lambert_w0_of_log,
    project_K,
    project_polar_K,
    prox_support_from_projection,
    zeta,
)
from .coupling import (
    LogCoupling,
    PowerEntropyCoupling,
    coupling_field,
    fstar_prime_log,
    fstar_prime_power_entropy,
)
from .dual import (
    ConeSite,
    DualPoint,
    DualProblem,
    explicit_solution_log,
    g_function,
    grad_phi,
    local_constants_log,
    solve_dual_fbs,
)
from .fb import (
    DivergedError,
    ExactError,
    LocalConstants,
    ProxOracle,
    SmoothOracle,
    SolveReport,
    SolverConfig,
    SuccessiveRelative,
    Termination,
    contraction_factor,
    fbs_iterate,
    fbs_solve,
    near_limit_step,
    optimal_step,
    theoretical_error_bound,
)
from .grid import (
    ConstraintOperator,
    assemble_constraint,
    d1,
    d2,
    dh,
    div_h,
    laplacian_h,
    read_field,
    read_grid,
    write_field,
    write_grid,
)
from .projections import (
    AffineProjector,
    DykstraConfig,
    DykstraState,
    project_affine,
    project_DK,
)
from .recover import HjbSolution, PrimalPoint, primal_objective, recover_hjb, recover_primal
from .baselines import (
    BaselineConfig,
    RunRecord,
    cp_solve,
    dr_solve,
    harness_run,
    prox_phi_field,
    prox_phi_pointwise,
    records_to_csv,
    run_algorithm,
)

__version__ = "0.1.0"
