"""uscatter: conservative lattice simulator for the p-adic scattering equation.

The package discretizes the nonlocal gain-loss evolution over truncated
balls of (Q_p)^n into a finite linear system whose qualitative theory --
mass conservation, positivity, L1 contraction, relative-entropy dissipation,
Poincaré-controlled exponential decay, rescaled L2 bounds, and two-solution
stability -- holds exactly or to quantified tolerances, and ships the
verification machinery for every one of those properties.
"""

from .errors import (
    CheckFailure,
    ConfigError,
    DegenerateGrid,
    DiagonalSingularity,
    GridMismatch,
    GridTooLarge,
    IndexOutOfRange,
    InsufficientSamples,
    KernelValidationError,
    MissingAnalyticK,
    NegativeKernelValue,
    NegativeLoss,
    NonConvergence,
    NonEvaluable,
    NonPositiveN,
    NonPositiveValue,
    NonPrimeP,
    NonRadialKernel,
    NoPositiveSteadyState,
    ReducibleGenerator,
    StepTooLarge,
    ToleranceNotReached,
    UscatterError,
)
from .padic_core import (
    CellCoords,
    Grid,
    LatticeFunction,
    build_grid,
    cell_diff,
    cell_index,
    cell_norm,
    constant_function,
    coords_of,
    integrate,
    l1_norm,
    l2_norm,
    lattice_function,
    norm_levels,
    representatives,
)
from .kernel import (
    ConstantKernel,
    DetailedBalanceKernel,
    KernelMatrix,
    ProjectionKernel,
    RadialKernel,
    SymmetricKernel,
    TableKernel,
    TimeDependentKernel,
    build_kernel_matrix,
    detailed_balance_residual,
    eval_kernel,
    is_radial,
    load_kernel_table,
    validate_kernel,
)
from .generator import (
    ANALYTIC,
    COLUMN_SUM,
    Generator,
    ModulatedGenerator,
    RescaleLevel,
    apply,
    apply_dual,
    assemble,
    assemble_spec,
    l1_lipschitz_bound,
    regularity_constant,
    rescale,
)
from .spectral import (
    AlphaEstimate,
    SteadyPair,
    compute_rho,
    dissipation_form,
    estimate_alpha,
    make_steady_pair,
    solve_dual_steady,
    solve_steady,
)
from .entropy import (
    DIAGNOSTICS_HEADER,
    DiagnosticsRow,
    EntropyFn,
    EntropyProductionReport,
    absolute,
    diagnostics,
    entropy_production_check,
    fit_decay_rate,
    gre_dissipation_rhs,
    linear,
    neg_part_sq,
    pos_part_sq,
    relative_entropy,
    smoothed_sign,
    square,
    write_diagnostics_csv,
)
from .dynamics import (
    EXPM_ORACLE,
    PICARD,
    RK4,
    IntegratorSpec,
    RescaledReport,
    StabilityReport,
    Trajectory,
    evolve,
    evolve_dual,
    expm_apply,
    picard_iterate,
    run_rescaled,
    run_stability,
    step_rk4,
    transpose_generator,
    write_trajectory_csv,
)
from .rng import SplitMix64

__version__ = "0.1.0"
