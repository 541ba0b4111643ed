"""Numerical laboratory for transport-limited erosion.

Integrates the degenerate 4-Laplacian gradient flow of a land surface over
a given water depth on a cylinder domain, certifies its dissipation,
contraction, and entropy properties, evaluates the closed-form terrain
families, and verifies that the instantaneous sediment flow direction
solves the L1 optimal-transport problem.
"""

from .grid import (
    CAPACITY_EXPONENT,
    GridError,
    GridSpec,
    PlacementError,
    ScalarField,
    VectorField,
    WeightError,
    boundary_face_flux,
    divergence,
    field_norms,
    gradient,
    make_grid,
    sediment_flux,
)
from .analytic import (
    BlowupTimeError,
    ConstraintError,
    DecayLaw,
    DegenerateVolumeError,
    DomainError,
    HillParams,
    SeparableParams,
    curl_residual,
    flux_volume_rate,
    hill_fields,
    mountain_fields,
    pde_residual,
    residual_mask,
    ridge_fields,
    time_factor,
    validate_exponents,
)
from .evolve import (
    ComparisonError,
    Diagnostics,
    EvolveOptions,
    FitError,
    StabilityError,
    Trajectory,
    contraction_check,
    dissipation_report,
    fit_decay,
    mass_balance_report,
    run,
    stable_dt,
    step,
)
from .analysis import (
    BallFamily,
    InsufficientDataError,
    ParameterError,
    SupportError,
    TestFunction,
    ZeroSet,
    default_ball_family,
    entropy_residual,
    make_test_functions,
    muckenhoupt_a4,
    truncate,
    weak_residual,
    zero_set,
)
from .transport import (
    BalanceError,
    ConvergenceError,
    DirectionField,
    DiscreteMeasure,
    DualPotential,
    EmptyComparisonError,
    MarginalError,
    MeasurePair,
    NoTransportError,
    SizeCapError,
    TransportPlan,
    alignment_report,
    build_measures,
    displacement_directions,
    solve_dual,
    solve_primal_exact,
    solve_sinkhorn,
)

__version__ = "0.1.0"
