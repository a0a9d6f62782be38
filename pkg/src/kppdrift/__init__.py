"""Minimal KPP front speeds for periodic reaction-advection-diffusion in 2D.

Computes the finite-drift minimal speed c*(e) through the principal
eigenvalue of the associated elliptic operator family, its large-drift limit
via constrained maximization over discrete first integrals, and the
streamline-topology classification (closed / unbounded periodic / unbounded
non-periodic) that decides whether that limit is positive.
"""

from .domain import (
    STRIP,
    TORUS,
    AdmissibilityReport,
    Direction,
    FlowSpec,
    PeriodicCell,
    ReactionSpec,
    ScalarField,
    TensorField,
    VectorField,
    cell_integral,
    check_admissibility,
    flow_stream_function,
    sample_flow,
)
from .errors import (
    AdmissibilityError,
    BracketingError,
    EigenConvergenceError,
    InconclusiveSurveyError,
    InputError,
    KppDriftError,
    NumericalError,
    PositivityError,
    UnbracketedMinimumError,
)
from .firstintegrals import (
    KernelBasis,
    LimitSpeedResult,
    advection_constraint_operator,
    drift_moment,
    feasibility_check,
    kernel_basis,
    limit_speed,
)
from .speed import (
    ConvergenceReport,
    EigenCurvePoint,
    SearchParams,
    SpeedResult,
    convergence_study,
    minimal_speed,
    principal_eigenvalue,
)
from .stream import (
    HodgeReport,
    StreamFunction,
    stream_from_velocity,
    velocity_from_stream,
    verify_hodge,
)
from .trajectories import (
    FlowSurvey,
    Streamline,
    TrajectoryClassification,
    classify_streamline,
    integrate_orbit,
    integrate_streamline,
    survey_flow,
)

__version__ = "0.1.0"
