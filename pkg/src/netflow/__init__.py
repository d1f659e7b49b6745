"""Curvature flow of triple-junction curve networks.

Semi-implicit simulator for the motion by curvature of planar (and
higher-codimension) triods: three curves joined at a movable junction with
far endpoints pinned, the junction tangents held at mutual 120 degrees.
Includes linear-step assembly and solve, a spectral well-posedness check,
constant-speed reparametrisation, set-level network comparison, exact
reference solutions, file formats, and a command-line driver.
"""

from .errors import (
    AssemblyError,
    FlowError,
    InadmissibleInitialData,
    InfeasibleSteiner,
    InvalidLambdaError,
    IoError,
    ParseError,
    PicardDivergence,
    RegularityError,
    SingularSystemError,
    ValidationError,
)
from .geometry import (
    CurveState,
    Grid,
    JunctionResiduals,
    SingleCurveState,
    TriodState,
    curvature_vector,
    junction_residuals,
    l2_curvature,
    length,
    min_speed,
    speed,
    tangent,
    total_length,
)
from .linearized import (
    BoundaryCheckReport,
    CompatibilityReport,
    FrozenCoefficients,
    LinearData,
    LinearStepSystem,
    assemble,
    check_compatibility,
    lopatinskii_shapiro_check,
    solve,
)
from .oracles import (
    OracleCase,
    brute_force_length_decay,
    bumped_triod,
    fermat_point,
    infeasible_triod,
    parallel_tangent_triod,
    shrinking_circle,
    steiner_triod,
    unit_steiner_triod,
)
from .reparam import (
    PolylineSet,
    hausdorff_distance,
    resample_constant_speed,
    resample_state,
    state_distance,
)
from .solver import (
    FlowConfig,
    RunResult,
    StepReport,
    StopReason,
    nonlinearity_b,
    nonlinearity_f,
    regularity_guard,
    run,
    step,
)

__version__ = "0.1.0"
