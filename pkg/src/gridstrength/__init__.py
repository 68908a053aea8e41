"""Grid-strength indices and small-signal mode analysis for multi-converter
AC systems: generalized short-circuit ratios from weighted susceptance
eigenvalues, verified against closed-loop modes of the assembled
transfer-function system.
"""

from .assembly import (
    FrobeniusReport,
    SvisEquivalent,
    decouple,
    frobenius_check,
    grid_jacobian_multi,
    grid_jacobian_single,
    mpeis_char_matrix,
    mpeis_modes,
    scr_quadratic_coeffs,
    svis_char,
    svis_modes,
)
from .converter import DC_VOLTAGE, PQ, DeviceModel, PIGains, vsc_admittance, vsc_jacobian
from .errors import (
    AssumptionError,
    BracketError,
    ConfigError,
    GridStrengthError,
    OperatingPointError,
    SingularMatrixError,
    TopologyError,
    ValidationError,
)
from .network import (
    Branch,
    DeviceSpec,
    GridSpec,
    OperatingPoint,
    SusceptanceMatrix,
    build_susceptance,
    extended_jacobian,
    kron_reduce,
    operating_point_from_angles,
    operation_jacobian,
    power_injections,
)
from .rational import (
    MatrixPolynomial,
    Mode,
    ModeSet,
    RationalFn,
    TransferMatrix,
    alpha_beta,
    poly_eigs,
)
from .strength import (
    EigenSystem,
    ParticipationTable,
    SensitivityReport,
    capacity_eigensystem,
    gscr,
    ogscr,
    operation_eigensystem,
    participation,
    scr_single,
    sensitivities,
    weighted_eigensystem,
)
from .studies import (
    CriticalIndex,
    DecouplingReport,
    ParamPath,
    StabilityVerdict,
    SweepResult,
    calibrate_dclink,
    cscr_search,
    decoupling_verify,
    param_sweep,
    scr_sweep,
    stability_assess,
)

__version__ = "0.1.0"
