"""Structure identification in varying-coefficient Cox models.

Spline-sieve expansion of time-varying, index-varying, and additive
covariate effects, penalized partial-likelihood fitting with blockwise
penalties, threshold-based structure selection, and finite-sample oracle
diagnostics, with a command-line front end for reproducible runs.
"""

from .basis import (
    OrthonormalBasis,
    ProjectedFunction,
    RawBasis,
    build_raw_basis,
    orthonormalize,
    project_function,
)
from .config import ConfigError, RunConfig, load_config, parse_config, save_config, serialize_config
from .data import (
    DataFormatError,
    Family,
    GFunction,
    SurvivalDataset,
    TruthSpec,
    censoring_rate,
    load_csv,
    parse_g_function,
    save_csv,
    simulate,
)
from .diagnostics import (
    ConeBrackets,
    DiagnosticsError,
    OracleReport,
    c_w,
    cone_quantities,
    deviation,
    oracle_check,
    p1_norm,
    p_inf_norm,
    predictor_spread,
    tau_eta,
    true_coefficients,
)
from .likelihood import (
    Block,
    BlockLayout,
    DesignExpansion,
    GroupCoefficients,
    LikelihoodError,
    expand_design,
    full_hessian,
    gradient,
    hessian_quadratic,
    neg_log_pl,
    value_and_gradient,
)
from .riskset import BACKEND
from .select import (
    CellScores,
    FunctionEstimates,
    SelectError,
    SelectionResult,
    SelectionScores,
    extract_estimates,
    score_selection,
    threshold_select,
)
from .solver import (
    FitResult,
    PenaltyKind,
    PenaltySpec,
    SolverError,
    fit,
    kkt_residual,
    lambda_max,
    lambda_path,
    penalty_value,
    prox,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Block",
    "BlockLayout",
    "CellScores",
    "ConeBrackets",
    "ConfigError",
    "DataFormatError",
    "DesignExpansion",
    "DiagnosticsError",
    "Family",
    "FitResult",
    "FunctionEstimates",
    "GFunction",
    "GroupCoefficients",
    "LikelihoodError",
    "OracleReport",
    "OrthonormalBasis",
    "PenaltyKind",
    "PenaltySpec",
    "ProjectedFunction",
    "RawBasis",
    "RunConfig",
    "SelectError",
    "SelectionResult",
    "SelectionScores",
    "SolverError",
    "SurvivalDataset",
    "TruthSpec",
    "build_raw_basis",
    "c_w",
    "censoring_rate",
    "cone_quantities",
    "deviation",
    "expand_design",
    "extract_estimates",
    "fit",
    "full_hessian",
    "gradient",
    "hessian_quadratic",
    "kkt_residual",
    "lambda_max",
    "lambda_path",
    "load_config",
    "load_csv",
    "neg_log_pl",
    "oracle_check",
    "orthonormalize",
    "p1_norm",
    "p_inf_norm",
    "parse_config",
    "parse_g_function",
    "penalty_value",
    "predictor_spread",
    "project_function",
    "prox",
    "save_config",
    "save_csv",
    "score_selection",
    "serialize_config",
    "simulate",
    "tau_eta",
    "threshold_select",
    "true_coefficients",
    "value_and_gradient",
    "__version__",
]
