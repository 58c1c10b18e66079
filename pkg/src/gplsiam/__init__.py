"""Generalized partially linear single-index additive models.

Penalized Fisher scoring with P-splines whose knot boundaries track the
estimated index values, Fellner-Schall smoothing updates recycled from the
same Cholesky factor, and delta-method bands for the fitted smooths.
"""

from .basis import (
    BasisBlock,
    KnotVector,
    OutOfSpanError,
    center_and_drop,
    eval_basis,
    eval_deriv_basis,
    make_knots,
)
from .family import (
    Family,
    family_by_name,
    penalized_loglik,
    quantile_residuals,
    update_phi,
    weights_and_variance,
    working_response,
)
from .fit import (
    CoefficientLayout,
    FitConfig,
    FittedModel,
    FittedTerm,
    ModelSpec,
    NonConvergenceError,
    Prediction,
    TermSpec,
    fit,
    initialize,
    lambda_update,
    predict,
    psi_update,
)
from .index import expand_alpha, index_covariate, jacobian, term_model_matrix
from .inference import Band, InferenceReport, coef_table, confidence_band, edf
from .numkernel import (
    CholFactor,
    FactorizationError,
    cholesky,
    inverse_factor,
    solve_two_triangular,
    weighted_crossprod,
)
from .penalty import (
    BlockPenalty,
    TermPenalty,
    assemble_penalty,
    difference_penalty,
    penalty_pseudo_inverse,
)
from .sim import (
    SCENARIO_NAMES,
    ReplicateResult,
    Scenario,
    SimulatedData,
    StudySummary,
    classify,
    generate,
    run_study,
    scenario,
)

__version__ = "0.1.0"

__all__ = [
    "BasisBlock",
    "KnotVector",
    "OutOfSpanError",
    "center_and_drop",
    "eval_basis",
    "eval_deriv_basis",
    "make_knots",
    "Family",
    "family_by_name",
    "penalized_loglik",
    "quantile_residuals",
    "update_phi",
    "weights_and_variance",
    "working_response",
    "CoefficientLayout",
    "FitConfig",
    "FittedModel",
    "FittedTerm",
    "ModelSpec",
    "NonConvergenceError",
    "Prediction",
    "TermSpec",
    "fit",
    "initialize",
    "lambda_update",
    "predict",
    "psi_update",
    "expand_alpha",
    "index_covariate",
    "jacobian",
    "term_model_matrix",
    "Band",
    "InferenceReport",
    "coef_table",
    "confidence_band",
    "edf",
    "CholFactor",
    "FactorizationError",
    "cholesky",
    "inverse_factor",
    "solve_two_triangular",
    "weighted_crossprod",
    "BlockPenalty",
    "TermPenalty",
    "assemble_penalty",
    "difference_penalty",
    "penalty_pseudo_inverse",
    "SCENARIO_NAMES",
    "ReplicateResult",
    "Scenario",
    "SimulatedData",
    "StudySummary",
    "classify",
    "generate",
    "run_study",
    "scenario",
    "__version__",
]
