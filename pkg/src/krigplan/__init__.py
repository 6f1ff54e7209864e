"""krigplan: ordinary-kriging metamodeling and adaptive measurement planning.

Maps the region of a 2-D parameter grid where an expensive, noisy response
stays at or below a threshold, spending as few measurements as possible.
The workflow mirrors the practitioner loop: measure an initial design, fit
a semi-variogram, krige the whole grid with confidence intervals, then
repeatedly measure the combination that most reduces the uncertainty that
still matters (points whose interval straddles the threshold) until either
no such points remain or the measurement budget runs out.
"""
from .adaptive import (
    ExperimentConfig,
    ExperimentState,
    IterationRecord,
    PendingSuggestion,
    STOP_BUDGET,
    STOP_NATURAL,
    candidate_scores,
    check_stop,
    rc_score,
    record_appended_measurement,
    run_experiment,
    select_next,
    suggest_next,
    weight_indicator,
)
from .errors import (
    ConfigurationError,
    DuplicateLocationError,
    InsufficientDataError,
    KrigplanError,
    NumericalFailureError,
    OracleMissError,
    SchemaError,
)
from .grid import (
    Combination,
    GridSpec,
    Measurement,
    build_grid,
    distance,
    evenly_spaced_design,
)
from .kriging import (
    GridSolution,
    KrigingSystem,
    Prediction,
    SolvedWeights,
    Z_QUANTILES,
    assemble_system,
    predict,
    predict_grid,
    solve,
    solve_grid,
    z_quantile,
)
from .oracle import (
    ResponseRecord,
    SyntheticLogisticOracle,
    TableReplayOracle,
    build_oracle,
    load_response_table,
    reduce_event_maxima,
)
from .region import (
    CONFIDENTLY_ABOVE,
    MEASURED_FAIL,
    MEASURED_PASS,
    RELIABLE_CANDIDATE,
    RegionReport,
    UNCERTAIN,
    classify_grid,
    largest_reliable_region,
    threshold_contour,
)
from .variogram import (
    BOUNDED_LINEAR,
    EXPONENTIAL,
    FAMILIES,
    GAUSSIAN,
    SPHERICAL,
    EmpiricalVariogram,
    VariogramBin,
    VariogramModel,
    empirical_variogram,
    eval_model,
    fit_model,
    select_model,
)

__version__ = "0.1.0"

__all__ = [
    "BOUNDED_LINEAR",
    "CONFIDENTLY_ABOVE",
    "Combination",
    "ConfigurationError",
    "DuplicateLocationError",
    "EXPONENTIAL",
    "EmpiricalVariogram",
    "ExperimentConfig",
    "ExperimentState",
    "FAMILIES",
    "GAUSSIAN",
    "GridSolution",
    "GridSpec",
    "InsufficientDataError",
    "IterationRecord",
    "KrigingSystem",
    "KrigplanError",
    "MEASURED_FAIL",
    "MEASURED_PASS",
    "Measurement",
    "NumericalFailureError",
    "OracleMissError",
    "PendingSuggestion",
    "Prediction",
    "RELIABLE_CANDIDATE",
    "RegionReport",
    "ResponseRecord",
    "SPHERICAL",
    "STOP_BUDGET",
    "STOP_NATURAL",
    "SchemaError",
    "SolvedWeights",
    "SyntheticLogisticOracle",
    "TableReplayOracle",
    "UNCERTAIN",
    "VariogramBin",
    "VariogramModel",
    "Z_QUANTILES",
    "assemble_system",
    "build_grid",
    "build_oracle",
    "candidate_scores",
    "check_stop",
    "classify_grid",
    "distance",
    "empirical_variogram",
    "eval_model",
    "evenly_spaced_design",
    "fit_model",
    "largest_reliable_region",
    "load_response_table",
    "predict",
    "predict_grid",
    "rc_score",
    "record_appended_measurement",
    "reduce_event_maxima",
    "run_experiment",
    "select_model",
    "select_next",
    "solve",
    "solve_grid",
    "suggest_next",
    "threshold_contour",
    "weight_indicator",
    "z_quantile",
]
