"""Post-stratified instrumental-variable estimation of complier effects.

The package splits into observed-data estimators (estimators, variance),
finite-population analytics over complete potential-outcome tables
(theory), a deterministic Monte Carlo engine (simulation), and dataset /
report / CLI plumbing (io_cli). data_model holds the shared types.
"""

from .data_model import (
    ALWAYS_TAKER,
    COMPLIER,
    NEVER_TAKER,
    AllStrataDropped,
    DefierPresent,
    EmptyBin,
    EmptyFile,
    EstimateReport,
    EstimationError,
    ExclusionViolation,
    Infeasible,
    InfeasibleCompliance,
    MalformedRow,
    MissingColumn,
    NoCompliers,
    ObservedSample,
    ObservedUnit,
    ScienceTable,
    StratumSummary,
    TooSmall,
    ZeroCompliance,
    science_to_observed,
    stratum_summaries,
    summarize_stratum,
    validate,
)
from .estimators import (
    METHODS,
    EstimatorConfig,
    estimate,
    f_hat,
    first_stage_f,
    itt_hat,
    iv_across,
    iv_dsf,
    iv_dss,
    iv_pwiv,
    iv_unstratified,
    iv_within,
    oracle_complier_dim,
    tsls_dummies,
    tsls_weighted,
)
from .io_cli import (
    DatasetSchema,
    ReportRow,
    ReportTable,
    StratumRow,
    analyze,
    cli_main,
    load_csv,
    load_science_csv,
    read_metrics_csv,
    save_csv,
    stratum_report,
    write_metrics_csv,
)
from .simulation import (
    RNG_FAMILY,
    ConcentrationConfig,
    EstimatorMetrics,
    ScenarioConfig,
    ScenarioMetrics,
    default_grid,
    generate_concentration_table,
    generate_random_strata,
    generate_science_table,
    run_concentration,
    run_grid,
    run_scenario,
)
from .theory import (
    ENUMERATION_CAP,
    EnumerationResult,
    PopulationMoments,
    asyvar_iv,
    asyvar_iv_ps,
    bias_one_sided_exact,
    bias_one_sided_taylor,
    bias_two_sided_taylor,
    enumerate_expectation,
    moments,
)
from .variance import (
    VarianceComponents,
    arm_moments,
    se_bloom_ps,
    se_bloom_unstrat,
    se_delta_ps,
    se_delta_unstrat,
    se_pwiv,
    var_itt_neyman,
    variance_components,
)

__version__ = "0.1.0"

__all__ = [
    "ALWAYS_TAKER",
    "COMPLIER",
    "NEVER_TAKER",
    "AllStrataDropped",
    "DefierPresent",
    "EmptyBin",
    "EmptyFile",
    "EstimateReport",
    "EstimationError",
    "ExclusionViolation",
    "Infeasible",
    "InfeasibleCompliance",
    "MalformedRow",
    "MissingColumn",
    "NoCompliers",
    "ObservedSample",
    "ObservedUnit",
    "ScienceTable",
    "StratumSummary",
    "TooSmall",
    "ZeroCompliance",
    "science_to_observed",
    "stratum_summaries",
    "summarize_stratum",
    "validate",
    "METHODS",
    "EstimatorConfig",
    "estimate",
    "f_hat",
    "first_stage_f",
    "itt_hat",
    "iv_across",
    "iv_dsf",
    "iv_dss",
    "iv_pwiv",
    "iv_unstratified",
    "iv_within",
    "oracle_complier_dim",
    "tsls_dummies",
    "tsls_weighted",
    "DatasetSchema",
    "ReportRow",
    "ReportTable",
    "StratumRow",
    "analyze",
    "cli_main",
    "load_csv",
    "load_science_csv",
    "read_metrics_csv",
    "save_csv",
    "stratum_report",
    "write_metrics_csv",
    "RNG_FAMILY",
    "ConcentrationConfig",
    "EstimatorMetrics",
    "ScenarioConfig",
    "ScenarioMetrics",
    "default_grid",
    "generate_concentration_table",
    "generate_random_strata",
    "generate_science_table",
    "run_concentration",
    "run_grid",
    "run_scenario",
    "ENUMERATION_CAP",
    "EnumerationResult",
    "PopulationMoments",
    "asyvar_iv",
    "asyvar_iv_ps",
    "bias_one_sided_exact",
    "bias_one_sided_taylor",
    "bias_two_sided_taylor",
    "enumerate_expectation",
    "moments",
    "VarianceComponents",
    "arm_moments",
    "se_bloom_ps",
    "se_bloom_unstrat",
    "se_delta_ps",
    "se_delta_unstrat",
    "se_pwiv",
    "var_itt_neyman",
    "variance_components",
]
