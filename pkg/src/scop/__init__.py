"""Selection-conditional conformal prediction.

Build prediction intervals for test units that survive a data-driven
selection step, with false coverage rate control: selection-conditional
calibration (with its inflated-threshold variant), ordinary split conformal,
and the FCR-adjusted per-unit correction, plus a catalog of selection rules
and a seeded Monte Carlo harness.
"""

__version__ = "0.1.0"

from .cli_io import (
    DataError,
    load_labeled_csv,
    load_precomputed_csv,
    load_test_csv,
    read_table,
    results_csv,
    results_json,
    write_dataset_csv,
    write_intervals_csv,
    write_results,
    write_units_csv,
)
from .intervals import (
    ABS_RESIDUAL,
    CQR,
    METHODS,
    CoverageRecord,
    Intervals,
    PredictionInterval,
    acp_intervals,
    cqr_intervals,
    evaluate_coverage,
    ocp_intervals,
    scop_intervals,
)
from .metrics import Comparison, MethodSummary, compare, summarize, summarize_records
from .order_stats import SampleSet, conformal_quantile, drop_one_rank, kth_smallest
from .predictors import (
    Dataset,
    LinearModel,
    QuantilePair,
    ScoredUnit,
    ScoredUnits,
    cqr_score,
    fit_ols,
    fit_quantile,
    pinball_loss,
    score_units,
)
from .selection import (
    ConformalPValues,
    MMinResult,
    OptimalSplit,
    SelectionOutcome,
    SelectionRule,
    TCal,
    TClu,
    TCons,
    TExch,
    TPos,
    TTest,
    TTop,
    apply_rule,
    bh_select,
    conformal_pvalues,
    fisher_split,
    format_rule,
    m_min,
    optimal_split,
    parse_rule,
)
from .seeding import grid_seed, mix64, rep_rng, rep_seed
from .selfcheck import CheckResult, run_all
from .simulate import (
    ExperimentConfig,
    ExperimentError,
    ExperimentResult,
    MethodRep,
    RepRecord,
    Scenario,
    draw_beta,
    generate,
    run_experiment,
    sweep,
    sweep_values,
)
