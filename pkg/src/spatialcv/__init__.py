"""Block cross-validation with joint and pointwise scoring for Gaussian
spatial models on regular lattices."""

__version__ = "0.1.0"

from .lattice import (
    AdjacencyMatrix,
    Lattice,
    build_grid,
    contiguity,
    distances,
    row_standardize,
)
from .models import (
    GaussianDensity,
    KernelParams,
    ModelSpec,
    PriorSpec,
    SarParams,
    SingularModelError,
    kernel_covariance,
    log_density,
    log_prior,
    modified_sar_density,
    sar_density,
    simulate,
)
from .cvdesign import (
    Fold,
    FoldPlan,
    FoldViews,
    InvalidDesignError,
    blocked_folds,
    clustered_folds,
    partition_views,
)
from .laplace import (
    DegenerateCurvatureError,
    FoldProblem,
    LaplaceResult,
    MapOptions,
    build_evaluator,
    fit_fold,
    fit_map,
    joint_objective,
    predictive_block,
)
from .scoring import (
    FoldScore,
    IncompleteReplicationError,
    PopulationSummary,
    SelectionRecord,
    UndefinedStatisticError,
    elpd_cv,
    pairwise_stat,
    population_summary,
    sample_z,
    score_fold,
    selection_record,
)
from .harness import (
    ConfigError,
    ExcessiveFailureError,
    ExperimentConfig,
    ResultSet,
    derive_stream,
    run_experiment,
    summarize,
    validate_config,
)
