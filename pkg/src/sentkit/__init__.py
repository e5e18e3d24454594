"""sentkit: simulation and estimation toolkit for feedback dynamics in
monthly return data.

The library half covers structural simulators (geometric decay, short-sale
cap piecewise pricing, two-population clearing, state-dependent
coefficients), local-projection estimation with HAC errors, curve fitting,
resampling inference, fixed-effects panels, and portfolio sorts. The CLI
half (``sentkit`` console script) chains those into seeded, manifest-backed
batch runs.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    SentkitError,
    ValidationError,
    SeriesTooShort,
    DegenerateSeries,
    HorizonTooLong,
    MisalignedIndex,
    InsufficientOverlap,
    SchemaViolation,
    NonMonotoneDates,
    MissingColumn,
    InvalidRho,
    NonstationaryRho,
    NoFiniteThreshold,
    Infeasible,
    StageError,
    StageDependencyMissing,
    MissingUpstream,
)
from .series import (  # noqa: F401
    MonthlySeries,
    ShockSeries,
    Ar1Fit,
    estimate_ar1,
    standardize_shocks,
    cumulative_returns,
    split_sign,
    read_series_csv,
    write_series_csv,
    month_code,
    month_label,
)
from .regression import RegressionResult, bartlett_weight, hac_long_run_variance, ols_hac  # noqa: F401
from .structural import (  # noqa: F401
    IRF_CONVENTIONS,
    RHO_INFINITY_CUTOFF,
    EquilibriumResult,
    FeedbackParams,
    MfgConfig,
    PiecewiseConfig,
    StateParamSpec,
    StateSimResult,
    binding_threshold,
    calibrate_affine,
    half_life,
    mfg_clearing,
    piecewise_impact,
    piecewise_slopes,
    simulate_feedback,
    simulate_state_dependent,
    state_params,
    theoretical_irf,
    wald_equality,
)
from .econometrics import (  # noqa: F401
    GeometricFit,
    IrfEstimate,
    fit_geometric,
    local_projection_irf,
    profile_kappa,
    rolling_fit,
)
from .inference import (  # noqa: F401
    BootstrapSpec,
    IntervalEstimate,
    LeadLagResult,
    ParametricIrfBootstrap,
    PermutationResult,
    PvalFamily,
    RwHypothesis,
    TimeBlockResult,
    fisher_z,
    fisher_z_ci,
    holm_adjust,
    jackknife_se,
    lead_lag_test,
    moving_block_bootstrap,
    parametric_irf_bootstrap,
    permutation_falsification,
    romano_wolf_stepdown,
    time_block_bootstrap,
)
from .panel import (  # noqa: F401
    FirmMonthPanel,
    PanelFit,
    PanelSpec,
    attach_shocks,
    fit_panel_fe,
    forward_cumulative,
    panel_irf_by_horizon,
    tag_regimes,
    validate_panel,
    within_demean,
)
from .portfolio import (  # noqa: F401
    CostResult,
    PortfolioSeries,
    SharpeResult,
    SortConfig,
    assign_buckets,
    compute_breakpoints,
    form_portfolios,
    portfolio_returns,
    sharpe_nw,
    turnover_and_costs,
)
from .config import RunConfig, load_config  # noqa: F401
from .io import Dataset, ingest, read_panel_csv  # noqa: F401
from .pipeline import run_pipeline, stage_seed  # noqa: F401
