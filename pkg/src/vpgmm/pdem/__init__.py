"""Privacy-preserving distributed EM and private conditional forecasting."""

from vpgmm.pdem.private_em import (
    DistributedFit,
    EStepScratch,
    IterationSummary,
    SspJob,
    count_ssp_jobs,
    farm_pairs,
    fit_distributed,
    pair_jobs,
    private_e_step,
    private_m_step,
)
from vpgmm.pdem.private_forecast import (
    ConditionalScratch,
    ForecastContext,
    forecast,
    load_current_outputs,
    outputs_from_row,
    private_conditional_mean,
    private_conditional_variance,
    private_conditional_weights,
)

__all__ = [
    "ConditionalScratch",
    "DistributedFit",
    "EStepScratch",
    "ForecastContext",
    "IterationSummary",
    "SspJob",
    "count_ssp_jobs",
    "farm_pairs",
    "fit_distributed",
    "forecast",
    "load_current_outputs",
    "outputs_from_row",
    "pair_jobs",
    "private_conditional_mean",
    "private_conditional_variance",
    "private_conditional_weights",
    "private_e_step",
    "private_m_step",
]
