"""Plaintext GMM mathematics: densities, EM oracle and conditioning."""

from vpgmm.gmm.conditional import ConditioningBlock, conditional_params, conditioning_block
from vpgmm.gmm.density import (
    component_log_densities,
    gaussian_logpdf,
    gmm_pdf,
    log_likelihood,
    quadratic_forms,
)
from vpgmm.gmm.em import (
    CentralizedFit,
    e_step,
    finalize_params,
    fit_centralized,
    initialize_params,
    m_step,
    run_em,
)

__all__ = [
    "CentralizedFit",
    "ConditioningBlock",
    "component_log_densities",
    "conditional_params",
    "conditioning_block",
    "e_step",
    "finalize_params",
    "fit_centralized",
    "gaussian_logpdf",
    "gmm_pdf",
    "initialize_params",
    "log_likelihood",
    "m_step",
    "quadratic_forms",
    "run_em",
]
