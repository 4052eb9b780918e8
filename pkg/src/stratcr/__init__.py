"""Bayesian multinomial and Dirichlet compound multinomial abundance models
for stratified capture-recapture data, fitted by data augmentation."""

from .diagnostics import GofResult, Summary, bayesian_p, pearson_stat, rhat, summarize
from .latent import AugmentedState, counts, full_conditional_zg, init_state
from .model import (
    Abundance,
    CellProbs,
    Constraint,
    Detection,
    EncounterData,
    ModelSpec,
    ParamState,
    cell_probs,
    derived_psi,
    lambda_of,
    log_abundance_prior,
    log_detection,
    nb_pmf,
)
from .oracle import compare_to_mcmc, exact_posterior
from .sampler import DrawsMatrix, SamplerConfig, run, sweep
from .simulate import simulate_abundance, simulate_dataset, simulate_detection

__version__ = "0.1.0"
