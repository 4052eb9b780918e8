"""Synthetic stratified capture-recapture data from the generative model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .model import Abundance, Detection, EncounterData, ModelSpec, ParamState, lambda_of

__all__ = [
    "Simulation",
    "simulate_abundance",
    "simulate_detection",
    "simulate_dataset",
    "thin_superpopulation",
]


@dataclass
class Simulation:
    """A simulated data set together with the values that generated it."""

    data: EncounterData
    N: np.ndarray
    params: ParamState
    eta: np.ndarray | None = None


def simulate_abundance(spec: ModelSpec, params: ParamState, rng, lam=None, return_eta: bool = False):
    """Draw stratum sizes ``N_s``.

    Poisson family: ``N_s ~ Poisson(lambda_s)``. DCM family: ``eta_s ~ Gamma(a, 1)``
    and ``N_s ~ Poisson(lambda_s eta_s)``. ``lam`` overrides ``exp(design @ beta)``.
    """
    lam = lambda_of(params.beta, spec.design) if lam is None else np.asarray(lam, dtype=float)
    eta = None
    if spec.abundance is Abundance.DCM:
        eta = rng.gamma(params.a, 1.0, size=lam.size)
        N = rng.poisson(lam * eta)
    else:
        N = rng.poisson(lam)
    N = N.astype(np.int64)
    return (N, eta) if return_eta else N


def simulate_detection(N, spec: ModelSpec, params: ParamState, rng, K: int, covariates=None,
                       covariate_names=None) -> EncounterData:
    """Capture histories for ``N_s`` individuals per stratum over ``K`` occasions.

    Individuals never caught are dropped; only the captured ones are returned.
    """
    N = np.asarray(N, dtype=np.int64)
    S = N.size
    strata = np.repeat(np.arange(S), N)
    total = strata.size
    h = np.zeros((total, K), dtype=np.int8)
    if spec.detection is Detection.M0:
        h[:] = rng.random((total, K)) < params.p
    else:
        p0 = expit(params.alpha0)
        p1 = expit(params.alpha0 + params.alpha1)
        caught = np.zeros(total, dtype=bool)
        for k in range(K):
            prob = np.where(caught, p1, p0)
            h[:, k] = rng.random(total) < prob
            caught |= h[:, k].astype(bool)
    keep = h.any(axis=1)
    return EncounterData(
        strata=strata[keep], K=K, S=S, histories=h[keep],
        covariates=covariates, covariate_names=list(covariate_names or []),
    )


def simulate_dataset(spec: ModelSpec, params: ParamState, K: int, rng, covariates=None,
                     covariate_names=None, lam=None) -> Simulation:
    N, eta = simulate_abundance(spec, params, rng, lam=lam, return_eta=True)
    data = simulate_detection(N, spec, params, rng, K, covariates, covariate_names)
    return Simulation(data=data, N=N, params=params.copy(), eta=eta)


def thin_superpopulation(lam: float, A: float, psi: float, size: int, rng) -> np.ndarray:
    """``N ~ Binom(G, psi)`` with ``G ~ Poisson(A lam)``; marginally Poisson(A lam psi)."""
    G = rng.poisson(A * lam, size=size)
    return rng.binomial(G, psi)
