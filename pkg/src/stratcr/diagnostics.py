"""Posterior summaries, Gelman-Rubin R-hat and posterior predictive fit checks."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .model import ModelSpec, ParamState

__all__ = [
    "Summary",
    "GofResult",
    "DegenerateReplicateWarning",
    "pearson_stat",
    "posterior_predictive_counts",
    "bayesian_p",
    "rhat",
    "quantiles",
    "summarize",
    "effective_sample_size",
    "mcse_mean",
    "mcse_sd",
]

QUANTILE_LEVELS = (0.025, 0.5, 0.975)


class DegenerateReplicateWarning(UserWarning):
    """A replicate data set with no captured individuals."""


@dataclass
class Summary:
    """Per-scalar posterior summary; ``rhat`` is NaN when fewer than two chains ran."""

    names: list[str]
    mean: np.ndarray
    sd: np.ndarray
    q025: np.ndarray
    q50: np.ndarray
    q975: np.ndarray
    rhat: np.ndarray

    def row(self, name: str) -> dict[str, float]:
        j = self.names.index(name)
        return {
            "mean": float(self.mean[j]),
            "sd": float(self.sd[j]),
            "q2.5": float(self.q025[j]),
            "q50": float(self.q50[j]),
            "q97.5": float(self.q975[j]),
            "rhat": float(self.rhat[j]),
        }


@dataclass
class GofResult:
    x_obs: np.ndarray
    x_sim: np.ndarray

    def __post_init__(self):
        self.x_obs = np.asarray(self.x_obs, dtype=float).reshape(-1)
        self.x_sim = np.asarray(self.x_sim, dtype=float).reshape(-1)
        if self.x_obs.shape != self.x_sim.shape:
            raise ValueError("x_obs and x_sim must have one entry per draw")

    @property
    def p_value(self) -> float:
        return bayesian_p(self)


def pearson_stat(n, n_total, pi) -> float:
    """Pearson chi-square ``sum((n_s - n_total pi_s)^2 / (n_total pi_s))``.

    ``n_total`` is passed explicitly because the observed-data statistic uses
    the observed total while the replicate statistic uses the replicate total.
    A zero total gives 0 and a :class:`DegenerateReplicateWarning`.
    """
    n = np.asarray(n, dtype=float)
    pi = np.asarray(pi, dtype=float)
    if n.shape != pi.shape:
        raise ValueError("n and pi must have the same length")
    if np.any(pi <= 0.0):
        raise ValueError("pi must be strictly positive")
    if n_total == 0:
        warnings.warn("replicate with no captured individuals; statistic set to 0",
                      DegenerateReplicateWarning, stacklevel=2)
        return 0.0
    expected = n_total * pi
    # exactly rounded sum, so the statistic does not depend on stratum order
    return math.fsum((n - expected) ** 2 / expected)


def posterior_predictive_counts(state, params: ParamState, data, spec: ModelSpec, rng):
    """Replicate per-stratum counts of captured individuals for one posterior draw.

    Every real individual (``z = 1``) gets a fresh K-occasion history. Under both
    M0 and Mb an individual is caught at least once with probability
    ``1 - (1 - p_naive)^K``, because the behavioural response only acts after
    the first capture, so the per-stratum counts are drawn as binomials.
    """
    p0 = params.p_naive(spec)
    detect = 1.0 - (1.0 - p0) ** data.K
    n_sim = rng.binomial(state.N, detect)
    return n_sim, int(n_sim.sum())


def bayesian_p(gof: GofResult) -> float:
    """Fraction of draws with ``x_sim >= x_obs``."""
    if gof.x_obs.size == 0:
        raise ValueError("bayesian_p needs at least one draw")
    return float(np.mean(gof.x_sim >= gof.x_obs))


def rhat(chains) -> float:
    """Potential scale reduction factor of Gelman and Rubin (no split chains).

    ``sqrt(((n-1)/n W + B/n) / W)`` floored at 1: the raw value falls just below
    1 when the chain means agree closely, which carries no extra information.

    Parameters
    ----------
    chains : array_like, shape (m, n)
        ``m >= 2`` chains of equal length ``n >= 2``.
    """
    x = np.asarray(chains, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2 or x.shape[1] < 2:
        raise ValueError("rhat needs at least 2 chains of at least 2 draws")
    n = x.shape[1]
    W = np.mean(np.var(x, axis=1, ddof=1))
    B_over_n = np.var(np.mean(x, axis=1), ddof=1)
    if W == 0.0:
        return 1.0 if B_over_n == 0.0 else math.inf
    return max(1.0, float(math.sqrt(((n - 1) / n * W + B_over_n) / W)))


def quantiles(x, levels=QUANTILE_LEVELS, axis=0) -> np.ndarray:
    # linear interpolation between order statistics (R type 7)
    return np.quantile(np.asarray(x, dtype=float), levels, axis=axis, method="linear")


def summarize(draws) -> Summary:
    """Summarize a :class:`~stratcr.sampler.DrawsMatrix` over all chains."""
    values = draws.values
    n_chains, n_draws, n_cols = values.shape
    flat = values.reshape(n_chains * n_draws, n_cols)
    mean = flat.mean(axis=0)
    sd = flat.std(axis=0, ddof=1) if flat.shape[0] > 1 else np.zeros(n_cols)
    q = quantiles(flat) if flat.shape[0] else np.full((3, n_cols), np.nan)
    if n_chains >= 2 and n_draws >= 2:
        r = np.array([rhat(values[:, :, j]) for j in range(n_cols)])
    else:
        r = np.full(n_cols, np.nan)
    return Summary(list(draws.names), mean, sd, q[0], q[1], q[2], r)


def _autocorr(x: np.ndarray) -> np.ndarray:
    n = x.size
    x = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n] / n
    return acov / acov[0]


def effective_sample_size(chains) -> float:
    """Effective sample size summed over chains (Geyer initial positive sequence)."""
    x = np.atleast_2d(np.asarray(chains, dtype=float))
    total = 0.0
    for c in x:
        if np.var(c) == 0.0:
            total += c.size
            continue
        rho = _autocorr(c)
        tau = 1.0
        for t in range(1, rho.size - 1, 2):
            pair = rho[t] + rho[t + 1]
            if pair <= 0.0:
                break
            tau += 2.0 * pair
        total += c.size / tau
    return total


def mcse_mean(chains) -> float:
    x = np.asarray(chains, dtype=float)
    return float(np.std(x, ddof=1) / math.sqrt(effective_sample_size(x)))


def mcse_sd(chains) -> float:
    """Monte Carlo standard error of the posterior sd (delta method on squared deviations)."""
    x = np.atleast_2d(np.asarray(chains, dtype=float))
    sd = np.std(x, ddof=1)
    if sd == 0.0:
        return 0.0
    dev2 = (x - x.mean()) ** 2
    return float(mcse_mean(dev2) / (2.0 * sd))
