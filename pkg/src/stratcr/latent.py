"""Individual-level latent state under data augmentation.

The augmented list has ``M`` slots. The first ``n_T`` hold the captured
individuals (``z = 1``, stratum observed); the remaining slots are
pseudo-individuals with an all-zero history whose inclusion indicator ``z`` and
stratum ``g`` are latent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    Abundance,
    Constraint,
    EncounterData,
    ModelSpec,
    ParamState,
    cell_probs,
    derived_psi,
    lambda_of,
    log_detection,
)

__all__ = [
    "AugmentedState",
    "counts",
    "init_state",
    "current_pi",
    "current_psi",
    "pseudo_cell_probs",
    "full_conditional_zg",
]


@dataclass
class AugmentedState:
    """Latent ``(z, g)`` for every slot of the augmented list.

    ``g`` holds 0-based stratum indices. ``N`` caches the per-stratum count of
    real individuals and is refreshed by :meth:`recount`.
    """

    z: np.ndarray
    g: np.ndarray
    n_observed: int
    S: int
    N: np.ndarray | None = None

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=np.int8)
        self.g = np.asarray(self.g, dtype=np.int64)
        if self.z.shape != self.g.shape:
            raise ValueError("z and g must have the same length")
        if self.N is None:
            self.recount()

    @property
    def M(self) -> int:
        return int(self.z.size)

    @property
    def observed_mask(self) -> np.ndarray:
        mask = np.zeros(self.M, dtype=bool)
        mask[: self.n_observed] = True
        return mask

    @property
    def N_T(self) -> int:
        return int(self.N.sum())

    def recount(self) -> None:
        self.N = np.bincount(self.g[self.z == 1], minlength=self.S)

    def copy(self) -> AugmentedState:
        return AugmentedState(self.z.copy(), self.g.copy(), self.n_observed, self.S, self.N.copy())


def counts(state: AugmentedState) -> tuple[np.ndarray, int]:
    """Per-stratum and total numbers of real individuals, recomputed from ``z`` and ``g``."""
    N = np.bincount(state.g[state.z == 1], minlength=state.S)
    return N, int(N.sum())


def init_state(data: EncounterData, spec: ModelSpec, seed=None) -> AugmentedState:
    """Observed prefix from ``data``; pseudo-individuals get ``z ~ Bern(0.5)`` and uniform ``g``."""
    spec.check_data(data)
    rng = np.random.default_rng(seed)
    n = data.n_individuals
    m = spec.M - n
    z = np.concatenate([np.ones(n, dtype=np.int8), (rng.random(m) < 0.5).astype(np.int8)])
    g = np.concatenate([data.strata, rng.integers(0, data.S, size=m)])
    return AugmentedState(z, g, n, data.S)


def current_pi(params: ParamState, spec: ModelSpec) -> np.ndarray:
    lam = lambda_of(params.beta, spec.design)
    eta = params.eta if spec.abundance is Abundance.DCM else None
    return cell_probs(lam, eta).pi


def current_psi(params: ParamState, spec: ModelSpec) -> float:
    if spec.constraint is Constraint.DERIVED_PSI:
        return derived_psi(lambda_of(params.beta, spec.design), spec.M)
    return float(params.psi)


def pseudo_cell_probs(params: ParamState, spec: ModelSpec, K: int, pi=None, psi=None) -> np.ndarray:
    """Joint conditional of ``(z, g)`` for an uncaptured slot as a ``(2, S)`` array.

    Row 0 is ``z = 0``, row 1 is ``z = 1``; entries sum to one. Every
    pseudo-individual shares this distribution because all of them carry the
    same all-zero history.
    """
    if pi is None:
        pi = current_pi(params, spec)
    if psi is None:
        psi = current_psi(params, spec)
    # detection is stratum-constant in M0 and Mb, so one evaluation covers all strata
    miss = np.exp(log_detection(np.zeros(K, dtype=int), params, 1, spec))
    w = np.empty((2, pi.size))
    w[0] = (1.0 - psi) * pi
    w[1] = psi * pi * miss
    return w / w.sum()


def full_conditional_zg(i: int, state: AugmentedState, params: ParamState, spec: ModelSpec, K: int) -> np.ndarray:
    """Exact ``(2, S)`` full conditional of ``(z_i, g_i)`` for pseudo-individual ``i``."""
    if not 0 <= i < state.M:
        raise IndexError(f"slot {i} outside 0..{state.M - 1}")
    if i < state.n_observed:
        raise ValueError(f"slot {i} is a captured individual; its z and g are data")
    return pseudo_cell_probs(params, spec, K)
