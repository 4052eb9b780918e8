"""Metropolis-within-Gibbs sampler over the augmented state and parameters.

One sweep updates, in order: the latent ``(z, g)`` of every pseudo-individual
(exact joint draw), the abundance coefficients (random-walk Metropolis), the
detection parameters (conjugate Beta under M0, random-walk Metropolis under
Mb), the inclusion probability (conjugate Beta when it is free), the gamma
noise terms and finally the gamma shape (DCM only).

The stratum labels of pseudo-individuals with ``z = 0`` are marginalized out
of the coefficient and noise updates, so those updates only see the counts of
real individuals per stratum.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .diagnostics import pearson_stat, posterior_predictive_counts
from .latent import AugmentedState, counts, current_pi, current_psi, init_state, pseudo_cell_probs
from .model import (
    A_PRIOR_UPPER,
    ALPHA_PRIOR_VAR,
    BETA_PRIOR_VAR,
    Abundance,
    Constraint,
    Detection,
    EncounterData,
    ModelSpec,
    ParamState,
    PsiBoundsError,
    log_prior_terms,
)

__all__ = [
    "SamplerConfig",
    "DrawsMatrix",
    "SamplerError",
    "AugmentationWarning",
    "SingleChainWarning",
    "adapt_step",
    "sweep",
    "run",
    "rough_abundance",
    "default_M",
    "log_posterior",
    "monitor_names",
]


class SamplerError(RuntimeError):
    """The chain reached a state with a non-finite log posterior."""


class AugmentationWarning(UserWarning):
    """Posterior mass of N_T sits close to the augmentation size M."""


class SingleChainWarning(UserWarning):
    """R-hat cannot be computed from one chain."""


@dataclass
class SamplerConfig:
    """Run settings; every field has a default.

    Attributes
    ----------
    chains : int
        Independent chains (3). Two or more are needed for R-hat.
    iterations : int
        Sweeps per chain including burn-in (4000).
    burnin : int or None
        Discarded sweeps; ``None`` means half of ``iterations``.
    thin : int
        Keep every ``thin``-th sweep after burn-in (1).
    seed : int
        Root seed; chain ``c`` uses the stream spawned from ``(seed, c)`` (0).
    adapt_window : int
        Sweeps between proposal adaptations during burn-in (50).
    target_accept : float
        Acceptance rate the random-walk scales are tuned toward (0.40).
    step_beta, step_alpha, step_joint, step_eta, step_a : float
        Initial random-walk scales (0.05, 0.1, 0.05, 0.5, 0.5).
    beta_moves : int
        Random-walk proposals per sweep for the coefficient block and, under
        the DCM family, for the joint coefficient and noise shift (5).
    joint_moves : int
        Proposals per sweep for the collapsed scale-and-detection block (5).
    ppc : bool
        Record posterior predictive fit statistics (True).
    check_every : int
        Sweeps between full recount and finiteness checks (1000).
    workers : int
        Processes used to run chains in parallel (1).
    """

    chains: int = 3
    iterations: int = 4000
    burnin: int | None = None
    thin: int = 1
    seed: int = 0
    adapt_window: int = 50
    target_accept: float = 0.40
    step_beta: float = 0.05
    step_alpha: float = 0.1
    step_joint: float = 0.05
    step_eta: float = 0.5
    step_a: float = 0.5
    beta_moves: int = 5
    joint_moves: int = 5
    ppc: bool = True
    check_every: int = 1000
    workers: int = 1

    def __post_init__(self):
        if self.burnin is None:
            self.burnin = self.iterations // 2
        if self.iterations < 1:
            raise ValueError("iterations must be positive")
        if not 0 <= self.burnin < self.iterations:
            raise ValueError("burnin must be smaller than iterations (no draws would be retained)")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.chains < 1:
            raise ValueError("chains must be >= 1")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must lie in (0, 1)")
        if self.beta_moves < 1 or self.joint_moves < 1:
            raise ValueError("beta_moves and joint_moves must be >= 1")
        if self.adapt_window < 1:
            raise ValueError("adapt_window must be >= 1")

    @property
    def n_retained(self) -> int:
        return (self.iterations - self.burnin) // self.thin


@dataclass
class DrawsMatrix:
    """Retained draws, ``values[chain, draw, column]``."""

    names: list[str]
    values: np.ndarray
    iters: np.ndarray
    M: int = 0
    n_observed: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.values[:, :, self.names.index(name)]

    @property
    def n_chains(self) -> int:
        return self.values.shape[0]

    @property
    def n_draws(self) -> int:
        return self.values.shape[1]

    def flat(self, name: str) -> np.ndarray:
        return self[name].reshape(-1)

    def columns(self, prefix: str) -> list[str]:
        return [n for n in self.names if n.startswith(prefix + "[")]


def adapt_step(accept_history, step, target: float = 0.40, gain: float = 1.0):
    """Robbins-Monro update of a proposal scale on the log scale.

    ``step * exp(gain * (rate - target))`` where ``rate`` is the mean of
    ``accept_history``; a rate equal to ``target`` leaves the step unchanged.
    """
    rate = float(np.mean(accept_history))
    return step * math.exp(gain * (rate - target))


def rough_abundance(data: EncounterData) -> float:
    """Crude pooled estimate of total abundance used to size the augmentation.

    With full histories and K >= 2 the occasions are split in two halves and a
    Chapman-corrected two-sample estimate is used. Frequency-only data fall
    back to the zero-truncated binomial moment estimate of M0.
    """
    n = data.n_individuals
    if n == 0:
        return 0.0
    K = data.K
    if data.histories is not None and K >= 2:
        h = data.histories
        half = K // 2
        first = h[:, :half].any(axis=1)
        second = h[:, half:].any(axis=1)
        n1, n2, m2 = int(first.sum()), int(second.sum()), int((first & second).sum())
        return max(float(n), (n1 + 1) * (n2 + 1) / (m2 + 1) - 1.0)
    ybar = data.freq.mean()
    if ybar >= K:
        return float(n)
    # solve ybar = K p / (1 - (1-p)^K) by bisection
    lo, hi = 1e-9, 1.0 - 1e-12
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if K * mid / (1.0 - (1.0 - mid) ** K) < ybar:
            lo = mid
        else:
            hi = mid
    return max(float(n), n / (1.0 - (1.0 - lo) ** K))


def default_M(data: EncounterData, factor: float = 5.0) -> int:
    return int(max(math.ceil(factor * rough_abundance(data)), data.n_individuals + 1))


def monitor_names(spec: ModelSpec, ppc: bool = True) -> list[str]:
    names = [f"beta[{nm}]" for nm in spec.design_names]
    if spec.detection is Detection.M0:
        names.append("p")
    else:
        names += ["alpha0", "alpha1"]
    names.append("psi")
    if spec.abundance is Abundance.DCM:
        names.append("a")
    names.append("N")
    names += [f"N[{s + 1}]" for s in range(spec.S)]
    names += [f"pi[{s + 1}]" for s in range(spec.S)]
    if ppc:
        names += ["x_obs", "x_sim"]
    return names


def _log_expit(x):
    return -np.logaddexp(0.0, -x)


def _log1m_expit(x):
    return -np.logaddexp(0.0, x)


class _RWBlock:
    """Random-walk proposal for a vector block with burn-in adaptation.

    Joint blocks learn a proposal covariance from burn-in draws and a global
    scale; component-wise blocks adapt one scale per coordinate.
    """

    def __init__(self, dim: int, step: float, componentwise: bool, target: float):
        self.dim = dim
        self.componentwise = componentwise
        self.target = target
        self.chol = np.eye(dim) * step
        self.scale = np.ones(dim) if componentwise else 1.0
        self.acc = np.zeros(dim) if componentwise else 0.0
        self.tries = 0
        self.rounds = 0
        self.history: list[np.ndarray] = []
        self.learned = False
        self.total_acc = np.zeros(dim) if componentwise else 0.0
        self.total_tries = 0

    def jump(self, rng) -> np.ndarray:
        return self.scale * (self.chol @ rng.standard_normal(self.dim))

    def jump_component(self, j: int, rng) -> float:
        return self.scale[j] * self.chol[j, j] * rng.standard_normal()

    def record(self, accepted, x=None):
        self.acc = self.acc + accepted
        self.tries += 1
        self.total_acc = self.total_acc + accepted
        self.total_tries += 1
        if x is not None and not self.componentwise and self.dim > 1:
            self.history.append(np.array(x, dtype=float))

    def adapt(self):
        if self.tries == 0:
            return
        self.rounds += 1
        gain = min(1.0, 3.0 / math.sqrt(self.rounds))
        if self.componentwise:
            rate = self.acc / self.tries
            self.scale = self.scale * np.exp(gain * (rate - self.target))
        else:
            hist = self.history
            if self.dim > 1 and len(hist) >= 10 * self.dim and self.rounds % 2 == 0:
                cov = np.cov(np.asarray(hist[len(hist) // 2:]).T)
                cov = np.atleast_2d(cov) + 1e-10 * np.eye(self.dim)
                try:
                    self.chol = np.linalg.cholesky(cov)
                    if not self.learned:
                        self.scale = 2.38 / math.sqrt(self.dim)
                        self.learned = True
                except np.linalg.LinAlgError:
                    pass
            self.scale = adapt_step([self.acc / self.tries], self.scale, self.target, gain)
        self.acc = np.zeros(self.dim) if self.componentwise else 0.0
        self.tries = 0

    def acceptance(self):
        if self.total_tries == 0:
            return np.nan
        return self.total_acc / self.total_tries


class _Chain:
    """Mutable sampler state for a single chain."""

    def __init__(self, state: AugmentedState, params: ParamState, data: EncounterData,
                 spec: ModelSpec, rng, config: SamplerConfig):
        spec.check_data(data)
        self.state = state
        self.params = params
        self.data = data
        self.spec = spec
        self.rng = rng
        self.config = config
        self.K = data.K
        self.n = data.n_individuals
        self.M = spec.M
        self.S = spec.S
        self.X = spec.design
        self.derived = spec.constraint is Constraint.DERIVED_PSI
        self.dcm = spec.abundance is Abundance.DCM
        self.sum_y = data.total_captures
        if spec.detection is Detection.MB:
            first = data.first_capture
            self.naive_obs_trials = int(first.sum())
            self.exp_trials = int((data.K - first).sum())
            self.exp_succ = int((data.freq - 1).sum())
        target = config.target_accept
        P = spec.P
        self.beta_block = _RWBlock(P, config.step_beta, P > 8, target) if P else None
        self.alpha_block = _RWBlock(2, config.step_alpha, False, target)
        self.eta_block = _RWBlock(self.S, config.step_eta, True, target) if self.dcm else None
        self.a_block = _RWBlock(1, config.step_a, True, target) if self.dcm else None
        self.shift_X = np.column_stack([np.ones(self.S), self.X]) if self.dcm else None
        self.shift_block = _RWBlock(P + 1, config.step_beta, False, target) if self.dcm else None
        self.joint_names = self._joint_names()
        self.joint_block = (_RWBlock(len(self.joint_names), config.step_joint, False, target)
                            if self.joint_names else None)
        self.adapting = False
        self._sync_params()

    def _joint_names(self) -> list[str]:
        fixed = self.spec.fixed
        names = []
        if self.derived:
            self.icol = int(np.flatnonzero(np.all(self.X == 1.0, axis=0))[0])
            names.append("intercept")
        elif "psi" not in fixed:
            names.append("logit_psi")
        if self.spec.detection is Detection.M0:
            if "p" not in fixed:
                names.append("logit_p")
        else:
            names += [k for k in ("alpha0", "alpha1") if k not in fixed]
        # the move only helps when the scale and detection both vary
        return names if len(names) >= 2 else []

    # -- cached derived quantities -------------------------------------------------

    def _log_weights(self, beta, eta=None):
        lin = self.X @ beta if beta.size else np.zeros(self.S)
        if self.dcm:
            lin = lin + np.log(self.params.eta if eta is None else eta)
        return lin

    def _sync_params(self):
        p = self.params
        lw = self._log_weights(p.beta)
        mx = lw.max()
        w = np.exp(lw - mx)
        self.pi = w / w.sum()
        if self.derived:
            lam_sum = float(np.exp(self.X @ p.beta).sum())
            p.psi = lam_sum / self.M
        self.psi = float(p.psi)

    # -- block log densities -------------------------------------------------------

    def _lp_beta(self, beta):
        N = self.state.N
        lw = self._log_weights(beta)
        mx = lw.max()
        lse = mx + math.log(np.exp(lw - mx).sum())
        lp = float(N @ (lw - lse))
        lp += float(-0.5 * beta @ beta / BETA_PRIOR_VAR)
        if self.derived:
            lin = self.X @ beta
            with np.errstate(over="ignore"):
                psi = float(np.exp(lin).sum()) / self.M
            if not psi < 1.0:
                return -math.inf
            NT = int(N.sum())
            lp += NT * math.log(psi) + (self.M - NT) * math.log1p(-psi)
        return lp if math.isfinite(lp) else -math.inf

    def _lp_alpha(self, a0, a1):
        NT = self.state.N_T
        naive_trials = self.naive_obs_trials + self.K * (NT - self.n)
        lp = (self.n * _log_expit(a0) + (naive_trials - self.n) * _log1m_expit(a0)
              + self.exp_succ * _log_expit(a0 + a1)
              + (self.exp_trials - self.exp_succ) * _log1m_expit(a0 + a1))
        fixed = self.spec.fixed
        if "alpha0" not in fixed:
            lp -= 0.5 * a0 * a0 / ALPHA_PRIOR_VAR
        if "alpha1" not in fixed:
            lp -= 0.5 * a1 * a1 / ALPHA_PRIOR_VAR
        return float(lp)

    def _joint_get(self) -> np.ndarray:
        p = self.params
        out = []
        for nm in self.joint_names:
            if nm == "intercept":
                out.append(p.beta[self.icol])
            elif nm == "logit_psi":
                out.append(math.log(p.psi) - math.log1p(-p.psi))
            elif nm == "logit_p":
                out.append(math.log(p.p) - math.log1p(-p.p))
            else:
                out.append(getattr(p, nm))
        return np.array(out, dtype=float)

    def _joint_unpack(self, theta):
        p = self.params
        vals = dict(zip(self.joint_names, theta))
        beta = p.beta
        if "intercept" in vals:
            beta = p.beta.copy()
            beta[self.icol] = vals["intercept"]
        psi = p.psi
        if "logit_psi" in vals:
            psi = 1.0 / (1.0 + math.exp(-vals["logit_psi"]))
        prob = p.p
        if "logit_p" in vals:
            prob = 1.0 / (1.0 + math.exp(-vals["logit_p"]))
        a0 = vals.get("alpha0", p.alpha0)
        a1 = vals.get("alpha1", p.alpha1)
        return beta, psi, prob, a0, a1

    def _lp_joint(self, theta) -> float:
        """Log density of the scale and detection parameters with pseudo-individuals summed out."""
        vals = dict(zip(self.joint_names, theta))
        beta, psi, prob, a0, a1 = self._joint_unpack(theta)
        lp = 0.0
        if self.derived:
            with np.errstate(over="ignore"):
                psi = float(np.exp(self.X @ beta).sum()) / self.M
            if not psi < 1.0:
                return -math.inf
            lp -= 0.5 * vals["intercept"] ** 2 / BETA_PRIOR_VAR
        elif "logit_psi" in vals:
            if not 0.0 < psi < 1.0:
                return -math.inf
            lp += math.log(psi) + math.log1p(-psi)
        n, K = self.n, self.K
        if self.spec.detection is Detection.M0:
            if not 0.0 < prob < 1.0:
                return -math.inf
            lp += self.sum_y * math.log(prob) + (n * K - self.sum_y) * math.log1p(-prob)
            log_miss = K * math.log1p(-prob)
            if "logit_p" in vals:
                lp += math.log(prob) + math.log1p(-prob)
        else:
            lp += float(n * _log_expit(a0) + (self.naive_obs_trials - n) * _log1m_expit(a0)
                        + self.exp_succ * _log_expit(a0 + a1)
                        + (self.exp_trials - self.exp_succ) * _log1m_expit(a0 + a1))
            log_miss = float(K * _log1m_expit(a0))
            if "alpha0" in vals:
                lp -= 0.5 * a0 * a0 / ALPHA_PRIOR_VAR
            if "alpha1" in vals:
                lp -= 0.5 * a1 * a1 / ALPHA_PRIOR_VAR
        lp += n * math.log(psi)
        lp += (self.M - n) * float(np.logaddexp(math.log1p(-psi), math.log(psi) + log_miss))
        return lp if math.isfinite(lp) else -math.inf

    # -- updates -------------------------------------------------------------------

    def update_joint(self):
        """Random-walk move on scale and detection with the pseudo-individuals' (z, g) summed out.

        The subsequent exact redraw of (z, g) makes this a blocked update of
        parameters and latent state together, which breaks the strong
        correlation between detection and abundance seen by plain Gibbs steps.
        """
        blk = self.joint_block
        if blk is None:
            return
        cur = self._joint_get()
        lp = self._lp_joint(cur)
        for _ in range(self.config.joint_moves):
            prop = cur + blk.jump(self.rng)
            lp_new = self._lp_joint(prop)
            ok = math.log(self.rng.random()) < lp_new - lp
            if ok:
                cur, lp = prop, lp_new
            blk.record(float(ok), cur if self.adapting else None)
        p = self.params
        p.beta, p.psi, p.p, p.alpha0, p.alpha1 = self._joint_unpack(cur)
        self._sync_params()
        self.update_zg()

    def update_zg(self):
        st = self.state
        m = self.M - self.n
        if m:
            w = pseudo_cell_probs(self.params, self.spec, self.K, self.pi, self.psi).ravel()
            cdf = np.cumsum(w)
            cdf[-1] = 1.0
            idx = np.searchsorted(cdf, self.rng.random(m), side="right")
            np.minimum(idx, 2 * self.S - 1, out=idx)
            st.z[self.n:] = idx >= self.S
            st.g[self.n:] = idx % self.S
        st.recount()

    def update_beta(self):
        blk = self.beta_block
        if blk is None:
            return
        p = self.params
        rng = self.rng
        if blk.componentwise:
            lp = self._lp_beta(p.beta)
            acc = np.zeros(blk.dim)
            for j in range(blk.dim):
                prop = p.beta.copy()
                prop[j] += blk.jump_component(j, rng)
                lp_new = self._lp_beta(prop)
                if math.log(rng.random()) < lp_new - lp:
                    p.beta, lp = prop, lp_new
                    acc[j] = 1.0
            blk.record(acc)
        else:
            lp = self._lp_beta(p.beta)
            for _ in range(self.config.beta_moves):
                prop = p.beta + blk.jump(rng)
                lp_new = self._lp_beta(prop)
                ok = math.log(rng.random()) < lp_new - lp
                if ok:
                    p.beta, lp = prop, lp_new
                blk.record(float(ok), p.beta if self.adapting else None)
        self._sync_params()

    def update_detection(self):
        p = self.params
        fixed = self.spec.fixed
        NT = self.state.N_T
        if self.spec.detection is Detection.M0:
            if "p" not in fixed:
                p.p = float(self.rng.beta(1.0 + self.sum_y, 1.0 + self.K * NT - self.sum_y))
            return
        free = [k not in fixed for k in ("alpha0", "alpha1")]
        if not any(free):
            return
        blk = self.alpha_block
        cur = np.array([p.alpha0, p.alpha1])
        step = blk.jump(self.rng) * np.array(free, dtype=float)
        prop = cur + step
        lp = self._lp_alpha(*cur)
        lp_new = self._lp_alpha(*prop)
        ok = math.log(self.rng.random()) < lp_new - lp
        if ok:
            p.alpha0, p.alpha1 = float(prop[0]), float(prop[1])
        blk.record(float(ok), np.array([p.alpha0, p.alpha1]) if self.adapting else None)

    def update_psi(self):
        if self.derived or "psi" in self.spec.fixed:
            return
        NT = self.state.N_T
        self.params.psi = float(self.rng.beta(1.0 + NT, 1.0 + self.M - NT))
        self.psi = self.params.psi

    def update_eta(self):
        if not self.dcm:
            return
        p = self.params
        rng = self.rng
        blk = self.eta_block
        N = self.state.N
        NT = float(N.sum())
        a = p.a
        lam = np.exp(self.X @ p.beta) if p.beta.size else np.ones(self.S)
        eta = p.eta
        w = eta * lam
        W = float(w.sum())
        jumps = blk.scale * np.diag(blk.chol) * rng.standard_normal(self.S)
        logu = np.log(rng.random(self.S))
        acc = np.zeros(self.S)
        for s in range(self.S):
            d = jumps[s]
            e_new = eta[s] * math.exp(d)
            w_new = e_new * lam[s]
            W_new = W - w[s] + w_new
            # multinomial term, Gamma(a, 1) prior and log-scale Jacobian
            dlp = (N[s] * d - NT * math.log(W_new / W)
                   + (a - 1.0) * d - (e_new - eta[s]) + d)
            if logu[s] < dlp:
                eta[s] = e_new
                w[s] = w_new
                W = W_new
                acc[s] = 1.0
        blk.record(acc)
        self._sync_params()

    def update_shift(self):
        """Move ``beta`` and ``log eta`` together so that ``eta * lambda`` is unchanged.

        Cell probabilities are invariant to a common rescaling of ``eta`` and to
        trading ``x_s' beta`` against ``log eta_s``, so only the priors enter the
        acceptance ratio. The move removes the ridge between coefficients and
        gamma noise that the one-at-a-time updates traverse slowly.
        """
        if not self.dcm:
            return
        p = self.params
        blk = self.shift_block
        a = p.a

        def lp(beta, log_eta):
            return (-0.5 * float(beta @ beta) / BETA_PRIOR_VAR
                    + float(np.sum(a * log_eta - np.exp(log_eta))))

        log_eta = np.log(p.eta)
        lp_cur = lp(p.beta, log_eta)
        for _ in range(self.config.beta_moves):
            delta = blk.jump(self.rng)
            beta_new = p.beta + delta[1:]
            log_eta_new = log_eta + delta[0] - self.X @ delta[1:]
            lp_new = lp(beta_new, log_eta_new)
            ok = math.log(self.rng.random()) < lp_new - lp_cur
            if ok:
                p.beta, log_eta, lp_cur = beta_new, log_eta_new, lp_new
            state = np.concatenate([[float(np.mean(log_eta))], p.beta])
            blk.record(float(ok), state if self.adapting else None)
        p.eta = np.exp(log_eta)
        self._sync_params()

    def update_a(self):
        if not self.dcm or "a" in self.spec.fixed:
            return
        p = self.params
        blk = self.a_block
        S = self.S
        sum_log_eta = float(np.log(p.eta).sum())

        def lp(a):
            if not 0.0 < a < A_PRIOR_UPPER:
                return -math.inf
            return (a - 1.0) * sum_log_eta - S * float(gammaln(a)) + math.log(a)

        a_new = p.a * math.exp(blk.jump_component(0, self.rng))
        ok = math.log(self.rng.random()) < lp(a_new) - lp(p.a)
        if ok:
            p.a = a_new
        blk.record(np.array([float(ok)]))

    def sweep(self):
        self.update_zg()
        self.update_beta()
        self.update_joint()
        self.update_detection()
        self.update_psi()
        self.update_eta()
        self.update_shift()
        self.update_a()

    def _blocks(self):
        return [b for b in (self.beta_block, self.joint_block, self.alpha_block,
                            self.eta_block, self.shift_block, self.a_block) if b is not None]

    def adapt(self):
        for blk in self._blocks():
            blk.adapt()

    def end_adaptation(self):
        for blk in self._blocks():
            blk.history = []
        self.adapting = False

    def acceptance_rates(self) -> dict:
        out = {}
        if self.beta_block is not None:
            out["beta"] = self.beta_block.acceptance()
        if self.joint_block is not None:
            out["joint"] = self.joint_block.acceptance()
        if self.spec.detection is Detection.MB:
            out["alpha"] = self.alpha_block.acceptance()
        if self.dcm:
            out["eta"] = float(np.mean(self.eta_block.acceptance()))
            out["shift"] = float(self.shift_block.acceptance())
            out["a"] = float(np.mean(self.a_block.acceptance()))
        return out


def log_posterior(state: AugmentedState, params: ParamState, data: EncounterData, spec: ModelSpec) -> float:
    """Unnormalized log posterior of the sampled state.

    Stratum labels of excluded pseudo-individuals are summed out; binomial
    coefficients of frequency data are dropped.
    """
    N, NT = counts(state)
    try:
        pi = current_pi(params, spec)
        psi = current_psi(params, spec)
    except (PsiBoundsError, FloatingPointError, ValueError):
        return -math.inf
    if not 0.0 < psi < 1.0:
        return -math.inf
    with np.errstate(divide="ignore"):
        lp = float(np.sum(np.where(N > 0, N * np.log(pi), 0.0)))
    lp += NT * math.log(psi) + (spec.M - NT) * math.log1p(-psi)
    K = data.K
    if spec.detection is Detection.M0:
        y, trials = data.total_captures, K * NT
        if (y and params.p <= 0.0) or (trials - y and params.p >= 1.0):
            return -math.inf
        lp += (y * math.log(params.p) if y else 0.0)
        lp += ((trials - y) * math.log1p(-params.p) if trials - y else 0.0)
    else:
        first = data.first_capture
        n = data.n_individuals
        naive = int(first.sum()) + K * (NT - n)
        es, et = int((data.freq - 1).sum()), int((K - first).sum())
        a0, a1 = params.alpha0, params.alpha1
        lp += float(n * _log_expit(a0) + (naive - n) * _log1m_expit(a0)
                    + es * _log_expit(a0 + a1) + (et - es) * _log1m_expit(a0 + a1))
    lp += float(sum(log_prior_terms(params, spec).values()))
    return lp if not math.isnan(lp) else -math.inf


def _initial_params(data: EncounterData, spec: ModelSpec, rng) -> ParamState:
    """Over-dispersed starting values around a crude abundance estimate."""
    fixed = spec.fixed
    N0 = max(rough_abundance(data), data.n_individuals + 1.0) * rng.uniform(0.8, 1.5)
    N0 = min(N0, 0.9 * spec.M)
    X = spec.design
    beta = rng.normal(0.0, 0.5, size=spec.P)
    if spec.constraint is Constraint.DERIVED_PSI:
        icol = int(np.flatnonzero(np.all(X == 1.0, axis=0))[0])
        beta[icol] = 0.0
        lam_sum = np.exp(X @ beta).sum()
        beta[icol] = math.log(N0 / lam_sum)
        psi = float(np.exp(X @ beta).sum() / spec.M)
    else:
        psi = float(fixed.get("psi", N0 / spec.M))
    p = float(fixed.get("p", rng.uniform(0.1, 0.9)))
    p_naive = rng.uniform(0.05, 0.5)
    alpha0 = float(fixed.get("alpha0", math.log(p_naive / (1.0 - p_naive))))
    alpha1 = float(fixed.get("alpha1", rng.normal(0.0, 0.5)))
    a = eta = None
    if spec.abundance is Abundance.DCM:
        a = float(fixed.get("a", rng.uniform(0.5, 5.0)))
        eta = rng.gamma(a, 1.0, size=spec.S)
    return ParamState(beta=beta, psi=psi, p=p, alpha0=alpha0, alpha1=alpha1,
                      eta=eta, a=1.0 if a is None else a)


def sweep(state: AugmentedState, params: ParamState, data: EncounterData, spec: ModelSpec,
          rng, config: SamplerConfig | None = None):
    """Apply one full update cycle in place and return ``(state, params)``.

    Proposal scales are the defaults from ``config``; adaptation only happens
    inside :func:`run`.
    """
    chain = _Chain(state, params, data, spec, rng, config or SamplerConfig(chains=1, iterations=2))
    chain.sweep()
    return chain.state, chain.params


def _chain_rng(seed: int, chain: int):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(chain,)))


def _dump(chain: _Chain, it: int) -> str:
    p = chain.params
    return (f"iteration {it}: beta={p.beta.tolist()} psi={p.psi!r} p={p.p!r} "
            f"alpha=({p.alpha0!r}, {p.alpha1!r}) a={p.a!r} "
            f"eta={None if p.eta is None else p.eta.tolist()} N={chain.state.N.tolist()}")


def _run_chain(args):
    data, spec, config, c = args
    rng = _chain_rng(config.seed, c)
    params = _initial_params(data, spec, rng)
    state = init_state(data, spec, rng)
    chain = _Chain(state, params, data, spec, rng, config)
    if not math.isfinite(log_posterior(state, params, data, spec)):
        raise SamplerError("non-finite log posterior at the initial state; " + _dump(chain, 0))
    names = monitor_names(spec, config.ppc)
    out = np.empty((config.n_retained, len(names)))
    iters = np.empty(config.n_retained, dtype=np.int64)
    n_obs = data.n_per_stratum
    n_T = data.n_individuals
    detection_m0 = spec.detection is Detection.M0
    dcm = spec.abundance is Abundance.DCM
    chain.adapting = config.burnin > 0
    row = 0
    for it in range(1, config.iterations + 1):
        chain.sweep()
        if it <= config.burnin:
            if it % config.adapt_window == 0:
                chain.adapt()
            if it == config.burnin:
                chain.end_adaptation()
        if config.check_every and it % config.check_every == 0:
            N, _ = counts(chain.state)
            if not np.array_equal(N, chain.state.N):
                raise SamplerError("incremental counts diverged from recount; " + _dump(chain, it))
            if not math.isfinite(log_posterior(chain.state, chain.params, data, spec)):
                raise SamplerError("non-finite log posterior; " + _dump(chain, it))
        if it > config.burnin and (it - config.burnin) % config.thin == 0:
            p = chain.params
            vals = list(p.beta)
            vals += [p.p] if detection_m0 else [p.alpha0, p.alpha1]
            vals.append(p.psi)
            if dcm:
                vals.append(p.a)
            N = chain.state.N
            vals.append(float(N.sum()))
            vals += list(N)
            vals += list(chain.pi)
            if config.ppc:
                x_obs = pearson_stat(n_obs, n_T, chain.pi)
                n_sim, n_sim_T = posterior_predictive_counts(chain.state, p, data, spec, rng)
                x_sim = pearson_stat(n_sim, n_sim_T, chain.pi)
                vals += [x_obs, x_sim]
            out[row] = vals
            iters[row] = it
            row += 1
    if not np.all(np.isfinite(out)):
        raise SamplerError("non-finite value among retained draws; " + _dump(chain, config.iterations))
    return out, iters, chain.acceptance_rates()


def run(data: EncounterData, spec: ModelSpec, config: SamplerConfig | None = None) -> DrawsMatrix:
    """Run ``config.chains`` independent chains and collect the retained draws.

    Chain ``c`` uses the RNG stream spawned from ``(config.seed, c)``, so the
    result does not depend on ``config.workers``.
    """
    config = config or SamplerConfig()
    spec.check_data(data)
    if config.n_retained < 1:
        raise ValueError("no draws retained: iterations - burnin must be at least thin")
    if config.chains < 2:
        warnings.warn("R-hat is unavailable with a single chain", SingleChainWarning, stacklevel=2)
    jobs = [(data, spec, config, c) for c in range(config.chains)]
    if config.workers > 1 and config.chains > 1:
        with ProcessPoolExecutor(max_workers=min(config.workers, config.chains)) as pool:
            results = list(pool.map(_run_chain, jobs))
    else:
        results = [_run_chain(job) for job in jobs]
    values = np.stack([r[0] for r in results])
    draws = DrawsMatrix(
        names=monitor_names(spec, config.ppc),
        values=values,
        iters=results[0][1],
        M=spec.M,
        n_observed=data.n_per_stratum,
        meta={"acceptance": [r[2] for r in results], "seed": config.seed},
    )
    NT = draws.flat("N")
    if NT.size and np.mean(NT > 0.95 * spec.M) > 0.01:
        warnings.warn(
            f"M too small: Pr(N_T > 0.95 M) = {np.mean(NT > 0.95 * spec.M):.3f} with M={spec.M}",
            AugmentationWarning, stacklevel=2,
        )
    return draws
