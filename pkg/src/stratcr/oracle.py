"""Exact posterior by brute-force enumeration on tiny instances.

Every configuration of ``(z_i, g_i)`` for the uncaptured slots is visited and
its joint density (including the stratum prior of excluded pseudo-individuals,
which the sampler sums out) is accumulated in log space. Continuous parameters
are either fixed through ``ModelSpec.fixed`` or placed on a supplied grid.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp
from scipy.stats import binom

from .model import (
    Abundance,
    Constraint,
    Detection,
    EncounterData,
    ModelSpec,
    ParamState,
    PsiBoundsError,
    cell_probs,
    derived_psi,
    lambda_of,
    log_abundance_prior,
    log_detection,
)

__all__ = [
    "ExactPosterior",
    "GateReport",
    "exact_posterior",
    "zib_nt_posterior",
    "legendre_axis",
    "compare_to_mcmc",
    "reference_instance",
    "run_gate",
    "MAX_M",
    "MAX_S",
    "MAX_K",
    "MAX_GRID",
    "MAX_TERMS",
]

MAX_M = 12
MAX_S = 3
MAX_K = 3
MAX_GRID = 50
MAX_TERMS = 10_000_000


@dataclass
class ExactPosterior:
    """Posterior pmf of ``N_T`` and posterior mass of every grid node."""

    nt_values: np.ndarray
    nt_pmf: np.ndarray
    node_names: list[str]
    nodes: np.ndarray
    node_post: np.ndarray
    log_evidence: float
    total_mass: float = 1.0

    def marginal(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        j = self.node_names.index(name)
        vals, inv = np.unique(self.nodes[:, j], return_inverse=True)
        return vals, np.bincount(inv, weights=self.node_post, minlength=vals.size)

    def expect(self, fn) -> float:
        """Posterior expectation of ``fn(node_dict)`` over the grid."""
        vals = [fn(dict(zip(self.node_names, row))) for row in self.nodes]
        return float(np.dot(self.node_post, vals))

    def nt_mean(self) -> float:
        return float(np.dot(self.nt_values, self.nt_pmf))


@dataclass
class GateReport:
    tv: float
    tolerance: float
    n_draws: int
    exact_pmf: np.ndarray
    mcmc_pmf: np.ndarray
    nt_values: np.ndarray
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.tv <= self.tolerance

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}: TV = {self.tv:.5f} (tolerance {self.tolerance}, {self.n_draws} draws)"


def _free_names(spec: ModelSpec) -> list[str]:
    names = [f"beta[{nm}]" for nm in spec.design_names]
    fixed = spec.fixed
    if spec.detection is Detection.M0:
        if "p" not in fixed:
            names.append("p")
    else:
        names += [k for k in ("alpha0", "alpha1") if k not in fixed]
    if spec.constraint is Constraint.FREE_PSI and "psi" not in fixed:
        names.append("psi")
    if spec.abundance is Abundance.DCM:
        names += [f"eta[{s + 1}]" for s in range(spec.S)]
        if "a" not in fixed:
            names.append("a")
    return names


def _params_at(node: dict, spec: ModelSpec) -> ParamState:
    fixed = spec.fixed
    beta = np.array([node[f"beta[{nm}]"] for nm in spec.design_names])
    eta = None
    if spec.abundance is Abundance.DCM:
        eta = np.array([node[f"eta[{s + 1}]"] for s in range(spec.S)])
    return ParamState(
        beta=beta,
        psi=float(node.get("psi", fixed.get("psi", 0.5))),
        p=float(node.get("p", fixed.get("p", 0.5))),
        alpha0=float(node.get("alpha0", fixed.get("alpha0", 0.0))),
        alpha1=float(node.get("alpha1", fixed.get("alpha1", 0.0))),
        eta=eta,
        a=float(node.get("a", fixed.get("a", 1.0))),
    )


def _grid_axis(spec_entry) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(spec_entry, tuple):
        nodes, weights = spec_entry
        nodes, weights = np.asarray(nodes, float), np.asarray(weights, float)
    else:
        nodes = np.asarray(spec_entry, float)
        weights = np.ones_like(nodes)
    if nodes.ndim != 1 or nodes.size == 0 or nodes.size > MAX_GRID:
        raise ValueError(f"each grid axis needs 1..{MAX_GRID} nodes")
    if weights.shape != nodes.shape or np.any(weights <= 0):
        raise ValueError("grid weights must be positive, one per node")
    return nodes, weights


def _check_bounds(data: EncounterData, spec: ModelSpec):
    spec.check_data(data)
    if spec.M > MAX_M or spec.S > MAX_S or data.K > MAX_K:
        raise ValueError(
            f"instance too large for enumeration (M={spec.M} <= {MAX_M}, "
            f"S={spec.S} <= {MAX_S}, K={data.K} <= {MAX_K} required)"
        )


def _captured_loglik(data: EncounterData, params: ParamState, spec: ModelSpec) -> float:
    total = 0.0
    for i in range(data.n_individuals):
        rec = data.histories[i] if data.histories is not None else data.freq[i]
        total += log_detection(rec, params, 1, spec, K=data.K)
    return total


def _node_terms(data: EncounterData, spec: ModelSpec, params: ParamState):
    """Log prior, captured-individual term and per-cell pseudo log weights at one node."""
    lp_prior = log_abundance_prior(params, spec)
    if not math.isfinite(lp_prior):
        return None
    lam = lambda_of(params.beta, spec.design)
    eta = params.eta if spec.abundance is Abundance.DCM else None
    pi = cell_probs(lam, eta).pi
    if spec.constraint is Constraint.DERIVED_PSI:
        try:
            psi = derived_psi(lam, spec.M)
        except PsiBoundsError:
            return None
    else:
        psi = params.psi
    if not 0.0 < psi < 1.0:
        return None
    log_pi = np.log(pi)
    n = data.n_individuals
    captured = (n * math.log(psi) + float(log_pi[data.strata].sum())
                + _captured_loglik(data, params, spec))
    miss = log_detection(np.zeros(data.K, dtype=int), params, 1, spec)
    cell = np.concatenate([math.log1p(-psi) + log_pi, math.log(psi) + miss + log_pi])
    return lp_prior, captured, cell


def _enumerate_configs(m: int, S: int, chunk: int = 200_000):
    cells = range(2 * S)
    it = itertools.product(cells, repeat=m)
    while True:
        block = list(itertools.islice(it, chunk))
        if not block:
            return
        yield np.asarray(block, dtype=np.int64).reshape(len(block), m)


def exact_posterior(data: EncounterData, spec: ModelSpec, grid: dict | None = None,
                    method: str = "enumerate") -> ExactPosterior:
    """Exact posterior of ``N_T`` and of gridded parameters.

    Parameters
    ----------
    grid : dict, optional
        Maps every free parameter name (``"beta[<col>]"``, ``"p"``, ``"psi"``,
        ``"alpha0"``, ``"alpha1"``, ``"eta[<s>]"``, ``"a"``) that is not in
        ``spec.fixed`` to either an array of nodes or a ``(nodes, weights)``
        pair of quadrature weights. Node prior mass is the prior density times
        the weight.
    method : {"enumerate", "analytic"}
        ``"enumerate"`` visits all ``(2S)^(M - n_T)`` latent configurations.
        ``"analytic"`` sums the stratum labels out in closed form, which is
        exact because detection does not depend on the stratum.
    """
    if method not in ("enumerate", "analytic"):
        raise ValueError(f"unknown method {method!r}")
    _check_bounds(data, spec)
    grid = dict(grid or {})
    names = _free_names(spec)
    missing = [nm for nm in names if nm not in grid]
    if missing:
        raise ValueError(f"no grid or fixed value for {missing}")
    extra = set(grid) - set(names)
    if extra:
        raise ValueError(f"grid given for parameters that are not free: {sorted(extra)}")
    axes = [_grid_axis(grid[nm]) for nm in names]
    n_nodes = int(np.prod([ax[0].size for ax in axes])) if axes else 1

    n = data.n_individuals
    m = spec.M - n
    S = spec.S
    if method == "enumerate" and (2 * S) ** m * n_nodes > MAX_TERMS:
        raise ValueError(f"enumeration would need {(2 * S) ** m * n_nodes} terms (> {MAX_TERMS})")

    node_vals = np.array(list(itertools.product(*[ax[0] for ax in axes]))) if axes else np.zeros((1, 0))
    node_w = np.array([np.prod(w) for w in itertools.product(*[ax[1] for ax in axes])]) if axes else np.ones(1)

    nt_values = np.arange(n, spec.M + 1)
    log_nt = np.full((n_nodes, m + 1), -np.inf)
    nodes_terms = []
    for k in range(n_nodes):
        params = _params_at(dict(zip(names, node_vals[k])), spec)
        nodes_terms.append(_node_terms(data, spec, params))

    if method == "enumerate":
        for configs in _enumerate_configs(m, S):
            n_real = (configs >= S).sum(axis=1)
            for k, terms in enumerate(nodes_terms):
                if terms is None:
                    continue
                _, _, cell = terms
                lw = cell[configs].sum(axis=1)
                for j in range(m + 1):
                    sel = lw[n_real == j]
                    if sel.size:
                        log_nt[k, j] = np.logaddexp(log_nt[k, j], logsumexp(sel))
    else:
        j = np.arange(m + 1)
        log_binom = gammaln(m + 1) - gammaln(j + 1) - gammaln(m - j + 1)
        for k, terms in enumerate(nodes_terms):
            if terms is None:
                continue
            _, _, cell = terms
            log_w0 = logsumexp(cell[:S])
            log_w1 = logsumexp(cell[S:])
            log_nt[k] = log_binom + j * log_w1 + (m - j) * log_w0

    for k, terms in enumerate(nodes_terms):
        if terms is None:
            continue
        lp_prior, captured, _ = terms
        log_nt[k] += lp_prior + captured + math.log(node_w[k])

    log_z = logsumexp(log_nt)
    post = np.exp(log_nt - log_z)
    total = float(post.sum())
    return ExactPosterior(
        nt_values=nt_values,
        nt_pmf=post.sum(axis=0),
        node_names=names,
        nodes=node_vals,
        node_post=post.sum(axis=1),
        log_evidence=float(log_z),
        total_mass=total,
    )


def legendre_axis(lo: float, hi: float, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on ``[lo, hi]``, usable as a grid entry.

    Far more accurate than an even grid when the posterior changes quickly near
    an edge, e.g. an intercept close to the value where derived psi reaches 1.
    """
    x, w = np.polynomial.legendre.leggauss(k)
    half = 0.5 * (hi - lo)
    return lo + half * (x + 1.0), w * half


def zib_nt_posterior(data: EncounterData, spec: ModelSpec, params: ParamState) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form posterior of ``N_T`` with every parameter held fixed.

    ``N_T - n_T ~ Binom(M - n_T, q)`` where ``q = psi f0 / (psi f0 + 1 - psi)``
    and ``f0`` is the probability of an all-zero history for a real individual.
    """
    n = data.n_individuals
    m = spec.M - n
    psi = (derived_psi(lambda_of(params.beta, spec.design), spec.M)
           if spec.constraint is Constraint.DERIVED_PSI else params.psi)
    f0 = math.exp(log_detection(np.zeros(data.K, dtype=int), params, 1, spec))
    q = psi * f0 / (psi * f0 + 1.0 - psi)
    j = np.arange(m + 1)
    return n + j, binom.pmf(j, m, q)


def compare_to_mcmc(exact: ExactPosterior, draws, tolerance: float = 0.02) -> GateReport:
    """Total-variation distance between the exact and the empirical pmf of ``N_T``.

    ``draws`` is a :class:`~stratcr.sampler.DrawsMatrix` or an array of ``N_T`` values.
    """
    nt = draws.flat("N") if hasattr(draws, "names") else np.asarray(draws).reshape(-1)
    nt = np.rint(nt).astype(np.int64)
    lo = min(int(exact.nt_values[0]), int(nt.min()))
    hi = max(int(exact.nt_values[-1]), int(nt.max()))
    support = np.arange(lo, hi + 1)
    p_exact = np.zeros(support.size)
    p_exact[exact.nt_values - lo] = exact.nt_pmf
    p_mcmc = np.bincount(nt - lo, minlength=support.size) / nt.size
    tv = 0.5 * float(np.abs(p_exact - p_mcmc).sum())
    return GateReport(tv=tv, tolerance=tolerance, n_draws=int(nt.size),
                      exact_pmf=p_exact, mcmc_pmf=p_mcmc, nt_values=support)


def reference_instance(seed: int = 20240601):
    """The S=2, M=8, K=2 gate instance with p and psi fixed at 0.5.

    Returns ``(data, spec, grid)``. The single abundance coefficient multiplies
    a 0/1 stratum covariate; its grid only matters for the coefficient's own
    posterior since ``N_T`` does not depend on it when p and psi are fixed.
    """
    from .simulate import simulate_dataset

    design = np.array([[0.0], [1.0]])
    spec = ModelSpec(design=design, M=8, abundance="poisson", detection="M0",
                     constraint="free", design_names=["x"], fixed={"p": 0.5, "psi": 0.5})
    truth = ParamState(beta=np.array([0.4]), psi=0.5, p=0.5)
    rng = np.random.default_rng(seed)
    while True:
        sim = simulate_dataset(spec, truth, K=2, rng=rng, covariates=design, covariate_names=["x"])
        # keep instances where several pseudo-individuals remain latent
        if 1 <= sim.data.n_individuals <= 4:
            break
    grid = {"beta[x]": np.linspace(-4.0, 4.0, 41)}
    return sim.data, spec, grid


def run_gate(n_draws: int = 200_000, tolerance: float = 0.02, seed: int = 1, chains: int = 2) -> GateReport:
    """Run the sampler on :func:`reference_instance` and compare with enumeration."""
    from .sampler import SamplerConfig, run

    data, spec, grid = reference_instance()
    exact = exact_posterior(data, spec, grid)
    per_chain = -(-n_draws // chains)
    burnin = 1000
    config = SamplerConfig(chains=chains, iterations=burnin + per_chain, burnin=burnin,
                           seed=seed, ppc=False)
    draws = run(data, spec, config)
    report = compare_to_mcmc(exact, draws, tolerance)
    report.extra["n_captured"] = data.n_individuals
    return report
