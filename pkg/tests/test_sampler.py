import math
import warnings

import numpy as np
import pytest
from scipy import integrate, optimize
from scipy.special import logit

from stratcr.diagnostics import effective_sample_size, mcse_mean
from stratcr.latent import init_state
from stratcr.model import EncounterData, ModelSpec, ParamState
from stratcr.sampler import (
    AugmentationWarning,
    SamplerConfig,
    SamplerError,
    SingleChainWarning,
    adapt_step,
    default_M,
    log_posterior,
    monitor_names,
    rough_abundance,
    run,
    sweep,
)
from stratcr.simulate import simulate_dataset


@pytest.fixture(scope="module")
def m0_data():
    spec = ModelSpec(design=np.ones((3, 1)), M=10**6, detection="M0", constraint="derived")
    truth = ParamState(beta=[math.log(40.0)], psi=0.5, p=0.3)
    return simulate_dataset(spec, truth, K=4, rng=np.random.default_rng(7)).data


# -- configuration -----------------------------------------------------------

def test_config_defaults():
    cfg = SamplerConfig()
    assert cfg.burnin == cfg.iterations // 2
    assert cfg.thin == 1
    assert cfg.target_accept == 0.40
    assert cfg.n_retained == 2000


@pytest.mark.parametrize("kwargs", [
    dict(iterations=100, burnin=100),
    dict(thin=0),
    dict(chains=0),
    dict(target_accept=1.0),
    dict(adapt_window=0),
])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        SamplerConfig(**kwargs)


def test_iterations_equal_burnin_is_an_error():
    with pytest.raises(ValueError, match="no draws"):
        SamplerConfig(iterations=50, burnin=50)


# -- adapt_step --------------------------------------------------------------

def test_adapt_all_accepted_grows():
    assert adapt_step([1] * 50, 0.3) > 0.3


def test_adapt_none_accepted_shrinks():
    assert adapt_step([0] * 50, 0.3) < 0.3


def test_adapt_on_target_unchanged():
    assert adapt_step([1] * 20 + [0] * 30, 0.3) == pytest.approx(0.3, rel=1e-15)


# -- run ---------------------------------------------------------------------

def test_draw_shapes_and_bounds(m0_data):
    spec = ModelSpec(design=np.ones((3, 1)), M=default_M(m0_data), detection="M0")
    cfg = SamplerConfig(chains=2, iterations=700, burnin=300, thin=3, seed=4)
    draws = run(m0_data, spec, cfg)
    assert draws.values.shape == (2, 133, len(monitor_names(spec)))
    assert draws.names == monitor_names(spec)
    assert np.all(np.isfinite(draws.values))
    NT = draws.flat("N")
    assert NT.min() >= m0_data.n_individuals and NT.max() <= spec.M
    Ns = np.stack([draws.flat(f"N[{s + 1}]") for s in range(3)], axis=1)
    np.testing.assert_array_equal(Ns.sum(axis=1), NT)
    assert np.all(Ns >= m0_data.n_per_stratum)
    pis = np.stack([draws.flat(f"pi[{s + 1}]") for s in range(3)], axis=1)
    np.testing.assert_allclose(pis.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_array_equal(draws.iters, 300 + 3 * np.arange(1, 134))


def test_same_seed_same_draws(m0_data):
    spec = ModelSpec(design=np.ones((3, 1)), M=400, detection="M0")
    cfg = SamplerConfig(chains=2, iterations=300, seed=11)
    a = run(m0_data, spec, cfg)
    b = run(m0_data, spec, cfg)
    assert a.values.tobytes() == b.values.tobytes()
    c = run(m0_data, spec, SamplerConfig(chains=2, iterations=300, seed=12))
    assert a.values.tobytes() != c.values.tobytes()


def test_workers_do_not_change_draws(m0_data):
    spec = ModelSpec(design=np.ones((3, 1)), M=400, detection="M0")
    serial = run(m0_data, spec, SamplerConfig(chains=2, iterations=200, seed=5))
    parallel = run(m0_data, spec, SamplerConfig(chains=2, iterations=200, seed=5, workers=2))
    assert serial.values.tobytes() == parallel.values.tobytes()


def test_single_chain_warns(m0_data):
    spec = ModelSpec(design=np.ones((3, 1)), M=400, detection="M0")
    with pytest.warns(SingleChainWarning):
        run(m0_data, spec, SamplerConfig(chains=1, iterations=50))


def test_small_M_warns():
    data = EncounterData(strata=[0, 0, 0, 0, 0, 0], K=1, S=1, freq=[1] * 6)
    spec = ModelSpec(design=[[1.0]], M=8, detection="M0")
    with pytest.warns(AugmentationWarning, match="M too small"):
        run(data, spec, SamplerConfig(chains=2, iterations=400, seed=1, ppc=False))


def test_mb_and_dcm_run_cleanly(rng):
    design = np.array([[0.0], [1.0], [0.5]])
    spec = ModelSpec(design=design, M=10**6, abundance="dcm", detection="Mb", constraint="free")
    truth = ParamState(beta=[0.5], psi=0.5, alpha0=-1.0, alpha1=0.5, a=2.0)
    lam = np.exp(3.0 + design[:, 0] * 0.5)
    data = simulate_dataset(spec, truth, K=5, rng=rng, lam=lam).data
    spec = ModelSpec(design=design, M=default_M(data), abundance="dcm", detection="Mb", constraint="free")
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        draws = run(data, spec, SamplerConfig(chains=2, iterations=400, seed=2))
    assert "a" in draws.names and "alpha1" in draws.names
    assert np.all(draws.flat("a") > 0)
    assert set(draws.meta["acceptance"][0]) == {"beta", "joint", "alpha", "eta", "shift", "a"}


# -- sweep and log posterior -------------------------------------------------

def test_public_sweep_returns_valid_state(small_data, derived_spec, rng):
    state = init_state(small_data, derived_spec, seed=rng)
    params = ParamState(beta=[-0.5, 0.2], psi=0.0, p=0.5)
    for _ in range(50):
        state, params = sweep(state, params, small_data, derived_spec, rng)
        assert math.isfinite(log_posterior(state, params, small_data, derived_spec))
    assert params.psi == pytest.approx(np.exp(params.beta[0]) * (1 + np.exp(params.beta[1])) / 8)


def test_log_posterior_rejects_psi_above_one(small_data, derived_spec):
    state = init_state(small_data, derived_spec, seed=0)
    assert log_posterior(state, ParamState(beta=[3.0, 0.0], psi=0.0, p=0.5), small_data, derived_spec) == -math.inf


def test_sweep_reports_non_finite_start(small_data):
    spec = ModelSpec(design=[[0.0], [1.0]], M=8, constraint="free", fixed={"p": 1.0})
    # p = 1 cannot produce the history (0, 1); the chain must refuse to start
    with pytest.raises(SamplerError, match="non-finite"):
        run(small_data, spec, SamplerConfig(chains=2, iterations=10))


# -- rough abundance ---------------------------------------------------------

def test_rough_abundance_frequency_data():
    # y-bar = K p / (1 - (1-p)^K) is inverted for p, then n / (1 - (1-p)^K)
    data = EncounterData(strata=[0] * 4, K=2, S=1, freq=[1, 1, 1, 2])
    p = optimize.brentq(lambda p: 2 * p / (1 - (1 - p) ** 2) - 1.25, 1e-9, 1 - 1e-9)
    assert rough_abundance(data) == pytest.approx(4 / (1 - (1 - p) ** 2), rel=1e-6)


def test_default_M_exceeds_n(m0_data):
    assert default_M(m0_data) > m0_data.n_individuals
    assert default_M(m0_data) == math.ceil(5 * rough_abundance(m0_data))


# -- statistical checks ------------------------------------------------------

def _psi_marginal(n, M, f0):
    """Posterior of psi with p fixed: psi^n (1 - psi (1 - f0))^(M - n) on (0, 1)."""
    def dens(x):
        return x ** n * (1 - x * (1 - f0)) ** (M - n)
    z = integrate.quad(dens, 0, 1, epsabs=0, epsrel=1e-12)[0]

    def cdf(x):
        return integrate.quad(dens, 0, x, epsabs=0, epsrel=1e-12)[0] / z
    return dens, z, cdf


def test_two_parameter_toy_matches_closed_form():
    """(psi, N_T) with p fixed: the psi marginal and E[N_T] have closed forms."""
    data = EncounterData(strata=[0, 0, 0, 0, 0], K=2, S=1, freq=[1, 2, 1, 1, 1])
    M, p = 30, 0.35
    f0 = (1 - p) ** 2
    spec = ModelSpec(design=[[0.0]], M=M, constraint="free", fixed={"p": p})
    draws = run(data, spec, SamplerConfig(chains=2, iterations=21000, burnin=1000, seed=8, ppc=False))
    psi = draws["psi"]
    dens, z, cdf = _psi_marginal(5, M, f0)
    for level in (0.025, 0.5, 0.975):
        q = optimize.brentq(lambda x: cdf(x) - level, 1e-9, 1 - 1e-9)
        ind = (psi <= q).astype(float)
        se = math.sqrt(level * (1 - level) / effective_sample_size(ind))
        assert abs(ind.mean() - level) < 3 * se
    # E[N_T] = n + (M - n) E[q(psi)], q = psi f0 / (psi f0 + 1 - psi)
    eq = integrate.quad(lambda x: dens(x) * x * f0 / (x * f0 + 1 - x), 0, 1, epsrel=1e-12)[0] / z
    NT = draws["N"]
    assert abs(NT.mean() - (5 + (M - 5) * eq)) < 3 * mcse_mean(NT)


def test_mb_without_behaviour_matches_m0(m0_data):
    h = np.zeros((m0_data.n_individuals, m0_data.K), dtype=int)
    rng = np.random.default_rng(3)
    for i, y in enumerate(m0_data.freq):
        h[i, rng.choice(m0_data.K, y, replace=False)] = 1
    data = EncounterData(strata=m0_data.strata, K=m0_data.K, S=m0_data.S, histories=h)
    M = default_M(data)
    cfg = SamplerConfig(chains=2, iterations=6000, seed=21, ppc=False)
    m0 = run(data, ModelSpec(design=np.ones((3, 1)), M=M, detection="M0"), cfg)
    mb = run(data, ModelSpec(design=np.ones((3, 1)), M=M, detection="Mb", fixed={"alpha1": 0.0}), cfg)
    lp = logit(m0["p"])
    a0 = mb["alpha0"]
    se = math.hypot(mcse_mean(lp), mcse_mean(a0))
    assert abs(lp.mean() - a0.mean()) < 3 * se
