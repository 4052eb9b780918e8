import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats
from scipy.special import expit

from stratcr.model import (
    EncounterData,
    LinkOverflowError,
    ModelSpec,
    ParamState,
    PsiBoundsError,
    cell_probs,
    derived_psi,
    lambda_of,
    log_abundance_prior,
    log_detection,
    log_prior_terms,
    nb_pmf,
)


# -- lambda_of ---------------------------------------------------------------

def test_lambda_zero_coefficient():
    np.testing.assert_array_equal(lambda_of([0.0], np.ones((4, 1))), np.ones(4))


def test_lambda_log_two():
    lam = lambda_of([0.0, math.log(2.0)], [[1, 0], [1, 1]])
    np.testing.assert_allclose(lam, [1.0, 2.0], rtol=1e-15)


def test_lambda_treatment_dummy():
    lam = lambda_of([1.700, 0.835], [[1, 0], [1, 1]])
    np.testing.assert_allclose(lam, [math.exp(1.7), math.exp(2.535)])
    np.testing.assert_allclose(lam, [5.474, 12.62], atol=5e-3)


def test_lambda_overflow_names_stratum():
    with pytest.raises(LinkOverflowError, match="link overflow in stratum 1"):
        lambda_of([800.0], [[0.0], [1.0]])


def test_lambda_shape_mismatch():
    with pytest.raises(ValueError):
        lambda_of([1.0, 2.0], np.ones((3, 1)))


# -- cell_probs --------------------------------------------------------------

@pytest.mark.parametrize("lam, eta, expected", [
    ([1, 1, 1, 1], None, [0.25, 0.25, 0.25, 0.25]),
    ([2, 6], None, [0.25, 0.75]),
    ([1, 1], [3, 1], [0.75, 0.25]),
])
def test_cell_probs_examples(lam, eta, expected):
    np.testing.assert_allclose(cell_probs(lam, eta).pi, expected, rtol=0, atol=1e-15)


def test_cell_probs_extended():
    ext = cell_probs([1.0, 3.0]).extended(0.4)
    np.testing.assert_allclose(ext, [0.1, 0.3, 0.6])
    assert ext.sum() == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("lam, eta", [([0.0, 1.0], None), ([1.0, 1.0], [1.0, 0.0]), ([1.0], [1.0, 2.0])])
def test_cell_probs_rejects_bad_input(lam, eta):
    with pytest.raises(ValueError):
        cell_probs(lam, eta)


def test_cell_probs_normalization_random(rng):
    for _ in range(1000):
        S = rng.integers(1, 60)
        lam = np.exp(rng.normal(0, 3, S))
        eta = rng.gamma(rng.uniform(0.05, 5), 1.0, S) + 1e-300 if rng.random() < 0.5 else None
        pi = cell_probs(lam, eta).pi
        assert abs(pi.sum() - 1.0) <= 1e-12
        assert np.all(pi >= 0)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-20, 20), min_size=1, max_size=12), st.floats(-30, 30))
def test_intercept_cancels_in_cell_probs(log_lam, c):
    lam = np.exp(np.array(log_lam))
    a = cell_probs(lam).pi
    b = cell_probs(math.exp(c) * lam).pi
    np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-300)


# -- derived_psi -------------------------------------------------------------

@pytest.mark.parametrize("lam, M, expected", [([1, 1, 1, 1], 40, 0.1), ([10, 10], 100, 0.2)])
def test_derived_psi(lam, M, expected):
    assert derived_psi(lam, M) == pytest.approx(expected, rel=1e-15)


def test_derived_psi_table_value():
    lam = np.full(48, 636.99 / 48)
    assert derived_psi(lam, 1000) == pytest.approx(0.637, abs=1e-5)


def test_derived_psi_too_small_M():
    with pytest.raises(PsiBoundsError, match="augmentation size M too small"):
        derived_psi([6.0, 5.0], 10)


# -- nb_pmf ------------------------------------------------------------------

@pytest.mark.parametrize("g, a, lam, expected", [
    (0, 1.0, 1.0, 0.5),
    (2, 1.0, 1.0, 0.125),
    (1, 2.0, 0.5, 2 * 0.5 / 1.5 ** 3),
])
def test_nb_pmf_examples(g, a, lam, expected):
    assert nb_pmf(g, a, lam) == pytest.approx(expected, rel=1e-12)


def test_nb_pmf_matches_gamma_poisson_mixture(rng):
    eta = rng.gamma(2.0, 1.0, size=400_000)
    g = rng.poisson(0.5 * eta)
    freq = np.mean(g == 1)
    se = math.sqrt(freq * (1 - freq) / g.size)
    assert abs(freq - nb_pmf(1, 2.0, 0.5)) < 4 * se


def test_nb_pmf_agrees_with_scipy():
    g = np.arange(40)
    a, lam = 2.7, 3.1
    np.testing.assert_allclose(nb_pmf(g, a, lam), stats.nbinom.pmf(g, a, 1 / (1 + lam)), rtol=1e-10)


def _nb_support(a, lam):
    # upper point beyond which the tail mass is below 1e-12
    return int(stats.nbinom.isf(1e-13, a, 1 / (1 + lam))) + 2


def test_nb_pmf_tail_sum_and_mean(rng):
    for _ in range(1000):
        a = rng.uniform(0.2, 20.0)
        lam = rng.uniform(0.05, 30.0)
        g = np.arange(_nb_support(a, lam))
        pmf = nb_pmf(g, a, lam)
        assert abs(pmf.sum() - 1.0) < 1e-10
        assert abs(np.dot(g, pmf) - a * lam) < 1e-6 * max(1.0, a * lam)


@pytest.mark.parametrize("g, a, lam", [(-1, 1.0, 1.0), (1.5, 1.0, 1.0), (1, 0.0, 1.0), (1, 1.0, 0.0)])
def test_nb_pmf_domain(g, a, lam):
    with pytest.raises(ValueError):
        nb_pmf(g, a, lam)


# -- log_detection -----------------------------------------------------------

M0 = ModelSpec(design=[[1.0]], M=10, detection="M0", constraint="derived")
MB = ModelSpec(design=[[1.0]], M=10, detection="Mb", constraint="derived")


def test_all_zero_history_excluded():
    assert log_detection([0, 0, 0], ParamState(beta=[0.0], psi=0.1, p=0.3), 0, M0) == 0.0


def test_excluded_with_captures_is_impossible():
    assert log_detection([0, 1], ParamState(beta=[0.0], psi=0.1, p=0.3), 0, M0) == -math.inf


def test_m0_frequency_binomial():
    lp = log_detection(1, ParamState(beta=[0.0], psi=0.1, p=0.5), 1, M0, K=2)
    assert lp == pytest.approx(math.log(0.5), rel=1e-14)


def test_mb_history_no_behaviour():
    lp = log_detection([1, 0, 1], ParamState(beta=[0.0], psi=0.1, alpha0=0.0, alpha1=0.0), 1, MB)
    assert lp == pytest.approx(math.log(0.125), rel=1e-14)


def test_mb_behavioural_response_uses_ever_captured():
    params = ParamState(beta=[0.0], psi=0.1, alpha0=-1.0, alpha1=2.0)
    p0, p1 = expit(-1.0), expit(1.0)
    lp = log_detection([0, 1, 0, 1], params, 1, MB)
    assert lp == pytest.approx(math.log((1 - p0) * p0 * (1 - p1) * p1), rel=1e-13)


def test_mb_reduces_to_m0(rng):
    for _ in range(200):
        K = int(rng.integers(1, 8))
        h = (rng.random(K) < 0.5).astype(int)
        a0 = rng.normal(0, 2)
        mb = log_detection(h, ParamState(beta=[0.0], psi=0.5, alpha0=a0, alpha1=0.0), 1, MB)
        m0 = log_detection(h, ParamState(beta=[0.0], psi=0.5, p=expit(a0)), 1, M0)
        assert mb == pytest.approx(m0, rel=1e-12, abs=1e-12)


def test_mb_needs_history():
    with pytest.raises(ValueError, match="full capture history"):
        log_detection(2, ParamState(beta=[0.0], psi=0.1), 1, MB, K=3)


# -- priors ------------------------------------------------------------------

def test_beta_prior_terms():
    spec = ModelSpec(design=[[1.0, 0.0], [1.0, 1.0]], M=10)
    terms = log_prior_terms(ParamState(beta=[0.0, 0.0], psi=0.1, p=0.5), spec)
    assert terms["beta"] == pytest.approx(2 * -0.5 * math.log(20 * math.pi), rel=1e-14)


def test_shape_prior_support():
    spec = ModelSpec(design=[[0.0], [1.0]], M=10, abundance="dcm", constraint="free")
    params = ParamState(beta=[0.0], psi=0.5, p=0.5, eta=[1.0, 1.0], a=1500.0)
    assert log_abundance_prior(params, spec) == -math.inf


def test_gamma_noise_prior_at_one():
    spec = ModelSpec(design=[[0.0]], M=10, abundance="dcm", constraint="free")
    terms = log_prior_terms(ParamState(beta=[0.0], psi=0.5, eta=[1.0], a=1.0), spec)
    assert terms["eta"] == pytest.approx(-1.0, rel=1e-14)


def test_prior_out_of_domain():
    spec = ModelSpec(design=[[0.0]], M=10, constraint="free")
    assert log_abundance_prior(ParamState(beta=[0.0], psi=1.2, p=0.5), spec) == -math.inf
    assert log_abundance_prior(ParamState(beta=[0.0], psi=0.2, p=-0.1), spec) == -math.inf


# -- domain types ------------------------------------------------------------

def test_encounter_data_rejects_uncaptured():
    with pytest.raises(ValueError, match="uncaptured individual in data"):
        EncounterData(strata=[0, 0], K=2, S=1, histories=[[1, 0], [0, 0]])


def test_encounter_data_stratum_range():
    with pytest.raises(ValueError, match="out of range"):
        EncounterData(strata=[2], K=1, S=2, freq=[1])


def test_encounter_data_first_capture(small_data):
    np.testing.assert_array_equal(small_data.first_capture, [1, 2, 1])
    np.testing.assert_array_equal(small_data.n_per_stratum, [1, 2])
    assert small_data.total_captures == 4


@pytest.mark.parametrize("design, constraint, abundance", [
    ([[0.0], [1.0]], "derived", "poisson"),
    ([[1.0], [1.0]], "free", "poisson"),
    ([[1.0], [1.0]], "derived", "dcm"),
])
def test_model_spec_constraint_rules(design, constraint, abundance):
    with pytest.raises(ValueError):
        ModelSpec(design=design, M=10, constraint=constraint, abundance=abundance)


def test_model_spec_requires_M_above_n(small_data, derived_spec):
    spec = ModelSpec(design=derived_spec.design, M=3)
    with pytest.raises(ValueError, match="must exceed"):
        spec.check_data(small_data)


def test_model_spec_mb_needs_histories():
    data = EncounterData(strata=[0], K=3, S=1, freq=[2])
    spec = ModelSpec(design=[[1.0]], M=5, detection="Mb")
    with pytest.raises(ValueError, match="histories"):
        spec.check_data(data)
