"""Domain types, link functions and log-densities for stratified abundance models.

Two abundance families are supported. Under the Poisson family the stratum
sizes are ``N_s ~ Poisson(lambda_s)`` and, conditional on the total, the
allocation of individuals to strata is multinomial with cell probabilities
``lambda_s / sum(lambda)``. Under the Dirichlet compound multinomial (DCM)
family each stratum carries a gamma noise term ``eta_s ~ Gamma(a, 1)`` and the
cell probabilities become ``eta_s lambda_s / sum(eta lambda)``.

Detection is either constant (``M0``) or has a behavioural response (``Mb``)
where the logit of the capture probability shifts by ``alpha1`` once an
individual has been caught.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit, gammaln

__all__ = [
    "Abundance",
    "Detection",
    "Constraint",
    "EncounterData",
    "ModelSpec",
    "ParamState",
    "CellProbs",
    "LinkOverflowError",
    "PsiBoundsError",
    "BETA_PRIOR_VAR",
    "ALPHA_PRIOR_VAR",
    "A_PRIOR_UPPER",
    "lambda_of",
    "cell_probs",
    "derived_psi",
    "nb_pmf",
    "log_detection",
    "log_prior_terms",
    "log_abundance_prior",
    "has_intercept",
]

#: Prior variance of each log-linear abundance coefficient (precision 0.1).
BETA_PRIOR_VAR = 10.0
#: Prior variance of the Mb detection coefficients on the logit scale.
ALPHA_PRIOR_VAR = 10.0
#: Upper bound of the uniform prior on the gamma shape ``a``.
A_PRIOR_UPPER = 1000.0

_LOG_2PI = math.log(2.0 * math.pi)


class Abundance(str, enum.Enum):
    POISSON = "poisson"
    DCM = "dcm"


class Detection(str, enum.Enum):
    M0 = "M0"
    MB = "Mb"


class Constraint(str, enum.Enum):
    #: psi = sum(lambda) / M, intercept estimated.
    DERIVED_PSI = "derived"
    #: psi free with a uniform prior, intercept fixed at zero.
    FREE_PSI = "free"


class LinkOverflowError(FloatingPointError):
    """Raised when exp(design @ beta) is not finite."""


class PsiBoundsError(ValueError):
    """Raised when the derived inclusion probability leaves (0, 1)."""


def has_intercept(design: np.ndarray) -> bool:
    """True if any column of ``design`` is identically one."""
    design = np.asarray(design, dtype=float)
    if design.ndim != 2 or design.shape[1] == 0:
        return False
    return bool(np.any(np.all(design == 1.0, axis=0)))


@dataclass
class EncounterData:
    """Observed capture data for the captured individuals only.

    Parameters
    ----------
    strata : (n,) int array
        Stratum index of each captured individual, 0-based (``0..S-1``).
    K : int
        Number of sampling occasions in every stratum.
    S : int
        Number of strata.
    histories : (n, K) int array, optional
        Binary capture histories. Required for the Mb detection model.
    freq : (n,) int array, optional
        Capture frequencies. Derived from ``histories`` when those are given.
    covariates : (S, P) float array, optional
        Stratum-level covariates, one row per stratum.
    covariate_names : list of str, optional
    ids : list of str, optional
        Individual identifiers, kept only for round-tripping files.
    """

    strata: np.ndarray
    K: int
    S: int
    histories: np.ndarray | None = None
    freq: np.ndarray | None = None
    covariates: np.ndarray | None = None
    covariate_names: list[str] = field(default_factory=list)
    ids: list[str] | None = None

    def __post_init__(self):
        self.K = int(self.K)
        self.S = int(self.S)
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")
        if self.S < 1:
            raise ValueError(f"S must be >= 1, got {self.S}")
        self.strata = np.asarray(self.strata, dtype=np.int64).reshape(-1)
        n = self.strata.size
        if self.histories is not None:
            h = np.asarray(self.histories, dtype=np.int8)
            if h.ndim != 2 or h.shape != (n, self.K):
                raise ValueError(f"histories must have shape ({n}, {self.K}), got {h.shape}")
            if np.any((h != 0) & (h != 1)):
                raise ValueError("histories must be binary")
            self.histories = h
            freq = h.sum(axis=1).astype(np.int64)
            if self.freq is not None and not np.array_equal(np.asarray(self.freq), freq):
                raise ValueError("freq does not match the row sums of histories")
            self.freq = freq
        elif self.freq is None:
            raise ValueError("either histories or freq is required")
        else:
            self.freq = np.asarray(self.freq, dtype=np.int64).reshape(-1)
            if self.freq.size != n:
                raise ValueError("freq and strata differ in length")
        if np.any(self.freq < 1):
            raise ValueError("uncaptured individual in data")
        if np.any(self.freq > self.K):
            raise ValueError(f"capture frequency exceeds K={self.K}")
        if n and (self.strata.min() < 0 or self.strata.max() >= self.S):
            raise ValueError(f"stratum index out of range 0..{self.S - 1}")
        if self.covariates is not None:
            cov = np.asarray(self.covariates, dtype=float)
            if cov.ndim == 1:
                cov = cov[:, None]
            if cov.shape[0] != self.S:
                raise ValueError(f"covariates need {self.S} rows, got {cov.shape[0]}")
            self.covariates = cov

    @property
    def n_individuals(self) -> int:
        return int(self.strata.size)

    @property
    def n_per_stratum(self) -> np.ndarray:
        return np.bincount(self.strata, minlength=self.S)

    @property
    def total_captures(self) -> int:
        return int(self.freq.sum())

    @property
    def first_capture(self) -> np.ndarray:
        """1-based occasion of first capture for each individual."""
        if self.histories is None:
            raise ValueError("first capture requires full histories")
        return np.argmax(self.histories == 1, axis=1) + 1


@dataclass
class ModelSpec:
    """Model configuration.

    ``fixed`` pins named scalar parameters (``"p"``, ``"psi"``, ``"alpha0"``,
    ``"alpha1"``, ``"a"``) to constants; the sampler then skips their update.
    """

    design: np.ndarray
    M: int
    abundance: Abundance = Abundance.POISSON
    detection: Detection = Detection.M0
    constraint: Constraint = Constraint.DERIVED_PSI
    design_names: list[str] | None = None
    fixed: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        self.abundance = Abundance(self.abundance)
        self.detection = Detection(self.detection)
        self.constraint = Constraint(self.constraint)
        design = np.asarray(self.design, dtype=float)
        if design.ndim == 1:
            design = design[:, None]
        if not np.all(np.isfinite(design)):
            raise ValueError("design matrix must be finite")
        self.design = design
        self.M = int(self.M)
        if self.design_names is None:
            self.design_names = [f"x{j}" for j in range(design.shape[1])]
        if len(self.design_names) != design.shape[1]:
            raise ValueError("design_names length differs from design columns")
        intercept = has_intercept(design)
        if self.constraint is Constraint.DERIVED_PSI and not intercept:
            raise ValueError("derived psi requires an intercept column in the design")
        if self.constraint is Constraint.FREE_PSI and intercept:
            raise ValueError("free psi requires a design without an intercept column")
        if self.abundance is Abundance.DCM and self.constraint is not Constraint.FREE_PSI:
            raise ValueError("the DCM abundance model is parameterized with free psi")
        if "psi" in self.fixed and self.constraint is Constraint.DERIVED_PSI:
            raise ValueError("psi cannot be fixed when it is derived from lambda")
        allowed = {"p", "psi", "alpha0", "alpha1", "a"}
        unknown = set(self.fixed) - allowed
        if unknown:
            raise ValueError(f"cannot fix parameters {sorted(unknown)}")

    @property
    def S(self) -> int:
        return self.design.shape[0]

    @property
    def P(self) -> int:
        return self.design.shape[1]

    def check_data(self, data: EncounterData) -> None:
        if data.S != self.S:
            raise ValueError(f"design has {self.S} rows but data has S={data.S}")
        if self.M <= data.n_individuals:
            raise ValueError(
                f"augmentation size M={self.M} must exceed n_T={data.n_individuals}"
            )
        if self.detection is Detection.MB and data.histories is None:
            raise ValueError("the Mb detection model requires full capture histories")


@dataclass
class ParamState:
    """Current parameter values of one chain.

    ``p`` is used under M0, ``alpha0``/``alpha1`` under Mb. ``eta`` and ``a``
    are only meaningful for the DCM family; the gamma rate is fixed at 1.
    """

    beta: np.ndarray
    psi: float
    p: float = 0.5
    alpha0: float = 0.0
    alpha1: float = 0.0
    eta: np.ndarray | None = None
    a: float = 1.0

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float).reshape(-1)
        if self.eta is not None:
            self.eta = np.asarray(self.eta, dtype=float).reshape(-1)

    def copy(self) -> ParamState:
        return replace(
            self,
            beta=self.beta.copy(),
            eta=None if self.eta is None else self.eta.copy(),
        )

    def p_naive(self, spec: ModelSpec) -> float:
        """Capture probability of an individual not yet caught."""
        if spec.detection is Detection.M0:
            return float(self.p)
        return float(expit(self.alpha0))


@dataclass(frozen=True)
class CellProbs:
    pi: np.ndarray

    def extended(self, psi: float) -> np.ndarray:
        """(S+1)-cell form: ``pi * psi`` followed by the excluded cell ``1 - psi``."""
        return np.append(self.pi * psi, 1.0 - psi)


def lambda_of(beta, design) -> np.ndarray:
    """Stratum intensities ``exp(design @ beta)``."""
    design = np.asarray(design, dtype=float)
    beta = np.asarray(beta, dtype=float).reshape(-1)
    if design.ndim != 2 or design.shape[1] != beta.size:
        raise ValueError(
            f"design with shape {design.shape} does not match {beta.size} coefficients"
        )
    if not np.all(np.isfinite(design)):
        raise ValueError("design matrix must be finite")
    eta = design @ beta if beta.size else np.zeros(design.shape[0])
    with np.errstate(over="ignore"):
        lam = np.exp(eta)
    bad = ~np.isfinite(lam) | (lam <= 0.0)
    if np.any(bad):
        s = int(np.flatnonzero(bad)[0])
        raise LinkOverflowError(f"link overflow in stratum {s}: linear predictor {eta[s]!r}")
    return lam


def cell_probs(lam, eta=None) -> CellProbs:
    """Multinomial cell probabilities ``lam / sum(lam)`` or ``eta lam / sum(eta lam)``."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= 0.0):
        raise ValueError("lambda must be strictly positive")
    w = lam
    if eta is not None:
        eta = np.asarray(eta, dtype=float)
        if eta.shape != lam.shape:
            raise ValueError("eta must have one entry per stratum")
        if np.any(eta <= 0.0):
            raise ValueError("eta must be strictly positive")
        w = eta * lam
    total = w.sum()
    if not (total > 0.0 and np.isfinite(total)):
        raise ValueError("cell weights have a zero or non-finite sum")
    return CellProbs(w / total)


def derived_psi(lam, M: int) -> float:
    """Inclusion probability implied by the intercept: ``sum(lam) / M``."""
    if M <= 0:
        raise ValueError("M must be positive")
    psi = float(np.sum(lam)) / M
    if not psi < 1.0:
        raise PsiBoundsError(
            f"augmentation size M too small for current lambda (psi={psi:.4g})"
        )
    return psi


def nb_pmf(g, a: float, lam: float):
    """Gamma-Poisson (negative binomial) pmf with shape ``a`` and gamma rate 1.

    ``Pr(G=g) = Gamma(a+g) / (Gamma(a) g!) * lam**g / (1+lam)**(g+a)``, mean ``a*lam``.
    """
    if not a > 0 or not lam > 0:
        raise ValueError("nb_pmf requires a > 0 and lam > 0")
    g = np.asarray(g)
    if np.any(g < 0) or np.any(g != np.floor(g)):
        raise ValueError("g must be a non-negative integer")
    logp = (
        gammaln(a + g) - gammaln(a) - gammaln(g + 1.0)
        + g * math.log(lam) - (g + a) * math.log1p(lam)
    )
    out = np.exp(logp)
    return float(out) if out.ndim == 0 else out


def _bernoulli_terms(y, trials, prob):
    # y*log(p) + (trials-y)*log(1-p) with 0*log(0) = 0
    out = 0.0
    if y:
        out += -math.inf if prob <= 0.0 else y * math.log(prob)
    if trials - y:
        out += -math.inf if prob >= 1.0 else (trials - y) * math.log1p(-prob)
    return out


def log_detection(history, params: ParamState, z: int, spec: ModelSpec, K: int | None = None) -> float:
    """Log probability of one individual's capture record given ``z``.

    ``history`` is either a binary vector of length K (probability of that exact
    history) or an integer capture frequency, in which case ``K`` is required and
    the binomial pmf is returned. Frequencies are not enough under Mb.
    """
    hist = np.asarray(history)
    if hist.ndim == 0:
        if spec.detection is Detection.MB:
            raise ValueError("the Mb model needs the full capture history")
        if K is None:
            raise ValueError("K is required for a frequency record")
        y = int(hist)
        if not 0 <= y <= K:
            raise ValueError(f"frequency {y} outside 0..{K}")
        if z == 0:
            return 0.0 if y == 0 else -math.inf
        return _bernoulli_terms(y, K, float(params.p)) + float(
            gammaln(K + 1) - gammaln(y + 1) - gammaln(K - y + 1)
        )

    hist = hist.astype(int).reshape(-1)
    y = int(hist.sum())
    if z == 0:
        return 0.0 if y == 0 else -math.inf
    K = hist.size
    if spec.detection is Detection.M0:
        return _bernoulli_terms(y, K, float(params.p))
    p0 = float(expit(params.alpha0))
    if y == 0:
        return _bernoulli_terms(0, K, p0)
    first = int(np.argmax(hist == 1)) + 1
    p1 = float(expit(params.alpha0 + params.alpha1))
    return _bernoulli_terms(1, first, p0) + _bernoulli_terms(y - 1, K - first, p1)


def _normal_logpdf(x, var):
    x = np.asarray(x, dtype=float)
    return -0.5 * (_LOG_2PI + math.log(var)) - 0.5 * x * x / var


def _gamma_logpdf(x, shape):
    x = np.asarray(x, dtype=float)
    return (shape - 1.0) * np.log(x) - x - gammaln(shape)


def log_prior_terms(params: ParamState, spec: ModelSpec) -> dict[str, float]:
    """Individual log prior terms; out-of-support values give ``-inf``."""
    terms: dict[str, float] = {}
    terms["beta"] = float(np.sum(_normal_logpdf(params.beta, BETA_PRIOR_VAR)))
    if spec.constraint is Constraint.FREE_PSI and "psi" not in spec.fixed:
        terms["psi"] = 0.0 if 0.0 < params.psi < 1.0 else -math.inf
    if spec.detection is Detection.M0:
        if "p" not in spec.fixed:
            terms["p"] = 0.0 if 0.0 <= params.p <= 1.0 else -math.inf
    else:
        alphas = [params.alpha0 if "alpha0" not in spec.fixed else None,
                  params.alpha1 if "alpha1" not in spec.fixed else None]
        terms["alpha"] = float(sum(_normal_logpdf(v, ALPHA_PRIOR_VAR) for v in alphas if v is not None))
    if spec.abundance is Abundance.DCM:
        a = params.a
        if "a" not in spec.fixed:
            terms["a"] = -math.log(A_PRIOR_UPPER) if 0.0 < a < A_PRIOR_UPPER else -math.inf
        eta = params.eta
        if eta is None or not a > 0 or np.any(eta <= 0):
            terms["eta"] = -math.inf
        else:
            terms["eta"] = float(np.sum(_gamma_logpdf(eta, a)))
    return terms


def log_abundance_prior(params: ParamState, spec: ModelSpec) -> float:
    """Sum of all log prior densities of the free parameters."""
    return float(sum(log_prior_terms(params, spec).values()))
