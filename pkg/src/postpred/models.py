"""Conjugate Bayesian experiments and their posterior predictive distributions.

Four families with closed-form posteriors:

=================  ==================  ====================  =======================
family             sampling law        prior                 marginal predictive
=================  ==================  ====================  =======================
ExpGamma           Exp(rate theta)     Exp(rate lam)         Lomax(n+1, lam + sum x)
NormalNormal       N(theta, sigma2)    N(mu, tau2)           N(m_n, sigma2 + s_n^2)
PoissonGamma       Poisson(theta)      Exp(rate lam)         NegBin(sum k + 1, lam + n)
BernoulliUniform   Bernoulli(theta)    Uniform(0, 1)         Bernoulli((sum k + 1)/(n + 2))
=================  ==================  ====================  =======================

plus :class:`FiniteExperiment`, a finite parameter set with an explicit
prior, used to run finite kernel experiments through the risk harness.

Predictive densities are the integrals of the sampling density against the
posterior.  Where the closed forms printed for these examples in the
literature disagree with those integrals, the integrals are used here; the
printed variants live only in :mod:`postpred.oracle` for comparison.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass
from functools import cached_property
from typing import ClassVar, Sequence

import numpy as np
from scipy.special import betaincinv, betaln, gammainccinv, gammaincinv, gammaln, ndtri

from . import densities
from .measure import BINARY, NATURALS, POSITIVE_REALS, REAL_LINE, DensityFn, SampleVec, SupportSpec, as_array


class EstimatorUndefined(ValueError):
    """A plug-in estimate does not exist for the observed data."""


class DataError(ValueError):
    pass


# --- posterior states ---------------------------------------------------------


@dataclass(frozen=True)
class PosteriorState:
    n: int

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class GammaPosterior(PosteriorState):
    shape: float
    rate: float

    def describe(self) -> str:
        return f"Gamma(shape={self.shape:.6g}, rate={self.rate:.6g})"


@dataclass(frozen=True)
class NormalPosterior(PosteriorState):
    mean: float
    var: float

    def describe(self) -> str:
        return f"N(mean={self.mean:.6g}, var={self.var:.6g})"


@dataclass(frozen=True)
class BetaPosterior(PosteriorState):
    alpha: float
    beta: float

    def describe(self) -> str:
        return f"Beta({self.alpha:.6g}, {self.beta:.6g})"


@dataclass(frozen=True)
class WeightsPosterior(PosteriorState):
    weights: tuple[float, ...]

    def describe(self) -> str:
        return "Categorical(" + ", ".join(f"{w:.6g}" for w in self.weights) + ")"


# --- models ---------------------------------------------------------------------


class DominatedModel(ABC):
    """A parametric family ``P_theta`` with a prior, dominated by ``support``."""

    family: ClassVar[str]
    support: ClassVar[SupportSpec]
    param_domain: ClassVar[tuple[float, float]] = (-math.inf, math.inf)
    continuous_parameter: ClassVar[bool] = True

    # -- parameters and data
    def hyper(self) -> dict:
        return {k: v for k, v in asdict(self).items()}

    def check_theta(self, theta, allow_boundary: bool = False) -> float:
        theta = float(theta)
        lo, hi = self.param_domain
        inside = (lo <= theta <= hi) if allow_boundary else (lo < theta < hi)
        if not (inside and math.isfinite(theta)):
            raise ValueError(f"theta={theta} outside the {self.family} parameter domain {self.param_domain}")
        return theta

    def check_data(self, data) -> np.ndarray:
        x = as_array(data)
        if x.ndim != 1:
            raise DataError("data must be a flat sequence of observations")
        if not np.all(self.support.contains(x)):
            bad = x[~self.support.contains(x)]
            raise DataError(f"{self.family} data outside the support: {bad[:5].tolist()}")
        return x

    @abstractmethod
    def sample_theta(self, rng: np.random.Generator) -> float: ...

    @abstractmethod
    def draw(self, theta, n: int, rng: np.random.Generator) -> np.ndarray: ...

    @abstractmethod
    def log_prior(self, theta: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def log_density(self, theta: np.ndarray, x: np.ndarray) -> np.ndarray:
        """``log p_theta(x)``, broadcasting ``theta`` against ``x``."""

    # -- conjugate updating
    @abstractmethod
    def update(self, data) -> PosteriorState: ...

    def prior_state(self) -> PosteriorState:
        return self.update(np.empty(0))

    @abstractmethod
    def predictive_density_fn(self, state: PosteriorState) -> DensityFn: ...

    @abstractmethod
    def predictive_joint_logpdf(self, state: PosteriorState, points: np.ndarray) -> float: ...

    def predictive_cdf(self, state: PosteriorState, t) -> np.ndarray:
        return self.predictive_density_fn(state).cdf(t)

    # -- plug-ins
    @abstractmethod
    def density(self, theta) -> DensityFn:
        """The sampling density ``p_theta``."""

    @abstractmethod
    def posterior_mean(self, state: PosteriorState) -> float: ...

    @abstractmethod
    def mle(self, data) -> float: ...

    # -- windowing for numerical integration over theta
    @abstractmethod
    def posterior_moments(self, state: PosteriorState) -> tuple[float, float]: ...

    def posterior_tails(self, state: PosteriorState, tail: float) -> tuple[float, float]:
        mean, sd = self.posterior_moments(state)
        z = -float(ndtri(tail))
        return mean - z * sd, mean + z * sd

    def to_config(self) -> dict:
        return {"family": self.family, "hyper": self.hyper()}


@dataclass(frozen=True)
class ExpGamma(DominatedModel):
    """Exponential sampling with rate ``theta`` and an ``Exp(lam)`` prior on the rate."""

    lam: float = 1.0

    family: ClassVar[str] = "ExpGamma"
    support: ClassVar[SupportSpec] = POSITIVE_REALS
    param_domain: ClassVar[tuple[float, float]] = (0.0, math.inf)
    prior_shape: ClassVar[float] = 1.0

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"ExpGamma needs lam > 0, got {self.lam}")

    def sample_theta(self, rng):
        return float(rng.gamma(self.prior_shape, 1.0 / self.lam))

    def draw(self, theta, n, rng):
        return rng.exponential(1.0 / theta, size=n)

    def log_prior(self, theta):
        return densities.log_gamma_pdf(theta, self.prior_shape, self.lam)

    def log_density(self, theta, x):
        return np.log(theta) - theta * x

    def update(self, data):
        x = self.check_data(data)
        return GammaPosterior(n=len(x), shape=self.prior_shape + len(x), rate=self.lam + math.fsum(x))

    def predictive_density_fn(self, state):
        return densities.lomax(state.shape, state.rate)

    def predictive_joint_logpdf(self, state, points):
        a, b, m = state.shape, state.rate, len(points)
        return a * math.log(b) + math.lgamma(a + m) - math.lgamma(a) - (a + m) * math.log(b + math.fsum(points))

    def density(self, theta):
        return densities.exponential(self.check_theta(theta))

    def posterior_mean(self, state):
        return state.shape / state.rate

    def mle(self, data):
        x = self.check_data(data)
        total = math.fsum(x)
        if len(x) == 0 or total <= 0:
            raise EstimatorUndefined(f"rate MLE n/sum(x) undefined: n={len(x)}, sum(x)={total}")
        return len(x) / total

    def posterior_moments(self, state):
        return state.shape / state.rate, math.sqrt(state.shape) / state.rate

    def posterior_tails(self, state, tail):
        return (
            float(gammaincinv(state.shape, tail)) / state.rate,
            float(gammainccinv(state.shape, tail)) / state.rate,
        )


@dataclass(frozen=True)
class NormalNormal(DominatedModel):
    """``N(theta, sigma2)`` sampling with known variance and a ``N(mu, tau2)`` prior."""

    mu: float = 0.0
    tau2: float = 1.0
    sigma2: float = 1.0

    family: ClassVar[str] = "NormalNormal"
    support: ClassVar[SupportSpec] = REAL_LINE

    def __post_init__(self):
        if not (self.tau2 > 0 and self.sigma2 > 0):
            raise ValueError(f"NormalNormal needs tau2, sigma2 > 0, got ({self.tau2}, {self.sigma2})")
        if not math.isfinite(self.mu):
            raise ValueError("mu must be finite")

    def sample_theta(self, rng):
        return float(rng.normal(self.mu, math.sqrt(self.tau2)))

    def draw(self, theta, n, rng):
        return rng.normal(theta, math.sqrt(self.sigma2), size=n)

    def log_prior(self, theta):
        return densities.log_normal_pdf(theta, self.mu, self.tau2)

    def log_density(self, theta, x):
        return densities.log_normal_pdf(x, theta, self.sigma2)

    def update(self, data):
        x = self.check_data(data)
        n = len(x)
        denom = n * self.tau2 + self.sigma2
        mean = (self.tau2 * math.fsum(x) + self.sigma2 * self.mu) / denom
        return NormalPosterior(n=n, mean=mean, var=self.tau2 * self.sigma2 / denom)

    def predictive_density_fn(self, state):
        return densities.normal(state.mean, self.sigma2 + state.var)

    def predictive_joint_logpdf(self, state, points):
        # covariance sigma2 * I + s2 * 11^T
        m = len(points)
        s2, v = state.var, self.sigma2
        r = np.asarray(points, dtype=float) - state.mean
        c = v + m * s2
        quad = (math.fsum(r * r) - s2 * math.fsum(r) ** 2 / c) / v
        logdet = (m - 1) * math.log(v) + math.log(c)
        return -0.5 * (m * math.log(2.0 * math.pi) + logdet + quad)

    def density(self, theta):
        return densities.normal(self.check_theta(theta), self.sigma2)

    def posterior_mean(self, state):
        return state.mean

    def mle(self, data):
        x = self.check_data(data)
        if len(x) == 0:
            raise EstimatorUndefined("mean MLE undefined for an empty sample")
        return math.fsum(x) / len(x)

    def posterior_moments(self, state):
        return state.mean, math.sqrt(state.var)


@dataclass(frozen=True)
class PoissonGamma(DominatedModel):
    """Poisson sampling with an ``Exp(lam)`` prior on the mean."""

    lam: float = 1.0

    family: ClassVar[str] = "PoissonGamma"
    support: ClassVar[SupportSpec] = NATURALS
    param_domain: ClassVar[tuple[float, float]] = (0.0, math.inf)
    prior_shape: ClassVar[float] = 1.0

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"PoissonGamma needs lam > 0, got {self.lam}")

    def sample_theta(self, rng):
        return float(rng.gamma(self.prior_shape, 1.0 / self.lam))

    def draw(self, theta, n, rng):
        return rng.poisson(theta, size=n).astype(float)

    def log_prior(self, theta):
        return densities.log_gamma_pdf(theta, self.prior_shape, self.lam)

    def log_density(self, theta, x):
        return x * np.log(theta) - theta - gammaln(x + 1.0)

    def update(self, data):
        k = self.check_data(data)
        return GammaPosterior(n=len(k), shape=self.prior_shape + math.fsum(k), rate=self.lam + len(k))

    def predictive_density_fn(self, state):
        return densities.negative_binomial(state.shape, state.rate)

    def predictive_cdf(self, state, t):
        # summed probabilities, no closed form used
        t = np.asarray(t, dtype=float)
        dens = self.predictive_density_fn(state)
        top = int(max(dens.window[1], np.max(np.floor(t), initial=0)))
        cum = np.cumsum(dens(np.arange(top + 1, dtype=float)))
        k = np.floor(t)
        return np.where(k >= 0, cum[np.clip(k, 0, top).astype(int)], 0.0)

    def predictive_joint_logpdf(self, state, points):
        a, b, m = state.shape, state.rate, len(points)
        total = math.fsum(points)
        return (
            a * math.log(b)
            - math.lgamma(a)
            + math.lgamma(a + total)
            - float(np.sum(gammaln(np.asarray(points) + 1.0)))
            - (a + total) * math.log(b + m)
        )

    def density(self, theta):
        return densities.poisson(self.check_theta(theta, allow_boundary=True))

    def posterior_mean(self, state):
        return state.shape / state.rate

    def mle(self, data):
        k = self.check_data(data)
        if len(k) == 0:
            raise EstimatorUndefined("Poisson mean MLE undefined for an empty sample")
        # sum(k) = 0 gives the point mass at 0, a legitimate limit of the family
        return math.fsum(k) / len(k)

    def posterior_moments(self, state):
        return state.shape / state.rate, math.sqrt(state.shape) / state.rate

    def posterior_tails(self, state, tail):
        return (
            float(gammaincinv(state.shape, tail)) / state.rate,
            float(gammainccinv(state.shape, tail)) / state.rate,
        )


@dataclass(frozen=True)
class BernoulliUniform(DominatedModel):
    """Bernoulli sampling with a ``Beta(alpha0, beta0)`` prior; the uniform prior is ``(1, 1)``."""

    alpha0: float = 1.0
    beta0: float = 1.0

    family: ClassVar[str] = "BernoulliUniform"
    support: ClassVar[SupportSpec] = BINARY
    param_domain: ClassVar[tuple[float, float]] = (0.0, 1.0)

    def __post_init__(self):
        if not (self.alpha0 > 0 and self.beta0 > 0):
            raise ValueError("Beta prior parameters must be positive")

    def hyper(self) -> dict:
        if (self.alpha0, self.beta0) == (1.0, 1.0):
            return {}
        return {"alpha0": self.alpha0, "beta0": self.beta0}

    def sample_theta(self, rng):
        if (self.alpha0, self.beta0) == (1.0, 1.0):
            return float(rng.random())
        return float(rng.beta(self.alpha0, self.beta0))

    def draw(self, theta, n, rng):
        return (rng.random(n) < theta).astype(float)

    def log_prior(self, theta):
        return densities.log_beta_pdf(theta, self.alpha0, self.beta0)

    def log_density(self, theta, x):
        return x * np.log(theta) + (1.0 - x) * np.log1p(-theta)

    def update(self, data):
        k = self.check_data(data)
        s = math.fsum(k)
        return BetaPosterior(n=len(k), alpha=self.alpha0 + s, beta=self.beta0 + len(k) - s)

    def predictive_density_fn(self, state):
        return densities.bernoulli(state.alpha / (state.alpha + state.beta))

    def predictive_joint_logpdf(self, state, points):
        s, m = math.fsum(points), len(points)
        return float(betaln(state.alpha + s, state.beta + m - s) - betaln(state.alpha, state.beta))

    def density(self, theta):
        return densities.bernoulli(self.check_theta(theta, allow_boundary=True))

    def posterior_mean(self, state):
        return state.alpha / (state.alpha + state.beta)

    def mle(self, data):
        k = self.check_data(data)
        if len(k) == 0:
            raise EstimatorUndefined("Bernoulli MLE undefined for an empty sample")
        # all-zero or all-one samples give the degenerate Bernoulli(0) or Bernoulli(1)
        return math.fsum(k) / len(k)

    def posterior_moments(self, state):
        a, b = state.alpha, state.beta
        return a / (a + b), math.sqrt(a * b / ((a + b) ** 2 * (a + b + 1.0)))

    def posterior_tails(self, state, tail):
        return (
            float(betaincinv(state.alpha, state.beta, tail)),
            1.0 - float(betaincinv(state.beta, state.alpha, tail)),
        )


@dataclass(frozen=True)
class FiniteExperiment(DominatedModel):
    """Finitely many parameters ``0..k-1``, each a law on ``{0, ..., m-1}``.

    ``rows[t]`` is ``P_t`` and ``prior[t]`` its prior mass.
    """

    rows: tuple[tuple[float, ...], ...] = ((1.0,),)
    prior: tuple[float, ...] = (1.0,)

    family: ClassVar[str] = "Finite"
    continuous_parameter: ClassVar[bool] = False

    def __post_init__(self):
        rows = tuple(tuple(float(v) for v in r) for r in self.rows)
        prior = tuple(float(v) for v in self.prior)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "prior", prior)
        m = np.asarray(rows)
        if m.ndim != 2 or m.shape[0] != len(prior):
            raise ValueError("Finite experiment needs one row per prior atom")
        if np.any(m < 0) or np.any(np.abs(m.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError("Finite experiment rows must be probability vectors")
        if any(p < 0 for p in prior) or abs(sum(prior) - 1.0) > 1e-12:
            raise ValueError("Finite experiment prior must be a probability vector")

    @classmethod
    def from_kernel(cls, kernel, prior) -> FiniteExperiment:
        return cls(tuple(map(tuple, np.asarray(kernel.rows))), tuple(np.asarray(prior.weights)))

    @cached_property
    def matrix(self) -> np.ndarray:
        return np.asarray(self.rows)

    @property
    def support(self) -> SupportSpec:
        return SupportSpec.counting(max(len(self.rows[0]) - 1, 1))

    @property
    def param_domain(self):
        return (0, len(self.prior) - 1)

    def hyper(self) -> dict:
        return {"rows": [list(r) for r in self.rows], "prior": list(self.prior)}

    def check_theta(self, theta, allow_boundary: bool = False) -> int:
        t = int(theta)
        if t != theta or not 0 <= t < len(self.prior):
            raise ValueError(f"theta={theta} is not a parameter index of this experiment")
        return t

    def sample_theta(self, rng):
        return int(np.searchsorted(np.cumsum(self.prior), rng.random(), side="right").clip(0, len(self.prior) - 1))

    def draw(self, theta, n, rng):
        cum = np.cumsum(self.matrix[int(theta)])
        return np.searchsorted(cum, rng.random(n), side="right").clip(0, self.matrix.shape[1] - 1).astype(float)

    def log_prior(self, theta):
        return np.log(np.asarray(self.prior)[np.asarray(theta, dtype=int)])

    def log_density(self, theta, x):
        return np.log(self.matrix[np.asarray(theta, dtype=int), np.asarray(x, dtype=int)])

    def update(self, data):
        x = self.check_data(data).astype(int)
        w = np.asarray(self.prior) * np.prod(self.matrix[:, x], axis=1)
        total = w.sum()
        if total <= 0:
            raise DataError("observed data has zero prior predictive mass; the posterior is undefined")
        return WeightsPosterior(n=len(x), weights=tuple(w / total))

    def predictive_density_fn(self, state):
        return densities.categorical(np.asarray(state.weights) @ self.matrix, self.support)

    def predictive_joint_logpdf(self, state, points):
        x = np.asarray(points, dtype=int)
        return float(np.log(np.asarray(state.weights) @ np.prod(self.matrix[:, x], axis=1)))

    def density(self, theta):
        return densities.categorical(self.matrix[self.check_theta(theta)], self.support)

    def posterior_mean(self, state):
        raise EstimatorUndefined("posterior mean of an unordered finite parameter is undefined")

    def mle(self, data):
        x = self.check_data(data).astype(int)
        if len(x) == 0:
            raise EstimatorUndefined("MLE undefined for an empty sample")
        return int(np.argmax(np.sum(np.log(self.matrix[:, x] + 0.0), axis=1)))

    def posterior_moments(self, state):
        raise TypeError("finite experiments have no continuous parameter")


FAMILIES: dict[str, type[DominatedModel]] = {
    cls.family.lower(): cls for cls in (ExpGamma, NormalNormal, PoissonGamma, BernoulliUniform, FiniteExperiment)
}

CONJUGATE_FAMILIES = ("ExpGamma", "NormalNormal", "PoissonGamma", "BernoulliUniform")


def make_model(family: str, **hyper) -> DominatedModel:
    try:
        cls = FAMILIES[family.lower()]
    except KeyError:
        raise ValueError(f"unknown family {family!r}; choose from {', '.join(c.family for c in FAMILIES.values())}") from None
    allowed = {f for f in cls.__dataclass_fields__}
    unknown = set(hyper) - allowed
    if unknown:
        raise ValueError(f"unknown hyperparameter(s) {sorted(unknown)} for {cls.family}")
    return cls(**hyper)


# --- predictive distributions ----------------------------------------------------


@dataclass(frozen=True)
class PredictiveDistribution:
    """Posterior predictive law of the next ``arity`` observations.

    ``arity = 1`` is the marginal predictive of a single new observation.
    """

    model: DominatedModel
    posterior: PosteriorState
    arity: int = 1

    def __post_init__(self):
        if self.arity < 1:
            raise ValueError("arity must be >= 1")

    @cached_property
    def marginal(self) -> DensityFn:
        return self.model.predictive_density_fn(self.posterior)

    def pdf(self, x) -> np.ndarray:
        return self.marginal(x)

    def cdf(self, t) -> np.ndarray:
        return self.model.predictive_cdf(self.posterior, t)

    def joint_pdf(self, points) -> float:
        pts = self.model.check_data(points)
        if len(pts) != self.arity:
            raise ValueError(f"joint predictive of arity {self.arity} evaluated at {len(pts)} points")
        return math.exp(self.model.predictive_joint_logpdf(self.posterior, pts))


def posterior_update(model: DominatedModel, data) -> PosteriorState:
    """Exact conjugate posterior after observing ``data`` (empty data gives the prior)."""
    return model.update(data)


def predictive(model: DominatedModel, data=(), arity: int = 1) -> PredictiveDistribution:
    return PredictiveDistribution(model, model.update(data), arity)


def _point_in_support(model: DominatedModel, x) -> float:
    x = float(x)
    if not model.support.contains(x):
        raise DataError(f"{x} is outside the {model.family} support")
    return x


def predictive_marginal_density(pred: PredictiveDistribution, point) -> float:
    if pred.arity != 1:
        raise ValueError("marginal density requested from a joint predictive; use arity=1")
    return float(pred.pdf(_point_in_support(pred.model, point)))


def predictive_joint_density(pred: PredictiveDistribution, points) -> float:
    return pred.joint_pdf(points)


def predictive_cdf(pred: PredictiveDistribution, t) -> float:
    if pred.arity != 1:
        raise ValueError("distribution function is defined for the marginal predictive")
    return float(pred.cdf(float(t)))


PLUGIN_KINDS = ("PosteriorMean", "MLE", "PriorPredictive")


def plugin_density(model: DominatedModel, data, kind: str) -> DensityFn:
    """Competitor density estimates: ``p_theta_hat`` or the prior predictive."""
    if kind == "PosteriorMean":
        return model.density(model.posterior_mean(model.update(data)))
    if kind == "MLE":
        return model.density(model.mle(data))
    if kind == "PriorPredictive":
        return model.predictive_density_fn(model.prior_state())
    raise ValueError(f"unknown plug-in kind {kind!r}; choose from {PLUGIN_KINDS}")


def as_sample(points: Sequence[float]) -> SampleVec:
    return SampleVec(tuple(points))
