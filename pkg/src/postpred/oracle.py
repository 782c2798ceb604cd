"""Posterior predictive densities by direct numerical integration.

The posterior is discretised on Gauss-Legendre nodes over the parameter
axis, with weights proportional to prior density times likelihood
(computed in log space).  Predictive densities are then weighted sums of
sampling densities over those nodes.  Nothing here uses the conjugate
closed forms except to choose the integration window.

:func:`reconcile` compares the closed forms in :mod:`postpred.models`
against this oracle and also scores the formulas as printed in the
literature for the same examples, which are kept in ``PRINTED_VARIANTS``
and are never used for estimation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp

from .measure import DensityFn, as_array, gauss_legendre
from .models import DominatedModel, PredictiveDistribution

WINDOW_SDS = 12.0
WINDOW_TAIL = 1e-18
MIN_GRID = 64


@dataclass(frozen=True, eq=False)
class ThetaGrid:
    """Posterior weights on parameter nodes.

    ``log_evidence`` is ``log int p_theta(data) dQ(theta)``, the reciprocal of
    the posterior normalising constant.
    """

    nodes: np.ndarray
    log_prior: np.ndarray
    weights: np.ndarray
    log_evidence: float

    def mean(self) -> float:
        return float(np.dot(self.weights, self.nodes))


def _window(model: DominatedModel, state) -> tuple[float, float]:
    mean, sd = model.posterior_moments(state)
    t_lo, t_hi = model.posterior_tails(state, WINDOW_TAIL)
    lo = min(mean - WINDOW_SDS * sd, t_lo)
    hi = max(mean + WINDOW_SDS * sd, t_hi)
    d_lo, d_hi = model.param_domain
    return max(lo, d_lo), min(hi, d_hi)


def grid_posterior(model: DominatedModel, data=(), grid_size: int = 1024) -> ThetaGrid:
    """Posterior on a Gauss-Legendre grid, normalised in log space."""
    if grid_size < MIN_GRID:
        raise ValueError(f"grid_size must be >= {MIN_GRID}")
    if not model.continuous_parameter:
        raise TypeError(f"{model.family} has no continuous parameter to discretise")
    x = model.check_data(data)
    lo, hi = _window(model, model.update(x))
    nodes, gl_w = gauss_legendre(grid_size)
    half = 0.5 * (hi - lo)
    theta = 0.5 * (hi + lo) + half * nodes
    log_prior = model.log_prior(theta)
    log_lik = np.sum(model.log_density(theta[:, None], x[None, :]), axis=1) if len(x) else np.zeros_like(theta)
    log_w = log_prior + log_lik + np.log(gl_w * half)
    log_evidence = float(logsumexp(log_w))
    if not np.isfinite(log_evidence):
        raise FloatingPointError("posterior weights underflowed on the grid; the data are incompatible with the window")
    weights = np.exp(log_w - log_evidence)
    weights /= weights.sum()
    for a in (theta, log_prior, weights):
        a.setflags(write=False)
    return ThetaGrid(theta, log_prior, weights, log_evidence)


def predictive_density_quadrature(grid: ThetaGrid, model: DominatedModel, point) -> float:
    """``sum_j w_j prod_i p_{theta_j}(point_i)``; a scalar point gives the marginal density."""
    pts = np.atleast_1d(np.asarray(point, dtype=float))
    log_terms = np.sum(model.log_density(grid.nodes[:, None], pts[None, :]), axis=1)
    with np.errstate(divide="ignore"):
        return float(np.exp(logsumexp(log_terms + np.log(grid.weights))))


def oracle_density(grid: ThetaGrid, model: DominatedModel, min_weight: float = 1e-17) -> DensityFn:
    """The oracle marginal predictive as a density, windowed from its mixture components."""
    keep = grid.weights > min_weight
    comps = [model.density(t) for t in grid.nodes[keep]]
    w = grid.weights[keep]
    lo = min(c.window[0] for c in comps)
    hi = max(c.window[1] for c in comps)
    nodes = grid.nodes
    log_w = np.log(grid.weights, where=grid.weights > 0, out=np.full_like(grid.weights, -np.inf))

    def pdf(x):
        x = np.asarray(x, dtype=float)
        flat = x.ravel()
        out = np.empty(flat.shape)
        for start in range(0, len(flat), 2048):
            chunk = flat[start : start + 2048]
            with np.errstate(divide="ignore", invalid="ignore"):
                lt = model.log_density(nodes[:, None], chunk[None, :]) + log_w[:, None]
            out[start : start + 2048] = np.exp(logsumexp(lt, axis=0))
        return out.reshape(x.shape)

    if comps[0].is_discrete:
        return DensityFn(pdf, model.support, (int(lo), int(hi)), label="oracle predictive")
    centers = np.array([c.center for c in comps])
    scales = np.array([c.scale for c in comps])
    center = float(np.dot(w, centers) / w.sum())
    scale = float(math.sqrt(np.dot(w, scales**2 + (centers - center) ** 2) / w.sum()))
    return DensityFn(pdf, model.support, (lo, hi), center=center, scale=scale, label="oracle predictive")


# --- formulas as printed -------------------------------------------------------------

# Each variant: (family, kind, fn(model, data, point) -> value).  ``point`` is a
# scalar for marginal variants and a length-n vector for joint variants.


def _lfact(x):
    return gammaln(np.asarray(x, dtype=float) + 1.0)


def _expgamma_marginal(model, x, xp):
    n, s, lam = len(x), math.fsum(x), model.lam
    return n * lam * s ** (n + 1) / (lam + xp + s) ** (n + 2)


def _expgamma_joint(model, x, xp):
    n, s, lam = len(x), math.fsum(x), model.lam
    log_v = math.log(lam) + _lfact(2 * n) - _lfact(n) + (n + 1) * math.log(s) - (2 * n + 1) * math.log(lam + math.fsum(xp) + s)
    return float(np.exp(log_v))


def _normal_marginal(model, x, xp):
    n = len(x)
    m = (n * model.tau2 * np.mean(x) + model.sigma2 * model.mu) / (n * model.tau2 + model.sigma2)
    s2 = model.tau2 * model.sigma2 / (n * model.tau2 + model.sigma2)
    v = model.sigma2 + s2
    return math.exp(-0.5 * (xp - m) ** 2 / v) / math.sqrt(2 * math.pi * v)


def _poisson_marginal(model, k, kp):
    n, K, lam = len(k), math.fsum(k), model.lam
    log_v = _lfact(kp + K) - _lfact(kp) - _lfact(K) + (K + 1) * math.log(lam + n) - (kp + K + 1) * math.log(lam + n + 1)
    return float(np.exp(log_v))


def _poisson_joint(model, k, kp):
    # the printed denominator prod(k_i!) is read as prod(k'_i!)
    n, K, Kp, lam = len(k), math.fsum(k), math.fsum(kp), model.lam
    log_v = (
        _lfact(Kp + K)
        - float(np.sum(_lfact(kp)))
        - _lfact(K)
        + (K + 1) * math.log(lam + n)
        - (Kp + K + 1) * math.log(lam + 2 * n)
    )
    return float(np.exp(log_v))


def _bernoulli_printed(n, K, Kp):
    log_v = gammaln(n + 2) - gammaln(2 * n + 2) + _lfact(Kp + K) + _lfact(2 * n - Kp - K) - _lfact(K) - _lfact(n - K)
    return float(np.exp(log_v))


def _bernoulli_marginal(model, k, kp):
    return _bernoulli_printed(len(k), math.fsum(k), kp)


def _bernoulli_joint(model, k, kp):
    return _bernoulli_printed(len(k), math.fsum(k), math.fsum(kp))


PRINTED_VARIANTS = {
    "expgamma_marginal": ("ExpGamma", "marginal", _expgamma_marginal),
    "expgamma_joint": ("ExpGamma", "joint", _expgamma_joint),
    "normal_marginal": ("NormalNormal", "marginal", _normal_marginal),
    "poisson_marginal": ("PoissonGamma", "marginal", _poisson_marginal),
    "poisson_joint": ("PoissonGamma", "joint", _poisson_joint),
    "bernoulli_marginal": ("BernoulliUniform", "marginal", _bernoulli_marginal),
    "bernoulli_joint": ("BernoulliUniform", "joint", _bernoulli_joint),
}


def _printed_applies(model: DominatedModel) -> bool:
    if model.family == "BernoulliUniform":
        return (model.alpha0, model.beta0) == (1.0, 1.0)
    return True


# --- reconciliation ---------------------------------------------------------------


@dataclass
class VariantCheck:
    name: str
    kind: str
    max_abs_dev: float
    verdict: str


@dataclass
class ReconcileReport:
    family: str
    n: int
    hyper: dict
    data: list
    tol: float
    max_abs_dev: float
    marginal_dev: float
    joint_dev: float | None
    paper_formula_dev: float | None
    verdict: str
    variants: list[VariantCheck] = field(default_factory=list)

    def variant(self, name: str) -> VariantCheck:
        for v in self.variants:
            if v.name == name:
                return v
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "n": self.n,
            "hyper": self.hyper,
            "data": self.data,
            "tol": self.tol,
            "max_abs_dev": self.max_abs_dev,
            "marginal_dev": self.marginal_dev,
            "joint_dev": self.joint_dev,
            "paper_formula_dev": self.paper_formula_dev,
            "verdict": self.verdict,
            "variants": [vars(v) for v in self.variants],
        }


def evaluation_points(model: DominatedModel, pred: PredictiveDistribution) -> np.ndarray:
    """Fixed marginal evaluation grid for a family."""
    fam = model.family
    if fam == "ExpGamma":
        return np.array([0.0, 0.05, 0.1, 0.25, 0.5, 1.0, 2.0, 3.0, 5.0, 10.0, 25.0, 100.0])
    if fam == "NormalNormal":
        st = pred.posterior
        sd = math.sqrt(model.sigma2 + st.var)
        return st.mean + sd * np.linspace(-5.0, 5.0, 21)
    if fam == "PoissonGamma":
        return np.arange(0.0, 26.0)
    return np.arange(0.0, model.support.max_enumerated + 1.0)


def joint_points(model: DominatedModel, pred: PredictiveDistribution, n: int) -> list[np.ndarray]:
    fam = model.family
    if fam == "ExpGamma":
        axis = [0.1, 1.0, 4.0]
    elif fam == "NormalNormal":
        sd = math.sqrt(model.sigma2 + pred.posterior.var)
        axis = [pred.posterior.mean + c * sd for c in (-1.5, 0.0, 2.0)]
    elif fam == "PoissonGamma":
        axis = [0.0, 1.0, 3.0]
    else:
        axis = list(range(model.support.max_enumerated + 1))
    return [np.asarray(p, dtype=float) for p in itertools.product(axis, repeat=n)]


def reconcile(model: DominatedModel, data=(), tol: float = 1e-8, grid_size: int = 1024) -> ReconcileReport:
    """Score closed-form predictive densities (and printed variants) against the oracle."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    x = model.check_data(data)
    n = len(x)
    grid = grid_posterior(model, x, grid_size)
    pred = PredictiveDistribution(model, model.update(x))
    pts = evaluation_points(model, pred)
    oracle_marg = np.array([predictive_density_quadrature(grid, model, p) for p in pts])
    closed_marg = pred.pdf(pts)
    marginal_dev = float(np.max(np.abs(closed_marg - oracle_marg)))

    joint_dev = None
    jpts: list[np.ndarray] = []
    oracle_joint = np.empty(0)
    if 1 <= n <= 3:
        jpred = PredictiveDistribution(model, pred.posterior, arity=n)
        jpts = joint_points(model, pred, n)
        oracle_joint = np.array([predictive_density_quadrature(grid, model, p) for p in jpts])
        closed_joint = np.array([jpred.joint_pdf(p) for p in jpts])
        joint_dev = float(np.max(np.abs(closed_joint - oracle_joint)))

    max_dev = max(marginal_dev, joint_dev if joint_dev is not None else 0.0)
    variants: list[VariantCheck] = []
    if n >= 1 and _printed_applies(model):
        for name, (fam, kind, fn) in PRINTED_VARIANTS.items():
            if fam != model.family:
                continue
            if kind == "marginal":
                vals = np.array([fn(model, x, float(p)) for p in pts])
                dev = float(np.max(np.abs(vals - oracle_marg)))
            elif jpts:
                vals = np.array([fn(model, x, p) for p in jpts])
                dev = float(np.max(np.abs(vals - oracle_joint)))
            else:
                continue
            verdict = "Match" if dev < tol else "PaperFormulaMismatch"
            variants.append(VariantCheck(name, kind, dev, verdict))
    printed_dev = max((v.max_abs_dev for v in variants), default=None)
    return ReconcileReport(
        family=model.family,
        n=n,
        hyper=model.hyper(),
        data=as_array(x).tolist(),
        tol=tol,
        max_abs_dev=max_dev,
        marginal_dev=marginal_dev,
        joint_dev=joint_dev,
        paper_formula_dev=printed_dev,
        verdict="Match" if max_dev < tol else "PaperFormulaMismatch",
        variants=variants,
    )
