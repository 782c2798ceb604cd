"""Losses, Monte Carlo Bayes risk, dominance tables and consistency curves.

Replicate ``i`` of a run with seed ``s`` draws ``theta`` from the prior and
an ``n``-sample from ``P_theta`` out of the stream keyed by ``(s, i)``, so
every estimator in a table sees the same replicates, and results do not
depend on how replicates are spread over worker processes.
"""

from __future__ import annotations

import csv
import io
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .measure import DensityFn, Event, l1_distance, replicate_rng
from .models import DominatedModel, EstimatorUndefined

SUP_GRID_POINTS = 4096
MAX_FAILURE_FRACTION = 0.01

LOSS_NAMES = ("SquaredError", "SquaredTV", "L1", "L1Squared", "SupCDFSquared")
ESTIMATOR_KINDS = ("PosteriorPredictive", "PluginPosteriorMean", "PluginMLE", "PriorPredictive", "EmpiricalCDF")
DEFAULT_COMPETITORS = ("PluginPosteriorMean", "PluginMLE", "PriorPredictive", "EmpiricalCDF")


class RiskAbort(RuntimeError):
    """Too many replicates had an undefined estimate."""

    def __init__(self, message: str, failures: dict):
        super().__init__(message)
        self.failures = failures


# --- losses and estimators -------------------------------------------------------


@dataclass(frozen=True)
class LossKind:
    name: str
    event: Event | None = None

    def __post_init__(self):
        if self.name not in LOSS_NAMES:
            raise ValueError(f"unknown loss {self.name!r}; choose from {', '.join(LOSS_NAMES)}")
        if (self.name == "SquaredError") != (self.event is not None):
            raise ValueError("SquaredError needs an event, and only SquaredError takes one")

    @property
    def target(self) -> str:
        if self.name == "SquaredError":
            return "EventProbability"
        if self.name == "SupCDFSquared":
            return "CDF"
        return "Density"

    def __str__(self) -> str:
        if self.event is None:
            return self.name
        return f"SquaredError{self.event.describe()}"

    @classmethod
    def parse(cls, text: str) -> LossKind:
        """``SquaredTV``, ``L1``, ``L1Squared``, ``SupCDFSquared``, ``SquaredError{0,1}`` or ``SquaredError(0,2]``."""
        text = text.strip()
        m = re.fullmatch(r"SquaredError\s*\{([^}]*)\}", text)
        if m:
            atoms = [float(a) for a in m.group(1).split(",") if a.strip()]
            if not atoms:
                raise ValueError("SquaredError needs at least one atom")
            return cls("SquaredError", Event.of_atoms(*atoms))
        m = re.fullmatch(r"SquaredError\s*\(\s*([^,]+),([^\]]+)\]", text)
        if m:
            return cls("SquaredError", Event.of_interval(float(m.group(1)), float(m.group(2))))
        return cls(text)


SQUARED_TV = LossKind("SquaredTV")
L1 = LossKind("L1")
L1_SQUARED = LossKind("L1Squared")
SUP_CDF_SQUARED = LossKind("SupCDFSquared")


@dataclass(frozen=True)
class EstimatorSpec:
    kind: str
    target: str = "Density"

    def __post_init__(self):
        if self.kind not in ESTIMATOR_KINDS:
            raise ValueError(f"unknown estimator {self.kind!r}; choose from {', '.join(ESTIMATOR_KINDS)}")
        if self.target not in ("Density", "CDF", "EventProbability"):
            raise ValueError(f"unknown estimation target {self.target!r}")
        if self.kind == "EmpiricalCDF" and self.target != "CDF":
            raise ValueError("EmpiricalCDF estimates distribution functions only")

    @classmethod
    def for_loss(cls, kind: str, loss: LossKind) -> EstimatorSpec:
        return cls(kind, loss.target)


def applicable(kind: str, loss: LossKind) -> bool:
    return kind != "EmpiricalCDF" or loss.target == "CDF"


class EmpiricalCDF:
    """Right-continuous step function of an observed sample."""

    is_discrete = True

    def __init__(self, data):
        self.points = np.sort(np.asarray(data, dtype=float))
        if len(self.points) == 0:
            raise EstimatorUndefined("empirical distribution function of an empty sample")

    def cdf(self, t):
        return np.searchsorted(self.points, np.asarray(t, dtype=float), side="right") / len(self.points)

    def cdf_left(self, t):
        return np.searchsorted(self.points, np.asarray(t, dtype=float), side="left") / len(self.points)

    def jumps(self) -> np.ndarray:
        return np.unique(self.points)


def _quantile_grid(dist, count: int) -> np.ndarray:
    levels = (np.arange(count) + 0.5) / count
    return dist.ppf(np.concatenate([[1e-12], levels, [1.0 - 1e-12]]))


def sup_cdf_distance(f, g) -> float:
    """``sup_t |F(t) - G(t)|`` over a quantile-spaced grid plus every jump point.

    At jump points the left limits are compared as well, which makes the
    supremum exact whenever one of the two functions is a step function.
    """
    continuous = [d for d in (f, g) if isinstance(d, DensityFn) and not d.is_discrete and d.ppf_fn is not None]
    grids = [_quantile_grid(d, SUP_GRID_POINTS // len(continuous)) for d in continuous]
    jumps = [d.jumps() for d in (f, g)]
    t = np.concatenate(grids + jumps) if (grids or any(len(j) for j in jumps)) else np.empty(0)
    if len(t) == 0:
        for d in (f, g):
            if isinstance(d, DensityFn):
                t = np.linspace(d.window[0], d.window[1], SUP_GRID_POINTS)
                break
    gap = np.abs(f.cdf(t) - g.cdf(t))
    jump_pts = np.concatenate(jumps)
    if len(jump_pts):
        gap = np.concatenate([gap, np.abs(f.cdf_left(jump_pts) - g.cdf_left(jump_pts))])
    return float(np.max(gap))


def loss_eval(estimate, theta, model: DominatedModel, loss: LossKind, truth: DensityFn | None = None) -> float:
    """Loss of ``estimate`` when the sampling law is ``P_theta``.

    ``estimate`` is a probability (SquaredError), a density (SquaredTV, L1,
    L1Squared) or a distribution function (SupCDFSquared; a density with a
    distribution function also qualifies).
    """
    if truth is None:
        truth = model.density(theta)
    if loss.name == "SquaredError":
        if isinstance(estimate, DensityFn):
            estimate = loss.event.probability(estimate)
        if not isinstance(estimate, (float, int, np.floating)):
            raise TypeError("SquaredError needs a probability estimate")
        return (float(estimate) - loss.event.probability(truth)) ** 2
    if loss.name == "SupCDFSquared":
        if not hasattr(estimate, "cdf_left"):
            raise TypeError("SupCDFSquared needs a distribution-function estimate")
        return sup_cdf_distance(estimate, truth) ** 2
    if not isinstance(estimate, DensityFn):
        raise TypeError(f"{loss.name} needs a density estimate, got {type(estimate).__name__}")
    d = l1_distance(estimate, truth)
    if loss.name == "L1":
        return d
    if loss.name == "L1Squared":
        return d * d
    return (0.5 * d) ** 2


# --- replicates ------------------------------------------------------------------


def _estimate(model: DominatedModel, kind: str, data: np.ndarray, cache: dict):
    if kind == "PosteriorPredictive":
        return model.predictive_density_fn(model.update(data))
    if kind == "PluginPosteriorMean":
        return model.density(model.posterior_mean(model.update(data)))
    if kind == "PluginMLE":
        return model.density(model.mle(data))
    if kind == "PriorPredictive":
        if "prior" not in cache:
            cache["prior"] = model.predictive_density_fn(model.prior_state())
        return cache["prior"]
    if kind == "EmpiricalCDF":
        return EmpiricalCDF(data)
    raise ValueError(kind)


def replicate_losses(model, kinds: Sequence[str], losses: Sequence[LossKind], n: int, seed: int, index: int) -> np.ndarray:
    """Losses of every (estimator, loss) pair on replicate ``index``.

    Undefined estimates give NaN; inapplicable pairs give -inf.
    """
    rng = replicate_rng(seed, index)
    theta = model.sample_theta(rng)
    data = model.draw(theta, n, rng)
    truth = model.density(theta)
    out = np.full((len(kinds), len(losses)), np.nan)
    cache: dict = {}
    for e, kind in enumerate(kinds):
        try:
            est = _estimate(model, kind, data, cache)
        except EstimatorUndefined:
            for j, loss in enumerate(losses):
                if not applicable(kind, loss):
                    out[e, j] = -np.inf
            continue
        l1 = None
        for j, loss in enumerate(losses):
            if not applicable(kind, loss):
                out[e, j] = -np.inf
            elif loss.name in ("SquaredTV", "L1", "L1Squared"):
                if l1 is None:
                    l1 = l1_distance(est, truth)
                out[e, j] = {"SquaredTV": (0.5 * l1) ** 2, "L1": l1, "L1Squared": l1 * l1}[loss.name]
            else:
                out[e, j] = loss_eval(est, theta, model, loss, truth)
    return out


def _run_chunk(args) -> np.ndarray:
    model, kinds, losses, n, seed, start, stop = args
    return np.stack([replicate_losses(model, kinds, losses, n, seed, i) for i in range(start, stop)])


def run_replicates(model, kinds, losses, n: int, reps: int, seed: int, workers: int = 1) -> np.ndarray:
    """Array of shape ``(reps, len(kinds), len(losses))``."""
    if workers <= 1 or reps < 2 * workers:
        return _run_chunk((model, tuple(kinds), tuple(losses), n, seed, 0, reps))
    bounds = np.linspace(0, reps, 4 * workers + 1).astype(int)
    jobs = [(model, tuple(kinds), tuple(losses), n, seed, int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_run_chunk, jobs))
    return np.concatenate(parts)


# --- estimates -------------------------------------------------------------------


@dataclass(frozen=True)
class RiskEstimate:
    estimator: str
    loss: str
    n: int
    reps: int
    seed: int
    mean: float
    std_error: float
    failures: int = 0

    def as_row(self) -> dict:
        return asdict(self)


def summarise(values: np.ndarray, estimator: str, loss: LossKind, n: int, seed: int) -> RiskEstimate:
    ok = values[np.isfinite(values)]
    failures = int(np.sum(np.isnan(values)))
    if len(ok) < 2:
        raise RiskAbort(f"{estimator}/{loss}: fewer than two usable replicates", {estimator: failures})
    # fsum is correctly rounded, so the reduction is order-independent
    mean = math.fsum(ok) / len(ok)
    var = math.fsum((ok - mean) ** 2) / (len(ok) - 1)
    return RiskEstimate(estimator, str(loss), n, len(values), seed, mean, math.sqrt(var / len(ok)), failures)


def _check_failures(values: np.ndarray, kinds, losses) -> None:
    reps = values.shape[0]
    bad = {}
    for e, kind in enumerate(kinds):
        for j, loss in enumerate(losses):
            f = int(np.sum(np.isnan(values[:, e, j])))
            if f > MAX_FAILURE_FRACTION * reps:
                bad[f"{kind}/{loss}"] = f
    if bad:
        detail = ", ".join(f"{k}: {v}/{reps}" for k, v in bad.items())
        raise RiskAbort(f"estimator undefined on more than {MAX_FAILURE_FRACTION:.0%} of replicates ({detail})", bad)


def risk_table(model, kinds: Sequence[str], losses: Sequence[LossKind], n: int, reps: int, seed: int, workers: int = 1) -> list[RiskEstimate]:
    """Risk of every applicable (estimator, loss) pair on shared replicates."""
    if reps < 2:
        raise ValueError("reps must be >= 2")
    if n < 1:
        raise ValueError("n must be >= 1")
    for k in kinds:
        EstimatorSpec(k, "CDF" if k == "EmpiricalCDF" else "Density")
    values = run_replicates(model, kinds, losses, n, reps, seed, workers)
    _check_failures(values, kinds, losses)
    rows = []
    for j, loss in enumerate(losses):
        for e, kind in enumerate(kinds):
            if applicable(kind, loss):
                rows.append(summarise(values[:, e, j], kind, loss, n, seed))
    return rows


def bayes_risk_mc(model, est, loss: LossKind, n: int, reps: int, seed: int, workers: int = 1) -> RiskEstimate:
    """Monte Carlo Bayes risk of one estimator: mean loss over replicates, with its standard error."""
    kind = est.kind if isinstance(est, EstimatorSpec) else str(est)
    if isinstance(est, EstimatorSpec) and est.target != loss.target:
        raise ValueError(f"estimator target {est.target} does not match loss {loss} ({loss.target})")
    if not applicable(kind, loss):
        raise ValueError(f"{kind} cannot be scored under {loss}")
    return risk_table(model, [kind], [loss], n, reps, seed, workers)[0]


@dataclass
class DominanceReport:
    loss: str
    n: int
    rows: list[RiskEstimate]
    dominant: bool
    margins: dict[str, float]

    def reference(self) -> RiskEstimate:
        return next(r for r in self.rows if r.estimator == "PosteriorPredictive")


def dominance_from_rows(rows: Iterable[RiskEstimate], loss: str, n: int, z: float = 2.0) -> DominanceReport:
    rows = sorted(rows, key=lambda r: (r.mean, r.estimator))
    ref = next(r for r in rows if r.estimator == "PosteriorPredictive")
    margins = {}
    for r in rows:
        if r is ref:
            continue
        # positive margin means the posterior predictive is within the allowance
        margins[r.estimator] = r.mean + z * math.hypot(r.std_error, ref.std_error) - ref.mean
    return DominanceReport(loss, n, rows, all(m >= 0 for m in margins.values()), margins)


def dominance_report(model, estimators: Sequence[str], loss: LossKind, n: int, reps: int, seed: int, workers: int = 1) -> DominanceReport:
    """Rank estimators by Monte Carlo risk and test the posterior predictive against each.

    The flag holds when its mean risk is at most every competitor's mean
    plus two combined standard errors.
    """
    kinds = [k for k in estimators if applicable(k, loss)]
    if "PosteriorPredictive" not in kinds:
        raise ValueError("the estimator list must include PosteriorPredictive")
    rows = risk_table(model, kinds, [loss], n, reps, seed, workers)
    return dominance_from_rows(rows, str(loss), n)


def consistency_curve(model, est, loss: LossKind, n_grid: Sequence[int], reps: int, seed: int, workers: int = 1) -> list[tuple[int, RiskEstimate]]:
    """Risk at each sample size, every size using the same seed."""
    n_grid = [int(v) for v in n_grid]
    if any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise ValueError("n_grid must be strictly increasing")
    return [(n, bayes_risk_mc(model, est, loss, n, reps, seed, workers)) for n in n_grid]


def trajectory_density_error(model, theta, point, n_grid: Sequence[int], seed: int) -> list[tuple[int, float]]:
    """``|predictive density(point) - p_theta(point)|`` along one growing sample.

    A finite-n look at pointwise consistency; diagnostic only.
    """
    n_max = max(n_grid)
    data = model.draw(model.check_theta(theta), n_max, replicate_rng(seed))
    true_value = float(model.density(theta)(point))
    out = []
    for n in n_grid:
        est = model.predictive_density_fn(model.update(data[:n]))
        out.append((int(n), abs(float(est(point)) - true_value)))
    return out


# --- serialisation -----------------------------------------------------------------

CSV_COLUMNS = ("estimator", "loss", "n", "reps", "seed", "mean", "std_error", "failures")


def to_csv(rows: Iterable[RiskEstimate], header: str | None = None) -> str:
    buf = io.StringIO()
    if header:
        buf.write(f"# {header}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([r.estimator, r.loss, r.n, r.reps, r.seed, repr(r.mean), repr(r.std_error), r.failures])
    return buf.getvalue()


def provenance(seed: int, reps: int) -> str:
    return f"postpred {__version__} seed={seed} reps={reps}"
