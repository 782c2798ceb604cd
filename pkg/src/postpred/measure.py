"""Dominating measures, densities, and the L1 / total-variation distances.

Densities are stored with respect to Lebesgue measure on an interval or
counting measure on ``{0, 1, ..., max_enumerated}``.  Every continuous
density carries an effective window outside which its mass is below
``TAIL_MASS``; integrals are taken over that window with composite
Gauss-Legendre quadrature and panel doubling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import roots_legendre

TAIL_MASS = 1e-14
COUNTING_TAIL_TOL = 1e-12
QUAD_TOL = 1e-10
GL_ORDER = 16
MAX_EXHAUSTIVE_ATOMS = 20

ArrayFn = Callable[[np.ndarray], np.ndarray]


class SupportMismatchError(ValueError):
    pass


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class SupportSpec:
    """A dominating measure restricted to the support of a family.

    ``kind`` is ``"interval"`` (Lebesgue measure on ``(lo, hi)``) or
    ``"counting"`` (counting measure on ``{0, ..., max_enumerated}``).
    """

    kind: str
    lo: float = -math.inf
    hi: float = math.inf
    max_enumerated: int = 0
    quadrature_hint: int = 16

    def __post_init__(self):
        if self.kind == "interval":
            if not self.lo < self.hi:
                raise ValueError(f"interval support needs lo < hi, got ({self.lo}, {self.hi})")
        elif self.kind == "counting":
            if self.max_enumerated < 1:
                raise ValueError("counting support needs max_enumerated >= 1")
        else:
            raise ValueError(f"unknown support kind {self.kind!r}")
        if self.quadrature_hint < 1:
            raise ValueError("quadrature_hint must be positive")

    @classmethod
    def interval(cls, lo: float = -math.inf, hi: float = math.inf, quadrature_hint: int = 16) -> SupportSpec:
        return cls("interval", lo=float(lo), hi=float(hi), quadrature_hint=quadrature_hint)

    @classmethod
    def counting(cls, max_enumerated: int) -> SupportSpec:
        return cls("counting", lo=0.0, hi=float(max_enumerated), max_enumerated=int(max_enumerated))

    @property
    def is_discrete(self) -> bool:
        return self.kind == "counting"

    def compatible(self, other: SupportSpec) -> bool:
        """Same dominating measure: both Lebesgue or both counting."""
        return self.kind == other.kind

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.is_discrete:
            return (x >= 0) & (x <= self.max_enumerated) & (x == np.floor(x))
        # endpoints are null sets; closed bounds keep x = 0 legal for Exp data
        return (x >= self.lo) & (x <= self.hi) & np.isfinite(x)


REAL_LINE = SupportSpec.interval()
POSITIVE_REALS = SupportSpec.interval(0.0, math.inf)
NATURALS = SupportSpec.counting(10**6)
BINARY = SupportSpec.counting(1)


@dataclass(frozen=True, eq=False)
class DensityFn:
    """A probability density with respect to the measure in ``support``.

    ``window`` is the effective support used for integration: for intervals
    the mass outside it is below ``TAIL_MASS``, for counting supports it is
    the enumerated atom range ``[lo, K]`` whose discarded tail is checked at
    use.  ``center`` and ``scale`` position the quadrature panels.
    """

    pdf: ArrayFn
    support: SupportSpec
    window: tuple[float, float]
    cdf_fn: ArrayFn | None = None
    ppf_fn: ArrayFn | None = None
    center: float | None = None
    scale: float | None = None
    label: str = ""

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        inside = self.support.contains(x)
        out = np.zeros(x.shape)
        if np.any(inside):
            out[inside] = self.pdf(x[inside])
        return out

    @property
    def is_discrete(self) -> bool:
        return self.support.is_discrete

    def atoms(self) -> np.ndarray:
        if not self.is_discrete:
            raise TypeError("atoms() is defined for counting supports only")
        return np.arange(int(self.window[0]), int(self.window[1]) + 1, dtype=float)

    def cdf(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.cdf_fn is not None:
            return np.clip(self.cdf_fn(t), 0.0, 1.0)
        if not self.is_discrete:
            raise TypeError(f"density {self.label or '<anonymous>'} has no distribution function")
        atoms = self.atoms()
        cum = np.cumsum(self(atoms))
        idx = np.searchsorted(atoms, t, side="right") - 1
        return np.where(idx >= 0, cum[np.clip(idx, 0, len(cum) - 1)], 0.0)

    def cdf_left(self, t) -> np.ndarray:
        """P(X < t)."""
        t = np.asarray(t, dtype=float)
        if not self.is_discrete:
            return self.cdf(t)
        return self.cdf(np.ceil(t) - 1.0)

    def jumps(self) -> np.ndarray:
        if self.is_discrete:
            return self.atoms()
        return np.empty(0)

    def ppf(self, u) -> np.ndarray:
        if self.ppf_fn is None:
            raise TypeError(f"density {self.label or '<anonymous>'} has no quantile function")
        return self.ppf_fn(np.asarray(u, dtype=float))

    def prob(self, event) -> float:
        """Probability of an :class:`Event`."""
        return event.probability(self)

    def breaks(self) -> np.ndarray:
        return panel_breaks(self.window, self.center, self.scale, self.support.quadrature_hint)


@dataclass(frozen=True)
class Event:
    """A measurable event: an interval ``(lo, hi]`` or a finite atom set."""

    atoms: tuple[float, ...] | None = None
    interval: tuple[float, float] | None = None

    def __post_init__(self):
        if (self.atoms is None) == (self.interval is None):
            raise ValueError("an Event is either an atom set or an interval, not both")
        if self.interval is not None and not self.interval[0] < self.interval[1]:
            raise ValueError("event interval needs lo < hi")

    @classmethod
    def of_atoms(cls, *atoms: float) -> Event:
        return cls(atoms=tuple(float(a) for a in atoms))

    @classmethod
    def of_interval(cls, lo: float, hi: float) -> Event:
        return cls(interval=(float(lo), float(hi)))

    def probability(self, dist) -> float:
        if self.interval is not None:
            lo, hi = self.interval
            return float(dist.cdf(hi) - dist.cdf(lo))
        if not dist.is_discrete:
            return 0.0
        return float(np.sum(dist(np.asarray(self.atoms))))

    def indicator(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.interval is not None:
            return (x > self.interval[0]) & (x <= self.interval[1])
        return np.isin(x, np.asarray(self.atoms))

    def describe(self) -> str:
        if self.interval is not None:
            return f"({self.interval[0]:g},{self.interval[1]:g}]"
        return "{" + ",".join(f"{a:g}" for a in self.atoms) + "}"


@dataclass(frozen=True)
class SampleVec:
    """An ordered n-sample from the sample space."""

    points: tuple

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))

    @property
    def n(self) -> int:
        return len(self.points)

    def __len__(self) -> int:
        return len(self.points)

    def array(self) -> np.ndarray:
        return np.asarray(self.points, dtype=float)


def as_array(data) -> np.ndarray:
    if isinstance(data, SampleVec):
        return data.array()
    return np.atleast_1d(np.asarray(data, dtype=float))


# --- quadrature --------------------------------------------------------------


@lru_cache(maxsize=None)
def gauss_legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = roots_legendre(order)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def panel_breaks(window, center=None, scale=None, panels: int = 16) -> np.ndarray:
    """Panel endpoints covering ``window``.

    Uniform panels over ``center +/- 8 scale``; beyond that the panel widths
    double, so power-law tails are resolved on a geometric grid.
    """
    lo, hi = float(window[0]), float(window[1])
    if not (np.isfinite(lo) and np.isfinite(hi)) or not lo < hi:
        raise QuadratureError(f"integration window must be finite with lo < hi, got {window}")
    if center is None or scale is None or not scale > 0:
        return np.linspace(lo, hi, panels + 1)
    core_lo = max(lo, center - 8.0 * scale)
    core_hi = min(hi, center + 8.0 * scale)
    if not core_lo < core_hi:
        return np.linspace(lo, hi, panels + 1)
    pts = list(np.linspace(core_lo, core_hi, panels + 1))
    step = 8.0 * scale
    x, w = core_hi, step
    while x < hi:
        x = min(hi, x + w)
        pts.append(x)
        w *= 2.0
    x, w = core_lo, step
    while x > lo:
        x = max(lo, x - w)
        pts.append(x)
        w *= 2.0
    return np.unique(np.asarray(pts))


def _gl_sum(func: ArrayFn, breaks: np.ndarray, order: int) -> float:
    nodes, weights = gauss_legendre(order)
    a, b = breaks[:-1], breaks[1:]
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    x = mid[:, None] + half[:, None] * nodes[None, :]
    vals = func(x.ravel()).reshape(x.shape)
    if not np.all(np.isfinite(vals)):
        raise ValueError("integrand produced a non-finite value")
    return float(np.sum((vals @ weights) * half))


def _refine(breaks: np.ndarray) -> np.ndarray:
    mids = 0.5 * (breaks[:-1] + breaks[1:])
    out = np.empty(2 * len(breaks) - 1)
    out[0::2] = breaks
    out[1::2] = mids
    return out


def integrate(func: ArrayFn, breaks, tol: float = QUAD_TOL, order: int = GL_ORDER, max_levels: int = 12) -> float:
    """Composite Gauss-Legendre over ``breaks`` with panel doubling.

    Stops once two successive estimates differ by less than ``tol``.
    """
    breaks = np.asarray(breaks, dtype=float)
    previous = _gl_sum(func, breaks, order)
    for _ in range(max_levels):
        breaks = _refine(breaks)
        current = _gl_sum(func, breaks, order)
        if abs(current - previous) < tol:
            return current
        previous = current
    raise QuadratureError(f"quadrature did not converge to {tol:g} after {max_levels} panel doublings")


def total_mass(f: DensityFn) -> float:
    if f.is_discrete:
        return math.fsum(f(f.atoms()))
    return integrate(f, f.breaks())


def _sign_crossings(diff: ArrayFn, breaks: np.ndarray, per_panel: int = 8) -> list[float]:
    frac = np.linspace(0.0, 1.0, per_panel + 1)[:-1]
    xs = (breaks[:-1, None] + (breaks[1:] - breaks[:-1])[:, None] * frac[None, :]).ravel()
    xs = np.append(xs, breaks[-1])
    d = diff(xs)
    roots = list(xs[d == 0.0])
    for i in np.flatnonzero(d[:-1] * d[1:] < 0):
        roots.append(brentq(lambda t: float(diff(t)), xs[i], xs[i + 1], xtol=1e-14, rtol=1e-14))
    return roots


# --- distances ---------------------------------------------------------------


def _check_pair(f: DensityFn, g: DensityFn) -> None:
    if not f.support.compatible(g.support):
        raise SupportMismatchError(f"densities live on different supports: {f.support} vs {g.support}")


def _counting_atoms(f: DensityFn, g: DensityFn) -> np.ndarray:
    lo = int(min(f.window[0], g.window[0]))
    hi = int(max(f.window[1], g.window[1]))
    atoms = np.arange(lo, hi + 1, dtype=float)
    for h in (f, g):
        vals = h(atoms)
        if not np.all(np.isfinite(vals)):
            raise ValueError(f"non-finite density value in {h.label or 'density'}")
        tail = 1.0 - math.fsum(vals)
        if tail > COUNTING_TAIL_TOL:
            raise ValueError(
                f"discarded tail mass {tail:.3g} of {h.label or 'density'} exceeds {COUNTING_TAIL_TOL:g}; "
                "widen its enumeration window"
            )
    return atoms


def l1_distance(f: DensityFn, g: DensityFn) -> float:
    """Integral of ``|f - g|`` with respect to the shared dominating measure.

    Counting supports are summed over the union of both enumeration windows.
    Interval supports are split at the sign changes of ``f - g`` so every
    panel sees a smooth integrand, then integrated by composite
    Gauss-Legendre with panel doubling.
    """
    _check_pair(f, g)
    if f.is_discrete:
        atoms = _counting_atoms(f, g)
        return float(min(2.0, math.fsum(np.abs(f(atoms) - g(atoms)))))

    # both windows lie inside the shared support, so the raw pdfs apply
    def diff(x):
        return f.pdf(x) - g.pdf(x)

    breaks = np.unique(np.concatenate([f.breaks(), g.breaks()]))
    breaks = breaks[(breaks >= min(f.window[0], g.window[0])) & (breaks <= max(f.window[1], g.window[1]))]
    crossings = _sign_crossings(diff, breaks)
    if crossings:
        breaks = np.unique(np.concatenate([breaks, crossings]))
    value = integrate(lambda x: np.abs(diff(x)), breaks)
    return float(min(2.0, max(0.0, value)))


def tv_distance(f: DensityFn, g: DensityFn) -> float:
    """Total variation distance via the half-L1 identity."""
    return 0.5 * l1_distance(f, g)


def tv_distance_exhaustive(p: DensityFn, q: DensityFn) -> float:
    """Total variation as the literal maximum of ``|P(A) - Q(A)|`` over all events.

    Enumerates all 2**m subsets of the m atoms in the union of both windows,
    so it is restricted to ``m <= 20``.
    """
    _check_pair(p, q)
    if not p.is_discrete:
        raise TypeError("exhaustive total variation needs counting supports")
    atoms = _counting_atoms(p, q)
    if len(atoms) > MAX_EXHAUSTIVE_ATOMS:
        raise ValueError(
            f"{len(atoms)} atoms exceed the exhaustive bound of {MAX_EXHAUSTIVE_ATOMS}; use l1_distance instead"
        )
    d = p(atoms) - q(atoms)
    subset_sums = np.zeros(1)
    for di in d:
        subset_sums = np.concatenate([subset_sums, subset_sums + di])
    return float(np.max(np.abs(subset_sums)))


def pmf_density(weights: Sequence[float], label: str = "pmf") -> DensityFn:
    """A density on ``{0, ..., m-1}`` from explicit probabilities."""
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or len(w) < 1 or np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("pmf weights must be a finite nonnegative vector")
    if abs(w.sum() - 1.0) > 1e-12:
        raise ValueError(f"pmf weights sum to {w.sum()!r}, not 1")
    w = w.copy()
    w.setflags(write=False)
    m = len(w)

    def pdf(x):
        idx = np.asarray(x, dtype=int)
        return w[np.clip(idx, 0, m - 1)] * (idx < m)

    return DensityFn(pdf, SupportSpec.counting(max(m - 1, 1)), (0, m - 1), label=label)


# --- sampling ----------------------------------------------------------------


def replicate_rng(seed: int, index: int | None = None) -> np.random.Generator:
    """Independent generator keyed by ``(seed, index)``.

    Streams come from ``SeedSequence`` spawn keys, so replicate ``i`` sees
    the same draws whatever order or process it runs in.
    """
    seed = int(seed)
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    if index is None:
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(int(index),))))


def sample(model, theta, n: int, seed: int) -> SampleVec:
    """Draw ``n`` iid points from ``P_theta`` of ``model``, deterministically in ``seed``."""
    if n < 1:
        raise ValueError("sample size n must be >= 1")
    model.check_theta(theta, allow_boundary=True)
    points = model.draw(theta, n, replicate_rng(seed))
    return SampleVec(tuple(p.item() for p in np.asarray(points)))
