"""Closed-form densities of the sampling families and their predictives.

Each builder returns a :class:`~postpred.measure.DensityFn` with an
effective window whose discarded mass is below ``TAIL_MASS``.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import betainc, gammainc, gammaincc, gammaln, ndtr, ndtri, xlog1py, xlogy

from .measure import BINARY, NATURALS, POSITIVE_REALS, REAL_LINE, TAIL_MASS, DensityFn, SupportSpec

_IQR_TO_SD = 1.3489795003921634


def _continuous(pdf, cdf, ppf, support, window, label):
    q1, med, q3 = ppf(np.array([0.25, 0.5, 0.75]))
    scale = (q3 - q1) / _IQR_TO_SD
    return DensityFn(pdf, support, window, cdf_fn=cdf, ppf_fn=ppf, center=float(med), scale=float(scale), label=label)


def exponential(rate: float) -> DensityFn:
    rate = float(rate)
    if not rate > 0:
        raise ValueError(f"exponential rate must be positive, got {rate}")

    def pdf(x):
        return rate * np.exp(-rate * x)

    def cdf(t):
        return np.where(t > 0, -np.expm1(-rate * np.maximum(t, 0.0)), 0.0)

    def ppf(u):
        return -np.log1p(-u) / rate

    window = (0.0, -math.log(TAIL_MASS) / rate)
    return _continuous(pdf, cdf, ppf, POSITIVE_REALS, window, f"Exp({rate:.6g})")


def lomax(shape: float, rate: float) -> DensityFn:
    """Gamma(shape, rate) mixture of exponentials: ``a b^a / (b + x)^(a+1)``."""
    a, b = float(shape), float(rate)
    if not (a > 0 and b > 0):
        raise ValueError(f"Lomax needs shape, rate > 0, got ({a}, {b})")

    def pdf(x):
        return np.exp(math.log(a) + a * math.log(b) - (a + 1.0) * np.log(b + x))

    def cdf(t):
        t = np.maximum(t, 0.0)
        return -np.expm1(a * np.log(b / (b + t)))

    def ppf(u):
        return b * np.expm1(-np.log1p(-u) / a)

    window = (0.0, b * math.expm1(-math.log(TAIL_MASS) / a))
    return _continuous(pdf, cdf, ppf, POSITIVE_REALS, window, f"Lomax({a:.6g}, {b:.6g})")


def normal(mean: float, var: float) -> DensityFn:
    m, v = float(mean), float(var)
    if not v > 0:
        raise ValueError(f"normal variance must be positive, got {v}")
    sd = math.sqrt(v)
    norm = -0.5 * math.log(2.0 * math.pi * v)

    def pdf(x):
        return np.exp(norm - 0.5 * (x - m) ** 2 / v)

    def cdf(t):
        return ndtr((t - m) / sd)

    def ppf(u):
        return m + sd * ndtri(u)

    z = -float(ndtri(TAIL_MASS / 2))
    window = (m - z * sd, m + z * sd)
    return DensityFn(pdf, REAL_LINE, window, cdf_fn=cdf, ppf_fn=ppf, center=m, scale=sd, label=f"N({m:.6g}, {v:.6g})")


def _tail_cutoff(sf, start: int) -> int:
    hi = max(int(start), 8)
    while True:
        ks = np.arange(0, hi + 1, dtype=float)
        below = np.flatnonzero(sf(ks) < TAIL_MASS)
        if len(below):
            return int(below[0])
        hi *= 2


def poisson(rate: float) -> DensityFn:
    lam = float(rate)
    if not lam >= 0:
        raise ValueError(f"Poisson rate must be nonnegative, got {lam}")

    def pdf(k):
        return np.exp(xlogy(k, lam) - lam - gammaln(k + 1.0))

    def cdf(t):
        k = np.floor(t)
        return np.where(k >= 0, gammaincc(np.maximum(k, 0.0) + 1.0, lam), 0.0) if lam > 0 else (t >= 0).astype(float)

    def sf(k):
        return gammainc(k + 1.0, lam) if lam > 0 else np.zeros_like(k)

    K = _tail_cutoff(sf, lam + 12.0 * math.sqrt(lam) + 20.0)
    return DensityFn(pdf, NATURALS, (0, K), cdf_fn=cdf, label=f"Poisson({lam:.6g})")


def negative_binomial(shape: float, rate: float) -> DensityFn:
    """Gamma(shape, rate) mixture of Poissons."""
    a, b = float(shape), float(rate)
    if not (a > 0 and b > 0):
        raise ValueError(f"negative binomial needs shape, rate > 0, got ({a}, {b})")
    p = b / (b + 1.0)
    log_p, log_q = math.log(p), math.log1p(-p)
    lg_a = math.lgamma(a)

    def pdf(k):
        return np.exp(gammaln(k + a) - gammaln(k + 1.0) - lg_a + a * log_p + k * log_q)

    def cdf(t):
        k = np.floor(t)
        return np.where(k >= 0, betainc(a, np.maximum(k, 0.0) + 1.0, p), 0.0)

    def sf(k):
        return betainc(k + 1.0, a, 1.0 - p)

    mean = a / b
    sd = math.sqrt(a * (b + 1.0)) / b
    K = _tail_cutoff(sf, mean + 12.0 * sd + 20.0)
    return DensityFn(pdf, NATURALS, (0, K), cdf_fn=cdf, label=f"NegBin({a:.6g}, {b:.6g})")


def bernoulli(p: float) -> DensityFn:
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"Bernoulli parameter must lie in [0, 1], got {p}")

    def pdf(k):
        return np.where(k == 1, p, np.where(k == 0, 1.0 - p, 0.0))

    def cdf(t):
        return np.where(t >= 1, 1.0, np.where(t >= 0, 1.0 - p, 0.0))

    return DensityFn(pdf, BINARY, (0, 1), cdf_fn=cdf, label=f"Bernoulli({p:.6g})")


def categorical(weights, support: SupportSpec | None = None, label: str = "") -> DensityFn:
    """Probabilities on ``{0, ..., m-1}``."""
    w = np.asarray(weights, dtype=float).copy()
    m = len(w)
    if support is None:
        support = SupportSpec.counting(max(m - 1, 1))
    w.setflags(write=False)
    cum = np.cumsum(w)

    def pdf(k):
        idx = np.asarray(k, dtype=int)
        return np.where(idx < m, w[np.clip(idx, 0, m - 1)], 0.0)

    def cdf(t):
        idx = np.floor(np.asarray(t, dtype=float))
        return np.where(idx >= 0, cum[np.clip(idx, 0, m - 1).astype(int)], 0.0)

    return DensityFn(pdf, support, (0, m - 1), cdf_fn=cdf, label=label or f"Categorical({m})")


def log_normal_pdf(x, mean, var):
    return -0.5 * np.log(2.0 * np.pi * var) - 0.5 * (x - mean) ** 2 / var


def log_gamma_pdf(theta, shape, rate):
    return shape * np.log(rate) - gammaln(shape) + xlogy(shape - 1.0, theta) - rate * theta


def log_beta_pdf(theta, a, b):
    return xlogy(a - 1.0, theta) + xlog1py(b - 1.0, -theta) - (gammaln(a) + gammaln(b) - gammaln(a + b))
