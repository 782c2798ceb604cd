"""Markov kernels on finite spaces.

A kernel from a space with ``r`` points to one with ``c`` points is an
``r x c`` row-stochastic matrix.  The Bayesian experiment is the kernel
``P`` from parameters to observations plus a prior ``Q``; from these we
build the joint law, the prior predictive, the posterior kernel and the
posterior predictive kernel.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

ROW_TOL = 1e-12


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _labels(labels, count: int, prefix: str) -> tuple[str, ...]:
    if labels is None:
        return tuple(f"{prefix}{i}" for i in range(count))
    labels = tuple(str(x) for x in labels)
    if len(labels) != count:
        raise ValueError(f"expected {count} labels, got {len(labels)}")
    return labels


@dataclass(frozen=True, eq=False)
class FiniteDist:
    weights: np.ndarray
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        w = _frozen(self.weights)
        if w.ndim != 1 or len(w) == 0:
            raise ValueError("a finite distribution needs a nonempty weight vector")
        if np.any(w < 0) or abs(w.sum() - 1.0) > ROW_TOL:
            raise ValueError(f"weights must be nonnegative and sum to 1 (sum = {w.sum()!r})")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "labels", _labels(self.labels, len(w), "x"))

    def __len__(self):
        return len(self.weights)


@dataclass(frozen=True, eq=False)
class FiniteKernel:
    """Row-stochastic matrix; row ``i`` is the law attached to source label ``i``.

    Rows listed in ``undefined`` carry no law (for a posterior kernel, the
    observations of zero prior-predictive mass) and are stored as NaN.
    """

    rows: np.ndarray
    source_labels: tuple[str, ...] | None = None
    target_labels: tuple[str, ...] | None = None
    undefined: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        m = _frozen(self.rows)
        if m.ndim != 2 or 0 in m.shape:
            raise ValueError("a kernel needs a nonempty 2-d matrix")
        object.__setattr__(self, "rows", m)
        object.__setattr__(self, "source_labels", _labels(self.source_labels, m.shape[0], "s"))
        object.__setattr__(self, "target_labels", _labels(self.target_labels, m.shape[1], "t"))
        object.__setattr__(self, "undefined", frozenset(self.undefined))
        defined = self.defined_mask
        good = m[defined]
        if np.any(good < 0) or np.any(np.abs(good.sum(axis=1) - 1.0) > ROW_TOL):
            raise ValueError("kernel rows must be nonnegative and sum to 1")

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows.shape

    @property
    def defined_mask(self) -> np.ndarray:
        return np.array([i not in self.undefined for i in range(self.rows.shape[0])])

    def row(self, label) -> np.ndarray:
        i = self.source_labels.index(str(label)) if not isinstance(label, int) else label
        if i in self.undefined:
            raise ValueError(f"row {self.source_labels[i]!r} is undefined (zero-mass observation)")
        return self.rows[i]

    @classmethod
    def identity(cls, labels: Sequence[str]) -> FiniteKernel:
        return cls(np.eye(len(labels)), labels, labels)

    @classmethod
    def deterministic(cls, mapping: Sequence[int], n_targets: int) -> FiniteKernel:
        """The Dirac kernel of a map ``i -> mapping[i]``."""
        m = np.zeros((len(mapping), n_targets))
        m[np.arange(len(mapping)), mapping] = 1.0
        return cls(m)


@dataclass(frozen=True, eq=False)
class FiniteJoint:
    """Joint law over observations x parameters, ``table[w, t]``."""

    table: np.ndarray
    obs_labels: tuple[str, ...] | None = None
    param_labels: tuple[str, ...] | None = None

    def __post_init__(self):
        t = _frozen(self.table)
        if t.ndim != 2 or np.any(t < 0) or abs(t.sum() - 1.0) > ROW_TOL:
            raise ValueError("a joint table must be a nonnegative matrix summing to 1")
        object.__setattr__(self, "table", t)
        object.__setattr__(self, "obs_labels", _labels(self.obs_labels, t.shape[0], "w"))
        object.__setattr__(self, "param_labels", _labels(self.param_labels, t.shape[1], "th"))

    def obs_marginal(self) -> FiniteDist:
        return FiniteDist(self.table.sum(axis=1), self.obs_labels)

    def param_marginal(self) -> FiniteDist:
        return FiniteDist(self.table.sum(axis=0), self.param_labels)


def image(q: FiniteDist, m: FiniteKernel) -> FiniteDist:
    """Law of the kernel's output when its input is drawn from ``q``."""
    if len(q) != m.shape[0]:
        raise ValueError(f"distribution has {len(q)} points but kernel has {m.shape[0]} sources")
    defined = m.defined_mask
    if np.any(q.weights[~defined] > 0):
        raise ValueError("distribution charges undefined kernel rows")
    out = q.weights[defined] @ m.rows[defined]
    return FiniteDist(out, m.target_labels)


def compose(m1: FiniteKernel, m2: FiniteKernel) -> FiniteKernel:
    """First ``m1`` then ``m2``: the matrix product ``m1 @ m2``.

    Undefined rows of ``m1``, and rows that put mass on undefined rows of
    ``m2``, are undefined in the result.
    """
    if m1.shape[1] != m2.shape[0]:
        raise ValueError(f"cannot compose {m1.shape} with {m2.shape}")
    d2 = m2.defined_mask
    reaches_bad = np.zeros(m1.shape[0], dtype=bool)
    d1 = m1.defined_mask
    reaches_bad[d1] = np.any(m1.rows[d1][:, ~d2] > 0, axis=1)
    ok = d1 & ~reaches_bad
    rows = np.full((m1.shape[0], m2.shape[1]), np.nan)
    rows[ok] = m1.rows[ok][:, d2] @ m2.rows[d2]
    undefined = frozenset(int(i) for i in np.flatnonzero(~ok))
    return FiniteKernel(rows, m1.source_labels, m2.target_labels, undefined)


def build_joint(p: FiniteKernel, q: FiniteDist) -> FiniteJoint:
    """``table[w, t] = q(t) * p(t, w)`` for the kernel ``p`` from parameters to observations."""
    if len(q) != p.shape[0]:
        raise ValueError(f"prior has {len(q)} points but kernel has {p.shape[0]} sources")
    return FiniteJoint((p.rows * q.weights[:, None]).T, p.target_labels, p.source_labels)


def posterior_kernel(j: FiniteJoint) -> FiniteKernel:
    """Condition the joint on the observation.

    Observations with zero prior-predictive mass get an undefined row.
    """
    marg = j.table.sum(axis=1)
    undefined = frozenset(int(i) for i in np.flatnonzero(marg <= 0))
    rows = np.full(j.table.shape, np.nan)
    ok = marg > 0
    rows[ok] = j.table[ok] / marg[ok, None]
    return FiniteKernel(rows, j.obs_labels, j.param_labels, undefined)


def predictive_kernel(post: FiniteKernel, p: FiniteKernel) -> FiniteKernel:
    """Row ``w`` is the posterior predictive law given observation ``w``."""
    return compose(post, p)


def prior_predictive(p: FiniteKernel, q: FiniteDist) -> FiniteDist:
    return image(q, p)


def event_probabilities(p: FiniteKernel, event: Sequence[int]) -> np.ndarray:
    """``P_t(A)`` for each parameter ``t``."""
    return p.rows[:, list(event)].sum(axis=1)


def exact_event_risk(p: FiniteKernel, q: FiniteDist, event: Sequence[int], estimate=None) -> float:
    """Bayes risk ``E[(X(w) - P_t(A))^2]`` under the joint law, by enumeration.

    ``estimate`` maps observations to numbers; by default it is the
    posterior predictive probability of ``A``.
    """
    joint = build_joint(p, q)
    f_a = event_probabilities(p, event)
    if estimate is None:
        estimate = predictive_kernel(posterior_kernel(joint), p).rows[:, list(event)].sum(axis=1)
    estimate = np.asarray(estimate, dtype=float)
    sq = (estimate[:, None] - f_a[None, :]) ** 2
    mass = joint.table
    return float(np.sum(np.where(mass > 0, sq * mass, 0.0)))


def load_matrix(path: str | Path) -> list[np.ndarray]:
    """Read whitespace-separated matrices; blank lines separate blocks, ``#`` starts a comment.

    Returns one 2-d array per block.
    """
    blocks: list[list[list[float]]] = []
    current: list[list[float]] = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            if current and not raw.strip().startswith("#"):
                blocks.append(current)
                current = []
            continue
        try:
            row = [float(tok) for tok in line.split()]
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: malformed number ({exc})") from None
        if current and len(row) != len(current[0]):
            raise ValueError(f"{path}:{lineno}: row has {len(row)} entries, expected {len(current[0])}")
        current.append(row)
    if current:
        blocks.append(current)
    if not blocks:
        raise ValueError(f"{path}: no matrix rows found")
    return [np.asarray(b, dtype=float) for b in blocks]
