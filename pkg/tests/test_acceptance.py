"""Acceptance gate: one check per criterion, each at its stated tolerance.

Run with ``pytest tests/test_acceptance.py`` (a PASS/FAIL line per criterion is
printed in the terminal summary) or directly with ``python3 tests/test_acceptance.py``.
"""

from __future__ import annotations

import io
import math
import time
from contextlib import redirect_stderr, redirect_stdout

import numpy as np
import pytest

from postpred import cli
from postpred import kernels as K
from postpred import models as M
from postpred import oracle as O
from postpred import risk as R
from postpred.measure import l1_distance, pmf_density, tv_distance_exhaustive

RESULTS: dict[str, tuple[bool, str]] = {}

DEFAULT_MODELS = {
    "ExpGamma": M.ExpGamma(1.0),
    "NormalNormal": M.NormalNormal(0.0, 1.0, 1.0),
    "PoissonGamma": M.PoissonGamma(1.0),
    "BernoulliUniform": M.BernoulliUniform(),
}


def record(name: str, ok: bool, detail: str) -> bool:
    RESULTS[name] = (ok, detail)
    return ok


# --- 1. kernel identities ---------------------------------------------------------


def kernel_identities(cases: int = 200, seed: int = 2024) -> tuple[bool, str]:
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(cases):
        k, m = (int(v) for v in rng.integers(1, 11, size=2))
        p = K.FiniteKernel(rng.dirichlet(np.ones(m), size=k))
        q = K.FiniteDist(rng.dirichlet(np.ones(k)))
        post = K.posterior_kernel(K.build_joint(p, q))
        back = K.image(K.prior_predictive(p, q), post)
        round_trip = K.image(q, K.compose(p, post))
        worst = max(worst, np.max(np.abs(back.weights - q.weights)), np.max(np.abs(round_trip.weights - q.weights)))
    p = K.FiniteKernel([[0.9, 0.1], [0.2, 0.8]])
    q = K.FiniteDist([0.5, 0.5])
    post = K.posterior_kernel(K.build_joint(p, q))
    pred = K.predictive_kernel(post, p)
    example = max(
        np.max(np.abs(K.prior_predictive(p, q).weights - [0.55, 0.45])),
        np.max(np.abs(post.rows[0] - [9 / 11, 2 / 11])),
        np.max(np.abs(pred.rows[0] - [17 / 22, 5 / 22])),
    )
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and example <= 1e-12 and elapsed < 1.0
    return ok, f"max identity dev {worst:.2e}, worked example dev {example:.2e}, {elapsed:.2f}s"


# --- 2. total variation identity -----------------------------------------------------


def tv_identity(pairs: int = 500, seed: int = 7) -> tuple[bool, str]:
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(pairs):
        m = int(rng.integers(1, 21))
        p, q = pmf_density(rng.dirichlet(np.ones(m))), pmf_density(rng.dirichlet(np.ones(m)))
        worst = max(worst, abs(tv_distance_exhaustive(p, q) - 0.5 * l1_distance(p, q)))
    elapsed = time.perf_counter() - start
    return worst <= 1e-12 and elapsed < 10.0, f"max |TV - L1/2| {worst:.2e}, {elapsed:.2f}s"


# --- 3. closed forms against quadrature ---------------------------------------------------


def random_case(family: str, rng: np.random.Generator):
    n = int(rng.integers(0, 6))
    if family == "ExpGamma":
        return M.ExpGamma(float(rng.uniform(0.2, 4.0))), list(rng.exponential(rng.uniform(0.3, 3.0), n))
    if family == "NormalNormal":
        model = M.NormalNormal(float(rng.normal(0, 2)), float(rng.uniform(0.1, 4.0)), float(rng.uniform(0.1, 4.0)))
        return model, list(rng.normal(rng.normal(0, 2), 1.5, n))
    if family == "PoissonGamma":
        return M.PoissonGamma(float(rng.uniform(0.2, 4.0))), [float(k) for k in rng.poisson(rng.uniform(0.2, 6.0), n)]
    return M.BernoulliUniform(), [float(k) for k in rng.integers(0, 2, n)]


def closed_form_reconciliation(cases: int = 50, seed: int = 11) -> tuple[bool, str]:
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = 0.0
    mismatches = []
    variant_max: dict[str, float] = {}
    for family in M.CONJUGATE_FAMILIES:
        for _ in range(cases):
            model, data = random_case(family, rng)
            rep = O.reconcile(model, data, tol=1e-8)
            worst = max(worst, rep.max_abs_dev)
            if rep.verdict != "Match":
                mismatches.append(f"{family}{data}")
            for v in rep.variants:
                variant_max[v.name] = max(variant_max.get(v.name, 0.0), v.max_abs_dev)
    elapsed = time.perf_counter() - start
    flagged = all(variant_max.get(name, 0.0) > 0.1 for name in ("expgamma_marginal", "expgamma_joint", "bernoulli_marginal"))
    matching = all(variant_max.get(name, math.inf) < 1e-8 for name in ("poisson_marginal", "poisson_joint", "bernoulli_joint"))
    ok = not mismatches and flagged and matching and elapsed < 60.0
    detail = (
        f"max closed-form dev {worst:.2e} over {4 * cases} cases; printed-variant max devs "
        + ", ".join(f"{k}={v:.3g}" for k, v in sorted(variant_max.items()))
        + f"; {elapsed:.1f}s"
    )
    if mismatches:
        detail += f"; mismatched: {mismatches[:3]}"
    return ok, detail


# --- 4. exact risk spot checks ---------------------------------------------------------


def exact_risk_checks(reps: int = 100_000, seed: int = 31) -> tuple[bool, str]:
    start = time.perf_counter()
    bern = R.bayes_risk_mc(M.BernoulliUniform(), "PosteriorPredictive", R.LossKind.parse("SquaredError{1}"), 1, reps, seed)
    p = K.FiniteKernel([[0.9, 0.1], [0.2, 0.8]])
    q = K.FiniteDist([0.5, 0.5])
    exact = K.exact_event_risk(p, q, [0])
    finite = R.bayes_risk_mc(M.FiniteExperiment.from_kernel(p, q), "PosteriorPredictive", R.LossKind.parse("SquaredError{0}"), 1, reps, seed)
    z1 = abs(bern.mean - 1 / 18) / bern.std_error
    z2 = abs(finite.mean - exact) / finite.std_error
    elapsed = time.perf_counter() - start
    ok = z1 < 3 and z2 < 3 and abs(exact - 0.061869) < 1e-6 and elapsed < 60.0
    return ok, (
        f"Bernoulli {bern.mean:.6f} vs 1/18 ({z1:.2f} SE); 2x2 kernel {finite.mean:.6f} vs {exact:.6f} ({z2:.2f} SE); {elapsed:.1f}s"
    )


# --- 5. dominance -----------------------------------------------------------------------


def dominance(reps: int = 10_000, seed: int = 20240601, sizes=(1, 5, 20)) -> tuple[bool, str]:
    start = time.perf_counter()
    losses = [R.SQUARED_TV, R.L1_SQUARED, R.SUP_CDF_SQUARED]
    kinds = ["PosteriorPredictive", *R.DEFAULT_COMPETITORS]
    failures, closest = [], (math.inf, "")
    for family, model in DEFAULT_MODELS.items():
        for n in sizes:
            table = R.risk_table(model, kinds, losses, n, reps, seed)
            for loss in losses:
                rep = R.dominance_from_rows([r for r in table if r.loss == str(loss)], str(loss), n)
                for comp, margin in rep.margins.items():
                    if margin < closest[0]:
                        closest = (margin, f"{family}/{loss}/n={n} vs {comp}")
                if not rep.dominant:
                    failures.append(f"{family}/{loss}/n={n}")
    elapsed = time.perf_counter() - start
    ok = not failures and elapsed < 600.0
    detail = f"{4 * len(sizes) * len(losses)} cells, smallest margin {closest[0]:.2e} ({closest[1]}); {elapsed:.0f}s"
    if failures:
        detail += f"; failed: {failures}"
    return ok, detail


# --- 6. consistency -------------------------------------------------------------------------

CEILINGS = {"BernoulliUniform": 0.05, "NormalNormal": 0.05, "PoissonGamma": 0.10, "ExpGamma": 0.10}


def consistency(reps: int = 2000, seed: int = 99) -> tuple[bool, str]:
    start = time.perf_counter()
    losses = [R.L1, R.L1_SQUARED]
    kinds = ["PosteriorPredictive", "PriorPredictive"]
    problems, parts = [], []
    for family, model in DEFAULT_MODELS.items():
        first = {(r.estimator, r.loss): r for r in R.risk_table(model, kinds, losses, 1, reps, seed)}
        last = {(r.estimator, r.loss): r for r in R.risk_table(model, kinds, losses, 200, reps, seed)}
        for loss in ("L1", "L1Squared"):
            a, b = first["PosteriorPredictive", loss], last["PosteriorPredictive", loss]
            if not b.mean < 0.2 * a.mean:
                problems.append(f"{family}/{loss} ratio {b.mean / a.mean:.3f}")
            if loss == "L1" and not b.mean < CEILINGS[family]:
                problems.append(f"{family}/L1 risk {b.mean:.4f} >= {CEILINGS[family]}")
            ca, cb = first["PriorPredictive", loss], last["PriorPredictive", loss]
            if cb.mean < 0.8 * ca.mean:
                problems.append(f"{family}/{loss} prior predictive decayed")
        parts.append(f"{family} L1 {first['PosteriorPredictive', 'L1'].mean:.3f}->{last['PosteriorPredictive', 'L1'].mean:.4f}")
    elapsed = time.perf_counter() - start
    ok = not problems and elapsed < 600.0
    detail = "; ".join(parts) + f"; {elapsed:.0f}s"
    if problems:
        detail += f"; problems: {problems}"
    return ok, detail


# --- 7. determinism -------------------------------------------------------------------------


def _cli_output(argv) -> tuple[int, str]:
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        code = cli.main(list(argv))
    return code, out.getvalue()


def determinism() -> tuple[bool, str]:
    commands = [
        ("risk", "--model", "ExpGamma", "--loss", "SquaredTV,SupCDFSquared", "--n", "1,5", "--reps", "24", "--seed", "5"),
        ("risk", "--model", "BernoulliUniform", "--loss", "SquaredError{1}", "--reps", "2", "--seed", "17"),
        ("consistency", "--model", "PoissonGamma", "--loss", "L1", "--n-grid", "1,10", "--reps", "16", "--seed", "3"),
        ("risk", "--model", "NormalNormal", "--loss", "L1Squared", "--reps", "16", "--seed", "8", "--format", "json"),
    ]
    bad = []
    for argv in commands:
        outputs = {_cli_output(argv)[1], _cli_output(argv)[1], _cli_output([*argv, "--workers", "2"])[1], _cli_output([*argv, "--workers", "3"])[1]}
        if len(outputs) != 1:
            bad.append(argv[0] + " " + argv[2])
    return not bad, f"{len(commands)} commands x (2 reruns, 2 and 3 workers) byte-identical" + (f"; differing: {bad}" if bad else "")


CRITERIA = [
    ("1 kernel identities", kernel_identities),
    ("2 TV = L1/2 identity", tv_identity),
    ("3 closed forms vs quadrature", closed_form_reconciliation),
    ("4 exact-risk spot checks", exact_risk_checks),
    ("5 dominance", dominance),
    ("6 consistency", consistency),
    ("7 determinism", determinism),
]


@pytest.mark.parametrize(
    "name,check",
    [pytest.param(n, c, marks=pytest.mark.slow) if n[0] in "56" else (n, c) for n, c in CRITERIA],
    ids=[n.split()[0] for n, _ in CRITERIA],
)
def test_criterion(name, check):
    ok, detail = check()
    record(name, ok, detail)
    assert ok, detail


if __name__ == "__main__":
    for name, check in CRITERIA:
        ok, detail = check()
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}", flush=True)
