import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from postpred import models as M
from postpred import oracle as O
from postpred.measure import total_mass


class TestGridPosterior:
    def test_normal_mean(self):
        g = O.grid_posterior(M.NormalNormal(0.0, 1.0, 1.0), [2.0])
        assert g.mean() == pytest.approx(1.0, abs=1e-6)

    def test_beta_mean(self):
        g = O.grid_posterior(M.BernoulliUniform(), [1.0, 0.0, 1.0])
        assert g.mean() == pytest.approx(0.6, abs=1e-6)

    def test_weights_normalised_and_sorted(self):
        g = O.grid_posterior(M.ExpGamma(1.0), [0.5, 2.0])
        assert g.weights.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(g.weights >= 0)
        assert np.all(np.diff(g.nodes) > 0)

    def test_no_data_gives_prior(self):
        g = O.grid_posterior(M.ExpGamma(2.0), [])
        assert g.mean() == pytest.approx(0.5, abs=1e-8)

    def test_grid_too_small(self):
        with pytest.raises(ValueError):
            O.grid_posterior(M.ExpGamma(), [1.0], grid_size=8)

    def test_reordering_invariance(self):
        a = O.grid_posterior(M.PoissonGamma(1.0), [3.0, 0.0, 5.0])
        b = O.grid_posterior(M.PoissonGamma(1.0), [5.0, 3.0, 0.0])
        np.testing.assert_allclose(a.weights, b.weights, atol=1e-12)


class TestQuadraturePredictive:
    def test_laplace_value(self):
        g = O.grid_posterior(M.BernoulliUniform(), [1.0])
        assert O.predictive_density_quadrature(g, M.BernoulliUniform(), 1.0) == pytest.approx(2 / 3, abs=1e-8)

    def test_lomax_value(self):
        g = O.grid_posterior(M.ExpGamma(1.0), [1.0])
        assert O.predictive_density_quadrature(g, M.ExpGamma(1.0), 2.0) == pytest.approx(0.125, abs=1e-8)

    def test_degenerate_prior(self):
        m = M.NormalNormal(0.0, 1e-12, 1.0)
        g = O.grid_posterior(m, [3.0])
        assert O.predictive_density_quadrature(g, m, 0.5) == pytest.approx(0.3520653267642995, abs=1e-4)

    @pytest.mark.parametrize(
        "model,data,point",
        [
            (M.ExpGamma(1.0), [0.4, 1.7], 0.9),
            (M.NormalNormal(0.0, 1.0, 1.0), [0.3, -0.2], 0.1),
            (M.PoissonGamma(1.0), [2.0, 4.0], 3.0),
            (M.BernoulliUniform(), [1.0, 0.0, 0.0], 1.0),
        ],
    )
    def test_grid_convergence(self, model, data, point):
        a = O.predictive_density_quadrature(O.grid_posterior(model, data, 1024), model, point)
        b = O.predictive_density_quadrature(O.grid_posterior(model, data, 2048), model, point)
        assert abs(a - b) < 1e-9

    @pytest.mark.parametrize(
        "model,data",
        [
            (M.ExpGamma(1.0), [0.4, 1.7, 0.2]),
            (M.NormalNormal(0.0, 1.0, 1.0), [0.3]),
            (M.PoissonGamma(1.0), [2.0, 4.0, 0.0, 1.0, 1.0]),
            (M.BernoulliUniform(), [1.0, 0.0]),
        ],
    )
    def test_oracle_integrates_to_one(self, model, data):
        f = O.oracle_density(O.grid_posterior(model, data), model)
        assert total_mass(f) == pytest.approx(1.0, abs=1e-7)


def _case(family, rng):
    n = int(rng.integers(0, 6))
    if family == "ExpGamma":
        return M.ExpGamma(float(rng.uniform(0.3, 3.0))), list(rng.exponential(1.0, n))
    if family == "NormalNormal":
        return M.NormalNormal(float(rng.normal()), float(rng.uniform(0.2, 3.0)), float(rng.uniform(0.2, 3.0))), list(rng.normal(0, 2, n))
    if family == "PoissonGamma":
        return M.PoissonGamma(float(rng.uniform(0.3, 3.0))), [float(k) for k in rng.poisson(2.0, n)]
    return M.BernoulliUniform(), [float(k) for k in rng.integers(0, 2, n)]


class TestReconcile:
    @settings(max_examples=12)
    @given(st.sampled_from(M.CONJUGATE_FAMILIES), st.integers(0, 2**32 - 1))
    def test_closed_forms_match(self, family, seed):
        model, data = _case(family, np.random.default_rng(seed))
        rep = O.reconcile(model, data)
        assert rep.verdict == "Match", rep.to_dict()

    def test_exp_printed_marginal_wrong(self):
        rep = O.reconcile(M.ExpGamma(1.0), [1.0])
        assert rep.verdict == "Match"
        assert rep.variant("expgamma_marginal").max_abs_dev > 0.1
        assert rep.variant("expgamma_joint").max_abs_dev > 0.1

    def test_poisson_printed_forms_match(self):
        rep = O.reconcile(M.PoissonGamma(1.0), [2.0, 1.0])
        assert rep.variant("poisson_marginal").verdict == "Match"
        assert rep.variant("poisson_joint").verdict == "Match"

    def test_bernoulli_printed_forms(self):
        rep = O.reconcile(M.BernoulliUniform(), [1.0, 0.0])
        assert rep.verdict == "Match"
        assert rep.variant("bernoulli_joint").verdict == "Match"
        assert rep.variant("bernoulli_marginal").max_abs_dev > 0.1

    def test_normal_printed_marginal(self):
        rep = O.reconcile(M.NormalNormal(), [0.5, 1.5])
        assert rep.variant("normal_marginal").verdict == "Match"

    def test_no_variants_without_data(self):
        rep = O.reconcile(M.ExpGamma(1.0), [])
        assert rep.variants == [] and rep.paper_formula_dev is None

    def test_report_serialises(self):
        d = O.reconcile(M.PoissonGamma(1.0), [1.0]).to_dict()
        assert d["verdict"] == "Match" and d["joint_dev"] is not None
