"""Posterior predictive distributions as Bayes estimators of sampling distributions and densities."""

__version__ = "0.1.0"

from .measure import DensityFn, Event, SampleVec, SupportSpec, l1_distance, sample, tv_distance, tv_distance_exhaustive
from .models import (
    BernoulliUniform,
    DominatedModel,
    ExpGamma,
    FiniteExperiment,
    NormalNormal,
    PoissonGamma,
    PredictiveDistribution,
    make_model,
    plugin_density,
    posterior_update,
    predictive,
    predictive_cdf,
    predictive_joint_density,
    predictive_marginal_density,
)

__all__ = [
    "BernoulliUniform",
    "DensityFn",
    "DominatedModel",
    "Event",
    "ExpGamma",
    "FiniteExperiment",
    "NormalNormal",
    "PoissonGamma",
    "PredictiveDistribution",
    "SampleVec",
    "SupportSpec",
    "l1_distance",
    "make_model",
    "plugin_density",
    "posterior_update",
    "predictive",
    "predictive_cdf",
    "predictive_joint_density",
    "predictive_marginal_density",
    "sample",
    "tv_distance",
    "tv_distance_exhaustive",
]
