"""Bayesian confirmatory factor analysis via mean-field variational Bayes.

Fast coordinate-ascent fitters for single- and multi-factor structural
equation models, bootstrap/jackknife-corrected credible intervals, and an
in-package conjugate Gibbs sampler serving as the MCMC benchmark.
"""

__version__ = "0.1.0"

from .backend import active_backend
from .distributions import (
    GaussianMoment,
    InvChiSq,
    InvGWishart,
    gaussian_second_moment,
    igw_mean,
    igw_mean_inverse,
    inv_chisq_logpdf,
    inv_chisq_mean,
    inv_chisq_mean_of_inverse,
    inv_chisq_variance,
    sample_igw,
    sample_inv_chisq,
)
from .model import (
    Dataset,
    FactorSpec,
    Hyperparameters,
    TrueParameters,
    block_diagonal_loading,
    load_csv,
    parameter_names,
    simulate,
    true_values,
)
from .mfvb import (
    FitReport,
    MultiFactorVariationalState,
    SingleFactorVariationalState,
    fit,
    fit_multi,
    fit_single,
    marginal_density_grid,
    point_estimates,
    q_marginal,
)
from .resample import (
    BootstrapConfig,
    IntervalReport,
    bootstrap_dataset,
    bootstrap_intervals,
    jackknife_intervals,
    mfvb_intervals,
    quantile,
)
from .gibbs import ChainConfig, ChainDraws, chain_summary, gibbs_multi, gibbs_single
from .diagnostics import DensityGrid, accuracy, coverage_table, kde
from .studies import StudyConfig, density_figure_export, run_study

__all__ = [
    "__version__",
    "active_backend",
    "GaussianMoment", "InvChiSq", "InvGWishart",
    "gaussian_second_moment", "igw_mean", "igw_mean_inverse",
    "inv_chisq_logpdf", "inv_chisq_mean", "inv_chisq_mean_of_inverse",
    "inv_chisq_variance", "sample_igw", "sample_inv_chisq",
    "Dataset", "FactorSpec", "Hyperparameters", "TrueParameters",
    "block_diagonal_loading", "load_csv", "parameter_names", "simulate",
    "true_values",
    "FitReport", "MultiFactorVariationalState", "SingleFactorVariationalState",
    "fit", "fit_multi", "fit_single", "marginal_density_grid",
    "point_estimates", "q_marginal",
    "BootstrapConfig", "IntervalReport", "bootstrap_dataset",
    "bootstrap_intervals", "jackknife_intervals", "mfvb_intervals", "quantile",
    "ChainConfig", "ChainDraws", "chain_summary", "gibbs_multi", "gibbs_single",
    "DensityGrid", "accuracy", "coverage_table", "kde",
    "StudyConfig", "density_figure_export", "run_study",
]
