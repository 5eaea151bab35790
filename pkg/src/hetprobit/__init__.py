"""Bayesian inference for binary choice under median independence.

The threshold-crossing model ``Y = 1{x'beta >= U}`` with ``Median(U | X) = 0``
is fitted through its heteroskedastic probit representation
``P(Y = 1 | x) = Phi(x'beta * exp(-g(x) / 2))`` with ``beta = (theta', 1)'`` and a
Matern Gaussian-process prior on the log-skedastic function ``g``.
"""

from .errors import DomainError, FactorizationError, NumericalError
from .distributions import RngStream
from .kernels import KernelSpec, gram, cross_cov, matern
from .model import (
    ChainState,
    Dataset,
    MixtureTable,
    OMORI_TABLE,
    choice_probability,
    log_likelihood,
    read_dataset,
    transform_T,
    write_dataset,
)
from .gibbs import GibbsConfig, PosteriorDraws, run_chain
from .posterior import (
    Summary,
    bayes_decision,
    choice_prob_draws,
    effective_sample_size,
    posterior_predictive,
    summarize,
    summarize_theta,
)
from .simstudy import DgpSpec, StudyResult, generate_dgp, run_study

__version__ = "0.1.0"
