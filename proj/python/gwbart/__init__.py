"""Python interface to the gwbart C++ library."""

import json as _json

from . import _core
from ._core import (
    SplitSchedule,
    agresti_bound,
    chernoff_bound,
    dwass_pmf,
    expected_generation_size,
    fit,
    lattice_design,
    markov_bound,
    mu_prefix,
    sample_survival,
    target_rate_check,
)

__all__ = [
    "SplitSchedule",
    "agresti_bound",
    "chernoff_bound",
    "concentration",
    "dwass_pmf",
    "expected_generation_size",
    "fit",
    "kd_prior_mass",
    "kd_tree",
    "lattice_design",
    "markov_bound",
    "mu_prefix",
    "posterior_oracle",
    "sample_survival",
    "target_rate_check",
]


def kd_tree(x, rounds):
    """k-d partition of the design `x` after `rounds` passes over the coordinates."""
    return _json.loads(_core.kd_tree(x, rounds))


def kd_prior_mass(x, rounds, schedule):
    """Exact log prior mass of the k-d tree and the lower bounds it is compared with."""
    return _json.loads(_core.kd_prior_mass(x, rounds, schedule))


def posterior_oracle(**kwargs):
    """Sampler frequencies against the enumerated single-tree posterior."""
    return _json.loads(_core.posterior_oracle(**kwargs))


def concentration(**kwargs):
    """Posterior error and tree-size exceedance over a grid of sample sizes."""
    return _json.loads(_core.concentration(**kwargs))
