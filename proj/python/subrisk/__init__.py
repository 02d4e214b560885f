"""Subgroup risk measures (CVaR, EVaR) and PAC-Bayes certificates."""

import json as _json

from ._core import (
    SubriskError,
    bound_by_class,
    bound_per_example,
    kl_bernoulli,
    kl_inverse,
    kl_plus,
    oracle_check,
    oracle_risk_grid,
    risk,
    synth,
)
from ._core import run_experiment as _run_experiment


def run_experiment(config_text=""):
    """Run an experiment from config text and return the report as a dict."""
    return _json.loads(_run_experiment(config_text))


__all__ = [
    "SubriskError",
    "bound_by_class",
    "bound_per_example",
    "kl_bernoulli",
    "kl_inverse",
    "kl_plus",
    "oracle_check",
    "oracle_risk_grid",
    "risk",
    "run_experiment",
    "synth",
]
