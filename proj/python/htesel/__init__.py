"""Select the best CATE estimator among candidates with familywise error control."""

import json

import numpy as np

from ._core import (
    ConfigError,
    DataError,
    FitError,
    ParseError,
    SelectionError,
    exp_weights,
    generate_toy,
    noisy_candidates,
    score_tensor,
)
from . import _core

__all__ = [
    "ConfigError",
    "DataError",
    "FitError",
    "ParseError",
    "SelectionError",
    "exp_weights",
    "generate_toy",
    "noisy_candidates",
    "score_tensor",
    "select",
    "run_experiment",
]


def select(x, t, y, preds, selector="proposed", alpha=0.10, lam=None, inner_folds=5,
           bootstrap_draws=10000, seed=0):
    """Run one selector. `preds` is (n, p). Returns the decision as a dict."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    out = _core.select(x, np.asarray(t, dtype=np.int32), np.asarray(y, dtype=float),
                       np.asarray(preds, dtype=float), selector, alpha, lam, inner_folds,
                       bootstrap_draws, seed)
    return json.loads(out)


def run_experiment(config):
    """Monte Carlo experiment from a config dict (same schema as the CLI)."""
    return json.loads(_core.run_experiment(json.dumps(config)))
