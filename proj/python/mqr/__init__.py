"""Multivariate quantile regions with conformal calibration."""

import json

from ._core import (
    CalibratedRule,
    CalibrationSetTooSmall,
    DegenerateComplement,
    DegenerateRegion,
    Grid,
    SpecError,
    build_grid,
    calibrate,
    dqr_coverage_monte_carlo,
    dqr_theoretical_coverage,
    gamma_init,
    gen_synthetic,
    naive_levels,
)
from . import _core

__all__ = [
    "CalibratedRule",
    "CalibrationSetTooSmall",
    "DegenerateComplement",
    "DegenerateRegion",
    "Grid",
    "SpecError",
    "build_grid",
    "calibrate",
    "config_hash",
    "dqr_coverage_monte_carlo",
    "dqr_theoretical_coverage",
    "gamma_init",
    "gen_synthetic",
    "naive_levels",
    "run_experiment",
]


def _as_json(config):
    return config if isinstance(config, str) else json.dumps(config)


def config_hash(config):
    """Hash of an experiment config (dict or JSON string), ignoring seeds, methods and out."""
    return _core.config_hash(_as_json(config))


def run_experiment(config, resume=False):
    """Runs an experiment config (dict or JSON string) and returns one dict per (seed, method)."""
    return [json.loads(row) for row in _core.run_experiment(_as_json(config), resume)]
