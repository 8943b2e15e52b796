"""Multi-view data model, feature-permutation augmentation and two-layer network training."""

import json

from ._core import (
    Dataset,
    DistParams,
    Model,
    SamplingMode,
    TrainConfig,
    TrainResult,
    augment_dataset,
    gd_step,
    generate_dataset,
    gradient,
    init_weights,
    load_dataset,
    loss,
    psi,
    psi_prime,
    save_dataset,
    scores,
    train,
)
from . import _core


def check_ginit(model, dataset, sigma_0):
    """Initialization-regime report as a dict."""
    return json.loads(_core._check_ginit(model, dataset, sigma_0))


def test_error(model, params, n_test, seed):
    """Monte-Carlo test error with Wilson interval and per-view breakdown."""
    return json.loads(_core._test_error(model, params, n_test, seed))


def preset(kind):
    """Built-in scenario configuration as a dict."""
    return json.loads(_core._preset(kind))


def run_scenario(spec, seed=None):
    """Run one seed of a scenario. `spec` is a preset name or a dict of overrides on that preset."""
    if isinstance(spec, str):
        spec = {"scenario": spec}
    if seed is None:
        seed = spec.get("seeds", preset(spec["scenario"])["seeds"])[0]
    return json.loads(_core._run_scenario(json.dumps(spec), int(seed)))


__all__ = [
    "Dataset", "DistParams", "Model", "SamplingMode", "TrainConfig", "TrainResult",
    "augment_dataset", "check_ginit", "gd_step", "generate_dataset", "gradient", "init_weights",
    "load_dataset", "loss", "preset", "psi", "psi_prime", "run_scenario", "save_dataset", "scores",
    "test_error", "train",
]
