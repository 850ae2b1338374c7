"""Transformer reconstruction with an RBF similarity layer for time-series
anomaly detection. Thin wrappers over the compiled ``_restad`` module that
accept and return plain dicts where the core speaks JSON."""

import json

import numpy as np

from . import _restad
from ._restad import (
    ConfigError,
    ContractError,
    DimensionError,
    InitError,
    Model,
    NumericError,
    ParseError,
    RestadError,
    UndefinedMetricError,
    auc_pr,
    auc_roc,
    composite_score,
    load_csv,
    num_threads,
    quantile_threshold,
    set_num_threads,
    vus_pr,
    vus_roc,
    windowize,
)

__all__ = [
    "ConfigError",
    "ContractError",
    "DimensionError",
    "InitError",
    "Model",
    "NumericError",
    "ParseError",
    "RestadError",
    "UndefinedMetricError",
    "ablate",
    "auc_pr",
    "auc_roc",
    "composite_score",
    "default_synth_spec",
    "evaluate",
    "evaluate_checkpoint",
    "generate_synthetic",
    "load_csv",
    "model",
    "num_threads",
    "quantile_threshold",
    "set_num_threads",
    "synth",
    "train",
    "vus_pr",
    "vus_roc",
    "windowize",
]


def default_synth_spec(seed=0, test_length=5000, n_spikes=10, n_drifts=10):
    return json.loads(_restad.default_synth_spec(seed, test_length, n_spikes, n_drifts))


def generate_synthetic(spec=None):
    """Returns dict(name, train [T, d], test [T, d], test_labels [T])."""
    return _restad.generate_synthetic(json.dumps(spec if spec is not None else default_synth_spec()))


def model(config=None):
    """New untrained model from a model-config dict (missing keys keep defaults)."""
    return Model(json.dumps(config or {}))


def evaluate(scores, labels, anomaly_ratio=0.01, max_buffer=4):
    """F1 at the quantile threshold plus AUC-ROC, AUC-PR, VUS-ROC and VUS-PR."""
    return json.loads(_restad.evaluate(np.asarray(scores, float), np.asarray(labels, np.int32), anomaly_ratio, max_buffer))


def synth(spec, out_dir):
    return _restad.synth(json.dumps(spec), str(out_dir))


def train(config):
    """Runs a training job from a run-config dict; returns the files written."""
    return _restad.train(json.dumps(config))


def evaluate_checkpoint(checkpoint, data, criteria=("r_times_s",), anomaly_ratio=0.01, max_buffer=4, out_dir="restad_eval"):
    """Scores a saved checkpoint on ``data`` ({"path": ...} or {"synth": spec})."""
    return _restad.eval(str(checkpoint), json.dumps(data), list(criteria), anomaly_ratio, max_buffer, str(out_dir))


def ablate(grid, out_csv):
    return _restad.ablate(json.dumps(grid), str(out_csv))
