"""Python bindings for the raftlab C++ core.

Report-producing functions return parsed JSON (dicts); array inputs are
2-d float64 numpy arrays.
"""

import json as _json

from . import _core
from ._core import (
    RaftlabError,
    align_loss,
    cross_model_loss,
    make_blobs,
    uniform_loss,
)

__version__ = _core.__version__


def _dumps(config):
    if config is None:
        return "{}"
    return config if isinstance(config, str) else _json.dumps(config)


def resolve_config(config=None):
    return _json.loads(_core.resolve_config(_dumps(config)))


def train(config=None, out_dir=None):
    """Run training; returns (metrics records, checkpoint paths, parameter checksum)."""
    lines, checkpoints, checksum = _core.train(_dumps(config), out_dir)
    return [_json.loads(line) for line in lines], checkpoints, checksum


def evaluate(checkpoint, config=None):
    return _json.loads(_core.evaluate(str(checkpoint), _dumps(config)))


def upper_bound_sweep(trials=1000, symmetrize=True, seed=0):
    return _json.loads(_core.upper_bound_sweep(trials, symmetrize, seed))


def gradient_correspondence(trials=100, seed=0):
    return _json.loads(_core.gradient_correspondence(trials, seed))


def trajectory_correspondence(steps=200, predictor="linear", optimizer="sgd", seed=0):
    return _json.loads(_core.trajectory_correspondence(steps, predictor, optimizer, seed))


def sylvester_null_space(w, a, b, pivot_tol=1e-10):
    return _json.loads(_core.sylvester_null_space(w, a, b, pivot_tol))


def tangential_trick(trials=100, seed=0):
    return _json.loads(_core.tangential_trick(trials, seed))
