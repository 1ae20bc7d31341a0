"""Python front end for the mmlab C++ core.

Configs are plain dicts with the same schema as the CLI's JSON files.
"""

import json
import os

from . import _mmlab

__all__ = [
    "config_digest",
    "run_experiment",
    "simulate",
    "compute_regret",
    "validate",
    "settle",
    "observe",
    "grid_resolution",
    "default_exploration_rounds",
]

settle = _mmlab.settle
observe = _mmlab.observe
grid_resolution = _mmlab.grid_resolution
default_exploration_rounds = _mmlab.default_exploration_rounds


def _text(config):
    return config if isinstance(config, str) else json.dumps(config)


def config_digest(config, base_dir=""):
    return _mmlab.config_digest(_text(config), os.fspath(base_dir))


def run_experiment(config, base_dir="", jobs=1):
    """Runs every cell and returns {"config_digest", "cells": [...]}; no files are written."""
    return json.loads(_mmlab.run_experiment(_text(config), os.fspath(base_dir), jobs))


def simulate(config, policy_index=0, horizon=1000, seed=0, base_dir=""):
    """One run as a record dict (trace, checkpoints, diagnostics, ground truth)."""
    return json.loads(
        _mmlab.simulate(_text(config), os.fspath(base_dir), policy_index, horizon, seed)
    )


def compute_regret(record):
    return json.loads(_mmlab.compute_regret(_text(record)))


def validate(kind, config, base_dir="", jobs=1):
    return json.loads(_mmlab.validate(kind, _text(config), os.fspath(base_dir), jobs))
