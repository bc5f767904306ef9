"""Python interface to the mlda C++ core.

Configs are plain dicts following the same JSON schema as the CLI.
"""

import json as _json

try:
    from . import _mlda
except ImportError:  # build tree: the extension sits outside the package
    import _mlda

assimilate = _mlda.assimilate
box_stats = _mlda.box_stats
etkf_analysis = _mlda.etkf_analysis
largest_lyapunov = _mlda.largest_lyapunov
lorenz_rhs = _mlda.lorenz_rhs
normalized_rms = _mlda.normalized_rms
simulate = _mlda.simulate
valid_time = _mlda.valid_time

SCHEMA_VERSION = 1

__all__ = [
    "SCHEMA_VERSION",
    "assimilate",
    "box_stats",
    "canonical_config",
    "etkf_analysis",
    "largest_lyapunov",
    "lorenz_rhs",
    "normalized_rms",
    "replica_forecasts",
    "run_experiment",
    "simulate",
    "sweep",
    "valid_time",
]


def _dump(config):
    cfg = dict(config)
    cfg.setdefault("schema_version", SCHEMA_VERSION)
    return _json.dumps(cfg)


def canonical_config(config):
    return _json.loads(_mlda.canonical_config(_dump(config)))


def run_experiment(config):
    """Runs every replica; returns the results document as a dict."""
    return _json.loads(_mlda.run_experiment(_dump(config)))


def sweep(config, parameter, values):
    return _json.loads(_mlda.sweep(_dump(config), parameter, list(values)))


def replica_forecasts(config, replica=0, rho=1.0):
    return _mlda.replica_forecasts(_dump(config), replica, rho)
