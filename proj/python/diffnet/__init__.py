"""Python bindings for the diffnet diffusion-learning library.

The experiment entry points take a configuration as a dict (or JSON string)
with the same schema as the command-line tool.
"""

import json as _json

from . import _diffnet
from ._diffnet import (
    CombinationPolicy,
    ConvergenceError,
    DivergenceError,
    Graph,
    InvalidArgument,
    LossModel,
    NNSaddleLoss,
    NoiseProfile,
    QuadraticLoss,
    asymmetric_mh_policy,
    build_graph,
    check_gradient,
    check_hessian,
    min_eigenvalue,
    mixing_rate,
    perron_vector,
    policy_objective,
    uniform_policy,
    validate_policy,
)


def _text(config):
    return config if isinstance(config, str) else _json.dumps(config)


def run(config):
    return _diffnet.run(_text(config))


def policy(config):
    return _diffnet.policy(_text(config))


def sweep(config):
    return _diffnet.sweep(_text(config))


def check(config=None):
    return _diffnet.check(_text(config if config is not None else {}))


def config_hash(config):
    return _diffnet.config_hash(_text(config))
