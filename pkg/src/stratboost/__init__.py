"""Out-of-core boosting with early-stopped weak-rule search and a
weight-stratified disk sampler."""

__version__ = "0.1.0"

from .booster import BoostConfig, TrainResult, train
from .core import effective_sample_size, empirical_edge, example_weight, rule_weight
from .weak_learner import Ensemble, SplitRule

__all__ = [
    "BoostConfig",
    "Ensemble",
    "SplitRule",
    "TrainResult",
    "effective_sample_size",
    "empirical_edge",
    "example_weight",
    "rule_weight",
    "train",
]
