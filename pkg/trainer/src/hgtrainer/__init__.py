"""Deterministic CPU trainers for heterogeneous node classification.

Consumes the dataset directories produced by the poisoning toolkit and
emits the surrogate signals and victim predictions its evaluation step
expects. All coupling is through files; nothing here imports that package.
"""

from .data import GraphData, load_graph_dir
from .errors import ConfigError, DataError, DivergenceError, TrainerError
from .train import MODEL_DEFAULTS, TrainResult, TrainRun, train

__all__ = [
    "ConfigError",
    "DataError",
    "DivergenceError",
    "GraphData",
    "MODEL_DEFAULTS",
    "TrainResult",
    "TrainRun",
    "TrainerError",
    "load_graph_dir",
    "train",
]

__version__ = "0.1.0"
