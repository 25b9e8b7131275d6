"""GraphConv networks with random node features: constant, RNI and SIRI training.

Everything is built on numpy/scipy with a small reverse-mode autodiff engine.
Around it sit the invariance-ratio and pair-separation evaluations and
symbolic oracles for the UID-based constructions.
"""

from .estimator import RNFGraphClassifier
from .graph import Graph, ParameterError, barabasi_albert, label_triangles
from .model import ModelConfig, forward, init_params
from .training import TrainConfig, train

__all__ = [
    "Graph",
    "ModelConfig",
    "ParameterError",
    "RNFGraphClassifier",
    "TrainConfig",
    "barabasi_albert",
    "forward",
    "init_params",
    "label_triangles",
    "train",
]
__version__ = "0.1.0"
