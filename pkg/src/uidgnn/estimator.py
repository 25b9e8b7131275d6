"""scikit-learn style wrapper around the RNF GraphConv model and its training regimes."""

from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .config import rng_for
from .graph import Graph
from .model import ModelConfig, augment_features, embed_batch, readout_batch
from .training import TrainConfig, train


def check_graphs(X) -> list[Graph]:
    """Return ``X`` as a non-empty list of :class:`Graph`, or raise ``TypeError``/``ValueError``."""
    if isinstance(X, Graph):
        X = [X]
    try:
        graphs = list(X)
    except TypeError as exc:
        raise TypeError("X must be a sequence of Graph objects") from exc
    if not graphs:
        raise ValueError("X is empty")
    for i, g in enumerate(graphs):
        if not isinstance(g, Graph):
            raise TypeError(f"X[{i}] is {type(g).__name__}, expected Graph")
    return graphs


def check_node_labels(graphs: Sequence[Graph], y) -> list[np.ndarray]:
    """One binary label vector of length ``g.n`` per graph."""
    if len(y) != len(graphs):
        raise ValueError(f"got {len(y)} label vectors for {len(graphs)} graphs")
    out = []
    for i, (g, labels) in enumerate(zip(graphs, y)):
        arr = np.asarray(labels).astype(np.int64).reshape(-1)
        if arr.shape != (g.n,):
            raise ValueError(f"y[{i}] has {arr.size} entries, graph has {g.n} nodes")
        if arr.size and (arr.min() < 0 or arr.max() > 1):
            raise ValueError(f"y[{i}] must be binary")
        out.append(arr)
    return out


def check_graph_labels(graphs: Sequence[Graph], y) -> np.ndarray:
    arr = np.asarray(y).astype(np.int64).reshape(-1)
    if arr.shape != (len(graphs),):
        raise ValueError(f"got {arr.size} labels for {len(graphs)} graphs")
    if arr.min() < 0 or arr.max() > 1:
        raise ValueError("graph labels must be binary")
    return arr


class RNFGraphClassifier(ClassifierMixin, BaseEstimator):
    """Binary node or graph classifier trained with constant features, RNI or SIRI.

    ``X`` is a sequence of graphs. For ``task="node-binary"`` the target is one
    label vector per graph and :meth:`predict` returns one vector per graph;
    for ``task="graph-binary"`` it is one label per graph.
    """

    def __init__(
        self,
        mode: str = "siri",
        task: str = "node-binary",
        layers: int = 6,
        hidden_dim: int = 64,
        rnf_dim: int = 64,
        epochs: int = 100,
        lr: float = 1e-3,
        k: int = 1,
        contrastive_weight: float = 1.0,
        init_gain: float = 1.0,
        n_draws: int = 1,
        random_state: int = 0,
    ):
        self.mode = mode
        self.task = task
        self.layers = layers
        self.hidden_dim = hidden_dim
        self.rnf_dim = rnf_dim
        self.epochs = epochs
        self.lr = lr
        self.k = k
        self.contrastive_weight = contrastive_weight
        self.init_gain = init_gain
        self.n_draws = n_draws
        self.random_state = random_state

    def _configs(self, input_dim: int) -> tuple[ModelConfig, TrainConfig]:
        if self.task not in ("node-binary", "graph-binary"):
            raise ValueError("task must be 'node-binary' or 'graph-binary'")
        model_config = ModelConfig(
            layers=self.layers,
            hidden_dim=self.hidden_dim,
            rnf_dim=self.rnf_dim,
            input_dim=input_dim,
            out_dim=2,
            readout="node" if self.task == "node-binary" else "graph-sum-mlp",
            init_gain=self.init_gain,
        )
        train_config = TrainConfig(
            mode=self.mode,
            k=self.k,
            epochs=self.epochs,
            lr=self.lr,
            seed=self.random_state,
            task=self.task,
            contrastive_weight=self.contrastive_weight,
        )
        return model_config, train_config

    def fit(self, X, y):
        graphs = check_graphs(X)
        dims = {g.feature_dim or 1 for g in graphs}  # featureless graphs get a ones column
        if len(dims) != 1:
            raise ValueError(f"graphs disagree on feature dimension: {sorted(dims)}")
        if self.task == "node-binary":
            labels = check_node_labels(graphs, y)
        else:
            labels = list(check_graph_labels(graphs, y))
        self.model_config_, self.train_config_ = self._configs(dims.pop())
        self.params_, self.history_ = train(list(zip(graphs, labels)), [], self.train_config_, self.model_config_)
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = self.model_config_.input_dim
        return self

    def _logits(self, graphs: Sequence[Graph]) -> list[np.ndarray]:
        cfg = self.model_config_
        rng = rng_for(self.random_state, "estimator-predict")
        out = []
        for g in graphs:
            if (g.feature_dim or 1) != self.n_features_in_:
                raise ValueError(f"graph has {g.feature_dim or 1} features, model expects {self.n_features_in_}")
            if self.mode == "constant" or cfg.rnf_dim == 0:
                stack = augment_features(g, None, cfg.rnf_dim)[None]
            else:
                stack = np.stack([augment_features(g, cfg.rnf.sample(g.n, rng)) for _ in range(self.n_draws)])
            out.append(readout_batch(self.params_, embed_batch(self.params_, g, stack, cfg), cfg).mean(axis=0))
        return out

    def predict_proba(self, X):
        check_is_fitted(self, "params_")
        probs = []
        for z in self._logits(check_graphs(X)):
            e = np.exp(z - z.max(axis=-1, keepdims=True))
            probs.append(e / e.sum(axis=-1, keepdims=True))
        if self.task == "graph-binary":
            return np.vstack(probs)
        return probs

    def predict(self, X):
        proba = self.predict_proba(X)
        if self.task == "graph-binary":
            return np.argmax(proba, axis=1)
        return [np.argmax(p, axis=1) for p in proba]

    def score(self, X, y, sample_weight=None) -> float:
        """Micro-averaged accuracy (over nodes for node tasks)."""
        graphs = check_graphs(X)
        pred = self.predict(graphs)
        if self.task == "graph-binary":
            return float(np.mean(pred == check_graph_labels(graphs, y)))
        truth = check_node_labels(graphs, y)
        return float(np.mean(np.concatenate(pred) == np.concatenate(truth)))
