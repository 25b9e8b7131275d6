"""GraphConv message passing with random node identifiers (RNF) appended to the input."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Mapping

import numpy as np

from . import autodiff as ad
from .graph import Graph, ParameterError

READOUTS = ("node", "graph-sum-mlp")
DISTRIBUTIONS = ("standard-normal", "uniform-01")


@dataclass(frozen=True)
class ModelConfig:
    layers: int = 6
    hidden_dim: int = 64
    rnf_dim: int = 64
    input_dim: int = 1
    out_dim: int = 2
    readout: str = "node"
    activation: str = "relu"
    distribution: str = "standard-normal"
    init_gain: float = 1.0  # multiplies the Glorot bound

    def __post_init__(self):
        for name in ("layers", "hidden_dim", "input_dim", "out_dim"):
            if getattr(self, name) < 1:
                raise ParameterError(name, "must be >= 1")
        if self.rnf_dim < 0:
            raise ParameterError("rnf_dim", "must be >= 0")
        if self.readout not in READOUTS:
            raise ParameterError("readout", f"expected one of {READOUTS}")
        if self.activation != "relu":
            raise ParameterError("activation", "only relu is supported")
        if self.distribution not in DISTRIBUTIONS:
            raise ParameterError("distribution", f"expected one of {DISTRIBUTIONS}")
        if not self.init_gain > 0:
            raise ParameterError("init_gain", "must be > 0")

    @property
    def in_dim(self) -> int:
        return self.input_dim + self.rnf_dim

    @property
    def rnf(self) -> "RnfSpec":
        return RnfSpec(self.rnf_dim, self.distribution)

    def to_text(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in asdict(self).items())

    @classmethod
    def from_mapping(cls, values: Mapping[str, str]) -> "ModelConfig":
        known = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in known:
                raise ParameterError(key, "unknown model setting")
            if key in ("readout", "activation", "distribution"):
                kwargs[key] = raw
            elif key == "init_gain":
                kwargs[key] = float(raw)
            else:
                kwargs[key] = int(raw)
        return cls(**kwargs)


ModelParams = dict  # name -> 2-D float64 array


@dataclass(frozen=True)
class RnfSpec:
    r: int
    distribution: str = "standard-normal"

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.r < 0:
            raise ParameterError("r", "must be >= 0")
        if self.distribution == "standard-normal":
            return rng.standard_normal((n, self.r))
        if self.distribution == "uniform-01":
            return rng.random((n, self.r))
        raise ParameterError("distribution", f"expected one of {DISTRIBUTIONS}")


@dataclass
class ForwardResult:
    embeddings: ad.Tensor  # final GNN layer, n x hidden_dim
    logits: ad.Tensor  # n x out_dim (node) or 1 x out_dim (graph)
    pooled: ad.Tensor | None = None


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, gain: float = 1.0) -> np.ndarray:
    a = gain * np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out))


def init_params(config: ModelConfig, seed: int) -> ModelParams:
    """Glorot-uniform weights (bound scaled by ``config.init_gain``), zero biases; deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    gain = config.init_gain
    d = config.hidden_dim
    params: ModelParams = {}
    d_in = config.in_dim
    for layer in range(config.layers):
        params[f"conv{layer}.W_self"] = _glorot(rng, d_in, d, gain)
        params[f"conv{layer}.W_neigh"] = _glorot(rng, d_in, d, gain)
        params[f"conv{layer}.bias"] = np.zeros((1, d))
        d_in = d
    if config.readout == "node":
        params["head.W"] = _glorot(rng, d, config.out_dim, gain)
        params["head.b"] = np.zeros((1, config.out_dim))
    else:
        for i, (a, b) in enumerate([(d, d), (d, d), (d, config.out_dim)]):
            params[f"mlp{i}.W"] = _glorot(rng, a, b, gain)
            params[f"mlp{i}.b"] = np.zeros((1, b))
    return params


def base_features(g: Graph) -> np.ndarray:
    """Input features, or the all-ones column when the graph carries none."""
    return np.ones((g.n, 1)) if g.features is None else np.asarray(g.features)


def augment_features(g: Graph, rnf: np.ndarray | None, rnf_dim: int = 0) -> np.ndarray:
    """``H0 = X ; R``. With ``rnf=None`` the RNF block is ``rnf_dim`` zero columns."""
    x = base_features(g)
    if rnf is None:
        return x if rnf_dim == 0 else np.concatenate([x, np.zeros((g.n, rnf_dim))], axis=1)
    rnf = np.asarray(rnf, dtype=np.float64)
    if rnf.ndim != 2 or rnf.shape[0] != g.n:
        raise ad.DimensionError("augment_features", f"RNF needs {g.n} rows, got shape {rnf.shape}")
    if rnf.shape[1] == 0:
        return x
    return np.concatenate([x, rnf], axis=1)


def as_constants(params: Mapping[str, np.ndarray]) -> dict[str, ad.Tensor]:
    return {k: ad.Tensor(v) for k, v in params.items()}


def check_params(params: Mapping[str, np.ndarray], config: ModelConfig) -> None:
    expected = init_shapes(config)
    for name, shape in expected.items():
        if name not in params:
            raise ParameterError(name, "missing from parameter set")
        if tuple(np.shape(params[name])) != shape:
            raise ParameterError(name, f"expected shape {shape}, got {np.shape(params[name])}")


def init_shapes(config: ModelConfig) -> dict[str, tuple[int, int]]:
    d, shapes, d_in = config.hidden_dim, {}, config.in_dim
    for layer in range(config.layers):
        shapes[f"conv{layer}.W_self"] = (d_in, d)
        shapes[f"conv{layer}.W_neigh"] = (d_in, d)
        shapes[f"conv{layer}.bias"] = (1, d)
        d_in = d
    if config.readout == "node":
        shapes["head.W"], shapes["head.b"] = (d, config.out_dim), (1, config.out_dim)
    else:
        for i, (a, b) in enumerate([(d, d), (d, d), (d, config.out_dim)]):
            shapes[f"mlp{i}.W"], shapes[f"mlp{i}.b"] = (a, b), (1, b)
    return shapes


def forward(params: Mapping[str, ad.Tensor], g: Graph, h0, config: ModelConfig) -> ForwardResult:
    """Differentiable forward pass.

    Each layer computes ``relu(H W_self + (A H) W_neigh + b)`` where ``A H`` is
    the neighbor sum. Node readout applies the linear head per row; graph
    readout sum-pools the final layer and applies a 3-layer MLP.
    """
    h = h0 if isinstance(h0, ad.Tensor) else ad.tensor(h0)
    if h.shape != (g.n, config.in_dim):
        raise ad.DimensionError("forward", f"H0 must be ({g.n}, {config.in_dim}), got {h.shape}")
    adj = g.adjacency
    for layer in range(config.layers):
        self_part = ad.matmul(h, params[f"conv{layer}.W_self"])
        neigh_part = ad.matmul(ad.aggregate_neighbors(h, adj), params[f"conv{layer}.W_neigh"])
        h = ad.relu(ad.add_bias_row(ad.add(self_part, neigh_part), params[f"conv{layer}.bias"]))
    if config.readout == "node":
        logits = ad.add_bias_row(ad.matmul(h, params["head.W"]), params["head.b"])
        return ForwardResult(h, logits)
    pooled = ad.row_sum_pool(h)
    z = pooled
    for i in range(3):
        z = ad.add_bias_row(ad.matmul(z, params[f"mlp{i}.W"]), params[f"mlp{i}.b"])
        if i < 2:
            z = ad.relu(z)
    return ForwardResult(h, z, pooled)


# --------------------------------------------------------------------------- batched inference


def _neighbor_sum_batch(adj, h: np.ndarray) -> np.ndarray:
    """``A @ H`` for a stack ``h`` of shape ``(B, n, d)``."""
    b, n, d = h.shape
    flat = np.ascontiguousarray(h.transpose(1, 0, 2)).reshape(n, b * d)
    out = adj @ flat
    return out.reshape(adj.shape[0], b, d).transpose(1, 0, 2)


def embed_batch(params: Mapping[str, np.ndarray], g: Graph, h0: np.ndarray, config: ModelConfig) -> np.ndarray:
    """Final-layer embeddings for a stack of inputs ``h0`` of shape ``(B, n, d0 + r)``."""
    h = np.asarray(h0, dtype=np.float64)
    if h.ndim == 2:
        h = h[None]
    adj = g.adjacency
    for layer in range(config.layers):
        z = h @ params[f"conv{layer}.W_self"] + _neighbor_sum_batch(adj, h) @ params[f"conv{layer}.W_neigh"]
        h = np.maximum(z + params[f"conv{layer}.bias"], 0.0)
    return h


def readout_batch(params: Mapping[str, np.ndarray], emb: np.ndarray, config: ModelConfig) -> np.ndarray:
    if config.readout == "node":
        return emb @ params["head.W"] + params["head.b"]
    z = emb.sum(axis=1)
    for i in range(3):
        z = z @ params[f"mlp{i}.W"] + params[f"mlp{i}.b"]
        if i < 2:
            z = np.maximum(z, 0.0)
    return z


def predict_batch(params, g: Graph, h0: np.ndarray, config: ModelConfig) -> np.ndarray:
    """Logits for a stack of inputs: ``(B, n, out)`` for node readout, ``(B, out)`` for graph."""
    return readout_batch(params, embed_batch(params, g, h0, config), config)


def save_config(config: ModelConfig, path) -> None:
    Path(path).write_text(config.to_text())


def load_config(path) -> ModelConfig:
    from .config import parse_key_values

    return ModelConfig.from_mapping(parse_key_values(Path(path).read_text(), path))
