"""Empirical UID-invariance: how often resampling a node's identifier flips its prediction."""

from __future__ import annotations

import csv
import io
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .config import rng_for
from .graph import Graph
from .model import ModelConfig, augment_features, embed_batch, readout_batch


def _bfs_distances(g: Graph, source: int, limit: int) -> np.ndarray:
    dist = np.full(g.n, limit + 1, dtype=np.int64)
    dist[source] = 0
    queue = deque([source])
    while queue:
        u = queue.popleft()
        if dist[u] >= limit:
            continue
        for w in g.neighbors[u].tolist():
            if dist[w] > dist[u] + 1:
                dist[w] = dist[u] + 1
                queue.append(w)
    return dist


class NodeResampler:
    """Predictions at one node when only that node's input row varies.

    Rows farther than ``l`` hops from the node are unaffected at layer ``l``,
    and only rows within ``L - l`` hops can influence the node's output, so
    each layer is evaluated on that intersection and the rest is read from a
    reference pass.
    """

    def __init__(self, params, g: Graph, h0_ref: np.ndarray, config: ModelConfig):
        if config.readout != "node":
            raise ValueError("invariance ratios are defined for node-level readout")
        self.params, self.g, self.config = params, g, config
        self.h_ref = [np.asarray(h0_ref, dtype=np.float64)]
        adj = g.adjacency
        h = self.h_ref[0]
        for layer in range(config.layers):
            z = h @ params[f"conv{layer}.W_self"] + (adj @ h) @ params[f"conv{layer}.W_neigh"]
            h = np.maximum(z + params[f"conv{layer}.bias"], 0.0)
            self.h_ref.append(h)

    def predict(self, node: int, rows: np.ndarray) -> np.ndarray:
        """Hard predictions at ``node`` for each replacement input row in ``rows`` (B x d_in)."""
        L = self.config.layers
        dist = _bfs_distances(self.g, node, L + 1)
        adj = self.g.adjacency
        cur_idx = np.array([node])
        cur = np.asarray(rows, dtype=np.float64)[:, None, :]
        batch = cur.shape[0]
        for layer in range(L):
            radius = min(layer + 1, L - layer - 1)
            out_idx = np.flatnonzero(dist <= radius)
            sub = adj[out_idx]
            in_idx = np.union1d(out_idx, sub.indices)
            x = np.broadcast_to(self.h_ref[layer][in_idx], (batch, len(in_idx), cur.shape[2])).copy()
            pos = np.searchsorted(in_idx, cur_idx)
            x[:, pos] = cur
            a_sub = sub[:, in_idx]
            flat = np.ascontiguousarray(x.transpose(1, 0, 2)).reshape(len(in_idx), -1)
            neigh = (a_sub @ flat).reshape(len(out_idx), batch, -1).transpose(1, 0, 2)
            self_rows = x[:, np.searchsorted(in_idx, out_idx)]
            z = self_rows @ self.params[f"conv{layer}.W_self"] + neigh @ self.params[f"conv{layer}.W_neigh"]
            cur = np.maximum(z + self.params[f"conv{layer}.bias"], 0.0)
            cur_idx = out_idx
        logits = cur[:, 0, :] @ self.params["head.W"] + self.params["head.b"]
        return np.argmax(logits, axis=1)


def _rows_with_rnf(g: Graph, node: int, rnf: np.ndarray, config: ModelConfig, constant: bool) -> np.ndarray:
    x = np.ones(1) if g.features is None else np.asarray(g.features[node])
    if constant or config.rnf_dim == 0:
        rnf = np.zeros((rnf.shape[0], config.rnf_dim))
    return np.concatenate([np.broadcast_to(x, (rnf.shape[0], len(x))), rnf], axis=1)


def graph_invariance_ratios(
    params,
    g: Graph,
    T: int,
    seed: int,
    config: ModelConfig,
    mode: str = "siri",
    graph_id: int = 0,
    resample: str = "row",
    nodes: Sequence[int] | None = None,
) -> np.ndarray:
    """Per-node fraction of ``T`` identifier resamples that change the node's hard prediction.

    ``resample="row"`` redraws only the target node's RNF row against a fixed
    reference draw; ``resample="all"`` redraws the whole RNF matrix.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    constant = mode == "constant" or config.rnf_dim == 0
    spec = config.rnf
    ref_rnf = spec.sample(g.n, rng_for(seed, "inv-ref", graph_id))
    h0_ref = augment_features(g, None if constant else ref_rnf, config.rnf_dim)
    nodes = range(g.n) if nodes is None else nodes
    ratios = np.zeros(len(nodes))
    if resample == "all":
        ref_pred = np.argmax(readout_batch(params, embed_batch(params, g, h0_ref, config), config)[0], axis=-1)
        rng = rng_for(seed, "inv-resample-all", graph_id)
        flips = np.zeros(g.n)
        for start in range(0, T, 32):
            b = min(32, T - start)
            stack = np.stack([
                augment_features(g, None if constant else spec.sample(g.n, rng), config.rnf_dim) for _ in range(b)
            ])
            pred = np.argmax(readout_batch(params, embed_batch(params, g, stack, config), config), axis=-1)
            flips += (pred != ref_pred).sum(axis=0)
        return (flips / T)[list(nodes)]
    if resample != "row":
        raise ValueError("resample must be 'row' or 'all'")
    resampler = NodeResampler(params, g, h0_ref, config)
    for i, v in enumerate(nodes):
        ref = resampler.predict(v, h0_ref[v][None, :])[0]
        fresh = spec.sample(T, rng_for(seed, "inv-resample", graph_id, v))
        pred = resampler.predict(v, _rows_with_rnf(g, v, fresh, config, constant))
        ratios[i] = np.mean(pred != ref)
    return ratios


def node_invariance_ratio(params, g: Graph, node: int, T: int, seed: int, config: ModelConfig, mode: str = "siri", resample: str = "row") -> float:
    if not 0 <= node < g.n:
        raise ValueError(f"node must lie in [0, {g.n})")
    return float(graph_invariance_ratios(params, g, T, seed, config, mode, resample=resample, nodes=[node])[0])


@dataclass
class InvarianceReport:
    T: int
    seeds: tuple[int, ...]
    node_ratios: dict[str, dict[str, np.ndarray]] = field(default_factory=dict)  # set -> node key -> per-seed ratios
    set_means: dict[str, np.ndarray] = field(default_factory=dict)  # set -> per-seed mean

    def mean(self, name: str) -> float:
        return float(np.mean(self.set_means[name]))

    def std(self, name: str) -> float:
        return float(np.std(self.set_means[name]))

    def summary_lines(self) -> list[str]:
        lines = []
        for i, s in enumerate(self.seeds):
            parts = [f"{name}={self.set_means[name][i]:.4f}" for name in self.set_means]
            lines.append(f"seed={s} T={self.T} " + " ".join(parts))
        return lines

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["set", "node", "ratio"])
        for name, nodes in self.node_ratios.items():
            for key, values in nodes.items():
                writer.writerow([name, key, format(float(np.mean(values)), ".10g")])
        for name in self.set_means:
            writer.writerow([name, "mean", format(self.mean(name), ".10g")])
        return buf.getvalue()


def set_invariance_report(
    params,
    train_graphs: Sequence[Graph],
    test_graphs: Sequence[Graph],
    T: int,
    seeds: Sequence[int],
    config: ModelConfig,
    mode: str = "siri",
    resample: str = "row",
) -> InvarianceReport:
    """Mean node ratio per set and seed; ``mean``/``std`` aggregate over seeds."""
    if T < 1:
        raise ValueError("T must be >= 1")
    report = InvarianceReport(T, tuple(seeds))
    for name, graphs in (("train", train_graphs), ("test", test_graphs)):
        per_node: dict[str, list[float]] = {}
        means = []
        for seed in seeds:
            all_ratios = []
            for gi, g in enumerate(graphs):
                r = graph_invariance_ratios(params, g, T, seed, config, mode, graph_id=gi, resample=resample)
                for v, x in enumerate(r.tolist()):
                    per_node.setdefault(f"{gi}:{v}", []).append(x)
                all_ratios.append(r)
            means.append(float(np.mean(np.concatenate(all_ratios))) if all_ratios else 0.0)
        report.node_ratios[name] = {k: np.array(v) for k, v in per_node.items()}
        report.set_means[name] = np.array(means)
    return report
