"""Verification suites shared by the ``grad-check`` and ``oracle-check`` commands and the tests."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import autodiff as ad
from .graph import (
    Graph,
    are_isomorphic,
    barabasi_albert,
    cycle_graph,
    disjoint_union,
    rook_graph,
    shrikhande_graph,
    wl_refine_joint,
)
from .model import ModelConfig, augment_features, forward, init_params
from .oracles import matching_oracle_relabel, triangle_net_forward, triangle_net_trace
from .training import contrastive_loss, task_loss

GRAD_TOLERANCE = 1e-4


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""
    counterexample: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


# --------------------------------------------------------------------------- gradients


def _const(x: np.ndarray) -> ad.Tensor:
    return ad.Tensor(np.asarray(x, dtype=np.float64))


def _project(out: ad.Tensor, rng: np.random.Generator) -> Callable[[ad.Tensor], ad.Tensor]:
    """Fixed random bilinear form ``u^T X v`` turning a matrix output into a scalar."""
    u = rng.standard_normal((1, out.shape[0]))
    v = rng.standard_normal((out.shape[1], 1))
    return lambda t: ad.matmul(ad.matmul(_const(u), t), _const(v))


def _away_from_zero(rng: np.random.Generator, shape) -> np.ndarray:
    x = rng.standard_normal(shape)
    return np.where(np.abs(x) < 0.05, np.sign(x + 1e-12) * 0.05, x)


def _random_adjacency(rng: np.random.Generator, n: int):
    edges = [(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < 0.4]
    return Graph(n, edges).adjacency


def _primitive_cases(rng: np.random.Generator):
    """Yield ``(name, f, params)`` for one random shape of every primitive."""
    r, c, k = (int(x) for x in rng.integers(1, 6, size=3))
    yield "matmul", lambda p: ad.matmul(p["a"], p["b"]), {"a": rng.standard_normal((r, c)), "b": rng.standard_normal((c, k))}
    yield "add", lambda p: ad.add(p["a"], p["b"]), {"a": rng.standard_normal((r, c)), "b": rng.standard_normal((r, c))}
    yield "sub", lambda p: ad.sub(p["a"], p["b"]), {"a": rng.standard_normal((r, c)), "b": rng.standard_normal((r, c))}
    s = float(rng.normal())
    yield "scale", lambda p: ad.scale(p["a"], s), {"a": rng.standard_normal((r, c))}
    yield "add_bias_row", lambda p: ad.add_bias_row(p["a"], p["b"]), {
        "a": rng.standard_normal((r, c)),
        "b": rng.standard_normal((1, c)),
    }
    yield "concat_cols", lambda p: ad.concat_cols(p["a"], p["b"]), {
        "a": rng.standard_normal((r, c)),
        "b": rng.standard_normal((r, k)),
    }
    yield "relu", lambda p: ad.relu(p["a"]), {"a": _away_from_zero(rng, (r, c))}
    yield "row_sum_pool", lambda p: ad.row_sum_pool(p["a"]), {"a": rng.standard_normal((r, c))}
    seg = rng.integers(0, k, size=r)
    yield "row_sum_pool_segments", lambda p: ad.row_sum_pool(p["a"], seg, k), {"a": rng.standard_normal((r, c))}
    adj = _random_adjacency(rng, r)
    yield "aggregate_neighbors", lambda p: ad.aggregate_neighbors(p["a"], adj), {"a": rng.standard_normal((r, c))}
    yield "scalar_sum", lambda p: ad.scalar_sum(p["a"]), {"a": rng.standard_normal((r, c))}
    yield "mse", lambda p: ad.mse(p["a"], p["b"]), {"a": rng.standard_normal((r, c)), "b": rng.standard_normal((r, c))}
    labels = rng.integers(0, c + 1, size=r)
    yield "softmax_cross_entropy", lambda p: ad.softmax_cross_entropy(p["a"], labels), {
        "a": rng.standard_normal((r, c + 1))
    }
    yield "cosine_similarity", lambda p: ad.cosine_similarity(p["a"], p["b"]), {
        "a": rng.standard_normal((1, c + 1)),
        "b": rng.standard_normal((1, c + 1)),
    }


def primitive_gradient_errors(shapes: int = 20, seed: int = 0) -> dict[str, float]:
    """Worst grad_check error per primitive over ``shapes`` random instances."""
    rng = np.random.default_rng(seed)
    worst: dict[str, float] = {}
    for _ in range(shapes):
        for name, f, params in _primitive_cases(rng):
            probe = f({key: _const(v) for key, v in params.items()})
            proj = _project(probe, rng) if probe.shape != (1, 1) else (lambda t: t)
            err = ad.grad_check(lambda p, f=f, proj=proj: proj(f(p)), params)
            worst[name] = max(worst.get(name, 0.0), err)
    return worst


def gnn_gradient_error(seed: int = 0, layers: int = 6) -> float:
    """grad_check of the full SIRI objective (task + contrastive) of a GNN on a 5-node graph."""
    rng = np.random.default_rng(seed)
    g = Graph(5, [(0, 1), (1, 2), (2, 0), (2, 3), (3, 4)])
    config = ModelConfig(layers=layers, hidden_dim=4, rnf_dim=3)
    params = init_params(config, seed)
    h1 = augment_features(g, rng.standard_normal((5, 3)))
    h2 = augment_features(g, rng.standard_normal((5, 3)))
    labels = [1, 1, 1, 0, 0]

    def objective(p):
        o1 = forward(p, g, h1, config)
        o2 = forward(p, g, h2, config)
        return ad.add(task_loss(o1.logits, labels), contrastive_loss(o1.embeddings, o2.embeddings))

    return ad.grad_check(objective, params)


def gradient_suite(shapes: int = 20, seed: int = 0, tol: float = GRAD_TOLERANCE) -> list[CheckResult]:
    results = [
        CheckResult(f"grad:{name}", err < tol, f"max relative error {err:.3e} over {shapes} shapes")
        for name, err in primitive_gradient_errors(shapes, seed).items()
    ]
    err = gnn_gradient_error(seed)
    results.append(CheckResult("grad:gnn-6-layer", err < tol, f"max relative error {err:.3e}"))
    return results


# --------------------------------------------------------------------------- symbolic oracles


def brute_force_triangles(g: Graph) -> np.ndarray:
    """Triangle membership by testing every node triple."""
    out = np.zeros(g.n, dtype=bool)
    for a, b, c in itertools.combinations(range(g.n), 3):
        if g.has_edge(a, b) and g.has_edge(b, c) and g.has_edge(a, c):
            out[[a, b, c]] = True
    return out


def all_graphs(n: int):
    pairs = list(itertools.combinations(range(n), 2))
    for mask in range(1 << len(pairs)):
        yield Graph(n, [pairs[i] for i in range(len(pairs)) if mask >> i & 1])


def _random_uids(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.permutation(10 * n + 10)[:n] + 1


def triangle_oracle_check(max_n: int = 6, ba_graphs: int = 50, draws: int = 10, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    count = 0
    for n in range(1, max_n + 1):
        for g in all_graphs(n):
            uids = _random_uids(rng, n)
            got = triangle_net_forward(g, uids)
            if not np.array_equal(got, brute_force_triangles(g)):
                return CheckResult("oracle:triangle-net", False, f"mismatch on n={n}", {"edges": g.edges.tolist(), "uids": uids.tolist()})
            count += 1
    for i in range(ba_graphs):
        n = int(rng.integers(5, 101))
        g = barabasi_albert(n, int(rng.integers(1, min(4, n - 1) + 1)), int(rng.integers(1 << 30)))
        truth = brute_force_triangles(g)
        for _ in range(draws):
            uids = _random_uids(rng, n)
            if not np.array_equal(triangle_net_forward(g, uids), truth):
                return CheckResult("oracle:triangle-net", False, f"mismatch on BA graph {i}", {"edges": g.edges.tolist(), "uids": uids.tolist()})
    return CheckResult("oracle:triangle-net", True, f"{count} exhaustive graphs (n<={max_n}), {ba_graphs} BA graphs x {draws} UID draws")


def relabel_oracle_check(graphs: int = 20, draws: int = 200, seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    invariant = non_invariant = True
    failure: dict = {}
    for i in range(graphs):
        n = int(rng.integers(4, 31))
        g = barabasi_albert(n, int(rng.integers(1, 3)), int(rng.integers(1 << 30)))
        ref = matching_oracle_relabel(g, _random_uids(rng, n))
        states = set()
        for _ in range(draws):
            uids = _random_uids(rng, n)
            out = matching_oracle_relabel(g, uids)
            if not np.array_equal(out, ref) and invariant:
                invariant = False
                failure = {"edges": g.edges.tolist(), "uids": uids.tolist()}
            states.add(tuple(triangle_net_trace(g, uids).layer2))
        if len(states) < 2:
            non_invariant = False
            failure = failure or {"edges": g.edges.tolist()}
    return [
        CheckResult("oracle:relabel-invariant", invariant, f"{graphs} graphs x {draws} UID draws", failure if not invariant else {}),
        CheckResult(
            "oracle:layer2-non-invariant",
            non_invariant,
            "layer-2 states of the triangle network change across UID draws",
            failure if not non_invariant else {},
        ),
    ]


def wl_oracle_check(permuted: int = 50, seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    results = []
    for name, g1, g2 in (
        ("C6 vs C3+C3", cycle_graph(6), disjoint_union(cycle_graph(3), cycle_graph(3))),
        ("shrikhande vs rook-4x4", shrikhande_graph(), rook_graph()),
    ):
        c1, c2 = wl_refine_joint([g1, g2])
        same = c1.histogram == c2.histogram
        iso = are_isomorphic(g1, g2)
        results.append(CheckResult(f"oracle:wl {name}", same and not iso, f"equal histograms={same} isomorphic={iso}"))
    bad = None
    for _ in range(permuted):
        n = int(rng.integers(3, 31))
        g = barabasi_albert(n, int(rng.integers(1, min(3, n - 1) + 1)), int(rng.integers(1 << 30)))
        perm = rng.permutation(n)
        if not are_isomorphic(g, g.permute(perm)):
            bad = {"edges": g.edges.tolist(), "perm": perm.tolist()}
            break
    results.append(CheckResult("oracle:isomorphic permuted copies", bad is None, f"{permuted} random (G, pi.G) pairs", bad or {}))
    return results


def oracle_suite(max_n: int = 6, seed: int = 0) -> list[CheckResult]:
    return [triangle_oracle_check(max_n, seed=seed), *relabel_oracle_check(seed=seed), *wl_oracle_check(seed=seed)]
