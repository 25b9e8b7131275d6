"""Symbolic constructions: a UID-matching triangle detector and matching-oracle relabeling.

Both operate on exact identifier values rather than tensors. The triangle
network keeps identifier lists in its hidden states (so those states change
when identifiers are redrawn) while its output depends only on which
identifiers coincide.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence

import numpy as np

from .graph import Graph


class DuplicateUidError(ValueError):
    pass


def check_uids(g: Graph, uids: Sequence[Hashable]) -> list:
    values = list(np.asarray(uids).tolist()) if isinstance(uids, np.ndarray) else list(uids)
    if len(values) != g.n:
        raise ValueError(f"need {g.n} UIDs, got {len(values)}")
    if len(set(values)) != len(values):
        raise DuplicateUidError("UIDs must be pairwise distinct")
    return values


@dataclass(frozen=True)
class TriangleNetTrace:
    layer1: list[tuple]
    layer2: list[tuple]
    output: np.ndarray


def triangle_net_trace(g: Graph, uids: Sequence[Hashable]) -> TriangleNetTrace:
    """Run the three-layer construction and keep every hidden state.

    Layers 1 and 2: message = own UID (position 0 of the state), aggregation =
    concatenation of neighbor messages, update = (message, aggregation).
    Layer 3: messages are whole layer-2 states; node ``v`` fires iff some
    neighbor's UID appears in another neighbor's list, i.e. two neighbors of
    ``v`` are adjacent. Only equality between identifiers is ever tested.
    """
    ids = check_uids(g, uids)
    nbrs = [x.tolist() for x in g.neighbors]

    state = [(ids[v],) for v in range(g.n)]
    layers = []
    for _ in range(2):
        msgs = [s[0] for s in state]
        state = [(msgs[v], tuple(msgs[u] for u in nbrs[v])) for v in range(g.n)]
        layers.append(state)

    out = np.zeros(g.n, dtype=bool)
    for v in range(g.n):
        received = [state[u] for u in nbrs[v]]
        for (own1, list1), (own2, _) in itertools.permutations(received, 2):
            if any(own2 == x for x in list1):
                out[v] = True
                break
    return TriangleNetTrace(layers[0], layers[1], out)


def triangle_net_forward(g: Graph, uids: Sequence[Hashable]) -> np.ndarray:
    return triangle_net_trace(g, uids).output


class MatchingOracle:
    """Answers only "same node?" for two identifier references; counts queries."""

    def __init__(self):
        self.queries = 0

    def __call__(self, a, b) -> int:
        self.queries += 1
        return 1 if a == b else 0


class RelabelCache:
    """First-seen identifiers get 1, the next new one 2, and so on."""

    def __init__(self, oracle: MatchingOracle | None = None):
        self.oracle = oracle or MatchingOracle()
        self._entries: list[tuple[object, int]] = []

    def __len__(self):
        return len(self._entries)

    def lookup(self, identifier) -> int:
        for stored, value in self._entries:
            if self.oracle(identifier, stored):
                return value
        value = len(self._entries) + 1
        self._entries.append((identifier, value))
        return value


def default_visit_order(g: Graph) -> list[int]:
    """Ascending node index; each visit also touches the node's neighbors."""
    order = []
    for v in range(g.n):
        order.append(v)
        order.extend(g.neighbors[v].tolist())
    return order


def matching_oracle_relabel(
    g: Graph,
    uids: Sequence[Hashable],
    visit_order: Iterable[int] | None = None,
) -> np.ndarray:
    """Canonical integer UID per node from a cache driven by equality queries.

    Nodes never reached by ``visit_order`` get 0.
    """
    ids = check_uids(g, uids)
    cache = RelabelCache()
    out = np.zeros(g.n, dtype=np.int64)
    for v in (range(g.n) if visit_order is None else visit_order):
        value = cache.lookup(ids[v])
        if out[v] == 0:
            out[v] = value
    return out


def relabel_access_sequence(g: Graph, uids: Sequence[Hashable], visit_order: Iterable[int]) -> list[int]:
    """Canonical values returned for each access in ``visit_order`` (repeats included)."""
    ids = check_uids(g, uids)
    cache = RelabelCache()
    return [cache.lookup(ids[v]) for v in visit_order]
