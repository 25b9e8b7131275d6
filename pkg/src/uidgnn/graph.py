"""Undirected simple graphs, synthetic generators and exact combinatorial oracles."""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp

MAX_ISO_NODES = 64

GENERATOR_KINDS = (
    "barabasi-albert",
    "cycle",
    "disjoint-cycles",
    "circular-skip-link",
    "shrikhande",
    "rook-4x4",
    "complete",
)
PAIR_FAMILIES = ("wl1-hard-basic", "wl1-hard-regular", "csl")


class ParameterError(ValueError):
    """Invalid generator or configuration parameter."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class CapacityError(ValueError):
    pass


class GraphParseError(ValueError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.line = line


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected simple graph on nodes ``0..n-1``.

    ``edges`` is stored canonically as an ``(m, 2)`` int array with ``u < v``
    and rows sorted lexicographically. ``features`` is an optional ``n x d0``
    float matrix.
    """

    n: int
    edges: np.ndarray
    features: np.ndarray | None = None

    def __post_init__(self):
        n = int(self.n)
        if n < 1:
            raise ValueError(f"node count must be >= 1, got {n}")
        raw = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if raw.size and (raw.min() < 0 or raw.max() >= n):
            raise ValueError(f"edge endpoint outside [0, {n})")
        if np.any(raw[:, 0] == raw[:, 1]):
            raise ValueError("self-loops are not allowed")
        canon = np.sort(raw, axis=1)
        canon = np.unique(canon, axis=0) if len(canon) else canon.reshape(0, 2)
        if len(canon) != len(raw):
            raise ValueError("duplicate edges are not allowed")
        canon.setflags(write=False)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "edges", canon)
        if self.features is not None:
            feats = np.array(self.features, dtype=np.float64)
            if feats.ndim == 1:
                feats = feats[:, None]
            if feats.ndim != 2 or feats.shape[0] != n:
                raise ValueError(f"features must have {n} rows, got shape {feats.shape}")
            if not np.all(np.isfinite(feats)):
                raise ValueError("features must be finite")
            feats.setflags(write=False)
            object.__setattr__(self, "features", feats)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def feature_dim(self) -> int:
        return 0 if self.features is None else self.features.shape[1]

    @cached_property
    def neighbors(self) -> list[np.ndarray]:
        nbrs: list[list[int]] = [[] for _ in range(self.n)]
        for u, v in self.edges.tolist():
            nbrs[u].append(v)
            nbrs[v].append(u)
        return [np.array(sorted(x), dtype=np.int64) for x in nbrs]

    @cached_property
    def adjacency_sets(self) -> list[frozenset]:
        return [frozenset(x.tolist()) for x in self.neighbors]

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        """Symmetric sparse adjacency (CSR), used for neighbor sums."""
        u, v = self.edges[:, 0], self.edges[:, 1]
        rows = np.concatenate([u, v])
        cols = np.concatenate([v, u])
        data = np.ones(len(rows), dtype=np.float64)
        return sp.csr_matrix((data, (rows, cols)), shape=(self.n, self.n))

    def degrees(self) -> np.ndarray:
        return np.array([len(x) for x in self.neighbors], dtype=np.int64)

    def has_edge(self, u: int, v: int) -> bool:
        return v in self.adjacency_sets[u]

    def permute(self, perm: Sequence[int]) -> "Graph":
        """Relabel node ``i`` as ``perm[i]``."""
        perm = np.asarray(perm, dtype=np.int64)
        if sorted(perm.tolist()) != list(range(self.n)):
            raise ValueError("perm must be a permutation of range(n)")
        feats = None
        if self.features is not None:
            feats = np.empty_like(self.features)
            feats[perm] = self.features
        return Graph(self.n, perm[self.edges], feats)

    def with_features(self, features) -> "Graph":
        return Graph(self.n, self.edges, features)

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        if self.n != other.n or not np.array_equal(self.edges, other.edges):
            return False
        if (self.features is None) != (other.features is None):
            return False
        return self.features is None or np.array_equal(self.features, other.features)

    def __hash__(self):
        return hash((self.n, self.edges.tobytes()))

    def __repr__(self):
        return f"Graph(n={self.n}, num_edges={self.num_edges}, feature_dim={self.feature_dim})"


def disjoint_union(*graphs: Graph) -> Graph:
    offset = 0
    edges = []
    for g in graphs:
        edges.append(g.edges + offset)
        offset += g.n
    return Graph(offset, np.concatenate(edges) if edges else np.zeros((0, 2)))


# --------------------------------------------------------------------------- generators


@dataclass(frozen=True)
class GeneratorSpec:
    kind: str
    n: int = 0
    m: int = 1
    skip: int = 2
    seed: int = 0
    sizes: tuple[int, ...] = ()

    def validate(self) -> None:
        if self.kind not in GENERATOR_KINDS:
            raise ParameterError("kind", f"unknown generator {self.kind!r}; expected one of {GENERATOR_KINDS}")
        if self.kind in ("shrikhande", "rook-4x4"):
            if self.n not in (0, 16):
                raise ParameterError("n", f"{self.kind} has exactly 16 nodes")
            return
        if self.kind == "disjoint-cycles":
            sizes = self.cycle_sizes()
            if any(s < 3 for s in sizes):
                raise ParameterError("sizes", "every cycle needs at least 3 nodes")
            if self.n and sum(sizes) != self.n:
                raise ParameterError("sizes", f"cycle sizes sum to {sum(sizes)}, expected n={self.n}")
            return
        if self.n < 1:
            raise ParameterError("n", "must be >= 1")
        if self.kind == "barabasi-albert":
            if self.m < 1:
                raise ParameterError("m", "must be >= 1")
            if self.m >= self.n:
                raise ParameterError("m", f"must be < n ({self.n})")
        elif self.kind == "cycle" and self.n < 3:
            raise ParameterError("n", "a cycle needs at least 3 nodes")
        elif self.kind == "circular-skip-link":
            if self.n < 5:
                raise ParameterError("n", "needs at least 5 nodes")
            if not 2 <= self.skip <= self.n // 2:
                raise ParameterError("skip", f"must lie in [2, {self.n // 2}]")

    def cycle_sizes(self) -> tuple[int, ...]:
        if self.sizes:
            return tuple(self.sizes)
        if self.n < 6:
            raise ParameterError("n", "disjoint-cycles without sizes needs n >= 6")
        return (self.n // 2, self.n - self.n // 2)


def generate(spec: GeneratorSpec) -> Graph:
    spec.validate()
    kind = spec.kind
    if kind == "barabasi-albert":
        return barabasi_albert(spec.n, spec.m, spec.seed)
    if kind == "cycle":
        return cycle_graph(spec.n)
    if kind == "disjoint-cycles":
        return disjoint_union(*(cycle_graph(s) for s in spec.cycle_sizes()))
    if kind == "circular-skip-link":
        return circular_skip_link(spec.n, spec.skip)
    if kind == "shrikhande":
        return shrikhande_graph()
    if kind == "rook-4x4":
        return rook_graph()
    return complete_graph(spec.n)


def barabasi_albert(n: int, m: int, seed: int) -> Graph:
    """Preferential attachment grown from a complete graph on ``m + 1`` nodes.

    Each new node picks ``m`` distinct targets, sampled without replacement
    with probability proportional to current degree.
    """
    rng = np.random.default_rng(seed)
    edges = list(itertools.combinations(range(m + 1), 2))
    deg = np.zeros(n, dtype=np.float64)
    deg[: m + 1] = m
    for t in range(m + 1, n):
        p = deg[:t] / deg[:t].sum()
        targets = rng.choice(t, size=m, replace=False, p=p)
        for u in targets.tolist():
            edges.append((u, t))
        deg[targets] += 1
        deg[t] = m
    return Graph(n, edges)


def cycle_graph(n: int) -> Graph:
    return Graph(n, [(i, (i + 1) % n) for i in range(n)])


def complete_graph(n: int) -> Graph:
    return Graph(n, list(itertools.combinations(range(n), 2)) or np.zeros((0, 2)))


def circular_skip_link(n: int, skip: int) -> Graph:
    """Cycle ``C_n`` plus chords ``i -- i+skip (mod n)``."""
    edges = {tuple(sorted((i, (i + 1) % n))) for i in range(n)}
    edges |= {tuple(sorted((i, (i + skip) % n))) for i in range(n)}
    return Graph(n, sorted(edges))


def shrikhande_graph() -> Graph:
    """Cayley graph on Z4 x Z4 with connection set {±(1,0), ±(0,1), ±(1,1)}."""
    conn = [(1, 0), (3, 0), (0, 1), (0, 3), (1, 1), (3, 3)]
    edges = set()
    for a, b in itertools.product(range(4), repeat=2):
        for da, db in conn:
            u, v = 4 * a + b, 4 * ((a + da) % 4) + (b + db) % 4
            edges.add((min(u, v), max(u, v)))
    return Graph(16, sorted(edges))


def rook_graph() -> Graph:
    """4x4 rook's graph: cells adjacent when they share a row or a column."""
    edges = []
    for u, v in itertools.combinations(range(16), 2):
        if (u // 4 == v // 4) != (u % 4 == v % 4):
            edges.append((u, v))
    return Graph(16, edges)


def random_regular(n: int, degree: int, rng: np.random.Generator, max_tries: int = 1000) -> Graph:
    """Uniform-ish simple ``degree``-regular graph via the pairing model with rejection."""
    if (n * degree) % 2 or degree >= n:
        raise ParameterError("degree", f"no simple {degree}-regular graph on {n} nodes")
    for _ in range(max_tries):
        stubs = rng.permutation(np.repeat(np.arange(n), degree)).reshape(-1, 2)
        if np.any(stubs[:, 0] == stubs[:, 1]):
            continue
        canon = np.sort(stubs, axis=1)
        if len(np.unique(canon, axis=0)) == len(canon):
            return Graph(n, canon)
    raise RuntimeError(f"pairing model failed after {max_tries} tries")


# --------------------------------------------------------------------------- oracles


def label_triangles(g: Graph) -> np.ndarray:
    """Boolean per node: does it lie on a triangle? Exhaustive over neighbor pairs."""
    adj = g.adjacency_sets
    labels = np.zeros(g.n, dtype=bool)
    for v in range(g.n):
        for u, w in itertools.combinations(g.neighbors[v].tolist(), 2):
            if w in adj[u]:
                labels[v] = True
                break
    return labels


@dataclass(frozen=True)
class WlColoring:
    colors: np.ndarray
    rounds_to_stability: int

    @property
    def histogram(self) -> tuple[tuple[int, int], ...]:
        return tuple(sorted(Counter(self.colors.tolist()).items()))

    @property
    def num_colors(self) -> int:
        return len(set(self.colors.tolist()))


def _initial_colors(graphs: Sequence[Graph]) -> list[int]:
    use_features = all(g.features is not None for g in graphs) and len({g.feature_dim for g in graphs}) == 1
    if not use_features:
        return [0] * sum(g.n for g in graphs)
    rows = np.concatenate([g.features for g in graphs])
    _, inverse = np.unique(rows, axis=0, return_inverse=True)
    return inverse.reshape(-1).tolist()


def _refine(nbrs: list[list[int]], colors: list[int]) -> tuple[list[int], int]:
    rounds = 0
    num = len(set(colors))
    while True:
        sigs = [(colors[v], tuple(sorted(colors[u] for u in nbrs[v]))) for v in range(len(nbrs))]
        index = {s: i for i, s in enumerate(sorted(set(sigs)))}
        new = [index[s] for s in sigs]
        if len(index) == num:
            return new, rounds
        colors, num = new, len(index)
        rounds += 1


def wl_refine(g: Graph) -> WlColoring:
    """1-WL color refinement to the stable partition.

    Colors are dense indices of sorted signatures, so they are canonical but
    only comparable across graphs when refined together (see ``wl_refine_joint``).
    """
    return wl_refine_joint([g])[0]


def wl_refine_joint(graphs: Sequence[Graph]) -> list[WlColoring]:
    """Refine the disjoint union so colors share one namespace across graphs."""
    nbrs: list[list[int]] = []
    offset = 0
    for g in graphs:
        nbrs.extend((x + offset).tolist() for x in g.neighbors)
        offset += g.n
    colors, rounds = _refine(nbrs, _initial_colors(graphs))
    out = []
    offset = 0
    for g in graphs:
        out.append(WlColoring(np.array(colors[offset : offset + g.n], dtype=np.int64), rounds))
        offset += g.n
    return out


def wl_equivalent(g1: Graph, g2: Graph) -> bool:
    c1, c2 = wl_refine_joint([g1, g2])
    return c1.histogram == c2.histogram


def are_isomorphic(g1: Graph, g2: Graph) -> bool:
    """Exact isomorphism test by backtracking with joint 1-WL color pruning."""
    if max(g1.n, g2.n) > MAX_ISO_NODES:
        raise CapacityError(f"are_isomorphic supports at most {MAX_ISO_NODES} nodes, got {max(g1.n, g2.n)}")
    if g1.n != g2.n or g1.num_edges != g2.num_edges:
        return False
    c1, c2 = wl_refine_joint([g1, g2])
    if c1.histogram != c2.histogram:
        return False
    n = g1.n
    col1, col2 = c1.colors.tolist(), c2.colors.tolist()
    adj1 = [sum(1 << u for u in x.tolist()) for x in g1.neighbors]
    adj2 = [sum(1 << u for u in x.tolist()) for x in g2.neighbors]
    by_color: dict[int, list[int]] = {}
    for v in range(n):
        by_color.setdefault(col2[v], []).append(v)

    # connectivity-first order, rare colors first
    freq = Counter(col1)
    order: list[int] = []
    placed = 0
    remaining = set(range(n))
    while remaining:
        def key(v):
            return (-bin(adj1[v] & placed).count("1"), freq[col1[v]], v)

        v = min(remaining, key=key)
        order.append(v)
        placed |= 1 << v
        remaining.discard(v)

    mapping = [-1] * n
    used = [False] * n

    def extend(depth: int, image_mask: int) -> bool:
        if depth == n:
            return True
        u = order[depth]
        want = 0
        for w in order[:depth]:
            if adj1[u] >> w & 1:
                want |= 1 << mapping[w]
        for c in by_color[col1[u]]:
            if used[c] or (adj2[c] & image_mask) != want:
                continue
            mapping[u] = c
            used[c] = True
            if extend(depth + 1, image_mask | (1 << c)):
                return True
            used[c] = False
        mapping[u] = -1
        return False

    return extend(0, 0)


# --------------------------------------------------------------------------- pair families


class GraphPair(NamedTuple):
    first: Graph
    second: Graph
    isomorphic: bool
    name: str


def _basic_candidates():
    n = 6
    while True:
        for a in range(3, n // 2 + 1):
            b = n - a
            yield f"C{n}_vs_C{a}+C{b}", cycle_graph(n), disjoint_union(cycle_graph(a), cycle_graph(b))
        n += 1


def _regular_candidates(rng: np.random.Generator):
    yield "shrikhande_vs_rook4x4", shrikhande_graph(), rook_graph()
    i = 0
    while True:
        n, d = (8 + 2 * (i % 5), 3) if i % 2 == 0 else (9 + 2 * (i % 4), 4)
        yield f"regular_n{n}_d{d}_{i}", random_regular(n, d, rng), random_regular(n, d, rng)
        i += 1


def _csl_candidates(n: int | None, skips: Sequence[int] | None):
    sizes = [n] if n else itertools.count(11, 2)
    for size in sizes:
        options = list(skips) if skips else list(range(2, size // 2 + 1))
        for s, t in itertools.combinations(options, 2):
            yield f"csl_n{size}_s{s}_vs_s{t}", circular_skip_link(size, s), circular_skip_link(size, t)


def generate_pair_family(
    family: str,
    count: int,
    seed: int = 0,
    *,
    n: int | None = None,
    skips: Sequence[int] | None = None,
) -> list[GraphPair]:
    """Verified 1-WL-equivalent, non-isomorphic graph pairs.

    Candidates that fail either check are skipped, so every returned pair has
    identical joint WL histograms and ``are_isomorphic == False``.
    """
    if family == "wl1-hard-basic":
        candidates = _basic_candidates()
    elif family == "wl1-hard-regular":
        candidates = _regular_candidates(np.random.default_rng(seed))
    elif family == "csl":
        candidates = _csl_candidates(n, skips)
    else:
        raise ParameterError("family", f"unknown pair family {family!r}; expected one of {PAIR_FAMILIES}")
    pairs: list[GraphPair] = []
    seen: set[str] = set()
    for name, g1, g2 in candidates:
        if len(pairs) >= count:
            break
        if name in seen:
            continue
        if wl_equivalent(g1, g2) and not are_isomorphic(g1, g2):
            pairs.append(GraphPair(g1, g2, False, name))
            seen.add(name)
    return pairs


# --------------------------------------------------------------------------- file I/O


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_graph(g: Graph, path) -> None:
    lines = [f"graph {g.n} {g.num_edges} {g.feature_dim}"]
    lines += [f"{u} {v}" for u, v in g.edges.tolist()]
    if g.features is not None:
        lines += [" ".join(_fmt(x) for x in row) for row in g.features]
    Path(path).write_text("\n".join(lines) + "\n")


def read_graph(path) -> Graph:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise GraphParseError(path, 1, "empty file")
    head = lines[0].split()
    if len(head) != 4 or head[0] != "graph":
        raise GraphParseError(path, 1, "expected header 'graph <n> <num_edges> <d0>'")
    try:
        n, m, d0 = (int(x) for x in head[1:])
    except ValueError:
        raise GraphParseError(path, 1, "header counts must be integers") from None
    expected = 1 + m + (n if d0 > 0 else 0)
    body = lines[1:]
    if len(lines) < expected:
        raise GraphParseError(path, len(lines) + 1, f"expected {expected} lines, file has {len(lines)}")
    edges = []
    for i in range(m):
        lineno = i + 2
        parts = body[i].split()
        try:
            u, v = (int(x) for x in parts)
        except ValueError:
            raise GraphParseError(path, lineno, f"expected '<u> <v>', got {body[i]!r}") from None
        if not (0 <= u < v < n):
            raise GraphParseError(path, lineno, f"edge ({u}, {v}) must satisfy 0 <= u < v < {n}")
        edges.append((u, v))
    feats = None
    if d0 > 0:
        feats = np.empty((n, d0))
        for i in range(n):
            lineno = m + i + 2
            parts = body[m + i].split()
            if len(parts) != d0:
                raise GraphParseError(path, lineno, f"expected {d0} feature values, got {len(parts)}")
            try:
                feats[i] = [float(x) for x in parts]
            except ValueError:
                raise GraphParseError(path, lineno, "feature values must be decimal reals") from None
    for extra, ln in enumerate(lines[expected:], start=expected + 1):
        if ln.strip():
            raise GraphParseError(path, extra, "unexpected trailing content")
    try:
        return Graph(n, np.array(edges, dtype=np.int64).reshape(-1, 2), feats)
    except ValueError as exc:
        raise GraphParseError(path, 1, str(exc)) from None


def write_pair_list(pairs: Sequence[tuple[str, str, bool]], path) -> None:
    Path(path).write_text("".join(f"{a} {b} {int(bool(iso))}\n" for a, b, iso in pairs))


def read_pair_list(path) -> list[tuple[str, str, bool]]:
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 3 or parts[2] not in ("0", "1"):
            raise GraphParseError(path, lineno, "expected '<path1> <path2> <iso:0|1>'")
        out.append((parts[0], parts[1], parts[2] == "1"))
    return out


def write_labels(labels, path) -> None:
    labels = np.asarray(labels).astype(np.int64).reshape(-1)
    Path(path).write_text(f"labels {len(labels)}\n" + "".join(f"{x}\n" for x in labels.tolist()))


def read_labels(path) -> np.ndarray:
    lines = Path(path).read_text().splitlines()
    head = lines[0].split() if lines else []
    if len(head) != 2 or head[0] != "labels":
        raise GraphParseError(path, 1, "expected header 'labels <count>'")
    count = int(head[1])
    if len(lines) < count + 1:
        raise GraphParseError(path, len(lines) + 1, f"expected {count} labels")
    try:
        return np.array([int(x) for x in lines[1 : count + 1]], dtype=np.int64)
    except ValueError as exc:
        raise GraphParseError(path, 2, str(exc)) from None
