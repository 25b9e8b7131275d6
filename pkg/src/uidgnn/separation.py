"""Pairwise distinguishing harness with a reliability gate against relabeled copies."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .config import rng_for, seed_stream
from .graph import Graph
from .model import ModelConfig, augment_features, embed_batch, readout_batch

DEFAULT_SAMPLES = 16
EPS_FLOOR = 1e-9


class UndefinedCosineError(ValueError):
    pass


def mean_embedding(params, g: Graph, S: int, seed: int, config: ModelConfig, mode: str = "siri") -> np.ndarray:
    """Graph embedding averaged over ``S`` independent RNF draws.

    The embedding is the sum-pooled final layer, or the readout MLP applied to
    it for ``graph-sum-mlp`` models.
    """
    if S < 1:
        raise ValueError("S must be >= 1")
    if mode == "constant" or config.rnf_dim == 0:
        stack = augment_features(g, None, config.rnf_dim)[None]
    else:
        rng = rng_for(seed, "sep-embed")
        stack = np.stack([augment_features(g, config.rnf.sample(g.n, rng)) for _ in range(S)])
    emb = embed_batch(params, g, stack, config)
    if config.readout == "graph-sum-mlp":
        return readout_batch(params, emb, config).mean(axis=0)
    return emb.sum(axis=1).mean(axis=0)


def cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise UndefinedCosineError("cosine undefined for a zero-norm embedding")
    return float(1.0 - np.dot(a, b) / (na * nb))


@dataclass(frozen=True)
class PairVerdict:
    cosine_distance: float
    distinguished: bool
    reliable: bool
    threshold: float
    samples: int
    copy_distance: float

    @property
    def separated(self) -> bool:
        return self.distinguished and self.reliable


def _copy_distance(params, g: Graph, emb: np.ndarray, S: int, seed: int, config: ModelConfig, mode: str) -> float:
    perm = rng_for(seed, "sep-perm", g.n, g.num_edges).permutation(g.n)
    copy_emb = mean_embedding(params, g.permute(perm), S, seed_stream(seed, "sep-copy", g.n, g.num_edges), config, mode)
    return cosine_distance(emb, copy_emb)


def judge_pair(params, g1: Graph, g2: Graph, S: int, eps: float, seed: int, config: ModelConfig, mode: str = "siri") -> PairVerdict:
    """Distance ``1 - cos`` between mean embeddings.

    Both graphs share one RNF stream, so the distance is exactly symmetric.
    The verdict is reliable iff a relabeled copy of each graph, embedded with
    fresh draws, stays within ``eps`` of the original.
    """
    if eps <= 0:
        raise ValueError("eps must be > 0")
    e1 = mean_embedding(params, g1, S, seed, config, mode)
    e2 = mean_embedding(params, g2, S, seed, config, mode)
    dist = cosine_distance(e1, e2)
    copy = max(
        _copy_distance(params, g1, e1, S, seed, config, mode),
        _copy_distance(params, g2, e2, S, seed, config, mode),
    )
    return PairVerdict(dist, dist > eps, copy <= eps, eps, S, copy)


def gated_verdict(
    params,
    g1: Graph,
    g2: Graph,
    S: int,
    eps: float,
    seed: int,
    config: ModelConfig,
    mode: str = "siri",
    safety: float = 2.0,
    rounds: int = 3,
) -> PairVerdict:
    """Judge a pair, rejecting any threshold under which a relabeled copy is distinguished.

    A rejected threshold is raised to ``safety`` times the offending copy
    distance and re-validated with fresh draws and fresh copies. If no
    threshold survives ``rounds`` attempts the last, unreliable verdict is
    returned and the pair does not count as separated.
    """
    verdict = judge_pair(params, g1, g2, S, eps, seed, config, mode)
    for r in range(1, rounds):
        if verdict.reliable:
            break
        eps = max(safety * verdict.copy_distance, safety * eps)
        verdict = judge_pair(params, g1, g2, S, eps, seed_stream(seed, "sep-gate", r), config, mode)
    return verdict


def calibrate_threshold(
    params,
    graphs: Sequence[Graph],
    S: int,
    seed: int,
    config: ModelConfig,
    mode: str = "siri",
    copies: int = 4,
    safety: float = 2.0,
) -> float:
    """Smallest threshold covering every relabeled-copy distance, times ``safety``."""
    worst = 0.0
    for gi, g in enumerate(graphs):
        base = mean_embedding(params, g, S, seed_stream(seed, "calib-base", gi), config, mode)
        for c in range(copies):
            perm = rng_for(seed, "calib-perm", gi, c).permutation(g.n)
            other = mean_embedding(params, g.permute(perm), S, seed_stream(seed, "calib-copy", gi, c), config, mode)
            worst = max(worst, cosine_distance(base, other))
    return max(safety * worst, EPS_FLOOR)


@dataclass
class SuiteRow:
    family: str
    pair_id: str
    verdict: PairVerdict


@dataclass
class SuiteReport:
    rows: list[SuiteRow] = field(default_factory=list)

    def counts(self) -> dict[str, tuple[int, int]]:
        out: dict[str, list[int]] = {}
        for row in self.rows:
            c = out.setdefault(row.family, [0, 0])
            c[0] += int(row.verdict.separated)
            c[1] += 1
        return {k: (v[0], v[1]) for k, v in out.items()}

    @property
    def separated(self) -> int:
        return sum(int(r.verdict.separated) for r in self.rows)

    @property
    def accuracy(self) -> float:
        return self.separated / len(self.rows) if self.rows else 0.0

    def rows_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["family", "pair_id", "distance", "distinguished", "reliable"])
        for r in self.rows:
            v = r.verdict
            w.writerow([r.family, r.pair_id, format(v.cosine_distance, ".10g"), int(v.distinguished), int(v.reliable)])
        return buf.getvalue()

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["family", "separated", "total", "percent"])
        for fam, (sep, tot) in self.counts().items():
            w.writerow([fam, sep, tot, format(100.0 * sep / tot if tot else 0.0, ".4g")])
        return buf.getvalue()


def run_suite(
    params,
    pairs: Sequence[tuple[str, str, Graph, Graph]],
    S: int,
    eps: float,
    seed: int,
    config: ModelConfig,
    mode: str = "siri",
    safety: float = 2.0,
    rounds: int = 3,
) -> SuiteReport:
    """Judge ``(family, pair_id, g1, g2)`` entries with one shared parameter set, each under the gate."""
    report = SuiteReport()
    for i, (family, pair_id, g1, g2) in enumerate(pairs):
        verdict = gated_verdict(params, g1, g2, S, eps, seed_stream(seed, "suite", i), config, mode, safety, rounds)
        report.rows.append(SuiteRow(family, pair_id, verdict))
    return report
