"""Training regimes: constant features, RNI and SIRI (contrastive UID-invariance)."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, fields
from typing import Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .config import rng_for, seed_stream
from .graph import Graph, ParameterError
from .model import (
    ForwardResult,
    ModelConfig,
    ModelParams,
    augment_features,
    check_params,
    embed_batch,
    forward,
    init_params,
    readout_batch,
)

MODES = ("constant", "rni", "siri")
TASKS = ("node-binary", "graph-binary", "pair-siamese")
METRIC_HEADER = ("epoch", "task_loss", "contrastive_loss", "total_loss", "train_acc", "test_acc")


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "siri"
    k: int = 1
    epochs: int = 100
    lr: float = 1e-3
    seed: int = 0
    task: str = "node-binary"
    contrastive_weight: float = 1.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ParameterError("mode", f"expected one of {MODES}")
        if self.task not in TASKS:
            raise ParameterError("task", f"expected one of {TASKS}")
        if self.k < 1:
            raise ParameterError("k", "must be >= 1")
        if self.epochs < 1:
            raise ParameterError("epochs", "must be >= 1")
        if self.lr < 0:
            raise ParameterError("lr", "must be >= 0")

    @classmethod
    def from_mapping(cls, values: Mapping[str, str]) -> "TrainConfig":
        types = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in types:
                raise ParameterError(key, "unknown train setting")
            if key in ("mode", "task"):
                kwargs[key] = raw
            elif key in ("lr", "contrastive_weight"):
                kwargs[key] = float(raw)
            else:
                kwargs[key] = int(raw)
        return cls(**kwargs)


@dataclass(frozen=True)
class LossBreakdown:
    task: float
    contrastive: float
    total: float


@dataclass
class EpochRecord:
    epoch: int
    loss: LossBreakdown
    train_acc: float
    test_acc: float
    invariance: dict[str, float] | None = None


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def test_accuracy(self) -> np.ndarray:
        return np.array([r.test_acc for r in self.records])

    def train_accuracy(self) -> np.ndarray:
        return np.array([r.train_acc for r in self.records])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(METRIC_HEADER)
        for r in self.records:
            writer.writerow(
                [r.epoch]
                + [format(x, ".10g") for x in (r.loss.task, r.loss.contrastive, r.loss.total, r.train_acc, r.test_acc)]
            )
        return buf.getvalue()


# --------------------------------------------------------------------------- losses


def task_loss(logits: ad.Tensor, targets, task: str = "node-binary") -> ad.Tensor:
    """Binary cross-entropy over two-class logits (softmax form)."""
    y = np.atleast_1d(np.asarray(targets, dtype=np.int64))
    if task not in TASKS:
        raise ParameterError("task", f"expected one of {TASKS}")
    if y.size and (y.min() < 0 or y.max() > 1):
        raise ValueError("task_loss: binary labels must be 0 or 1")
    return ad.softmax_cross_entropy(logits, y)


def contrastive_loss(h1: ad.Tensor, h2: ad.Tensor) -> ad.Tensor:
    return ad.mse(h1, h2)


# --------------------------------------------------------------------------- trainer


class Trainer:
    """Owns parameters, optimizer state and the RNF stream for one run."""

    def __init__(self, params: ModelParams, model_config: ModelConfig, cfg: TrainConfig, rnf_rng=None):
        check_params(params, model_config)
        self.params = params
        self.model_config = model_config
        self.cfg = cfg
        self.optimizer = ad.Adam(lr=cfg.lr)
        self.rnf_rng = rnf_rng if rnf_rng is not None else rng_for(cfg.seed, "rnf")
        self.last_candidate_losses: np.ndarray | None = None
        self.last_selected: int | None = None

    # -- helpers

    @property
    def rnf_dim(self) -> int:
        return self.model_config.rnf_dim

    def draw(self, n: int) -> np.ndarray:
        return self.model_config.rnf.sample(n, self.rnf_rng)

    def inputs(self, g: Graph, rnf: np.ndarray | None) -> np.ndarray:
        if self.cfg.mode == "constant" or self.rnf_dim == 0:
            return augment_features(g, None, self.rnf_dim)
        return augment_features(g, rnf)

    def _apply(self, tape: ad.Tape, leaves, total: ad.Tensor) -> None:
        tape.backward(total)
        self.optimizer.step(self.params, {k: v.grad for k, v in leaves.items()})

    def _watch(self):
        tape = ad.Tape()
        return tape, {k: tape.watch(v) for k, v in self.params.items()}

    # -- steps

    def step(self, g: Graph, labels) -> LossBreakdown:
        if self.cfg.mode == "siri":
            return self.siri_step(g, labels)
        if self.cfg.mode == "rni":
            return self.rni_step(g, labels)
        return self.constant_step(g, labels)

    def constant_step(self, g: Graph, labels) -> LossBreakdown:
        tape, leaves = self._watch()
        out = forward(leaves, g, augment_features(g, None, self.rnf_dim), self.model_config)
        loss = task_loss(out.logits, labels, self.cfg.task)
        self._apply(tape, leaves, loss)
        v = loss.item()
        return LossBreakdown(v, 0.0, v)

    def rni_step(self, g: Graph, labels, draws: Sequence[np.ndarray] | None = None) -> LossBreakdown:
        """Two independent RNF draws, averaged task loss, one update."""
        if draws is None:
            draws = (self.draw(g.n), self.draw(g.n))
        tape, leaves = self._watch()
        losses = [
            task_loss(forward(leaves, g, self.inputs(g, r), self.model_config).logits, labels, self.cfg.task)
            for r in draws
        ]
        total = ad.scale(ad.add(losses[0], losses[1]), 0.5)
        self._apply(tape, leaves, total)
        v = total.item()
        return LossBreakdown(v, 0.0, v)

    def select_furthest(self, g: Graph, r1: np.ndarray, candidates: Sequence[np.ndarray]) -> int:
        """Index of the candidate second draw with the largest contrastive loss (gradient-free)."""
        stack = np.stack([self.inputs(g, r1)] + [self.inputs(g, r) for r in candidates])
        emb = embed_batch(self.params, g, stack, self.model_config)
        losses = np.mean((emb[1:] - emb[0]) ** 2, axis=(1, 2))
        self.last_candidate_losses = losses
        return int(np.argmax(losses))

    def siri_step(
        self,
        g: Graph,
        labels,
        r1: np.ndarray | None = None,
        candidates: Sequence[np.ndarray] | None = None,
    ) -> LossBreakdown:
        """Task loss on the first draw plus MSE between final-layer embeddings of two draws.

        With ``k > 1`` the second draw is the candidate that maximizes the
        contrastive loss under the current parameters.
        """
        if r1 is None:
            r1 = self.draw(g.n)
        if candidates is None:
            candidates = [self.draw(g.n) for _ in range(self.cfg.k)]
        if len(candidates) > 1:
            idx = self.select_furthest(g, r1, candidates)
        else:
            idx, self.last_candidate_losses = 0, None
        self.last_selected = idx
        r2 = candidates[idx]
        tape, leaves = self._watch()
        out1 = forward(leaves, g, self.inputs(g, r1), self.model_config)
        out2 = forward(leaves, g, self.inputs(g, r2), self.model_config)
        task = task_loss(out1.logits, labels, self.cfg.task)
        con = contrastive_loss(out1.embeddings, out2.embeddings)
        total = ad.add(task, ad.scale(con, self.cfg.contrastive_weight))
        self._apply(tape, leaves, total)
        t, c = task.item(), con.item()
        return LossBreakdown(t, c, total.item())


# --------------------------------------------------------------------------- evaluation


def predict(params: ModelParams, g: Graph, model_config: ModelConfig, rnf: np.ndarray | None, mode: str = "siri") -> np.ndarray:
    """Hard predictions for one graph under one RNF draw (``None``: constant features)."""
    if mode == "constant" or model_config.rnf_dim == 0 or rnf is None:
        h0 = augment_features(g, None, model_config.rnf_dim)
    else:
        h0 = augment_features(g, rnf)
    logits = readout_batch(params, embed_batch(params, g, h0, model_config), model_config)[0]
    return np.argmax(logits, axis=-1)


def accuracy(
    params: ModelParams,
    data: Sequence[tuple[Graph, object]],
    model_config: ModelConfig,
    mode: str,
    rng: np.random.Generator,
) -> float:
    """Micro-averaged accuracy (nodes for node tasks, graphs for graph tasks), one RNF draw per graph."""
    correct = total = 0
    for g, y in data:
        rnf = model_config.rnf.sample(g.n, rng) if mode != "constant" else None
        pred = predict(params, g, model_config, rnf, mode)
        y = np.atleast_1d(np.asarray(y))
        correct += int(np.sum(pred.reshape(-1) == y.reshape(-1)))
        total += y.size
    return correct / total if total else 0.0


def train(
    dataset: Sequence[tuple[Graph, object]],
    test_set: Sequence[tuple[Graph, object]],
    cfg: TrainConfig,
    model_config: ModelConfig,
    params: ModelParams | None = None,
    callback=None,
) -> tuple[ModelParams, TrainHistory]:
    """Per-graph Adam updates over ``cfg.epochs`` passes; deterministic in ``cfg.seed``.

    ``callback(epoch, params)`` may return a dict of extra metrics stored on
    the epoch record (used for invariance curves).
    """
    if not dataset:
        raise ValueError("train: dataset is empty")
    if params is None:
        params = init_params(model_config, seed_stream(cfg.seed, "init"))
    trainer = Trainer(params, model_config, cfg)
    order_rng = rng_for(cfg.seed, "data-order")
    history = TrainHistory()
    for epoch in range(1, cfg.epochs + 1):
        task_sum = con_sum = tot_sum = 0.0
        for i in order_rng.permutation(len(dataset)):
            g, y = dataset[i]
            lb = trainer.step(g, y)
            task_sum += lb.task
            con_sum += lb.contrastive
            tot_sum += lb.total
        m = len(dataset)
        loss = LossBreakdown(task_sum / m, con_sum / m, tot_sum / m)
        eval_rng = rng_for(cfg.seed, "eval-acc", epoch)
        train_acc = accuracy(trainer.params, dataset, model_config, cfg.mode, eval_rng)
        test_acc = accuracy(trainer.params, test_set, model_config, cfg.mode, eval_rng) if test_set else float("nan")
        extra = callback(epoch, trainer.params) if callback else None
        history.records.append(EpochRecord(epoch, loss, train_acc, test_acc, extra))
    return trainer.params, history


# --------------------------------------------------------------------------- siamese pairs


def graph_embedding(out: ForwardResult, model_config: ModelConfig) -> ad.Tensor:
    """Embedding compared by the pair protocol.

    Sum-pooled final GNN layer, passed through the readout MLP when the model
    has one (the pooled ReLU output alone is non-negative, so its cosine
    never drops below 0).
    """
    if model_config.readout == "graph-sum-mlp":
        return out.logits
    return ad.row_sum_pool(out.embeddings)


def pair_loss(cos: ad.Tensor, same: bool, margin: float = 0.0) -> ad.Tensor:
    """Cosine-embedding criterion: ``1 - cos`` for matching pairs, ``max(0, cos - margin)`` otherwise."""
    if same:
        return ad.sub(ad.tensor(np.ones((1, 1))), cos)
    return ad.relu(ad.sub(cos, ad.tensor(np.full((1, 1), margin))))


class SiameseTrainer(Trainer):
    """Pair classification ("same graph up to relabeling" vs "different") from embedding cosine.

    Matching pairs are pulled to cosine 1 and non-matching pairs pushed below
    ``margin``. ``siri`` adds the contrastive term for each graph of the pair,
    ``rni`` averages the pair loss over two independent draws.
    """

    margin = 0.0

    def pair_step(self, ga: Graph, gb: Graph, same: bool, weight: float = 1.0) -> LossBreakdown:
        """One update on a pair; ``weight`` scales the pair loss."""
        tape, leaves = self._watch()

        def pair_loss_for(ra, rb):
            oa = forward(leaves, ga, self.inputs(ga, ra), self.model_config)
            ob = forward(leaves, gb, self.inputs(gb, rb), self.model_config)
            cos = ad.cosine_similarity(graph_embedding(oa, self.model_config), graph_embedding(ob, self.model_config))
            return ad.scale(pair_loss(cos, same, self.margin), weight), oa, ob

        mode = self.cfg.mode
        if mode == "rni":
            l1, _, _ = pair_loss_for(self.draw(ga.n), self.draw(gb.n))
            l2, _, _ = pair_loss_for(self.draw(ga.n), self.draw(gb.n))
            total = ad.scale(ad.add(l1, l2), 0.5)
            self._apply(tape, leaves, total)
            return LossBreakdown(total.item(), 0.0, total.item())
        task, oa, ob = pair_loss_for(self.draw(ga.n), self.draw(gb.n))
        if mode == "constant":
            self._apply(tape, leaves, task)
            return LossBreakdown(task.item(), 0.0, task.item())
        oa2 = forward(leaves, ga, self.inputs(ga, self.draw(ga.n)), self.model_config)
        ob2 = forward(leaves, gb, self.inputs(gb, self.draw(gb.n)), self.model_config)
        con = ad.scale(
            ad.add(contrastive_loss(oa.embeddings, oa2.embeddings), contrastive_loss(ob.embeddings, ob2.embeddings)), 0.5
        )
        total = ad.add(task, ad.scale(con, self.cfg.contrastive_weight))
        self._apply(tape, leaves, total)
        return LossBreakdown(task.item(), con.item(), total.item())


def train_siamese(
    g1: Graph,
    g2: Graph,
    cfg: TrainConfig,
    model_config: ModelConfig,
    params: ModelParams | None = None,
) -> tuple[ModelParams, TrainHistory]:
    """Train one model to tell ``g1`` from ``g2`` while matching relabeled copies of each.

    Every epoch runs three pair steps: (g1, g2, different), (g1, pi.g1, same)
    and (g2, pi.g2, same), with fresh permutations. The "different" step is
    weighted 2 so both classes carry equal weight.
    """
    if params is None:
        params = init_params(model_config, seed_stream(cfg.seed, "init"))
    trainer = SiameseTrainer(params, model_config, cfg)
    perm_rng = rng_for(cfg.seed, "siamese-perm")
    history = TrainHistory()
    for epoch in range(1, cfg.epochs + 1):
        steps = [
            trainer.pair_step(g1, g2, False, weight=2.0),
            trainer.pair_step(g1, g1.permute(perm_rng.permutation(g1.n)), True),
            trainer.pair_step(g2, g2.permute(perm_rng.permutation(g2.n)), True),
        ]
        loss = LossBreakdown(*(float(np.mean([getattr(s, f) for s in steps])) for f in ("task", "contrastive", "total")))
        history.records.append(EpochRecord(epoch, loss, float("nan"), float("nan")))
    return trainer.params, history
