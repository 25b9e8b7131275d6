"""Canned desk-scale experiments: triangle detection, convergence speed and pair separation.

Each recipe is a :class:`Manifest` preset. ``scale`` shrinks epochs and graph
counts proportionally; every random choice flows from the manifest seed
through purpose-tagged streams, so reruns write byte-identical CSVs.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .config import Manifest, rng_for, seed_stream
from .graph import Graph, barabasi_albert, cycle_graph, disjoint_union, generate_pair_family, label_triangles
from .model import ModelConfig, ModelParams, init_params
from .separation import SuiteReport, SuiteRow, UndefinedCosineError, PairVerdict, calibrate_threshold, gated_verdict
from .training import TrainConfig, TrainHistory, accuracy, train, train_siamese

RECIPES = ("triangle-interp", "triangle-extrap", "convergence", "separation")

_TRIANGLE = """\
name={name}
seed=0
[data]
train_graphs=20
test_graphs=20
nodes=100
m_train=2
m_test={m_test}
[model]
layers=6
hidden_dim=64
rnf_dim=64
init_gain=0.3
[train]
epochs=500
lr=1e-3
contrastive_weight=1.0
k=1
[eval]
modes=constant,rni,siri
seeds=0,1,2
"""

_CONVERGENCE = """\
name=convergence
seed=0
[data]
pairs=20
first_n=6
[model]
layers=4
hidden_dim=32
rnf_dim=32
readout=graph-sum-mlp
init_gain=0.5
[train]
epochs=300
lr=1e-3
contrastive_weight=0.1
[eval]
modes=rni,siri
seeds=0,1,2
fraction=0.95
window=10
"""

_SEPARATION = """\
name=separation
seed=0
[data]
basic=4
regular=3
csl=3
[model]
layers=4
hidden_dim=32
rnf_dim=32
[train]
epochs=100
lr=1e-3
contrastive_weight=1.0
[eval]
modes=constant,siri
samples=2048
copies=4
safety=2.0
"""


def preset(name: str) -> Manifest:
    if name == "triangle-interp":
        return Manifest.parse(_TRIANGLE.format(name=name, m_test=2), name)
    if name == "triangle-extrap":
        return Manifest.parse(_TRIANGLE.format(name=name, m_test=3), name)
    if name == "convergence":
        return Manifest.parse(_CONVERGENCE, name)
    if name == "separation":
        return Manifest.parse(_SEPARATION, name)
    raise KeyError(f"unknown recipe {name!r}; expected one of {RECIPES}")


def _scaled(value: int, scale: float, minimum: int = 1) -> int:
    return max(minimum, int(round(value * scale)))


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _words(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def _csv(rows: list[list], header: list[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(x: float) -> str:
    return format(float(x), ".10g")


def model_config(manifest: Manifest) -> ModelConfig:
    return ModelConfig.from_mapping(manifest.section("model"))


def train_config(manifest: Manifest, mode: str, seed: int, task: str, scale: float = 1.0, **overrides) -> TrainConfig:
    values = dict(manifest.section("train"))
    values.update({k: str(v) for k, v in overrides.items()})
    values["epochs"] = str(_scaled(int(values.get("epochs", "100")), scale))
    values.update(mode=mode, seed=str(seed), task=task)
    return TrainConfig.from_mapping(values)


# --------------------------------------------------------------------------- triangle detection


def triangle_dataset(master: int, purpose: str, count: int, n: int, m: int) -> list[tuple[Graph, np.ndarray]]:
    """BA graphs labeled by triangle membership; graph ``i`` uses its own derived seed."""
    graphs = (barabasi_albert(n, m, seed_stream(master, purpose, i)) for i in range(count))
    return [(g, label_triangles(g).astype(np.int64)) for g in graphs]


@dataclass
class TriangleData:
    train: list
    test: list
    extrap: list


def triangle_data(manifest: Manifest, scale: float = 1.0, m_extrap: int = 3) -> TriangleData:
    d = manifest.section("data")
    n = int(d.get("nodes", "100"))
    n_train = _scaled(int(d.get("train_graphs", "20")), scale, 2)
    n_test = _scaled(int(d.get("test_graphs", "20")), scale, 2)
    m_train = int(d.get("m_train", "2"))
    return TriangleData(
        triangle_dataset(manifest.seed, "data-train", n_train, n, m_train),
        triangle_dataset(manifest.seed, "data-test", n_test, n, m_train),
        triangle_dataset(manifest.seed, "data-extrap", n_test, n, m_extrap),
    )


@dataclass
class TriangleRun:
    mode: str
    seed: int
    k: int
    params: ModelParams
    history: TrainHistory
    interp_acc: float
    extrap_acc: float


def triangle_run(
    manifest: Manifest, data: TriangleData, mode: str, seed: int, scale: float = 1.0, k: int | None = None
) -> TriangleRun:
    """Train one model and score it on the interpolation and extrapolation splits."""
    overrides = {} if k is None else {"k": k}
    cfg = train_config(manifest, mode, seed, "node-binary", scale, **overrides)
    mc = model_config(manifest)
    params, history = train(data.train, data.test, cfg, mc)
    interp = accuracy(params, data.test, mc, mode, rng_for(seed, "final-interp"))
    extrap = accuracy(params, data.extrap, mc, mode, rng_for(seed, "final-extrap"))
    return TriangleRun(mode, seed, cfg.k, params, history, interp, extrap)


def triangle_summary(runs: list[TriangleRun], column: str) -> str:
    rows = [[r.mode, r.k, r.seed, _fmt(getattr(r, column))] for r in runs]
    for mode, k in dict.fromkeys((r.mode, r.k) for r in runs):
        vals = [getattr(r, column) for r in runs if r.mode == mode and r.k == k]
        rows.append([mode, k, "mean", _fmt(np.mean(vals))])
        rows.append([mode, k, "std", _fmt(np.std(vals))])
    return _csv(rows, ["mode", "k", "seed", column])


# --------------------------------------------------------------------------- convergence surrogate


def convergence_dataset(count: int, first_n: int = 6) -> list[tuple[Graph, int]]:
    """``C_n`` (label 0) against ``C_3 + C_{n-3}`` (label 1): equal size, both 2-regular."""
    data: list[tuple[Graph, int]] = []
    for n in range(first_n, first_n + count):
        data.append((cycle_graph(n), 0))
        data.append((disjoint_union(cycle_graph(3), cycle_graph(n - 3)), 1))
    return data


def permuted_copies(data, master: int) -> list:
    rng = rng_for(master, "data-permute")
    return [(g.permute(rng.permutation(g.n)), y) for g, y in data]


def smooth(curve, window: int = 1) -> np.ndarray:
    """Trailing moving average; the first ``window - 1`` entries average what is available."""
    curve = np.asarray(curve, dtype=float)
    if window <= 1:
        return curve
    c = np.concatenate([[0.0], np.cumsum(curve)])
    idx = np.arange(1, len(curve) + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def first_epoch_reaching(curve: np.ndarray, fraction: float = 0.95, window: int = 1) -> int:
    """1-based epoch at which the smoothed ``curve`` first reaches ``fraction`` of its final value.

    The final value is the smoothed curve's last entry, i.e. the mean over the
    last ``window`` epochs.
    """
    sm = smooth(curve, window)
    target = fraction * sm[-1]
    return int(np.flatnonzero(sm >= target - 1e-12)[0]) + 1


@dataclass
class ConvergenceRun:
    mode: str
    seed: int
    history: TrainHistory
    epoch_to_target: int
    final_acc: float


def convergence_runs(manifest: Manifest, scale: float = 1.0) -> list[ConvergenceRun]:
    d, e = manifest.section("data"), manifest.section("eval")
    data = convergence_dataset(_scaled(int(d.get("pairs", "20")), scale, 2), int(d.get("first_n", "6")))
    test = permuted_copies(data, manifest.seed)
    fraction = float(e.get("fraction", "0.95"))
    window = int(e.get("window", "1"))
    mc = model_config(manifest)
    runs = []
    for seed in _ints(e.get("seeds", "0,1,2")):
        for mode in _words(e.get("modes", "rni,siri")):
            cfg = train_config(manifest, mode, seed, "graph-binary", scale)
            _, history = train(data, test, cfg, mc)
            curve = smooth(history.test_accuracy(), window)
            runs.append(ConvergenceRun(mode, seed, history, first_epoch_reaching(curve, fraction), float(curve[-1])))
    return runs


def convergence_summary(runs: list[ConvergenceRun]) -> str:
    rows = [[r.mode, r.seed, r.epoch_to_target, _fmt(r.final_acc)] for r in runs]
    return _csv(rows, ["mode", "seed", "epoch_to_target", "final_acc"])


# --------------------------------------------------------------------------- separation surrogate


def separation_pairs(manifest: Manifest) -> list[tuple[str, str, Graph, Graph]]:
    d = manifest.section("data")
    out = []
    for family, key in (("wl1-hard-basic", "basic"), ("wl1-hard-regular", "regular"), ("csl", "csl")):
        count = int(d.get(key, "0"))
        if count:
            for p in generate_pair_family(family, count, seed_stream(manifest.seed, "pairs", len(out))):
                out.append((family, p.name, p.first, p.second))
    return out


@dataclass
class SeparationResult:
    reports: dict[str, SuiteReport] = field(default_factory=dict)  # mode -> report


def separation_run(manifest: Manifest, scale: float = 1.0, progress: Callable[[str], None] | None = None) -> SeparationResult:
    """Train one Siamese model per (mode, pair), calibrate its threshold on copies, then judge the pair under the gate."""
    e = manifest.section("eval")
    S = int(e.get("samples", "16"))
    copies = int(e.get("copies", "4"))
    safety = float(e.get("safety", "2.0"))
    mc = model_config(manifest)
    pairs = separation_pairs(manifest)
    result = SeparationResult()
    for mode in _words(e.get("modes", "constant,siri")):
        report = SuiteReport()
        for i, (family, pair_id, g1, g2) in enumerate(pairs):
            seed = seed_stream(manifest.seed, "separation", i)
            cfg = train_config(manifest, mode, seed, "pair-siamese", scale)
            params, _ = train_siamese(g1, g2, cfg, mc)
            try:
                eps = calibrate_threshold(params, [g1, g2], S, seed, mc, mode, copies, safety)
                verdict = gated_verdict(params, g1, g2, S, eps, seed, mc, mode, safety)
            except UndefinedCosineError:
                verdict = PairVerdict(0.0, False, False, float("nan"), S, float("nan"))
            report.rows.append(SuiteRow(family, pair_id, verdict))
            if progress:
                progress(f"{mode} {pair_id} distance={verdict.cosine_distance:.3g} separated={verdict.separated}")
        result.reports[mode] = report
    return result


# --------------------------------------------------------------------------- entry point


def reproduce(name: str, out_dir, scale: float = 1.0, manifest: Manifest | None = None, progress=None) -> dict[str, Path]:
    """Run a recipe and write its CSVs under ``out_dir``; returns the written paths."""
    manifest = manifest or preset(name)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files: dict[str, str] = {"manifest.txt": manifest.to_text()}
    if name in ("triangle-interp", "triangle-extrap"):
        m_test = int(manifest.section("data").get("m_test", "2" if name == "triangle-interp" else "3"))
        data = triangle_data(manifest, scale, m_extrap=m_test)
        runs = []
        for seed in _ints(manifest.section("eval").get("seeds", "0")):
            for mode in _words(manifest.section("eval").get("modes", "siri")):
                run = triangle_run(manifest, data, mode, seed, scale)
                runs.append(run)
                files[f"metrics_{mode}_seed{seed}.csv"] = run.history.to_csv()
                if progress:
                    progress(f"{mode} seed={seed} interp={run.interp_acc:.4f} extrap={run.extrap_acc:.4f}")
        column = "interp_acc" if m_test == int(manifest.section("data").get("m_train", "2")) else "extrap_acc"
        files["summary.csv"] = triangle_summary(runs, column)
    elif name == "convergence":
        runs = convergence_runs(manifest, scale)
        for r in runs:
            files[f"metrics_{r.mode}_seed{r.seed}.csv"] = r.history.to_csv()
        files["summary.csv"] = convergence_summary(runs)
    elif name == "separation":
        result = separation_run(manifest, scale, progress)
        for mode, report in result.reports.items():
            files[f"pairs_{mode}.csv"] = report.rows_csv()
            files[f"summary_{mode}.csv"] = report.summary_csv()
    else:
        raise KeyError(f"unknown recipe {name!r}; expected one of {RECIPES}")
    written = {}
    for fname, text in files.items():
        path = out / fname
        path.write_text(text)
        written[fname] = path
    return written
