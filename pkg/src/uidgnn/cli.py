"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 invalid input (bad config, missing or
malformed file), 3 a check ran and failed.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click

from . import autodiff as ad
from .checks import gradient_suite, oracle_suite
from .config import Manifest, parse_key_values, seed_stream
from .experiments import RECIPES, model_config, reproduce, train_config, triangle_data
from .graph import (
    GeneratorSpec,
    GraphParseError,
    ParameterError,
    generate,
    generate_pair_family,
    label_triangles,
    read_graph,
    read_labels,
    read_pair_list,
    write_graph,
    write_labels,
    write_pair_list,
)
from .invariance import set_invariance_report
from .model import load_config, save_config
from .separation import DEFAULT_SAMPLES, calibrate_threshold, run_suite
from .training import train

OUTPUT_ROOT_ENV = "UIDGNN_OUTPUT_ROOT"
EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_CHECK = 0, 1, 2, 3


class CheckFailed(Exception):
    pass


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))


def _out_dir(out: str | None, default: str) -> Path:
    path = Path(out) if out else output_root() / default
    path.mkdir(parents=True, exist_ok=True)
    return path


def _require(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"missing file: {p}")
    return p


@click.group()
def cli():
    """Random-node-feature GNNs: training regimes, invariance and separation checks."""


# --------------------------------------------------------------------------- data


@cli.command("gen-data")
@click.argument("spec_file")
@click.argument("out_dir")
def gen_data(spec_file, out_dir):
    """Write graphs, triangle labels and (optionally) a pair list from a key=value spec.

    Keys: kind, n, m, skip, sizes, seed, count; pair_family and pair_count add
    verified 1-WL-hard pairs.
    """
    values = parse_key_values(_require(spec_file).read_text(), spec_file)
    known = {"kind", "n", "m", "skip", "sizes", "seed", "count", "pair_family", "pair_count"}
    for key in values:
        if key not in known:
            raise ParameterError(key, "unknown gen-data setting")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = int(values.get("seed", "0"))
    count = int(values.get("count", "1"))
    written = 0
    if "kind" in values:
        sizes = tuple(int(x) for x in values["sizes"].split(",")) if values.get("sizes") else ()
        for i in range(count):
            spec = GeneratorSpec(
                values["kind"],
                int(values.get("n", "0")),
                int(values.get("m", "1")),
                int(values.get("skip", "2")),
                seed_stream(seed, "gen-data", i),
                sizes,
            )
            g = generate(spec)
            write_graph(g, out / f"graph_{i:04d}.txt")
            write_labels(label_triangles(g).astype(int), out / f"labels_{i:04d}.txt")
            written += 1
    if "pair_family" in values:
        pairs = generate_pair_family(values["pair_family"], int(values.get("pair_count", "10")), seed)
        entries = []
        for i, p in enumerate(pairs):
            a, b = f"pair_{i:03d}_a.txt", f"pair_{i:03d}_b.txt"
            write_graph(p.first, out / a)
            write_graph(p.second, out / b)
            entries.append((a, b, p.isomorphic))
        write_pair_list(entries, out / "pairs.txt")
        written += 2 * len(pairs)
    click.echo(f"wrote {written} graphs to {out}")


def _load_dir(path) -> list:
    """Graphs with triangle-membership labels from a gen-data directory."""
    d = _require(path)
    graphs = sorted(d.glob("graph_*.txt"))
    if not graphs:
        raise FileNotFoundError(f"no graph_*.txt files in {d}")
    data = []
    for gp in graphs:
        g = read_graph(gp)
        lp = gp.with_name(gp.name.replace("graph_", "labels_"))
        data.append((g, read_labels(lp) if lp.exists() else label_triangles(g).astype(int)))
    return data


# --------------------------------------------------------------------------- training


@cli.command("train")
@click.argument("manifest_file")
@click.option("--out", default=None, help="Run directory (default: $UIDGNN_OUTPUT_ROOT/<name>).")
@click.option("--mode", default=None, help="Override [train] mode.")
def train_cmd(manifest_file, out, mode):
    """Train from a manifest; writes params.txt, model.cfg, metrics.csv."""
    manifest = Manifest.load(_require(manifest_file))
    data_sec = manifest.section("data")
    if "train_dir" in data_sec:
        train_set = _load_dir(data_sec["train_dir"])
        test_set = _load_dir(data_sec["test_dir"]) if "test_dir" in data_sec else []
    else:
        data = triangle_data(manifest, m_extrap=int(data_sec.get("m_test", "2")))
        train_set, test_set = data.train, data.test
    mode = mode or manifest.section("train").get("mode", "siri")
    train_values = {k: v for k, v in manifest.section("train").items() if k not in ("mode", "seed", "task")}
    m = Manifest(manifest.name, manifest.seed, {**manifest.sections, "train": train_values})
    cfg = train_config(m, mode, manifest.seed, manifest.section("train").get("task", "node-binary"))
    mc = model_config(manifest)
    params, history = train(train_set, test_set, cfg, mc)
    run = _out_dir(out, manifest.name)
    ad.save_params(params, run / "params.txt")
    save_config(mc, run / "model.cfg")
    (run / "train.cfg").write_text("".join(f"{k}={v}\n" for k, v in vars(cfg).items()))
    (run / "metrics.csv").write_text(history.to_csv())
    last = history.records[-1]
    click.echo(f"epochs={len(history)} train_acc={last.train_acc:.4f} test_acc={last.test_acc:.4f} -> {run}")


def _load_checkpoint(path):
    d = _require(path)
    mc = load_config(_require(d / "model.cfg"))
    params = ad.load_params(_require(d / "params.txt"))
    mode = "siri"
    if (d / "train.cfg").exists():
        mode = parse_key_values((d / "train.cfg").read_text()).get("mode", "siri")
    return params, mc, mode


# --------------------------------------------------------------------------- evaluation


@cli.command("eval-invariance")
@click.argument("checkpoint")
@click.argument("train_dir")
@click.argument("test_dir")
@click.option("--T", "T", default=200, show_default=True, type=int)
@click.option("--seeds", default="0,1,2", show_default=True)
@click.option("--resample", type=click.Choice(["row", "all"]), default="row", show_default=True)
@click.option("--out", default=None)
def eval_invariance(checkpoint, train_dir, test_dir, T, seeds, resample, out):
    """Invariance ratios of a checkpoint over train and test graph directories."""
    params, mc, mode = _load_checkpoint(checkpoint)
    if T < 1:
        raise ParameterError("T", "must be >= 1")
    seed_list = [int(s) for s in seeds.split(",") if s.strip()]
    train_g = [g for g, _ in _load_dir(train_dir)]
    test_g = [g for g, _ in _load_dir(test_dir)]
    report = set_invariance_report(params, train_g, test_g, T, seed_list, mc, mode, resample)
    run = _out_dir(out, "invariance")
    (run / "invariance.csv").write_text(report.to_csv())
    for line in report.summary_lines():
        click.echo(line)
    click.echo(f"train={report.mean('train'):.4f}+-{report.std('train'):.4f} test={report.mean('test'):.4f}+-{report.std('test'):.4f}")


@cli.command("eval-pairs")
@click.argument("checkpoint")
@click.argument("pair_list")
@click.option("--S", "S", default=DEFAULT_SAMPLES, show_default=True, type=int)
@click.option("--eps", default=None, type=float, help="Threshold; calibrated on relabeled copies when omitted.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--family", default="pairs", show_default=True)
@click.option("--out", default=None)
def eval_pairs(checkpoint, pair_list, S, eps, seed, family, out):
    """Judge every pair of a pair list with one checkpoint."""
    params, mc, mode = _load_checkpoint(checkpoint)
    base = _require(pair_list).parent
    pairs = []
    for a, b, _iso in read_pair_list(pair_list):
        pairs.append((family, f"{Path(a).stem}|{Path(b).stem}", read_graph(_require(base / a)), read_graph(_require(base / b))))
    if eps is None:
        eps = calibrate_threshold(params, [g for p in pairs for g in p[2:]], S, seed, mc, mode)
    report = run_suite(params, pairs, S, eps, seed, mc, mode)
    run = _out_dir(out, "pairs")
    (run / "pairs.csv").write_text(report.rows_csv())
    (run / "summary.csv").write_text(report.summary_csv())
    click.echo(f"eps={eps:.4g} separated={report.separated}/{len(report.rows)}")


# --------------------------------------------------------------------------- checks


def _report(results, out: str | None, name: str):
    failed = [r for r in results if not r.passed]
    for r in results:
        click.echo(r.line())
    if failed:
        run = _out_dir(out, name)
        dump = {r.name: {"detail": r.detail, "counterexample": r.counterexample} for r in failed}
        (run / "counterexamples.json").write_text(json.dumps(dump, indent=2, sort_keys=True))
        raise CheckFailed(f"{len(failed)} check(s) failed; counterexamples in {run / 'counterexamples.json'}")


@cli.command("oracle-check")
@click.option("--max-n", default=6, show_default=True, type=int, help="Exhaustive graph size bound.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", default=None)
def oracle_check(max_n, seed, out):
    """Triangle-network, matching-oracle and WL/isomorphism property suites."""
    _report(oracle_suite(max_n, seed), out, "oracle-check")


@cli.command("grad-check")
@click.option("--shapes", default=20, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", default=None)
def grad_check(shapes, seed, out):
    """Reverse-mode gradients of every primitive and of a 6-layer GNN loss against central differences."""
    _report(gradient_suite(shapes, seed), out, "grad-check")


@cli.command("reproduce")
@click.argument("name", type=click.Choice(RECIPES))
@click.option("--scale", default=1.0, show_default=True, type=float, help="Shrinks epochs and graph counts.")
@click.option("--manifest", "manifest_file", default=None, help="Override the built-in preset.")
@click.option("--out", default=None)
def reproduce_cmd(name, scale, manifest_file, out):
    """Run a canned desk-scale experiment and write its CSVs."""
    if not scale > 0:
        raise ParameterError("scale", "must be > 0")
    manifest = Manifest.load(_require(manifest_file)) if manifest_file else None
    run = _out_dir(out, name)
    written = reproduce(name, run, scale, manifest, progress=click.echo)
    for fname in written:
        click.echo(f"wrote {run / fname}")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="uidgnn", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.UsageError as exc:
        exc.show()
        return EXIT_USAGE
    except click.Abort:
        return EXIT_USAGE
    except CheckFailed as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_CHECK
    except ParameterError as exc:
        click.echo(f"invalid setting {exc}", err=True)
        return EXIT_INVALID
    except (FileNotFoundError, GraphParseError, ValueError, KeyError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
