import json

import pytest

from uidgnn import cli
from uidgnn.config import Manifest, parse_key_values, rng_for, seed_stream
from uidgnn.graph import ParameterError, read_graph, read_labels, read_pair_list

TINY_MANIFEST = """\
name=tiny
seed=3
[data]
train_graphs=2
test_graphs=2
nodes=12
m_train=2
m_test=2
[model]
layers=2
hidden_dim=8
rnf_dim=4
[train]
mode=siri
epochs=2
lr=1e-2
k=2
"""


@pytest.fixture
def run_cli(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(cli.OUTPUT_ROOT_ENV, str(tmp_path / "runs"))
    monkeypatch.chdir(tmp_path)

    def invoke(*args):
        code = cli.main(list(args))
        out = capsys.readouterr()
        return code, out.out, out.err

    return invoke


# --------------------------------------------------------------------------- config helpers


def test_seed_streams_are_purpose_tagged():
    assert seed_stream(0, "init") == seed_stream(0, "init")
    assert seed_stream(0, "init") != seed_stream(0, "rnf")
    assert seed_stream(0, "init") != seed_stream(1, "init")
    assert seed_stream(0, "init", 1) != seed_stream(0, "init", 2)
    assert 0 <= seed_stream(123, "x") < 2**63
    assert rng_for(4, "a").random() == rng_for(4, "a").random()


def test_manifest_round_trip():
    m = Manifest.parse(TINY_MANIFEST)
    assert (m.name, m.seed) == ("tiny", 3)
    assert m.section("model")["hidden_dim"] == "8"
    assert Manifest.parse(m.to_text()) == m


@pytest.mark.parametrize("text", ["[bogus]\na=1\n", "junk line\n", "color=red\n"])
def test_manifest_errors(text):
    with pytest.raises(ParameterError):
        Manifest.parse(text)


def test_key_values_ignore_comments():
    assert parse_key_values("a = 1  # note\n\n# full\nb=x=y\n") == {"a": "1", "b": "x=y"}


# --------------------------------------------------------------------------- commands


def test_gen_data_writes_graphs_labels_and_pairs(run_cli, tmp_path):
    spec = tmp_path / "spec.txt"
    spec.write_text("kind=barabasi-albert\nn=20\nm=2\nseed=1\ncount=3\npair_family=wl1-hard-basic\npair_count=2\n")
    code, out, _ = run_cli("gen-data", str(spec), str(tmp_path / "data"))
    assert code == 0 and "wrote 7 graphs" in out
    g = read_graph(tmp_path / "data" / "graph_0001.txt")
    assert g.n == 20 and g.num_edges == 37
    assert read_labels(tmp_path / "data" / "labels_0001.txt").shape == (20,)
    assert len(read_pair_list(tmp_path / "data" / "pairs.txt")) == 2


def test_gen_data_invalid_spec_exit_2(run_cli, tmp_path):
    spec = tmp_path / "spec.txt"
    spec.write_text("kind=barabasi-albert\nn=3\nm=5\n")
    code, _, err = run_cli("gen-data", str(spec), str(tmp_path / "d"))
    assert code == 2 and "m" in err
    spec.write_text("shape=round\n")
    assert run_cli("gen-data", str(spec), str(tmp_path / "d"))[0] == 2


def test_missing_file_exit_2(run_cli, tmp_path):
    code, _, err = run_cli("train", str(tmp_path / "nope.txt"))
    assert code == 2 and "missing" in err


def test_usage_error_exit_1(run_cli):
    assert run_cli("no-such-command")[0] == 1
    assert run_cli("reproduce", "not-a-recipe")[0] == 1


def test_train_is_byte_deterministic(run_cli, tmp_path):
    manifest = tmp_path / "m.txt"
    manifest.write_text(TINY_MANIFEST)
    assert run_cli("train", str(manifest), "--out", str(tmp_path / "a"))[0] == 0
    assert run_cli("train", str(manifest), "--out", str(tmp_path / "b"))[0] == 0
    for name in ("metrics.csv", "params.txt", "model.cfg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    header = (tmp_path / "a" / "metrics.csv").read_text().splitlines()[0]
    assert header == "epoch,task_loss,contrastive_loss,total_loss,train_acc,test_acc"


def test_train_default_output_root(run_cli, tmp_path):
    manifest = tmp_path / "m.txt"
    manifest.write_text(TINY_MANIFEST)
    assert run_cli("train", str(manifest))[0] == 0
    assert (tmp_path / "runs" / "tiny" / "metrics.csv").exists()


def test_train_bad_setting_exit_2(run_cli, tmp_path):
    manifest = tmp_path / "m.txt"
    manifest.write_text(TINY_MANIFEST.replace("k=2", "k=0"))
    code, _, err = run_cli("train", str(manifest))
    assert code == 2 and "k" in err


def test_eval_commands_on_a_checkpoint(run_cli, tmp_path):
    spec = tmp_path / "spec.txt"
    spec.write_text("kind=barabasi-albert\nn=12\nm=2\nseed=2\ncount=2\npair_family=wl1-hard-basic\npair_count=2\n")
    run_cli("gen-data", str(spec), str(tmp_path / "data"))
    manifest = tmp_path / "m.txt"
    manifest.write_text(TINY_MANIFEST + f"[data]\ntrain_dir={tmp_path / 'data'}\ntest_dir={tmp_path / 'data'}\n")
    assert run_cli("train", str(manifest), "--out", str(tmp_path / "ckpt"))[0] == 0

    code, out, _ = run_cli(
        "eval-invariance", str(tmp_path / "ckpt"), str(tmp_path / "data"), str(tmp_path / "data"),
        "--T", "10", "--seeds", "0,1", "--out", str(tmp_path / "inv"),
    )
    assert code == 0 and "train=" in out
    assert (tmp_path / "inv" / "invariance.csv").read_text().startswith("set,node,ratio\n")

    code, out, _ = run_cli(
        "eval-pairs", str(tmp_path / "ckpt"), str(tmp_path / "data" / "pairs.txt"), "--S", "4", "--out", str(tmp_path / "pairs")
    )
    assert code == 0 and "separated=" in out
    assert (tmp_path / "pairs" / "pairs.csv").read_text().startswith("family,pair_id,distance,distinguished,reliable\n")
    assert (tmp_path / "pairs" / "summary.csv").read_text().startswith("family,separated,total,percent\n")


def test_grad_check_command(run_cli):
    code, out, _ = run_cli("grad-check", "--shapes", "2")
    assert code == 0
    assert all(line.startswith("PASS") for line in out.strip().splitlines())


def test_oracle_check_command(run_cli):
    code, out, _ = run_cli("oracle-check", "--max-n", "4")
    assert code == 0 and "FAIL" not in out


def test_failed_check_exits_3_with_counterexample(run_cli, tmp_path, monkeypatch):
    from uidgnn.checks import CheckResult

    monkeypatch.setattr(cli, "oracle_suite", lambda max_n, seed: [CheckResult("oracle:fake", False, "boom", {"edges": [[0, 1]]})])
    code, out, err = run_cli("oracle-check", "--out", str(tmp_path / "oc"))
    assert code == 3 and "FAIL oracle:fake" in out
    dump = json.loads((tmp_path / "oc" / "counterexamples.json").read_text())
    assert dump["oracle:fake"]["counterexample"] == {"edges": [[0, 1]]}


def test_reproduce_rejects_bad_scale(run_cli):
    assert run_cli("reproduce", "convergence", "--scale", "0")[0] == 2


def test_reproduce_triangle_smoke(run_cli, tmp_path):
    manifest = tmp_path / "tri.txt"
    manifest.write_text(
        "name=triangle-interp\nseed=0\n[data]\ntrain_graphs=2\ntest_graphs=2\nnodes=15\nm_train=2\nm_test=2\n"
        "[model]\nlayers=2\nhidden_dim=8\nrnf_dim=4\n[train]\nepochs=3\nlr=1e-2\n[eval]\nmodes=constant,siri\nseeds=0\n"
    )
    out_dir = tmp_path / "rep"
    code, out, _ = run_cli("reproduce", "triangle-interp", "--manifest", str(manifest), "--out", str(out_dir))
    assert code == 0
    assert (out_dir / "summary.csv").exists()
