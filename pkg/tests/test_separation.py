import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from uidgnn.graph import barabasi_albert, cycle_graph, generate_pair_family
from uidgnn.model import ModelConfig, RnfSpec, init_params
from uidgnn.separation import (
    EPS_FLOOR,
    UndefinedCosineError,
    calibrate_threshold,
    cosine_distance,
    gated_verdict,
    judge_pair,
    mean_embedding,
    run_suite,
)

CFG = ModelConfig(layers=3, hidden_dim=16, rnf_dim=8)
PARAMS = init_params(CFG, 0)


def _wl_hard_pairs():
    pairs = []
    for family in ("wl1-hard-basic", "wl1-hard-regular", "csl"):
        for p in generate_pair_family(family, 3, seed=1):
            pairs.append((family, p.name, p.first, p.second))
    return pairs


def test_constant_embedding_ignores_samples_and_seed():
    g = barabasi_albert(12, 2, 0)
    a = mean_embedding(PARAMS, g, 1, 0, CFG, "constant")
    b = mean_embedding(PARAMS, g, 32, 99, CFG, "constant")
    assert np.array_equal(a, b)


def test_identical_draws_reduce_to_single_draw(monkeypatch):
    g = barabasi_albert(10, 2, 1)
    fixed = np.random.default_rng(0).standard_normal((10, 8))
    monkeypatch.setattr(RnfSpec, "sample", lambda self, n, rng: fixed)
    one = mean_embedding(PARAMS, g, 1, 0, CFG)
    many = mean_embedding(PARAMS, g, 12, 5, CFG)
    assert np.allclose(one, many, rtol=1e-12)


def test_permuted_copy_has_identical_constant_embedding():
    g = barabasi_albert(20, 2, 3)
    perm = np.random.default_rng(1).permutation(20)
    a = mean_embedding(PARAMS, g, 4, 0, CFG, "constant")
    b = mean_embedding(PARAMS, g.permute(perm), 4, 0, CFG, "constant")
    assert np.allclose(a, b, rtol=0, atol=1e-9)


def test_cosine_distance_values():
    assert cosine_distance(np.array([1.0, 0.0]), np.array([0.0, 2.0])) == pytest.approx(1.0)
    assert cosine_distance(np.array([1.0, 1.0]), np.array([-1.0, -1.0])) == pytest.approx(2.0)
    with pytest.raises(UndefinedCosineError):
        cosine_distance(np.zeros(3), np.ones(3))


def test_same_graph_constant_is_not_distinguished():
    g = barabasi_albert(12, 2, 0)
    v = judge_pair(PARAMS, g, g, 4, 1e-6, 0, CFG, "constant")
    assert v.cosine_distance == pytest.approx(0.0, abs=1e-12)
    assert not v.distinguished and v.reliable and not v.separated


def test_judge_pair_validates_eps():
    g = cycle_graph(5)
    with pytest.raises(ValueError):
        judge_pair(PARAMS, g, g, 4, 0.0, 0, CFG)
    with pytest.raises(ValueError):
        mean_embedding(PARAMS, g, 0, 0, CFG)


@given(st.integers(0, 2**31))
def test_judge_pair_is_exactly_symmetric(seed):
    g1, g2 = barabasi_albert(10, 2, seed % 50), barabasi_albert(10, 1, seed % 50)
    a = judge_pair(PARAMS, g1, g2, 3, 0.01, seed, CFG)
    b = judge_pair(PARAMS, g2, g1, 3, 0.01, seed, CFG)
    assert a.cosine_distance == b.cosine_distance
    assert a.copy_distance == b.copy_distance


def test_distinguished_implies_distance_above_threshold():
    g1, g2 = barabasi_albert(12, 2, 0), cycle_graph(12)
    v = judge_pair(PARAMS, g1, g2, 8, 1e-4, 0, CFG)
    assert v.distinguished == (v.cosine_distance > 1e-4)
    assert v.samples == 8 and v.threshold == 1e-4


def test_constant_model_separates_no_wl_hard_pair():
    pairs = _wl_hard_pairs()
    for family, name, g1, g2 in pairs:
        a = mean_embedding(PARAMS, g1, 1, 0, CFG, "constant")
        b = mean_embedding(PARAMS, g2, 1, 0, CFG, "constant")
        assert np.allclose(a, b, rtol=0, atol=1e-9), name
    eps = calibrate_threshold(PARAMS, [g for p in pairs for g in p[2:]], 1, 0, CFG, "constant")
    report = run_suite(PARAMS, pairs, 1, eps, 0, CFG, "constant")
    assert report.separated == 0
    assert all(r.verdict.reliable for r in report.rows)


def test_gate_rejects_thresholds_that_distinguish_copies():
    g1, g2 = barabasi_albert(12, 2, 0), cycle_graph(12)
    tiny = 1e-12
    first = judge_pair(PARAMS, g1, g2, 4, tiny, 0, CFG)
    assert not first.reliable
    v = gated_verdict(PARAMS, g1, g2, 4, tiny, 0, CFG, rounds=5)
    assert v.threshold >= 2 * first.copy_distance
    assert v.reliable and v.separated == v.distinguished
    # a single round means no recalibration
    assert gated_verdict(PARAMS, g1, g2, 4, tiny, 0, CFG, rounds=1) == first


def test_calibrated_threshold_respects_floor():
    graphs = [barabasi_albert(10, 2, s) for s in range(3)]
    eps = calibrate_threshold(PARAMS, graphs, 8, 0, CFG, copies=3)
    assert eps >= EPS_FLOOR
    # constant features leave only summation-order noise, so the floor dominates
    assert calibrate_threshold(PARAMS, graphs, 8, 0, CFG, "constant") < 1e-8


def test_empty_suite():
    report = run_suite(PARAMS, [], 4, 0.1, 0, CFG)
    assert report.counts() == {} and report.separated == 0 and report.accuracy == 0.0
    assert report.rows_csv() == "family,pair_id,distance,distinguished,reliable\n"
    assert report.summary_csv() == "family,separated,total,percent\n"


def test_identical_pairs_are_never_separated():
    g = barabasi_albert(12, 2, 5)
    pairs = [("same", f"p{i}", g, g) for i in range(3)]
    report = run_suite(PARAMS, pairs, 4, 0.05, 0, CFG)
    assert report.accuracy == 0.0
    assert report.counts() == {"same": (0, 3)}
    assert report.summary_csv().splitlines()[1] == "same,0,3,0"


def test_suite_csv_is_deterministic():
    pairs = _wl_hard_pairs()[:3]
    a = run_suite(PARAMS, pairs, 4, 0.01, 7, CFG)
    b = run_suite(PARAMS, pairs, 4, 0.01, 7, CFG)
    assert a.rows_csv() == b.rows_csv()
    assert len(a.rows_csv().splitlines()) == 4
