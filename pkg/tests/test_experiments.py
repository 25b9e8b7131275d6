import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from uidgnn.config import Manifest
from uidgnn.experiments import (
    RECIPES,
    convergence_dataset,
    first_epoch_reaching,
    model_config,
    preset,
    reproduce,
    separation_pairs,
    smooth,
    train_config,
    triangle_data,
)
from uidgnn.graph import are_isomorphic, wl_refine_joint


def test_every_recipe_has_a_valid_preset():
    for name in RECIPES:
        m = preset(name)
        model_config(m)
        train_config(m, "siri", 0, "node-binary")
    with pytest.raises(KeyError):
        preset("nope")


def test_scale_shrinks_epochs_and_counts():
    m = preset("triangle-interp")
    assert train_config(m, "siri", 0, "node-binary", scale=0.1).epochs == 50
    data = triangle_data(m, scale=0.1)
    assert len(data.train) == 2 and data.train[0][0].n == 100


def test_triangle_data_is_deterministic_and_split_by_purpose():
    m = preset("triangle-interp")
    a, b = triangle_data(m, 0.1), triangle_data(m, 0.1)
    assert all(x[0] == y[0] for x, y in zip(a.train, b.train))
    assert a.train[0][0] != a.test[0][0]
    assert a.extrap[0][0].num_edges == 3 + 97 * 3


def test_convergence_pairs_are_wl_hard():
    data = convergence_dataset(5)
    assert len(data) == 10
    for (g0, y0), (g1, y1) in zip(data[::2], data[1::2]):
        assert (y0, y1) == (0, 1) and g0.n == g1.n
        c0, c1 = wl_refine_joint([g0, g1])
        assert c0.histogram == c1.histogram
        assert not are_isomorphic(g0, g1)


def test_separation_pairs_follow_manifest():
    pairs = separation_pairs(preset("separation"))
    families = [p[0] for p in pairs]
    assert families.count("wl1-hard-basic") == 4
    assert families.count("wl1-hard-regular") == 3
    assert families.count("csl") == 3


def test_smooth_and_first_epoch():
    assert smooth([1, 2, 3], 1).tolist() == [1, 2, 3]
    assert np.allclose(smooth([0, 2, 4, 6], 2), [0, 1, 3, 5])
    assert first_epoch_reaching([0.1, 0.5, 0.96, 0.9, 1.0], 0.95) == 3
    assert first_epoch_reaching([0.5, 0.5, 0.5], 0.95) == 1
    # an early spike counts on the raw curve but is averaged away when smoothing
    curve = [0.2, 1.0, 0.2, 0.2, 0.8, 0.8, 0.8, 0.8]
    assert first_epoch_reaching(curve, 0.95) == 2
    assert first_epoch_reaching(curve, 0.95, window=3) == 7


@given(st.lists(st.floats(0, 1), min_size=1, max_size=40), st.integers(1, 10))
def test_first_epoch_is_within_range(curve, window):
    e = first_epoch_reaching(curve, 0.95, window)
    assert 1 <= e <= len(curve)
    sm = smooth(curve, window)
    assert np.allclose(sm[-1], np.mean(curve[-window:]))


def _tiny(name):
    m = preset(name)
    if name.startswith("triangle"):
        m.section("data").update(train_graphs="2", test_graphs="2", nodes="15")
        m.section("model").update(layers="2", hidden_dim="8", rnf_dim="4")
        m.section("eval").update(seeds="0")
    elif name == "convergence":
        m.section("data").update(pairs="2")
        m.section("model").update(layers="2", hidden_dim="8", rnf_dim="4")
        m.section("eval").update(seeds="0")
    else:
        m.section("data").update(basic="1", regular="0", csl="1")
        m.section("model").update(layers="2", hidden_dim="8", rnf_dim="4")
        m.section("eval").update(samples="8")
    m.section("train").update(epochs="3")
    return m


@pytest.mark.parametrize("name", RECIPES)
def test_reproduce_is_byte_deterministic(tmp_path, name):
    m = _tiny(name)
    a = reproduce(name, tmp_path / "a", manifest=m)
    b = reproduce(name, tmp_path / "b", manifest=Manifest.parse(m.to_text()))
    assert sorted(a) == sorted(b)
    assert any(f.endswith(".csv") for f in a)
    for fname in a:
        assert a[fname].read_bytes() == b[fname].read_bytes()
