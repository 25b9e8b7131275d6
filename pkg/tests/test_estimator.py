import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from uidgnn import RNFGraphClassifier
from uidgnn.estimator import check_graph_labels, check_graphs, check_node_labels
from uidgnn.graph import Graph, barabasi_albert, cycle_graph, label_triangles

FAST = dict(layers=2, hidden_dim=16, rnf_dim=4, epochs=5, lr=1e-2)


def _node_data(count=4):
    graphs = [barabasi_albert(12, 2, s) for s in range(count)]
    return graphs, [label_triangles(g).astype(int) for g in graphs]


def test_get_set_params_and_clone():
    est = RNFGraphClassifier(mode="rni", k=3, random_state=7)
    params = est.get_params()
    assert params["mode"] == "rni" and params["k"] == 3 and params["random_state"] == 7
    est.set_params(epochs=3)
    twin = clone(est)
    assert twin.get_params() == est.get_params()
    assert not hasattr(twin, "params_")


def test_input_validation_helpers():
    g = cycle_graph(4)
    assert check_graphs(g) == [g]
    with pytest.raises(ValueError):
        check_graphs([])
    with pytest.raises(TypeError):
        check_graphs([g, "not a graph"])
    with pytest.raises(TypeError):
        check_graphs(5)
    with pytest.raises(ValueError):
        check_node_labels([g], [[0, 1]])
    with pytest.raises(ValueError):
        check_node_labels([g], [[0, 1, 2, 0]])
    with pytest.raises(ValueError):
        check_node_labels([g, g], [[0, 0, 0, 0]])
    assert check_graph_labels([g, g], [1, 0]).tolist() == [1, 0]
    with pytest.raises(ValueError):
        check_graph_labels([g], [3])


def test_predict_before_fit():
    with pytest.raises(NotFittedError):
        RNFGraphClassifier().predict([cycle_graph(3)])


@pytest.mark.parametrize("mode", ["constant", "rni", "siri"])
def test_node_task_fit_predict(mode):
    graphs, y = _node_data()
    est = RNFGraphClassifier(mode=mode, **FAST).fit(graphs, y)
    pred = est.predict(graphs)
    assert len(pred) == 4 and all(p.shape == (g.n,) for p, g in zip(pred, graphs))
    proba = est.predict_proba(graphs)
    assert all(np.allclose(p.sum(axis=1), 1) for p in proba)
    assert 0 <= est.score(graphs, y) <= 1
    assert len(est.history_) == 5
    assert est.n_features_in_ == 1 and est.classes_.tolist() == [0, 1]


def test_graph_task_fit_predict():
    paths = [Graph(n, [(i, i + 1) for i in range(n - 1)]) for n in range(4, 9)]
    cycles = [cycle_graph(n) for n in range(4, 9)]
    X, y = paths + cycles, [1] * 5 + [0] * 5
    # tiny nets can start with dead units; this seed trains cleanly
    est = RNFGraphClassifier(mode="constant", task="graph-binary", layers=2, hidden_dim=16, epochs=150, lr=1e-2, random_state=1)
    est.fit(X, y)
    assert est.predict_proba(X).shape == (10, 2)
    assert est.score(X, y) == 1.0


def test_fit_is_deterministic():
    graphs, y = _node_data(3)
    a = RNFGraphClassifier(**FAST, random_state=3).fit(graphs, y)
    b = RNFGraphClassifier(**FAST, random_state=3).fit(graphs, y)
    assert all(np.array_equal(a.params_[k], b.params_[k]) for k in a.params_)
    assert [p.tolist() for p in a.predict(graphs)] == [p.tolist() for p in b.predict(graphs)]


def test_feature_dimension_checks():
    g1 = cycle_graph(4).with_features(np.ones((4, 3)))
    g2 = cycle_graph(4)
    with pytest.raises(ValueError):
        RNFGraphClassifier(**FAST).fit([g1, g2], [[0] * 4, [0] * 4])
    est = RNFGraphClassifier(**FAST).fit([g1], [[0, 1, 0, 1]])
    assert est.n_features_in_ == 3
    with pytest.raises(ValueError):
        est.predict([g2])


def test_invalid_hyperparameters_surface_at_fit():
    graphs, y = _node_data(1)
    with pytest.raises(ValueError):
        RNFGraphClassifier(mode="bogus", **FAST).fit(graphs, y)
    with pytest.raises(ValueError):
        RNFGraphClassifier(task="pair-siamese", **FAST).fit(graphs, y)
