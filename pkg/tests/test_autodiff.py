import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from uidgnn import autodiff as ad
from uidgnn.checks import primitive_gradient_errors
from uidgnn.graph import Graph


def _grads(f, params):
    tape = ad.Tape()
    leaves = {k: tape.watch(v) for k, v in params.items()}
    out = f(leaves)
    tape.backward(out)
    return out, {k: v.grad for k, v in leaves.items()}


finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def matrices(rows=st.integers(1, 5), cols=st.integers(1, 5)):
    return st.tuples(rows, cols).flatmap(lambda s: arrays(np.float64, s, elements=finite))


# --------------------------------------------------------------------------- forward values


def test_mse_examples():
    h = np.random.default_rng(0).standard_normal((3, 4))
    out, grads = _grads(lambda p: ad.mse(p["a"], p["b"]), {"a": h, "b": h.copy()})
    assert out.item() == 0.0
    assert not grads["a"].any() and not grads["b"].any()
    assert ad.mse(ad.tensor(np.ones((2, 2))), ad.tensor(np.zeros((2, 2)))).item() == 1.0


def test_sum_of_xw_gradient_is_xt_ones():
    rng = np.random.default_rng(1)
    x, w = rng.standard_normal((4, 3)), rng.standard_normal((3, 2))
    _, grads = _grads(lambda p: ad.scalar_sum(ad.matmul(ad.tensor(x), p["w"])), {"w": w})
    assert np.allclose(grads["w"], x.T @ np.ones((4, 2)))


def test_aggregate_neighbors_is_neighbor_sum():
    g = Graph(4, [(0, 1), (1, 2), (1, 3)])
    h = np.arange(8, dtype=float).reshape(4, 2)
    out = ad.aggregate_neighbors(ad.tensor(h), g.adjacency).value
    expected = np.array([h[1], h[0] + h[2] + h[3], h[1], h[1]])
    assert np.array_equal(out, expected)


def test_row_sum_pool_segments():
    h = np.arange(6, dtype=float).reshape(3, 2)
    out = ad.row_sum_pool(ad.tensor(h), np.array([1, 0, 1]), 2).value
    assert np.array_equal(out, [[2, 3], [4, 6]])


def test_softmax_cross_entropy_uniform_is_ln2():
    assert ad.softmax_cross_entropy(ad.tensor(np.zeros((5, 2))), [0, 1, 0, 1, 1]).item() == pytest.approx(np.log(2))


def test_shape_mismatch_names_operation():
    with pytest.raises(ad.DimensionError) as info:
        ad.add(ad.tensor(np.ones((2, 2))), ad.tensor(np.ones((2, 3))))
    assert info.value.op == "add"
    with pytest.raises(ad.DimensionError) as info:
        ad.matmul(ad.tensor(np.ones((2, 2))), ad.tensor(np.ones((3, 3))))
    assert info.value.op == "matmul"


def test_tensor_rejects_non_finite():
    with pytest.raises(ValueError):
        ad.tensor([[1.0, np.inf]])


# --------------------------------------------------------------------------- gradients


def test_every_primitive_passes_randomized_grad_check():
    errors = primitive_gradient_errors(shapes=20, seed=11)
    assert len(errors) >= 10
    worst = max(errors.values())
    assert worst < 1e-6, errors


def test_grad_check_sum_of_squares():
    p = {"x": np.random.default_rng(2).standard_normal((3, 3))}
    err = ad.grad_check(lambda q: ad.scale(ad.mse(q["x"], ad.tensor(np.zeros((3, 3)))), 9.0), p, h=1e-5)
    assert err < 1e-6


def test_grad_check_constant_function():
    assert ad.grad_check(lambda q: ad.tensor([[3.0]]), {"x": np.ones((2, 2))}) == 0.0


def test_grad_check_rejects_bad_step():
    with pytest.raises(ValueError):
        ad.grad_check(lambda q: ad.scalar_sum(q["x"]), {"x": np.ones((1, 1))}, h=0)


@given(matrices(), st.integers(0, 2**31))
def test_backward_is_linear_in_losses(a, seed):
    rng = np.random.default_rng(seed)
    b = rng.standard_normal(a.shape)
    c = rng.standard_normal(a.shape)

    def f1(p):
        return ad.mse(p["a"], ad.tensor(b))

    def f2(p):
        return ad.scalar_sum(ad.relu(ad.sub(p["a"], ad.tensor(c))))

    _, g1 = _grads(f1, {"a": a})
    _, g2 = _grads(f2, {"a": a})
    _, g12 = _grads(lambda p: ad.add(f1(p), f2(p)), {"a": a})
    assert np.allclose(g12["a"], g1["a"] + g2["a"], atol=1e-12)


def test_gradients_accumulate_across_reuse():
    x = np.array([[2.0]])
    _, g = _grads(lambda p: ad.add(ad.scalar_sum(p["x"]), ad.scalar_sum(p["x"])), {"x": x})
    assert g["x"][0, 0] == 2.0


def test_zero_grad_resets_leaves():
    tape = ad.Tape()
    x = tape.watch(np.ones((2, 2)))
    tape.backward(ad.scalar_sum(x))
    assert x.grad.sum() == 4
    tape.zero_grad()
    assert not x.grad.any()


def test_constants_record_nothing():
    tape = ad.Tape()
    ad.matmul(ad.tensor(np.ones((2, 2))), ad.tensor(np.ones((2, 2))))
    assert len(tape) == 0


@given(matrices(), st.integers(0, 2**31))
def test_forward_is_deterministic(a, seed):
    w = np.random.default_rng(seed).standard_normal((a.shape[1], 3))
    f = lambda: ad.relu(ad.matmul(ad.tensor(a), ad.tensor(w))).value  # noqa: E731
    assert np.array_equal(f(), f())


# --------------------------------------------------------------------------- Adam


def test_adam_zero_gradient_leaves_params():
    p = {"w": np.array([[1.0, -2.0]])}
    ad.Adam(lr=0.1).step(p, {"w": np.zeros((1, 2))})
    assert np.array_equal(p["w"], [[1.0, -2.0]])


def test_adam_first_step_is_lr():
    p = {"w": np.array([[0.5]])}
    opt = ad.Adam(lr=0.1)
    opt.step(p, {"w": np.array([[1.0]])})
    assert p["w"][0, 0] == pytest.approx(0.5 - 0.1 / (1 + 1e-8))


def test_adam_matches_reference_recursion():
    rng = np.random.default_rng(4)
    grads = [rng.standard_normal((2, 3)) for _ in range(5)]
    p = {"w": np.zeros((2, 3))}
    opt = ad.Adam(lr=0.01)
    m = v = np.zeros((2, 3))
    ref = np.zeros((2, 3))
    for t, g in enumerate(grads, start=1):
        opt.step(p, {"w": g})
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g**2
        ref = ref - 0.01 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
    assert np.allclose(p["w"], ref, rtol=0, atol=1e-15)


def test_adam_is_bitwise_deterministic():
    def run():
        rng = np.random.default_rng(9)
        p = {"w": rng.standard_normal((3, 3))}
        opt = ad.Adam(lr=0.05)
        for _ in range(20):
            opt.step(p, {"w": rng.standard_normal((3, 3))})
        return p["w"]

    assert run().tobytes() == run().tobytes()


def test_adam_shape_mismatch():
    with pytest.raises(ad.DimensionError):
        ad.Adam().step({"w": np.zeros((2, 2))}, {"w": np.zeros((2, 1))})


# --------------------------------------------------------------------------- checkpoints


def test_checkpoint_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(5)
    params = {"a": rng.standard_normal((3, 4)) * 1e-7, "b": np.array([[np.pi, -1 / 3]])}
    ad.save_params(params, tmp_path / "p.txt")
    assert (tmp_path / "p.txt").read_text().startswith("params 2\n")
    loaded = ad.load_params(tmp_path / "p.txt")
    assert list(loaded) == ["a", "b"]
    for k in params:
        assert loaded[k].tobytes() == params[k].tobytes()


def test_checkpoint_bad_header(tmp_path):
    (tmp_path / "p.txt").write_text("nope\n")
    with pytest.raises(ValueError):
        ad.load_params(tmp_path / "p.txt")
