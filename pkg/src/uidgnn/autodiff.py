"""Tape-based reverse-mode differentiation over dense 2-D float64 matrices.

Every value is a :class:`Tensor` of shape ``(rows, cols)``. Tensors created by
:meth:`Tape.watch` are differentiable leaves; operations whose inputs include a
taped tensor record a backward rule on that tape. Tensors without a tape are
constants, so a forward pass over plain constants records nothing.
"""

from __future__ import annotations

from pathlib import Path
from typing import Callable, Mapping

import numpy as np
import scipy.sparse as sp


class DimensionError(ValueError):
    def __init__(self, op: str, message: str):
        super().__init__(f"{op}: {message}")
        self.op = op


class Tensor:
    __slots__ = ("value", "grad", "tape")

    def __init__(self, value: np.ndarray, tape: "Tape | None" = None):
        self.value = value
        self.grad: np.ndarray | None = None
        self.tape = tape

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def item(self) -> float:
        return float(self.value.reshape(-1)[0])

    def __repr__(self):
        kind = "leaf" if self.tape is not None else "const"
        return f"Tensor(shape={self.shape}, {kind})"


def tensor(data) -> Tensor:
    """Constant tensor from external data; rejects non-finite values."""
    arr = np.array(data, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise DimensionError("tensor", f"expected a 2-D matrix, got {arr.ndim} dimensions")
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor: NaN or Inf in input data")
    return Tensor(arr)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else tensor(x)


class Tape:
    """Ordered record of primitive applications.

    Records are appended in execution order, which is a topological order of
    the computation, so the backward pass walks them once in reverse.
    """

    def __init__(self):
        self._records: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self.leaves: list[Tensor] = []

    def __len__(self):
        return len(self._records)

    def watch(self, value) -> Tensor:
        t = _as_tensor(value)
        leaf = Tensor(t.value, self)
        leaf.grad = np.zeros_like(leaf.value)
        self.leaves.append(leaf)
        return leaf

    def zero_grad(self) -> None:
        for leaf in self.leaves:
            leaf.grad = np.zeros_like(leaf.value)

    def record(self, out: Tensor, inputs: tuple[Tensor, ...], backward: Callable) -> None:
        self._records.append((out, inputs, backward))

    def backward(self, root: Tensor, seed: np.ndarray | None = None) -> None:
        if root.tape is not self:
            raise ValueError("backward: root tensor was not produced on this tape")
        root.grad = np.ones_like(root.value) if seed is None else np.asarray(seed, dtype=np.float64)
        for out, inputs, rule in reversed(self._records):
            if out.grad is None:
                continue
            grads = rule(out.grad)
            for inp, g in zip(inputs, grads):
                if inp.tape is None or g is None:
                    continue
                inp.grad = g if inp.grad is None else inp.grad + g


def _tape_of(op: str, *inputs: Tensor) -> Tape | None:
    tape = None
    for t in inputs:
        if t.tape is not None:
            if tape is not None and t.tape is not tape:
                raise ValueError(f"{op}: inputs belong to different tapes")
            tape = t.tape
    return tape


def _emit(op: str, value: np.ndarray, inputs: tuple[Tensor, ...], backward: Callable) -> Tensor:
    tape = _tape_of(op, *inputs)
    out = Tensor(value, tape)
    if tape is not None:
        tape.record(out, inputs, backward)
    return out


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise DimensionError(op, f"shape mismatch {a.shape} vs {b.shape}")


# --------------------------------------------------------------------------- primitives


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise DimensionError("matmul", f"cannot multiply {a.shape} by {b.shape}")
    av, bv = a.value, b.value
    return _emit("matmul", av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    return _emit("add", a.value + b.value, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("sub", a, b)
    return _emit("sub", a.value - b.value, (a, b), lambda g: (g, -g))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _emit("scale", a.value * c, (a,), lambda g: (g * c,))


def add_bias_row(a: Tensor, bias: Tensor) -> Tensor:
    if bias.shape != (1, a.shape[1]):
        raise DimensionError("add_bias_row", f"bias must be (1, {a.shape[1]}), got {bias.shape}")
    return _emit("add_bias_row", a.value + bias.value, (a, bias), lambda g: (g, g.sum(axis=0, keepdims=True)))


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[0] != b.shape[0]:
        raise DimensionError("concat_cols", f"row mismatch {a.shape[0]} vs {b.shape[0]}")
    k = a.shape[1]
    return _emit("concat_cols", np.concatenate([a.value, b.value], axis=1), (a, b), lambda g: (g[:, :k], g[:, k:]))


def relu(a: Tensor) -> Tensor:
    mask = a.value > 0
    return _emit("relu", np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,))


def row_sum_pool(a: Tensor, segment_ids=None, num_segments: int | None = None) -> Tensor:
    """Sum rows into ``num_segments`` output rows; all rows into one by default."""
    if segment_ids is None:
        return _emit("row_sum_pool", a.value.sum(axis=0, keepdims=True), (a,), lambda g: (np.repeat(g, a.shape[0], axis=0),))
    seg = np.asarray(segment_ids, dtype=np.int64)
    if seg.shape != (a.shape[0],):
        raise DimensionError("row_sum_pool", f"need {a.shape[0]} segment ids, got {seg.shape}")
    k = int(seg.max()) + 1 if num_segments is None else int(num_segments)
    if seg.size and (seg.min() < 0 or seg.max() >= k):
        raise DimensionError("row_sum_pool", f"segment ids must lie in [0, {k})")
    out = np.zeros((k, a.shape[1]))
    np.add.at(out, seg, a.value)
    return _emit("row_sum_pool", out, (a,), lambda g: (g[seg],))


def aggregate_neighbors(h: Tensor, adjacency: sp.spmatrix) -> Tensor:
    """Neighbor sum ``A @ H`` with a sparse adjacency (scatter-add over edge pairs)."""
    if adjacency.shape != (h.shape[0], h.shape[0]):
        raise DimensionError("aggregate_neighbors", f"adjacency {adjacency.shape} does not match {h.shape[0]} rows")
    adj_t = adjacency.T
    return _emit("aggregate_neighbors", adjacency @ h.value, (h,), lambda g: (adj_t @ g,))


def scalar_sum(a: Tensor) -> Tensor:
    shape = a.shape
    return _emit("scalar_sum", np.array([[a.value.sum()]]), (a,), lambda g: (np.full(shape, g[0, 0]),))


def mse(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("mse", a, b)
    diff = a.value - b.value
    n = diff.size

    def rule(g):
        d = (2.0 * g[0, 0] / n) * diff
        return d, -d

    return _emit("mse", np.array([[np.mean(diff * diff)]]), (a, b), rule)


def softmax_cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean cross-entropy of integer class ``targets`` under row-softmax of ``logits``."""
    y = np.asarray(targets, dtype=np.int64).reshape(-1)
    rows, classes = logits.shape
    if y.shape != (rows,):
        raise DimensionError("softmax_cross_entropy", f"need {rows} targets, got {y.shape[0]}")
    if y.size and (y.min() < 0 or y.max() >= classes):
        raise ValueError(f"softmax_cross_entropy: labels must lie in [0, {classes})")
    z = logits.value - logits.value.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - logsum
    loss = -logp[np.arange(rows), y].mean()

    def rule(g):
        p = np.exp(logp)
        p[np.arange(rows), y] -= 1.0
        return ((g[0, 0] / rows) * p,)

    return _emit("softmax_cross_entropy", np.array([[loss]]), (logits,), rule)


def cosine_similarity(a: Tensor, b: Tensor, eps: float = 1e-12) -> Tensor:
    """Cosine of two ``1 x d`` row vectors, as a ``1 x 1`` tensor."""
    _same_shape("cosine_similarity", a, b)
    if a.shape[0] != 1:
        raise DimensionError("cosine_similarity", f"expected row vectors, got {a.shape}")
    x, y = a.value, b.value
    nx, ny = max(np.linalg.norm(x), eps), max(np.linalg.norm(y), eps)
    c = float((x * y).sum() / (nx * ny))

    def rule(g):
        s = g[0, 0]
        return s * (y / (nx * ny) - c * x / nx**2), s * (x / (nx * ny) - c * y / ny**2)

    return _emit("cosine_similarity", np.array([[c]]), (a, b), rule)


# --------------------------------------------------------------------------- verification


def grad_check(
    f: Callable[[dict[str, Tensor]], Tensor],
    params: Mapping[str, np.ndarray],
    h: float = 1e-5,
) -> float:
    """Max componentwise relative error between reverse-mode and central differences.

    ``f`` maps a dict of tensors to a ``1 x 1`` tensor. The relative error of a
    component uses ``max(|a|, |b|, 1e-8)`` as denominator.
    """
    if h <= 0:
        raise ValueError("grad_check: step h must be positive")
    tape = Tape()
    leaves = {k: tape.watch(v) for k, v in params.items()}
    out = f(leaves)
    if out.shape != (1, 1):
        raise DimensionError("grad_check", f"function must return a 1x1 tensor, got {out.shape}")
    if out.tape is tape:
        tape.backward(out)
    # an output built only from constants has zero gradient everywhere
    base ={k: np.array(v, dtype=np.float64) for k, v in params.items()}

    def evaluate(arrays):
        return f({k: Tensor(v) for k, v in arrays.items()}).item()

    worst = 0.0
    for name, arr in base.items():
        analytic = leaves[name].grad
        flat = arr.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = evaluate(base)
            flat[i] = orig - h
            fm = evaluate(base)
            flat[i] = orig
            numeric = (fp - fm) / (2 * h)
            a = analytic.reshape(-1)[i]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst


# --------------------------------------------------------------------------- optimizer


class Adam:
    """Bias-corrected Adam over a dict of named parameter arrays (updated in place)."""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr < 0:
            raise ValueError("Adam: lr must be >= 0")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1**t
        c2 = 1.0 - self.beta2**t
        for name, p in params.items():
            g = grads.get(name)
            if g is None:
                continue
            if g.shape != p.shape:
                raise DimensionError("adam_step", f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            m = self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            v = self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return params


# --------------------------------------------------------------------------- checkpoints


def save_params(params: Mapping[str, np.ndarray], path) -> None:
    """Text checkpoint: ``params <count>`` then ``name rows cols`` and one line per row."""
    lines = [f"params {len(params)}"]
    for name, arr in params.items():
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim != 2:
            raise DimensionError("save_params", f"{name} is not 2-D")
        lines.append(f"{name} {arr.shape[0]} {arr.shape[1]}")
        lines.extend(" ".join(format(x, ".17g") for x in row) for row in arr.tolist())
    Path(path).write_text("\n".join(lines) + "\n")


def load_params(path) -> dict[str, np.ndarray]:
    lines = Path(path).read_text().splitlines()
    head = lines[0].split() if lines else []
    if len(head) != 2 or head[0] != "params":
        raise ValueError(f"{path}:1: expected header 'params <count>'")
    out: dict[str, np.ndarray] = {}
    pos = 1
    for _ in range(int(head[1])):
        parts = lines[pos].split()
        if len(parts) != 3:
            raise ValueError(f"{path}:{pos + 1}: expected '<name> <rows> <cols>'")
        name, rows, cols = parts[0], int(parts[1]), int(parts[2])
        block = lines[pos + 1 : pos + 1 + rows]
        if len(block) != rows:
            raise ValueError(f"{path}:{pos + 1}: truncated tensor {name}")
        arr = np.array([[float(x) for x in ln.split()] for ln in block], dtype=np.float64).reshape(rows, cols)
        out[name] = arr
        pos += 1 + rows
    return out
