"""Dense float64 tensors with reverse-mode automatic differentiation.

A Tensor wraps a row-major numpy float64 array together with optional
gradient state.  Every differentiable operation records its input tensors
and a backward closure on the output; calling ``backward()`` on a scalar
walks the recorded graph in reverse topological order and accumulates
gradients additively into every tensor that has ``requires_grad`` set.

The recorded graph doubles as a replayable computation record: ``replay()``
recomputes every node's forward value, reusing saved intermediates such as
dropout masks, and reproduces the original outputs bit for bit.

Only the operations the two sentence-pair classifiers need are implemented.
The single broadcasting rule is bias-style: a 1-D vector may combine with a
2-D matrix along the matrix's last axis, and the vector's gradient is the
sum over rows.  General broadcasting is deliberately absent.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from .errors import (
    ConfigError,
    ContractError,
    DataError,
    DimensionError,
    NumericError,
)

__all__ = [
    "Tensor",
    "add",
    "as_tensor",
    "backward",
    "concat",
    "conv1d_maxpool",
    "dropout",
    "layer_norm",
    "matmul",
    "mul",
    "neg",
    "nll_clamp_count",
    "nll_from_probs",
    "ravel",
    "record",
    "relu",
    "replay",
    "reset_nll_clamp_count",
    "scale",
    "sigmoid",
    "slice_cols",
    "slice_rows",
    "softmax",
    "stack_cols",
    "sub",
    "sum_all",
    "take_rows",
    "tanh",
    "transpose",
    "xavier_uniform",
    "zero_grads",
]


class Tensor:
    """Dense float64 array with optional reverse-mode gradient state."""

    __slots__ = ("data", "requires_grad", "grad", "op", "_parents", "_backward", "_forward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.op = "leaf"
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self._forward: Callable[[], np.ndarray] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def backward(self, order_rng: np.random.Generator | None = None) -> None:
        backward(self, order_rng=order_rng)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __repr__(self) -> str:
        return f"Tensor(op={self.op!r}, shape={self.shape}, requires_grad={self.requires_grad})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64)
    else:
        t.grad = t.grad + g


def _result(
    data: np.ndarray,
    parents: Sequence[Tensor],
    op: str,
    backward_fn: Callable[[np.ndarray], None],
    forward_fn: Callable[[], np.ndarray],
) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.op = op
        out._parents = tuple(parents)
        out._backward = backward_fn
        out._forward = forward_fn
    return out


# ---------------------------------------------------------------------------
# graph walking


def backward(loss: Tensor, order_rng: np.random.Generator | None = None) -> None:
    """Populate ``grad`` on every requires_grad tensor reachable from ``loss``.

    ``loss`` must be a scalar.  Gradients accumulate additively across every
    use of a tensor.  ``order_rng``, when given, shuffles the order in which
    independent branches are processed; the result is identical up to
    floating-point summation order.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward requires a scalar loss, got shape {loss.shape}")

    consumers: dict[int, int] = {}
    stack = [loss]
    seen = {id(loss)}
    while stack:
        node = stack.pop()
        for p in {id(q): q for q in node._parents}.values():
            consumers[id(p)] = consumers.get(id(p), 0) + 1
            if id(p) not in seen:
                seen.add(id(p))
                stack.append(p)

    loss.grad = np.ones_like(loss.data)
    ready: list[Tensor] = [loss]
    while ready:
        if order_rng is None:
            node = ready.pop()
        else:
            node = ready.pop(int(order_rng.integers(len(ready))))
        if node._backward is not None:
            node._backward(node.grad)
        for p in {id(q): q for q in node._parents}.values():
            consumers[id(p)] -= 1
            if consumers[id(p)] == 0 and p._backward is not None:
                ready.append(p)


def record(root: Tensor) -> list[Tensor]:
    """The computation record reaching ``root``: nodes in forward topological
    order (every node's inputs precede it).  Leaves are included."""
    order: list[Tensor] = []
    seen: set[int] = set()

    def visit(n: Tensor) -> None:
        if id(n) in seen:
            return
        seen.add(id(n))
        for p in n._parents:
            visit(p)
        order.append(n)

    visit(root)
    return order


def replay(root: Tensor) -> np.ndarray:
    """Re-run the recorded forward pass for ``root``.

    Deterministic intermediates (dropout masks, pooling indices) are reused,
    so the recomputed values are bit-identical to the original run.
    """
    for n in record(root):
        if n._forward is not None:
            n.data = n._forward()
    return root.data


def zero_grads(tensors) -> None:
    for t in tensors:
        t.grad = None


# ---------------------------------------------------------------------------
# binary elementwise ops with the single bias-style broadcast rule


def _binary_plan(a: Tensor, b: Tensor, op: str) -> str:
    if a.shape == b.shape:
        return "same"
    if a.data.ndim == 2 and b.data.ndim == 1 and a.shape[1] == b.shape[0]:
        return "b_is_bias"
    if a.data.ndim == 1 and b.data.ndim == 2 and b.shape[1] == a.shape[0]:
        return "a_is_bias"
    raise DimensionError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    plan = _binary_plan(a, b, "add")

    def backward_fn(g: np.ndarray) -> None:
        if plan == "same":
            _accumulate(a, g)
            _accumulate(b, g)
        elif plan == "b_is_bias":
            _accumulate(a, g)
            _accumulate(b, g.sum(axis=0))
        else:
            _accumulate(a, g.sum(axis=0))
            _accumulate(b, g)

    return _result(a.data + b.data, (a, b), "add", backward_fn, lambda: a.data + b.data)


def mul(a: Tensor, b: Tensor) -> Tensor:
    plan = _binary_plan(a, b, "mul")

    def backward_fn(g: np.ndarray) -> None:
        if plan == "same":
            _accumulate(a, g * b.data)
            _accumulate(b, g * a.data)
        elif plan == "b_is_bias":
            _accumulate(a, g * b.data)
            _accumulate(b, (g * a.data).sum(axis=0))
        else:
            _accumulate(a, (g * b.data).sum(axis=0))
            _accumulate(b, g * a.data)

    return _result(a.data * b.data, (a, b), "mul", backward_fn, lambda: a.data * b.data)


def scale(a: Tensor, factor: float) -> Tensor:
    f = float(factor)

    def backward_fn(g: np.ndarray) -> None:
        _accumulate(a, g * f)

    return _result(a.data * f, (a,), "scale", backward_fn, lambda: a.data * f)


def neg(a: Tensor) -> Tensor:
    return scale(a, -1.0)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return add(a, neg(b))


# ---------------------------------------------------------------------------
# unary nonlinearities


def tanh(a: Tensor) -> Tensor:
    out_data = np.tanh(a.data)

    def backward_fn(g: np.ndarray) -> None:
        _accumulate(a, g * (1.0 - np.tanh(a.data) ** 2))

    return _result(out_data, (a,), "tanh", backward_fn, lambda: np.tanh(a.data))


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Tensor) -> Tensor:
    out_data = _stable_sigmoid(a.data)

    def backward_fn(g: np.ndarray) -> None:
        s = _stable_sigmoid(a.data)
        _accumulate(a, g * s * (1.0 - s))

    return _result(out_data, (a,), "sigmoid", backward_fn, lambda: _stable_sigmoid(a.data))


def relu(a: Tensor) -> Tensor:
    def backward_fn(g: np.ndarray) -> None:
        _accumulate(a, g * (a.data > 0))

    return _result(np.maximum(a.data, 0.0), (a,), "relu", backward_fn, lambda: np.maximum(a.data, 0.0))


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    na, nb = a.data.ndim, b.data.ndim
    ok = (
        (na == 2 and nb == 2 and a.shape[1] == b.shape[0])
        or (na == 2 and nb == 1 and a.shape[1] == b.shape[0])
        or (na == 1 and nb == 2 and a.shape[0] == b.shape[0])
    )
    if not ok:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def backward_fn(g: np.ndarray) -> None:
        if na == 2 and nb == 2:
            _accumulate(a, g @ b.data.T)
            _accumulate(b, a.data.T @ g)
        elif na == 2 and nb == 1:
            _accumulate(a, np.outer(g, b.data))
            _accumulate(b, a.data.T @ g)
        else:
            _accumulate(a, b.data @ g)
            _accumulate(b, np.outer(a.data, g))

    return _result(a.data @ b.data, (a, b), "matmul", backward_fn, lambda: a.data @ b.data)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise DimensionError(f"transpose expects a matrix, got shape {a.shape}")

    def backward_fn(g: np.ndarray) -> None:
        _accumulate(a, g.T)

    return _result(a.data.T.copy(), (a,), "transpose", backward_fn, lambda: a.data.T.copy())


def softmax(x: Tensor, axis: int) -> Tensor:
    """Exponent-normalize along ``axis`` with max-subtraction for stability.

    Output slices along the axis are positive and sum to 1.
    """
    if not -x.data.ndim <= axis < x.data.ndim:
        raise DimensionError(f"softmax axis {axis} out of range for shape {x.shape}")
    if np.isnan(x.data).any():
        raise NumericError("softmax input contains NaN")

    def fwd() -> np.ndarray:
        shifted = x.data - x.data.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=axis, keepdims=True)

    out_data = fwd()

    def backward_fn(g: np.ndarray) -> None:
        p = fwd()
        _accumulate(x, p * (g - (g * p).sum(axis=axis, keepdims=True)))

    return _result(out_data, (x,), "softmax", backward_fn, fwd)


def sum_all(a: Tensor) -> Tensor:
    def backward_fn(g: np.ndarray) -> None:
        _accumulate(a, np.full_like(a.data, float(g)))

    return _result(np.asarray(a.data.sum()), (a,), "sum", backward_fn, lambda: np.asarray(a.data.sum()))


# ---------------------------------------------------------------------------
# shape ops


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = list(parts)
    if not parts:
        raise ContractError("concat of zero tensors")
    ndim = parts[0].data.ndim
    if any(p.data.ndim != ndim for p in parts):
        raise DimensionError("concat: mixed ranks")
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward_fn(g: np.ndarray) -> None:
        for p, start, stop in zip(parts, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * ndim
            sl[axis] = slice(start, stop)
            _accumulate(p, g[tuple(sl)])

    def fwd() -> np.ndarray:
        return np.concatenate([p.data for p in parts], axis=axis)

    return _result(fwd(), parts, "concat", backward_fn, fwd)


def stack_cols(cols: Sequence[Tensor]) -> Tensor:
    """Stack 1-D tensors of equal length as the columns of a matrix."""
    cols = list(cols)
    if not cols:
        raise ContractError("stack_cols of zero vectors")
    if any(c.data.ndim != 1 or c.shape != cols[0].shape for c in cols):
        raise DimensionError("stack_cols expects equal-length vectors")

    def backward_fn(g: np.ndarray) -> None:
        for j, c in enumerate(cols):
            _accumulate(c, g[:, j])

    def fwd() -> np.ndarray:
        return np.stack([c.data for c in cols], axis=1)

    return _result(fwd(), cols, "stack_cols", backward_fn, fwd)


def _slice_axis(a: Tensor, start: int, stop: int, axis: int, op: str) -> Tensor:
    if a.data.ndim != 2:
        raise DimensionError(f"{op} expects a matrix, got shape {a.shape}")
    if not (0 <= start < stop <= a.shape[axis]):
        raise DimensionError(f"{op}: range [{start}, {stop}) invalid for shape {a.shape}")
    sl = (slice(start, stop), slice(None)) if axis == 0 else (slice(None), slice(start, stop))

    def backward_fn(g: np.ndarray) -> None:
        buf = np.zeros_like(a.data)
        buf[sl] = g
        _accumulate(a, buf)

    return _result(a.data[sl].copy(), (a,), op, backward_fn, lambda: a.data[sl].copy())


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    return _slice_axis(a, start, stop, 0, "slice_rows")


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    return _slice_axis(a, start, stop, 1, "slice_cols")


def ravel(a: Tensor) -> Tensor:
    def backward_fn(g: np.ndarray) -> None:
        _accumulate(a, g.reshape(a.shape))

    return _result(a.data.reshape(-1).copy(), (a,), "ravel", backward_fn, lambda: a.data.reshape(-1).copy())


def take_rows(table: Tensor, ids: Sequence[int]) -> Tensor:
    """Gather rows of ``table`` by index; gradients scatter-add back."""
    if table.data.ndim != 2:
        raise DimensionError(f"take_rows expects a matrix, got shape {table.shape}")
    idx = np.asarray(list(ids), dtype=np.int64)
    if idx.size == 0:
        raise ContractError("take_rows with no indices")
    if idx.min() < 0 or idx.max() >= table.shape[0]:
        raise DataError(
            f"take_rows: id out of bounds (ids span [{idx.min()}, {idx.max()}], table has {table.shape[0]} rows)"
        )

    def backward_fn(g: np.ndarray) -> None:
        buf = np.zeros_like(table.data)
        np.add.at(buf, idx, g)
        _accumulate(table, buf)

    return _result(table.data[idx], (table,), "take_rows", backward_fn, lambda: table.data[idx])


# ---------------------------------------------------------------------------
# normalization, convolution, dropout, loss


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each row of ``x`` to zero mean and unit variance, then apply
    a per-feature affine transform."""
    if x.data.ndim != 2:
        raise DimensionError(f"layer_norm expects a matrix, got shape {x.shape}")
    if gain.shape != (x.shape[1],) or bias.shape != (x.shape[1],):
        raise DimensionError(
            f"layer_norm: gain/bias shapes {gain.shape}/{bias.shape} do not match width {x.shape[1]}"
        )

    def stats():
        mu = x.data.mean(axis=1, keepdims=True)
        var = x.data.var(axis=1, keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = (x.data - mu) * inv
        return xhat, inv

    def fwd() -> np.ndarray:
        xhat, _ = stats()
        return xhat * gain.data + bias.data

    def backward_fn(g: np.ndarray) -> None:
        xhat, inv = stats()
        _accumulate(gain, (g * xhat).sum(axis=0))
        _accumulate(bias, g.sum(axis=0))
        dxhat = g * gain.data
        m1 = dxhat.mean(axis=1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=1, keepdims=True)
        _accumulate(x, inv * (dxhat - m1 - xhat * m2))

    return _result(fwd(), (x, gain, bias), "layer_norm", backward_fn, fwd)


def conv1d_maxpool(x: Tensor, banks: Sequence[tuple[Tensor, Tensor]]) -> Tensor:
    """Convolve ``x`` (features x positions) with each filter bank, apply
    relu, max-pool over positions, and concatenate the pooled scalars.

    Each bank is a (weight, bias) pair with weight shaped
    (num_filters, features, width) and bias shaped (num_filters,).
    """
    if x.data.ndim != 2:
        raise DimensionError(f"conv1d_maxpool expects a matrix, got shape {x.shape}")
    d, m = x.shape
    if m == 0:
        raise ContractError("conv1d_maxpool on an empty sequence")
    banks = [(w, b) for w, b in banks]
    for w, b in banks:
        if w.data.ndim != 3 or w.shape[1] != d:
            raise DimensionError(f"filter bank shape {w.shape} does not match input features {d}")
        if b.shape != (w.shape[0],):
            raise DimensionError(f"bias shape {b.shape} does not match {w.shape[0]} filters")
        if w.shape[2] > m:
            raise DimensionError(f"filter width {w.shape[2]} exceeds sequence length {m}; pad the input")

    def compute():
        pooled, args, pres = [], [], []
        for w, b in banks:
            width = w.shape[2]
            windows = np.lib.stride_tricks.sliding_window_view(x.data, width, axis=1)
            pre = np.einsum("fdw,dtw->ft", w.data, windows) + b.data[:, None]
            act = np.maximum(pre, 0.0)
            args.append(act.argmax(axis=1))
            pres.append(pre)
            pooled.append(act.max(axis=1))
        return np.concatenate(pooled), args, pres

    out_data, arg_save, pre_save = compute()

    def backward_fn(g: np.ndarray) -> None:
        dx = np.zeros_like(x.data)
        offset = 0
        for (w, b), args, pre in zip(banks, arg_save, pre_save):
            nf, _, width = w.shape
            g_bank = g[offset : offset + nf]
            offset += nf
            gate = pre[np.arange(nf), args] > 0
            gf = g_bank * gate
            dw = np.zeros_like(w.data)
            db = gf.copy()
            for f in range(nf):
                if gf[f] == 0.0:
                    continue
                t = args[f]
                dw[f] = gf[f] * x.data[:, t : t + width]
                dx[:, t : t + width] += gf[f] * w.data[f]
            _accumulate(w, dw)
            _accumulate(b, db)
        _accumulate(x, dx)

    parents = [x]
    for w, b in banks:
        parents.extend((w, b))
    return _result(out_data, parents, "conv1d_maxpool", backward_fn, lambda: compute()[0])


def dropout(x: Tensor, ratio: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: zero entries with probability ``ratio`` and scale
    survivors by 1/(1-ratio) in training mode; identity in inference mode."""
    if not 0.0 <= ratio < 1.0:
        raise ConfigError(f"dropout ratio must be in [0, 1), got {ratio}")
    if not training or ratio == 0.0:
        return x
    if rng is None:
        raise ContractError("dropout in training mode requires an rng")
    keep = (rng.random(x.shape) >= ratio) / (1.0 - ratio)

    def backward_fn(g: np.ndarray) -> None:
        _accumulate(x, g * keep)

    return _result(x.data * keep, (x,), "dropout", backward_fn, lambda: x.data * keep)


_NLL_EPS = 1e-12
_nll_clamp_count = 0


def nll_clamp_count() -> int:
    """How many gold-class probabilities have been clamped at 1e-12 so far."""
    return _nll_clamp_count


def reset_nll_clamp_count() -> None:
    global _nll_clamp_count
    _nll_clamp_count = 0


def nll_from_probs(prob_rows: Sequence[Tensor], gold: Sequence[int]) -> Tensor:
    """Summed negative log-likelihood of the gold classes.

    ``prob_rows`` are per-example probability vectors; ``gold`` the matching
    class indices.  Zero probabilities at the gold class are clamped at 1e-12
    (counted via ``nll_clamp_count``); clamped entries get zero gradient.
    """
    global _nll_clamp_count
    rows = list(prob_rows)
    gold = [int(g) for g in gold]
    if len(rows) != len(gold) or not rows:
        raise ContractError(f"nll_from_probs: {len(rows)} probability rows vs {len(gold)} labels")
    for r, g in zip(rows, gold):
        if r.data.ndim != 1:
            raise DimensionError(f"probability row must be a vector, got shape {r.shape}")
        if not 0 <= g < r.shape[0]:
            raise DataError(f"gold class {g} out of range for {r.shape[0]} classes")

    def fwd() -> np.ndarray:
        total = 0.0
        for r, g in zip(rows, gold):
            total -= math.log(max(float(r.data[g]), _NLL_EPS))
        return np.asarray(total)

    for r, g in zip(rows, gold):
        if float(r.data[g]) < _NLL_EPS:
            _nll_clamp_count += 1

    def backward_fn(gout: np.ndarray) -> None:
        for r, g in zip(rows, gold):
            p = float(r.data[g])
            buf = np.zeros_like(r.data)
            if p >= _NLL_EPS:
                buf[g] = -float(gout) / p
            _accumulate(r, buf)

    return _result(fwd(), rows, "nll", backward_fn, fwd)


# ---------------------------------------------------------------------------
# initialization


def xavier_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int | None = None, fan_out: int | None = None) -> np.ndarray:
    """Variance-scaled uniform init; fans default to the last two axes
    (for 3-D conv filters: fan_in = features x width, fan_out = filters)."""
    if fan_in is None or fan_out is None:
        if len(shape) == 2:
            fan_in, fan_out = shape[0], shape[1]
        elif len(shape) == 3:
            fan_in, fan_out = shape[1] * shape[2], shape[0]
        else:
            raise ConfigError(f"cannot infer fans for shape {shape}")
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)
