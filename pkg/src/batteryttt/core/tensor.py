"""
Define-by-run reverse-mode automatic differentiation over float64 arrays.

Each op builds a result ``Value`` holding its parents and a backward closure.
``backward(loss)`` walks the tape in reverse topological order and accumulates
gradients into leaves. Binary elementwise ops accept equal shapes or a
rank-0 operand only; any other broadcast must go through ``expand``.
"""

import hashlib
import itertools
import json
import logging
from dataclasses import dataclass
from typing import Any, Callable, Iterable, Iterator, Optional, Sequence

import numpy as np

from ..exceptions import ContractError

logger = logging.getLogger(__name__)

MAX_RANK = 3
STORE_VERSION = 1

_node_ids = itertools.count()


class Value:
    """A node on the tape: float64 data plus a lazily allocated gradient."""

    __slots__ = ("data", "_grad", "requires_grad", "_parents", "_backward", "node_id", "op")

    def __init__(self, data: Any, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        _check_rank(arr, "Value")
        self.data = arr
        self._grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents: tuple["Value", ...] = ()
        self._backward: Optional[Callable[["Value"], None]] = None
        self.node_id = next(_node_ids)
        self.op = "leaf"

    @property
    def grad(self) -> np.ndarray:
        if self._grad is None:
            return np.zeros_like(self.data)
        return self._grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def zero_grad(self) -> None:
        self._grad = None

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Value(shape={self.shape}, op={self.op})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, 1.0 / float(other))
        return div(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return slice_(self, index)


def _check_rank(arr: np.ndarray, op: str) -> None:
    if arr.ndim > MAX_RANK:
        raise ContractError(f"{op}: rank {arr.ndim} exceeds the supported rank {MAX_RANK}")


def as_value(x: Any) -> Value:
    """Wrap constants; Values pass through."""
    return x if isinstance(x, Value) else Value(x)


def constant(x: Any) -> Value:
    return Value(x, requires_grad=False)


def _result(
    data: np.ndarray,
    parents: tuple[Value, ...],
    backward_fn: Callable[[Value], None],
    op: str,
) -> Value:
    out = Value.__new__(Value)
    data = np.asarray(data, dtype=np.float64)
    _check_rank(data, op)
    out.data = data
    out._grad = None
    out.requires_grad = any(p.requires_grad for p in parents)
    out._parents = parents if out.requires_grad else ()
    out._backward = backward_fn if out.requires_grad else None
    out.node_id = next(_node_ids)
    out.op = op
    return out


def _accum(node: Value, g: np.ndarray) -> None:
    if not node.requires_grad:
        return
    if node._grad is None:
        node._grad = np.array(g, dtype=np.float64, copy=True).reshape(node.data.shape)
    else:
        node._grad = node._grad + g


def _check_binary(a: Value, b: Value, op: str) -> None:
    if a.shape == b.shape or a.ndim == 0 or b.ndim == 0:
        return
    raise ContractError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def _reduce_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if shape == () and g.shape != ():
        return np.asarray(g.sum())
    return g


# --------------------------------------------------------------------------
# Elementwise arithmetic
# --------------------------------------------------------------------------


def add(a: Any, b: Any) -> Value:
    a, b = as_value(a), as_value(b)
    _check_binary(a, b, "add")

    def backward(out: Value) -> None:
        _accum(a, _reduce_to(out._grad, a.shape))
        _accum(b, _reduce_to(out._grad, b.shape))

    return _result(a.data + b.data, (a, b), backward, "add")


def sub(a: Any, b: Any) -> Value:
    a, b = as_value(a), as_value(b)
    _check_binary(a, b, "sub")

    def backward(out: Value) -> None:
        _accum(a, _reduce_to(out._grad, a.shape))
        _accum(b, _reduce_to(-out._grad, b.shape))

    return _result(a.data - b.data, (a, b), backward, "sub")


def mul(a: Any, b: Any) -> Value:
    a, b = as_value(a), as_value(b)
    _check_binary(a, b, "mul")

    def backward(out: Value) -> None:
        _accum(a, _reduce_to(out._grad * b.data, a.shape))
        _accum(b, _reduce_to(out._grad * a.data, b.shape))

    return _result(a.data * b.data, (a, b), backward, "mul")


def div(a: Any, b: Any) -> Value:
    a, b = as_value(a), as_value(b)
    _check_binary(a, b, "div")

    def backward(out: Value) -> None:
        _accum(a, _reduce_to(out._grad / b.data, a.shape))
        _accum(b, _reduce_to(-out._grad * a.data / (b.data * b.data), b.shape))

    return _result(a.data / b.data, (a, b), backward, "div")


def scale(a: Value, c: float) -> Value:
    """Multiply by a Python constant."""
    c = float(c)

    def backward(out: Value) -> None:
        _accum(a, out._grad * c)

    return _result(a.data * c, (a,), backward, "scale")


# --------------------------------------------------------------------------
# Linear algebra and shape ops
# --------------------------------------------------------------------------


def matmul(a: Value, b: Value) -> Value:
    """a @ b with a of rank 2 or 3 and b of rank 2 or matching rank 3."""
    a, b = as_value(a), as_value(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ContractError(f"matmul needs rank >= 2 operands, got {a.shape} @ {b.shape}")
    if b.ndim == 3 and (a.ndim != 3 or a.shape[0] != b.shape[0]):
        raise ContractError(f"matmul batch mismatch {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ContractError(f"matmul inner mismatch {a.shape} @ {b.shape}")

    def backward(out: Value) -> None:
        g = out._grad
        _accum(a, g @ np.swapaxes(b.data, -1, -2))
        if b.requires_grad:
            gb = np.swapaxes(a.data, -1, -2) @ g
            if b.ndim == 2 and gb.ndim == 3:
                gb = gb.sum(axis=0)
            _accum(b, gb)

    return _result(a.data @ b.data, (a, b), backward, "matmul")


def linear(x: Value, weight: Value, bias: Optional[Value] = None) -> Value:
    """x @ W + b over the last axis; b of shape (out,) is added to every row."""
    x = as_value(x)
    if weight.ndim != 2 or x.shape[-1] != weight.shape[0]:
        raise ContractError(f"linear: input {x.shape} vs weight {weight.shape}")
    if bias is not None and bias.shape != (weight.shape[1],):
        raise ContractError(f"linear: bias {bias.shape} vs weight {weight.shape}")
    out_data = x.data @ weight.data
    if bias is not None:
        out_data = out_data + bias.data
    n_in, n_out = weight.shape
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(out: Value) -> None:
        g = out._grad
        _accum(x, g @ weight.data.T)
        g2 = g.reshape(-1, n_out)
        if weight.requires_grad:
            _accum(weight, x.data.reshape(-1, n_in).T @ g2)
        if bias is not None:
            _accum(bias, g2.sum(axis=0))

    return _result(out_data, parents, backward, "linear")


def transpose(a: Value) -> Value:
    """Swap the last two axes."""
    if a.ndim < 2:
        raise ContractError(f"transpose needs rank >= 2, got {a.shape}")

    def backward(out: Value) -> None:
        _accum(a, np.swapaxes(out._grad, -1, -2))

    return _result(np.swapaxes(a.data, -1, -2).copy(), (a,), backward, "transpose")


def reshape(a: Value, shape: Sequence[int]) -> Value:
    shape = tuple(shape)
    try:
        out_data = a.data.reshape(shape).copy()
    except ValueError as e:
        raise ContractError(f"reshape {a.shape} -> {shape}: {e}") from e

    def backward(out: Value) -> None:
        _accum(a, out._grad.reshape(a.shape))

    return _result(out_data, (a,), backward, "reshape")


def expand(a: Value, shape: Sequence[int]) -> Value:
    """Explicit broadcast of size-1 axes to ``shape`` (same rank required)."""
    shape = tuple(shape)
    if a.ndim != len(shape) or any(s != t and s != 1 for s, t in zip(a.shape, shape)):
        raise ContractError(f"expand {a.shape} -> {shape}: only size-1 axes can grow")
    axes = tuple(i for i, (s, t) in enumerate(zip(a.shape, shape)) if s == 1 and t != 1)

    def backward(out: Value) -> None:
        _accum(a, out._grad.sum(axis=axes, keepdims=True) if axes else out._grad)

    return _result(np.broadcast_to(a.data, shape).copy(), (a,), backward, "expand")


def slice_(a: Value, index: Any) -> Value:
    """Basic (slice/int) indexing."""
    out_data = np.array(a.data[index], dtype=np.float64, copy=True)

    def backward(out: Value) -> None:
        if not a.requires_grad:
            return
        full = np.zeros_like(a.data)
        full[index] = out._grad
        _accum(a, full)

    return _result(out_data, (a,), backward, "slice")


def take(a: Value, indices: Sequence[int], axis: int = 0) -> Value:
    """Gather along ``axis`` (duplicates allowed)."""
    idx = np.asarray(indices, dtype=np.int64)

    def backward(out: Value) -> None:
        if not a.requires_grad:
            return
        full = np.zeros_like(a.data)
        np.add.at(np.moveaxis(full, axis, 0), idx, np.moveaxis(out._grad, axis, 0))
        _accum(a, full)

    return _result(np.take(a.data, idx, axis=axis), (a,), backward, "take")


def concat(values: Sequence[Value], axis: int = 0) -> Value:
    values = [as_value(v) for v in values]
    if not values:
        raise ContractError("concat of an empty sequence")
    ndim = values[0].ndim
    ax = axis % ndim
    for v in values:
        if v.ndim != ndim or any(
            s != t for i, (s, t) in enumerate(zip(v.shape, values[0].shape)) if i != ax
        ):
            raise ContractError(f"concat: incompatible shapes {[v.shape for v in values]}")
    sizes = np.cumsum([v.shape[ax] for v in values])[:-1]

    def backward(out: Value) -> None:
        for v, g in zip(values, np.split(out._grad, sizes, axis=ax)):
            _accum(v, g)

    return _result(
        np.concatenate([v.data for v in values], axis=ax), tuple(values), backward, "concat"
    )


# --------------------------------------------------------------------------
# Reductions
# --------------------------------------------------------------------------


def _expand_reduced(g: np.ndarray, shape: tuple, axis: Optional[int], keepdims: bool) -> np.ndarray:
    if axis is None:
        return np.broadcast_to(g, shape)
    if not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape)


def sum_(a: Value, axis: Optional[int] = None, keepdims: bool = False) -> Value:
    def backward(out: Value) -> None:
        _accum(a, _expand_reduced(out._grad, a.shape, axis, keepdims))

    return _result(np.sum(a.data, axis=axis, keepdims=keepdims), (a,), backward, "sum")


def mean(a: Value, axis: Optional[int] = None, keepdims: bool = False) -> Value:
    n = a.data.size if axis is None else a.shape[axis]

    def backward(out: Value) -> None:
        _accum(a, _expand_reduced(out._grad / n, a.shape, axis, keepdims))

    return _result(np.mean(a.data, axis=axis, keepdims=keepdims), (a,), backward, "mean")


def mse(a: Any, b: Any) -> Value:
    """Mean of squared differences over all elements."""
    a, b = as_value(a), as_value(b)
    if a.shape != b.shape:
        raise ContractError(f"mse: shape mismatch {a.shape} vs {b.shape}")
    diff = a.data - b.data
    n = diff.size

    def backward(out: Value) -> None:
        g = out._grad * 2.0 * diff / n
        _accum(a, g)
        _accum(b, -g)

    return _result(np.mean(diff * diff), (a, b), backward, "mse")


# --------------------------------------------------------------------------
# Nonlinearities
# --------------------------------------------------------------------------


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softplus(a: Value) -> Value:
    def backward(out: Value) -> None:
        _accum(a, out._grad * _sigmoid(a.data))

    return _result(np.logaddexp(0.0, a.data), (a,), backward, "softplus")


def sigmoid(a: Value) -> Value:
    s = _sigmoid(a.data)

    def backward(out: Value) -> None:
        _accum(a, out._grad * s * (1.0 - s))

    return _result(s, (a,), backward, "sigmoid")


def tanh(a: Value) -> Value:
    t = np.tanh(a.data)

    def backward(out: Value) -> None:
        _accum(a, out._grad * (1.0 - t * t))

    return _result(t, (a,), backward, "tanh")


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(a: Value) -> Value:
    """GELU, tanh approximation."""
    x = a.data
    u = _GELU_C * (x + 0.044715 * x**3)
    t = np.tanh(u)

    def backward(out: Value) -> None:
        du = _GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
        _accum(a, out._grad * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du))

    return _result(0.5 * x * (1.0 + t), (a,), backward, "gelu")


def cumsum(a: Value) -> Value:
    """Cumulative sum along the last axis."""

    def backward(out: Value) -> None:
        g = out._grad
        _accum(a, np.flip(np.cumsum(np.flip(g, -1), axis=-1), -1))

    return _result(np.cumsum(a.data, axis=-1), (a,), backward, "cumsum")


def softmax(a: Value) -> Value:
    """Softmax along the last axis."""
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)

    def backward(out: Value) -> None:
        g = out._grad
        _accum(a, s * (g - (g * s).sum(axis=-1, keepdims=True)))

    return _result(s, (a,), backward, "softmax")


def layer_norm(a: Value, eps: float = 1e-5) -> Value:
    """Normalize the last axis to zero mean, unit variance (no affine)."""
    mu = a.data.mean(axis=-1, keepdims=True)
    centered = a.data - mu
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * inv_std

    def backward(out: Value) -> None:
        g = out._grad
        gm = g.mean(axis=-1, keepdims=True)
        gx = (g * xhat).mean(axis=-1, keepdims=True)
        _accum(a, inv_std * (g - gm - xhat * gx))

    return _result(xhat, (a,), backward, "layer_norm")


def interp(a: Value, xp: np.ndarray, fp: np.ndarray) -> Value:
    """Piecewise-linear lookup of ``a`` in the constant table (xp, fp).

    Outside the table the output is clamped and the derivative is zero.
    """
    xp = np.asarray(xp, dtype=np.float64)
    fp = np.asarray(fp, dtype=np.float64)
    x = a.data
    seg = np.clip(np.searchsorted(xp, x, side="right") - 1, 0, len(xp) - 2)
    slope = (fp[seg + 1] - fp[seg]) / (xp[seg + 1] - xp[seg])
    slope = np.where((x < xp[0]) | (x > xp[-1]), 0.0, slope)

    def backward(out: Value) -> None:
        _accum(a, out._grad * slope)

    return _result(np.interp(x, xp, fp), (a,), backward, "interp")


# --------------------------------------------------------------------------
# Tape traversal
# --------------------------------------------------------------------------


def _topological(root: Value) -> list[Value]:
    order: list[Value] = []
    visited: set[int] = set()
    stack: list[tuple[Value, bool]] = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if node.node_id in visited:
            continue
        visited.add(node.node_id)
        stack.append((node, True))
        for parent in node._parents:
            if parent.node_id not in visited:
                stack.append((parent, False))
    return order


def backward(loss: Value) -> None:
    """Accumulate d(loss)/d(leaf) into every reachable leaf that requires grad.

    Raises:
        ContractError: If ``loss`` is not a scalar
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        logger.debug("backward on a loss with no trainable inputs")
        return
    order = _topological(loss)
    for node in order:
        if node._parents:
            node._grad = None
    loss._grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node._grad is not None:
            node._backward(node)


# --------------------------------------------------------------------------
# Parameters
# --------------------------------------------------------------------------


@dataclass
class Parameter:
    """A named leaf Value with a trainable flag."""

    name: str
    value: Value
    trainable: bool = True

    def __post_init__(self):
        self.value.requires_grad = self.trainable

    @property
    def data(self) -> np.ndarray:
        return self.value.data

    @property
    def grad(self) -> np.ndarray:
        return self.value.grad

    @property
    def size(self) -> int:
        return int(self.value.data.size)

    @property
    def tag(self) -> str:
        """Partition tag: first component of the dotted name."""
        return self.name.split(".", 1)[0]

    def set_trainable(self, trainable: bool) -> None:
        self.trainable = trainable
        self.value.requires_grad = trainable

    def zero_grad(self) -> None:
        self.value.zero_grad()


class ParameterStore:
    """Ordered mapping of unique names to Parameters."""

    def __init__(self):
        self._params: dict[str, Parameter] = {}

    def add(self, name: str, array: Any, trainable: bool = True) -> Value:
        if name in self._params:
            raise ContractError(f"duplicate parameter name '{name}'")
        param = Parameter(name=name, value=Value(array), trainable=trainable)
        self._params[name] = param
        return param.value

    def __getitem__(self, name: str) -> Value:
        return self._params[name].value

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[Parameter]:
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def param(self, name: str) -> Parameter:
        return self._params[name]

    def names(self) -> list[str]:
        return list(self._params)

    def trainable_names(self) -> set[str]:
        return {p.name for p in self if p.trainable}

    def set_trainable(self, names: Iterable[str]) -> None:
        """Make exactly ``names`` trainable."""
        names = set(names)
        unknown = names - set(self._params)
        if unknown:
            raise ContractError(f"unknown parameters: {sorted(unknown)}")
        for p in self:
            p.set_trainable(p.name in names)

    def freeze(self) -> None:
        self.set_trainable(())

    def zero_grad(self) -> None:
        for p in self:
            p.zero_grad()

    def count(self, names: Optional[Iterable[str]] = None) -> int:
        if names is None:
            return sum(p.size for p in self)
        return sum(self._params[n].size for n in names)

    def clone(self) -> "ParameterStore":
        other = ParameterStore()
        for p in self:
            other.add(p.name, p.data.copy(), trainable=p.trainable)
        return other

    def snapshot(self) -> dict[str, np.ndarray]:
        return {p.name: p.data.copy() for p in self}

    def restore(self, snapshot: dict[str, np.ndarray]) -> None:
        for name, arr in snapshot.items():
            target = self._params[name].value
            if target.data.shape != arr.shape:
                raise ContractError(f"restore: shape mismatch for '{name}'")
            target.data = arr.copy()
            target.zero_grad()

    def digest(self, names: Optional[Iterable[str]] = None) -> dict[str, str]:
        """sha256 of each parameter's bytes (freeze-integrity checks)."""
        selected = self.names() if names is None else list(names)
        return {n: hashlib.sha256(self._params[n].data.tobytes()).hexdigest() for n in selected}

    def to_dict(self, frozen: bool = False) -> dict[str, Any]:
        return {
            "version": STORE_VERSION,
            "frozen": frozen,
            "params": {
                p.name: {"shape": list(p.data.shape), "data": p.data.reshape(-1).tolist()}
                for p in self
            },
        }

    def dumps(self, frozen: bool = False) -> str:
        """Byte-stable JSON (sorted keys, shortest round-trip float repr)."""
        return json.dumps(self.to_dict(frozen), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, payload: dict[str, Any], trainable: bool = True) -> "ParameterStore":
        from ..utils.json_utils import validate_param_store

        validate_param_store(payload)
        store = cls()
        for name in sorted(payload["params"]):
            entry = payload["params"][name]
            arr = np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
            store.add(name, arr, trainable=trainable and not payload["frozen"])
        return store

    @classmethod
    def loads(cls, text: str, trainable: bool = True) -> "ParameterStore":
        return cls.from_dict(json.loads(text), trainable=trainable)


# --------------------------------------------------------------------------
# Finite-difference gradient check
# --------------------------------------------------------------------------


# Rounding error of one loss evaluation, in units of eps * |loss|
ROUNDOFF_ULPS = 64.0


@dataclass
class GradCheckReport:
    """Outcome of a sampled finite-difference check."""

    max_rel_error: float
    checked: int
    below_floor: int = 0
    floor: float = 0.0


def resolution_floor(loss_value: float, epsilon: float, rtol: float) -> float:
    """Smallest derivative a central difference resolves to relative accuracy ``rtol``.

    Each loss evaluation carries about ROUNDOFF_ULPS * eps * |loss| of rounding
    error, which the difference quotient divides by ``epsilon``.
    """
    noise = ROUNDOFF_ULPS * float(np.finfo(np.float64).eps) * abs(loss_value) / epsilon
    return noise / rtol


def grad_check_report(
    loss_fn: Callable[[], Value],
    params: Sequence[Parameter],
    epsilon: float = 1e-5,
    max_coords: int = 200,
    seed: int = 0,
    floor: float = 0.0,
) -> GradCheckReport:
    """Compare tape gradients with central differences on sampled coordinates.

    The error of a coordinate is |g_ad - g_fd| / (|g_ad| + |g_fd| + 1e-12).
    A coordinate is skipped, and counted in ``below_floor``, only when both
    estimates are at most ``floor`` in magnitude. ``loss_fn`` must rebuild
    the graph from the current parameter data on every call.
    """
    if epsilon <= 0:
        raise ContractError(f"epsilon must be positive, got {epsilon}")
    if floor < 0:
        raise ContractError(f"floor must be non-negative, got {floor}")
    for p in params:
        p.zero_grad()
    backward(loss_fn())
    analytic = [p.grad.reshape(-1).copy() for p in params]

    coords = [(i, k) for i, p in enumerate(params) for k in range(p.size)]
    if len(coords) > max_coords:
        rng = np.random.default_rng(seed)
        picks = rng.choice(len(coords), size=max_coords, replace=False)
        coords = [coords[j] for j in sorted(picks)]

    worst, skipped = 0.0, 0
    for i, k in coords:
        flat = params[i].value.data.reshape(-1)
        original = flat[k]
        flat[k] = original + epsilon
        f_plus = float(loss_fn().data)
        flat[k] = original - epsilon
        f_minus = float(loss_fn().data)
        flat[k] = original
        g_fd = (f_plus - f_minus) / (2.0 * epsilon)
        g_ad = float(analytic[i][k])
        if floor > 0 and abs(g_ad) <= floor and abs(g_fd) <= floor:
            skipped += 1
            continue
        worst = max(worst, abs(g_ad - g_fd) / (abs(g_ad) + abs(g_fd) + 1e-12))
    for p in params:
        p.zero_grad()
    if skipped:
        logger.debug(f"{skipped} of {len(coords)} coordinates below the {floor:.2e} floor")
    return GradCheckReport(max_rel_error=worst, checked=len(coords), below_floor=skipped, floor=floor)


def grad_check(
    loss_fn: Callable[[], Value],
    params: Sequence[Parameter],
    epsilon: float = 1e-5,
    max_coords: int = 200,
    seed: int = 0,
    floor: float = 0.0,
) -> float:
    """Max relative error between tape and central-difference gradients."""
    return grad_check_report(loss_fn, params, epsilon, max_coords, seed, floor).max_rel_error
