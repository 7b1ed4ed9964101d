"""Dense float64 tensors with tape-based reverse-mode automatic differentiation.

Every primitive needed by the retrieval engine (matmul, softmax, layer norm,
L2 normalization, ...) records a node on an implicit tape as it executes, so
a single `backward` call fills the `.grad` slot of every trainable leaf.
The tape is rebuilt on every forward pass; tensors that participate in a
graph must not be mutated in place until the graph has been discarded
(parameter updates between steps mutate leaf `.data`, which is fine).
"""

from __future__ import annotations

import itertools
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "AutodiffError",
    "ShapeError",
    "GraphError",
    "as_tensor",
    "parameter",
    "constant",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "matmul",
    "transpose",
    "concat",
    "narrow",
    "take_rows",
    "softmax",
    "sigmoid",
    "gelu",
    "exp",
    "log",
    "layer_norm",
    "mean",
    "tensor_sum",
    "l2_normalize",
    "backward",
    "graph_nodes",
    "has_nonfinite",
]


class AutodiffError(Exception):
    """Base error for tensor and graph misuse."""


class ShapeError(AutodiffError):
    """Operand shapes do not conform for a primitive."""


class GraphError(AutodiffError):
    """Backward-pass misuse (bad seed, nothing to differentiate)."""


_node_counter = itertools.count()


class Tensor:
    """A dense float64 array plus its position in the current tape.

    Leaves are created with :func:`parameter` (trainable, receives `.grad`)
    or :func:`constant`. Non-leaf tensors are produced by the primitives
    below and carry a closure implementing their adjoint rule.
    """

    def __init__(
        self,
        data: np.ndarray,
        requires_grad: bool = False,
        op: str = "leaf",
        parents: tuple["Tensor", ...] = (),
        vjp: Callable[[np.ndarray], tuple[np.ndarray | None, ...]] | None = None,
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.op = op
        self.parents = parents
        self._vjp = vjp
        self.node_id = next(_node_counter)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item: tensor has {self.data.size} elements, expected 1")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, seed=None) -> dict["Tensor", np.ndarray]:
        return backward(self, seed)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    # operator sugar; scalars are wrapped as constants
    def __add__(self, other):
        return add(self, as_tensor(other))

    def __radd__(self, other):
        return add(as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, as_tensor(other))

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, as_tensor(other))

    def __rmul__(self, other):
        return mul(as_tensor(other), self)

    def __truediv__(self, other):
        return div(self, as_tensor(other))

    def __rtruediv__(self, other):
        return div(as_tensor(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(value) -> Tensor:
    """Wrap a scalar/array as a constant Tensor; pass Tensors through."""
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=np.float64))


def parameter(data, name: str | None = None) -> Tensor:
    t = Tensor(np.array(data, dtype=np.float64), requires_grad=True)
    t.op = "param" if name is None else f"param:{name}"
    return t


def constant(data) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64))


def has_nonfinite(t: Tensor) -> bool:
    """True if the tensor contains NaN or Inf (propagated, never raised)."""
    return not bool(np.isfinite(t.data).all())


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    # collapse gradient of a broadcast operand back to its original shape
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _make(data, op, parents, vjp) -> Tensor:
    needs = any(p.requires_grad for p in parents)
    if not needs:
        return Tensor(data, op=op)
    return Tensor(data, requires_grad=True, op=op, parents=tuple(parents), vjp=vjp)


def _check_broadcast(op: str, x: Tensor, y: Tensor) -> None:
    try:
        np.broadcast_shapes(x.shape, y.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {x.shape} and {y.shape} do not broadcast") from None


# ---------------------------------------------------------------------------
# arithmetic


def add(x: Tensor, y: Tensor) -> Tensor:
    _check_broadcast("add", x, y)

    def vjp(g):
        return _unbroadcast(g, x.shape), _unbroadcast(g, y.shape)

    return _make(x.data + y.data, "add", (x, y), vjp)


def sub(x: Tensor, y: Tensor) -> Tensor:
    _check_broadcast("sub", x, y)

    def vjp(g):
        return _unbroadcast(g, x.shape), _unbroadcast(-g, y.shape)

    return _make(x.data - y.data, "sub", (x, y), vjp)


def mul(x: Tensor, y: Tensor) -> Tensor:
    """Elementwise (and scalar) multiply with numpy broadcasting."""
    _check_broadcast("mul", x, y)

    def vjp(g):
        return _unbroadcast(g * y.data, x.shape), _unbroadcast(g * x.data, y.shape)

    return _make(x.data * y.data, "mul", (x, y), vjp)


def div(x: Tensor, y: Tensor) -> Tensor:
    _check_broadcast("div", x, y)

    def vjp(g):
        gx = _unbroadcast(g / y.data, x.shape)
        gy = _unbroadcast(-g * x.data / (y.data * y.data), y.shape)
        return gx, gy

    return _make(x.data / y.data, "div", (x, y), vjp)


def neg(x: Tensor) -> Tensor:
    def vjp(g):
        return (-g,)

    return _make(-x.data, "neg", (x,), vjp)


def matmul(x: Tensor, y: Tensor) -> Tensor:
    if x.data.ndim != 2 or y.data.ndim != 2:
        raise ShapeError(f"matmul: expects 2-D operands, got {x.shape} and {y.shape}")
    if x.shape[1] != y.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ for {x.shape} and {y.shape}")

    def vjp(g):
        return g @ y.data.T, x.data.T @ g

    return _make(x.data @ y.data, "matmul", (x, y), vjp)


def transpose(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise ShapeError(f"transpose: expects a 2-D operand, got {x.shape}")

    def vjp(g):
        return (g.T,)

    return _make(x.data.T.copy(), "transpose", (x,), vjp)


# ---------------------------------------------------------------------------
# structural ops


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat: needs at least one tensor")
    ndim = tensors[0].data.ndim
    for t in tensors[1:]:
        if t.data.ndim != ndim:
            raise ShapeError(
                f"concat: rank mismatch between {tensors[0].shape} and {t.shape}"
            )
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        return tuple(
            np.take(g, np.arange(offsets[i], offsets[i + 1]), axis=axis)
            for i in range(len(tensors))
        )

    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(
            f"concat: incompatible shapes {[t.shape for t in tensors]} along axis {axis}"
        ) from None
    return _make(out, "concat", tuple(tensors), vjp)


def narrow(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice of `length` entries along `axis` starting at `start`."""
    if axis >= x.data.ndim or axis < -x.data.ndim:
        raise ShapeError(f"narrow: axis {axis} out of range for shape {x.shape}")
    size = x.shape[axis]
    if start < 0 or length < 0 or start + length > size:
        raise ShapeError(
            f"narrow: window [{start}, {start + length}) exceeds axis of size {size} in {x.shape}"
        )
    index = [slice(None)] * x.data.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)

    def vjp(g):
        full = np.zeros_like(x.data)
        full[index] = g
        return (full,)

    return _make(x.data[index].copy(), "narrow", (x,), vjp)


def take_rows(x: Tensor, indices: Iterable[int]) -> Tensor:
    """Gather rows (axis 0) by integer index; duplicates accumulate in backward."""
    idx = np.asarray(list(indices), dtype=np.intp)
    if x.data.ndim < 1:
        raise ShapeError(f"take_rows: expects at least 1-D operand, got {x.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[0]):
        raise ShapeError(
            f"take_rows: index out of range for {x.shape[0]} rows: {idx.tolist()}"
        )

    def vjp(g):
        full = np.zeros_like(x.data)
        np.add.at(full, idx, g)
        return (full,)

    return _make(x.data[idx].copy(), "take_rows", (x,), vjp)


# ---------------------------------------------------------------------------
# nonlinearities and normalizations


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax along `axis`; rows sum to one."""
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        inner = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - inner),)

    return _make(out, "softmax", (x,), vjp)


def sigmoid(x: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-x.data))

    def vjp(g):
        return (g * out * (1.0 - out),)

    return _make(out, "sigmoid", (x,), vjp)


_GELU_K = 0.7978845608028654  # sqrt(2/pi)
_GELU_C = 0.044715


def gelu(x: Tensor) -> Tensor:
    """GELU, tanh approximation."""
    u = _GELU_K * (x.data + _GELU_C * x.data**3)
    t = np.tanh(u)
    out = 0.5 * x.data * (1.0 + t)

    def vjp(g):
        du = _GELU_K * (1.0 + 3.0 * _GELU_C * x.data**2)
        d = 0.5 * (1.0 + t) + 0.5 * x.data * (1.0 - t * t) * du
        return (g * d,)

    return _make(out, "gelu", (x,), vjp)


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)

    def vjp(g):
        return (g * out,)

    return _make(out, "exp", (x,), vjp)


def log(x: Tensor) -> Tensor:
    out = np.log(x.data)

    def vjp(g):
        return (g / x.data,)

    return _make(out, "log", (x,), vjp)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale and shift."""
    if eps <= 0:
        raise ShapeError("layer_norm: eps must be positive")
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(
            f"layer_norm: gain/bias shapes {gain.shape}/{bias.shape} do not match feature dim {d}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = xhat * gain.data + bias.data

    def vjp(g):
        gxhat = g * gain.data
        gx = inv * (
            gxhat
            - gxhat.mean(axis=-1, keepdims=True)
            - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True)
        )
        ggain = _unbroadcast(g * xhat, gain.shape)
        gbias = _unbroadcast(g, bias.shape)
        return gx, ggain, gbias

    return _make(out, "layer_norm", (x, gain, bias), vjp)


def mean(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    count = x.data.size if axis is None else x.shape[axis]

    def vjp(g):
        if axis is None:
            return (np.full_like(x.data, np.asarray(g).reshape(()) / count),)
        gg = np.asarray(g)
        if not keepdims:
            gg = np.expand_dims(gg, axis)
        return (np.broadcast_to(gg, x.data.shape).copy() / count,)

    return _make(x.data.mean(axis=axis, keepdims=keepdims), "mean", (x,), vjp)


def tensor_sum(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    def vjp(g):
        if axis is None:
            return (np.full_like(x.data, np.asarray(g).reshape(())),)
        gg = np.asarray(g)
        if not keepdims:
            gg = np.expand_dims(gg, axis)
        return (np.broadcast_to(gg, x.data.shape).copy(),)

    return _make(x.data.sum(axis=axis, keepdims=keepdims), "sum", (x,), vjp)


def l2_normalize(x: Tensor, axis: int = -1, eps: float = 1e-12) -> Tensor:
    """Scale slices along `axis` to unit L2 norm; zero slices stay (near) zero."""
    if eps <= 0:
        raise ShapeError("l2_normalize: eps must be positive")
    norm = np.sqrt((x.data**2).sum(axis=axis, keepdims=True))
    denom = np.maximum(norm, eps)
    out = x.data / denom

    def vjp(g):
        inner = (g * x.data).sum(axis=axis, keepdims=True)
        # below the epsilon guard the map is linear in x
        gx = np.where(norm > eps, (g - out * inner / denom) / denom, g / eps)
        return (gx,)

    return _make(out, "l2_normalize", (x,), vjp)


# ---------------------------------------------------------------------------
# backward pass


def _reachable_postorder(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(root: Tensor, seed=None) -> dict[Tensor, np.ndarray]:
    """Reverse-mode pass from `root`; fills `.grad` on trainable leaves.

    `seed` must match the root's shape (defaults to 1 for single-element
    roots). Gradients from multiple uses of a tensor accumulate additively,
    and repeated backward calls keep accumulating into `.grad`.
    Returns the map of leaf tensors to the gradients of this call.
    """
    if not root.requires_grad:
        raise GraphError(
            "backward: output does not depend on any trainable tensor "
            "(was the forward pass run with parameters?)"
        )
    if seed is None:
        if root.data.size != 1:
            raise GraphError("backward: seed required for non-scalar output")
        seed_arr = np.ones_like(root.data)
    else:
        seed_arr = seed.data if isinstance(seed, Tensor) else np.asarray(seed, dtype=np.float64)
        if seed_arr.shape != root.data.shape:
            raise ShapeError(
                f"backward: seed shape {seed_arr.shape} does not match output shape {root.data.shape}"
            )

    order = _reachable_postorder(root)
    grads: dict[int, np.ndarray] = {id(root): seed_arr.astype(np.float64, copy=True)}
    leaf_grads: dict[Tensor, np.ndarray] = {}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._vjp is None:
            # trainable leaf
            if node.grad is None:
                node.grad = np.zeros_like(node.data)
            node.grad += g
            leaf_grads[node] = g
            continue
        for parent, pg in zip(node.parents, node._vjp(g)):
            if pg is None or not parent.requires_grad:
                continue
            acc = grads.get(id(parent))
            if acc is None:
                grads[id(parent)] = pg.astype(np.float64, copy=True)
            else:
                acc += pg
    return leaf_grads


def graph_nodes(root: Tensor) -> list[tuple[int, str, tuple[int, ...]]]:
    """Topologically ordered (node_id, op, parent node_ids) records under `root`."""
    return [
        (node.node_id, node.op, tuple(p.node_id for p in node.parents))
        for node in _reachable_postorder(root)
    ]
