"""Small tape-based reverse-mode differentiation over dense float64 arrays.

Each operation returns a new :class:`Tensor` that remembers its parents and a
closure mapping the output adjoint to parent adjoints. :func:`backward` walks
the recorded graph once, in reverse topological order, accumulating adjoints.

Subgradient conventions at kinks: ``relu'(0) = 0``, ``abs'(0) = 0`` and the
Frobenius norm has gradient 0 at the zero matrix.
"""
from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    pass


class GradientCheckError(AssertionError):
    pass


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "op", "name", "_parents", "_backward")

    def __init__(self, value, requires_grad: bool = False, name: str | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.op = "leaf"
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(op={self.op}{label}, shape={self.shape})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return subtract(self, other)

    def __rsub__(self, other):
        return subtract(other, self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return multiply(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        if np.isscalar(other):
            return scale(self, 1.0 / float(other))
        return divide(self, other)

    def __rtruediv__(self, other):
        return divide(other, self)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(value, parents: tuple[Tensor, ...], backward, op: str) -> Tensor:
    out = Tensor(value)
    out.op = op
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# -- elementwise binary ------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")
    return _make(
        a.value + b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        "add",
    )


def subtract(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "subtract")
    return _make(
        a.value - b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
        "subtract",
    )


def multiply(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "multiply")
    return _make(
        a.value * b.value,
        (a, b),
        lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)),
        "multiply",
    )


def divide(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "divide")
    out = a.value / b.value

    def backward(g):
        ga = _unbroadcast(g / b.value, a.shape)
        gb = _unbroadcast(-g * out / b.value, b.shape)
        return ga, gb

    return _make(out, (a, b), backward, "divide")


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    return _make(a.value * c, (a,), lambda g: (g * c,), "scale")


# -- elementwise unary -------------------------------------------------------

def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.value > 0
    return _make(np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,), "relu")


def abs(a) -> Tensor:  # noqa: A001 - mirrors numpy naming
    a = as_tensor(a)
    sign = np.sign(a.value)
    return _make(np.abs(a.value), (a,), lambda g: (g * sign,), "abs")


def log2(a) -> Tensor:
    a = as_tensor(a)
    v = a.value
    return _make(np.log2(v), (a,), lambda g: (g / (v * np.log(2.0)),), "log2")


# -- reductions --------------------------------------------------------------

def _norm_axes(axis, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(ax % ndim for ax in axis))


def sum(a, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    axes = _norm_axes(axis, a.ndim)
    out = a.value.sum(axis=axes, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(out, (a,), backward, "sum")


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _norm_axes(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    return scale(sum(a, axis=axes, keepdims=keepdims), 1.0 / count)


def frobenius_norm(a, axis=(-2, -1)) -> Tensor:
    """sqrt of the sum of squares over ``axis`` (all axes when ``None``)."""
    a = as_tensor(a)
    axes = _norm_axes(axis, a.ndim)
    out = np.sqrt((a.value * a.value).sum(axis=axes))

    def backward(g):
        denom = np.expand_dims(out, axes)
        safe = np.where(denom > 0, denom, 1.0)
        ratio = np.where(denom > 0, a.value / safe, 0.0)
        return (np.expand_dims(g, axes) * ratio,)

    return _make(out, (a,), backward, "frobenius_norm")


# -- linear algebra ----------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if b.ndim == 1:
        return reshape(matmul(a, reshape(b, (b.shape[0], 1))), a.shape[:-1])
    if a.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    try:
        out = a.value @ b.value
    except ValueError:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}") from None

    def backward(g):
        ga = _unbroadcast(g @ np.swapaxes(b.value, -1, -2), a.shape)
        gb = _unbroadcast(np.swapaxes(a.value, -1, -2) @ g, b.shape)
        return ga, gb

    return _make(out, (a, b), backward, "matmul")


def _contract(ia: str, ib: str, out: str, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Two-operand einsum evaluated as one batched matmul."""
    batch = [c for c in out if c in ia and c in ib]
    summed = [c for c in ia if c in ib and c not in out]
    keep_a = [c for c in ia if c not in ib]
    keep_b = [c for c in ib if c not in ia]
    size = {**dict(zip(ia, a.shape)), **dict(zip(ib, b.shape))}

    def n(chars):
        return int(np.prod([size[c] for c in chars])) if chars else 1

    at = a.transpose([ia.index(c) for c in batch + keep_a + summed]).reshape(n(batch), n(keep_a), n(summed))
    bt = b.transpose([ib.index(c) for c in batch + summed + keep_b]).reshape(n(batch), n(summed), n(keep_b))
    res = (at @ bt).reshape([size[c] for c in batch + keep_a + keep_b])
    order = batch + keep_a + keep_b
    return res.transpose([order.index(c) for c in out])


def einsum(spec: str, a, b) -> Tensor:
    """Two-operand einsum without implicit output or repeated indices.

    Every index of an operand must appear in the other operand or in the
    output, so each adjoint is itself a contraction of the same kind.
    """
    a, b = as_tensor(a), as_tensor(b)
    lhs, out_idx = spec.replace(" ", "").split("->")
    ia, ib = lhs.split(",")
    if len(ia) != a.ndim or len(ib) != b.ndim:
        raise ShapeError(f"einsum {spec!r}: operand ranks {a.shape} and {b.shape} do not match")
    for idx, other in ((ia, ib + out_idx), (ib, ia + out_idx)):
        if len(set(idx)) != len(idx) or any(c not in other for c in idx):
            raise ValueError(f"einsum spec {spec!r} not supported")
    for c in set(ia) & set(ib):
        if a.shape[ia.index(c)] != b.shape[ib.index(c)]:
            raise ShapeError(f"einsum {spec!r}: incompatible shapes {a.shape} and {b.shape}")
    out = _contract(ia, ib, out_idx, a.value, b.value)

    def backward(g):
        return _contract(out_idx, ib, ia, g, b.value), _contract(out_idx, ia, ib, g, a.value)

    return _make(out, (a, b), backward, "einsum")


# -- shape manipulation ------------------------------------------------------

def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.value.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {a.shape} to {tuple(shape)}") from None
    return _make(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def broadcast_to(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        out = np.broadcast_to(a.value, shape)
    except ValueError:
        raise ShapeError(f"broadcast: cannot broadcast {a.shape} to {tuple(shape)}") from None
    return _make(out, (a,), lambda g: (_unbroadcast(g, a.shape),), "broadcast")


def concatenate(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    try:
        out = np.concatenate([t.value for t in tensors], axis=axis)
    except ValueError:
        shapes = [t.shape for t in tensors]
        raise ShapeError(f"concatenate: incompatible shapes {shapes} on axis {axis}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _make(out, tensors, backward, "concatenate")


def index_select(a, index, axis: int = 0) -> Tensor:
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.intp)
    axis = axis % a.ndim
    out = np.take(a.value, index, axis=axis)

    def backward(g):
        ga = np.zeros_like(a.value)
        # move the selected axis first so np.add.at can scatter duplicates
        moved = np.moveaxis(ga, axis, 0)
        gm = np.moveaxis(g, list(range(axis, axis + index.ndim)), list(range(index.ndim)))
        np.add.at(moved, index, gm)
        return (ga,)

    return _make(out, (a,), backward, "index_select")


# -- driver ------------------------------------------------------------------

def _topological_order(root: Tensor) -> list[Tensor]:
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
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(root: Tensor) -> dict[Tensor, np.ndarray]:
    """Populate ``.grad`` for every node feeding ``root``; return leaf grads.

    Leaves that require a gradient but do not influence ``root`` are not
    reachable from it; callers should treat a missing entry as zero.
    """
    if root.value.size != 1:
        raise ShapeError(f"backward needs a scalar root, got shape {root.shape}")
    order = _topological_order(root)
    for node in order:
        node.grad = None
    root.grad = np.ones_like(root.value)
    for node in reversed(order):
        if node._backward is None or node.grad is None:
            continue
        for parent, g in zip(node._parents, node._backward(node.grad)):
            if g is None or not parent.requires_grad:
                continue
            parent.grad = g.copy() if parent.grad is None else parent.grad + g
    leaves = {}
    for node in order:
        if node.is_leaf and node.requires_grad:
            leaves[node] = node.grad if node.grad is not None else np.zeros_like(node.value)
    return leaves


def grad_of(root: Tensor, leaves: Iterable[Tensor]) -> list[np.ndarray]:
    got = backward(root)
    return [got.get(leaf, np.zeros_like(leaf.value)) for leaf in leaves]


def gradient_check(
    f: Callable[[dict[str, Tensor]], Tensor],
    params: dict[str, np.ndarray],
    eps: float = 1e-6,
    tol: float | None = None,
) -> float:
    """Compare reverse-mode gradients of ``f`` with central differences.

    Returns ``max |analytic - numeric| / max(1, |numeric|)`` over every entry
    of every parameter. When ``tol`` is given and exceeded a
    :class:`GradientCheckError` names the worst parameter entry.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError(f"eps must lie in [1e-7, 1e-3], got {eps}")
    base = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    leaves = {k: Tensor(v.copy(), requires_grad=True, name=k) for k, v in base.items()}
    root = f(leaves)
    if not np.isfinite(root.value).all():
        raise FloatingPointError("function value is not finite")
    analytic = dict(zip(leaves, grad_of(root, leaves.values())))

    def value_at(name: str, flat_idx: int, delta: float) -> float:
        arrays = {k: v.copy() for k, v in base.items()}
        arrays[name].reshape(-1)[flat_idx] += delta
        val = float(f({k: Tensor(v) for k, v in arrays.items()}).value)
        if not np.isfinite(val):
            raise FloatingPointError(f"non-finite function value perturbing {name}[{flat_idx}]")
        return val

    worst, where = 0.0, None
    for name, arr in base.items():
        ga = analytic[name].reshape(-1)
        for idx in range(arr.size):
            numeric = (value_at(name, idx, eps) - value_at(name, idx, -eps)) / (2 * eps)
            err = np.abs(ga[idx] - numeric) / max(1.0, np.abs(numeric))
            if err > worst:
                worst, where = float(err), (name, np.unravel_index(idx, arr.shape))
    if tol is not None and worst >= tol:
        raise GradientCheckError(f"gradient mismatch {worst:.3e} at {where[0]}{tuple(int(i) for i in where[1])}")
    return worst
