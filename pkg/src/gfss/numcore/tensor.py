"""Tensors with reverse-mode automatic differentiation.

Data is float32 throughout, stored row-major in numpy arrays.  Every
differentiable op records its inputs and a backward closure on the output
tensor; ``Tensor.backward()`` replays the recorded graph in reverse
topological order and accumulates gradients into every tensor that
requires them.

Structural and arithmetic primitives live here; neural-network ops
(softmax, conv2d, attention, ...) compose them in
:mod:`gfss.numcore.functional`.  Broadcasting is deliberately restricted
to scalar-tensor and trailing-axis bias addition so each backward rule
stays small and auditable.
"""

from __future__ import annotations

import threading

import numpy as np

# Grad mode is per-thread so an inference pass on one worker cannot stop
# graph recording on another.
_state = threading.local()
_debug_finite = False


class no_grad:
    """Context manager that suspends graph recording."""

    def __enter__(self):
        self._saved = grad_enabled()
        _state.grad_enabled = False
        return self

    def __exit__(self, *exc):
        _state.grad_enabled = self._saved
        return False


def grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


def set_debug_finite(on: bool) -> None:
    """When on, every op output is checked for NaN/Inf (error state)."""
    global _debug_finite
    _debug_finite = bool(on)


class Tensor:
    """n-dimensional float32 array with an optional gradient."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float32)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward = None

    # basic introspection -------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        flags = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flags})"

    # autograd -------------------------------------------------------------

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.asarray(g, dtype=np.float32).copy()
        else:
            self.grad += g

    def backward(self, grad=None) -> None:
        """Backpropagate from this tensor through the recorded graph."""
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without grad requires a scalar tensor")
            grad = np.ones_like(self.data)
        # iterative postorder DFS, robust to deep graphs
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
        self._accumulate(np.asarray(grad, dtype=np.float32).reshape(self.data.shape))
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    # operator sugar ---------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_wrap(other)))

    def __rsub__(self, other):
        return add(_wrap(other), neg(self))

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        if not isinstance(scalar, (int, float)):
            raise TypeError("tensor division supports scalars only")
        return mul(self, 1.0 / scalar)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], (tuple, list)) else shape)

    def transpose(self, *axes):
        return transpose(self, axes[0] if len(axes) == 1 and isinstance(axes[0], (tuple, list)) else axes)

    def sum(self, axis=None, keepdims=False):
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tensor_mean(self, axis=axis, keepdims=keepdims)

    def relu(self):
        return relu(self)


def _wrap(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _from_op(out_data: np.ndarray, parents: tuple, backward, op: str) -> Tensor:
    """Wrap an op result, recording the graph edge when gradients are live."""
    if _debug_finite and not np.isfinite(out_data).all():
        raise FloatingPointError(f"{op} produced non-finite values")
    out = Tensor(out_data)
    if grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


# arithmetic ops -------------------------------------------------------------


def add(a: Tensor, b) -> Tensor:
    """Elementwise sum; also scalar + tensor and trailing-axis bias."""
    if isinstance(b, (int, float)):
        a = _wrap(a)
        out_data = a.data + np.float32(b)

        def backward(g, a=a):
            if a.requires_grad:
                a._accumulate(g)

        return _from_op(out_data, (a,), backward, "add")

    a, b = _wrap(a), _wrap(b)
    if a.shape == b.shape:
        bias = None
    elif b.ndim == 1 and a.ndim > 1 and a.shape[-1] == b.shape[0]:
        bias = b
    elif b.data.size == 1 or a.data.size == 1:
        bias = None  # scalar tensor broadcasts
    else:
        raise ValueError(f"add: incompatible shapes {a.shape} and {b.shape}")
    out_data = a.data + b.data

    def backward(g, a=a, b=b, bias=bias):
        if a.requires_grad:
            a._accumulate(g if a.shape == g.shape else g.sum().reshape(a.shape))
        if b.requires_grad:
            if bias is not None:
                b._accumulate(g.reshape(-1, b.shape[0]).sum(axis=0))
            elif b.shape == g.shape:
                b._accumulate(g)
            else:
                b._accumulate(g.sum().reshape(b.shape))

    return _from_op(out_data, (a, b), backward, "add")


def neg(a: Tensor) -> Tensor:
    a = _wrap(a)

    def backward(g, a=a):
        if a.requires_grad:
            a._accumulate(-g)

    return _from_op(-a.data, (a,), backward, "neg")


def mul(a: Tensor, b) -> Tensor:
    """Elementwise product; second operand may be a python scalar."""
    if isinstance(b, (int, float)):
        a = _wrap(a)
        s = np.float32(b)

        def backward(g, a=a, s=s):
            if a.requires_grad:
                a._accumulate(g * s)

        return _from_op(a.data * s, (a,), backward, "mul")

    a, b = _wrap(a), _wrap(b)
    if a.shape != b.shape and a.data.size != 1 and b.data.size != 1:
        raise ValueError(f"mul: incompatible shapes {a.shape} and {b.shape}")
    out_data = a.data * b.data

    def backward(g, a=a, b=b):
        if a.requires_grad:
            ga = g * b.data
            a._accumulate(ga if ga.shape == a.shape else ga.sum().reshape(a.shape))
        if b.requires_grad:
            gb = g * a.data
            b._accumulate(gb if gb.shape == b.shape else gb.sum().reshape(b.shape))

    return _from_op(out_data, (a, b), backward, "mul")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; 2-D or batched with identical leading dimensions."""
    a, b = _wrap(a), _wrap(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul requires tensors of rank >= 2")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul: inner dimensions disagree: {a.shape} x {b.shape}")
    if a.ndim != 2 or b.ndim != 2:
        if a.shape[:-2] != b.shape[:-2]:
            raise ValueError(f"matmul: batch dimensions disagree: {a.shape} x {b.shape}")
    out_data = a.data @ b.data

    def backward(g, a=a, b=b):
        if a.requires_grad:
            a._accumulate(g @ np.swapaxes(b.data, -1, -2))
        if b.requires_grad:
            b._accumulate(np.swapaxes(a.data, -1, -2) @ g)

    return _from_op(out_data, (a, b), backward, "matmul")


def relu(a: Tensor) -> Tensor:
    a = _wrap(a)
    out_data = np.maximum(a.data, 0.0)

    def backward(g, a=a, mask=a.data > 0):
        if a.requires_grad:
            a._accumulate(g * mask)

    return _from_op(out_data, (a,), backward, "relu")


def clamp_min(a: Tensor, floor: float) -> Tensor:
    """max(a, floor); gradient passes only where a exceeds the floor."""
    a = _wrap(a)
    out_data = np.maximum(a.data, np.float32(floor))

    def backward(g, a=a, mask=a.data > floor):
        if a.requires_grad:
            a._accumulate(g * mask)

    return _from_op(out_data, (a,), backward, "clamp_min")


def log(a: Tensor) -> Tensor:
    a = _wrap(a)

    def backward(g, a=a):
        if a.requires_grad:
            a._accumulate(g / a.data)

    return _from_op(np.log(a.data), (a,), backward, "log")


# structural ops ---------------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    a = _wrap(a)
    shape = tuple(shape)

    def backward(g, a=a):
        if a.requires_grad:
            a._accumulate(g.reshape(a.data.shape))

    return _from_op(a.data.reshape(shape), (a,), backward, "reshape")


def transpose(a: Tensor, axes) -> Tensor:
    a = _wrap(a)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def backward(g, a=a, inverse=inverse):
        if a.requires_grad:
            a._accumulate(g.transpose(inverse))

    return _from_op(a.data.transpose(axes), (a,), backward, "transpose")


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = tuple(_wrap(t) for t in tensors)
    if not tensors:
        raise ValueError("concat of an empty sequence")
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    offsets = np.cumsum([t.data.shape[axis] for t in tensors])[:-1]

    def backward(g, tensors=tensors, axis=axis, offsets=offsets):
        pieces = np.split(g, offsets, axis=axis)
        for t, piece in zip(tensors, pieces):
            if t.requires_grad:
                t._accumulate(piece)

    return _from_op(out_data, tensors, backward, "concat")


def slice_axis(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    """Contiguous slice along one axis."""
    a = _wrap(a)
    index = tuple(slice(None) if d != axis else slice(start, stop) for d in range(a.ndim))

    def backward(g, a=a, index=index):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            full[index] = g
            a._accumulate(full)

    return _from_op(a.data[index].copy(), (a,), backward, "slice_axis")


def tensor_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims, dtype=np.float32)

    def backward(g, a=a, axis=axis, keepdims=keepdims):
        if not a.requires_grad:
            return
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.data.shape))

    return _from_op(np.asarray(out_data, dtype=np.float32), (a,), backward, "sum")


def tensor_mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    if axis is None:
        count = a.data.size
    elif isinstance(axis, tuple):
        count = int(np.prod([a.data.shape[d] for d in axis]))
    else:
        count = a.data.shape[axis]
    return mul(tensor_sum(a, axis=axis, keepdims=keepdims), 1.0 / count)
