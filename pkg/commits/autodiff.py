"""Reverse-mode automatic differentiation over numpy arrays.

Each op builds a new Tensor holding its parents and a closure that pushes the
output gradient back into them; ``Tensor.backward`` walks the graph in reverse
topological order.
"""
from contextlib import contextmanager
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import NonFiniteDetected, ShapeMismatch


class _State:
    dtype = np.float32
    grad_enabled = True
    check_finite = False


@contextmanager
def precision(dtype):
    """Create tensors with ``dtype`` inside the block (np.float64 for tight gradient checks)."""
    previous = _State.dtype
    _State.dtype = dtype
    try:
        yield
    finally:
        _State.dtype = previous


@contextmanager
def no_grad():
    previous = _State.grad_enabled
    _State.grad_enabled = False
    try:
        yield
    finally:
        _State.grad_enabled = previous


@contextmanager
def finite_guard():
    """Raise NonFiniteDetected as soon as an op produces NaN or infinity."""
    previous = _State.check_finite
    _State.check_finite = True
    try:
        yield
    finally:
        _State.check_finite = previous


def default_dtype():
    return _State.dtype


class Tensor:
    __slots__ = ('data', 'requires_grad', 'grad', '_parents', '_backward', 'name')

    def __init__(self, data, requires_grad: bool = False, name: str = ''):
        self.data = np.asarray(data, dtype=_State.dtype)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = np.zeros_like(self.data) if requires_grad else None
        self._parents: Tuple['Tensor', ...] = ()
        self._backward: Optional[Callable[[np.ndarray], None]] = None
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        if not self.requires_grad:
            return
        order = _topological_order(self)
        for node in order:
            if node._backward is not None:
                node.grad = None
        self.grad = np.ones_like(self.data) if grad is None else np.asarray(grad, dtype=self.data.dtype)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)


TensorLike = Union[Tensor, np.ndarray, float, int]


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def _as_tensor(value: TensorLike) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _topological_order(root: Tensor) -> List[Tensor]:
    order: List[Tensor] = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def _result(data: np.ndarray, parents: Sequence[Tensor], backward: Callable[[np.ndarray], None], op: str) -> Tensor:
    out = Tensor(data)
    if _State.check_finite and not np.all(np.isfinite(out.data)):
        raise NonFiniteDetected(f"{op} produced non-finite values")
    if _State.grad_enabled and any(parent.requires_grad for parent in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatch(op, a.shape, b.shape) from None


# elementwise

def add(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast('add', a, b)

    def backward(grad):
        if a.requires_grad:
            a._accumulate(_unbroadcast(grad, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(grad, b.shape))
    return _result(a.data + b.data, (a, b), backward, 'add')


def sub(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast('sub', a, b)

    def backward(grad):
        if a.requires_grad:
            a._accumulate(_unbroadcast(grad, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-grad, b.shape))
    return _result(a.data - b.data, (a, b), backward, 'sub')


def mul(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast('mul', a, b)

    def backward(grad):
        if a.requires_grad:
            a._accumulate(_unbroadcast(grad * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(grad * a.data, b.shape))
    return _result(a.data * b.data, (a, b), backward, 'mul')


def div(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast('div', a, b)

    def backward(grad):
        if a.requires_grad:
            a._accumulate(_unbroadcast(grad / b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-grad * a.data / (b.data ** 2), b.shape))
    return _result(a.data / b.data, (a, b), backward, 'div')


def tanh(x: Tensor) -> Tensor:
    out_data = np.tanh(x.data)

    def backward(grad):
        x._accumulate(grad * (1.0 - out_data ** 2))
    return _result(out_data, (x,), backward, 'tanh')


def sigmoid(x: Tensor) -> Tensor:
    out_data = 1.0 / (1.0 + np.exp(-x.data))

    def backward(grad):
        x._accumulate(grad * out_data * (1.0 - out_data))
    return _result(out_data, (x,), backward, 'sigmoid')


def relu(x: Tensor) -> Tensor:
    out_data = np.maximum(x.data, 0)

    def backward(grad):
        x._accumulate(grad * (x.data > 0))
    return _result(out_data, (x,), backward, 'relu')


# linear algebra and shape

def matmul(a: TensorLike, b: TensorLike) -> Tensor:
    """Matrix product over the last two axes, broadcasting leading batch axes."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch('matmul', a.shape, b.shape)

    def backward(grad):
        if a.requires_grad:
            a._accumulate(_unbroadcast(grad @ np.swapaxes(b.data, -1, -2), a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(np.swapaxes(a.data, -1, -2) @ grad, b.shape))
    return _result(a.data @ b.data, (a, b), backward, 'matmul')


def concat(tensors: Sequence[TensorLike], axis: int = -1) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    try:
        out_data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeMismatch('concat', *[t.shape for t in tensors]) from None
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(grad):
        for t, piece in zip(tensors, np.split(grad, sizes, axis=axis)):
            if t.requires_grad:
                t._accumulate(piece)
    return _result(out_data, tensors, backward, 'concat')


def stack(tensors: Sequence[TensorLike], axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    try:
        out_data = np.stack([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeMismatch('stack', *[t.shape for t in tensors]) from None

    def backward(grad):
        for i, t in enumerate(tensors):
            if t.requires_grad:
                t._accumulate(np.take(grad, i, axis=axis))
    return _result(out_data, tensors, backward, 'stack')


def getitem(x: Tensor, index) -> Tensor:
    """Basic or integer-array indexing; repeated indices accumulate gradient."""
    out_data = x.data[index]

    def backward(grad):
        full = np.zeros_like(x.data)
        np.add.at(full, index, grad)
        x._accumulate(full)
    return _result(np.array(out_data), (x,), backward, 'getitem')


slice_ = getitem


def reshape(x: Tensor, shape: Tuple[int, ...]) -> Tensor:
    try:
        out_data = x.data.reshape(shape)
    except ValueError:
        raise ShapeMismatch('reshape', x.shape, shape) from None

    def backward(grad):
        x._accumulate(grad.reshape(x.shape))
    return _result(out_data, (x,), backward, 'reshape')


def transpose(x: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    axes = tuple(axes) if axes is not None else tuple(reversed(range(x.ndim)))
    inverse = tuple(np.argsort(axes))

    def backward(grad):
        x._accumulate(np.transpose(grad, inverse))
    return _result(np.transpose(x.data, axes), (x,), backward, 'transpose')


# reductions

def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    out_data = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(grad):
        if axis is not None and not keepdims:
            grad = np.expand_dims(grad, axis)
        x._accumulate(np.broadcast_to(grad, x.shape))
    return _result(out_data, (x,), backward, 'sum')


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / float(count))


# probabilities

def _masked(values: np.ndarray, mask: Optional[np.ndarray]) -> np.ndarray:
    if mask is None:
        return values
    return np.where(mask, values, -np.inf)


def softmax(x: Tensor, axis: int = -1, mask: Optional[np.ndarray] = None) -> Tensor:
    """Softmax with max subtraction; positions where ``mask`` is False get exactly 0."""
    logits = _masked(x.data, mask)
    peak = np.max(logits, axis=axis, keepdims=True)
    peak = np.where(np.isfinite(peak), peak, 0.0)
    exp = np.exp(logits - peak)
    total = exp.sum(axis=axis, keepdims=True)
    out_data = exp / np.where(total > 0, total, 1.0)

    def backward(grad):
        dot = (grad * out_data).sum(axis=axis, keepdims=True)
        x._accumulate(out_data * (grad - dot))
    return _result(out_data, (x,), backward, 'softmax')


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    out_data = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))

    def backward(grad):
        probs = np.exp(out_data)
        x._accumulate(grad - probs * grad.sum(axis=axis, keepdims=True))
    return _result(out_data, (x,), backward, 'log_softmax')


def dropout(x: Tensor, p: float, training: bool, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: identity at inference or when p == 0."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must lie in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    keep = (rng.random(x.shape) >= p).astype(x.data.dtype) / (1.0 - p)
    return mul(x, keep)


def embedding_lookup(table: Tensor, indices) -> Tensor:
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size and (indices.min() < 0 or indices.max() >= table.shape[0]):
        raise ShapeMismatch('embedding_lookup', table.shape, indices.shape)
    return getitem(table, indices)


# convolution and pooling

def conv_2d(x: Tensor, kernels: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """Stride-1 'same' convolution: x (B, C, H, W), kernels (K, C, kh, kw) -> (B, K, H, W)."""
    if x.ndim != 4 or kernels.ndim != 4 or x.shape[1] != kernels.shape[1]:
        raise ShapeMismatch('conv_2d', x.shape, kernels.shape)
    kh, kw = kernels.shape[2:]
    top, left = (kh - 1) // 2, (kw - 1) // 2
    padded = np.pad(x.data, ((0, 0), (0, 0), (top, kh - 1 - top), (left, kw - 1 - left)))
    windows = sliding_window_view(padded, (kh, kw), axis=(2, 3))
    out_data = np.einsum('bchwij,kcij->bkhw', windows, kernels.data, optimize=True)
    parents = [x, kernels]
    if bias is not None:
        out_data = out_data + bias.data[None, :, None, None]
        parents.append(bias)
    height, width = x.shape[2:]

    def backward(grad):
        if kernels.requires_grad:
            kernels._accumulate(np.einsum('bkhw,bchwij->kcij', grad, windows, optimize=True))
        if bias is not None and bias.requires_grad:
            bias._accumulate(grad.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            per_window = np.einsum('bkhw,kcij->bchwij', grad, kernels.data, optimize=True)
            padded_grad = np.zeros_like(padded)
            for i in range(kh):
                for j in range(kw):
                    padded_grad[:, :, i:i + height, j:j + width] += per_window[..., i, j]
            x._accumulate(padded_grad[:, :, top:top + height, left:left + width])
    return _result(out_data, parents, backward, 'conv_2d')


def max_pool_2d(x: Tensor, kernel: Tuple[int, int] = (2, 2), stride: Tuple[int, int] = (2, 2)) -> Tensor:
    """Max pooling over the last two axes without padding."""
    kh, kw = kernel
    sh, sw = stride
    if x.ndim < 2 or x.shape[-2] < kh or x.shape[-1] < kw:
        raise ShapeMismatch('max_pool_2d', x.shape, kernel)
    lead = x.shape[:-2]
    flat = x.data.reshape((-1,) + x.shape[-2:])
    windows = sliding_window_view(flat, (kh, kw), axis=(1, 2))[:, ::sh, ::sw]
    n, out_h, out_w = windows.shape[:3]
    cells = windows.reshape(n, out_h, out_w, kh * kw)
    best = cells.argmax(axis=-1)
    out_data = np.take_along_axis(cells, best[..., None], axis=-1)[..., 0]

    def backward(grad):
        rows = np.arange(out_h)[None, :, None] * sh + best // kw
        cols = np.arange(out_w)[None, None, :] * sw + best % kw
        batch = np.broadcast_to(np.arange(n)[:, None, None], best.shape)
        full = np.zeros_like(flat)
        np.add.at(full, (batch, rows, cols), grad.reshape(n, out_h, out_w))
        x._accumulate(full.reshape(x.shape))
    return _result(out_data.reshape(lead + (out_h, out_w)), (x,), backward, 'max_pool_2d')


# losses

def cross_entropy_with_logits(logits: Tensor, targets, mask: Optional[np.ndarray] = None) -> Tensor:
    """Mean negative log-likelihood of ``targets`` over positions where ``mask`` is set."""
    targets = np.asarray(targets, dtype=np.int64)
    if logits.shape[:-1] != targets.shape:
        raise ShapeMismatch('cross_entropy_with_logits', logits.shape, targets.shape)
    weights = np.ones(targets.shape, dtype=logits.data.dtype) if mask is None else np.asarray(mask, dtype=logits.data.dtype)
    count = max(float(weights.sum()), 1.0)
    shifted = logits.data - np.max(logits.data, axis=-1, keepdims=True)
    log_total = np.log(np.exp(shifted).sum(axis=-1))
    picked = np.take_along_axis(shifted, targets[..., None], axis=-1)[..., 0]
    losses = log_total - picked
    out_data = np.asarray((losses * weights).sum() / count)

    def backward(grad):
        probs = np.exp(shifted - log_total[..., None])
        onehot = np.zeros_like(probs)
        np.put_along_axis(onehot, targets[..., None], 1.0, axis=-1)
        logits._accumulate(grad * (probs - onehot) * (weights / count)[..., None])
    return _result(out_data, (logits,), backward, 'cross_entropy_with_logits')


def mse(pred: Tensor, target: TensorLike) -> Tensor:
    target = _as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeMismatch('mse', pred.shape, target.shape)
    diff = sub(pred, target)
    return mean(mul(diff, diff))


def where(condition: np.ndarray, a: TensorLike, b: TensorLike) -> Tensor:
    """Elementwise select with a constant boolean condition."""
    keep = np.asarray(condition, dtype=_State.dtype)
    return add(mul(a, keep), mul(b, 1.0 - keep))


def parameters_of(tensors: Iterable[Tensor]) -> List[Tensor]:
    return [t for t in tensors if t.requires_grad]
