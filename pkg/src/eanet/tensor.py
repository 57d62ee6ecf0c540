"""Dense float64 tensors with reverse-mode automatic differentiation.

The design is a dynamic tape: every primitive that touches a tensor with
``requires_grad`` appends a record (output tensor plus a backward closure)
to the active tape. ``backward(loss)`` seeds the loss gradient with one,
walks the tape in reverse creation order (which is a valid reverse
topological order, because inputs always exist before the op that uses
them), accumulates gradients into ``.grad``, and finally clears the tape.
Leaf tensors keep their accumulated gradients across backward calls so a
minibatch can be accumulated by running backward once per instance.

Broadcasting on elementwise ops follows numpy semantics, which is exactly
"extend singleton axes"; gradients are summed back down to each operand's
shape. Tensors recorded on a tape must not be mutated in place before
backward runs.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, DimensionError


class Tape:
    """Ordered record of primitive operations for one forward pass."""

    __slots__ = ("_records",)

    def __init__(self):
        self._records: list[tuple[Tensor, object]] = []

    def __len__(self) -> int:
        return len(self._records)

    def record(self, out: "Tensor", backward_fn) -> None:
        self._records.append((out, backward_fn))

    def clear(self) -> None:
        self._records.clear()

    def run_backward(self, loss: "Tensor") -> None:
        if loss.data.ndim != 0:
            self.clear()
            raise ContractError(
                f"backward needs a scalar loss, got shape {loss.data.shape}"
            )
        loss.grad = np.ones((), dtype=np.float64)
        for out, fn in reversed(self._records):
            if out.grad is not None:
                fn(out.grad)
        self.clear()


_tape = Tape()
_grad_enabled = True


def tape() -> Tape:
    """The process-wide tape. Single threaded by design."""
    return _tape


def backward(loss: "Tensor") -> None:
    """Backpropagate from a scalar loss and clear the tape."""
    _tape.run_backward(loss)


class no_grad:
    """Context manager that evaluates ops without recording them."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


class Tensor:
    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of shape {self.data.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    # Operator sugar; the module-level functions do the real work.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(as_tensor(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient down to ``shape`` (inverse of numpy broadcasting)."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _check_broadcast(a: Tensor, b: Tensor, opname: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(
            f"{opname}: shapes {a.shape} and {b.shape} do not broadcast"
        ) from None


def _make(out_data: np.ndarray, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    out = Tensor(out_data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        _tape.record(out, backward_fn)
    return out


# ---------------------------------------------------------------------------
# elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    out_data = a.data + b.data

    def back(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _make(out_data, (a, b), back)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    out_data = a.data - b.data

    def back(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(-g, b.shape))

    return _make(out_data, (a, b), back)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    out_data = a.data * b.data

    def back(g):
        _accumulate(a, _unbroadcast(g * b.data, a.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _make(out_data, (a, b), back)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "div")
    out_data = a.data / b.data

    def back(g):
        _accumulate(a, _unbroadcast(g / b.data, a.shape))
        _accumulate(b, _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _make(out_data, (a, b), back)


def neg(a) -> Tensor:
    a = as_tensor(a)

    def back(g):
        _accumulate(a, -g)

    return _make(-a.data, (a,), back)


def exp(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.exp(a.data)

    def back(g):
        _accumulate(a, g * out_data)

    return _make(out_data, (a,), back)


def log(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.log(a.data)

    def back(g):
        _accumulate(a, g / a.data)

    return _make(out_data, (a,), back)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.tanh(a.data)

    def back(g):
        _accumulate(a, g * (1.0 - out_data * out_data))

    return _make(out_data, (a,), back)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out_data = 1.0 / (1.0 + np.exp(-a.data))

    def back(g):
        _accumulate(a, g * out_data * (1.0 - out_data))

    return _make(out_data, (a,), back)


def prelu(a, slope) -> Tensor:
    """Parametric ReLU: x for x > 0, slope * x otherwise.

    ``slope`` is itself a tensor (usually a scalar) so it can be learned.
    """
    a, slope = as_tensor(a), as_tensor(slope)
    _check_broadcast(a, slope, "prelu")
    positive = a.data > 0
    out_data = np.where(positive, a.data, slope.data * a.data)

    def back(g):
        _accumulate(a, g * np.where(positive, 1.0, slope.data))
        _accumulate(slope, _unbroadcast(g * np.where(positive, 0.0, a.data), slope.shape))

    return _make(out_data, (a, slope), back)


def clamp(a, lo: float | None = None, hi: float | None = None) -> Tensor:
    """Clip values to [lo, hi]. Gradient is 1 where the value passed
    through unchanged and 0 where it was clipped."""
    a = as_tensor(a)
    if lo is None and hi is None:
        raise ContractError("clamp needs at least one bound")
    out_data = np.clip(a.data, lo, hi)
    mask = np.ones_like(a.data)
    if lo is not None:
        mask = mask * (a.data >= lo)
    if hi is not None:
        mask = mask * (a.data <= hi)

    def back(g):
        _accumulate(a, g * mask)

    return _make(out_data, (a,), back)


# ---------------------------------------------------------------------------
# contractions and structure


def matmul(a, b) -> Tensor:
    """Matrix product with numpy batching rules on the leading axes.

    Both operands need at least two axes; the last axis of ``a`` must match
    the second-to-last axis of ``b``.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs 2-d operands, got {a.shape} x {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: inner extents differ, {a.shape} x {b.shape}")
    try:
        out_data = np.matmul(a.data, b.data)
    except ValueError:
        raise DimensionError(
            f"matmul: batch axes do not broadcast, {a.shape} x {b.shape}"
        ) from None

    def back(g):
        if a.requires_grad:
            ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
            _accumulate(a, _unbroadcast(ga, a.shape))
        if b.requires_grad:
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
            _accumulate(b, _unbroadcast(gb, b.shape))

    return _make(out_data, (a, b), back)


def conv2d(x, kernel) -> Tensor:
    """2-d cross-correlation with a 3x3 kernel and zero padding of one.

    ``x`` has shape (C_in, H, W) or batched (N, C_in, H, W) and ``kernel``
    (C_out, C_in, 3, 3); the output keeps the input rank. In this package
    the channel axis carries time and (H, W) is the (agent, feature)
    plane; the batch axis is used to push many instances through one call.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    if x.ndim not in (3, 4) or kernel.ndim != 4:
        raise DimensionError(f"conv2d: need x rank 3 or 4 and kernel rank 4, got {x.shape} and {kernel.shape}")
    if kernel.shape[-2:] != (3, 3):
        raise DimensionError(f"conv2d: kernel window must be 3x3, got {kernel.shape}")
    if kernel.shape[1] != x.shape[-3]:
        raise DimensionError(
            f"conv2d: input channels differ, x {x.shape} vs kernel {kernel.shape}"
        )
    squeeze = x.ndim == 3
    xd = x.data[None] if squeeze else x.data
    n, c_in, h, w = xd.shape
    xp = np.zeros((n, c_in, h + 2, w + 2), dtype=np.float64)
    xp[:, :, 1:-1, 1:-1] = xd
    windows = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(2, 3))
    out_data = np.einsum("nchwij,ocij->nohw", windows, kernel.data, optimize=True)
    if squeeze:
        out_data = out_data[0]

    def back(g):
        gb = g[None] if squeeze else g
        if kernel.requires_grad:
            gk = np.einsum("nohw,nchwij->ocij", gb, windows, optimize=True)
            _accumulate(kernel, gk)
        if x.requires_grad:
            gp = np.zeros((n, gb.shape[1], h + 4, w + 4), dtype=np.float64)
            gp[:, :, 2:-2, 2:-2] = gb
            gwin = np.lib.stride_tricks.sliding_window_view(gp, (3, 3), axis=(2, 3))
            flipped = kernel.data[:, :, ::-1, ::-1]
            gxp = np.einsum("noyzij,ocij->ncyz", gwin, flipped, optimize=True)
            gxp = gxp[:, :, 1:-1, 1:-1]
            _accumulate(x, gxp[0] if squeeze else gxp)

    return _make(out_data, (x, kernel), back)


def _normalize_axis(axis: int, ndim: int, opname: str) -> int:
    if not -ndim <= axis < ndim:
        raise DimensionError(f"{opname}: axis {axis} out of range for rank {ndim}")
    return axis % ndim


def tensor_sum(a, axis: int | None = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        out_data = a.data.sum()

        def back(g):
            _accumulate(a, np.broadcast_to(g, a.shape).copy())

        return _make(out_data, (a,), back)

    ax = _normalize_axis(axis, a.ndim, "sum")
    out_data = a.data.sum(axis=ax, keepdims=keepdims)

    def back(g):
        if not keepdims:
            g = np.expand_dims(g, ax)
        _accumulate(a, np.broadcast_to(g, a.shape).copy())

    return _make(out_data, (a,), back)


def tensor_mean(a, axis: int | None = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        n = a.data.size
        out_data = a.data.mean()

        def back(g):
            _accumulate(a, np.broadcast_to(g / n, a.shape).copy())

        return _make(out_data, (a,), back)

    ax = _normalize_axis(axis, a.ndim, "mean")
    n = a.shape[ax]
    out_data = a.data.mean(axis=ax, keepdims=keepdims)

    def back(g):
        if not keepdims:
            g = np.expand_dims(g, ax)
        _accumulate(a, np.broadcast_to(g / n, a.shape).copy())

    return _make(out_data, (a,), back)


def reshape(a, shape: tuple[int, ...]) -> Tensor:
    a = as_tensor(a)
    try:
        out_data = a.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"reshape: cannot view {a.shape} as {shape}") from None

    def back(g):
        _accumulate(a, g.reshape(a.shape))

    return _make(out_data, (a,), back)


def getitem(a, key) -> Tensor:
    """Basic (slice/integer) indexing. Fancy indexing is not supported."""
    a = as_tensor(a)
    out_data = a.data[key]

    def back(g):
        full = np.zeros_like(a.data)
        full[key] += g
        _accumulate(a, full)

    return _make(out_data, (a,), back)


def stack(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ContractError("stack needs at least one tensor")
    first = tensors[0].shape
    for t in tensors[1:]:
        if t.shape != first:
            raise DimensionError(f"stack: shapes differ, {first} vs {t.shape}")
    out_data = np.stack([t.data for t in tensors], axis=axis)

    def back(g):
        pieces = np.split(g, len(tensors), axis=axis)
        for t, piece in zip(tensors, pieces):
            _accumulate(t, np.squeeze(piece, axis=axis))

    return _make(out_data, tuple(tensors), back)


def global_grad_norm(tensors) -> float:
    """Euclidean norm over the concatenated gradients of ``tensors``."""
    total = 0.0
    for t in tensors:
        if t.grad is not None:
            total += float(np.sum(t.grad * t.grad))
    return float(np.sqrt(total))


def scale_grads(tensors, factor: float) -> None:
    for t in tensors:
        if t.grad is not None:
            t.grad *= factor
