"""Dense tensor engine: forward ops, their vector-Jacobian products, and a
reverse-mode tape.

Tensors are immutable values; every operation returns a fresh tensor.  When a
``Tape`` context is active, each op records a backward closure so that
``Tape.gradients`` can later compute d(output)/d(anything on the tape) by one
reverse sweep.  VJPs are also exported as standalone ``vjp_<op>`` functions so
they can be checked against finite differences independently of the tape.
"""

from __future__ import annotations

import math
import threading
from typing import Iterable, Sequence

import numpy as np
from scipy.special import erf

from .errors import ShapeError, StateError

_DTYPES = {"f32": np.float32, "f64": np.float64}
_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)

DEFAULT_EPS = 1e-6  # layernorm epsilon


class Tensor:
    """Immutable dense n-d array, row-major, f32 or f64."""

    __slots__ = ("_array",)

    def __init__(self, values, dtype: str = "f32"):
        if dtype not in _DTYPES:
            raise ValueError(f"unknown dtype {dtype!r}, expected 'f32' or 'f64'")
        arr = np.array(values, dtype=_DTYPES[dtype], order="C")
        arr.flags.writeable = False
        self._array = arr

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        """Adopt ``arr`` without copying.  Caller must not mutate it afterwards."""
        t = object.__new__(cls)
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        t._array = arr
        return t

    @classmethod
    def zeros(cls, shape: Sequence[int], dtype: str = "f32") -> "Tensor":
        return cls._wrap(np.zeros(tuple(shape), dtype=_DTYPES[dtype]))

    @property
    def array(self) -> np.ndarray:
        """Read-only numpy view of the underlying storage."""
        return self._array

    @property
    def shape(self) -> tuple[int, ...]:
        return self._array.shape

    @property
    def ndim(self) -> int:
        return self._array.ndim

    @property
    def size(self) -> int:
        return self._array.size

    @property
    def dtype(self) -> str:
        return "f32" if self._array.dtype == np.float32 else "f64"

    @property
    def data(self) -> np.ndarray:
        """Flat row-major view of the values."""
        return self._array.reshape(-1)

    def astype(self, dtype: str) -> "Tensor":
        if dtype == self.dtype:
            return self
        return Tensor._wrap(self._array.astype(_DTYPES[dtype]))

    def item(self) -> float:
        return float(self._array.reshape(-1)[0])

    def tolist(self):
        return self._array.tolist()

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype})"


def _np(dtype_str: str):
    return _DTYPES[dtype_str]


def _same_dtype(*ts: Tensor) -> str:
    d = ts[0].dtype
    for t in ts[1:]:
        if t.dtype != d:
            raise ShapeError(f"mixed dtypes: {[t.dtype for t in ts]}")
    return d


# ---------------------------------------------------------------------------
# Tape
# ---------------------------------------------------------------------------

_TAPE_STACK = threading.local()


def _stack() -> list:
    if not hasattr(_TAPE_STACK, "stack"):
        _TAPE_STACK.stack = []
    return _TAPE_STACK.stack


def _active_tape():
    st = _stack()
    return st[-1] if st else None


class Tape:
    """Recorded evaluation graph for one backward pass.

    One tape per evaluation context; contexts may run in parallel threads
    (the active-tape stack is thread-local).
    """

    def __init__(self):
        self._entries: list[tuple[Tensor, tuple[Tensor, ...], object]] = []

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        popped = _stack().pop()
        assert popped is self

    def _record(self, out: Tensor, inputs: tuple[Tensor, ...], vjp) -> None:
        self._entries.append((out, inputs, vjp))

    def gradients(self, output: Tensor, seed: Tensor, wrt: Iterable[Tensor]) -> list[Tensor]:
        """Reverse sweep: returns d(output·seed)/d(w) for each w in ``wrt``.

        Tensors in ``wrt`` that the output does not depend on get zero
        gradients.  ``seed`` must match the output shape.
        """
        if not self._entries:
            raise StateError("tape is empty: nothing was recorded")
        if seed.shape != output.shape:
            raise ShapeError(f"seed shape {seed.shape} != output shape {output.shape}")
        grads: dict[int, np.ndarray] = {id(output): seed.array}
        for out, inputs, vjp in reversed(self._entries):
            g = grads.get(id(out))
            if g is None:
                continue
            for inp, gi in zip(inputs, vjp(Tensor._wrap(g))):
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + gi.array
                else:
                    grads[key] = gi.array
        result = []
        for w in wrt:
            g = grads.get(id(w))
            if g is None:
                g = np.zeros(w.shape, dtype=_np(w.dtype))
            result.append(Tensor._wrap(g))
        return result


# ---------------------------------------------------------------------------
# Forward operations
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes; leading axes broadcast."""
    _same_dtype(a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs rank >= 2 operands, got {a.shape} x {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} x {b.shape}")
    try:
        out = Tensor._wrap(np.matmul(a.array, b.array))
    except ValueError as exc:
        raise ShapeError(f"matmul batch dims not broadcastable: {a.shape} x {b.shape}") from exc
    tape = _active_tape()
    if tape is not None:
        tape._record(out, (a, b), lambda u: vjp_matmul(a, b, u))
    return out


def softmax_lastaxis(x: Tensor) -> Tensor:
    """Softmax over the last axis, stabilized by max subtraction."""
    if x.shape[-1] < 1:
        raise ShapeError(f"softmax needs a non-empty last axis, got {x.shape}")
    a = x.array
    z = a - a.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = Tensor._wrap(e / e.sum(axis=-1, keepdims=True))
    tape = _active_tape()
    if tape is not None:
        tape._record(out, (x,), lambda u: vjp_softmax_lastaxis(x, u))
    return out


def layernorm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = DEFAULT_EPS) -> Tensor:
    """Normalize each last-axis slice to zero mean / unit variance, then affine."""
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(
            f"layernorm parameter shapes {gamma.shape}/{beta.shape} do not match last axis {d}"
        )
    a = x.array
    mu = a.mean(axis=-1, keepdims=True)
    var = np.mean((a - mu) ** 2, axis=-1, keepdims=True)
    xhat = (a - mu) / np.sqrt(var + _np(x.dtype)(eps))
    out = Tensor._wrap(xhat * gamma.array + beta.array)
    tape = _active_tape()
    if tape is not None:
        tape._record(out, (x, gamma, beta), lambda u: vjp_layernorm(x, gamma, beta, eps, u))
    return out


def gelu(x: Tensor) -> Tensor:
    """Exact Gaussian-CDF gelu: x * Phi(x)."""
    a = x.array
    out = Tensor._wrap(a * (0.5 * (1.0 + erf(a * _INV_SQRT2))).astype(a.dtype))
    tape = _active_tape()
    if tape is not None:
        tape._record(out, (x,), lambda u: vjp_gelu(x, u))
    return out


def relu(x: Tensor) -> Tensor:
    out = Tensor._wrap(np.maximum(x.array, 0))
    tape = _active_tape()
    if tape is not None:
        tape._record(out, (x,), lambda u: vjp_relu(x, u))
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum of two same-shape tensors."""
    _same_dtype(a, b)
    if a.shape != b.shape:
        raise ShapeError(f"add shapes disagree: {a.shape} vs {b.shape}")
    out = Tensor._wrap(a.array + b.array)
    tape = _active_tape()
    if tape is not None:
        tape._record(out, (a, b), lambda u: vjp_add(a, b, u))
    return out


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Add a 1-d bias along the last axis (broadcast over leading axes)."""
    _same_dtype(x, b)
    if b.ndim != 1 or b.shape[0] != x.shape[-1]:
        raise ShapeError(f"bias shape {b.shape} does not match last axis of {x.shape}")
    out = Tensor._wrap(x.array + b.array)
    tape = _active_tape()
    if tape is not None:
        tape._record(out, (x, b), lambda u: vjp_add_bias(x, b, u))
    return out


def scale(x: Tensor, s: float) -> Tensor:
    """Multiply by a scalar constant (the constant is not differentiated)."""
    out = Tensor._wrap(x.array * _np(x.dtype)(s))
    tape = _active_tape()
    if tape is not None:
        tape._record(out, (x,), lambda u: vjp_scale(x, s, u))
    return out


def elementwise_mul(a: Tensor, b: Tensor) -> Tensor:
    _same_dtype(a, b)
    if a.shape != b.shape:
        raise ShapeError(f"elementwise_mul shapes disagree: {a.shape} vs {b.shape}")
    out = Tensor._wrap(a.array * b.array)
    tape = _active_tape()
    if tape is not None:
        tape._record(out, (a, b), lambda u: vjp_elementwise_mul(a, b, u))
    return out


def transpose(x: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    out = Tensor._wrap(np.transpose(x.array, axes).copy())
    tape = _active_tape()
    if tape is not None:
        tape._record(out, (x,), lambda u: vjp_transpose(x, axes, u))
    return out


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    if math.prod(shape) != x.size:
        raise ShapeError(f"cannot reshape {x.shape} to {shape}")
    out = Tensor._wrap(x.array.reshape(shape))
    tape = _active_tape()
    if tape is not None:
        tape._record(out, (x,), lambda u: vjp_reshape(x, shape, u))
    return out


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not parts:
        raise ShapeError("concat of zero tensors")
    _same_dtype(*parts)
    ranks = {p.ndim for p in parts}
    if len(ranks) != 1:
        raise ShapeError(f"concat rank mismatch: {[p.shape for p in parts]}")
    out = Tensor._wrap(np.concatenate([p.array for p in parts], axis=axis))
    tape = _active_tape()
    if tape is not None:
        parts_t = tuple(parts)
        tape._record(out, parts_t, lambda u: vjp_concat(parts_t, axis, u))
    return out


def slice_axis(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    """Contiguous slice [start, stop) along one axis."""
    n = x.shape[axis]
    if not (0 <= start < stop <= n):
        raise ShapeError(f"slice [{start}:{stop}) out of range for axis {axis} of {x.shape}")
    idx = [slice(None)] * x.ndim
    idx[axis] = slice(start, stop)
    out = Tensor._wrap(x.array[tuple(idx)].copy())
    tape = _active_tape()
    if tape is not None:
        tape._record(out, (x,), lambda u: vjp_slice_axis(x, axis, start, stop, u))
    return out


# ---------------------------------------------------------------------------
# Vector-Jacobian products
# ---------------------------------------------------------------------------
# VJPs work on raw numpy arrays and never record on the tape, so first-order
# tapes cannot nest.

def _check_upstream(u: Tensor, out_shape: tuple[int, ...], op: str) -> None:
    if u.shape != out_shape:
        raise ShapeError(f"vjp_{op}: upstream shape {u.shape} != output shape {out_shape}")


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient over axes that were broadcast in the forward op."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if g.shape[ax] != n:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _swap_last(a: np.ndarray) -> np.ndarray:
    return np.swapaxes(a, -1, -2)


def vjp_matmul(a: Tensor, b: Tensor, upstream: Tensor) -> tuple[Tensor, Tensor]:
    out_shape = np.broadcast_shapes(a.shape[:-2], b.shape[:-2]) + (a.shape[-2], b.shape[-1])
    _check_upstream(upstream, out_shape, "matmul")
    u = upstream.array
    da = _unbroadcast(np.matmul(u, _swap_last(b.array)), a.shape)
    db = _unbroadcast(np.matmul(_swap_last(a.array), u), b.shape)
    return Tensor._wrap(da), Tensor._wrap(db)


def vjp_softmax_lastaxis(x: Tensor, upstream: Tensor) -> tuple[Tensor]:
    _check_upstream(upstream, x.shape, "softmax_lastaxis")
    a = x.array
    z = a - a.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)
    u = upstream.array
    dx = y * (u - (u * y).sum(axis=-1, keepdims=True))
    return (Tensor._wrap(dx),)


def vjp_layernorm(
    x: Tensor, gamma: Tensor, beta: Tensor, eps: float, upstream: Tensor
) -> tuple[Tensor, Tensor, Tensor]:
    _check_upstream(upstream, x.shape, "layernorm")
    a = x.array
    u = upstream.array
    mu = a.mean(axis=-1, keepdims=True)
    var = np.mean((a - mu) ** 2, axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + _np(x.dtype)(eps))
    xhat = (a - mu) * inv
    lead = tuple(range(a.ndim - 1))
    dgamma = (u * xhat).sum(axis=lead)
    dbeta = u.sum(axis=lead)
    dxhat = u * gamma.array
    dx = inv * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return Tensor._wrap(dx), Tensor._wrap(dgamma), Tensor._wrap(dbeta)


def vjp_gelu(x: Tensor, upstream: Tensor) -> tuple[Tensor]:
    _check_upstream(upstream, x.shape, "gelu")
    a = x.array
    phi = np.exp(-0.5 * a * a) * _np(x.dtype)(_INV_SQRT2PI)
    cdf = 0.5 * (1.0 + erf(a * _INV_SQRT2))
    return (Tensor._wrap(upstream.array * (cdf + a * phi).astype(a.dtype)),)


def vjp_relu(x: Tensor, upstream: Tensor) -> tuple[Tensor]:
    _check_upstream(upstream, x.shape, "relu")
    return (Tensor._wrap(upstream.array * (x.array > 0)),)


def vjp_add(a: Tensor, b: Tensor, upstream: Tensor) -> tuple[Tensor, Tensor]:
    _check_upstream(upstream, a.shape, "add")
    return Tensor._wrap(upstream.array.copy()), Tensor._wrap(upstream.array.copy())


def vjp_add_bias(x: Tensor, b: Tensor, upstream: Tensor) -> tuple[Tensor, Tensor]:
    _check_upstream(upstream, x.shape, "add_bias")
    u = upstream.array
    lead = tuple(range(u.ndim - 1))
    return Tensor._wrap(u.copy()), Tensor._wrap(u.sum(axis=lead))


def vjp_scale(x: Tensor, s: float, upstream: Tensor) -> tuple[Tensor]:
    _check_upstream(upstream, x.shape, "scale")
    return (Tensor._wrap(upstream.array * _np(x.dtype)(s)),)


def vjp_elementwise_mul(a: Tensor, b: Tensor, upstream: Tensor) -> tuple[Tensor, Tensor]:
    _check_upstream(upstream, a.shape, "elementwise_mul")
    u = upstream.array
    return Tensor._wrap(u * b.array), Tensor._wrap(u * a.array)


def vjp_transpose(x: Tensor, axes: Sequence[int] | None, upstream: Tensor) -> tuple[Tensor]:
    if axes is None:
        inv = None
        out_shape = x.shape[::-1]
    else:
        inv = np.argsort(axes)
        out_shape = tuple(x.shape[a] for a in axes)
    _check_upstream(upstream, out_shape, "transpose")
    return (Tensor._wrap(np.transpose(upstream.array, inv).copy()),)


def vjp_reshape(x: Tensor, shape: Sequence[int], upstream: Tensor) -> tuple[Tensor]:
    _check_upstream(upstream, tuple(shape), "reshape")
    return (Tensor._wrap(upstream.array.reshape(x.shape)),)


def vjp_concat(parts: Sequence[Tensor], axis: int, upstream: Tensor) -> tuple[Tensor, ...]:
    grads = []
    pos = 0
    for p in parts:
        n = p.shape[axis]
        idx = [slice(None)] * upstream.ndim
        idx[axis] = slice(pos, pos + n)
        grads.append(Tensor._wrap(upstream.array[tuple(idx)].copy()))
        pos += n
    if pos != upstream.shape[axis]:
        raise ShapeError(f"vjp_concat: upstream axis {axis} extent {upstream.shape[axis]} != {pos}")
    return tuple(grads)


def vjp_slice_axis(x: Tensor, axis: int, start: int, stop: int, upstream: Tensor) -> tuple[Tensor]:
    g = np.zeros(x.shape, dtype=_np(x.dtype))
    idx = [slice(None)] * x.ndim
    idx[axis] = slice(start, stop)
    g[tuple(idx)] = upstream.array
    return (Tensor._wrap(g),)
