"""Reverse-mode automatic differentiation over dense numpy buffers.

The engine is deliberately small: a `Tensor` wraps an immutable float64
numpy array, a `Tape` records differentiable operations in execution
order, and `backward` replays the tape once in reverse. Operations run
outside any active tape compute plain values and track no gradients,
which is how frozen-model forwards are expressed.

Shapes are explicit everywhere; the only broadcasting is trailing-shape
bias addition in `add`. Every operation validates its inputs and checks
its output for NaN/Inf so a diverging training run fails loudly.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import erf

from .errors import (
    ContractError,
    DegenerateVectorError,
    DimensionError,
    LabelError,
    NonFiniteError,
)

DTYPE = np.float64

# norms below this are treated as zero vectors
_NORM_FLOOR = 1e-12

_LN_EPS = 1e-5

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


class Tensor:
    """Dense n-dimensional float64 array with an optional gradient buffer.

    Values are frozen at construction (the numpy buffer is marked
    read-only); only the `grad` attribute is ever written afterwards,
    so tensors can be shared freely across threads.
    """

    __slots__ = ("values", "requires_grad", "grad", "is_leaf")

    def __init__(self, values, requires_grad: bool = False, *, _leaf: bool = True):
        if _leaf:
            arr = np.array(values, dtype=DTYPE)  # private copy of user data
        else:
            arr = np.asarray(values, dtype=DTYPE)  # op results are already fresh
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError("tensor contains NaN or Inf values")
        if arr.flags.writeable:
            arr.setflags(write=False)
        self.values = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.is_leaf = _leaf

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return self.values.size

    def item(self) -> float:
        if self.values.ndim != 0:
            raise ContractError(f"item() requires a scalar tensor, got shape {self.shape}")
        return float(self.values)

    def __repr__(self) -> str:
        flags = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={list(self.shape)}{flags})"


@dataclass
class _OpRecord:
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@dataclass
class Tape:
    """Execution-ordered record of differentiable operations.

    Use as a context manager around the forward pass being
    differentiated. Appending at execution time keeps the record
    topologically ordered, so `backward` can walk it in reverse and
    visit each operation exactly once. A tape is single-use.
    """

    _records: list[_OpRecord] = field(default_factory=list)
    consumed: bool = False

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _tape_stack()
        if not stack or stack[-1] is not self:
            raise ContractError("tape context exited out of order")
        stack.pop()

    def __len__(self) -> int:
        return len(self._records)

    def _record(self, inputs: tuple[Tensor, ...], output: Tensor, backward_fn) -> None:
        if self.consumed:
            raise ContractError("tape already consumed by a backward pass")
        self._records.append(_OpRecord(inputs, output, backward_fn))


_LOCAL = threading.local()


def _tape_stack() -> list[Tape]:
    stack = getattr(_LOCAL, "tapes", None)
    if stack is None:
        stack = []
        _LOCAL.tapes = stack
    return stack


def _active_tape() -> Optional[Tape]:
    stack = _tape_stack()
    return stack[-1] if stack else None


class stop_recording:
    """Context manager that hides any active tape from enclosed ops.

    Forward passes of frozen models run inside this so they never
    record gradients, even when called mid-training.
    """

    def __enter__(self):
        self._saved = _tape_stack()[:]
        _tape_stack().clear()
        return self

    def __exit__(self, *exc):
        stack = _tape_stack()
        stack.clear()
        stack.extend(self._saved)


def _result(inputs: tuple[Tensor, ...], out_values: np.ndarray, backward_fn) -> Tensor:
    tape = _active_tape()
    tracked = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(out_values, requires_grad=tracked, _leaf=False)
    if tracked:
        tape._record(inputs, out, backward_fn)
    return out


def backward(loss: Tensor, tape: Tape) -> None:
    """Populate d(loss)/d(param) into every parameter reached by `tape`.

    `loss` must be a scalar produced while `tape` was active. Gradients
    accumulate into `.grad` (a fresh buffer is created when `.grad` is
    None); leaf tensors recorded on the tape but not on the path to the
    loss receive an exact zero gradient. The tape is consumed.
    """
    if loss.values.ndim != 0:
        raise ContractError(f"backward requires a scalar loss, got shape {loss.shape}")
    if tape.consumed:
        raise ContractError("tape already consumed by a backward pass")

    grads: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=DTYPE)}
    leaves: dict[int, Tensor] = {}
    for rec in reversed(tape._records):
        for t in rec.inputs:
            if t.requires_grad and t.is_leaf:
                leaves[id(t)] = t
        g_out = grads.pop(id(rec.output), None)
        if g_out is None:
            continue
        in_grads = rec.backward(g_out)
        for t, g_in in zip(rec.inputs, in_grads):
            if g_in is None or not t.requires_grad:
                continue
            acc = grads.get(id(t))
            grads[id(t)] = g_in if acc is None else acc + g_in

    for key, t in leaves.items():
        g = grads.get(key)
        if g is None:
            g = np.zeros(t.shape, dtype=DTYPE)
        if not np.all(np.isfinite(g)):
            raise NonFiniteError("gradient contains NaN or Inf values")
        t.grad = g if t.grad is None else t.grad + g

    tape.consumed = True
    tape._records.clear()


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product. Supports 2-D x 2-D, batched x 2-D weight, and
    batched x batched with identical leading dimensions."""
    av, bv = a.values, b.values
    if av.ndim < 2 or bv.ndim < 2:
        raise DimensionError(f"matmul requires rank >= 2 operands, got {av.shape} and {bv.shape}")
    if av.shape[-1] != bv.shape[-2]:
        raise DimensionError(f"matmul inner dimensions disagree: {av.shape} vs {bv.shape}")
    if bv.ndim == 2:
        pass  # weight case: any-rank a times 2-D b
    elif av.ndim == bv.ndim and av.shape[:-2] == bv.shape[:-2]:
        pass  # batched case with matching leading dims
    else:
        raise DimensionError(f"matmul shapes not supported: {av.shape} vs {bv.shape}")
    out = av @ bv

    def bwd(g: np.ndarray):
        if bv.ndim == 2 and av.ndim > 2:
            ga = g @ bv.T
            k, n = bv.shape
            gb = av.reshape(-1, k).T @ g.reshape(-1, n)
        else:
            ga = g @ np.swapaxes(bv, -1, -2)
            gb = np.swapaxes(av, -1, -2) @ g
        return ga, gb

    return _result((a, b), out, bwd)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; `b` may be a trailing-shape bias of `a`."""
    av, bv = a.values, b.values
    if av.shape != bv.shape:
        if bv.ndim >= av.ndim or av.shape[av.ndim - bv.ndim:] != bv.shape:
            raise DimensionError(f"add requires equal or trailing shapes: {av.shape} vs {bv.shape}")
    out = av + bv

    def bwd(g: np.ndarray):
        gb = g
        if bv.shape != g.shape:
            gb = g.sum(axis=tuple(range(g.ndim - bv.ndim)))
        return g, gb

    return _result((a, b), out, bwd)


def scale(a: Tensor, factor: float) -> Tensor:
    """Multiply every element by a python scalar."""
    factor = float(factor)
    out = a.values * factor

    def bwd(g: np.ndarray):
        return (g * factor,)

    return _result((a,), out, bwd)


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    """Permute axes; `axes` must be a permutation of range(ndim)."""
    axes = tuple(int(x) for x in axes)
    if sorted(axes) != list(range(a.ndim)):
        raise DimensionError(f"transpose axes {axes} are not a permutation for shape {a.shape}")
    inverse = tuple(int(i) for i in np.argsort(axes))
    out = a.values.transpose(axes)

    def bwd(g: np.ndarray):
        return (g.transpose(inverse),)

    return _result((a,), out, bwd)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape, dtype=np.int64)) != a.size:
        raise DimensionError(f"cannot reshape {a.shape} (size {a.size}) to {shape}")
    out = a.values.reshape(shape)
    src_shape = a.shape

    def bwd(g: np.ndarray):
        return (g.reshape(src_shape),)

    return _result((a,), out, bwd)


def concat(parts: Sequence[Tensor], axis: int) -> Tensor:
    """Concatenate along `axis`; all other dimensions must agree."""
    if not parts:
        raise DimensionError("concat requires at least one tensor")
    ref = parts[0].shape
    for p in parts[1:]:
        if p.ndim != len(ref) or any(
            i != axis and p.shape[i] != ref[i] for i in range(p.ndim)
        ):
            raise DimensionError(f"concat shapes disagree: {ref} vs {p.shape} on axis {axis}")
    out = np.concatenate([p.values for p in parts], axis=axis)
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum(sizes)[:-1]

    def bwd(g: np.ndarray):
        return tuple(np.split(g, offsets, axis=axis))

    return _result(tuple(parts), out, bwd)


def softmax_rows(x: Tensor) -> Tensor:
    """Softmax over the last axis, max-subtracted for stability."""
    if x.ndim < 1 or x.shape[-1] < 1:
        raise DimensionError(f"softmax_rows requires a non-empty last dimension, got {x.shape}")
    shifted = x.values - x.values.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def bwd(g: np.ndarray):
        dot = (g * y).sum(axis=-1, keepdims=True)
        return ((g - dot) * y,)

    return _result((x,), y, bwd)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    n = x.shape[-1] if x.ndim else 0
    if gain.shape != (n,) or bias.shape != (n,):
        raise DimensionError(
            f"layer_norm gain/bias must have shape ({n},), got {gain.shape} and {bias.shape}"
        )
    mu = x.values.mean(axis=-1, keepdims=True)
    var = x.values.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = (x.values - mu) * inv
    out = xhat * gain.values + bias.values
    lead = tuple(range(x.ndim - 1))

    def bwd(g: np.ndarray):
        dgain = (g * xhat).sum(axis=lead)
        dbias = g.sum(axis=lead)
        dxhat = g * gain.values
        dx = inv * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return dx, dgain, dbias

    return _result((x, gain, bias), out, bwd)


def gelu(x: Tensor) -> Tensor:
    """Exact Gaussian error linear unit: 0.5 x (1 + erf(x / sqrt 2))."""
    cdf = 0.5 * (1.0 + erf(x.values * _INV_SQRT2))
    out = x.values * cdf

    def bwd(g: np.ndarray):
        pdf = np.exp(-0.5 * x.values * x.values) * _INV_SQRT_2PI
        return (g * (cdf + x.values * pdf),)

    return _result((x,), out, bwd)


def softplus(x: Tensor) -> Tensor:
    """log(1 + exp(x)) computed without overflow for large |x|."""
    v = x.values
    out = np.maximum(v, 0.0) + np.log1p(np.exp(-np.abs(v)))

    def bwd(g: np.ndarray):
        sig = np.where(v >= 0, 1.0 / (1.0 + np.exp(-np.clip(v, 0, None))),
                       np.exp(np.clip(v, None, 0)) / (1.0 + np.exp(np.clip(v, None, 0))))
        return (g * sig,)

    return _result((x,), out, bwd)


def sum_all(x: Tensor) -> Tensor:
    out = x.values.sum()
    shape = x.shape

    def bwd(g: np.ndarray):
        return (np.full(shape, float(g), dtype=DTYPE),)

    return _result((x,), out, bwd)


def mean_all(x: Tensor) -> Tensor:
    out = x.values.mean()
    shape, n = x.shape, x.size

    def bwd(g: np.ndarray):
        return (np.full(shape, float(g) / n, dtype=DTYPE),)

    return _result((x,), out, bwd)


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-softmax of the true class over the batch."""
    if logits.ndim != 2:
        raise DimensionError(f"cross_entropy expects [batch, classes] logits, got {logits.shape}")
    labels = np.asarray(labels)
    batch, classes = logits.shape
    if labels.shape != (batch,):
        raise DimensionError(f"labels shape {labels.shape} does not match batch size {batch}")
    bad = (labels < 0) | (labels >= classes)
    if bad.any():
        idx = int(np.argmax(bad))
        raise LabelError(f"label {int(labels[idx])} at index {idx} outside [0, {classes})")

    shifted = logits.values - logits.values.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    logp = shifted - lse
    loss = -logp[np.arange(batch), labels].mean()

    def bwd(g: np.ndarray):
        grad = np.exp(logp)
        grad[np.arange(batch), labels] -= 1.0
        return (grad * (float(g) / batch),)

    return _result((logits,), loss, bwd)


def per_sample_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Non-differentiable helper: one cross-entropy value per row."""
    logits = np.asarray(logits, dtype=DTYPE)
    labels = np.asarray(labels)
    batch, classes = logits.shape
    bad = (labels < 0) | (labels >= classes)
    if bad.any():
        idx = int(np.argmax(bad))
        raise LabelError(f"label {int(labels[idx])} at index {idx} outside [0, {classes})")
    shifted = logits - logits.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    logp = shifted - lse
    return -logp[np.arange(batch), labels]


def row_cosine(a: Tensor, b: Tensor) -> Tensor:
    """Cosine similarity of matching rows of two [batch, n] tensors."""
    if a.ndim != 2 or a.shape != b.shape:
        raise DimensionError(f"row_cosine expects matching [batch, n] shapes, got {a.shape} and {b.shape}")
    av, bv = a.values, b.values
    na = np.linalg.norm(av, axis=-1)
    nb = np.linalg.norm(bv, axis=-1)
    if na.min() < _NORM_FLOOR or nb.min() < _NORM_FLOOR:
        raise DegenerateVectorError("cosine similarity of a (near-)zero vector")
    s = (av * bv).sum(axis=-1) / (na * nb)

    def bwd(g: np.ndarray):
        gc = g[:, None]
        denom = (na * nb)[:, None]
        sc = s[:, None]
        ga = gc * (bv / denom - sc * av / (na * na)[:, None])
        gb = gc * (av / denom - sc * bv / (nb * nb)[:, None])
        return ga, gb

    return _result((a, b), s, bwd)


def cosine_similarity(u: Tensor, v: Tensor) -> Tensor:
    """Cosine similarity of two equal-length vectors, as a scalar tensor."""
    if u.ndim != 1 or u.shape != v.shape:
        raise DimensionError(f"cosine_similarity expects matching vectors, got {u.shape} and {v.shape}")
    uv, vv = u.values, v.values
    nu = float(np.linalg.norm(uv))
    nv = float(np.linalg.norm(vv))
    if nu < _NORM_FLOOR or nv < _NORM_FLOOR:
        raise DegenerateVectorError("cosine similarity of a (near-)zero vector")
    s = float(uv @ vv) / (nu * nv)

    def bwd(g: np.ndarray):
        g = float(g)
        gu = g * (vv / (nu * nv) - s * uv / (nu * nu))
        gv = g * (uv / (nu * nv) - s * vv / (nv * nv))
        return gu, gv

    return _result((u, v), np.asarray(s), bwd)


def repeat_batch(x: Tensor, count: int) -> Tensor:
    """Stack `count` copies of `x` along a new leading batch axis."""
    if count < 1:
        raise DimensionError(f"repeat_batch count must be >= 1, got {count}")
    out = np.broadcast_to(x.values, (count,) + x.shape)

    def bwd(g: np.ndarray):
        return (g.sum(axis=0),)

    return _result((x,), out, bwd)


def take_token(x: Tensor, index: int) -> Tensor:
    """Select one token position from a [batch, tokens, dim] tensor."""
    if x.ndim != 3:
        raise DimensionError(f"take_token expects [batch, tokens, dim], got {x.shape}")
    if not 0 <= index < x.shape[1]:
        raise DimensionError(f"token index {index} outside [0, {x.shape[1]})")
    out = x.values[:, index, :]
    shape = x.shape

    def bwd(g: np.ndarray):
        full = np.zeros(shape, dtype=DTYPE)
        full[:, index, :] = g
        return (full,)

    return _result((x,), out, bwd)


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map x @ weight + bias; the embedding/projection workhorse."""
    return add(matmul(x, weight), bias)
