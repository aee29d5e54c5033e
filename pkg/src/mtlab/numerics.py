"""Dense tensors with reverse-mode gradient accumulation on a recording tape.

Arrays are numpy-backed; the tape and every backward rule live here. Training
runs in single precision, float64 is available for gradient checks. All
reductions use numpy's fixed evaluation order, so the single-threaded
reference path is bit-reproducible.
"""

from __future__ import annotations

import os
import threading
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import EmptyBatch, NoTape, NotScalar, ShapeMismatch

_state = threading.local()

_num_threads = int(os.environ.get("MTLAB_THREADS", "1"))
_pool = None


def set_num_threads(n: int) -> None:
    """Select the reference (1) or row-parallel (>1) matmul path."""
    global _num_threads, _pool
    if n < 1:
        raise ValueError("thread count must be >= 1")
    _num_threads = n
    if _pool is not None:
        _pool.shutdown(wait=False)
        _pool = None


def get_num_threads() -> int:
    return _num_threads


def _tape_stack() -> list:
    if not hasattr(_state, "tapes"):
        _state.tapes = []
    return _state.tapes


def _active_tape():
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tape:
    """Ordered record of primitive ops; record order is the topological order."""

    def __init__(self):
        self.ops: list[tuple[Tensor, tuple[Tensor, ...], object]] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc):
        _tape_stack().pop()
        return False


class Tensor:
    """A dense row-major array, optionally tracked for gradients."""

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.tape: Tape | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def zero_grad(self) -> None:
        self.grad = None

    def _tracked(self) -> bool:
        return self.requires_grad or self.tape is not None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def parameter(data, dtype=np.float32) -> Tensor:
    return Tensor(data, requires_grad=True, dtype=dtype)


def _record(out: Tensor, inputs: tuple[Tensor, ...], backward_fn) -> Tensor:
    tape = _active_tape()
    if tape is not None and any(t._tracked() for t in inputs):
        tape.ops.append((out, inputs, backward_fn))
        out.tape = tape
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ShapeMismatch(msg)


def _mm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """matmul kernel; splits rows over a thread pool when enabled."""
    global _pool
    if _num_threads > 1 and a.ndim == 2 and a.shape[0] >= 2 * _num_threads:
        if _pool is None:
            _pool = ThreadPoolExecutor(max_workers=_num_threads)
        chunks = np.array_split(np.arange(a.shape[0]), _num_threads)
        parts = list(_pool.map(lambda idx: a[idx] @ b, chunks))
        return np.concatenate(parts, axis=0)
    return np.matmul(a, b)


# ---------------------------------------------------------------- primitives


def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = Tensor(a.data + b.data)
    except ValueError:
        raise ShapeMismatch(f"add: {a.shape} vs {b.shape}") from None

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _record(out, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = Tensor(a.data * b.data)
    except ValueError:
        raise ShapeMismatch(f"mul: {a.shape} vs {b.shape}") from None

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _record(out, (a, b), backward)


def scale(a: Tensor, c: float) -> Tensor:
    out = Tensor(a.data * c)

    def backward(g):
        return (g * c,)

    return _record(out, (a,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    _require(a.data.ndim >= 2 and b.data.ndim >= 2, "matmul needs >= 2-d operands")
    _require(
        a.data.ndim == b.data.ndim and a.shape[:-2] == b.shape[:-2],
        f"matmul batch dims differ: {a.shape} vs {b.shape}",
    )
    _require(a.shape[-1] == b.shape[-2], f"matmul inner dims differ: {a.shape} vs {b.shape}")
    out = Tensor(_mm(a.data, b.data))

    def backward(g):
        return _mm(g, np.swapaxes(b.data, -1, -2)), _mm(np.swapaxes(a.data, -1, -2), g)

    return _record(out, (a, b), backward)


def relu(a: Tensor) -> Tensor:
    out = Tensor(np.maximum(a.data, 0))

    def backward(g):
        return (g * (a.data > 0),)

    return _record(out, (a,), backward)


def softmax(a: Tensor) -> Tensor:
    """Row softmax over the last axis."""
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(y)

    def backward(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _record(out, (a,), backward)


def layer_norm(a: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each row of the last axis to zero mean, unit variance (pre-affine)."""
    mu = a.data.mean(axis=-1, keepdims=True)
    var = a.data.var(axis=-1, keepdims=True)
    invstd = 1.0 / np.sqrt(var + eps)
    y = (a.data - mu) * invstd
    out = Tensor(y)

    def backward(g):
        gm = g.mean(axis=-1, keepdims=True)
        gym = (g * y).mean(axis=-1, keepdims=True)
        return (invstd * (g - gm - y * gym),)

    return _record(out, (a,), backward)


def embedding_lookup(table: Tensor, ids: np.ndarray) -> Tensor:
    _require(table.data.ndim == 2, "embedding table must be 2-d")
    ids = np.asarray(ids)
    out = Tensor(table.data[ids])

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (gt,)

    return _record(out, (table,), backward)


def transpose(a: Tensor, axes: tuple[int, ...]) -> Tensor:
    out = Tensor(np.transpose(a.data, axes))
    inverse = tuple(np.argsort(axes))

    def backward(g):
        return (np.transpose(g, inverse),)

    return _record(out, (a,), backward)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = Tensor(a.data.reshape(shape))

    def backward(g):
        return (g.reshape(a.shape),)

    return _record(out, (a,), backward)


def dropout(a: Tensor, p: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; identity when p == 0."""
    if p == 0.0:
        return a
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    mask = (rng.random(a.shape) >= p).astype(a.dtype) / (1.0 - p)
    out = Tensor(a.data * mask)

    def backward(g):
        return (g * mask,)

    return _record(out, (a,), backward)


def total(a: Tensor) -> Tensor:
    """Sum of all elements, as a scalar tensor."""
    out = Tensor(np.asarray(a.data.sum(), dtype=a.dtype))

    def backward(g):
        return (np.full(a.shape, g, dtype=a.dtype),)

    return _record(out, (a,), backward)


def cross_entropy(
    logits: Tensor,
    targets: np.ndarray,
    ignore_id: int | None = None,
    label_smoothing: float = 0.0,
) -> Tensor:
    """Mean next-token cross-entropy over positions whose target != ignore_id."""
    _require(logits.data.ndim == 2, "cross_entropy expects (positions, vocab) logits")
    targets = np.asarray(targets)
    _require(
        targets.shape == (logits.shape[0],),
        f"cross_entropy targets {targets.shape} vs logits {logits.shape}",
    )
    valid = np.ones(targets.shape, dtype=bool) if ignore_id is None else targets != ignore_id
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise EmptyBatch("all target positions are ignored")

    x = logits.data
    v = x.shape[1]
    m = x.max(axis=1, keepdims=True)
    log_z = (m + np.log(np.exp(x - m).sum(axis=1, keepdims=True))).squeeze(1)
    safe_targets = np.where(valid, targets, 0)
    picked = x[np.arange(x.shape[0]), safe_targets]
    ls = label_smoothing
    per_pos = log_z - (1.0 - ls) * picked - (ls / v) * x.sum(axis=1)
    loss = per_pos[valid].sum() / n_valid
    out = Tensor(np.asarray(loss, dtype=x.dtype))

    def backward(g):
        p = np.exp(x - log_z[:, None])
        q = np.zeros_like(x)
        q[np.arange(x.shape[0]), safe_targets] = 1.0 - ls
        q += ls / v
        gx = (p - q) * (g / n_valid)
        gx[~valid] = 0.0
        return (gx,)

    return _record(out, (logits,), backward)


# ------------------------------------------------------------------ backward


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(p) into .grad of every requires_grad tensor on the tape."""
    if loss.data.size != 1:
        raise NotScalar(f"backward needs a scalar loss, got shape {loss.shape}")
    tape = loss.tape
    if tape is None:
        raise NoTape("loss was not produced under an active tape")

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: dict[int, Tensor] = {}
    for out, inputs, backward_fn in reversed(tape.ops):
        g = grads.pop(id(out), None)
        if g is None:
            continue
        for t, ig in zip(inputs, backward_fn(g)):
            if ig is None or not t._tracked():
                continue
            prev = grads.get(id(t))
            grads[id(t)] = ig if prev is None else prev + ig
            if t.requires_grad:
                leaves[id(t)] = t
    for key, t in leaves.items():
        g = grads[key].reshape(t.shape)
        t.grad = g.copy() if t.grad is None else t.grad + g
