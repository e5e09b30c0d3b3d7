"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

Just enough machinery for small MLPs, reversible-map compositions and scalar
training losses: a Tensor type that records primitive operations into a
per-evaluation graph, a backward pass, a named parameter collection with a
binary checkpoint format, and an Adam optimizer.
"""

from __future__ import annotations

import struct
from contextlib import contextmanager

import numpy as np

__all__ = [
    "Tensor",
    "ParamSet",
    "Adam",
    "no_grad",
    "tensor",
    "add",
    "sub",
    "mul",
    "neg",
    "matmul",
    "tanh",
    "sigmoid",
    "logsigmoid",
    "exp",
    "log",
    "tsum",
    "tmean",
    "concat",
    "narrow",
    "backward",
    "save_checkpoint",
    "load_checkpoint",
]

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block (pure numpy fast path)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """Dense float64 array, optionally participating in the gradient graph.

    Tensors are immutable values: operations return fresh Tensors and never
    write into `data`. The graph is per-evaluation (parent links on the
    result), so independent evaluations share no mutable state.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad=False, _parents=(), _vjp=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = _parents
        self._vjp = _vjp

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor({self.data!r}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))


def tensor(data, requires_grad=False):
    return Tensor(data, requires_grad=requires_grad)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, vjp, op_name):
    if np.isnan(data).any():
        raise FloatingPointError(f"NaN produced by primitive '{op_name}'")
    if _grad_enabled and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, _parents=parents, _vjp=vjp)
    return Tensor(data)


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` (reverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# primitives


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _make(out, (a, b), vjp, "add")


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data - b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _make(out, (a, b), vjp, "sub")


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data * b.data

    def vjp(g):
        return (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        )

    return _make(out, (a, b), vjp, "mul")


def neg(a):
    a = _as_tensor(a)
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim == 0 or b.data.ndim == 0:
        raise ValueError("matmul requires at least 1-d operands")
    try:
        out = a.data @ b.data
    except ValueError as e:
        raise ValueError(
            f"matmul shape mismatch: {a.data.shape} @ {b.data.shape}"
        ) from e

    def vjp(g):
        ad, bd = a.data, b.data
        if ad.ndim == 1 and bd.ndim == 1:
            ga, gb = g * bd, g * ad
        elif ad.ndim == 1:
            ga, gb = g @ bd.T, np.outer(ad, g)
        elif bd.ndim == 1:
            ga, gb = np.outer(g, bd), ad.T @ g
        else:
            ga, gb = g @ bd.T, ad.T @ g
        return ga, gb

    return _make(out, (a, b), vjp, "matmul")


def tanh(a):
    a = _as_tensor(a)
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def sigmoid(a):
    a = _as_tensor(a)
    out = _sigmoid_np(a.data)
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def logsigmoid(a):
    """log(sigmoid(a)), computed without overflow for large |a|."""
    a = _as_tensor(a)
    out = np.minimum(a.data, 0.0) - np.log1p(np.exp(-np.abs(a.data)))
    s = _sigmoid_np(-a.data)
    return _make(out, (a,), lambda g: (g * s,), "logsigmoid")


def exp(a):
    a = _as_tensor(a)
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,), "exp")


def log(a):
    a = _as_tensor(a)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.log(a.data)
    return _make(out, (a,), lambda g: (g / a.data,), "log")


def tsum(a, axis=None):
    a = _as_tensor(a)
    out = a.data.sum(axis=axis)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.data.shape).copy(),)

    return _make(out, (a,), vjp, "sum")


def tmean(a, axis=None):
    a = _as_tensor(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(tsum(a, axis=axis), 1.0 / n)


def concat(parts, axis=-1):
    parts = [_as_tensor(p) for p in parts]
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(out, tuple(parts), vjp, "concat")


def narrow(a, start, length, axis=-1):
    """Contiguous slice [start, start+length) along `axis`."""
    a = _as_tensor(a)
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    out = a.data[idx]

    def vjp(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        return (full,)

    return _make(out, (a,), vjp, "slice")


# ---------------------------------------------------------------------------
# backward pass


def backward(root):
    """Accumulate gradients of a scalar `root` into .grad of graph leaves."""
    if root.data.ndim != 0 and root.data.size != 1:
        raise ValueError(f"backward root must be scalar, got shape {root.data.shape}")
    if not root.requires_grad:
        raise ValueError("backward root is detached from the graph")

    # topological order via iterative DFS (graphs can be deep for long chains)
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))

    grads = {id(root): np.ones_like(root.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None or node._vjp is None:
            if g is not None and node._vjp is None:
                node.grad = g if node.grad is None else node.grad + g
            continue
        parent_grads = node._vjp(g)
        for p, pg in zip(node._parents, parent_grads):
            if not p.requires_grad:
                continue
            if id(p) in grads:
                grads[id(p)] = grads[id(p)] + pg
            else:
                grads[id(p)] = pg.copy() if isinstance(pg, np.ndarray) else np.asarray(pg)


# ---------------------------------------------------------------------------
# parameters


class ParamSet:
    """Named collection of leaf Tensors with deterministic iteration order."""

    def __init__(self):
        self._params = {}

    def add(self, name, value):
        if name in self._params:
            raise ValueError(f"duplicate parameter name '{name}'")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __len__(self):
        return len(self._params)

    def names(self):
        return list(self._params.keys())

    def items(self):
        return self._params.items()

    def tensors(self):
        return list(self._params.values())

    def zero_grad(self):
        for t in self._params.values():
            t.grad = None

    def grads(self):
        """Gradient map after a backward pass; absent gradients become zeros."""
        return {
            k: (t.grad if t.grad is not None else np.zeros_like(t.data))
            for k, t in self._params.items()
        }

    def checksum(self):
        h = 0.0
        for t in self._params.values():
            h += float(np.sum(t.data * t.data))
        return h

    def copy_values(self):
        return {k: t.data.copy() for k, t in self._params.items()}

    def load_values(self, values):
        for k, t in self._params.items():
            if k not in values:
                raise KeyError(f"checkpoint missing parameter '{k}'")
            v = np.asarray(values[k], dtype=np.float64)
            if v.shape != t.data.shape:
                raise ValueError(
                    f"shape mismatch for '{k}': {v.shape} vs {t.data.shape}"
                )
            t.data = v.copy()


_MAGIC = b"INVMH1\n"


def save_checkpoint(params, path):
    """Write a ParamSet: text header of (name, shape) pairs, then raw
    little-endian float64 values in row-major order."""
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(f"{len(params)}\n".encode())
        for name, t in params.items():
            dims = ",".join(str(d) for d in t.data.shape)
            f.write(f"{name} {dims}\n".encode())
        for _, t in params.items():
            f.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Read a checkpoint file into a {name: ndarray} map."""
    with open(path, "rb") as f:
        if f.read(len(_MAGIC)) != _MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        count = int(f.readline().decode().strip())
        entries = []
        for _ in range(count):
            line = f.readline().decode().rstrip("\n")
            name, _, dims = line.partition(" ")
            shape = tuple(int(d) for d in dims.split(",") if d)
            entries.append((name, shape))
        values = {}
        for name, shape in entries:
            n = int(np.prod(shape)) if shape else 1
            buf = f.read(8 * n)
            if len(buf) != 8 * n:
                raise ValueError(f"{path}: truncated data for '{name}'")
            values[name] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    return values


class Adam:
    """Bias-corrected Adam with the usual defaults."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(t.data) for k, t in params.items()}
        self.v = {k: np.zeros_like(t.data) for k, t in params.items()}

    def step(self, grads):
        for name in self.params.names():
            if name not in grads:
                raise KeyError(f"missing gradient for parameter '{name}'")
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for name, p in self.params.items():
            g = grads[name]
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            m_hat = self.m[name] / b1t
            v_hat = self.v[name] / b2t
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _sigmoid_np(x):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
