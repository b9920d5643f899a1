"""Dense float64 tensors with reverse-mode automatic differentiation.

Every numeric object downstream (images, latents, weights, losses) is a
:class:`Tensor`: a contiguous row-major ``float64`` array plus an optional
gradient slot.  Differentiable operations record themselves on the tensors
they produce (parent references, a backward rule, and a monotonically
increasing sequence number).  :func:`backward` replays those records in
exact reverse order of forward creation, which is always a valid reverse
topological order of the graph.

Design rules, fixed for reproducibility:

* double precision only; forward results that contain NaN/Inf raise
  :class:`~ganlab.errors.NumericError` instead of propagating silently,
* reductions use numpy's pairwise summation, so results are bitwise
  deterministic for a given shape and axis set,
* no implicit broadcasting between tensors; binary elementwise ops demand
  equal shapes, scalars are the only exception, and :func:`broadcast_to`
  makes any other expansion explicit (its backward is a plain axis sum),
* ``|x|`` uses subgradient 0 at 0; ``relu`` likewise,
* leaf gradients accumulate additively; calling backward twice without
  :func:`zero_grad` doubles them, which is defined, documented behavior.

A whole computation (tensors plus their recorded graph) is confined to a
single thread; independent computations may run on separate threads.
"""

from __future__ import annotations

import itertools
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import (
    ContractError,
    DimensionError,
    DomainError,
    FormatError,
    NumericError,
)

_SEQ = itertools.count(1)
_GRAD_ENABLED = True


class no_grad:
    """Context manager that suspends graph recording (pure inference)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._saved = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._saved
        return False


def _check_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{what} produced non-finite values")


class Tensor:
    """n-dimensional float64 value with an optional gradient slot."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "_seq")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.ascontiguousarray(np.asarray(data, dtype=np.float64))
        _check_finite(arr, name or "tensor input")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self._seq = next(_SEQ)

    # --- introspection -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        tag = ", requires_grad=True" if self.requires_grad else ""
        nm = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}{nm})"

    # --- graph ----------------------------------------------------------
    def detach(self) -> "Tensor":
        """Leaf tensor sharing this tensor's data, cut off from the graph."""
        out = Tensor.__new__(Tensor)
        out.data = self.data
        out.grad = None
        out.requires_grad = False
        out.name = self.name
        out._parents = ()
        out._backward = None
        out._seq = next(_SEQ)
        return out

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    # --- operator sugar ---------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def _needs_grad(t: Tensor) -> bool:
    return t.requires_grad or bool(t._parents)


def from_op(
    data: np.ndarray,
    parents: Iterable[Tensor],
    backward_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]],
    name: str,
) -> Tensor:
    """Wrap an op result, recording the backward rule when grads can flow.

    This is the single entry point layers use to register custom
    differentiable operations (convolution, pooling, ...).
    """
    parents = tuple(parents)
    arr = np.ascontiguousarray(np.asarray(data, dtype=np.float64))
    _check_finite(arr, name)
    out = Tensor.__new__(Tensor)
    out.data = arr
    out.grad = None
    out.requires_grad = False
    out.name = name
    out._seq = next(_SEQ)
    if _GRAD_ENABLED and any(_needs_grad(p) for p in parents):
        out._parents = parents
        out._backward = backward_fn
    else:
        out._parents = ()
        out._backward = None
    return out


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# ----------------------------------------------------------------------
# backward pass
# ----------------------------------------------------------------------


class ComputationTape:
    """Recorded operations reachable from one output, in forward order.

    ``entries`` lists the op nodes sorted by creation sequence; replaying
    them reversed visits each node after every node that consumed it.
    """

    def __init__(self, entries: list[Tensor]):
        self.entries = entries

    @classmethod
    def trace(cls, root: Tensor) -> "ComputationTape":
        seen: set[int] = set()
        nodes: list[Tensor] = []
        stack = [root]
        while stack:
            t = stack.pop()
            if id(t) in seen:
                continue
            seen.add(id(t))
            if t._parents:
                nodes.append(t)
                stack.extend(t._parents)
        nodes.sort(key=lambda t: t._seq)
        return cls(nodes)

    def replay(self, root: Tensor, seed: np.ndarray) -> None:
        pending: dict[int, np.ndarray] = {id(root): seed}
        keep: dict[int, Tensor] = {id(root): root}
        for node in reversed(self.entries):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            grads = node._backward(g)
            for parent, pg in zip(node._parents, grads):
                if pg is None:
                    continue
                if parent._parents:
                    pid = id(parent)
                    if pid in pending:
                        pending[pid] = pending[pid] + pg
                    else:
                        pending[pid] = pg
                        keep[pid] = parent
                elif parent.requires_grad:
                    if parent.grad is None:
                        parent.grad = np.zeros_like(parent.data)
                    parent.grad += pg


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every reachable ``requires_grad`` leaf.

    ``loss`` must be a scalar (size 1).  Gradients accumulate additively
    into existing ``grad`` arrays.
    """
    if loss.size != 1:
        raise ContractError(f"backward requires a scalar loss, got shape {loss.shape}")
    seed = np.ones_like(loss.data)
    if loss.is_leaf:
        if loss.requires_grad:
            if loss.grad is None:
                loss.grad = np.zeros_like(loss.data)
            loss.grad += seed
        return
    ComputationTape.trace(loss).replay(loss, seed)


def zero_grad(tensors: Iterable[Tensor]) -> None:
    for t in tensors:
        t.grad = None


# ----------------------------------------------------------------------
# elementwise operations
# ----------------------------------------------------------------------


def _binary_shapes(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} differ (no implicit broadcasting)")


def add(a: Tensor, b) -> Tensor:
    a = as_tensor(a)
    if isinstance(b, (int, float)):
        return from_op(a.data + float(b), [a], lambda g: [g], "add_scalar")
    b = as_tensor(b)
    _binary_shapes(a, b, "add")
    return from_op(a.data + b.data, [a, b], lambda g: [g, g], "add")


def sub(a: Tensor, b) -> Tensor:
    a = as_tensor(a)
    if isinstance(b, (int, float)):
        return from_op(a.data - float(b), [a], lambda g: [g], "sub_scalar")
    b = as_tensor(b)
    _binary_shapes(a, b, "sub")
    return from_op(a.data - b.data, [a, b], lambda g: [g, -g], "sub")


def mul(a: Tensor, b) -> Tensor:
    a = as_tensor(a)
    if isinstance(b, (int, float)):
        return scale(a, float(b))
    b = as_tensor(b)
    _binary_shapes(a, b, "mul")
    ad, bd = a.data, b.data
    return from_op(ad * bd, [a, b], lambda g: [g * bd, g * ad], "mul")


def scale(a: Tensor, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)
    return from_op(a.data * c, [a], lambda g: [g * c], "scale")


def neg(a: Tensor) -> Tensor:
    a = as_tensor(a)
    return from_op(-a.data, [a], lambda g: [-g], "neg")


def abs_(a: Tensor) -> Tensor:
    a = as_tensor(a)
    sign = np.sign(a.data)  # 0 at 0: subgradient choice
    return from_op(np.abs(a.data), [a], lambda g: [g * sign], "abs")


def log(a: Tensor) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data <= 0.0):
        worst = float(a.data.min())
        raise DomainError(f"log requires strictly positive input, min value {worst}")
    ad = a.data
    return from_op(np.log(ad), [a], lambda g: [g / ad], "log")


def exp(a: Tensor) -> Tensor:
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    return from_op(out, [a], lambda g: [g * out], "exp")


def pow_scalar(a: Tensor, p: float) -> Tensor:
    """a ** p for a real exponent; non-integer p requires positive input."""
    a = as_tensor(a)
    p = float(p)
    if p != int(p) and np.any(a.data <= 0.0):
        raise DomainError(f"pow with exponent {p} requires positive input")
    if p == int(p) and p < 0 and np.any(a.data == 0.0):
        raise DomainError(f"pow with exponent {p} requires nonzero input")
    ad = a.data
    out = ad**p
    return from_op(out, [a], lambda g: [g * p * ad ** (p - 1.0)], "pow")


_ELEMENTWISE = {"add": add, "sub": sub, "mul": mul, "scale": scale, "abs": None, "neg": None, "log": None}


def elementwise(kind: str, a: Tensor, b=None) -> Tensor:
    """Dispatch by name; binary kinds accept a tensor of equal shape or a scalar."""
    if kind == "add":
        return add(a, b)
    if kind == "sub":
        return sub(a, b)
    if kind == "mul":
        return mul(a, b)
    if kind == "scale":
        if not isinstance(b, (int, float)):
            raise ContractError("scale expects a python scalar")
        return scale(a, b)
    if kind == "abs":
        return abs_(a)
    if kind == "neg":
        return neg(a)
    if kind == "log":
        return log(a)
    raise ContractError(f"unknown elementwise kind {kind!r}")


# ----------------------------------------------------------------------
# activation primitives
# ----------------------------------------------------------------------


def relu(a: Tensor) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0.0
    return from_op(np.where(mask, a.data, 0.0), [a], lambda g: [g * mask], "relu")


def leaky_relu(a: Tensor, alpha: float = 0.2) -> Tensor:
    a = as_tensor(a)
    slope = np.where(a.data > 0.0, 1.0, float(alpha))
    return from_op(a.data * slope, [a], lambda g: [g * slope], "leaky_relu")


def tanh(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return from_op(out, [a], lambda g: [g * (1.0 - out * out)], "tanh")


def sigmoid(a: Tensor) -> Tensor:
    a = as_tensor(a)
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return from_op(out, [a], lambda g: [g * out * (1.0 - out)], "sigmoid")


# ----------------------------------------------------------------------
# structural operations
# ----------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; accepts [M,K]x[K,N] or batched [B,M,K]x[B,K,N]."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim == 2 and b.ndim == 2:
        if a.shape[1] != b.shape[0]:
            raise DimensionError(f"matmul: inner dimensions disagree for shapes {a.shape} and {b.shape}")
        ad, bd = a.data, b.data
        return from_op(ad @ bd, [a, b], lambda g: [g @ bd.T, ad.T @ g], "matmul")
    if a.ndim == 3 and b.ndim == 3:
        if a.shape[0] != b.shape[0] or a.shape[2] != b.shape[1]:
            raise DimensionError(f"matmul: batched shapes {a.shape} and {b.shape} are incompatible")
        ad, bd = a.data, b.data
        return from_op(
            np.matmul(ad, bd),
            [a, b],
            lambda g: [np.matmul(g, bd.transpose(0, 2, 1)), np.matmul(ad.transpose(0, 2, 1), g)],
            "matmul",
        )
    raise DimensionError(f"matmul: unsupported ranks for shapes {a.shape} and {b.shape}")


def _normalize_axes(axes, ndim: int, shape) -> tuple[int, ...]:
    if axes is None:
        return tuple(range(ndim))
    if isinstance(axes, int):
        axes = (axes,)
    axes = tuple(sorted(set(int(ax) for ax in axes)))
    for ax in axes:
        if ax < 0 or ax >= ndim:
            raise DimensionError(f"axis {ax} invalid for shape {tuple(shape)}")
    return axes


def reduce_sum(a: Tensor, axes=None, keepdims: bool = False) -> Tensor:
    """Sum along the given axes (all axes when None); numpy pairwise order."""
    a = as_tensor(a)
    axs = _normalize_axes(axes, a.ndim, a.shape)
    in_shape = a.shape
    out = a.data.sum(axis=axs if axs else None, keepdims=keepdims)

    kept_shape = tuple(1 if i in axs else s for i, s in enumerate(in_shape))

    def _bw(g: np.ndarray):
        return [np.broadcast_to(g.reshape(kept_shape), in_shape).copy()]

    return from_op(out, [a], _bw, "reduce_sum")


def reshape(a: Tensor, shape) -> Tensor:
    a = as_tensor(a)
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape, dtype=np.int64)) != a.size and -1 not in shape:
        raise DimensionError(f"cannot reshape {a.shape} to {shape}")
    in_shape = a.shape
    out = a.data.reshape(shape)
    return from_op(out, [a], lambda g: [g.reshape(in_shape)], "reshape")


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    if sorted(axes) != list(range(a.ndim)):
        raise DimensionError(f"transpose axes {axes} invalid for shape {a.shape}")
    inv = tuple(int(i) for i in np.argsort(axes))
    return from_op(
        np.ascontiguousarray(a.data.transpose(axes)), [a], lambda g: [g.transpose(inv)], "transpose"
    )


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ContractError("concat of zero tensors")
    nd = ts[0].ndim
    if axis < 0 or axis >= nd:
        raise DimensionError(f"concat axis {axis} invalid for shape {ts[0].shape}")
    for t in ts[1:]:
        if t.ndim != nd or any(i != axis and t.shape[i] != ts[0].shape[i] for i in range(nd)):
            raise DimensionError(f"concat: shapes {ts[0].shape} and {t.shape} differ off axis {axis}")
    sizes = [t.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]

    def _bw(g: np.ndarray):
        return [np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis)]

    return from_op(np.concatenate([t.data for t in ts], axis=axis), ts, _bw, "concat")


def broadcast_to(a: Tensor, shape) -> Tensor:
    """Explicit broadcast; backward sums the gradient over expanded axes."""
    a = as_tensor(a)
    shape = tuple(int(s) for s in shape)
    in_shape = a.shape
    extra = len(shape) - len(in_shape)
    if extra < 0:
        raise DimensionError(f"cannot broadcast {in_shape} to {shape}")
    padded = (1,) * extra + in_shape
    for s_in, s_out in zip(padded, shape):
        if s_in != s_out and s_in != 1:
            raise DimensionError(f"cannot broadcast {in_shape} to {shape}")
    expanded = tuple(i for i, (s_in, s_out) in enumerate(zip(padded, shape)) if s_in == 1 and s_out != 1)

    def _bw(g: np.ndarray):
        red = g.sum(axis=expanded, keepdims=True) if expanded else g
        return [red.reshape(in_shape)]

    return from_op(np.broadcast_to(a.data.reshape(padded), shape).copy(), [a], _bw, "broadcast_to")


# ----------------------------------------------------------------------
# Adam optimizer
# ----------------------------------------------------------------------


@dataclass
class AdamState:
    """Per-parameter moment estimates plus the shared step counter."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: dict[str, Tensor],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
) -> None:
    """One bias-corrected Adam update, in place, deterministic by name order."""
    if lr <= 0.0:
        raise ContractError(f"learning rate must be positive, got {lr}")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for name in sorted(params):
        p = params[name]
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        g = np.asarray(g, dtype=np.float64)
        if g.shape != p.data.shape:
            raise DimensionError(f"gradient shape {g.shape} does not match parameter {name!r} {p.data.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name!r}; update rejected")
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            state.m[name] = m
        v = state.v.get(name)
        if v is None:
            v = np.zeros_like(p.data)
            state.v[name] = v
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        m_hat = m / c1
        v_hat = v / c2
        p.data -= lr * m_hat / (np.sqrt(v_hat) + state.eps)


# ----------------------------------------------------------------------
# IAGT binary tensor format
# ----------------------------------------------------------------------

_IAGT_MAGIC = b"IAGT"


def save_iagt(path, arr: np.ndarray) -> None:
    """Write `IAGT` + u32 LE rank + rank u64 LE dims + float64 LE payload."""
    arr = np.ascontiguousarray(np.asarray(arr, dtype=np.float64))
    with open(path, "wb") as fh:
        fh.write(_IAGT_MAGIC)
        fh.write(struct.pack("<I", arr.ndim))
        for d in arr.shape:
            fh.write(struct.pack("<Q", d))
        fh.write(arr.astype("<f8", copy=False).tobytes(order="C"))


def load_iagt(path) -> np.ndarray:
    path = Path(path)
    blob = path.read_bytes()
    if blob[:4] != _IAGT_MAGIC:
        raise FormatError(f"{path}: bad magic at byte 0, expected IAGT")
    if len(blob) < 8:
        raise FormatError(f"{path}: truncated header at byte {len(blob)}")
    (rank,) = struct.unpack_from("<I", blob, 4)
    off = 8
    dims = []
    for _ in range(rank):
        if off + 8 > len(blob):
            raise FormatError(f"{path}: truncated dims at byte {off}")
        (d,) = struct.unpack_from("<Q", blob, off)
        dims.append(int(d))
        off += 8
    count = int(np.prod(dims, dtype=np.int64)) if dims else 1
    need = count * 8
    if len(blob) - off != need:
        raise FormatError(f"{path}: payload length mismatch at byte {off} (expected {need} bytes)")
    flat = np.frombuffer(blob, dtype="<f8", count=count, offset=off)
    return flat.astype(np.float64).reshape(dims)
