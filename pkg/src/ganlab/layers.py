"""Neural-network building blocks with forward and backward rules.

Convolutions use the cross-correlation convention and are implemented with
an im2col lowering; the patch matrices are recomputed during the backward
pass instead of being cached, trading ~20% extra backward time for a much
smaller peak memory footprint.  ``conv2d_transpose`` is the exact adjoint
of the matching ``conv2d`` (same weights), which the inner-product identity
tests pin to 1e-10.

Batch normalization, softmax, and self-attention are composed from the
autodiff primitives in :mod:`ganlab.tensor`, so their gradients come from
the recorded graph rather than hand-derived formulas.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, ContractError, DimensionError
from .tensor import Tensor, from_op

_KERNELS = (1, 3, 5)
_STRIDES = (1, 2)


@dataclass
class ConvSpec:
    """Geometry of one (transpose) convolution."""

    in_channels: int
    out_channels: int
    kernel: int
    stride: int = 1
    padding: int = 0
    transpose: bool = False

    def __post_init__(self):
        if self.kernel not in _KERNELS:
            raise ConfigError(f"kernel {self.kernel} unsupported, choose from {_KERNELS}")
        if self.stride not in _STRIDES:
            raise ConfigError(f"stride {self.stride} unsupported, choose from {_STRIDES}")
        if self.padding < 0:
            raise ConfigError("padding must be >= 0")
        if self.transpose and self.padding != (self.kernel - 1) // 2:
            raise ConfigError(
                f"transpose conv needs padding {(self.kernel - 1) // 2} for kernel {self.kernel} "
                "so that the output is exactly stride * input"
            )

    def out_size(self, h: int, w: int) -> tuple[int, int]:
        if self.transpose:
            return self.stride * h, self.stride * w
        return (
            (h + 2 * self.padding - self.kernel) // self.stride + 1,
            (w + 2 * self.padding - self.kernel) // self.stride + 1,
        )


def _extract_patches(xp: np.ndarray, k: int, s: int, ho: int, wo: int) -> np.ndarray:
    """[N,C,Hp,Wp] -> [N, C*k*k, ho*wo] patch matrix (copies, k^2 slices)."""
    n, c = xp.shape[:2]
    cols = np.empty((n, c, k, k, ho, wo), dtype=np.float64)
    for i in range(k):
        for j in range(k):
            cols[:, :, i, j] = xp[:, :, i : i + s * ho : s, j : j + s * wo : s]
    return cols.reshape(n, c * k * k, ho * wo)


def _scatter_patches(cols: np.ndarray, n: int, c: int, hp: int, wp: int, k: int, s: int, ho: int, wo: int) -> np.ndarray:
    """Adjoint of _extract_patches: accumulate columns back into an image."""
    out = np.zeros((n, c, hp, wp), dtype=np.float64)
    v = cols.reshape(n, c, k, k, ho, wo)
    for i in range(k):
        for j in range(k):
            out[:, :, i : i + s * ho : s, j : j + s * wo : s] += v[:, :, i, j]
    return out


def _check_image(x: Tensor, spec: ConvSpec, op: str) -> tuple[int, int, int, int]:
    if x.ndim != 4:
        raise DimensionError(f"{op} expects [N,C,H,W], got shape {x.shape}")
    n, c, h, w = x.shape
    if c != spec.in_channels:
        raise DimensionError(f"{op}: input has {c} channels, spec expects {spec.in_channels} (shape {x.shape})")
    return n, c, h, w


def conv2d(x: Tensor, spec: ConvSpec, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Strided cross-correlation; weight is [out_ch, in_ch, k, k]."""
    n, c, h, w = _check_image(x, spec, "conv2d")
    k, s, p = spec.kernel, spec.stride, spec.padding
    if h + 2 * p < k or w + 2 * p < k:
        raise ContractError(f"conv2d: spatial size {h}x{w} smaller than kernel {k} after padding {p}")
    want = (spec.out_channels, spec.in_channels, k, k)
    if weight.shape != want:
        raise DimensionError(f"conv2d: weight shape {weight.shape} does not match {want}")
    ho, wo = spec.out_size(h, w)
    wmat = weight.data.reshape(spec.out_channels, c * k * k)

    def pad(arr):
        if p == 0:
            return arr
        return np.pad(arr, ((0, 0), (0, 0), (p, p), (p, p)))

    if k == 1 and s == 1 and p == 0:
        y = np.matmul(wmat, x.data.reshape(n, c, h * w))
    else:
        cols = _extract_patches(pad(x.data), k, s, ho, wo)
        y = np.matmul(wmat, cols)
    y = y.reshape(n, spec.out_channels, ho, wo)
    if bias is not None:
        y = y + bias.data.reshape(1, spec.out_channels, 1, 1)

    parents = [x, weight] + ([bias] if bias is not None else [])
    xd, wd = x.data, weight.data

    def _bw(g: np.ndarray):
        gmat = g.reshape(n, spec.out_channels, ho * wo)
        if k == 1 and s == 1 and p == 0:
            cols_b = xd.reshape(n, c, h * w)
        else:
            cols_b = _extract_patches(pad(xd), k, s, ho, wo)
        gw = None
        if T._needs_grad(weight):
            gw = np.matmul(gmat, cols_b.transpose(0, 2, 1)).sum(axis=0).reshape(wd.shape)
        gx = None
        if T._needs_grad(x):
            dcols = np.matmul(wmat.T, gmat)
            if k == 1 and s == 1 and p == 0:
                gx = dcols.reshape(n, c, h, w)
            else:
                gxp = _scatter_patches(dcols, n, c, h + 2 * p, w + 2 * p, k, s, ho, wo)
                gx = gxp[:, :, p : p + h, p : p + w] if p else gxp
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)) if T._needs_grad(bias) else None)
        return grads

    return from_op(y, parents, _bw, "conv2d")


def conv2d_transpose(x: Tensor, spec: ConvSpec, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Adjoint of the matching conv2d; weight is [in_ch, out_ch, k, k].

    Output spatial size is exactly ``stride * input`` (padding fixed to
    (k-1)//2 by ConvSpec).
    """
    n, c, h, w = _check_image(x, spec, "conv2d_transpose")
    k, s, p = spec.kernel, spec.stride, spec.padding
    want = (spec.in_channels, spec.out_channels, k, k)
    if weight.shape != want:
        raise DimensionError(f"conv2d_transpose: weight shape {weight.shape} does not match {want}")
    ho, wo = spec.out_size(h, w)
    co = spec.out_channels
    wmat = weight.data.reshape(c, co * k * k)

    xmat = x.data.reshape(n, c, h * w)
    cols = np.matmul(wmat.T, xmat)
    if k == 1 and s == 1:
        y = cols.reshape(n, co, ho, wo)
    else:
        yp = _scatter_patches(cols, n, co, ho + 2 * p, wo + 2 * p, k, s, h, w)
        y = yp[:, :, p : p + ho, p : p + wo] if p else yp
    if bias is not None:
        y = y + bias.data.reshape(1, co, 1, 1)

    parents = [x, weight] + ([bias] if bias is not None else [])
    xd, wd = x.data, weight.data

    def _bw(g: np.ndarray):
        if p == 0 and k == 1 and s == 1:
            gcols = g.reshape(n, co, ho * wo)
        else:
            gp = np.pad(g, ((0, 0), (0, 0), (p, p), (p, p))) if p else g
            gcols = _extract_patches(gp, k, s, h, w)
        gx = None
        if T._needs_grad(x):
            gx = np.matmul(wmat, gcols).reshape(n, c, h, w)
        gw = None
        if T._needs_grad(weight):
            gw = np.matmul(xd.reshape(n, c, h * w), gcols.transpose(0, 2, 1)).sum(axis=0).reshape(wd.shape)
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)) if T._needs_grad(bias) else None)
        return grads

    return from_op(y, parents, _bw, "conv2d_transpose")


def dense(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """x @ W + b for x [N,F], W [F,O], b [O]."""
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise DimensionError(f"dense: shapes {x.shape} and {weight.shape} are incompatible")
    if bias.shape != (weight.shape[1],):
        raise DimensionError(f"dense: bias shape {bias.shape} does not match output {weight.shape[1]}")
    y = T.matmul(x, weight)
    b = T.broadcast_to(T.reshape(bias, (1, weight.shape[1])), y.shape)
    return T.add(y, b)


def maxpool2d(x: Tensor, kernel: int = 3, stride: int = 1, padding: int = 1) -> Tensor:
    """Max pooling; gradient routes to the first maximum in each window."""
    if x.ndim != 4:
        raise DimensionError(f"maxpool2d expects [N,C,H,W], got {x.shape}")
    n, c, h, w = x.shape
    k, s, p = kernel, stride, padding
    ho = (h + 2 * p - k) // s + 1
    wo = (w + 2 * p - k) // s + 1
    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p)), constant_values=-np.inf) if p else x.data
    win = np.empty((n, c, ho, wo, k * k), dtype=np.float64)
    for i in range(k):
        for j in range(k):
            win[:, :, :, :, i * k + j] = xp[:, :, i : i + s * ho : s, j : j + s * wo : s]
    out = win.max(axis=-1)
    idx = win.argmax(axis=-1)

    def _bw(g: np.ndarray):
        gxp = np.zeros((n, c, h + 2 * p, w + 2 * p), dtype=np.float64)
        for t in range(k * k):
            i, j = divmod(t, k)
            gxp[:, :, i : i + s * ho : s, j : j + s * wo : s] += g * (idx == t)
        return [gxp[:, :, p : p + h, p : p + w] if p else gxp]

    return from_op(out, [x], _bw, "maxpool2d")


# ----------------------------------------------------------------------
# batch normalization
# ----------------------------------------------------------------------


@dataclass
class RunningStats:
    """Per-channel mean/variance tracked during training, used at inference."""

    mean: np.ndarray
    var: np.ndarray

    @classmethod
    def init(cls, channels: int) -> "RunningStats":
        return cls(np.zeros(channels), np.ones(channels))


def batchnorm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    mode: str,
    running: RunningStats,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel normalization over (N,) or (N,H,W); biased variance.

    ``train`` normalizes with batch statistics and folds them into
    ``running`` in place; ``infer`` uses the stored running statistics, so
    the output for one sample does not depend on its batch neighbours.
    """
    if mode not in ("train", "infer"):
        raise ConfigError(f"batchnorm mode {mode!r} must be train or infer")
    if x.ndim == 2:
        axes, cshape = (0,), (1, x.shape[1])
    elif x.ndim == 4:
        axes, cshape = (0, 2, 3), (1, x.shape[1], 1, 1)
    else:
        raise DimensionError(f"batchnorm expects 2D or 4D input, got {x.shape}")
    channels = x.shape[1]
    if gamma.shape != (channels,) or beta.shape != (channels,):
        raise DimensionError(f"batchnorm: gamma/beta shapes {gamma.shape}/{beta.shape} need ({channels},)")

    if mode == "train":
        if x.shape[0] < 2:
            raise ContractError("batchnorm train mode needs batch size >= 2")
        m = 1
        for ax in axes:
            m *= x.shape[ax]
        mu = T.scale(T.reduce_sum(x, axes=axes, keepdims=True), 1.0 / m)
        xc = T.sub(x, T.broadcast_to(mu, x.shape))
        var = T.scale(T.reduce_sum(T.mul(xc, xc), axes=axes, keepdims=True), 1.0 / m)
        inv = T.pow_scalar(T.add(var, eps), -0.5)
        xhat = T.mul(xc, T.broadcast_to(inv, x.shape))
        running.mean = (1.0 - momentum) * running.mean + momentum * mu.data.reshape(channels)
        running.var = (1.0 - momentum) * running.var + momentum * var.data.reshape(channels)
    else:
        mu_c = Tensor(running.mean.reshape(cshape))
        inv_c = Tensor(1.0 / np.sqrt(running.var.reshape(cshape) + eps))
        xhat = T.mul(T.sub(x, T.broadcast_to(mu_c, x.shape)), T.broadcast_to(inv_c, x.shape))

    g = T.broadcast_to(T.reshape(gamma, cshape), x.shape)
    b = T.broadcast_to(T.reshape(beta, cshape), x.shape)
    return T.add(T.mul(xhat, g), b)


# ----------------------------------------------------------------------
# activations
# ----------------------------------------------------------------------


def softmax(x: Tensor, axis: int) -> Tensor:
    """Max-subtracted softmax along ``axis``; rows sum to 1 within 1e-12."""
    if axis < 0 or axis >= x.ndim:
        raise DimensionError(f"softmax axis {axis} invalid for shape {x.shape}")
    shift = Tensor(x.data.max(axis=axis, keepdims=True))  # constant: does not affect the gradient
    e = T.exp(T.sub(x, T.broadcast_to(shift, x.shape)))
    tot = T.reduce_sum(e, axes={axis}, keepdims=True)
    return T.mul(e, T.broadcast_to(T.pow_scalar(tot, -1.0), x.shape))


def activation(kind: str, x: Tensor, alpha: float = 0.2, axis: int | None = None) -> Tensor:
    if kind == "relu":
        return T.relu(x)
    if kind == "leaky_relu":
        return T.leaky_relu(x, alpha)
    if kind == "tanh":
        return T.tanh(x)
    if kind == "sigmoid":
        return T.sigmoid(x)
    if kind == "softmax":
        if axis is None:
            raise ContractError("softmax needs an axis")
        return softmax(x, axis)
    raise ConfigError(f"unknown activation {kind!r}")


# ----------------------------------------------------------------------
# self-attention
# ----------------------------------------------------------------------


def attention_channels(channels: int) -> int:
    return max(1, channels // 8)


@dataclass
class AttentionParams:
    """1x1 query/key/value kernels, output projection, and the mixing scalar."""

    query: Tensor  # [C/8, C, 1, 1]
    key: Tensor  # [C/8, C, 1, 1]
    value: Tensor  # [C, C, 1, 1]
    out: Tensor  # [C, C, 1, 1]
    gamma: Tensor  # [1], initialized to 0 so the layer starts as identity

    @property
    def channels(self) -> int:
        return self.value.shape[0]

    def learnable(self, prefix: str) -> dict[str, Tensor]:
        return {
            f"{prefix}.query": self.query,
            f"{prefix}.key": self.key,
            f"{prefix}.value": self.value,
            f"{prefix}.out": self.out,
            f"{prefix}.gamma": self.gamma,
        }


def self_attention(x: Tensor, params: AttentionParams) -> Tensor:
    """x + gamma * proj(values mixed by a softmax attention map).

    The map is [H*W, H*W] per sample: row i holds the probability of each
    position feeding output position i, so every row sums to 1.
    """
    if x.ndim != 4:
        raise DimensionError(f"self_attention expects [N,C,H,W], got {x.shape}")
    n, c, h, w = x.shape
    if params.channels != c:
        raise DimensionError(f"self_attention: params built for {params.channels} channels, input has {c}")
    cq = params.query.shape[0]
    p = h * w
    spec_q = ConvSpec(c, cq, 1)
    spec_v = ConvSpec(c, c, 1)
    q = T.reshape(conv2d(x, spec_q, params.query), (n, cq, p))
    k = T.reshape(conv2d(x, spec_q, params.key), (n, cq, p))
    v = T.reshape(conv2d(x, spec_v, params.value), (n, c, p))
    logits = T.matmul(T.transpose(q, (0, 2, 1)), k)  # [n, p, p]; row = query position
    attn = softmax(logits, axis=2)
    mixed = T.matmul(v, T.transpose(attn, (0, 2, 1)))  # out column i mixes values by row i
    o = conv2d(T.reshape(mixed, (n, c, h, w)), spec_v, params.out)
    gb = T.broadcast_to(T.reshape(params.gamma, (1, 1, 1, 1)), x.shape)
    return T.add(x, T.mul(gb, o))


def attention_map(x: Tensor, params: AttentionParams) -> np.ndarray:
    """The softmax map alone, for inspection; rows sum to 1."""
    n, c, h, w = x.shape
    cq = params.query.shape[0]
    p = h * w
    with T.no_grad():
        q = T.reshape(conv2d(x, ConvSpec(c, cq, 1), params.query), (n, cq, p))
        k = T.reshape(conv2d(x, ConvSpec(c, cq, 1), params.key), (n, cq, p))
        attn = softmax(T.matmul(T.transpose(q, (0, 2, 1)), k), axis=2)
    return attn.data


# ----------------------------------------------------------------------
# inception-residual block
# ----------------------------------------------------------------------


def branch_split(out_channels: int) -> tuple[int, int, int, int]:
    """Channel allocation for the 1x1 / 3x3 / 5x5 / pool branches."""
    quarter = out_channels // 4
    return out_channels - 3 * quarter, quarter, quarter, quarter


@dataclass
class BlockParams:
    """Parallel branch kernels plus an optional residual projection."""

    w1: Tensor
    b1: Tensor
    w3: Tensor
    b3: Tensor
    w5: Tensor
    b5: Tensor
    wpool: Tensor
    bpool: Tensor
    wres: Tensor | None  # 1x1 projection when in/out channels differ
    bres: Tensor | None
    out_channels: int

    def __post_init__(self):
        branch_sum = self.w1.shape[0] + self.w3.shape[0] + self.w5.shape[0] + self.wpool.shape[0]
        if branch_sum != self.out_channels:
            raise ConfigError(
                f"branch channels sum to {branch_sum}, declared output is {self.out_channels}"
            )

    @property
    def in_channels(self) -> int:
        return self.w1.shape[1]

    def learnable(self, prefix: str) -> dict[str, Tensor]:
        out = {
            f"{prefix}.w1": self.w1,
            f"{prefix}.b1": self.b1,
            f"{prefix}.w3": self.w3,
            f"{prefix}.b3": self.b3,
            f"{prefix}.w5": self.w5,
            f"{prefix}.b5": self.b5,
            f"{prefix}.wpool": self.wpool,
            f"{prefix}.bpool": self.bpool,
        }
        if self.wres is not None:
            out[f"{prefix}.wres"] = self.wres
            out[f"{prefix}.bres"] = self.bres
        return out


def inception_residual_block(x: Tensor, params: BlockParams) -> Tensor:
    """concat(1x1, 3x3, 5x5, maxpool->1x1) + residual; spatial size preserved."""
    if x.ndim != 4:
        raise DimensionError(f"inception_residual_block expects [N,C,H,W], got {x.shape}")
    cin = x.shape[1]
    if cin != params.in_channels:
        raise DimensionError(f"block built for {params.in_channels} channels, input has {cin}")
    c1 = params.w1.shape[0]
    c3 = params.w3.shape[0]
    c5 = params.w5.shape[0]
    cp = params.wpool.shape[0]
    y1 = conv2d(x, ConvSpec(cin, c1, 1), params.w1, params.b1)
    y3 = conv2d(x, ConvSpec(cin, c3, 3, padding=1), params.w3, params.b3)
    y5 = conv2d(x, ConvSpec(cin, c5, 5, padding=2), params.w5, params.b5)
    yp = conv2d(maxpool2d(x, 3, 1, 1), ConvSpec(cin, cp, 1), params.wpool, params.bpool)
    y = T.concat([y1, y3, y5, yp], axis=1)
    if params.wres is not None:
        res = conv2d(x, ConvSpec(cin, params.out_channels, 1), params.wres, params.bres)
    else:
        res = x
    return T.add(y, res)
