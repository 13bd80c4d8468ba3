"""Forward and adjoint implementations of every network layer.

Functions here operate on raw numpy arrays in NCHW order and preserve the
input dtype, so the same code path serves the float32 runtime and the
float64 gradient-check harness. Each ``*_forward`` returns ``(output, ctx)``
where ``ctx`` carries exactly what the matching ``*_backward`` needs.

Conventions:
  - convolution is cross-correlation (no kernel flip), zero padding;
  - output spatial size = floor((in + 2*padding - k) / stride) + 1;
  - sigmoid output is clamped to [SIGMOID_CLAMP, 1 - SIGMOID_CLAMP] so
    downstream logarithms stay finite.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ShapeError

SIGMOID_CLAMP = 1e-7


def _as_array(x) -> np.ndarray:
    # Accept the Tensor container or a bare ndarray.
    data = getattr(x, "data", x)
    return np.asarray(data)


# ---------------------------------------------------------------------------
# Parameter containers
# ---------------------------------------------------------------------------


@dataclass
class ConvParams:
    """Weights of one convolution stage.

    ``weight`` is (out_c, in_c, k, k) for a standard convolution or
    (c, 1, k, k) for a depthwise one. ``bias`` has length out_c (or c) when
    present. Kernels are square and strides are limited to 1 or 2, which is
    all the architectures here use.
    """

    weight: np.ndarray
    bias: np.ndarray | None = None
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        w = np.asarray(self.weight)
        if w.ndim != 4:
            raise ShapeError(f"conv weight must be rank 4, got shape {w.shape}")
        if w.shape[2] != w.shape[3]:
            raise ShapeError(f"conv kernel must be square, got {w.shape[2]}x{w.shape[3]}")
        if self.stride not in (1, 2):
            raise ShapeError(f"stride must be 1 or 2, got {self.stride}")
        if self.padding < 0:
            raise ShapeError(f"padding must be non-negative, got {self.padding}")
        if self.bias is not None:
            b = np.asarray(self.bias)
            if b.shape != (w.shape[0],):
                raise ShapeError(
                    f"bias length {b.shape} does not match {w.shape[0]} output channels"
                )

    @property
    def kernel_size(self) -> int:
        return int(np.asarray(self.weight).shape[2])


@dataclass
class BatchNormState:
    """Learnable scale/shift plus running statistics for one BN layer.

    ``momentum`` blends batch statistics into the running ones as
    ``running = (1 - momentum) * running + momentum * batch``; running
    variance uses the unbiased batch estimate.
    """

    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    eps: float = 1e-5
    momentum: float = 0.1

    def __post_init__(self):
        c = np.asarray(self.gamma).shape
        for name in ("beta", "running_mean", "running_var"):
            if np.asarray(getattr(self, name)).shape != c:
                raise ShapeError(f"batch norm {name} shape differs from gamma shape {c}")
        if self.eps <= 0:
            raise ShapeError("batch norm eps must be positive")
        if np.any(np.asarray(self.running_var) < 0):
            raise ShapeError("running variance must be non-negative")

    @staticmethod
    def fresh(channels: int, eps: float = 1e-5, momentum: float = 0.1) -> "BatchNormState":
        return BatchNormState(
            gamma=np.ones(channels, dtype=np.float32),
            beta=np.zeros(channels, dtype=np.float32),
            running_mean=np.zeros(channels, dtype=np.float32),
            running_var=np.ones(channels, dtype=np.float32),
            eps=eps,
            momentum=momentum,
        )


@dataclass
class PReluParams:
    """One learnable negative slope per channel."""

    slope: np.ndarray

    def __post_init__(self):
        if np.asarray(self.slope).ndim != 1:
            raise ShapeError("prelu slope must be a per-channel vector")


# ---------------------------------------------------------------------------
# Convolutions
# ---------------------------------------------------------------------------


def _conv_out_size(size: int, k: int, stride: int, padding: int) -> int:
    out = (size + 2 * padding - k) // stride + 1
    if out < 1:
        raise ShapeError(
            f"convolution output size {out} < 1 (input {size}, kernel {k}, "
            f"stride {stride}, padding {padding})"
        )
    return out


def _pad_hw(x: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def _windows(xp: np.ndarray, k: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """Strided view (n, c, ho, wo, k, k) over the padded input."""
    n, c = xp.shape[:2]
    sn, sc, sh, sw = xp.strides
    return np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, c, ho, wo, k, k),
        strides=(sn, sc, stride * sh, stride * sw, sh, sw),
        writeable=False,
    )


class Conv2dCtx(NamedTuple):
    xp: np.ndarray
    params: ConvParams
    in_hw: tuple[int, int]
    out_hw: tuple[int, int]


def conv2d_forward(x, p: ConvParams) -> tuple[np.ndarray, Conv2dCtx]:
    """Standard cross-correlation with zero padding, via im2col + matmul."""
    x = _as_array(x)
    cout, cin, k, _ = p.weight.shape
    if x.ndim != 4 or x.shape[1] != cin:
        raise ShapeError(
            f"conv2d expects input channels {cin}, got input shape {x.shape}"
        )
    n, _, h, w = x.shape
    ho = _conv_out_size(h, k, p.stride, p.padding)
    wo = _conv_out_size(w, k, p.stride, p.padding)
    xp = _pad_hw(x, p.padding)
    win = _windows(xp, k, p.stride, ho, wo)
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, cin * k * k)
    wmat = np.asarray(p.weight, dtype=x.dtype).reshape(cout, -1)
    y = cols @ wmat.T
    if p.bias is not None:
        y += np.asarray(p.bias, dtype=x.dtype)
    y = np.ascontiguousarray(y.reshape(n, ho, wo, cout).transpose(0, 3, 1, 2))
    return y, Conv2dCtx(xp, p, (h, w), (ho, wo))


def conv2d_backward(
    ctx: Conv2dCtx, gy: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """Gradients of conv2d: returns (d_input, d_weight, d_bias)."""
    xp, p, (h, w), (ho, wo) = ctx
    cout, cin, k, _ = p.weight.shape
    gy = _as_array(gy)
    if gy.shape != (xp.shape[0], cout, ho, wo):
        raise ShapeError(
            f"upstream gradient shape {gy.shape} does not match conv output "
            f"{(xp.shape[0], cout, ho, wo)}"
        )
    n = xp.shape[0]
    s = p.stride
    win = _windows(xp, k, s, ho, wo)
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, cin * k * k)
    gy_mat = gy.transpose(0, 2, 3, 1).reshape(n * ho * wo, cout)
    gw = (gy_mat.T @ cols).reshape(cout, cin, k, k)
    gb = gy.sum(axis=(0, 2, 3)) if p.bias is not None else None

    gxp = np.zeros_like(xp)
    wcast = np.asarray(p.weight, dtype=gy.dtype)
    for i in range(k):
        for j in range(k):
            # (n, ho, wo, cin) contribution through kernel tap (i, j)
            t = np.tensordot(gy, wcast[:, :, i, j], axes=([1], [0]))
            gxp[:, :, i : i + s * ho : s, j : j + s * wo : s] += t.transpose(0, 3, 1, 2)
    pad = p.padding
    gx = gxp[:, :, pad : pad + h, pad : pad + w] if pad else gxp
    return np.ascontiguousarray(gx), gw, gb


def conv2d(x, p: ConvParams) -> np.ndarray:
    return conv2d_forward(x, p)[0]


class DepthwiseCtx(NamedTuple):
    xp: np.ndarray
    params: ConvParams
    in_hw: tuple[int, int]
    out_hw: tuple[int, int]


def depthwise_conv2d_forward(x, p: ConvParams) -> tuple[np.ndarray, DepthwiseCtx]:
    """Per-channel spatial convolution: channel i of the output sees only
    channel i of the input."""
    x = _as_array(x)
    c, one, k, _ = p.weight.shape
    if one != 1:
        raise ShapeError(f"depthwise weight must be (c, 1, k, k), got {p.weight.shape}")
    if x.ndim != 4 or x.shape[1] != c:
        raise ShapeError(
            f"depthwise conv expects {c} input channels, got input shape {x.shape}"
        )
    n, _, h, w = x.shape
    ho = _conv_out_size(h, k, p.stride, p.padding)
    wo = _conv_out_size(w, k, p.stride, p.padding)
    xp = _pad_hw(x, p.padding)
    s = p.stride
    wcast = np.asarray(p.weight, dtype=x.dtype)
    y = np.zeros((n, c, ho, wo), dtype=x.dtype)
    for i in range(k):
        for j in range(k):
            y += xp[:, :, i : i + s * ho : s, j : j + s * wo : s] * wcast[None, :, 0, i, j, None, None]
    if p.bias is not None:
        y += np.asarray(p.bias, dtype=x.dtype)[None, :, None, None]
    return y, DepthwiseCtx(xp, p, (h, w), (ho, wo))


def depthwise_conv2d_backward(
    ctx: DepthwiseCtx, gy: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    xp, p, (h, w), (ho, wo) = ctx
    c, _, k, _ = p.weight.shape
    gy = _as_array(gy)
    if gy.shape != (xp.shape[0], c, ho, wo):
        raise ShapeError(
            f"upstream gradient shape {gy.shape} does not match depthwise output "
            f"{(xp.shape[0], c, ho, wo)}"
        )
    s = p.stride
    wcast = np.asarray(p.weight, dtype=gy.dtype)
    gw = np.zeros_like(wcast)
    gxp = np.zeros_like(xp)
    for i in range(k):
        for j in range(k):
            xs = xp[:, :, i : i + s * ho : s, j : j + s * wo : s]
            gw[:, 0, i, j] = (xs * gy).sum(axis=(0, 2, 3))
            gxp[:, :, i : i + s * ho : s, j : j + s * wo : s] += gy * wcast[None, :, 0, i, j, None, None]
    gb = gy.sum(axis=(0, 2, 3)) if p.bias is not None else None
    pad = p.padding
    gx = gxp[:, :, pad : pad + h, pad : pad + w] if pad else gxp
    return np.ascontiguousarray(gx), gw, gb


def depthwise_conv2d(x, p: ConvParams) -> np.ndarray:
    return depthwise_conv2d_forward(x, p)[0]


class DSConvCtx(NamedTuple):
    dw_ctx: DepthwiseCtx
    pw_ctx: Conv2dCtx


def ds_conv2d_forward(x, dw: ConvParams, pw: ConvParams) -> tuple[np.ndarray, DSConvCtx]:
    """Depthwise-separable convolution: per-channel filter, then 1x1 mix.

    Stride and padding of the block live on the depthwise stage; the
    pointwise stage must be a 1x1, stride-1 convolution.
    """
    if pw.kernel_size != 1 or pw.stride != 1 or pw.padding != 0:
        raise ShapeError("pointwise stage must be a 1x1 convolution with stride 1, padding 0")
    mid, dw_ctx = depthwise_conv2d_forward(x, dw)
    y, pw_ctx = conv2d_forward(mid, pw)
    return y, DSConvCtx(dw_ctx, pw_ctx)


def ds_conv2d_backward(
    ctx: DSConvCtx, gy: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray | None, np.ndarray, np.ndarray | None]:
    """Returns (d_input, d_dw_weight, d_dw_bias, d_pw_weight, d_pw_bias)."""
    gmid, gpw_w, gpw_b = conv2d_backward(ctx.pw_ctx, gy)
    gx, gdw_w, gdw_b = depthwise_conv2d_backward(ctx.dw_ctx, gmid)
    return gx, gdw_w, gdw_b, gpw_w, gpw_b


def ds_conv2d(x, dw: ConvParams, pw: ConvParams) -> np.ndarray:
    return ds_conv2d_forward(x, dw, pw)[0]


def conv_weight_counts(k: int, in_c: int, out_c: int) -> tuple[int, int]:
    """(separable, standard) kernel-weight counts for one k x k conv."""
    return k * k * in_c + in_c * out_c, k * k * in_c * out_c


# ---------------------------------------------------------------------------
# Normalization and activations
# ---------------------------------------------------------------------------


class BatchNormCtx(NamedTuple):
    xhat: np.ndarray
    inv_std: np.ndarray
    gamma: np.ndarray
    train: bool


def batch_norm_forward(
    x, s: BatchNormState, train: bool
) -> tuple[np.ndarray, BatchNormCtx]:
    """Per-channel normalization.

    Train mode normalizes by batch statistics over (n, h, w) and folds them
    into the running estimates; eval mode normalizes by the running ones.
    """
    x = _as_array(x)
    c = np.asarray(s.gamma).shape[0]
    if x.ndim != 4 or x.shape[1] != c:
        raise ShapeError(f"batch norm expects {c} channels, got input shape {x.shape}")
    if train:
        count = x.shape[0] * x.shape[2] * x.shape[3]
        if count < 2:
            raise ShapeError("train-mode batch norm needs at least 2 values per channel")
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        m = s.momentum
        s.running_mean[:] = (1.0 - m) * s.running_mean + m * mean
        s.running_var[:] = (1.0 - m) * s.running_var + m * var * (count / (count - 1))
    else:
        mean = np.asarray(s.running_mean, dtype=x.dtype)
        var = np.asarray(s.running_var, dtype=x.dtype)
    inv_std = 1.0 / np.sqrt(var + np.asarray(s.eps, dtype=x.dtype))
    xhat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
    gamma = np.asarray(s.gamma, dtype=x.dtype)
    y = gamma[None, :, None, None] * xhat + np.asarray(s.beta, dtype=x.dtype)[None, :, None, None]
    return y, BatchNormCtx(xhat, inv_std.astype(x.dtype), gamma, train)


def batch_norm_backward(
    ctx: BatchNormCtx, gy: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (d_input, d_gamma, d_beta)."""
    xhat, inv_std, gamma, train = ctx
    gy = _as_array(gy)
    if gy.shape != xhat.shape:
        raise ShapeError(f"upstream gradient shape {gy.shape} != activation shape {xhat.shape}")
    ggamma = (gy * xhat).sum(axis=(0, 2, 3))
    gbeta = gy.sum(axis=(0, 2, 3))
    gxhat = gy * gamma[None, :, None, None]
    if not train:
        return gxhat * inv_std[None, :, None, None], ggamma, gbeta
    # Batch statistics depend on every element, hence the two correction terms.
    m = gy.shape[0] * gy.shape[2] * gy.shape[3]
    sum_gxhat = gxhat.sum(axis=(0, 2, 3))
    sum_gxhat_xhat = (gxhat * xhat).sum(axis=(0, 2, 3))
    gx = (
        gxhat
        - (sum_gxhat / m)[None, :, None, None]
        - xhat * (sum_gxhat_xhat / m)[None, :, None, None]
    ) * inv_std[None, :, None, None]
    return gx, ggamma, gbeta


def batch_norm(x, s: BatchNormState, train: bool = False) -> np.ndarray:
    return batch_norm_forward(x, s, train)[0]


class PReluCtx(NamedTuple):
    x: np.ndarray
    slope: np.ndarray


def prelu_forward(x, p: PReluParams) -> tuple[np.ndarray, PReluCtx]:
    x = _as_array(x)
    slope = np.asarray(p.slope, dtype=x.dtype)
    if x.ndim != 4 or x.shape[1] != slope.shape[0]:
        raise ShapeError(
            f"prelu expects {slope.shape[0]} channels, got input shape {x.shape}"
        )
    y = np.where(x >= 0, x, slope[None, :, None, None] * x)
    return y, PReluCtx(x, slope)


def prelu_backward(ctx: PReluCtx, gy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Returns (d_input, d_slope)."""
    x, slope = ctx
    gy = _as_array(gy)
    if gy.shape != x.shape:
        raise ShapeError(f"upstream gradient shape {gy.shape} != activation shape {x.shape}")
    neg = x < 0
    gx = np.where(neg, slope[None, :, None, None] * gy, gy)
    gslope = np.where(neg, gy * x, 0).sum(axis=(0, 2, 3))
    return gx, gslope


def prelu(x, p: PReluParams) -> np.ndarray:
    return prelu_forward(x, p)[0]


class MaskCtx(NamedTuple):
    mask: np.ndarray  # local derivative, same shape as the input


def leaky_relu_forward(x, slope: float = 0.2) -> tuple[np.ndarray, MaskCtx]:
    x = _as_array(x)
    y = np.where(x >= 0, x, x.dtype.type(slope) * x)
    grad = np.where(x >= 0, x.dtype.type(1), x.dtype.type(slope))
    return y, MaskCtx(grad)


def leaky_relu_backward(ctx: MaskCtx, gy: np.ndarray) -> np.ndarray:
    gy = _as_array(gy)
    if gy.shape != ctx.mask.shape:
        raise ShapeError(f"upstream gradient shape {gy.shape} != activation shape {ctx.mask.shape}")
    return gy * ctx.mask


def leaky_relu(x, slope: float = 0.2) -> np.ndarray:
    return leaky_relu_forward(x, slope)[0]


def relu6_forward(x) -> tuple[np.ndarray, MaskCtx]:
    x = _as_array(x)
    y = np.clip(x, 0, 6)
    grad = ((x > 0) & (x < 6)).astype(x.dtype)
    return y, MaskCtx(grad)


def relu6_backward(ctx: MaskCtx, gy: np.ndarray) -> np.ndarray:
    gy = _as_array(gy)
    if gy.shape != ctx.mask.shape:
        raise ShapeError(f"upstream gradient shape {gy.shape} != activation shape {ctx.mask.shape}")
    return gy * ctx.mask


def relu6(x) -> np.ndarray:
    return relu6_forward(x)[0]


class SigmoidCtx(NamedTuple):
    y: np.ndarray


def sigmoid_forward(x) -> tuple[np.ndarray, SigmoidCtx]:
    """Numerically stable logistic, clamped into the open interval (0, 1)."""
    x = _as_array(x)
    y = np.empty_like(x)
    pos = x >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    y[~pos] = e / (1.0 + e)
    np.clip(y, SIGMOID_CLAMP, 1.0 - SIGMOID_CLAMP, out=y)
    return y, SigmoidCtx(y)


def sigmoid_backward(ctx: SigmoidCtx, gy: np.ndarray) -> np.ndarray:
    # The derivative uses the clamped output, which keeps loss gradients
    # bounded when the probability saturates.
    gy = _as_array(gy)
    y = ctx.y
    if gy.shape != y.shape:
        raise ShapeError(f"upstream gradient shape {gy.shape} != activation shape {y.shape}")
    return gy * y * (1.0 - y)


def sigmoid(x) -> np.ndarray:
    return sigmoid_forward(x)[0]


# ---------------------------------------------------------------------------
# Rearrangement, pooling, linear
# ---------------------------------------------------------------------------


def pixel_shuffle(x, r: int) -> np.ndarray:
    """(n, c, h, w) -> (n, c/r^2, h*r, w*r).

    out[n][c][h*r + i][w*r + j] = in[n][c*r*r + i*r + j][h][w]
    """
    x = _as_array(x)
    if r < 1:
        raise ShapeError(f"pixel shuffle factor must be >= 1, got {r}")
    n, c, h, w = x.shape
    if c % (r * r) != 0:
        raise ShapeError(f"channel count {c} not divisible by r^2 = {r * r}")
    co = c // (r * r)
    y = x.reshape(n, co, r, r, h, w).transpose(0, 1, 4, 2, 5, 3).reshape(n, co, h * r, w * r)
    return np.ascontiguousarray(y)


def pixel_unshuffle(x, r: int) -> np.ndarray:
    """Exact inverse of :func:`pixel_shuffle`."""
    x = _as_array(x)
    if r < 1:
        raise ShapeError(f"pixel shuffle factor must be >= 1, got {r}")
    n, c, h, w = x.shape
    if h % r != 0 or w % r != 0:
        raise ShapeError(f"spatial dims ({h},{w}) not divisible by r = {r}")
    ho, wo = h // r, w // r
    y = x.reshape(n, c, ho, r, wo, r).transpose(0, 1, 3, 5, 2, 4).reshape(n, c * r * r, ho, wo)
    return np.ascontiguousarray(y)


class PoolCtx(NamedTuple):
    in_hw: tuple[int, int]
    out_hw: tuple[int, int]
    n: int
    c: int
    dtype: np.dtype


def _pool_bounds(size: int, out: int) -> list[tuple[int, int]]:
    # Window i covers [floor(i*size/out), ceil((i+1)*size/out)).
    return [(i * size // out, -((-(i + 1) * size) // out)) for i in range(out)]


def adaptive_avg_pool_forward(x, out_h: int, out_w: int) -> tuple[np.ndarray, PoolCtx]:
    x = _as_array(x)
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"pool output size must be >= 1, got ({out_h},{out_w})")
    n, c, h, w = x.shape
    y = np.empty((n, c, out_h, out_w), dtype=x.dtype)
    for i, (h0, h1) in enumerate(_pool_bounds(h, out_h)):
        for j, (w0, w1) in enumerate(_pool_bounds(w, out_w)):
            y[:, :, i, j] = x[:, :, h0:h1, w0:w1].mean(axis=(2, 3))
    return y, PoolCtx((h, w), (out_h, out_w), n, c, np.dtype(x.dtype))


def adaptive_avg_pool_backward(ctx: PoolCtx, gy: np.ndarray) -> np.ndarray:
    (h, w), (out_h, out_w), n, c, dtype = ctx
    gy = _as_array(gy)
    if gy.shape != (n, c, out_h, out_w):
        raise ShapeError(f"upstream gradient shape {gy.shape} != pool output {(n, c, out_h, out_w)}")
    gx = np.zeros((n, c, h, w), dtype=dtype)
    for i, (h0, h1) in enumerate(_pool_bounds(h, out_h)):
        for j, (w0, w1) in enumerate(_pool_bounds(w, out_w)):
            area = (h1 - h0) * (w1 - w0)
            gx[:, :, h0:h1, w0:w1] += gy[:, :, i : i + 1, j : j + 1] / area
    return gx


def adaptive_avg_pool(x, out_h: int, out_w: int) -> np.ndarray:
    return adaptive_avg_pool_forward(x, out_h, out_w)[0]


class LinearCtx(NamedTuple):
    x: np.ndarray
    weight: np.ndarray
    has_bias: bool


def linear_forward(x, weight: np.ndarray, bias: np.ndarray | None) -> tuple[np.ndarray, LinearCtx]:
    """Row-batch affine map: y = x @ W^T + b, with W of shape (out, in)."""
    x = _as_array(x)
    weight = np.asarray(weight)
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeError(
            f"linear expects (batch, {weight.shape[1] if weight.ndim == 2 else '?'}) input, "
            f"got {x.shape} with weight {weight.shape}"
        )
    wcast = weight.astype(x.dtype, copy=False)
    y = x @ wcast.T
    if bias is not None:
        y += np.asarray(bias, dtype=x.dtype)
    return y, LinearCtx(x, wcast, bias is not None)


def linear_backward(
    ctx: LinearCtx, gy: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    x, weight, has_bias = ctx
    gy = _as_array(gy)
    if gy.shape != (x.shape[0], weight.shape[0]):
        raise ShapeError(
            f"upstream gradient shape {gy.shape} != linear output {(x.shape[0], weight.shape[0])}"
        )
    gx = gy @ weight
    gw = gy.T @ x
    gb = gy.sum(axis=0) if has_bias else None
    return gx, gw, gb


def linear(x, weight: np.ndarray, bias: np.ndarray | None = None) -> np.ndarray:
    return linear_forward(x, weight, bias)[0]
