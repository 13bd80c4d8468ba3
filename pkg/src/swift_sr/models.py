"""Generator and discriminator graphs built from the layer ops.

Layers own their parameters and cache forward context when run in train
mode; ``backward`` consumes that context, accumulates parameter gradients,
and returns the input gradient. Parameter names are dotted paths through
the layer tree and are stable across runs, which is what the checkpoint
format keys on.

The generator comes in two variants sharing one topology: the separable
variant (depthwise + pointwise stages) and a standard-convolution twin used
only for parameter-count and latency comparisons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import ops
from .errors import ShapeError
from .tensor import Tensor

PRELU_INIT_SLOPE = 0.25


class Parameter:
    """A named, trainable array with an optional accumulated gradient."""

    __slots__ = ("data", "grad", "kind", "trainable")

    def __init__(self, data: np.ndarray, kind: str, trainable: bool = True):
        self.data = np.ascontiguousarray(data, dtype=np.float32)
        self.grad: np.ndarray | None = None
        self.kind = kind
        self.trainable = trainable

    def accumulate(self, g: np.ndarray | None):
        if g is None or not self.trainable:
            return
        g = np.asarray(g, dtype=np.float32)
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g


class Layer:
    """Base class: child layers and parameters register via attribute set."""

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_children", {})
        object.__setattr__(self, "_ctx", None)

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._params[name] = value
        elif isinstance(value, Layer):
            self._children[name] = value
        object.__setattr__(self, name, value)

    # -- parameter traversal ------------------------------------------------

    def named_parameters(self, prefix: str = ""):
        """Trainable parameters, depth-first in registration order."""
        for name, p in self._params.items():
            if p.trainable:
                yield prefix + name, p
        for name, child in self._children.items():
            yield from child.named_parameters(f"{prefix}{name}.")

    def named_state(self, prefix: str = ""):
        """All stateful arrays (parameters and running buffers)."""
        for name, p in self._params.items():
            yield prefix + name, p
        for name, child in self._children.items():
            yield from child.named_state(f"{prefix}{name}.")

    def zero_grad(self):
        for _, p in self.named_state():
            p.grad = None

    # -- execution ----------------------------------------------------------

    def forward(self, x, train: bool = False):
        raise NotImplementedError

    def backward(self, gy):
        raise NotImplementedError

    def _take_ctx(self):
        ctx = self._ctx
        if ctx is None:
            raise RuntimeError(f"{type(self).__name__}.backward called without a train-mode forward")
        self._ctx = None
        return ctx

    # -- audit --------------------------------------------------------------

    def macs_and_shape(self, shape):
        """(multiply-accumulate count, output shape) for a (c, h, w) input.

        Default: fold through children in registration order, which matches
        the sequential spine of every composite here (skip additions cost no
        MACs and preserve shape).
        """
        total = 0
        for child in self._children.values():
            macs, shape = child.macs_and_shape(shape)
            total += macs
        return total, shape


def _fwd(name: str, layer: Layer, x, train: bool):
    # Attribute shape failures to the layer that raised them.
    try:
        return layer.forward(x, train)
    except ShapeError as e:
        raise ShapeError(f"{name}: {e}") from None


class LayerList(Layer):
    def __init__(self, layers):
        super().__init__()
        for i, layer in enumerate(layers):
            setattr(self, str(i), layer)

    def __iter__(self):
        return iter(self._children.values())

    def __len__(self):
        return len(self._children)

    def __getitem__(self, i):
        return self._children[str(i)]


class Conv2d(Layer):
    """Standard convolution with bias, zero padding."""

    def __init__(self, in_c: int, out_c: int, kernel_size: int, stride: int = 1,
                 padding: int | None = None, bias: bool = True):
        super().__init__()
        if padding is None:
            padding = kernel_size // 2
        self.in_c, self.out_c = in_c, out_c
        self.kernel_size, self.stride, self.padding = kernel_size, stride, padding
        self.weight = Parameter(
            np.zeros((out_c, in_c, kernel_size, kernel_size), dtype=np.float32), "conv_weight"
        )
        self.bias = Parameter(np.zeros(out_c, dtype=np.float32), "conv_bias") if bias else None

    def _conv_params(self):
        return ops.ConvParams(
            self.weight.data,
            self.bias.data if self.bias is not None else None,
            stride=self.stride,
            padding=self.padding,
        )

    def forward(self, x, train: bool = False):
        y, ctx = ops.conv2d_forward(x, self._conv_params())
        self._ctx = ctx if train else None
        return y

    def backward(self, gy):
        gx, gw, gb = ops.conv2d_backward(self._take_ctx(), gy)
        self.weight.accumulate(gw)
        if self.bias is not None:
            self.bias.accumulate(gb)
        return gx

    def macs_and_shape(self, shape):
        c, h, w = shape
        ho = (h + 2 * self.padding - self.kernel_size) // self.stride + 1
        wo = (w + 2 * self.padding - self.kernel_size) // self.stride + 1
        macs = ho * wo * self.kernel_size**2 * self.in_c * self.out_c
        return macs, (self.out_c, ho, wo)


class DepthwiseConv2d(Layer):
    def __init__(self, channels: int, kernel_size: int, stride: int = 1,
                 padding: int | None = None, bias: bool = True):
        super().__init__()
        if padding is None:
            padding = kernel_size // 2
        self.channels = channels
        self.kernel_size, self.stride, self.padding = kernel_size, stride, padding
        self.weight = Parameter(
            np.zeros((channels, 1, kernel_size, kernel_size), dtype=np.float32), "conv_weight"
        )
        self.bias = Parameter(np.zeros(channels, dtype=np.float32), "conv_bias") if bias else None

    def _conv_params(self):
        return ops.ConvParams(
            self.weight.data,
            self.bias.data if self.bias is not None else None,
            stride=self.stride,
            padding=self.padding,
        )

    def forward(self, x, train: bool = False):
        y, ctx = ops.depthwise_conv2d_forward(x, self._conv_params())
        self._ctx = ctx if train else None
        return y

    def backward(self, gy):
        gx, gw, gb = ops.depthwise_conv2d_backward(self._take_ctx(), gy)
        self.weight.accumulate(gw)
        if self.bias is not None:
            self.bias.accumulate(gb)
        return gx

    def macs_and_shape(self, shape):
        c, h, w = shape
        ho = (h + 2 * self.padding - self.kernel_size) // self.stride + 1
        wo = (w + 2 * self.padding - self.kernel_size) // self.stride + 1
        return ho * wo * self.kernel_size**2 * c, (c, ho, wo)


class DSConv2d(Layer):
    """Depthwise filter then 1x1 pointwise mix; stride lives on the depthwise stage."""

    def __init__(self, in_c: int, out_c: int, kernel_size: int, stride: int = 1,
                 padding: int | None = None, bias: bool = True):
        super().__init__()
        self.dw = DepthwiseConv2d(in_c, kernel_size, stride, padding, bias=bias)
        self.pw = Conv2d(in_c, out_c, 1, 1, 0, bias=bias)

    def forward(self, x, train: bool = False):
        return self.pw.forward(self.dw.forward(x, train), train)

    def backward(self, gy):
        return self.dw.backward(self.pw.backward(gy))


class BatchNorm2d(Layer):
    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.1):
        super().__init__()
        self.channels = channels
        self.eps, self.momentum = eps, momentum
        self.gamma = Parameter(np.ones(channels, dtype=np.float32), "bn_gamma")
        self.beta = Parameter(np.zeros(channels, dtype=np.float32), "bn_beta")
        self.running_mean = Parameter(
            np.zeros(channels, dtype=np.float32), "bn_running_mean", trainable=False
        )
        self.running_var = Parameter(
            np.ones(channels, dtype=np.float32), "bn_running_var", trainable=False
        )

    def _state(self):
        return ops.BatchNormState(
            gamma=self.gamma.data,
            beta=self.beta.data,
            running_mean=self.running_mean.data,
            running_var=self.running_var.data,
            eps=self.eps,
            momentum=self.momentum,
        )

    def forward(self, x, train: bool = False):
        y, ctx = ops.batch_norm_forward(x, self._state(), train=train)
        self._ctx = ctx if train else None
        return y

    def backward(self, gy):
        gx, ggamma, gbeta = ops.batch_norm_backward(self._take_ctx(), gy)
        self.gamma.accumulate(ggamma)
        self.beta.accumulate(gbeta)
        return gx


class PReLU(Layer):
    def __init__(self, channels: int):
        super().__init__()
        self.slope = Parameter(
            np.full(channels, PRELU_INIT_SLOPE, dtype=np.float32), "prelu_slope"
        )

    def forward(self, x, train: bool = False):
        y, ctx = ops.prelu_forward(x, ops.PReluParams(self.slope.data))
        self._ctx = ctx if train else None
        return y

    def backward(self, gy):
        gx, gslope = ops.prelu_backward(self._take_ctx(), gy)
        self.slope.accumulate(gslope)
        return gx


class LeakyReLU(Layer):
    def __init__(self, slope: float = 0.2):
        super().__init__()
        self.slope = slope

    def forward(self, x, train: bool = False):
        y, ctx = ops.leaky_relu_forward(x, self.slope)
        self._ctx = ctx if train else None
        return y

    def backward(self, gy):
        return ops.leaky_relu_backward(self._take_ctx(), gy)


class ReLU6(Layer):
    def forward(self, x, train: bool = False):
        y, ctx = ops.relu6_forward(x)
        self._ctx = ctx if train else None
        return y

    def backward(self, gy):
        return ops.relu6_backward(self._take_ctx(), gy)


class Sigmoid(Layer):
    def forward(self, x, train: bool = False):
        y, ctx = ops.sigmoid_forward(x)
        self._ctx = ctx if train else None
        return y

    def backward(self, gy):
        return ops.sigmoid_backward(self._take_ctx(), gy)


class PixelShuffle(Layer):
    def __init__(self, factor: int):
        super().__init__()
        self.factor = factor

    def forward(self, x, train: bool = False):
        return ops.pixel_shuffle(x, self.factor)

    def backward(self, gy):
        return ops.pixel_unshuffle(gy, self.factor)

    def macs_and_shape(self, shape):
        c, h, w = shape
        r = self.factor
        return 0, (c // (r * r), h * r, w * r)


class AdaptiveAvgPool2d(Layer):
    def __init__(self, out_h: int, out_w: int):
        super().__init__()
        self.out_h, self.out_w = out_h, out_w

    def forward(self, x, train: bool = False):
        y, ctx = ops.adaptive_avg_pool_forward(x, self.out_h, self.out_w)
        self._ctx = ctx if train else None
        return y

    def backward(self, gy):
        return ops.adaptive_avg_pool_backward(self._take_ctx(), gy)

    def macs_and_shape(self, shape):
        c, _, _ = shape
        return 0, (c, self.out_h, self.out_w)


class Flatten(Layer):
    def forward(self, x, train: bool = False):
        self._ctx = x.shape if train else None
        return np.ascontiguousarray(x.reshape(x.shape[0], -1))

    def backward(self, gy):
        return gy.reshape(self._take_ctx())

    def macs_and_shape(self, shape):
        c, h, w = shape
        return 0, (c * h * w, 1, 1)


class Linear(Layer):
    def __init__(self, in_features: int, out_features: int, bias: bool = True):
        super().__init__()
        self.in_features, self.out_features = in_features, out_features
        self.weight = Parameter(
            np.zeros((out_features, in_features), dtype=np.float32), "linear_weight"
        )
        self.bias = Parameter(np.zeros(out_features, dtype=np.float32), "linear_bias") if bias else None

    def forward(self, x, train: bool = False):
        y, ctx = ops.linear_forward(x, self.weight.data, self.bias.data if self.bias else None)
        self._ctx = ctx if train else None
        return y

    def backward(self, gy):
        gx, gw, gb = ops.linear_backward(self._take_ctx(), gy)
        self.weight.accumulate(gw)
        if self.bias is not None:
            self.bias.accumulate(gb)
        return gx

    def macs_and_shape(self, shape):
        return self.in_features * self.out_features, (self.out_features, 1, 1)


# ---------------------------------------------------------------------------
# Configurations
# ---------------------------------------------------------------------------


@dataclass
class GeneratorConfig:
    base_channels: int = 64
    num_residual_blocks: int = 16
    upscale_factor: int = 4
    in_channels: int = 3

    def __post_init__(self):
        if self.upscale_factor not in (2, 4, 8):
            raise ShapeError(f"upscale_factor must be 2, 4, or 8, got {self.upscale_factor}")
        if self.num_residual_blocks < 1:
            raise ShapeError("num_residual_blocks must be >= 1")
        if self.base_channels < 1 or self.in_channels < 1:
            raise ShapeError("channel counts must be >= 1")


@dataclass
class DiscriminatorConfig:
    block_channels: tuple = (64, 64, 128, 128, 256, 256, 512, 512)
    strides: tuple = (1, 2, 1, 2, 1, 2, 1, 2)
    pool_size: int = 6
    hidden_units: int = 1024
    in_channels: int = 3

    def __post_init__(self):
        self.block_channels = tuple(int(c) for c in self.block_channels)
        self.strides = tuple(int(s) for s in self.strides)
        if len(self.block_channels) != 8 or len(self.strides) != 8:
            raise ShapeError("block_channels and strides must both have length 8")
        if any(s not in (1, 2) for s in self.strides):
            raise ShapeError("block strides must be 1 or 2")
        if self.pool_size < 1 or self.hidden_units < 1:
            raise ShapeError("pool_size and hidden_units must be >= 1")


# ---------------------------------------------------------------------------
# Generator
# ---------------------------------------------------------------------------


class ResidualBlock(Layer):
    def __init__(self, channels: int, conv):
        super().__init__()
        self.conv1 = conv(channels, channels, 3, 1)
        self.bn1 = BatchNorm2d(channels)
        self.act = PReLU(channels)
        self.conv2 = conv(channels, channels, 3, 1)
        self.bn2 = BatchNorm2d(channels)

    def forward(self, x, train: bool = False):
        y = self.conv1.forward(x, train)
        y = self.bn1.forward(y, train)
        y = self.act.forward(y, train)
        y = self.conv2.forward(y, train)
        y = self.bn2.forward(y, train)
        return y + x

    def backward(self, gy):
        g = self.bn2.backward(gy)
        g = self.conv2.backward(g)
        g = self.act.backward(g)
        g = self.bn1.backward(g)
        g = self.conv1.backward(g)
        return g + gy


class UpsampleBlock(Layer):
    """Doubles spatial resolution: channel-expanding conv, shuffle, PReLU."""

    def __init__(self, channels: int, conv):
        super().__init__()
        self.conv = conv(channels, channels * 4, 3, 1)
        self.shuffle = PixelShuffle(2)
        self.act = PReLU(channels)

    def forward(self, x, train: bool = False):
        y = self.conv.forward(x, train)
        y = self.shuffle.forward(y, train)
        return self.act.forward(y, train)

    def backward(self, gy):
        g = self.act.backward(gy)
        g = self.shuffle.backward(g)
        return self.conv.backward(g)


def _conv_factory(variant: str):
    if variant == "dsconv":
        return DSConv2d
    if variant == "standard":
        return Conv2d
    raise ShapeError(f"unknown conv variant {variant!r}")


class Generator(Layer):
    """Upscaling network: big-kernel head, residual trunk with a long skip,
    shuffle-based upsampling, big-kernel tail. No output activation; callers
    clamp to the image range when materializing pixels."""

    kind = "generator"

    def __init__(self, cfg: GeneratorConfig, variant: str = "dsconv"):
        super().__init__()
        conv = _conv_factory(variant)
        self.cfg = cfg
        self.variant = variant
        base = cfg.base_channels
        self.head_conv = conv(cfg.in_channels, base, 9, 1)
        self.head_act = PReLU(base)
        self.res = LayerList([ResidualBlock(base, conv) for _ in range(cfg.num_residual_blocks)])
        self.post_conv = conv(base, base, 3, 1)
        self.post_bn = BatchNorm2d(base)
        self.ups = LayerList(
            [UpsampleBlock(base, conv) for _ in range(int(math.log2(cfg.upscale_factor)))]
        )
        self.tail = conv(base, cfg.in_channels, 9, 1)

    def forward(self, x, train: bool = False):
        wrap = isinstance(x, Tensor)
        data = x.data if wrap else np.asarray(x)
        if data.ndim != 4 or data.shape[1] != self.cfg.in_channels:
            raise ShapeError(
                f"generator expects (n, {self.cfg.in_channels}, h, w) input, got {data.shape}"
            )
        if data.size == 0:
            raise ShapeError("generator input must be non-empty")
        f0 = _fwd("head_act", self.head_act, _fwd("head_conv", self.head_conv, data, train), train)
        y = f0
        for i, block in enumerate(self.res):
            y = _fwd(f"res.{i}", block, y, train)
        y = _fwd("post_bn", self.post_bn, _fwd("post_conv", self.post_conv, y, train), train)
        y = y + f0  # long skip around the residual trunk
        for i, up in enumerate(self.ups):
            y = _fwd(f"ups.{i}", up, y, train)
        y = _fwd("tail", self.tail, y, train)
        return Tensor(y) if wrap else y

    def backward(self, gy):
        g = gy.data if isinstance(gy, Tensor) else np.asarray(gy)
        g = self.tail.backward(g)
        for up in reversed(list(self.ups)):
            g = up.backward(g)
        g_skip = g  # flows directly into the pre-trunk features
        g = self.post_conv.backward(self.post_bn.backward(g))
        for block in reversed(list(self.res)):
            g = block.backward(g)
        g = g + g_skip
        g = self.head_act.backward(g)
        g = self.head_conv.backward(g)
        return g

    def macs(self, in_hw: tuple[int, int]) -> int:
        """Analytic multiply-accumulate count of one forward pass."""
        total, _ = self.macs_and_shape((self.cfg.in_channels, *in_hw))
        return total


class DiscBlock(Layer):
    def __init__(self, in_c: int, out_c: int, stride: int, with_bn: bool):
        super().__init__()
        self.conv = DSConv2d(in_c, out_c, 3, stride)
        if with_bn:
            self.bn = BatchNorm2d(out_c)
        else:
            self.bn = None
        self.act = LeakyReLU(0.2)

    def forward(self, x, train: bool = False):
        y = self.conv.forward(x, train)
        if self.bn is not None:
            y = self.bn.forward(y, train)
        return self.act.forward(y, train)

    def backward(self, gy):
        g = self.act.backward(gy)
        if self.bn is not None:
            g = self.bn.backward(g)
        return self.conv.backward(g)


class Discriminator(Layer):
    """Real-vs-generated classifier; emits one probability per image."""

    kind = "discriminator"
    variant = "dsconv"

    def __init__(self, cfg: DiscriminatorConfig):
        super().__init__()
        self.cfg = cfg
        blocks = []
        in_c = cfg.in_channels
        for i, (out_c, stride) in enumerate(zip(cfg.block_channels, cfg.strides)):
            blocks.append(DiscBlock(in_c, out_c, stride, with_bn=(i > 0)))
            in_c = out_c
        self.blocks = LayerList(blocks)
        self.pool = AdaptiveAvgPool2d(cfg.pool_size, cfg.pool_size)
        self.flatten = Flatten()
        self.fc1 = Linear(in_c * cfg.pool_size * cfg.pool_size, cfg.hidden_units)
        self.fc_act = LeakyReLU(0.2)
        self.fc2 = Linear(cfg.hidden_units, 1)
        self.sig = Sigmoid()

    def forward(self, x, train: bool = False):
        wrap = isinstance(x, Tensor)
        data = x.data if wrap else np.asarray(x)
        if data.ndim != 4 or data.shape[1] != self.cfg.in_channels:
            raise ShapeError(
                f"discriminator expects (n, {self.cfg.in_channels}, h, w) input, got {data.shape}"
            )
        if data.size == 0:
            raise ShapeError("discriminator input must be non-empty")
        y = data
        for i, block in enumerate(self.blocks):
            y = _fwd(f"blocks.{i}", block, y, train)
        y = _fwd("pool", self.pool, y, train)
        y = _fwd("flatten", self.flatten, y, train)
        y = _fwd("fc1", self.fc1, y, train)
        y = _fwd("fc_act", self.fc_act, y, train)
        y = _fwd("fc2", self.fc2, y, train)
        return _fwd("sig", self.sig, y, train)

    def backward(self, gy):
        g = self.sig.backward(np.asarray(gy))
        g = self.fc2.backward(g)
        g = self.fc_act.backward(g)
        g = self.fc1.backward(g)
        g = self.flatten.backward(g)
        g = self.pool.backward(g)
        for block in reversed(list(self.blocks)):
            g = block.backward(g)
        return g


# ---------------------------------------------------------------------------
# Construction, initialization, audits
# ---------------------------------------------------------------------------


def init_weights(model: Layer, seed: int) -> None:
    """Kaiming-uniform fan-in init for conv/linear weights (gain sqrt(2), so
    sample variance is 2/fan_in); zero biases; BN to identity; PReLU slopes
    to 0.25. Fully determined by the seed and parameter order."""
    rng = np.random.default_rng(seed)
    for _, p in model.named_state():
        if p.kind in ("conv_weight", "linear_weight"):
            shape = p.data.shape
            fan_in = int(np.prod(shape[1:]))
            bound = math.sqrt(6.0 / fan_in)
            p.data[:] = rng.uniform(-bound, bound, size=shape).astype(np.float32)
        elif p.kind in ("conv_bias", "linear_bias", "bn_beta", "bn_running_mean"):
            p.data[:] = 0.0
        elif p.kind in ("bn_gamma", "bn_running_var"):
            p.data[:] = 1.0
        elif p.kind == "prelu_slope":
            p.data[:] = PRELU_INIT_SLOPE
        else:
            raise ShapeError(f"unknown parameter kind {p.kind!r}")


def build_generator(cfg: GeneratorConfig | None = None, seed: int = 0,
                    variant: str = "dsconv") -> Generator:
    model = Generator(cfg or GeneratorConfig(), variant=variant)
    init_weights(model, seed)
    return model


def build_standard_conv_twin(cfg: GeneratorConfig | None = None, seed: int = 0) -> Generator:
    """Same topology with every separable conv replaced by a dense one of the
    same (kernel, in, out, stride); exists for comparison, not deployment."""
    return build_generator(cfg, seed=seed, variant="standard")


def build_discriminator(cfg: DiscriminatorConfig | None = None, seed: int = 0) -> Discriminator:
    model = Discriminator(cfg or DiscriminatorConfig())
    init_weights(model, seed)
    return model


def count_parameters(model: Layer, include_biases: bool = True, conv_only: bool = False) -> int:
    """Element count of selected trainable parameters."""
    total = 0
    for _, p in model.named_parameters():
        if p.kind in ("conv_bias", "linear_bias"):
            if not include_biases:
                continue
            if conv_only and p.kind != "conv_bias":
                continue
        elif conv_only and p.kind != "conv_weight":
            continue
        total += p.data.size
    return total


def parameter_table(model: Layer) -> list[tuple[str, str, tuple, int]]:
    """(name, kind, shape, count) per trainable parameter, in graph order."""
    return [
        (name, p.kind, tuple(p.data.shape), p.data.size)
        for name, p in model.named_parameters()
    ]
