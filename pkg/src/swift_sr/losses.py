"""Training losses and the frozen feature extractor behind the content term.

The content loss measures squared distance between feature maps of the
reference and generated images, normalized by the spatial size of the
feature tensor. By default it is additionally averaged over batch and
channels so its magnitude does not depend on extractor width; the literal
spatial-only normalization is available via ``per_channel_sum=True``.

The adversarial term is the negative log of the discriminator's probability
on generated images, summed over the batch (``reduce="mean"`` averages
instead). The combined objective is ``content + adv_weight * adversarial``
with ``adv_weight`` defaulting to 1e-3.

At desk scale the extractor is a fixed, seeded, randomly initialized stack
of standard conv + ReLU6 blocks (random-feature perceptual proxy); weights
exported from a pretrained backbone can be loaded from the checkpoint
format instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .models import Conv2d, Layer, LayerList, ReLU6, init_weights
from .tensor import Tensor

DEFAULT_ADV_WEIGHT = 1e-3


@dataclass
class FeatureExtractorConfig:
    channels: tuple = (16, 32, 64, 64)
    strides: tuple = (2, 2, 1, 2)
    kernel_size: int = 3
    in_channels: int = 3
    tap_index: int | None = None  # defaults to the last block
    seed: int = 2024

    def __post_init__(self):
        self.channels = tuple(int(c) for c in self.channels)
        self.strides = tuple(int(s) for s in self.strides)
        if len(self.channels) != len(self.strides) or not self.channels:
            raise ShapeError("channels and strides must be equal-length, non-empty")
        if self.tap_index is None:
            self.tap_index = len(self.channels)
        if not 0 <= self.tap_index <= len(self.channels):
            raise ShapeError(
                f"tap_index {self.tap_index} out of range for {len(self.channels)} blocks"
            )


class _FxBlock(Layer):
    def __init__(self, in_c, out_c, k, stride):
        super().__init__()
        self.conv = Conv2d(in_c, out_c, k, stride)
        self.act = ReLU6()

    def forward(self, x, train: bool = False):
        return self.act.forward(self.conv.forward(x, train), train)

    def backward(self, gy):
        return self.conv.backward(self.act.backward(gy))


class FeatureExtractor(Layer):
    """Frozen conv/ReLU6 stack; emits the post-activation output of the
    block selected by ``tap_index`` (0 means the input passes through)."""

    def __init__(self, cfg: FeatureExtractorConfig | None = None):
        super().__init__()
        self.cfg = cfg or FeatureExtractorConfig()
        blocks = []
        in_c = self.cfg.in_channels
        for out_c, stride in zip(self.cfg.channels, self.cfg.strides):
            blocks.append(_FxBlock(in_c, out_c, self.cfg.kernel_size, stride))
            in_c = out_c
        self.blocks = LayerList(blocks)
        init_weights(self, self.cfg.seed)
        # Frozen: gradient accumulation is disabled outright, so training can
        # backpropagate through the extractor without ever touching it.
        for _, p in self.named_state():
            p.trainable = False

    @property
    def tap_index(self) -> int:
        return self.cfg.tap_index

    def forward(self, img, train: bool = False):
        wrap = isinstance(img, Tensor)
        x = img.data if wrap else np.asarray(img)
        if x.ndim != 4 or x.shape[1] != self.cfg.in_channels:
            raise ShapeError(
                f"feature extractor expects (n, {self.cfg.in_channels}, h, w), got {x.shape}"
            )
        for i, block in enumerate(self.blocks):
            if i >= self.cfg.tap_index:
                break
            x = block.forward(x, train)
        return Tensor(x) if wrap else x

    def backward(self, gfeat):
        """Propagate a feature-space gradient back to image space.

        The extractor's own parameters accumulate nothing; only the input
        gradient flows out.
        """
        g = gfeat.data if isinstance(gfeat, Tensor) else np.asarray(gfeat)
        used = list(self.blocks)[: self.cfg.tap_index]
        for block in reversed(used):
            g = block.backward(g)
        return g

    def load_weights(self, path) -> None:
        from .checkpoint import load_state_into, read_checkpoint

        load_state_into(self, read_checkpoint(path))


def feature_extract(fx: FeatureExtractor, img) -> Tensor:
    """Eval-mode tap of the extractor, wrapped for metric/loss consumers."""
    out = fx.forward(img, train=False)
    return out if isinstance(out, Tensor) else Tensor(out)


# ---------------------------------------------------------------------------
# Loss terms
# ---------------------------------------------------------------------------


def _feat(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x)


def content_loss(phi_hr, phi_sr, per_channel_sum: bool = False) -> float:
    """Squared feature distance, normalized by spatial size.

    Default divides additionally by batch and channel count; with
    ``per_channel_sum=True`` only the spatial normalization is applied.
    """
    a, b = _feat(phi_hr), _feat(phi_sr)
    if a.shape != b.shape:
        raise ShapeError(f"feature shapes differ: {a.shape} vs {b.shape}")
    n, c, h, w = a.shape
    diff = a.astype(np.float64) - b.astype(np.float64)
    total = float(np.sum(diff * diff)) / (h * w)
    if not per_channel_sum:
        total /= n * c
    return total


def content_loss_grad(phi_hr, phi_sr, per_channel_sum: bool = False) -> np.ndarray:
    """d(content_loss)/d(phi_sr)."""
    a, b = _feat(phi_hr), _feat(phi_sr)
    if a.shape != b.shape:
        raise ShapeError(f"feature shapes differ: {a.shape} vs {b.shape}")
    n, c, h, w = a.shape
    scale = 2.0 / (h * w)
    if not per_channel_sum:
        scale /= n * c
    return ((b - a) * np.asarray(scale, dtype=b.dtype)).astype(b.dtype)


def _probs_1d(probs) -> np.ndarray:
    p = np.asarray(_feat(probs), dtype=np.float64).reshape(-1)
    if p.size == 0:
        raise ShapeError("empty probability batch")
    if np.any((p <= 0) | (p >= 1)):
        raise ShapeError("probabilities must lie strictly inside (0, 1)")
    return p


def adversarial_loss(d_fake_probs, reduce: str = "sum") -> float:
    """Negative log-probability that generated images pass as real."""
    p = _probs_1d(d_fake_probs)
    total = float(-np.log(p).sum())
    if reduce == "mean":
        return total / p.size
    if reduce == "sum":
        return total
    raise ShapeError(f"unknown reduction {reduce!r}")


def adversarial_loss_grad(d_fake_probs, reduce: str = "sum") -> np.ndarray:
    """d(adversarial_loss)/d(probs), same shape as the input batch."""
    p = _probs_1d(d_fake_probs)
    g = -1.0 / p
    if reduce == "mean":
        g /= p.size
    return g.astype(np.float32).reshape(np.asarray(_feat(d_fake_probs)).shape)


def perceptual_loss(content: float, adversarial: float, adv_weight: float = DEFAULT_ADV_WEIGHT) -> float:
    """Weighted sum of the content term and the adversarial term."""
    value = content + adv_weight * adversarial
    if not math.isfinite(value):
        raise ShapeError(
            f"non-finite perceptual loss from content={content}, adversarial={adversarial}"
        )
    return value


def discriminator_loss(d_real_probs, d_fake_probs) -> float:
    """Binary cross-entropy: real images toward 1, generated toward 0."""
    real = _probs_1d(d_real_probs)
    fake = _probs_1d(d_fake_probs)
    if real.size != fake.size:
        raise ShapeError(f"batch size mismatch: {real.size} real vs {fake.size} fake")
    return float(np.mean(-np.log(real) - np.log(1.0 - fake)))


def bce_real_grad(d_real_probs) -> np.ndarray:
    """d(discriminator_loss)/d(real probs); each half of the mean BCE is
    independent of the other, so the two gradients can be taken separately."""
    p = _probs_1d(d_real_probs)
    g = -1.0 / p / p.size
    return g.astype(np.float32).reshape(np.asarray(_feat(d_real_probs)).shape)


def bce_fake_grad(d_fake_probs) -> np.ndarray:
    """d(discriminator_loss)/d(generated probs)."""
    p = _probs_1d(d_fake_probs)
    g = 1.0 / (1.0 - p) / p.size
    return g.astype(np.float32).reshape(np.asarray(_feat(d_fake_probs)).shape)


def discriminator_loss_grads(d_real_probs, d_fake_probs) -> tuple[np.ndarray, np.ndarray]:
    """(d_loss/d_real_probs, d_loss/d_fake_probs)."""
    real = _probs_1d(d_real_probs)
    fake = _probs_1d(d_fake_probs)
    if real.size != fake.size:
        raise ShapeError(f"batch size mismatch: {real.size} real vs {fake.size} fake")
    return bce_real_grad(d_real_probs), bce_fake_grad(d_fake_probs)


@dataclass
class LossReport:
    content: float
    adversarial: float
    perceptual: float
    discriminator: float
