"""Image I/O, augmentation, bicubic downsampling, and LR/HR pair batching.

Images travel as (1, 3, h, w) float32 tensors holding RGB values in
[0, 255]; batches handed to the networks are divided by 255 into [0, 1].
Two file formats are read and written: 8-bit RGB PNG (via Pillow) and
binary PPM (P6), the latter kept dependency-free so tests can fabricate
files byte by byte.

Resampling uses the Catmull-Rom cubic kernel (a = -0.5) with half-pixel
center alignment, computed separably per axis in float64. Samples beyond
the border are linearly extrapolated from the two edge samples, which
preserves constant and linear images exactly; no antialias prefilter is
applied when downscaling.
"""

from __future__ import annotations

import logging
import queue
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError, ShapeError
from .tensor import Tensor

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".ppm")


@dataclass
class Image:
    """An RGB image: (1, 3, h, w) tensor, values in [0, 255]."""

    tensor: Tensor
    path: str | None = None

    def __post_init__(self):
        n, c, h, w = self.tensor.shape
        if n != 1 or c != 3:
            raise ShapeError(f"image tensor must be (1, 3, h, w), got {self.tensor.shape}")
        if h < 1 or w < 1:
            raise ShapeError("image must have positive size")

    @property
    def h(self) -> int:
        return self.tensor.shape.h

    @property
    def w(self) -> int:
        return self.tensor.shape.w

    def channels_hw(self) -> np.ndarray:
        """(3, h, w) view of the pixel data."""
        return self.tensor.data[0]


@dataclass
class ImagePair:
    hr: Image
    lr: Image


@dataclass
class PipelineConfig:
    crop_size: int = 96
    scale: int = 4
    flip_prob: float = 0.5
    rot90_prob: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.crop_size % self.scale != 0:
            raise ConfigError(
                f"crop_size {self.crop_size} must be divisible by scale {self.scale}"
            )
        if self.scale < 1 or self.crop_size < 1:
            raise ConfigError("crop_size and scale must be positive")


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------


def _parse_ppm(blob: bytes, origin: str) -> np.ndarray:
    pos = 0

    def fail(msg):
        raise FormatError(f"{origin}: {msg} (byte offset {pos})", offset=pos)

    if blob[:2] != b"P6":
        fail(f"expected P6 magic, found {blob[:2]!r}")
    pos = 2

    def token():
        nonlocal pos
        while pos < len(blob):
            ch = blob[pos : pos + 1]
            if ch == b"#":
                while pos < len(blob) and blob[pos : pos + 1] != b"\n":
                    pos += 1
            elif ch.isspace():
                pos += 1
            else:
                break
        if pos >= len(blob):
            fail("truncated header")
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        return blob[start:pos]

    fields = []
    for name in ("width", "height", "maxval"):
        raw = token()
        try:
            fields.append(int(raw))
        except ValueError:
            fail(f"bad {name} field {raw!r}")
    w, h, maxval = fields
    if w < 1 or h < 1:
        fail(f"bad dimensions {w}x{h}")
    if maxval != 255:
        fail(f"only maxval 255 supported, found {maxval}")
    if pos >= len(blob):
        fail("missing separator after maxval")
    pos += 1  # exactly one whitespace byte separates header and pixels
    need = w * h * 3
    payload = blob[pos : pos + need]
    if len(payload) < need:
        pos += len(payload)
        fail(f"truncated pixel data: expected {need} bytes")
    arr = np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3)
    return arr


def load_image(path) -> Image:
    """Read an 8-bit RGB image (PNG or PPM P6) into the [0, 255] float range."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".ppm":
        arr = _parse_ppm(path.read_bytes(), str(path))
    elif suffix == ".png":
        from PIL import Image as PILImage

        try:
            with PILImage.open(path) as im:
                arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
        except Exception as e:
            raise FormatError(f"{path}: {e}") from None
    else:
        raise FormatError(f"{path}: unsupported image format {suffix!r}")
    chw = arr.astype(np.float32).transpose(2, 0, 1)[None]
    return Image(Tensor(chw), path=str(path))


def save_image(img: Image | Tensor, path) -> None:
    """Write as 8-bit RGB, clamping to [0, 255] and rounding half away from zero."""
    tensor = img.tensor if isinstance(img, Image) else img
    data = tensor.data
    if data.shape[0] != 1 or data.shape[1] != 3:
        raise ShapeError(f"expected a (1, 3, h, w) image tensor, got {tensor.shape}")
    pixels = np.clip(np.rint(data[0]), 0, 255).astype(np.uint8).transpose(1, 2, 0)
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".ppm":
        h, w = pixels.shape[:2]
        with open(path, "wb") as f:
            f.write(b"P6\n%d %d\n255\n" % (w, h))
            f.write(pixels.tobytes())
    elif suffix == ".png":
        from PIL import Image as PILImage

        PILImage.fromarray(pixels, mode="RGB").save(path, format="PNG")
    else:
        raise FormatError(f"{path}: unsupported image format {suffix!r}")


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------


def crop_offsets(img: Image, size: int, rng: np.random.Generator) -> tuple[int, int]:
    """Uniform (top, left) for a size x size crop; no draw when only (0, 0) fits."""
    if img.h < size or img.w < size:
        raise ShapeError(f"image {img.h}x{img.w} smaller than crop size {size}")
    top = int(rng.integers(0, img.h - size + 1)) if img.h > size else 0
    left = int(rng.integers(0, img.w - size + 1)) if img.w > size else 0
    return top, left


def random_crop(img: Image, size: int, rng: np.random.Generator) -> Image:
    top, left = crop_offsets(img, size, rng)
    window = img.tensor.data[:, :, top : top + size, left : left + size]
    return Image(Tensor(window.copy()), path=img.path)


def center_crop(img: Image, size: int) -> Image:
    if img.h < size or img.w < size:
        raise ShapeError(f"image {img.h}x{img.w} smaller than crop size {size}")
    top = (img.h - size) // 2
    left = (img.w - size) // 2
    window = img.tensor.data[:, :, top : top + size, left : left + size]
    return Image(Tensor(window.copy()), path=img.path)


def augment(img: Image, cfg: PipelineConfig, rng: np.random.Generator) -> Image:
    """Horizontal mirror then counterclockwise quarter turn, each by coin flip.

    Both draws are always consumed so the random stream does not depend on
    the probabilities. Rotation requires a square image.
    """
    do_flip = rng.random() < cfg.flip_prob
    do_rot = rng.random() < cfg.rot90_prob
    data = img.tensor.data
    if do_flip:
        data = data[:, :, :, ::-1]
    if do_rot:
        if img.h != img.w:
            raise ShapeError(f"rotation needs a square image, got {img.h}x{img.w}")
        data = np.rot90(data, k=1, axes=(2, 3))
    return Image(Tensor(np.ascontiguousarray(data)), path=img.path)


# ---------------------------------------------------------------------------
# Bicubic resampling
# ---------------------------------------------------------------------------


def _cubic_weight(t: np.ndarray) -> np.ndarray:
    """Catmull-Rom kernel (cubic convolution, a = -0.5)."""
    a = -0.5
    at = np.abs(t)
    at2 = at * at
    at3 = at2 * at
    near = (a + 2) * at3 - (a + 3) * at2 + 1
    far = a * at3 - 5 * a * at2 + 8 * a * at - 4 * a
    return np.where(at <= 1, near, np.where(at < 2, far, 0.0))


def _resize_axis(arr: np.ndarray, out_size: int, axis: int) -> np.ndarray:
    in_size = arr.shape[axis]
    if in_size == out_size:
        return arr
    positions = (np.arange(out_size) + 0.5) * (in_size / out_size) - 0.5
    base = np.floor(positions).astype(np.int64)
    frac = positions - base
    weights = np.stack([_cubic_weight(frac - k) for k in (-1, 0, 1, 2)], axis=1)
    weights /= weights.sum(axis=1, keepdims=True)

    moved = np.moveaxis(arr, axis, 0)
    first, second = moved[0], moved[1]
    last, prev = moved[-1], moved[-2]
    padded = np.concatenate(
        [
            (3 * first - 2 * second)[None],
            (2 * first - second)[None],
            moved,
            (2 * last - prev)[None],
            (3 * last - 2 * prev)[None],
        ],
        axis=0,
    )
    out = np.zeros((out_size,) + moved.shape[1:], dtype=arr.dtype)
    for i, k in enumerate((-1, 0, 1, 2)):
        taps = padded[base + k + 2]
        out += weights[:, i].reshape((-1,) + (1,) * (taps.ndim - 1)) * taps
    return np.moveaxis(out, 0, axis)


def resize_array(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Separable cubic resampling of a (..., h, w) array, in float64."""
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"target size must be positive, got {out_h}x{out_w}")
    if arr.shape[-2] < 2 or arr.shape[-1] < 2:
        raise ShapeError("resampling needs at least 2 samples per axis")
    work = arr.astype(np.float64)
    work = _resize_axis(work, out_h, axis=arr.ndim - 2)
    work = _resize_axis(work, out_w, axis=arr.ndim - 1)
    return work


def bicubic_resize(img: Image, out_h: int, out_w: int) -> Image:
    resized = resize_array(img.tensor.data, out_h, out_w)
    clipped = np.clip(resized, 0.0, 255.0).astype(np.float32)
    return Image(Tensor(clipped), path=img.path)


def make_pair(hr_img: Image, cfg: PipelineConfig, rng: np.random.Generator) -> ImagePair:
    """Random crop, augment, then bicubic downsample by the configured scale."""
    hr = augment(random_crop(hr_img, cfg.crop_size, rng), cfg, rng)
    lr = bicubic_resize(hr, cfg.crop_size // cfg.scale, cfg.crop_size // cfg.scale)
    return ImagePair(hr=hr, lr=lr)


# ---------------------------------------------------------------------------
# Batching
# ---------------------------------------------------------------------------


def discover_images(directory) -> list[Path]:
    directory = Path(directory)
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    return files


class PairBatcher:
    """Streams shuffled (lr, hr) batches from a directory of images.

    Each epoch reshuffles with the generator passed to :meth:`epoch`; the
    final short batch is emitted. Unreadable files are skipped with a
    warning and counted in ``skipped``. Batch tensors are normalized to
    [0, 1].
    """

    def __init__(self, directory, cfg: PipelineConfig, batch_size: int):
        self.files = discover_images(directory)
        if not self.files:
            raise ConfigError(f"no images found in {directory}")
        if batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        self.cfg = cfg
        self.batch_size = batch_size
        self.skipped = 0

    def _pairs(self, rng: np.random.Generator):
        order = rng.permutation(len(self.files))
        for idx in order:
            path = self.files[idx]
            try:
                img = load_image(path)
            except (FormatError, OSError) as e:
                self.skipped += 1
                log.warning("skipping unreadable image %s: %s", path, e)
                continue
            yield make_pair(img, self.cfg, rng)

    def _batches(self, rng: np.random.Generator):
        lr_parts, hr_parts = [], []
        for pair in self._pairs(rng):
            lr_parts.append(pair.lr.tensor.data)
            hr_parts.append(pair.hr.tensor.data)
            if len(lr_parts) == self.batch_size:
                yield self._stack(lr_parts, hr_parts)
                lr_parts, hr_parts = [], []
        if lr_parts:
            yield self._stack(lr_parts, hr_parts)

    @staticmethod
    def _stack(lr_parts, hr_parts):
        lr = np.concatenate(lr_parts, axis=0) / np.float32(255.0)
        hr = np.concatenate(hr_parts, axis=0) / np.float32(255.0)
        return Tensor(lr), Tensor(hr)

    def epoch(self, rng: np.random.Generator, prefetch: bool = False):
        """Iterate one epoch of batches; ``prefetch`` decodes ahead on a
        bounded queue without changing order or values."""
        if not prefetch:
            yield from self._batches(rng)
            return
        q: queue.Queue = queue.Queue(maxsize=2)
        done = object()

        def worker():
            try:
                for batch in self._batches(rng):
                    q.put(batch)
                q.put(done)
            except BaseException as e:  # surfaced on the consumer side
                q.put(e)

        thread = threading.Thread(target=worker, daemon=True)
        thread.start()
        while True:
            item = q.get()
            if item is done:
                break
            if isinstance(item, BaseException):
                raise item
            yield item
        thread.join()
