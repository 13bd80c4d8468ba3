"""Rank-4 NCHW tensor container and the primitives everything else builds on.

Runtime values are 32-bit floats in C-contiguous NCHW order. The container
permits zero-sized shapes; constructors of actual model inputs reject them.
Tensors should be treated as immutable once constructed; only optimizer
updates mutate parameter storage, and those never flow through this module.

Reductions accumulate in flat-index-ascending order (numpy's deterministic
pairwise scheme over the flattened buffer), so results are reproducible
across runs and thread counts.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import NonFiniteError, ShapeError


class Shape(NamedTuple):
    """Batch, channel, height, width extents of an NCHW tensor."""

    n: int
    c: int
    h: int
    w: int

    @property
    def count(self) -> int:
        return self.n * self.c * self.h * self.w

    def index(self, n: int, c: int, h: int, w: int) -> int:
        """Flat offset of element (n, c, h, w) in row-major NCHW order."""
        if not (0 <= n < self.n and 0 <= c < self.c and 0 <= h < self.h and 0 <= w < self.w):
            raise IndexError(f"coordinates ({n},{c},{h},{w}) out of bounds for {self}")
        return ((n * self.c + c) * self.h + h) * self.w + w

    def coords(self, index: int) -> tuple[int, int, int, int]:
        """Inverse of :meth:`index`."""
        if not 0 <= index < self.count:
            raise IndexError(f"flat index {index} out of bounds for {self}")
        index, w = divmod(index, self.w)
        index, h = divmod(index, self.h)
        n, c = divmod(index, self.c)
        return n, c, h, w


class Tensor:
    """A dense float32 NCHW array. Thin, validated wrapper over numpy."""

    __slots__ = ("data",)

    def __init__(self, data):
        arr = np.ascontiguousarray(data, dtype=np.float32)
        if arr.ndim != 4:
            raise ShapeError(f"tensor must be rank 4 (NCHW), got rank {arr.ndim}")
        self.data = arr

    @property
    def shape(self) -> Shape:
        return Shape(*self.data.shape)

    @property
    def count(self) -> int:
        return self.data.size

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        n, c, h, w = self.data.shape
        return f"Tensor(n={n}, c={c}, h={h}, w={w})"


def full(shape: Shape | tuple[int, int, int, int], value: float) -> Tensor:
    """A tensor with every element equal to ``value``."""
    shape = Shape(*shape)
    if shape.count <= 0:
        raise ShapeError(f"cannot construct a value-filled tensor with empty shape {shape}")
    return Tensor(np.full(shape, np.float32(value), dtype=np.float32))


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; shapes must match exactly."""
    if a.data.shape != b.data.shape:
        raise ShapeError(f"shape mismatch in add: {a.shape} vs {b.shape}")
    return Tensor(a.data + b.data)


def reduce_mean(a: Tensor) -> float:
    """Arithmetic mean of all elements.

    Accumulates in float64 and rounds once to float32, so the mean of a
    constant tensor is that constant, bit for bit.
    """
    if a.count == 0:
        raise ShapeError("mean of an empty tensor is undefined")
    return float(np.float32(a.data.mean(dtype=np.float64)))


def validate_finite(a: Tensor) -> None:
    """Raise :class:`NonFiniteError` if any element is NaN or Inf."""
    finite = np.isfinite(a.data)
    if finite.all():
        return
    index = int(np.argmin(finite.reshape(-1)))
    value = a.data.reshape(-1)[index]
    raise NonFiniteError(
        f"non-finite value {value!r} at flat index {index} (coords {a.shape.coords(index)})",
        index=index,
    )
