"""Image samples, block-grid geometry and per-block masks.

Images are square RGB float32 arrays (H, W, 3) with values in [0, 1]. A
``BlockGrid`` splits the image into k*k equal square blocks in row-major
order; blocks are indexed 1..k*k. A ``BlockMask`` is a full-size binary
bitmap that is 0 exactly on one block and 1 everywhere else.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError


class Label(enum.Enum):
    REAL = "real"
    FAKE = "fake"


class Split(enum.Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


@dataclass(frozen=True)
class ImageSample:
    pixels: np.ndarray  # (side, side, 3) float32 in [0, 1]
    label: Label
    domain_tag: str
    sample_id: str

    def __post_init__(self):
        px = self.pixels
        if px.ndim != 3 or px.shape[2] != 3:
            raise InputError(f"sample {self.sample_id!r}: pixels must be (H, W, 3), got {px.shape}")
        if px.shape[0] != px.shape[1]:
            raise InputError(f"sample {self.sample_id!r}: image must be square, got {px.shape[0]}x{px.shape[1]}")
        if not self.domain_tag:
            raise InputError(f"sample {self.sample_id!r}: domain_tag must be non-empty")
        lo, hi = float(px.min(initial=0.0)), float(px.max(initial=0.0))
        if lo < 0.0 or hi > 1.0:
            raise InputError(f"sample {self.sample_id!r}: pixel values outside [0, 1] (min {lo}, max {hi})")

    @property
    def side(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class BlockGrid:
    k: int
    image_side: int
    block_side: int = field(init=False)

    def __post_init__(self):
        if self.k < 1:
            raise InputError(f"grid k must be >= 1, got {self.k}")
        if self.image_side < 1 or self.image_side % self.k != 0:
            raise InputError(f"k={self.k} must divide image_side={self.image_side} exactly")
        object.__setattr__(self, "block_side", self.image_side // self.k)

    @property
    def block_count(self) -> int:
        return self.k * self.k

    def block_origin(self, j: int) -> tuple[int, int]:
        """Top-left (row, col) pixel of block j under row-major ordering, j in 1..k*k."""
        self._check_index(j)
        row = (j - 1) // self.k
        col = (j - 1) % self.k
        return row * self.block_side, col * self.block_side

    def block_index_of_pixel(self, y: int, x: int) -> int:
        """1-based block index containing pixel (x, y)."""
        return (y // self.block_side) * self.k + (x // self.block_side) + 1

    def _check_index(self, j: int) -> None:
        if not 1 <= j <= self.block_count:
            raise InputError(f"block index {j} out of range 1..{self.block_count}")


@dataclass(frozen=True)
class BlockMask:
    j: int
    bitmap: np.ndarray  # (side, side) uint8, 0 inside block j, 1 elsewhere

    @property
    def side(self) -> int:
        return self.bitmap.shape[0]

    def zero_box(self) -> tuple[int, int, int]:
        """(y0, x0, block_side) of the masked square."""
        ys, xs = np.nonzero(self.bitmap == 0)
        if ys.size == 0:
            raise InputError("mask has no zero region")
        y0, x0 = int(ys.min()), int(xs.min())
        b = int(ys.max()) - y0 + 1
        if b != int(xs.max()) - x0 + 1 or ys.size != b * b:
            raise InputError("mask zero region is not a square block")
        return y0, x0, b


def divide(image: ImageSample, grid: BlockGrid) -> list[np.ndarray]:
    """Split an image into k*k blocks in row-major order.

    Each block is a (block_side, block_side, 3) view-copy; assembling the
    returned list with :func:`assemble` reproduces the input bit-exactly.
    """
    if grid.image_side != image.side:
        raise InputError(f"grid image_side {grid.image_side} != image side {image.side}")
    return divide_pixels(image.pixels, grid)


def divide_pixels(pixels: np.ndarray, grid: BlockGrid) -> list[np.ndarray]:
    if pixels.shape[0] != grid.image_side or pixels.shape[1] != grid.image_side:
        raise InputError(f"grid image_side {grid.image_side} != array shape {pixels.shape[:2]}")
    b = grid.block_side
    out = []
    for j in range(1, grid.block_count + 1):
        y0, x0 = grid.block_origin(j)
        out.append(pixels[y0:y0 + b, x0:x0 + b].copy())
    return out

def assemble(blocks: list[np.ndarray], grid: BlockGrid) -> np.ndarray:
    """Inverse of :func:`divide`: place k*k blocks back at their grid positions."""
    if len(blocks) != grid.block_count:
        raise InputError(f"expected {grid.block_count} blocks, got {len(blocks)}")
    b = grid.block_side
    channels = blocks[0].shape[2] if blocks[0].ndim == 3 else None
    shape = (grid.image_side, grid.image_side) if channels is None else (grid.image_side, grid.image_side, channels)
    out = np.empty(shape, dtype=blocks[0].dtype)
    for j, blk in enumerate(blocks, start=1):
        if blk.shape[0] != b or blk.shape[1] != b:
            raise InputError(f"block {j} has side {blk.shape[:2]}, expected {b}")
        y0, x0 = grid.block_origin(j)
        out[y0:y0 + b, x0:x0 + b] = blk
    return out


def make_mask(j: int, grid: BlockGrid) -> BlockMask:
    """Binary bitmap that is 0 exactly on block j and 1 elsewhere."""
    grid._check_index(j)
    bitmap = np.ones((grid.image_side, grid.image_side), dtype=np.uint8)
    y0, x0 = grid.block_origin(j)
    b = grid.block_side
    bitmap[y0:y0 + b, x0:x0 + b] = 0
    return BlockMask(j=j, bitmap=bitmap)


def block_positions(grid: BlockGrid, indices: list[int]) -> list[tuple[int, tuple[int, int]]]:
    """(block index, (y offset, x offset)) pairs for the given indices."""
    return [(j, grid.block_origin(j)) for j in indices]
