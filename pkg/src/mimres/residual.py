"""Residual generation: amplified reconstruction differences and block selection.

A residual block is ``clamp(alpha * (reconstructed - original))``. Four
generator kinds produce them: the masked inpainter (one inference per
block), a whole-image autoencoder, a fixed high-pass filter, and NONE
(original blocks only, no residuals).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import torch
from scipy.ndimage import convolve as nd_convolve

from .autoencoder import AutoencoderModel, reconstruct
from .blocks import BlockGrid, ImageSample, assemble, block_positions, divide_pixels
from .errors import InputError
from .inpainter import InpainterModel, inpaint_batch, samples_to_tensor

LAPLACIAN_KERNEL = np.array([[0.0, -1.0, 0.0],
                             [-1.0, 4.0, -1.0],
                             [0.0, -1.0, 0.0]])


@dataclass(frozen=True)
class AmplificationConfig:
    alpha: float = 4.0
    clamp_low: float = -1.0
    clamp_high: float = 1.0

    def __post_init__(self):
        if self.alpha <= 0:
            raise InputError(f"alpha must be > 0, got {self.alpha}")
        if self.clamp_low >= self.clamp_high:
            raise InputError(f"clamp_low {self.clamp_low} must be < clamp_high {self.clamp_high}")


@dataclass(frozen=True)
class BlockSelection:
    p: float
    indices: list[int]
    redraws: int = 0

    def __post_init__(self):
        if not 0.0 < self.p <= 1.0:
            raise InputError(f"selection probability must be in (0, 1], got {self.p}")
        if not self.indices:
            raise InputError("block selection must be non-empty")
        if any(b <= a for a, b in zip(self.indices, self.indices[1:])):
            raise InputError("selection indices must be strictly increasing")


class ResidualKind(enum.Enum):
    MIM = "mim"
    AUTOENCODER = "autoencoder"
    HIGHPASS = "highpass"
    NONE = "none"


def residual_block(reconstructed: np.ndarray, original: np.ndarray,
                   amp: AmplificationConfig) -> np.ndarray:
    """Elementwise alpha * (reconstructed - original), clamped."""
    if reconstructed.shape != original.shape:
        raise InputError(f"block shapes differ: {reconstructed.shape} vs {original.shape}")
    r = amp.alpha * (reconstructed.astype(np.float32) - original.astype(np.float32))
    return np.clip(r, amp.clamp_low, amp.clamp_high)


def select_blocks(grid: BlockGrid, p: float, rng: np.random.Generator) -> BlockSelection:
    """Independent Bernoulli(p) per block index; empty draws are redrawn."""
    if not 0.0 < p <= 1.0:
        raise InputError(f"selection probability must be in (0, 1], got {p}")
    redraws = 0
    while True:
        picked = np.nonzero(rng.random(grid.block_count) < p)[0]
        if picked.size:
            return BlockSelection(p=p, indices=[int(i) + 1 for i in picked], redraws=redraws)
        redraws += 1


def highpass_residual(image: ImageSample, grid: BlockGrid,
                      amp: AmplificationConfig = AmplificationConfig()) -> list[np.ndarray]:
    """Laplacian-filtered image (reflect padding), amplified and clamped, split into blocks."""
    filtered = highpass_full(image, amp)
    return divide_pixels(filtered, grid)


def highpass_full(image: ImageSample, amp: AmplificationConfig) -> np.ndarray:
    px = image.pixels.astype(np.float64)
    out = np.empty_like(px)
    for c in range(3):
        out[:, :, c] = nd_convolve(px[:, :, c], LAPLACIAN_KERNEL, mode="reflect")
    return np.clip(amp.alpha * out, amp.clamp_low, amp.clamp_high).astype(np.float32)


def ae_residual(ae: AutoencoderModel, image: ImageSample, grid: BlockGrid,
                amp: AmplificationConfig = AmplificationConfig()) -> list[np.ndarray]:
    """Amplified difference between the autoencoder reconstruction and the image,
    clamped and split into blocks."""
    recon = reconstruct(ae, samples_to_tensor([image]))[0].permute(1, 2, 0).numpy()
    return [residual_block(rec, orig, amp)
            for rec, orig in zip(divide_pixels(recon, grid), divide_pixels(image.pixels, grid))]


class ResidualGenerator:
    """Produces residual blocks for selected indices of an image."""

    kind: ResidualKind

    def full_residual(self, image: ImageSample, grid: BlockGrid,
                      amp: AmplificationConfig) -> np.ndarray:
        """Residual image assembled from all blocks in order."""
        blocks = self.batch_residuals([image], [list(range(1, grid.block_count + 1))], grid, amp)[0]
        return assemble(blocks, grid)

    def batch_residuals(self, samples: list[ImageSample], selections: list[list[int]],
                        grid: BlockGrid, amp: AmplificationConfig) -> list[list[np.ndarray]]:
        raise NotImplementedError


class MimResidualGenerator(ResidualGenerator):
    kind = ResidualKind.MIM

    def __init__(self, model: InpainterModel):
        self.model = model

    def batch_residuals(self, samples, selections, grid, amp):
        pairs = [(i, j) for i, sel in enumerate(selections) for j in sel]
        if not pairs:
            return [[] for _ in samples]
        images = samples_to_tensor(samples)
        img_idx = torch.tensor([i for i, _ in pairs])
        js = torch.tensor([j for _, j in pairs])
        pred = inpaint_batch(self.model, images[img_idx], js, grid).numpy()
        out: list[list[np.ndarray]] = [[] for _ in samples]
        bs = grid.block_side
        for (i, j), rec in zip(pairs, pred):
            y0, x0 = grid.block_origin(j)
            orig = samples[i].pixels[y0:y0 + bs, x0:x0 + bs]
            out[i].append(residual_block(rec, orig, amp))
        return out


class AutoencoderResidualGenerator(ResidualGenerator):
    kind = ResidualKind.AUTOENCODER

    def __init__(self, model: AutoencoderModel):
        self.model = model

    def batch_residuals(self, samples, selections, grid, amp):
        recon = reconstruct(self.model, samples_to_tensor(samples)).permute(0, 2, 3, 1).numpy()
        out: list[list[np.ndarray]] = []
        bs = grid.block_side
        for i, sel in enumerate(selections):
            rows = []
            for j in sel:
                y0, x0 = grid.block_origin(j)
                rows.append(residual_block(recon[i, y0:y0 + bs, x0:x0 + bs],
                                           samples[i].pixels[y0:y0 + bs, x0:x0 + bs], amp))
            out.append(rows)
        return out


class HighpassResidualGenerator(ResidualGenerator):
    kind = ResidualKind.HIGHPASS

    def batch_residuals(self, samples, selections, grid, amp):
        out: list[list[np.ndarray]] = []
        bs = grid.block_side
        for sample, sel in zip(samples, selections):
            filtered = highpass_full(sample, amp)
            rows = []
            for j in sel:
                y0, x0 = grid.block_origin(j)
                rows.append(filtered[y0:y0 + bs, x0:x0 + bs].copy())
            out.append(rows)
        return out


class NoneResidualGenerator(ResidualGenerator):
    """Original blocks only; residual output is omitted."""

    kind = ResidualKind.NONE

    def full_residual(self, image, grid, amp):
        raise InputError("generator kind NONE produces no residuals")

    def batch_residuals(self, samples, selections, grid, amp):
        return [[] for _ in samples]


class CachedResidualGenerator(ResidualGenerator):
    """Wraps a generator with a per-sample cache of all-block residuals.

    Residual blocks are deterministic given a frozen backing model, so for a
    fixed sample set they can be computed once and served by lookup. Unknown
    samples or a different grid/amplification fall through to the inner
    generator.
    """

    def __init__(self, inner: ResidualGenerator, samples: list[ImageSample],
                 grid: BlockGrid, amp: AmplificationConfig, chunk: int = 16):
        self.kind = inner.kind
        self.inner = inner
        self._grid = grid
        self._amp = amp
        all_indices = list(range(1, grid.block_count + 1))
        self._cache: dict[str, list[np.ndarray]] = {}
        for start in range(0, len(samples), chunk):
            part = samples[start:start + chunk]
            blocks = inner.batch_residuals(part, [all_indices] * len(part), grid, amp)
            for s, b in zip(part, blocks):
                self._cache[s.sample_id] = b

    def full_residual(self, image, grid, amp):
        return self.inner.full_residual(image, grid, amp)

    def batch_residuals(self, samples, selections, grid, amp):
        if grid != self._grid or amp != self._amp or \
                any(s.sample_id not in self._cache for s in samples):
            return self.inner.batch_residuals(samples, selections, grid, amp)
        return [[self._cache[s.sample_id][j - 1] for j in sel]
                for s, sel in zip(samples, selections)]


@dataclass
class TrainingInput:
    residual_blocks: list[np.ndarray]
    original_blocks: list[np.ndarray]
    positions: list[tuple[int, tuple[int, int]]]
    selection: BlockSelection | None = field(repr=False, default=None)


def generate_training_input(
    gen: ResidualGenerator,
    image: ImageSample,
    grid: BlockGrid,
    p: float,
    amp: AmplificationConfig,
    rng: np.random.Generator,
) -> TrainingInput:
    """Select blocks with Bernoulli(p) and produce (residual, original) pairs.

    Positions carry (block index, pixel offset) for the detector's positional
    embeddings. For generator kind NONE the residual list is empty.
    """
    selection = select_blocks(grid, p, rng)
    residuals = gen.batch_residuals([image], [selection.indices], grid, amp)[0]
    bs = grid.block_side
    originals = []
    for j in selection.indices:
        y0, x0 = grid.block_origin(j)
        originals.append(image.pixels[y0:y0 + bs, x0:x0 + bs].copy())
    return TrainingInput(
        residual_blocks=residuals,
        original_blocks=originals,
        positions=block_positions(grid, selection.indices),
        selection=selection,
    )


def generate_full_residual(gen: ResidualGenerator, image: ImageSample, grid: BlockGrid,
                           amp: AmplificationConfig) -> np.ndarray:
    """Residual for every block in order, assembled into a full image."""
    return gen.full_residual(image, grid, amp)
