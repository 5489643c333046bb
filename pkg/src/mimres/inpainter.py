"""Masked-block inpainting model and its training loop.

The model is trained on real images only: each step masks one randomly
chosen grid block per image and reconstructs it from the visible remainder.
Masked patches are dropped before the encoder and represented by a shared
learned mask token in the decoder, so the reconstruction is a function of
visible pixels only, by construction.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterator

import numpy as np
import torch
import torch.nn as nn

from .blocks import BlockGrid, BlockMask, ImageSample, Label
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import InputError, NumericFailureError
from .schedule import TrainSchedule
from .transformer import Block, init_transformer_weights, patchify, sincos_pos_embed_2d

_MLP_RATIO = 4.0
_ADAM_BETAS = (0.9, 0.95)


@dataclass(frozen=True)
class InpainterConfig:
    image_side: int = 224
    patch_side: int = 8
    encoder_dim: int = 128
    encoder_layers: int = 4
    encoder_heads: int = 4
    decoder_dim: int = 64
    decoder_layers: int = 2
    decoder_heads: int = 4
    rng_seed: int = 0

    def __post_init__(self):
        if self.image_side % self.patch_side != 0:
            raise InputError(f"patch_side {self.patch_side} must divide image_side {self.image_side}")
        for dim, heads, tag in [(self.encoder_dim, self.encoder_heads, "encoder"),
                                (self.decoder_dim, self.decoder_heads, "decoder")]:
            if dim < 1 or heads < 1 or dim % heads != 0:
                raise InputError(f"{tag}_dim {dim} must be a positive multiple of {tag}_heads {heads}")

    @property
    def patch_grid_side(self) -> int:
        return self.image_side // self.patch_side

    @property
    def num_patches(self) -> int:
        return self.patch_grid_side ** 2


class InpainterModel(nn.Module):
    """MAE-style encoder/decoder that reconstructs one masked block per forward pass."""

    def __init__(self, config: InpainterConfig):
        super().__init__()
        self.config = config
        p, e, d = config.patch_side, config.encoder_dim, config.decoder_dim
        patch_dim = p * p * 3
        num = config.num_patches

        torch.manual_seed(config.rng_seed)
        self.patch_proj = nn.Linear(patch_dim, e)
        self.encoder_pos = nn.Parameter(torch.zeros(1, num, e))
        self.encoder_blocks = nn.ModuleList(
            Block(e, config.encoder_heads, _MLP_RATIO) for _ in range(config.encoder_layers))
        self.encoder_norm = nn.LayerNorm(e)

        self.decoder_embed = nn.Linear(e, d)
        self.mask_token = nn.Parameter(torch.zeros(1, 1, d))
        self.decoder_pos = nn.Parameter(torch.zeros(1, num, d))
        self.decoder_blocks = nn.ModuleList(
            Block(d, config.decoder_heads, _MLP_RATIO) for _ in range(config.decoder_layers))
        self.decoder_norm = nn.LayerNorm(d)
        self.output_proj = nn.Linear(d, patch_dim)

        self.apply(init_transformer_weights)
        g = config.patch_grid_side
        for pos, dim in [(self.encoder_pos, e), (self.decoder_pos, d)]:
            table = sincos_pos_embed_2d(dim, g)
            if table.abs().sum() > 0:
                with torch.no_grad():
                    pos.copy_(table[None])
            else:
                nn.init.trunc_normal_(pos, std=0.02)
        nn.init.trunc_normal_(self.mask_token, std=0.02)

    def _block_patch_ids(self, grid: BlockGrid, js: torch.Tensor) -> torch.Tensor:
        """Patch indices covered by block js (1-based), row-major; (B, q*q)."""
        cfg = self.config
        if grid.image_side != cfg.image_side:
            raise InputError(f"grid image_side {grid.image_side} != model image_side {cfg.image_side}")
        if grid.block_side % cfg.patch_side != 0:
            raise InputError(f"patch_side {cfg.patch_side} must divide block_side {grid.block_side}")
        q = grid.block_side // cfg.patch_side
        g = cfg.patch_grid_side
        br = (js - 1) // grid.k
        bc = (js - 1) % grid.k
        rr = torch.arange(q, dtype=torch.long)
        rows = br[:, None] * q + rr[None, :]                      # (B, q)
        cols = bc[:, None] * q + rr[None, :]                      # (B, q)
        ids = rows[:, :, None] * g + cols[:, None, :]              # (B, q, q)
        return ids.reshape(js.shape[0], q * q)

    def forward_blocks(self, images: torch.Tensor, js: torch.Tensor, grid: BlockGrid) -> torch.Tensor:
        """Reconstruct block js[i] of images[i]; returns (B, block_side, block_side, 3).

        images: (B, 3, S, S). The masked patches are gathered out before the
        encoder, so their pixel contents cannot influence the output.
        """
        cfg = self.config
        b = images.shape[0]
        num = cfg.num_patches
        masked_ids = self._block_patch_ids(grid, js)              # (B, m)
        m = masked_ids.shape[1]

        masked_bool = torch.zeros(b, num, dtype=torch.bool, device=images.device)
        masked_bool.scatter_(1, masked_ids, True)
        all_ids = torch.arange(num, device=images.device).expand(b, num)
        visible_ids = all_ids[~masked_bool].reshape(b, num - m)

        patches = patchify(images, cfg.patch_side)                 # (B, L, pd)
        vis_patches = torch.gather(patches, 1, visible_ids[..., None].expand(-1, -1, patches.shape[-1]))

        x = self.patch_proj(vis_patches)
        enc_pos = self.encoder_pos.expand(b, -1, -1)
        x = x + torch.gather(enc_pos, 1, visible_ids[..., None].expand(-1, -1, cfg.encoder_dim))
        for blk in self.encoder_blocks:
            x = blk(x)
        x = self.encoder_norm(x)

        x = self.decoder_embed(x)
        full = torch.zeros(b, num, cfg.decoder_dim, dtype=x.dtype, device=x.device)
        full.scatter_(1, visible_ids[..., None].expand(-1, -1, cfg.decoder_dim), x)
        mask_tok = self.mask_token.to(x.dtype).expand(b, m, -1)
        full = full.scatter(1, masked_ids[..., None].expand(-1, -1, cfg.decoder_dim), mask_tok)
        full = full + self.decoder_pos
        for blk in self.decoder_blocks:
            full = blk(full)
        full = self.decoder_norm(full)
        pred = self.output_proj(full)
        pred = torch.gather(pred, 1, masked_ids[..., None].expand(-1, -1, pred.shape[-1]))

        q = grid.block_side // cfg.patch_side
        p = cfg.patch_side
        pred = pred.reshape(b, q, q, p, p, 3).permute(0, 1, 3, 2, 4, 5)
        return pred.reshape(b, grid.block_side, grid.block_side, 3)

    def target_blocks(self, images: torch.Tensor, js: torch.Tensor, grid: BlockGrid) -> torch.Tensor:
        """Ground-truth pixels of block js[i], same layout as forward_blocks output."""
        bs = grid.block_side
        out = torch.empty(images.shape[0], bs, bs, 3, dtype=images.dtype, device=images.device)
        for i, j in enumerate(js.tolist()):
            y0, x0 = grid.block_origin(int(j))
            out[i] = images[i, :, y0:y0 + bs, x0:x0 + bs].permute(1, 2, 0)
        return out


def samples_to_tensor(samples: list[ImageSample], dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """Stack samples into a (B, 3, S, S) tensor."""
    arr = np.stack([s.pixels for s in samples])
    return torch.from_numpy(arr).to(dtype).permute(0, 3, 1, 2)


def pixels_to_tensor(pixels: np.ndarray, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(pixels)).to(dtype).permute(2, 0, 1).unsqueeze(0)


def rep_loss(reconstructed: np.ndarray, original: np.ndarray) -> float:
    """Mean squared difference over all block entries."""
    if reconstructed.shape != original.shape:
        raise InputError(f"block shapes differ: {reconstructed.shape} vs {original.shape}")
    diff = reconstructed.astype(np.float64) - original.astype(np.float64)
    return float(np.mean(diff * diff))


def _grid_for_mask(config: InpainterConfig, mask: BlockMask) -> BlockGrid:
    if mask.side != config.image_side:
        raise InputError(f"mask side {mask.side} != model image_side {config.image_side}")
    y0, x0, b = mask.zero_box()
    if config.image_side % b != 0:
        raise InputError(f"mask block side {b} does not divide image side {config.image_side}")
    grid = BlockGrid(k=config.image_side // b, image_side=config.image_side)
    if grid.block_origin(mask.j) != (y0, x0):
        raise InputError(f"mask zero region at {(y0, x0)} does not match block index {mask.j}")
    return grid


def inpaint(model: InpainterModel, image: ImageSample, mask: BlockMask) -> np.ndarray:
    """Reconstruct the masked block of an image; (block_side, block_side, 3) float32."""
    if image.side != model.config.image_side:
        raise InputError(f"image side {image.side} != model image_side {model.config.image_side}")
    grid = _grid_for_mask(model.config, mask)
    model.eval()
    with torch.no_grad():
        pred = model.forward_blocks(pixels_to_tensor(image.pixels), torch.tensor([mask.j]), grid)
    out = pred[0].numpy().astype(np.float32)
    if not np.isfinite(out).all():
        raise NumericFailureError(f"non-finite activation while inpainting {image.sample_id!r}")
    return out


def inpaint_batch(model: InpainterModel, images: torch.Tensor, js: torch.Tensor,
                  grid: BlockGrid, chunk: int = 256) -> torch.Tensor:
    """Batched inference over (image, block) pairs; returns (B, bs, bs, 3)."""
    model.eval()
    outs = []
    with torch.no_grad():
        for start in range(0, images.shape[0], chunk):
            outs.append(model.forward_blocks(images[start:start + chunk], js[start:start + chunk], grid))
    out = torch.cat(outs) if len(outs) > 1 else outs[0]
    if not torch.isfinite(out).all():
        raise NumericFailureError("non-finite activation during batched inpainting")
    return out


def reconstruct_full(model: InpainterModel, image: ImageSample, grid: BlockGrid) -> np.ndarray:
    """Inpaint every block in turn and assemble the full image, clamped to [0, 1]."""
    if grid.image_side != image.side:
        raise InputError(f"grid image_side {grid.image_side} != image side {image.side}")
    n = grid.block_count
    images = pixels_to_tensor(image.pixels).expand(n, -1, -1, -1)
    js = torch.arange(1, n + 1)
    pred = inpaint_batch(model, images, js, grid)
    out = np.empty((image.side, image.side, 3), dtype=np.float32)
    bs = grid.block_side
    for j in range(1, n + 1):
        y0, x0 = grid.block_origin(j)
        out[y0:y0 + bs, x0:x0 + bs] = pred[j - 1].numpy()
    return np.clip(out, 0.0, 1.0)


@dataclass
class TrainResult:
    model: nn.Module
    loss_trace: list[float]
    checkpoints: list[tuple[int, Path]] = field(default_factory=list)


def _assert_real_only(batch: list[ImageSample]) -> None:
    for s in batch:
        if s.label is not Label.REAL:
            raise InputError(
                f"representation training consumed a non-REAL sample {s.sample_id!r}; "
                "the training stream must contain real images only")


def train_inpainter(
    config: InpainterConfig,
    sched: TrainSchedule,
    real_stream: Iterator[list[ImageSample]],
    grid: BlockGrid,
    on_step: Callable[[int, InpainterModel], None] | None = None,
    checkpoint_dir: str | Path | None = None,
    checkpoint_every: int | None = None,
) -> TrainResult:
    """Train the inpainter on a stream of REAL-labelled batches.

    Each step draws one batch, samples one uniformly-random block index per
    image, reconstructs it and takes an AdamW step on the mean squared
    reconstruction error under the warmup+cosine schedule. Encountering a
    FAKE sample is a hard error; a non-finite loss aborts with the step.
    """
    model = InpainterModel(config)
    opt = torch.optim.AdamW(model.parameters(), lr=sched.base_lr, betas=_ADAM_BETAS,
                            weight_decay=sched.weight_decay)
    rng = np.random.default_rng(config.rng_seed)
    trace: list[float] = []
    checkpoints: list[tuple[int, Path]] = []

    model.train()
    for step in range(sched.total_steps):
        try:
            batch = next(real_stream)
        except StopIteration:
            raise InputError(f"training stream exhausted at step {step} of {sched.total_steps}") from None
        _assert_real_only(batch)

        images = samples_to_tensor(batch)
        js = torch.from_numpy(rng.integers(1, grid.block_count + 1, size=len(batch)))
        lr = sched.lr_at(step)
        for group in opt.param_groups:
            group["lr"] = lr

        pred = model.forward_blocks(images, js, grid)
        target = model.target_blocks(images, js, grid)
        loss = torch.mean((pred - target) ** 2)
        if not torch.isfinite(loss):
            raise NumericFailureError(f"non-finite reconstruction loss at step {step}", step=step)
        opt.zero_grad()
        loss.backward()
        opt.step()
        trace.append(loss.item())

        done = step + 1
        if checkpoint_dir is not None and checkpoint_every and \
                (done % checkpoint_every == 0 or done == sched.total_steps):
            path = save_inpainter(Path(checkpoint_dir) / f"step-{done:06d}", model, done, sched)
            checkpoints.append((done, path))
        if on_step is not None:
            on_step(done, model)

    model.eval()
    return TrainResult(model=model, loss_trace=trace, checkpoints=checkpoints)


def save_inpainter(directory: str | Path, model: InpainterModel, step: int,
                   sched: TrainSchedule | None = None) -> Path:
    params = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    return save_checkpoint(directory, role="inpainter", step=step,
                           config=asdict(model.config), params=params,
                           schedule=asdict(sched) if sched else None)


def load_inpainter(directory: str | Path) -> tuple[InpainterModel, int]:
    ckpt = load_checkpoint(directory, expected_role="inpainter")
    config = InpainterConfig(**ckpt.config)
    model = InpainterModel(config)
    state = {k: torch.from_numpy(v.copy()) for k, v in ckpt.params.items()}
    model.load_state_dict(state)
    model.eval()
    return model, ckpt.step
