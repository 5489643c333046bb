"""Dual-branch transformer classifier over paired original/residual blocks.

Each branch is an independent transformer with its own class token and its
own positional table indexed by absolute patch position in the full image,
so a block contributes the same tokens no matter which subset it arrives
in. The two class tokens are merged into a single two-way prediction.
"""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterator

import numpy as np
import torch
import torch.nn as nn

from .blocks import BlockGrid, ImageSample, Label, divide_pixels
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import InputError, NumericFailureError
from .residual import AmplificationConfig, ResidualGenerator, ResidualKind, select_blocks
from .schedule import TrainSchedule
from .transformer import Block, init_transformer_weights, sincos_pos_embed_2d

LOG_EPS = 1e-12
_MLP_RATIO = 4.0


class MergeMode(enum.Enum):
    CONCAT_LINEAR = "concat_linear"
    SUM = "sum"


@dataclass(frozen=True)
class DetectorConfig:
    image_side: int = 224
    patch_side: int = 8
    embed_dim: int = 64
    layers: int = 4
    heads: int = 4
    merge: MergeMode = MergeMode.CONCAT_LINEAR
    dropout: float = 0.0
    use_original: bool = True
    use_residual: bool = True
    rng_seed: int = 0

    def __post_init__(self):
        if self.image_side % self.patch_side != 0:
            raise InputError(f"patch_side {self.patch_side} must divide image_side {self.image_side}")
        if self.embed_dim < 1 or self.embed_dim % self.heads != 0:
            raise InputError(f"embed_dim {self.embed_dim} must be a positive multiple of heads {self.heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise InputError(f"dropout must be in [0, 1), got {self.dropout}")
        if not (self.use_original or self.use_residual):
            raise InputError("at least one branch must be enabled")

    @property
    def patch_grid_side(self) -> int:
        return self.image_side // self.patch_side


@dataclass(frozen=True)
class Prediction:
    probs: np.ndarray  # (2,): (P_real, P_fake)

    def __post_init__(self):
        if self.probs.shape != (2,):
            raise InputError(f"prediction must have 2 components, got shape {self.probs.shape}")
        total = float(self.probs.sum())
        if abs(total - 1.0) > 1e-6:
            raise InputError(f"prediction probabilities sum to {total}, not 1")

    @property
    def p_fake(self) -> float:
        return float(self.probs[1])


class _Branch(nn.Module):
    def __init__(self, config: DetectorConfig):
        super().__init__()
        patch_dim = config.patch_side ** 2 * 3
        e = config.embed_dim
        self.patch_proj = nn.Linear(patch_dim, e)
        self.cls_token = nn.Parameter(torch.zeros(1, 1, e))
        self.pos_table = nn.Parameter(torch.zeros(1, config.patch_grid_side ** 2, e))
        self.drop = nn.Dropout(config.dropout)
        self.blocks = nn.ModuleList(
            Block(e, config.heads, _MLP_RATIO, config.dropout) for _ in range(config.layers))
        self.norm = nn.LayerNorm(e)

    def forward(self, tokens: torch.Tensor, pos_ids: torch.Tensor,
                pad_mask: torch.Tensor | None) -> torch.Tensor:
        """tokens: (B, N, patch_dim); pos_ids: (B, N); pad_mask True at padding. Returns (B, E)."""
        b = tokens.shape[0]
        x = self.patch_proj(tokens)
        pos = self.pos_table.expand(b, -1, -1)
        x = x + torch.gather(pos, 1, pos_ids[..., None].expand(-1, -1, x.shape[-1]))
        cls = self.cls_token.to(x.dtype).expand(b, 1, -1)
        x = torch.cat([cls, x], dim=1)
        if pad_mask is not None:
            pad_mask = torch.cat([torch.zeros(b, 1, dtype=torch.bool, device=x.device), pad_mask], dim=1)
        x = self.drop(x)
        for blk in self.blocks:
            x = blk(x, pad_mask)
        return self.norm(x)[:, 0]


class DualBranchModel(nn.Module):
    def __init__(self, config: DetectorConfig):
        super().__init__()
        self.config = config
        torch.manual_seed(config.rng_seed)
        self.branch_original = _Branch(config)
        self.branch_residual = _Branch(config)
        head_in = config.embed_dim * (2 if config.merge is MergeMode.CONCAT_LINEAR else 1)
        self.merge_head = nn.Linear(head_in, 2)
        self.apply(init_transformer_weights)
        pos_init = sincos_pos_embed_2d(config.embed_dim, config.patch_grid_side)
        for branch in (self.branch_original, self.branch_residual):
            nn.init.trunc_normal_(branch.cls_token, std=0.02)
            if pos_init.abs().sum() > 0:
                with torch.no_grad():
                    branch.pos_table.copy_(pos_init[None])
            else:
                nn.init.trunc_normal_(branch.pos_table, std=0.02)

    def forward_batch(
        self,
        original_tokens: torch.Tensor | None,
        residual_tokens: torch.Tensor | None,
        pos_ids: torch.Tensor,
        pad_mask: torch.Tensor | None,
    ) -> torch.Tensor:
        """Returns logits (B, 2). A disabled branch contributes a zero feature."""
        cfg = self.config
        batch = pos_ids.shape[0]
        dtype = original_tokens.dtype if original_tokens is not None else residual_tokens.dtype
        zero = torch.zeros(batch, cfg.embed_dim, dtype=dtype)
        feat_orig = self.branch_original(original_tokens, pos_ids, pad_mask) if cfg.use_original else zero
        feat_res = self.branch_residual(residual_tokens, pos_ids, pad_mask) if cfg.use_residual else zero
        if cfg.merge is MergeMode.CONCAT_LINEAR:
            merged = torch.cat([feat_orig, feat_res], dim=1)
        else:
            merged = feat_orig + feat_res
        return self.merge_head(merged)


def _blocks_to_tokens(blocks: list[np.ndarray], positions: list[tuple[int, tuple[int, int]]],
                      config: DetectorConfig, grid: BlockGrid) -> tuple[np.ndarray, np.ndarray]:
    """Decompose blocks into patch vectors with absolute position ids.

    Returns (tokens (N, patch_dim) float32, pos_ids (N,) int64) with patches
    row-major within each block, blocks in the given order.
    """
    p = config.patch_side
    if grid.block_side % p != 0:
        raise InputError(f"patch_side {p} must divide block_side {grid.block_side}")
    q = grid.block_side // p
    g = config.patch_grid_side
    tokens, ids = [], []
    for blk, (j, (y0, x0)) in zip(blocks, positions):
        if blk.shape[0] != grid.block_side or blk.shape[1] != grid.block_side:
            raise InputError(f"block for index {j} has shape {blk.shape[:2]}, expected side {grid.block_side}")
        x = blk.reshape(q, p, q, p, 3).transpose(0, 2, 1, 3, 4).reshape(q * q, p * p * 3)
        tokens.append(x)
        base_r, base_c = y0 // p, x0 // p
        for r in range(q):
            for c in range(q):
                ids.append((base_r + r) * g + (base_c + c))
    return np.concatenate(tokens).astype(np.float32), np.array(ids, dtype=np.int64)


def forward(
    model: DualBranchModel,
    residual_blocks: list[np.ndarray],
    original_blocks: list[np.ndarray],
    positions: list[tuple[int, tuple[int, int]]],
    grid: BlockGrid,
) -> Prediction:
    """Run the dual-branch classifier on one sample's selected blocks."""
    cfg = model.config
    if not positions:
        raise InputError("empty block selection: the classifier requires at least one block")
    if cfg.use_original and len(original_blocks) != len(positions):
        raise InputError(f"{len(original_blocks)} original blocks for {len(positions)} positions")
    if cfg.use_residual and len(residual_blocks) != len(positions):
        raise InputError(f"{len(residual_blocks)} residual blocks for {len(positions)} positions")
    if cfg.use_original and cfg.use_residual and len(residual_blocks) != len(original_blocks):
        raise InputError("residual and original block lists must be index-aligned")

    orig_t = res_t = None
    pos_ids = None
    if cfg.use_original:
        tok, pos_ids = _blocks_to_tokens(original_blocks, positions, cfg, grid)
        orig_t = torch.from_numpy(tok)[None]
    if cfg.use_residual:
        tok, ids = _blocks_to_tokens(residual_blocks, positions, cfg, grid)
        res_t = torch.from_numpy(tok)[None]
        pos_ids = ids if pos_ids is None else pos_ids
    model.eval()
    with torch.no_grad():
        logits = model.forward_batch(orig_t, res_t, torch.from_numpy(pos_ids)[None], None)
        probs = torch.softmax(logits, dim=1)[0].numpy()
    if not np.isfinite(probs).all():
        raise NumericFailureError("non-finite probabilities in classifier forward")
    return Prediction(probs=probs.astype(np.float64))


def cls_loss(pred: Prediction, label: Label | np.ndarray) -> float:
    """Cross-entropy -log(prob of true class), with an epsilon-floored log."""
    if isinstance(label, Label):
        idx = 0 if label is Label.REAL else 1
    else:
        onehot = np.asarray(label, dtype=np.float64)
        if onehot.shape != (2,) or sorted(onehot.tolist()) != [0.0, 1.0]:
            raise InputError(f"label must be one-hot over 2 classes, got {label}")
        idx = int(np.argmax(onehot))
    return float(-np.log(max(float(pred.probs[idx]), LOG_EPS)))


@dataclass
class DetectorTrainResult:
    model: DualBranchModel
    loss_trace: list[float]
    checkpoints: list[tuple[int, Path]] = field(default_factory=list)


def _collate(
    samples: list[ImageSample],
    selections: list[list[int]],
    residuals: list[list[np.ndarray]],
    config: DetectorConfig,
    grid: BlockGrid,
    dtype: torch.dtype = torch.float32,
) -> tuple[torch.Tensor | None, torch.Tensor | None, torch.Tensor, torch.Tensor]:
    """Pad per-sample token sequences to a common length for batched forward."""
    q2 = (grid.block_side // config.patch_side) ** 2
    patch_dim = config.patch_side ** 2 * 3
    counts = [len(sel) * q2 for sel in selections]
    n_max = max(counts)
    b = len(samples)
    orig = np.zeros((b, n_max, patch_dim), dtype=np.float32) if config.use_original else None
    res = np.zeros((b, n_max, patch_dim), dtype=np.float32) if config.use_residual else None
    pos = np.zeros((b, n_max), dtype=np.int64)
    pad = np.ones((b, n_max), dtype=bool)
    bs = grid.block_side
    for i, (sample, sel) in enumerate(zip(samples, selections)):
        positions = [(j, grid.block_origin(j)) for j in sel]
        n = counts[i]
        pad[i, :n] = False
        if config.use_original:
            blocks = [sample.pixels[y0:y0 + bs, x0:x0 + bs] for _, (y0, x0) in positions]
            tok, ids = _blocks_to_tokens(blocks, positions, config, grid)
            orig[i, :n] = tok
            pos[i, :n] = ids
        if config.use_residual:
            tok, ids = _blocks_to_tokens(residuals[i], positions, config, grid)
            res[i, :n] = tok
            pos[i, :n] = ids
    return (
        torch.from_numpy(orig).to(dtype) if orig is not None else None,
        torch.from_numpy(res).to(dtype) if res is not None else None,
        torch.from_numpy(pos),
        torch.from_numpy(pad) if n_max != min(counts) else None,
    )


def _batch_loss(model: DualBranchModel, samples, selections, residuals, grid: BlockGrid) -> torch.Tensor:
    dtype = next(model.parameters()).dtype
    orig_t, res_t, pos_ids, pad = _collate(samples, selections, residuals, model.config, grid, dtype)
    logits = model.forward_batch(orig_t, res_t, pos_ids, pad)
    probs = torch.softmax(logits, dim=1)
    targets = torch.tensor([0 if s.label is Label.REAL else 1 for s in samples])
    p_true = probs[torch.arange(len(samples)), targets]
    return -torch.log(torch.clamp(p_true, min=LOG_EPS)).mean()


def train_detector(
    config: DetectorConfig,
    sched: TrainSchedule,
    train_stream: Iterator[list[ImageSample]],
    generator: ResidualGenerator,
    grid: BlockGrid,
    p: float,
    amp: AmplificationConfig,
    on_step: Callable[[int, DualBranchModel], None] | None = None,
    checkpoint_dir: str | Path | None = None,
    checkpoint_every: int | None = None,
    init_checkpoint: str | Path | None = None,
) -> DetectorTrainResult:
    """Train the classifier on labelled batches with fresh per-image block selection.

    Every step draws a batch, makes an independent Bernoulli(p) selection per
    image, produces residual/original blocks through the generator, and takes
    an AdamW step on the mean classification loss under the warmup+cosine
    schedule. ``init_checkpoint`` optionally warm-starts from externally
    supplied weights in the checkpoint container format.
    """
    if config.use_residual and generator.kind is ResidualKind.NONE:
        raise InputError("generator kind NONE cannot feed an enabled residual branch")
    model = DualBranchModel(config)
    if init_checkpoint is not None:
        pretrained, _ = load_detector(init_checkpoint)
        model.load_state_dict(pretrained.state_dict())
    opt = torch.optim.AdamW(model.parameters(), lr=sched.base_lr, betas=(0.9, 0.95),
                            weight_decay=sched.weight_decay)
    rng = np.random.default_rng(config.rng_seed)
    trace: list[float] = []
    checkpoints: list[tuple[int, Path]] = []

    model.train()
    for step in range(sched.total_steps):
        try:
            batch = next(train_stream)
        except StopIteration:
            raise InputError(f"training stream exhausted at step {step} of {sched.total_steps}") from None
        selections = [select_blocks(grid, p, rng).indices for _ in batch]
        residuals = generator.batch_residuals(batch, selections, grid, amp) \
            if config.use_residual else [[] for _ in batch]
        lr = sched.lr_at(step)
        for group in opt.param_groups:
            group["lr"] = lr
        loss = _batch_loss(model, batch, selections, residuals, grid)
        if not torch.isfinite(loss):
            raise NumericFailureError(f"non-finite classification loss at step {step}", step=step)
        opt.zero_grad()
        loss.backward()
        opt.step()
        trace.append(loss.item())

        done = step + 1
        if checkpoint_dir is not None and checkpoint_every and \
                (done % checkpoint_every == 0 or done == sched.total_steps):
            path = save_detector(Path(checkpoint_dir) / f"step-{done:06d}", model, done, sched)
            checkpoints.append((done, path))
        if on_step is not None:
            on_step(done, model)

    model.eval()
    return DetectorTrainResult(model=model, loss_trace=trace, checkpoints=checkpoints)


def predict(model: DualBranchModel, image: ImageSample, generator: ResidualGenerator,
            grid: BlockGrid, amp: AmplificationConfig) -> float:
    """Score one image: full residual image plus all original blocks; returns P_fake."""
    return float(score_samples(model, [image], generator, grid, amp)[0])


def score_samples(
    model: DualBranchModel,
    samples: list[ImageSample],
    generator: ResidualGenerator,
    grid: BlockGrid,
    amp: AmplificationConfig,
    chunk: int = 32,
) -> np.ndarray:
    """Batched test-time scoring over full-image block sets (all k*k indices)."""
    full = list(range(1, grid.block_count + 1))
    model.eval()
    scores = np.empty(len(samples), dtype=np.float64)
    for start in range(0, len(samples), chunk):
        part = samples[start:start + chunk]
        selections = [full] * len(part)
        residuals = generator.batch_residuals(part, selections, grid, amp) \
            if model.config.use_residual else [[] for _ in part]
        orig_t, res_t, pos_ids, pad = _collate(part, selections, residuals, model.config, grid)
        with torch.no_grad():
            logits = model.forward_batch(orig_t, res_t, pos_ids, pad)
            probs = torch.softmax(logits, dim=1)[:, 1].numpy()
        if not np.isfinite(probs).all():
            raise NumericFailureError("non-finite score during evaluation")
        scores[start:start + len(part)] = probs
    return scores


class CachedScorer:
    """Precomputed full-block token tensors for a fixed test set.

    The token construction (and, for a frozen generator, the residuals) does
    not depend on the detector weights, so snapshot evaluations during
    training only pay for the classifier forward pass.
    """

    def __init__(self, samples: list[ImageSample], generator: ResidualGenerator | None,
                 grid: BlockGrid, amp: AmplificationConfig, config: DetectorConfig,
                 chunk: int = 16):
        self.samples = samples
        full = list(range(1, grid.block_count + 1))
        orig_parts, res_parts, pos_parts = [], [], []
        with_residual = generator is not None and generator.kind is not ResidualKind.NONE
        both = replace(config, use_original=True, use_residual=with_residual)
        for start in range(0, len(samples), chunk):
            part = samples[start:start + chunk]
            selections = [full] * len(part)
            residuals = generator.batch_residuals(part, selections, grid, amp) \
                if with_residual else [[] for _ in part]
            orig_t, res_t, pos_ids, _ = _collate(part, selections, residuals, both, grid)
            orig_parts.append(orig_t)
            pos_parts.append(pos_ids)
            if with_residual:
                res_parts.append(res_t)
        self.orig_tokens = torch.cat(orig_parts)
        self.res_tokens = torch.cat(res_parts) if res_parts else None
        self.pos_ids = torch.cat(pos_parts)

    def score(self, model: DualBranchModel, chunk: int = 32) -> np.ndarray:
        """P_fake per sample under the frozen cached inputs."""
        cfg = model.config
        if cfg.use_residual and self.res_tokens is None:
            raise InputError("scorer was built without residuals but the model uses the residual branch")
        was_training = model.training
        model.eval()
        out = np.empty(len(self.samples), dtype=np.float64)
        with torch.no_grad():
            for start in range(0, len(self.samples), chunk):
                sl = slice(start, start + chunk)
                logits = model.forward_batch(
                    self.orig_tokens[sl] if cfg.use_original else None,
                    self.res_tokens[sl] if cfg.use_residual else None,
                    self.pos_ids[sl], None)
                out[sl] = torch.softmax(logits, dim=1)[:, 1].numpy()
        if was_training:
            model.train()
        if not np.isfinite(out).all():
            raise NumericFailureError("non-finite score during cached evaluation")
        return out


def save_detector(directory: str | Path, model: DualBranchModel, step: int,
                  sched: TrainSchedule | None = None) -> Path:
    cfg = asdict(model.config)
    cfg["merge"] = model.config.merge.value
    params = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    return save_checkpoint(directory, role="detector", step=step, config=cfg,
                           params=params, schedule=asdict(sched) if sched else None)


def load_detector(directory: str | Path) -> tuple[DualBranchModel, int]:
    ckpt = load_checkpoint(directory, expected_role="detector")
    cfg = dict(ckpt.config)
    cfg["merge"] = MergeMode(cfg["merge"])
    model = DualBranchModel(DetectorConfig(**cfg))
    model.load_state_dict({k: torch.from_numpy(v.copy()) for k, v in ckpt.params.items()})
    model.eval()
    return model, ckpt.step


def single_branch_config(config: DetectorConfig, use_original: bool, use_residual: bool) -> DetectorConfig:
    """Same architecture with a different branch mask (for input-variant studies)."""
    return replace(config, use_original=use_original, use_residual=use_residual)
