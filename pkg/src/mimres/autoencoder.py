"""UNet-style autoencoder baseline for residual generation.

Trained on real images with a plain full-image reconstruction loss. With
skip connections it learns a near-identity mapping quickly, which is exactly
the failure mode this baseline exists to demonstrate: its residuals carry
little artifact signal compared to the masked-inpainting route.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterator

import numpy as np
import torch
import torch.nn as nn

from .blocks import ImageSample
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import InputError, NumericFailureError
from .inpainter import TrainResult, _assert_real_only, samples_to_tensor
from .schedule import TrainSchedule

_WIDTHS = (16, 32, 64)


@dataclass(frozen=True)
class AutoencoderConfig:
    image_side: int = 224
    rng_seed: int = 0

    def __post_init__(self):
        if self.image_side % 4 != 0:
            raise InputError(f"image_side must be divisible by 4 for two pooling levels, got {self.image_side}")


def _double_conv(cin: int, cout: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(cin, cout, 3, padding=1), nn.ReLU(inplace=True),
        nn.Conv2d(cout, cout, 3, padding=1), nn.ReLU(inplace=True),
    )


class AutoencoderModel(nn.Module):
    def __init__(self, config: AutoencoderConfig):
        super().__init__()
        self.config = config
        w1, w2, w3 = _WIDTHS
        torch.manual_seed(config.rng_seed)
        self.enc1 = _double_conv(3, w1)
        self.enc2 = _double_conv(w1, w2)
        self.bottleneck = _double_conv(w2, w3)
        self.pool = nn.MaxPool2d(2)
        self.up2 = nn.ConvTranspose2d(w3, w2, 2, stride=2)
        self.dec2 = _double_conv(w2 * 2, w2)
        self.up1 = nn.ConvTranspose2d(w2, w1, 2, stride=2)
        self.dec1 = _double_conv(w1 * 2, w1)
        self.head = nn.Conv2d(w1, 3, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        s1 = self.enc1(x)
        s2 = self.enc2(self.pool(s1))
        z = self.bottleneck(self.pool(s2))
        d2 = self.dec2(torch.cat([self.up2(z), s2], dim=1))
        d1 = self.dec1(torch.cat([self.up1(d2), s1], dim=1))
        return self.head(d1)


def reconstruct(model: AutoencoderModel, images: torch.Tensor) -> torch.Tensor:
    model.eval()
    with torch.no_grad():
        out = model(images)
    if not torch.isfinite(out).all():
        raise NumericFailureError("non-finite activation in autoencoder reconstruction")
    return out


def train_autoencoder(
    config: AutoencoderConfig,
    sched: TrainSchedule,
    real_stream: Iterator[list[ImageSample]],
) -> TrainResult:
    """Train on REAL-only batches with mean-squared full-image reconstruction."""
    model = AutoencoderModel(config)
    opt = torch.optim.AdamW(model.parameters(), lr=sched.base_lr, betas=(0.9, 0.95),
                            weight_decay=sched.weight_decay)
    trace: list[float] = []
    model.train()
    for step in range(sched.total_steps):
        try:
            batch = next(real_stream)
        except StopIteration:
            raise InputError(f"training stream exhausted at step {step} of {sched.total_steps}") from None
        _assert_real_only(batch)
        images = samples_to_tensor(batch)
        lr = sched.lr_at(step)
        for group in opt.param_groups:
            group["lr"] = lr
        recon = model(images)
        loss = torch.mean((recon - images) ** 2)
        if not torch.isfinite(loss):
            raise NumericFailureError(f"non-finite autoencoder loss at step {step}", step=step)
        opt.zero_grad()
        loss.backward()
        opt.step()
        trace.append(loss.item())
    model.eval()
    return TrainResult(model=model, loss_trace=trace)


def save_autoencoder(directory: str | Path, model: AutoencoderModel, step: int,
                     sched: TrainSchedule | None = None) -> Path:
    params = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    return save_checkpoint(directory, role="autoencoder", step=step,
                           config=asdict(model.config), params=params,
                           schedule=asdict(sched) if sched else None)


def load_autoencoder(directory: str | Path) -> tuple[AutoencoderModel, int]:
    ckpt = load_checkpoint(directory, expected_role="autoencoder")
    model = AutoencoderModel(AutoencoderConfig(**ckpt.config))
    model.load_state_dict({k: torch.from_numpy(v.copy()) for k, v in ckpt.params.items()})
    model.eval()
    return model, ckpt.step
