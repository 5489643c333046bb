"""PNG rendering: reconstruction grids, validation curves and AUC heatmaps.

Grids are composed directly with PIL; plots go through the matplotlib Agg
backend with metadata stripped so identical runs produce identical bytes.
"""

from __future__ import annotations

from pathlib import Path
from typing import Callable, Mapping, Sequence

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
from PIL import Image

from .blocks import BlockGrid, ImageSample
from .evaluation import EvalReport, ema_smooth
from .residual import AmplificationConfig, ResidualGenerator

_PNG_META = {"Software": None}  # strip the default matplotlib tag for byte-stable output


def _to_uint8(pixels: np.ndarray) -> np.ndarray:
    return np.round(np.clip(pixels, 0.0, 1.0) * 255.0).astype(np.uint8)


def shift_residual(residual: np.ndarray) -> np.ndarray:
    """Map a [-1, 1] residual to [0, 1] for export; never used for the detector."""
    return (residual + 1.0) / 2.0


def reconstruction_grid(
    recon_fn: Callable[[ImageSample], np.ndarray],
    generator: ResidualGenerator,
    samples: Sequence[ImageSample],
    grid: BlockGrid,
    amp: AmplificationConfig,
    path: str | Path,
    pad: int = 2,
) -> Path:
    """Write a grid PNG: one column per sample, rows original / reconstructed / residual."""
    side = grid.image_side
    cols = len(samples)
    width = cols * (side + pad) + pad
    height = 3 * (side + pad) + pad
    canvas = Image.new("RGB", (width, height), (255, 255, 255))
    for col, sample in enumerate(samples):
        recon = recon_fn(sample)
        residual = shift_residual(generator.full_residual(sample, grid, amp))
        x = pad + col * (side + pad)
        for row, pixels in enumerate([sample.pixels, recon, residual]):
            canvas.paste(Image.fromarray(_to_uint8(pixels)), (x, pad + row * (side + pad)))
    path = Path(path)
    canvas.save(path, format="PNG")
    return path


def curve_plot(
    curves: Mapping[str, Sequence[tuple[int, float]]],
    path: str | Path,
    smooth_factor: float = 0.8,
    title: str = "validation curves",
) -> Path:
    """Line chart of (iteration, AUC) series; smoothing is applied only here."""
    fig, ax = plt.subplots(figsize=(7, 4.5), dpi=110)
    for domain in sorted(curves):
        points = curves[domain]
        if not points:
            continue
        steps = [p[0] for p in points]
        values = ema_smooth([p[1] for p in points], smooth_factor)
        ax.plot(steps, values, label=domain)
    ax.set_xlabel("iteration")
    ax.set_ylabel("AUC")
    ax.set_title(title)
    ax.legend(loc="lower right")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, metadata=_PNG_META)
    plt.close(fig)
    return path


def matrix_heatmap(report: EvalReport, path: str | Path, title: str = "cross-domain AUC (%)") -> Path:
    """Heatmap of the train x test AUC matrix; failed cells render as NaN."""
    train_domains = sorted(report.matrix)
    test_domains = sorted({t for row in report.matrix.values() for t in row})
    values = np.full((len(train_domains), len(test_domains)), np.nan)
    for i, tr in enumerate(train_domains):
        for j, te in enumerate(test_domains):
            cell = report.matrix[tr].get(te, {})
            if "auc_pct" in cell:
                values[i, j] = cell["auc_pct"]
    fig, ax = plt.subplots(figsize=(1.6 + 1.3 * len(test_domains), 1.2 + 1.0 * len(train_domains)), dpi=110)
    im = ax.imshow(values, vmin=50, vmax=100, cmap="viridis")
    ax.set_xticks(range(len(test_domains)), test_domains, rotation=30, ha="right")
    ax.set_yticks(range(len(train_domains)), train_domains)
    ax.set_xlabel("test domain")
    ax.set_ylabel("train domain")
    ax.set_title(title)
    for i in range(len(train_domains)):
        for j in range(len(test_domains)):
            if np.isfinite(values[i, j]):
                ax.text(j, i, f"{values[i, j]:.1f}", ha="center", va="center", color="white", fontsize=9)
    fig.colorbar(im, ax=ax, shrink=0.85)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, metadata=_PNG_META)
    plt.close(fig)
    return path
