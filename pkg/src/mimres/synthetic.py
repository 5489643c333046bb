"""Synthetic real/fake pair generation.

Real samples are band-limited random textures: a handful of smooth color
blobs over a palette base, plus low-frequency cloud noise and a faint fine
grain. Fake samples are the same image with one localized artifact injected
in a random interior region; everything outside the recorded region is
bit-identical to the real image.

Three artifact kinds stand in for distinct manipulation families:

* ``BLEND_SEAM``   - an elliptical color/luminance shift blended in over a
  narrow ramp, leaving a soft boundary seam.
* ``CHECKERBOARD`` - an additive high-frequency +-amplitude checker pattern.
* ``BLUR_PATCH``   - local gaussian smoothing of the region contents.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .blocks import ImageSample, Label
from .errors import InputError


class ArtifactKind(enum.Enum):
    BLEND_SEAM = "blend_seam"
    CHECKERBOARD = "checkerboard"
    BLUR_PATCH = "blur_patch"


@dataclass(frozen=True)
class TextureParams:
    smoothness: float = 8.0   # gaussian sigma of the cloud-noise band limit, in pixels
    palette_seed: int = 0


@dataclass(frozen=True)
class SyntheticConfig:
    rng_seed: int
    artifact_kind: ArtifactKind
    artifact_region_fraction: float = 0.12
    base_texture_params: TextureParams = field(default_factory=TextureParams)
    image_side: int = 224

    def __post_init__(self):
        if not 0.0 < self.artifact_region_fraction <= 0.5:
            raise InputError(
                f"artifact_region_fraction must be in (0, 0.5], got {self.artifact_region_fraction}")
        if self.image_side < 16:
            raise InputError(f"image_side must be >= 16, got {self.image_side}")


@dataclass(frozen=True)
class Region:
    """Axis-aligned artifact region: rows [y0, y0+h), cols [x0, x0+w)."""
    y0: int
    x0: int
    h: int
    w: int

    def slices(self) -> tuple[slice, slice]:
        return slice(self.y0, self.y0 + self.h), slice(self.x0, self.x0 + self.w)

    def to_list(self) -> list[int]:
        return [self.y0, self.x0, self.h, self.w]

    @classmethod
    def from_list(cls, v: list[int]) -> "Region":
        return cls(*[int(x) for x in v])


@dataclass(frozen=True)
class SyntheticPair:
    real: ImageSample
    fake: ImageSample
    region: Region


# Artifact strengths, tuned so artifacts are subtle against the texture but
# well above the 8-bit quantization floor.
_SEAM_SHIFT = 0.26
_SEAM_RAMP = 2.8           # pixels over which the seam blends in
_CHECKER_AMPLITUDE = 0.11
_CHECKER_CELL = 8          # pixels per checker cell
_CHECKER_SOFTEN = 1.4      # gaussian sigma on the pattern, keeps it mid-frequency
_BLUR_SIGMA = 2.5
_GRAIN_AMPLITUDE = 0.02   # fine grain keeps real images from being perfectly band-limited
_CLOUD_AMPLITUDE = 0.012


def _quantize(pixels: np.ndarray) -> np.ndarray:
    """Snap to the 8-bit grid so in-memory pixels match PNG round-trips."""
    return (np.round(np.clip(pixels, 0.0, 1.0) * 255.0) / 255.0).astype(np.float32)


def _smooth_texture(rng: np.random.Generator, side: int, params: TextureParams) -> np.ndarray:
    palette_rng = np.random.default_rng(params.palette_seed)
    palette = palette_rng.uniform(0.25, 0.75, size=(5, 3))

    yy, xx = np.mgrid[0:side, 0:side].astype(np.float64)
    image = np.ones((side, side, 3)) * palette[0]

    # A few large smooth blobs give the low-frequency structure.
    n_blobs = int(rng.integers(4, 7))
    for _ in range(n_blobs):
        cy, cx = rng.uniform(0.1 * side, 0.9 * side, size=2)
        sigma = rng.uniform(0.12 * side, 0.30 * side)
        color = palette[rng.integers(1, len(palette))] + rng.uniform(-0.08, 0.08, size=3)
        weight = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * sigma ** 2))
        image = image * (1.0 - weight[..., None]) + color * weight[..., None]

    # Band-limited cloud noise at the configured smoothness scale.
    cloud = gaussian_filter(rng.standard_normal((side, side, 3)), sigma=(params.smoothness, params.smoothness, 0))
    cloud_amp = cloud.std() or 1.0
    image += _CLOUD_AMPLITUDE * cloud / cloud_amp

    # Faint fine grain shared by all real images.
    grain = gaussian_filter(rng.standard_normal((side, side, 3)), sigma=(0.6, 0.6, 0))
    grain_amp = grain.std() or 1.0
    image += _GRAIN_AMPLITUDE * grain / grain_amp

    return np.clip(image, 0.0, 1.0)


def _pick_region(rng: np.random.Generator, side: int, fraction: float) -> Region:
    target = max(6, int(round(side * np.sqrt(fraction))))
    target = min(target, side - 4)
    margin = 2
    y0 = int(rng.integers(margin, side - target - margin + 1))
    x0 = int(rng.integers(margin, side - target - margin + 1))
    return Region(y0=y0, x0=x0, h=target, w=target)


def _apply_blend_seam(pixels: np.ndarray, region: Region, rng: np.random.Generator) -> np.ndarray:
    out = pixels.copy()
    ys, xs = region.slices()
    h, w = region.h, region.w
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    ry, rx = h / 2.0 - 1.0, w / 2.0 - 1.0
    dist = np.sqrt(((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2)
    # alpha ramps 1 -> 0 across a narrow band at the ellipse boundary.
    alpha = np.clip((1.0 - dist) * (min(h, w) / 2.0) / _SEAM_RAMP, 0.0, 1.0)
    shift = rng.uniform(-_SEAM_SHIFT, _SEAM_SHIFT, size=3)
    if np.all(np.abs(shift) < 0.12):
        shift = np.where(shift >= 0, shift + 0.12, shift - 0.12)
    out[ys, xs] = pixels[ys, xs] + alpha[..., None] * shift
    return out


def _apply_checkerboard(pixels: np.ndarray, region: Region, rng: np.random.Generator) -> np.ndarray:
    out = pixels.copy()
    ys, xs = region.slices()
    yy, xx = np.mgrid[0:region.h, 0:region.w]
    cells = ((yy // _CHECKER_CELL + xx // _CHECKER_CELL) % 2 * 2 - 1).astype(np.float64)
    pattern = gaussian_filter(cells, sigma=_CHECKER_SOFTEN, mode="reflect")
    phase = 1.0 if rng.random() < 0.5 else -1.0
    out[ys, xs] = pixels[ys, xs] + phase * _CHECKER_AMPLITUDE * pattern[..., None]
    return out


def _apply_blur_patch(pixels: np.ndarray, region: Region, rng: np.random.Generator) -> np.ndarray:
    out = pixels.copy()
    ys, xs = region.slices()
    patch = pixels[ys, xs]
    # Blur computed on the crop only, so the artifact cannot leak outside the region.
    out[ys, xs] = gaussian_filter(patch, sigma=(_BLUR_SIGMA, _BLUR_SIGMA, 0), mode="reflect")
    return out


_ARTIFACTS = {
    ArtifactKind.BLEND_SEAM: _apply_blend_seam,
    ArtifactKind.CHECKERBOARD: _apply_checkerboard,
    ArtifactKind.BLUR_PATCH: _apply_blur_patch,
}


def generate_synthetic_pair(config: SyntheticConfig) -> SyntheticPair:
    """Generate a (real, fake) pair, deterministic in ``config.rng_seed``.

    The fake differs from the real image only inside the returned region.
    """
    rng = np.random.default_rng(config.rng_seed)
    side = config.image_side
    real_px = _quantize(_smooth_texture(rng, side, config.base_texture_params))

    region = _pick_region(rng, side, config.artifact_region_fraction)
    fake_px = _quantize(_ARTIFACTS[config.artifact_kind](real_px.astype(np.float64), region, rng))

    tag = config.artifact_kind.value
    sid = f"{tag}-{config.rng_seed}"
    real = ImageSample(pixels=real_px, label=Label.REAL, domain_tag=tag, sample_id=f"{sid}-real")
    fake = ImageSample(pixels=fake_px, label=Label.FAKE, domain_tag=tag, sample_id=f"{sid}-fake")
    return SyntheticPair(real=real, fake=fake, region=region)
