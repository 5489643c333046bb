"""CSV dataset manifests, PNG image IO and seeded batch iteration.

Manifest format: CSV with header ``path,label,domain_tag,split``. Paths are
resolved relative to the manifest's directory, labels are ``real``/``fake``
and splits are ``train``/``val``/``test``. Images are square RGB PNGs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np
from PIL import Image

from .blocks import ImageSample, Label, Split
from .errors import InputError, MissingPrerequisiteError

MANIFEST_HEADER = ["path", "label", "domain_tag", "split"]


@dataclass(frozen=True)
class ManifestEntry:
    path: Path
    label: Label
    domain_tag: str
    split: Split

    @property
    def sample_id(self) -> str:
        return self.path.stem


@dataclass(frozen=True)
class DatasetManifest:
    entries: list[ManifestEntry]

    def for_split(self, split: Split) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == split]

    def domains(self) -> list[str]:
        return sorted({e.domain_tag for e in self.entries})


def load_manifest(path: str | Path) -> DatasetManifest:
    """Parse and validate a manifest CSV; image decodability is checked at load time."""
    path = Path(path)
    if not path.is_file():
        raise MissingPrerequisiteError(f"manifest not found: {path}")
    entries: list[ManifestEntry] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != MANIFEST_HEADER:
            raise InputError(f"manifest {path}: expected header {MANIFEST_HEADER}, got {reader.fieldnames}")
        for row in reader:
            try:
                label = Label(row["label"])
            except ValueError:
                raise InputError(f"manifest {path}: unknown label {row['label']!r} for {row['path']!r}") from None
            try:
                split = Split(row["split"])
            except ValueError:
                raise InputError(f"manifest {path}: unknown split {row['split']!r} for {row['path']!r}") from None
            if not row["domain_tag"]:
                raise InputError(f"manifest {path}: empty domain_tag for {row['path']!r}")
            entries.append(ManifestEntry(
                path=(path.parent / row["path"]).resolve(),
                label=label,
                domain_tag=row["domain_tag"],
                split=split,
            ))
    seen: dict[str, Split] = {}
    for e in entries:
        prev = seen.get(e.sample_id)
        if prev is not None and prev != e.split:
            raise InputError(f"manifest {path}: sample_id {e.sample_id!r} appears in splits {prev.value} and {e.split.value}")
        seen[e.sample_id] = e.split
    return DatasetManifest(entries=entries)


def save_manifest(path: str | Path, entries: list[ManifestEntry]) -> None:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_HEADER)
        for e in entries:
            rel = Path(e.path)
            try:
                rel = rel.relative_to(path.parent.resolve())
            except ValueError:
                pass
            writer.writerow([rel.as_posix(), e.label.value, e.domain_tag, e.split.value])


def save_image(path: str | Path, pixels: np.ndarray) -> None:
    """Write [0, 1] float pixels as an 8-bit RGB PNG."""
    arr = np.round(np.clip(pixels, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def load_image(entry: ManifestEntry, image_side: int | None = None) -> ImageSample:
    """Load one manifest entry as an ImageSample, optionally resizing to image_side."""
    if not entry.path.is_file():
        raise MissingPrerequisiteError(f"image not found: {entry.path}")
    try:
        with Image.open(entry.path) as img:
            img = img.convert("RGB")
            if img.width != img.height:
                raise InputError(f"image {entry.path}: must be square, got {img.width}x{img.height}")
            if image_side is not None and img.width != image_side:
                img = img.resize((image_side, image_side), Image.BILINEAR)
            arr = np.asarray(img, dtype=np.float32) / 255.0
    except InputError:
        raise
    except Exception as exc:
        raise InputError(f"image {entry.path}: not decodable ({exc})") from exc
    return ImageSample(pixels=arr, label=entry.label, domain_tag=entry.domain_tag, sample_id=entry.sample_id)


def load_split(manifest: DatasetManifest, split: Split, image_side: int | None = None) -> list[ImageSample]:
    return [load_image(e, image_side) for e in manifest.for_split(split)]


def batch_iter(
    manifest: DatasetManifest,
    split: Split,
    batch_size: int,
    rng: np.random.Generator,
    image_side: int | None = None,
    epochs: int | None = 1,
) -> Iterator[list[ImageSample]]:
    """Stream shuffled batches of loaded samples; the final short batch is emitted.

    The per-epoch order is a pure function of the rng state, decided before
    any image is read. ``epochs=None`` streams forever.
    """
    if batch_size < 1:
        raise InputError(f"batch_size must be >= 1, got {batch_size}")
    entries = manifest.for_split(split)
    if not entries:
        raise InputError(f"manifest has no entries for split {split.value!r}")
    epoch = 0
    while epochs is None or epoch < epochs:
        order = rng.permutation(len(entries))
        for start in range(0, len(entries), batch_size):
            idx = order[start:start + batch_size]
            yield [load_image(entries[i], image_side) for i in idx]
        epoch += 1


def iter_sample_batches(
    samples: list[ImageSample],
    batch_size: int,
    rng: np.random.Generator,
    epochs: int | None = 1,
) -> Iterator[list[ImageSample]]:
    """In-memory counterpart of :func:`batch_iter` for already-loaded samples."""
    if batch_size < 1:
        raise InputError(f"batch_size must be >= 1, got {batch_size}")
    if not samples:
        raise InputError("no samples to iterate")
    epoch = 0
    while epochs is None or epoch < epochs:
        order = rng.permutation(len(samples))
        for start in range(0, len(samples), batch_size):
            yield [samples[i] for i in order[start:start + batch_size]]
        epoch += 1
