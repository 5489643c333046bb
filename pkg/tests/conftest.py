import numpy as np
import pytest

from mimres.blocks import BlockGrid, ImageSample, Label
from mimres.detector import DetectorConfig
from mimres.inpainter import InpainterConfig
from mimres.synthetic import ArtifactKind, SyntheticConfig, generate_synthetic_pair

SIDE = 64


def pytest_terminal_summary(terminalreporter):
    """One pass/fail line per acceptance criterion at the end of the run."""
    lines = []
    for outcome in ("passed", "failed"):
        for report in terminalreporter.stats.get(outcome, []):
            name = getattr(report, "nodeid", "")
            if "test_acceptance.py::test_criterion" in name:
                label = name.split("::")[-1].replace("test_criterion_", "criterion ")
                lines.append((label, outcome.upper()))
    if lines:
        terminalreporter.section("acceptance criteria")
        for label, outcome in sorted(lines):
            terminalreporter.write_line(f"{outcome:6s} {label}")


@pytest.fixture
def grid() -> BlockGrid:
    return BlockGrid(k=4, image_side=SIDE)


@pytest.fixture
def tiny_inpainter_config() -> InpainterConfig:
    return InpainterConfig(image_side=SIDE, patch_side=8, encoder_dim=32, encoder_layers=2,
                           encoder_heads=4, decoder_dim=16, decoder_layers=1, decoder_heads=4,
                           rng_seed=0)


@pytest.fixture
def tiny_detector_config() -> DetectorConfig:
    return DetectorConfig(image_side=SIDE, patch_side=8, embed_dim=32, layers=2, heads=4, rng_seed=0)


def random_sample(seed: int, side: int = SIDE, label: Label = Label.REAL,
                  domain: str = "synthA") -> ImageSample:
    rng = np.random.default_rng(seed)
    return ImageSample(pixels=rng.random((side, side, 3)).astype(np.float32),
                       label=label, domain_tag=domain, sample_id=f"rand-{seed}")


def synth_pair(seed: int, kind: ArtifactKind = ArtifactKind.CHECKERBOARD, side: int = SIDE):
    return generate_synthetic_pair(SyntheticConfig(rng_seed=seed, artifact_kind=kind, image_side=side))
