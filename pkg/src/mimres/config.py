"""Experiment configuration: JSON files, flag overrides and resolved snapshots.

A config file is JSON with a ``version`` field; unset sections fall back to
defaults and unset rng seeds derive from the global seed. The fully-resolved
config is written next to every command's outputs so a run can be reproduced
from the snapshot alone.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields as dc_fields
from pathlib import Path
from typing import Any

from .blocks import BlockGrid
from .detector import DetectorConfig, MergeMode
from .errors import ConfigError
from .inpainter import InpainterConfig
from .residual import AmplificationConfig, ResidualKind
from .schedule import TrainSchedule
from .synthetic import ArtifactKind
from .evaluation import SelectionMode

CONFIG_VERSION = 1


@dataclass(frozen=True)
class SyntheticSettings:
    pairs: dict[str, int] = field(default_factory=lambda: {"train": 60, "val": 12, "test": 24})
    artifact_region_fraction: float = 0.12
    texture_smoothness: float = 6.0
    palette_seed: int = 0


@dataclass(frozen=True)
class DataSettings:
    domains: list[str] = field(default_factory=lambda: ["blend_seam", "checkerboard"])
    root: str = "data"
    synthetic: SyntheticSettings = field(default_factory=SyntheticSettings)

    def manifest_path(self, out_dir: Path, domain: str) -> Path:
        root = Path(self.root)
        if not root.is_absolute():
            root = out_dir / root
        return root / domain / "manifest.csv"


@dataclass(frozen=True)
class ResidualSettings:
    kind: ResidualKind = ResidualKind.MIM
    p: float = 0.25
    alpha: float = 4.0
    clamp_low: float = -1.0
    clamp_high: float = 1.0

    def amplification(self) -> AmplificationConfig:
        return AmplificationConfig(alpha=self.alpha, clamp_low=self.clamp_low, clamp_high=self.clamp_high)


@dataclass(frozen=True)
class EvalSettings:
    cadence: int = 50
    selection_mode: SelectionMode = SelectionMode.VALIDATION_FREE
    train_domains: list[str] = field(default_factory=list)  # empty -> data.domains
    test_domains: list[str] = field(default_factory=list)   # empty -> data.domains
    validation_domain: str | None = None  # fixed validation domain for oracle selection


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    out_dir: str = "runs/default"
    grid_k: int = 4
    image_side: int = 224
    inpainter: InpainterConfig = field(default_factory=InpainterConfig)
    inpainter_schedule: TrainSchedule = field(default_factory=lambda: TrainSchedule(
        base_lr=7.5e-5, total_steps=2000, warmup_steps=100, batch_size=128, weight_decay=0.05))
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    detector_schedule: TrainSchedule = field(default_factory=lambda: TrainSchedule(
        base_lr=2e-5, total_steps=15000, warmup_steps=100, batch_size=128, weight_decay=0.05))
    residual: ResidualSettings = field(default_factory=ResidualSettings)
    data: DataSettings = field(default_factory=DataSettings)
    eval: EvalSettings = field(default_factory=EvalSettings)
    checkpoint_every: int = 500
    visualize_samples: int = 4
    version: int = CONFIG_VERSION

    def grid(self) -> BlockGrid:
        return BlockGrid(k=self.grid_k, image_side=self.image_side)

    def train_domains(self) -> list[str]:
        return self.eval.train_domains or self.data.domains

    def test_domains(self) -> list[str]:
        return self.eval.test_domains or self.data.domains

    def validate(self) -> None:
        grid = self.grid()  # checks k | image_side
        if self.inpainter.image_side != self.image_side:
            raise ConfigError(f"inpainter.image_side {self.inpainter.image_side} != image_side {self.image_side}")
        if self.detector.image_side != self.image_side:
            raise ConfigError(f"detector.image_side {self.detector.image_side} != image_side {self.image_side}")
        for name, patch in [("inpainter", self.inpainter.patch_side), ("detector", self.detector.patch_side)]:
            if grid.block_side % patch != 0:
                raise ConfigError(f"{name}.patch_side {patch} must divide block_side {grid.block_side}")
        if not self.data.domains:
            raise ConfigError("data.domains must be non-empty")
        if self.eval.cadence < 1:
            raise ConfigError(f"eval.cadence must be >= 1, got {self.eval.cadence}")
        if self.checkpoint_every < 1:
            raise ConfigError(f"checkpoint_every must be >= 1, got {self.checkpoint_every}")
        known = set(self.data.domains)
        for dom in [*self.eval.train_domains, *self.eval.test_domains]:
            if dom not in known:
                raise ConfigError(f"eval references unknown domain {dom!r}")
        if self.eval.validation_domain is not None and self.eval.validation_domain not in known:
            raise ConfigError(f"eval.validation_domain {self.eval.validation_domain!r} not in data.domains")
        if self.residual.kind is ResidualKind.NONE and self.detector.use_residual:
            raise ConfigError("residual.kind none requires detector.use_residual false")
        if self.residual.kind is not ResidualKind.NONE and not self.detector.use_residual:
            raise ConfigError("detector.use_residual false requires residual.kind none")
        for dom in self.data.domains:
            try:
                ArtifactKind(dom)
            except ValueError:
                raise ConfigError(f"unknown synthetic domain {dom!r}; "
                                  f"expected one of {[k.value for k in ArtifactKind]}") from None

    def resolved_out_dir(self) -> Path:
        return Path(self.out_dir)


def _build_section(cls: type, defaults: dict[str, Any], data: dict[str, Any],
                   enum_fields: dict[str, Any] | None = None):
    """Construct a config dataclass from defaults merged with a JSON dict.

    Merging happens before construction so that partially-overridden sections
    are validated once, on the final values.
    """
    unknown = set(data) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown keys in {cls.__name__}: {sorted(unknown)}")
    values = dict(data)
    if enum_fields:
        for key, enum_cls in enum_fields.items():
            if key in values and isinstance(values[key], str):
                try:
                    values[key] = enum_cls(values[key])
                except ValueError:
                    raise ConfigError(f"{cls.__name__}.{key}: unknown value {values[key]!r}") from None
    try:
        return cls(**{**defaults, **values})
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {cls.__name__}: {exc}") from exc


def config_from_dict(payload: dict[str, Any]) -> ExperimentConfig:
    if not isinstance(payload, dict):
        raise ConfigError("config must be a JSON object")
    version = payload.get("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {version}")
    top_known = {"version", "seed", "out_dir", "grid_k", "image_side", "inpainter",
                 "inpainter_schedule", "detector", "detector_schedule", "residual",
                 "data", "eval", "checkpoint_every", "visualize_samples"}
    unknown = set(payload) - top_known
    if unknown:
        raise ConfigError(f"unknown top-level config keys: {sorted(unknown)}")

    base = ExperimentConfig()
    seed = int(payload.get("seed", base.seed))
    image_side = int(payload.get("image_side", base.image_side))

    inp_defaults = {f.name: f.default for f in dc_fields(InpainterConfig) if f.init}
    inp_defaults.update(image_side=image_side, rng_seed=seed)
    det_defaults = {f.name: f.default for f in dc_fields(DetectorConfig) if f.init}
    det_defaults.update(image_side=image_side, rng_seed=seed + 1)

    data_section = dict(payload.get("data", {}))
    synth = _build_section(SyntheticSettings, asdict(SyntheticSettings()),
                           data_section.pop("synthetic", {}))
    data_defaults = asdict(base.data)
    data_defaults["synthetic"] = synth
    data_settings = _build_section(DataSettings, data_defaults, data_section)

    try:
        cfg = ExperimentConfig(
            seed=seed,
            out_dir=str(payload.get("out_dir", base.out_dir)),
            grid_k=int(payload.get("grid_k", base.grid_k)),
            image_side=image_side,
            inpainter=_build_section(InpainterConfig, inp_defaults, payload.get("inpainter", {})),
            inpainter_schedule=_build_section(TrainSchedule, asdict(base.inpainter_schedule),
                                              payload.get("inpainter_schedule", {})),
            detector=_build_section(DetectorConfig, det_defaults, payload.get("detector", {}),
                                    enum_fields={"merge": MergeMode}),
            detector_schedule=_build_section(TrainSchedule, asdict(base.detector_schedule),
                                             payload.get("detector_schedule", {})),
            residual=_build_section(ResidualSettings, asdict(base.residual), payload.get("residual", {}),
                                    enum_fields={"kind": ResidualKind}),
            data=data_settings,
            eval=_build_section(EvalSettings, asdict(base.eval), payload.get("eval", {}),
                                enum_fields={"selection_mode": SelectionMode}),
            checkpoint_every=int(payload.get("checkpoint_every", base.checkpoint_every)),
            visualize_samples=int(payload.get("visualize_samples", base.visualize_samples)),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc
    return cfg


def config_to_dict(cfg: ExperimentConfig) -> dict[str, Any]:
    out = asdict(cfg)
    out["residual"]["kind"] = cfg.residual.kind.value
    out["detector"]["merge"] = cfg.detector.merge.value
    out["eval"]["selection_mode"] = cfg.eval.selection_mode.value
    return out


def load_config(path: str | Path, overrides: dict[str, Any] | None = None) -> ExperimentConfig:
    """Load a config file; CLI ``overrides`` (seed, out_dir) win over file values."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if overrides:
        payload.update({k: v for k, v in overrides.items() if v is not None})
    cfg = config_from_dict(payload)
    cfg.validate()
    return cfg


def write_resolved_config(cfg: ExperimentConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n")
