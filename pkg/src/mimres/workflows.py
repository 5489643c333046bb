"""Command implementations behind the CLI verbs.

Every command works out of an :class:`ExperimentConfig`, writes its outputs
into a command-specific subdirectory of the configured output root, and
finishes by writing the resolved config snapshot plus a hash manifest of the
files it produced. Given the snapshot and the seed, reruns are byte-identical.
"""

from __future__ import annotations

import enum
import hashlib
import json
import shutil
from dataclasses import replace
from pathlib import Path
from typing import Callable

import numpy as np

from .autoencoder import (AutoencoderConfig, load_autoencoder, reconstruct,
                          save_autoencoder, train_autoencoder)
from .blocks import ImageSample, Label, Split
from .config import ExperimentConfig, write_resolved_config
from .detector import (CachedScorer, DetectorConfig, DualBranchModel, load_detector,
                       train_detector)
from .errors import ConfigError, MissingPrerequisiteError
from .evaluation import (CheckpointRef, EvalReport, ScoreSet, SelectionMode, auc,
                         select_model, selection_gap_record)
from .inpainter import (load_inpainter, reconstruct_full, samples_to_tensor,
                        save_inpainter, train_inpainter)
from .manifest import (ManifestEntry, iter_sample_batches, load_manifest, load_split,
                       save_image, save_manifest)
from .residual import (AmplificationConfig, CachedResidualGenerator,
                       HighpassResidualGenerator, MimResidualGenerator,
                       AutoencoderResidualGenerator, NoneResidualGenerator,
                       ResidualGenerator, ResidualKind)
from .synthetic import ArtifactKind, Region, SyntheticConfig, TextureParams, generate_synthetic_pair
from . import visualize


class AblationStudy(enum.Enum):
    RESIDUAL_KIND = "residual_kind"
    BLOCK_SIZE = "block_size"
    INPUT_VARIANT = "input_variant"
    DATA_SCALE = "data_scale"


# ---------------------------------------------------------------------------
# output-directory plumbing

def prepare_command_dir(root: Path, name: str, overwrite: bool) -> Path:
    """Create <root>/<name>; refuse to clobber an existing one without overwrite."""
    target = root / name
    if target.exists() and any(target.iterdir()):
        if not overwrite:
            raise ConfigError(f"output directory {target} already exists; pass --overwrite to replace it")
        shutil.rmtree(target)
    target.mkdir(parents=True, exist_ok=True)
    return target


def finalize_command_dir(cfg: ExperimentConfig, target: Path) -> None:
    """Write the resolved config snapshot and a sha256 manifest of produced files."""
    write_resolved_config(cfg, target / "config.resolved.json")
    listing = {}
    for path in sorted(target.rglob("*")):
        if path.is_file() and path.name != "files_manifest.json":
            digest = hashlib.sha256(path.read_bytes()).hexdigest()
            listing[path.relative_to(target).as_posix()] = digest
    payload = json.dumps({"files": listing}, indent=2, sort_keys=True) + "\n"
    (target / "files_manifest.json").write_text(payload)


def _derived_seed(*entropy: int) -> int:
    return int(np.random.SeedSequence(list(entropy)).generate_state(1)[0])


# ---------------------------------------------------------------------------
# data access

def _manifest_for(cfg: ExperimentConfig, domain: str):
    path = cfg.data.manifest_path(Path(cfg.out_dir), domain)
    if not path.is_file():
        raise MissingPrerequisiteError(
            f"manifest for domain {domain!r} not found at {path}; run synth-data first")
    return load_manifest(path)


def domain_samples(cfg: ExperimentConfig, domain: str, split: Split) -> list[ImageSample]:
    return load_split(_manifest_for(cfg, domain), split, image_side=cfg.image_side)


def load_regions(cfg: ExperimentConfig, domain: str) -> dict[str, Region]:
    path = cfg.data.manifest_path(Path(cfg.out_dir), domain).parent / "regions.json"
    if not path.is_file():
        raise MissingPrerequisiteError(f"regions file not found: {path}")
    payload = json.loads(path.read_text())
    return {sid: Region.from_list(v) for sid, v in payload.items()}


def real_training_samples(cfg: ExperimentConfig) -> list[ImageSample]:
    """REAL train-split images pooled across all configured domains."""
    samples: list[ImageSample] = []
    for domain in cfg.data.domains:
        samples.extend(s for s in domain_samples(cfg, domain, Split.TRAIN) if s.label is Label.REAL)
    return samples


# ---------------------------------------------------------------------------
# generators

def _representation_dir(cfg: ExperimentConfig) -> Path:
    name = "inpainter" if cfg.residual.kind is ResidualKind.MIM else "autoencoder"
    return Path(cfg.out_dir) / name / "final"


def build_generator(cfg: ExperimentConfig) -> ResidualGenerator:
    kind = cfg.residual.kind
    if kind is ResidualKind.NONE:
        return NoneResidualGenerator()
    if kind is ResidualKind.HIGHPASS:
        return HighpassResidualGenerator()
    ckpt_dir = _representation_dir(cfg)
    if not (ckpt_dir / "meta.json").is_file():
        raise MissingPrerequisiteError(
            f"{kind.value} residual generation needs a trained model checkpoint at {ckpt_dir}; "
            "run train-rffr first")
    if kind is ResidualKind.MIM:
        model, _ = load_inpainter(ckpt_dir)
        return MimResidualGenerator(model)
    model, _ = load_autoencoder(ckpt_dir)
    return AutoencoderResidualGenerator(model)


# ---------------------------------------------------------------------------
# synth-data

def cmd_synth_data(cfg: ExperimentConfig, overwrite: bool = False) -> Path:
    """Generate per-domain real/fake PNG pairs, manifests and region records."""
    root = Path(cfg.out_dir)
    data_root = Path(cfg.data.root)
    if not data_root.is_absolute():
        data_root = root / data_root
    if data_root.exists() and any(data_root.iterdir()):
        if not overwrite:
            raise ConfigError(f"data directory {data_root} already exists; pass --overwrite to replace it")
        shutil.rmtree(data_root)
    data_root.mkdir(parents=True, exist_ok=True)

    synth = cfg.data.synthetic
    for d_idx, domain in enumerate(cfg.data.domains):
        kind = ArtifactKind(domain)
        domain_dir = data_root / domain
        image_dir = domain_dir / "images"
        image_dir.mkdir(parents=True)
        entries: list[ManifestEntry] = []
        regions: dict[str, list[int]] = {}
        for s_idx, split in enumerate(Split):
            for i in range(synth.pairs.get(split.value, 0)):
                pair = generate_synthetic_pair(SyntheticConfig(
                    rng_seed=_derived_seed(cfg.seed, 101, d_idx, s_idx, i),
                    artifact_kind=kind,
                    artifact_region_fraction=synth.artifact_region_fraction,
                    base_texture_params=TextureParams(
                        smoothness=synth.texture_smoothness, palette_seed=synth.palette_seed),
                    image_side=cfg.image_side,
                ))
                stem = f"{domain}-{split.value}-{i:04d}"
                for suffix, sample in [("real", pair.real), ("fake", pair.fake)]:
                    name = f"{stem}-{suffix}.png"
                    save_image(image_dir / name, sample.pixels)
                    entries.append(ManifestEntry(
                        path=(image_dir / name).resolve(), label=sample.label,
                        domain_tag=domain, split=split))
                regions[f"{stem}-fake"] = pair.region.to_list()
        save_manifest(domain_dir / "manifest.csv", entries)
        (domain_dir / "regions.json").write_text(json.dumps(regions, indent=2, sort_keys=True) + "\n")
        load_manifest(domain_dir / "manifest.csv")  # self-check
    finalize_command_dir(cfg, data_root)
    return data_root


# ---------------------------------------------------------------------------
# train-rffr

def cmd_train_rffr(cfg: ExperimentConfig, overwrite: bool = False) -> Path:
    """Train the representation model behind the configured residual kind."""
    root = Path(cfg.out_dir)
    kind = cfg.residual.kind
    if kind in (ResidualKind.HIGHPASS, ResidualKind.NONE):
        target = prepare_command_dir(root, "rffr-noop", overwrite)
        (target / "note.txt").write_text(
            f"residual kind {kind.value!r} needs no trained representation model\n")
        finalize_command_dir(cfg, target)
        return target

    reals = real_training_samples(cfg)
    sched = cfg.inpainter_schedule
    stream = iter_sample_batches(reals, sched.batch_size, np.random.default_rng(cfg.seed + 11), epochs=None)
    if kind is ResidualKind.MIM:
        target = prepare_command_dir(root, "inpainter", overwrite)
        result = train_inpainter(cfg.inpainter, sched, stream, cfg.grid())
        save_inpainter(target / "final", result.model, sched.total_steps, sched)
    else:
        target = prepare_command_dir(root, "autoencoder", overwrite)
        ae_cfg = AutoencoderConfig(image_side=cfg.image_side, rng_seed=cfg.inpainter.rng_seed)
        result = train_autoencoder(ae_cfg, sched, stream)
        save_autoencoder(target / "final", result.model, sched.total_steps, sched)
    (target / "loss_trace.json").write_text(json.dumps(result.loss_trace) + "\n")
    finalize_command_dir(cfg, target)
    return target


# ---------------------------------------------------------------------------
# train-detector

def _train_one_detector(
    cfg: ExperimentConfig,
    det_cfg: DetectorConfig,
    generator: ResidualGenerator,
    train_samples: list[ImageSample],
    stream_seed: int,
    checkpoint_dir: Path | None,
    curve_testsets: dict[str, list[ImageSample]] | None = None,
):
    grid = cfg.grid()
    amp = cfg.residual.amplification()
    sched = cfg.detector_schedule
    cached = generator
    if generator.kind is not ResidualKind.NONE:
        cached = CachedResidualGenerator(generator, train_samples, grid, amp)
    stream = iter_sample_batches(train_samples, sched.batch_size,
                                 np.random.default_rng(stream_seed), epochs=None)

    curves: dict[str, list[tuple[int, float]]] = {}
    on_step = None
    if curve_testsets:
        scorers = {dom: CachedScorer(samples, generator, grid, amp, det_cfg)
                   for dom, samples in curve_testsets.items()}
        curves = {dom: [] for dom in curve_testsets}

        def on_step(step: int, model: DualBranchModel) -> None:
            if step % cfg.eval.cadence != 0:
                return
            for dom, scorer in scorers.items():
                value = auc(ScoreSet.from_samples(scorer.samples, scorer.score(model)))
                curves[dom].append((step, value))

    result = train_detector(
        det_cfg, sched, stream, cached, grid, cfg.residual.p, amp,
        on_step=on_step, checkpoint_dir=checkpoint_dir,
        checkpoint_every=cfg.checkpoint_every if checkpoint_dir else None)
    return result, curves


def cmd_train_detector(cfg: ExperimentConfig, overwrite: bool = False, curves: bool = True) -> Path:
    """Train one classifier per configured train domain, with periodic test curves."""
    root = Path(cfg.out_dir)
    generator = build_generator(cfg)
    target = prepare_command_dir(root, "detector", overwrite)
    test_samples = {dom: domain_samples(cfg, dom, Split.TEST) for dom in cfg.test_domains()} \
        if curves else None
    for idx, domain in enumerate(cfg.train_domains()):
        train_samples = domain_samples(cfg, domain, Split.TRAIN)
        det_cfg = replace(cfg.detector, rng_seed=cfg.detector.rng_seed + idx)
        domain_dir = target / domain
        result, curve_map = _train_one_detector(
            cfg, det_cfg, generator, train_samples,
            stream_seed=_derived_seed(cfg.seed, 21, idx),
            checkpoint_dir=domain_dir,
            curve_testsets=test_samples,
        )
        (domain_dir / "loss_trace.json").write_text(json.dumps(result.loss_trace) + "\n")
        (domain_dir / "curves.json").write_text(json.dumps(
            {dom: [[int(s), float(a)] for s, a in pts] for dom, pts in curve_map.items()},
            indent=2, sort_keys=True) + "\n")
    finalize_command_dir(cfg, target)
    return target


# ---------------------------------------------------------------------------
# eval

def _checkpoint_refs(domain_dir: Path) -> list[CheckpointRef]:
    refs = []
    for path in sorted(domain_dir.glob("step-*")):
        if (path / "meta.json").is_file():
            refs.append(CheckpointRef(step=int(path.name.split("-")[1]), path=path))
    if not refs:
        raise MissingPrerequisiteError(
            f"no detector checkpoints under {domain_dir}; run train-detector first")
    return refs


def cmd_eval(cfg: ExperimentConfig, overwrite: bool = False) -> Path:
    """Cross-domain AUC matrix under the configured selection mode."""
    root = Path(cfg.out_dir)
    generator = build_generator(cfg)
    grid = cfg.grid()
    amp = cfg.residual.amplification()
    target = prepare_command_dir(root, "eval", overwrite)

    test_scorers: dict[str, CachedScorer] = {}
    val_scorers: dict[str, CachedScorer] = {}
    val_auc_memo: dict[tuple[str, str], list[float]] = {}
    for dom in cfg.test_domains():
        test_scorers[dom] = CachedScorer(domain_samples(cfg, dom, Split.TEST), generator, grid, amp, cfg.detector)

    report = EvalReport(selection_mode=cfg.eval.selection_mode)
    for domain in cfg.train_domains():
        domain_dir = Path(cfg.out_dir) / "detector" / domain
        refs = _checkpoint_refs(domain_dir)
        final_ref = select_model(refs, SelectionMode.VALIDATION_FREE,
                                 total_steps=cfg.detector_schedule.total_steps)
        final_model, _ = load_detector(final_ref.path)
        row: dict[str, dict] = {}
        for test_domain, scorer in test_scorers.items():
            cell: dict = {"intra_domain": domain == test_domain}
            try:
                if cfg.eval.selection_mode is SelectionMode.VALIDATION_FREE:
                    chosen_ref, chosen_model = final_ref, final_model
                else:
                    val_domain = cfg.eval.validation_domain or test_domain
                    if val_domain not in val_scorers:
                        val_scorers[val_domain] = CachedScorer(
                            domain_samples(cfg, val_domain, Split.VAL), generator, grid, amp, cfg.detector)
                    vs = val_scorers[val_domain]
                    memo_key = (domain, val_domain)
                    if memo_key not in val_auc_memo:
                        val_aucs = []
                        for ref in refs:
                            model, _ = load_detector(ref.path)
                            val_aucs.append(auc(ScoreSet.from_samples(vs.samples, vs.score(model))))
                        val_auc_memo[memo_key] = val_aucs
                    chosen_ref = select_model(refs, SelectionMode.ORACLE_VALIDATED,
                                              val_scores=val_auc_memo[memo_key])
                    chosen_model, _ = load_detector(chosen_ref.path)
                test_auc = 100.0 * auc(ScoreSet.from_samples(
                    scorer.samples, scorer.score(chosen_model)))
                cell["auc_pct"] = test_auc
                cell["checkpoint_step"] = chosen_ref.step
                if cfg.eval.selection_mode is SelectionMode.ORACLE_VALIDATED:
                    final_auc = 100.0 * auc(ScoreSet.from_samples(
                        scorer.samples, scorer.score(final_model)))
                    report.selection.append(selection_gap_record(
                        test_domain, (chosen_ref.step, test_auc), (final_ref.step, final_auc)))
            except Exception as exc:  # record the cell failure, keep the run alive
                cell["error"] = f"{type(exc).__name__}: {exc}"
            row[test_domain] = cell
        report.matrix[domain] = row
        if cfg.eval.selection_mode is SelectionMode.VALIDATION_FREE:
            report.selection.append({"train_domain": domain, "final_step": final_ref.step})

        curves_path = domain_dir / "curves.json"
        if curves_path.is_file():
            stored = json.loads(curves_path.read_text())
            for dom, pts in stored.items():
                report.curves[f"{domain}->{dom}"] = [(int(s), float(a)) for s, a in pts]

    report.save(target / "report.json")
    visualize.matrix_heatmap(report, target / "heatmap.png")
    if report.curves:
        visualize.curve_plot(report.curves, target / "curves.png")
    finalize_command_dir(cfg, target)
    return target


# ---------------------------------------------------------------------------
# visualize

def cmd_visualize(cfg: ExperimentConfig, overwrite: bool = False) -> Path:
    """Per-domain grids of original / reconstructed / residual images."""
    kind = cfg.residual.kind
    if kind not in (ResidualKind.MIM, ResidualKind.AUTOENCODER):
        raise ConfigError(f"visualize needs a reconstructing residual kind, not {kind.value!r}")
    generator = build_generator(cfg)
    grid = cfg.grid()
    amp = cfg.residual.amplification()
    if kind is ResidualKind.MIM:
        recon_fn: Callable[[ImageSample], np.ndarray] = \
            lambda s: reconstruct_full(generator.model, s, grid)
    else:
        def recon_fn(s: ImageSample) -> np.ndarray:
            out = reconstruct(generator.model, samples_to_tensor([s]))[0]
            return np.clip(out.permute(1, 2, 0).numpy(), 0.0, 1.0)

    target = prepare_command_dir(Path(cfg.out_dir), "visualize", overwrite)
    n = cfg.visualize_samples
    for domain in cfg.test_domains():
        samples = domain_samples(cfg, domain, Split.TEST)
        reals = [s for s in samples if s.label is Label.REAL][: max(1, n // 2)]
        fakes = [s for s in samples if s.label is Label.FAKE][: max(1, n - n // 2)]
        chosen = reals + fakes
        if not chosen:
            raise MissingPrerequisiteError(f"no test samples for domain {domain!r}")
        visualize.reconstruction_grid(recon_fn, generator, chosen, grid, amp,
                                      target / f"grid_{domain}.png")
    finalize_command_dir(cfg, target)
    return target


# ---------------------------------------------------------------------------
# ablate

def _eval_rows(model: DualBranchModel, generator: ResidualGenerator, cfg: ExperimentConfig,
               det_cfg: DetectorConfig, testsets: dict[str, list[ImageSample]]) -> dict[str, float]:
    grid = cfg.grid()
    amp = cfg.residual.amplification()
    out = {}
    for dom, samples in testsets.items():
        scorer = CachedScorer(samples, generator, grid, amp, det_cfg)
        out[dom] = 100.0 * auc(ScoreSet.from_samples(samples, scorer.score(model)))
    return out


def _study_residual_kind(cfg: ExperimentConfig, target: Path) -> list[dict]:
    train_domain = cfg.train_domains()[0]
    train_samples = domain_samples(cfg, train_domain, Split.TRAIN)
    testsets = {dom: domain_samples(cfg, dom, Split.TEST) for dom in cfg.test_domains()}
    rows = []
    for idx, kind in enumerate([ResidualKind.NONE, ResidualKind.AUTOENCODER,
                                ResidualKind.HIGHPASS, ResidualKind.MIM]):
        if kind is ResidualKind.NONE:
            generator: ResidualGenerator = NoneResidualGenerator()
        elif kind is ResidualKind.HIGHPASS:
            generator = HighpassResidualGenerator()
        elif kind is ResidualKind.MIM:
            generator = build_generator(replace(cfg, residual=replace(cfg.residual, kind=kind)))
        else:
            ae_dir = Path(cfg.out_dir) / "autoencoder" / "final"
            if (ae_dir / "meta.json").is_file():
                ae_model, _ = load_autoencoder(ae_dir)
            else:
                reals = real_training_samples(cfg)
                stream = iter_sample_batches(reals, cfg.inpainter_schedule.batch_size,
                                             np.random.default_rng(cfg.seed + 31), epochs=None)
                ae_model = train_autoencoder(
                    AutoencoderConfig(image_side=cfg.image_side, rng_seed=cfg.inpainter.rng_seed),
                    cfg.inpainter_schedule, stream).model
                save_autoencoder(target / "autoencoder" / "final", ae_model,
                                 cfg.inpainter_schedule.total_steps)
            generator = AutoencoderResidualGenerator(ae_model)
        det_cfg = replace(cfg.detector, use_residual=kind is not ResidualKind.NONE,
                          rng_seed=cfg.detector.rng_seed + idx)
        result, _ = _train_one_detector(cfg, det_cfg, generator, train_samples,
                                        stream_seed=_derived_seed(cfg.seed, 41, idx),
                                        checkpoint_dir=None)
        rows.append({
            "residual_kind": kind.value,
            "train_domain": train_domain,
            "auc_pct": _eval_rows(result.model, generator, cfg, det_cfg, testsets),
        })
    return rows


def _study_block_size(cfg: ExperimentConfig, target: Path) -> list[dict]:
    train_domain = cfg.train_domains()[0]
    rows = []
    for idx, k in enumerate([2, 4, 6]):
        if cfg.image_side % k != 0:
            raise ConfigError(
                f"block-size study needs k in {{2, 4, 6}} to divide image_side; "
                f"{k} does not divide {cfg.image_side} (use e.g. 48, 96 or 192)")
        block_side = cfg.image_side // k
        for name, patch in [("inpainter", cfg.inpainter.patch_side),
                            ("detector", cfg.detector.patch_side)]:
            if block_side % patch != 0:
                raise ConfigError(f"block-size study: {name}.patch_side {patch} "
                                  f"must divide block side {block_side} at k={k}")
        k_cfg = replace(cfg, grid_k=k)
        reals = real_training_samples(cfg)
        stream = iter_sample_batches(reals, cfg.inpainter_schedule.batch_size,
                                     np.random.default_rng(cfg.seed + 51 + idx), epochs=None)
        inp = train_inpainter(cfg.inpainter, cfg.inpainter_schedule, stream, k_cfg.grid())
        generator = MimResidualGenerator(inp.model)
        det_cfg = replace(cfg.detector, rng_seed=cfg.detector.rng_seed + idx)
        train_samples = domain_samples(cfg, train_domain, Split.TRAIN)
        testsets = {dom: domain_samples(cfg, dom, Split.TEST) for dom in cfg.test_domains()}
        result, _ = _train_one_detector(k_cfg, det_cfg, generator, train_samples,
                                        stream_seed=_derived_seed(cfg.seed, 52, idx),
                                        checkpoint_dir=None)
        rows.append({
            "k": k,
            "train_domain": train_domain,
            "auc_pct": _eval_rows(result.model, generator, k_cfg, det_cfg, testsets),
            "inference_cost_passes": k * k,
        })
    return rows


_INPUT_VARIANTS = [
    {"original": "full", "residual": None},
    {"original": None, "residual": "full"},
    {"original": "full", "residual": "full"},
    {"original": "random", "residual": None},
    {"original": None, "residual": "random"},
    {"original": "random", "residual": "random"},
]


def _study_input_variant(cfg: ExperimentConfig, target: Path) -> list[dict]:
    train_domain = cfg.train_domains()[0]
    train_samples = domain_samples(cfg, train_domain, Split.TRAIN)
    testsets = {dom: domain_samples(cfg, dom, Split.TEST) for dom in cfg.test_domains()}
    mim_cfg = replace(cfg, residual=replace(cfg.residual, kind=ResidualKind.MIM))
    rows = []
    for idx, variant in enumerate(_INPUT_VARIANTS):
        use_original = variant["original"] is not None
        use_residual = variant["residual"] is not None
        sampling = variant["original"] if use_original else variant["residual"]
        generator = build_generator(mim_cfg) if use_residual else NoneResidualGenerator()
        det_cfg = replace(cfg.detector, use_original=use_original, use_residual=use_residual,
                          rng_seed=cfg.detector.rng_seed + idx)
        p = 1.0 if sampling == "full" else cfg.residual.p
        var_cfg = replace(cfg, residual=replace(cfg.residual, p=p,
                                                kind=ResidualKind.MIM if use_residual else ResidualKind.NONE))
        result, _ = _train_one_detector(var_cfg, det_cfg, generator, train_samples,
                                        stream_seed=_derived_seed(cfg.seed, 61, idx),
                                        checkpoint_dir=None)
        rows.append({
            "original": variant["original"],
            "residual": variant["residual"],
            "train_domain": train_domain,
            "auc_pct": _eval_rows(result.model, generator, cfg, det_cfg, testsets),
        })
    return rows


def _study_data_scale(cfg: ExperimentConfig, target: Path) -> list[dict]:
    train_domain = cfg.train_domains()[0]
    train_samples = domain_samples(cfg, train_domain, Split.TRAIN)
    testsets = {dom: domain_samples(cfg, dom, Split.TEST) for dom in cfg.test_domains()}
    reals = real_training_samples(cfg)
    rows = []
    for idx, fraction in enumerate([0.5, 1.0]):
        n = max(1, int(round(len(reals) * fraction)))
        subset = reals[:n]
        stream = iter_sample_batches(subset, cfg.inpainter_schedule.batch_size,
                                     np.random.default_rng(cfg.seed + 71 + idx), epochs=None)
        inp = train_inpainter(cfg.inpainter, cfg.inpainter_schedule, stream, cfg.grid())
        generator = MimResidualGenerator(inp.model)
        det_cfg = replace(cfg.detector, rng_seed=cfg.detector.rng_seed + idx)
        result, _ = _train_one_detector(cfg, det_cfg, generator, train_samples,
                                        stream_seed=_derived_seed(cfg.seed, 72, idx),
                                        checkpoint_dir=None)
        rows.append({
            "real_images": n,
            "fraction": fraction,
            "train_domain": train_domain,
            "auc_pct": _eval_rows(result.model, generator, cfg, det_cfg, testsets),
        })
    return rows


_STUDIES = {
    AblationStudy.RESIDUAL_KIND: _study_residual_kind,
    AblationStudy.BLOCK_SIZE: _study_block_size,
    AblationStudy.INPUT_VARIANT: _study_input_variant,
    AblationStudy.DATA_SCALE: _study_data_scale,
}


def cmd_ablate(cfg: ExperimentConfig, study: AblationStudy, overwrite: bool = False) -> Path:
    """Run one comparative study and write its report."""
    target = prepare_command_dir(Path(cfg.out_dir) / "ablate", study.value, overwrite)
    rows = _STUDIES[study](cfg, target)
    payload = {"study": study.value, "rows": rows}
    (target / "report.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    _plot_study(rows, study, target / "summary.png")
    finalize_command_dir(cfg, target)
    return target


def _plot_study(rows: list[dict], study: AblationStudy, path: Path) -> None:
    import matplotlib.pyplot as plt

    labels, means = [], []
    for row in rows:
        aucs = list(row["auc_pct"].values())
        means.append(float(np.mean(aucs)))
        if study is AblationStudy.RESIDUAL_KIND:
            labels.append(row["residual_kind"])
        elif study is AblationStudy.BLOCK_SIZE:
            labels.append(f"k={row['k']}")
        elif study is AblationStudy.INPUT_VARIANT:
            parts = [f"orig:{row['original'] or '-'}", f"res:{row['residual'] or '-'}"]
            labels.append("\n".join(parts))
        else:
            labels.append(f"{row['real_images']} reals")
    fig, ax = plt.subplots(figsize=(1.8 + 1.2 * len(rows), 4), dpi=110)
    ax.bar(range(len(rows)), means, color="#4878af")
    ax.set_xticks(range(len(rows)), labels, fontsize=8)
    ax.set_ylabel("mean AUC (%)")
    ax.set_title(study.value.replace("_", " "))
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
