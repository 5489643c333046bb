import hashlib
import json
from pathlib import Path

import pytest

from mimres.cli import main
from mimres.errors import NumericFailureError
from mimres.evaluation import EvalReport

MINI_CONFIG = {
    "seed": 13,
    "image_side": 32,
    "grid_k": 4,
    "inpainter": {"patch_side": 8, "encoder_dim": 16, "encoder_layers": 1,
                  "encoder_heads": 2, "decoder_dim": 16, "decoder_layers": 1, "decoder_heads": 2},
    "detector": {"patch_side": 8, "embed_dim": 16, "layers": 1, "heads": 2},
    "inpainter_schedule": {"base_lr": 1e-3, "total_steps": 6, "warmup_steps": 1, "batch_size": 4},
    "detector_schedule": {"base_lr": 1e-3, "total_steps": 6, "warmup_steps": 0, "batch_size": 4},
    "data": {"synthetic": {"pairs": {"train": 3, "val": 2, "test": 3}}},
    "eval": {"cadence": 3},
    "checkpoint_every": 3,
    "visualize_samples": 2,
}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    config_path = root / "config.json"
    out_dir = root / "out"
    payload = dict(MINI_CONFIG)
    payload["out_dir"] = str(out_dir)
    config_path.write_text(json.dumps(payload, indent=2))
    return config_path, out_dir


def _run(config_path, *args):
    return main([*args, "--config", str(config_path)])


def _tree_hashes(root: Path) -> dict[str, str]:
    return {p.relative_to(root).as_posix(): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}


def test_missing_prerequisite_exit_codes(workspace):
    config_path, out_dir = workspace
    assert _run(config_path, "eval") == 3          # no detector yet
    assert _run(config_path, "train-rffr") == 3    # no data yet
    assert main(["eval", "--config", str(out_dir / "nope.json")]) == 2


def test_full_pipeline(workspace):
    config_path, out_dir = workspace
    assert _run(config_path, "synth-data") == 0
    for domain in ("blend_seam", "checkerboard"):
        ddir = out_dir / "data" / domain
        assert (ddir / "manifest.csv").is_file()
        assert (ddir / "regions.json").is_file()
        assert len(list((ddir / "images").glob("*.png"))) == 2 * (3 + 2 + 3)

    assert _run(config_path, "train-rffr") == 0
    assert (out_dir / "inpainter" / "final" / "meta.json").is_file()

    assert _run(config_path, "train-detector") == 0
    for domain in ("blend_seam", "checkerboard"):
        ddir = out_dir / "detector" / domain
        assert (ddir / "step-000003" / "meta.json").is_file()
        assert (ddir / "step-000006" / "meta.json").is_file()
        curves = json.loads((ddir / "curves.json").read_text())
        assert set(curves) == {"blend_seam", "checkerboard"}
        assert [s for s, _ in curves["blend_seam"]] == [3, 6]

    assert _run(config_path, "eval") == 0
    report = EvalReport.load(out_dir / "eval" / "report.json")
    assert set(report.matrix) == {"blend_seam", "checkerboard"}
    for tr in report.matrix:
        for te, cell in report.matrix[tr].items():
            assert cell["intra_domain"] == (tr == te)
            assert "auc_pct" in cell
    assert (out_dir / "eval" / "heatmap.png").is_file()
    assert (out_dir / "eval" / "curves.png").is_file()
    assert (out_dir / "eval" / "config.resolved.json").is_file()
    manifest = json.loads((out_dir / "eval" / "files_manifest.json").read_text())
    assert "report.json" in manifest["files"]

    assert _run(config_path, "visualize") == 0
    assert (out_dir / "visualize" / "grid_blend_seam.png").is_file()


def test_refuses_to_clobber_without_overwrite(workspace):
    config_path, out_dir = workspace
    assert (out_dir / "eval").is_dir()
    assert _run(config_path, "eval") == 2
    assert _run(config_path, "eval", "--overwrite") == 0


def test_rerun_is_byte_identical(workspace):
    """Resolved config + seed determine every artifact byte."""
    config_path, out_dir = workspace
    before = {name: _tree_hashes(out_dir / name)
              for name in ("data", "inpainter", "detector", "eval", "visualize")}
    for verb in ("synth-data", "train-rffr", "train-detector", "eval", "visualize"):
        assert _run(config_path, verb, "--overwrite") == 0
    after = {name: _tree_hashes(out_dir / name)
             for name in ("data", "inpainter", "detector", "eval", "visualize")}
    assert before == after


def test_oracle_eval_mode(workspace, tmp_path):
    config_path, out_dir = workspace
    payload = json.loads(config_path.read_text())
    payload["eval"] = {"cadence": 3, "selection_mode": "oracle_validated"}
    oracle_config = tmp_path / "oracle.json"
    oracle_config.write_text(json.dumps(payload))
    assert _run(oracle_config, "eval", "--overwrite") == 0
    report = EvalReport.load(out_dir / "eval" / "report.json")
    assert report.selection, "oracle mode must emit selection gap records"
    rec = report.selection[0]
    assert {"validated_step", "final_step", "gap_pct"} <= set(rec)
    # restore validation-free eval outputs for later tests
    assert _run(config_path, "eval", "--overwrite") == 0


def test_ablate_input_variant(workspace):
    config_path, out_dir = workspace
    assert _run(config_path, "ablate", "--study", "input_variant") == 0
    report = json.loads((out_dir / "ablate" / "input_variant" / "report.json").read_text())
    assert len(report["rows"]) == 6
    combos = {(r["original"], r["residual"]) for r in report["rows"]}
    assert ("random", "random") in combos and ("full", None) in combos


def test_ablate_residual_kind(workspace):
    config_path, out_dir = workspace
    assert _run(config_path, "ablate", "--study", "residual_kind") == 0
    report = json.loads((out_dir / "ablate" / "residual_kind" / "report.json").read_text())
    kinds = [r["residual_kind"] for r in report["rows"]]
    assert kinds == ["none", "autoencoder", "highpass", "mim"]
    for row in report["rows"]:
        assert set(row["auc_pct"]) == {"blend_seam", "checkerboard"}


def test_ablate_data_scale(workspace):
    config_path, out_dir = workspace
    assert _run(config_path, "ablate", "--study", "data_scale") == 0
    report = json.loads((out_dir / "ablate" / "data_scale" / "report.json").read_text())
    assert [r["fraction"] for r in report["rows"]] == [0.5, 1.0]


def test_ablate_block_size(tmp_path):
    payload = dict(MINI_CONFIG)
    payload.update({
        "image_side": 48,
        "out_dir": str(tmp_path / "out48"),
        "inpainter": {"patch_side": 4, "encoder_dim": 16, "encoder_layers": 1,
                      "encoder_heads": 2, "decoder_dim": 16, "decoder_layers": 1, "decoder_heads": 2},
        "detector": {"patch_side": 4, "embed_dim": 16, "layers": 1, "heads": 2},
        "data": {"synthetic": {"pairs": {"train": 2, "val": 1, "test": 2}}},
    })
    config_path = tmp_path / "c48.json"
    config_path.write_text(json.dumps(payload))
    assert _run(config_path, "synth-data") == 0
    assert _run(config_path, "ablate", "--study", "block_size") == 0
    report = json.loads((tmp_path / "out48" / "ablate" / "block_size" / "report.json").read_text())
    assert [(r["k"], r["inference_cost_passes"]) for r in report["rows"]] == \
        [(2, 4), (4, 16), (6, 36)]


def test_block_size_study_rejects_incompatible_side(workspace):
    config_path, _ = workspace
    assert _run(config_path, "ablate", "--study", "block_size", "--overwrite") == 2  # 32 % 6 != 0


def test_numeric_failure_exit_code(workspace, monkeypatch):
    config_path, _ = workspace
    import mimres.cli as cli_mod

    def boom(cfg, overwrite=False):
        raise NumericFailureError("non-finite reconstruction loss at step 3", step=3)

    monkeypatch.setattr(cli_mod, "cmd_train_rffr", boom)
    assert main(["train-rffr", "--config", str(config_path)]) == 4
