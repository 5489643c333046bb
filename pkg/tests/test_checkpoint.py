import numpy as np
import pytest

from mimres.checkpoint import load_checkpoint, save_checkpoint
from mimres.errors import InputError, MissingPrerequisiteError


def _params(seed=0):
    rng = np.random.default_rng(seed)
    return {
        "encoder.weight": rng.standard_normal((8, 4)).astype(np.float32),
        "encoder.bias": rng.standard_normal(8).astype(np.float32),
        "pos": rng.standard_normal((1, 16, 8)).astype(np.float32),
    }


def test_bit_exact_round_trip(tmp_path):
    params = _params()
    save_checkpoint(tmp_path / "ck", role="inpainter", step=42,
                    config={"dim": 8}, params=params, schedule={"base_lr": 1e-4})
    ckpt = load_checkpoint(tmp_path / "ck")
    assert ckpt.role == "inpainter"
    assert ckpt.step == 42
    assert ckpt.config == {"dim": 8}
    assert ckpt.schedule == {"base_lr": 1e-4}
    for name, arr in params.items():
        assert ckpt.params[name].dtype == np.float32
        assert np.array_equal(ckpt.params[name], arr)
        assert ckpt.params[name].tobytes() == arr.tobytes()


def test_save_load_save_identical_bytes(tmp_path):
    params = _params(1)
    save_checkpoint(tmp_path / "a", role="detector", step=1, config={}, params=params)
    ckpt = load_checkpoint(tmp_path / "a")
    save_checkpoint(tmp_path / "b", role="detector", step=1, config={}, params=ckpt.params)
    for f in sorted((tmp_path / "a").iterdir()):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_role_mismatch(tmp_path):
    save_checkpoint(tmp_path / "ck", role="detector", step=1, config={}, params=_params())
    with pytest.raises(InputError, match="role"):
        load_checkpoint(tmp_path / "ck", expected_role="inpainter")


def test_missing_meta(tmp_path):
    with pytest.raises(MissingPrerequisiteError):
        load_checkpoint(tmp_path / "nope")


def test_truncated_param_file_rejected(tmp_path):
    save_checkpoint(tmp_path / "ck", role="detector", step=1, config={}, params=_params())
    victim = tmp_path / "ck" / "pos.f32"
    victim.write_bytes(victim.read_bytes()[:-8])
    with pytest.raises(InputError, match="pos"):
        load_checkpoint(tmp_path / "ck")


def test_non_finite_params_rejected(tmp_path):
    params = _params()
    params["encoder.bias"][0] = np.nan
    with pytest.raises(InputError, match="non-finite"):
        save_checkpoint(tmp_path / "ck", role="detector", step=1, config={}, params=params)


def test_little_endian_on_disk(tmp_path):
    params = {"x": np.array([1.0, -2.5], dtype=np.float32)}
    save_checkpoint(tmp_path / "ck", role="detector", step=0, config={}, params=params)
    raw = (tmp_path / "ck" / "x.f32").read_bytes()
    assert np.frombuffer(raw, dtype="<f4").tolist() == [1.0, -2.5]
