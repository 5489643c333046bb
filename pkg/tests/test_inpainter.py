import numpy as np
import pytest
import torch

from mimres.blocks import BlockGrid, ImageSample, Label, divide, make_mask
from mimres.errors import InputError, NumericFailureError
from mimres.inpainter import (InpainterConfig, InpainterModel, inpaint,
                              load_inpainter, reconstruct_full, rep_loss,
                              save_inpainter, train_inpainter)
from mimres.manifest import iter_sample_batches
from mimres.schedule import TrainSchedule

from conftest import random_sample, synth_pair
from gradcheck import fd_check


@pytest.fixture(scope="module")
def model():
    cfg = InpainterConfig(image_side=64, patch_side=8, encoder_dim=32, encoder_layers=2,
                          encoder_heads=4, decoder_dim=16, decoder_layers=1,
                          decoder_heads=4, rng_seed=0)
    return InpainterModel(cfg)


def test_config_validation():
    with pytest.raises(InputError):
        InpainterConfig(image_side=60, patch_side=8)
    with pytest.raises(InputError):
        InpainterConfig(encoder_dim=30, encoder_heads=4)


def test_untrained_output_shape_and_finite(model, grid):
    sample = random_sample(0)
    out = inpaint(model, sample, make_mask(5, grid))
    assert out.shape == (16, 16, 3)
    assert np.isfinite(out).all()


def test_positional_table_counts(model):
    expected = model.config.num_patches
    assert model.encoder_pos.shape == (1, expected, model.config.encoder_dim)
    assert model.decoder_pos.shape == (1, expected, model.config.decoder_dim)


def test_inference_deterministic(model, grid):
    sample = random_sample(1)
    mask = make_mask(3, grid)
    assert np.array_equal(inpaint(model, sample, mask), inpaint(model, sample, mask))


def test_masked_content_causality(model, grid):
    """Zeroed vs randomized masked pixels give bit-identical reconstructions."""
    sample = random_sample(2)
    for j in (1, 7, 16):
        mask = make_mask(j, grid)
        y0, x0 = grid.block_origin(j)
        zeroed = sample.pixels.copy()
        zeroed[y0:y0 + 16, x0:x0 + 16] = 0.0
        randomized = sample.pixels.copy()
        randomized[y0:y0 + 16, x0:x0 + 16] = np.random.default_rng(j).random((16, 16, 3), dtype=np.float32)
        out_a = inpaint(model, ImageSample(zeroed, Label.REAL, "t", "a"), mask)
        out_b = inpaint(model, ImageSample(randomized, Label.REAL, "t", "b"), mask)
        assert np.array_equal(out_a, out_b)


def test_geometry_mismatch_rejected(model):
    sample = random_sample(3, side=32)
    mask = make_mask(1, BlockGrid(k=4, image_side=32))
    with pytest.raises(InputError):
        inpaint(model, sample, mask)


def test_rep_loss_arithmetic():
    b = np.zeros((2, 2, 1))
    assert rep_loss(b, b) == 0.0
    assert rep_loss(b + 0.1, b) == pytest.approx(0.01, abs=1e-12)
    b_hat = np.array([[1.0, 0.0], [0.0, 0.0]]).reshape(2, 2, 1)
    assert rep_loss(b_hat, b) == pytest.approx(0.25, abs=1e-12)
    with pytest.raises(InputError):
        rep_loss(np.zeros((2, 2, 3)), np.zeros((2, 3, 2)))


def test_reconstruct_full_matches_blockwise_loop(model, grid):
    sample = random_sample(4)
    full = reconstruct_full(model, sample, grid)
    assert full.shape == sample.pixels.shape
    for j in (1, 6, 11, 16):
        y0, x0 = grid.block_origin(j)
        manual = np.clip(inpaint(model, sample, make_mask(j, grid)), 0.0, 1.0)
        assert np.allclose(full[y0:y0 + 16, x0:x0 + 16], manual, atol=1e-6)


def test_reconstruct_full_k1_equals_single_inpaint():
    cfg = InpainterConfig(image_side=32, patch_side=8, encoder_dim=16, encoder_layers=1,
                          encoder_heads=2, decoder_dim=16, decoder_layers=1,
                          decoder_heads=2, rng_seed=1)
    model = InpainterModel(cfg)
    grid = BlockGrid(k=1, image_side=32)
    sample = random_sample(5, side=32)
    full = reconstruct_full(model, sample, grid)
    single = np.clip(inpaint(model, sample, make_mask(1, grid)), 0.0, 1.0)
    assert np.allclose(full, single, atol=1e-7)


def test_gradients_match_finite_differences():
    """Autograd vs central differences on the composed masked-reconstruction loss."""
    cfg = InpainterConfig(image_side=16, patch_side=4, encoder_dim=16, encoder_layers=2,
                          encoder_heads=2, decoder_dim=8, decoder_layers=1,
                          decoder_heads=2, rng_seed=2)
    model = InpainterModel(cfg).double()
    grid = BlockGrid(k=2, image_side=16)
    images = torch.from_numpy(np.random.default_rng(0).random((2, 3, 16, 16)))
    js = torch.tensor([1, 4])

    def loss_fn():
        pred = model.forward_blocks(images, js, grid)
        target = model.target_blocks(images, js, grid)
        return torch.mean((pred - target) ** 2)

    worst = fd_check(loss_fn, model.named_parameters(), entries_per_tensor=2)
    assert worst <= 1e-3


def test_trainer_rejects_fake_samples(grid):
    cfg = InpainterConfig(image_side=64, patch_side=8, encoder_dim=16, encoder_layers=1,
                          encoder_heads=2, decoder_dim=16, decoder_layers=1,
                          decoder_heads=2, rng_seed=0)
    sched = TrainSchedule(base_lr=1e-4, total_steps=5, warmup_steps=0, batch_size=2)
    consumed = []

    def stream():
        good = [random_sample(0), random_sample(1)]
        consumed.append("real-batch")
        yield good
        consumed.append("fake-batch")
        yield [random_sample(2), random_sample(3, label=Label.FAKE)]

    with pytest.raises(InputError, match="real images only"):
        train_inpainter(cfg, sched, stream(), grid)
    assert consumed == ["real-batch", "fake-batch"]


def test_training_decreases_loss_quickly(grid):
    cfg = InpainterConfig(image_side=64, patch_side=8, encoder_dim=32, encoder_layers=2,
                          encoder_heads=4, decoder_dim=16, decoder_layers=1,
                          decoder_heads=4, rng_seed=3)
    sched = TrainSchedule(base_lr=2e-3, total_steps=60, warmup_steps=5, batch_size=4)
    reals = [synth_pair(i).real for i in range(4)]
    stream = iter_sample_batches(reals, 4, np.random.default_rng(0), epochs=None)
    result = train_inpainter(cfg, sched, stream, grid)
    assert len(result.loss_trace) == 60
    assert np.mean(result.loss_trace[-10:]) < np.mean(result.loss_trace[:10])


def test_checkpoint_round_trip_bit_exact(model, tmp_path, grid):
    save_inpainter(tmp_path / "ck", model, step=7)
    loaded, step = load_inpainter(tmp_path / "ck")
    assert step == 7
    for (name, a), (name_b, b) in zip(model.state_dict().items(), loaded.state_dict().items()):
        assert name == name_b
        assert torch.equal(a, b)
    sample = random_sample(6)
    mask = make_mask(2, grid)
    assert np.array_equal(inpaint(model, sample, mask), inpaint(loaded, sample, mask))


def test_non_finite_inference_raises(model, grid):
    broken = InpainterModel(model.config)
    broken.load_state_dict(model.state_dict())
    with torch.no_grad():
        broken.output_proj.weight.fill_(float("inf"))
    with pytest.raises(NumericFailureError):
        inpaint(broken, random_sample(7), make_mask(1, grid))
