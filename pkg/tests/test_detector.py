import math

import numpy as np
import pytest
import torch

from mimres.blocks import BlockGrid, Label, block_positions, divide
from mimres.detector import (CachedScorer, DetectorConfig, DualBranchModel, MergeMode,
                             Prediction, cls_loss, forward, predict, score_samples,
                             train_detector)
from mimres.errors import InputError
from mimres.manifest import iter_sample_batches
from mimres.residual import (AmplificationConfig, HighpassResidualGenerator,
                             MimResidualGenerator, NoneResidualGenerator,
                             generate_training_input)
from mimres.inpainter import InpainterConfig, InpainterModel
from mimres.schedule import TrainSchedule

from conftest import random_sample, synth_pair
from gradcheck import fd_check

AMP = AmplificationConfig()


def _tiny_model(seed=0, **kw):
    cfg = DetectorConfig(image_side=64, patch_side=8, embed_dim=32, layers=2, heads=4,
                         rng_seed=seed, **kw)
    return DualBranchModel(cfg)


def _inputs(seed, grid, n_blocks=4):
    sample = random_sample(seed)
    indices = sorted(np.random.default_rng(seed).choice(16, size=n_blocks, replace=False) + 1)
    indices = [int(j) for j in indices]
    positions = block_positions(grid, indices)
    blocks = divide(sample, grid)
    originals = [blocks[j - 1] for j in indices]
    rng = np.random.default_rng(seed + 1)
    residuals = [np.clip(rng.standard_normal((16, 16, 3)) * 0.2, -1, 1).astype(np.float32)
                 for _ in indices]
    return sample, residuals, originals, positions


def test_prediction_invariant():
    with pytest.raises(InputError):
        Prediction(probs=np.array([0.7, 0.7]))
    pred = Prediction(probs=np.array([0.25, 0.75]))
    assert pred.p_fake == 0.75


def test_branches_are_independent_parameter_sets():
    model = _tiny_model(seed=14)
    expected = model.config.patch_grid_side ** 2
    for branch in (model.branch_original, model.branch_residual):
        assert branch.pos_table.shape == (1, expected, model.config.embed_dim)
    orig_params = {id(p) for p in model.branch_original.parameters()}
    res_params = {id(p) for p in model.branch_residual.parameters()}
    assert not orig_params & res_params


def test_forward_probs_sum_to_one(grid):
    model = _tiny_model()
    _, residuals, originals, positions = _inputs(0, grid)
    pred = forward(model, residuals, originals, positions, grid)
    assert pred.probs.sum() == pytest.approx(1.0, abs=1e-6)
    assert (pred.probs >= 0).all()


def test_forward_rejects_empty_and_misaligned(grid):
    model = _tiny_model()
    _, residuals, originals, positions = _inputs(1, grid)
    with pytest.raises(InputError):
        forward(model, [], [], [], grid)
    with pytest.raises(InputError):
        forward(model, residuals[:-1], originals, positions, grid)


def test_permutation_invariance(grid):
    """Reordering blocks (with positions) leaves the prediction unchanged within 1e-5."""
    model = _tiny_model()
    rng = np.random.default_rng(0)
    for case in range(10):
        _, residuals, originals, positions = _inputs(case + 10, grid, n_blocks=5)
        base = forward(model, residuals, originals, positions, grid)
        perm = rng.permutation(len(positions))
        pred = forward(model,
                       [residuals[i] for i in perm],
                       [originals[i] for i in perm],
                       [positions[i] for i in perm],
                       grid)
        assert np.allclose(base.probs, pred.probs, atol=1e-5)


def test_full_image_input_accepted(grid):
    model = _tiny_model()
    sample = random_sample(2)
    originals = divide(sample, grid)
    positions = block_positions(grid, list(range(1, 17)))
    residuals = [np.zeros((16, 16, 3), dtype=np.float32) for _ in range(16)]
    pred = forward(model, residuals, originals, positions, grid)
    assert pred.probs.shape == (2,)


def test_branch_independence(grid):
    """With the residual branch disabled, the output is a function of originals only."""
    cfg = DetectorConfig(image_side=64, patch_side=8, embed_dim=32, layers=2, heads=4,
                         rng_seed=5, use_original=True, use_residual=False)
    single = DualBranchModel(cfg)
    _, residuals, originals, positions = _inputs(3, grid)
    base = forward(single, residuals, originals, positions, grid)
    other = [r + 0.1 for r in residuals]  # residual contents must not matter
    assert np.array_equal(base.probs,
                          forward(single, other, originals, positions, grid).probs)

    # identical weights in a dual config with zeroed residual feature agree exactly
    dual = _tiny_model(seed=5)
    dual.load_state_dict(single.state_dict())
    feat_dim = dual.config.embed_dim
    orig_tok, res_tok, pos_ids, _ = _collate_single(dual, residuals, originals, positions, grid)
    with torch.no_grad():
        feat_orig = dual.branch_original(orig_tok, pos_ids, None)
        merged = torch.cat([feat_orig, torch.zeros(1, feat_dim)], dim=1)
        logits = dual.merge_head(merged)
        manual = torch.softmax(logits, dim=1)[0].numpy()
    assert np.allclose(base.probs, manual, atol=1e-7)


def _collate_single(model, residuals, originals, positions, grid):
    from mimres.detector import _blocks_to_tokens
    tok_o, ids = _blocks_to_tokens(originals, positions, model.config, grid)
    tok_r, _ = _blocks_to_tokens(residuals, positions, model.config, grid)
    return (torch.from_numpy(tok_o)[None], torch.from_numpy(tok_r)[None],
            torch.from_numpy(ids)[None], None)


def test_cls_loss_values():
    assert cls_loss(Prediction(np.array([1.0, 0.0])), Label.REAL) == 0.0
    assert cls_loss(Prediction(np.array([0.5, 0.5])), Label.REAL) == pytest.approx(math.log(2), abs=1e-9)
    assert cls_loss(Prediction(np.array([0.9, 0.1])), Label.REAL) == pytest.approx(-math.log(0.9), abs=1e-9)
    assert cls_loss(Prediction(np.array([0.9, 0.1])), np.array([1.0, 0.0])) == pytest.approx(-math.log(0.9), abs=1e-9)


def test_cls_loss_bounds():
    worst = cls_loss(Prediction(np.array([1.0, 0.0])), Label.FAKE)
    assert worst == pytest.approx(-math.log(1e-12))
    assert 0.0 <= worst <= -math.log(1e-12)
    with pytest.raises(InputError):
        cls_loss(Prediction(np.array([0.5, 0.5])), np.array([0.4, 0.6]))


def test_merge_modes_differ(grid):
    _, residuals, originals, positions = _inputs(4, grid)
    concat = _tiny_model(seed=6)
    summed = DualBranchModel(DetectorConfig(image_side=64, patch_side=8, embed_dim=32,
                                            layers=2, heads=4, merge=MergeMode.SUM, rng_seed=6))
    a = forward(concat, residuals, originals, positions, grid)
    b = forward(summed, residuals, originals, positions, grid)
    assert not np.allclose(a.probs, b.probs)


def test_gradients_match_finite_differences(grid):
    """FD check on the merge head and one attention block through the full loss."""
    cfg = DetectorConfig(image_side=16, patch_side=4, embed_dim=16, layers=2, heads=2, rng_seed=7)
    small_grid = BlockGrid(k=2, image_side=16)
    model = DualBranchModel(cfg).double()
    samples = [random_sample(20, side=16), random_sample(21, side=16, label=Label.FAKE)]
    selections = [[1, 3], [2]]
    rng = np.random.default_rng(0)
    residuals = [[np.clip(rng.standard_normal((8, 8, 3)) * 0.3, -1, 1) for _ in sel]
                 for sel in selections]

    from mimres.detector import _batch_loss

    def loss_fn():
        return _batch_loss(model, samples, selections, residuals, small_grid)

    checked = [(n, p) for n, p in model.named_parameters()
               if n.startswith("merge_head") or n.startswith("branch_original.blocks.0.attn")
               or n.startswith("branch_residual.blocks.0.attn")
               or n in ("branch_original.cls_token", "branch_residual.pos_table")]
    assert len(checked) >= 8
    worst = fd_check(loss_fn, checked, entries_per_tensor=2)
    assert worst <= 1e-3


def _toy_set(n_pairs=4):
    samples = []
    for i in range(n_pairs):
        pair = synth_pair(i)
        samples.extend([pair.real, pair.fake])
    return samples


def test_train_one_step_each_input_variant(grid):
    """All six input variants of the study matrix train a step without error."""
    sched = TrainSchedule(base_lr=1e-4, total_steps=1, warmup_steps=0, batch_size=4)
    inp_cfg = InpainterConfig(image_side=64, patch_side=8, encoder_dim=16, encoder_layers=1,
                              encoder_heads=2, decoder_dim=16, decoder_layers=1,
                              decoder_heads=2, rng_seed=0)
    mim = MimResidualGenerator(InpainterModel(inp_cfg))
    none = NoneResidualGenerator()
    samples = _toy_set(2)
    variants = [
        (dict(use_original=True, use_residual=False), none, 1.0),
        (dict(use_original=False, use_residual=True), mim, 1.0),
        (dict(use_original=True, use_residual=True), mim, 1.0),
        (dict(use_original=True, use_residual=False), none, 0.25),
        (dict(use_original=False, use_residual=True), mim, 0.25),
        (dict(use_original=True, use_residual=True), mim, 0.25),
    ]
    for i, (flags, gen, p) in enumerate(variants):
        cfg = DetectorConfig(image_side=64, patch_side=8, embed_dim=16, layers=1, heads=2,
                             rng_seed=i, **flags)
        stream = iter_sample_batches(samples, 4, np.random.default_rng(i), epochs=None)
        result = train_detector(cfg, sched, stream, gen, grid, p, AMP)
        assert len(result.loss_trace) == 1 and np.isfinite(result.loss_trace[0])


def test_train_rejects_none_generator_with_residual_branch(grid):
    sched = TrainSchedule(base_lr=1e-4, total_steps=1, warmup_steps=0, batch_size=2)
    stream = iter_sample_batches(_toy_set(1), 2, np.random.default_rng(0), epochs=None)
    with pytest.raises(InputError):
        train_detector(DetectorConfig(image_side=64, patch_side=8, embed_dim=16, layers=1,
                                      heads=2), sched, stream,
                       NoneResidualGenerator(), grid, 0.25, AMP)


def test_predict_deterministic_and_in_range(grid):
    model = _tiny_model(seed=8)
    gen = HighpassResidualGenerator()
    sample = random_sample(30)
    a = predict(model, sample, gen, grid, AMP)
    b = predict(model, sample, gen, grid, AMP)
    assert a == b
    assert 0.0 <= a <= 1.0


def test_score_samples_matches_predict(grid):
    model = _tiny_model(seed=9)
    gen = HighpassResidualGenerator()
    samples = [random_sample(40 + i) for i in range(3)]
    batch = score_samples(model, samples, gen, grid, AMP)
    singles = [predict(model, s, gen, grid, AMP) for s in samples]
    assert np.allclose(batch, singles, atol=1e-6)


def test_cached_scorer_matches_score_samples(grid):
    model = _tiny_model(seed=10)
    gen = HighpassResidualGenerator()
    samples = [random_sample(50 + i, label=Label.FAKE if i % 2 else Label.REAL) for i in range(4)]
    scorer = CachedScorer(samples, gen, grid, AMP, model.config)
    assert np.allclose(scorer.score(model), score_samples(model, samples, gen, grid, AMP), atol=1e-6)


def test_checkpoint_round_trip(grid, tmp_path):
    from mimres.detector import load_detector, save_detector
    model = _tiny_model(seed=11)
    save_detector(tmp_path / "ck", model, step=3)
    loaded, step = load_detector(tmp_path / "ck")
    assert step == 3
    _, residuals, originals, positions = _inputs(12, grid)
    a = forward(model, residuals, originals, positions, grid)
    b = forward(loaded, residuals, originals, positions, grid)
    assert np.array_equal(a.probs, b.probs)


def test_warm_start_from_checkpoint(grid, tmp_path):
    from mimres.detector import save_detector
    donor = _tiny_model(seed=12)
    save_detector(tmp_path / "warm", donor, step=100)
    sched = TrainSchedule(base_lr=1e-9, total_steps=1, warmup_steps=0, batch_size=2)
    stream = iter_sample_batches(_toy_set(1), 2, np.random.default_rng(0), epochs=None)
    result = train_detector(donor.config, sched, stream, HighpassResidualGenerator(),
                            grid, 1.0, AMP, init_checkpoint=tmp_path / "warm")
    # with a vanishing lr the trained weights stay at the warm-start values
    donor_state = donor.state_dict()
    for name, value in result.model.state_dict().items():
        assert torch.allclose(value, donor_state[name], atol=1e-5)
