import math

import pytest

from mimres.errors import InputError
from mimres.schedule import TrainSchedule


def test_warmup_is_linear():
    sched = TrainSchedule(base_lr=1e-3, total_steps=100, warmup_steps=10)
    for s in range(10):
        assert sched.lr_at(s) == pytest.approx(1e-3 * s / 10)


def test_cosine_reaches_zero_at_total():
    sched = TrainSchedule(base_lr=7.5e-5, total_steps=200, warmup_steps=20)
    assert sched.lr_at(200) == pytest.approx(0.0, abs=1e-20)
    assert sched.lr_at(20) == pytest.approx(7.5e-5)
    mid = sched.lr_at(110)  # halfway through decay
    assert mid == pytest.approx(7.5e-5 * 0.5 * (1 + math.cos(math.pi / 2)))


def test_no_warmup_starts_at_base():
    sched = TrainSchedule(base_lr=2e-5, total_steps=50, warmup_steps=0)
    assert sched.lr_at(0) == pytest.approx(2e-5)


def test_monotone_decay_after_warmup():
    sched = TrainSchedule(base_lr=1.0, total_steps=300, warmup_steps=30)
    values = [sched.lr_at(s) for s in range(30, 301)]
    assert all(b <= a for a, b in zip(values, values[1:]))


def test_validation():
    with pytest.raises(InputError):
        TrainSchedule(base_lr=0.0, total_steps=10)
    with pytest.raises(InputError):
        TrainSchedule(base_lr=1e-3, total_steps=10, warmup_steps=11)
    with pytest.raises(InputError):
        TrainSchedule(base_lr=1e-3, total_steps=0)
    with pytest.raises(InputError):
        TrainSchedule(base_lr=1e-3, total_steps=10, weight_decay=-0.1)
