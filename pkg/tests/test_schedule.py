import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from camtrap.errors import StepOutOfRange, ValidationError
from camtrap.schedule import ScheduleConfig, lr_at, lr_curve, warmup_steps_for, write_schedule

DEFAULT_LR = dict(max_lr=1e-4, end_lr=1e-6)


@pytest.mark.parametrize("bs, ga, expected", [(16, 2, 300), (11, 3, 200), (13, 3, 200), (1, 1, 600)])
def test_warmup_steps(bs, ga, expected):
    assert warmup_steps_for(bs, ga) == expected
    # oracle: images seen during warm-up, grouped into optimizer steps
    assert expected == math.ceil(600 * bs / (bs * ga))


def test_key_points():
    cfg = ScheduleConfig(warmup_steps=300, total_steps=1301, **DEFAULT_LR)
    assert lr_at(300, cfg) == pytest.approx(1e-4, rel=1e-12)
    assert lr_at(1300, cfg) == 1e-6
    assert lr_at(800, cfg) == pytest.approx(5.05e-5, rel=1e-12)
    assert lr_at(0, cfg) == 1e-6


def test_zero_warmup_starts_at_max():
    cfg = ScheduleConfig(warmup_steps=0, total_steps=10, **DEFAULT_LR)
    assert lr_at(0, cfg) == 1e-4


def test_single_step_schedule_ends_at_end_lr():
    assert lr_at(0, ScheduleConfig(0, 1, **DEFAULT_LR)) == 1e-6


def test_out_of_range():
    cfg = ScheduleConfig(3, 10, **DEFAULT_LR)
    for step in (-1, 10):
        with pytest.raises(StepOutOfRange):
            lr_at(step, cfg)


@pytest.mark.parametrize(
    "kw",
    [dict(warmup_steps=10, total_steps=10), dict(warmup_steps=-1, total_steps=10),
     dict(warmup_steps=0, total_steps=0), dict(warmup_steps=0, total_steps=5, max_lr=1e-6, end_lr=1e-4)],
)
def test_invalid_configs(kw):
    with pytest.raises(ValidationError):
        ScheduleConfig(**kw)


configs = st.builds(
    lambda total, frac: ScheduleConfig(int(frac * (total - 1)), total, **DEFAULT_LR),
    st.integers(2, 3000),
    st.floats(0, 0.99),
)


@given(configs)
@settings(max_examples=60, deadline=None)
def test_shape(cfg):
    lrs = np.array([lr_at(s, cfg) for s in range(cfg.total_steps)])
    w = cfg.warmup_steps
    assert np.all(np.diff(lrs[: w + 1]) >= 0)
    assert np.all(np.diff(lrs[w:]) <= 0)
    assert lrs.min() >= cfg.end_lr and lrs.max() <= cfg.max_lr
    np.testing.assert_allclose(lr_curve(cfg), lrs, rtol=1e-14)


@given(configs, st.floats(0, 1))
def test_cosine_symmetry(cfg, u):
    w, last = cfg.warmup_steps, cfg.total_steps - 1
    span = last - w
    if span < 2:
        return
    k = int(round(u * span))
    mean = 0.5 * (lr_at(w + k, cfg) + lr_at(w + span - k, cfg))
    assert mean == pytest.approx(0.5 * (cfg.max_lr + cfg.end_lr), rel=1e-12)


def test_dump(tmp_path):
    p = tmp_path / "lr.csv"
    write_schedule(ScheduleConfig(2, 5, **DEFAULT_LR), p)
    lines = p.read_text().splitlines()
    assert lines[0] == "step,lr"
    assert len(lines) == 6
    assert float(lines[3].split(",")[1]) == 1e-4
    assert float(lines[-1].split(",")[1]) == 1e-6
