"""AdamW 与梯度裁剪测试"""
import math

import numpy as np
import pytest

from autograd import Tensor
from errors import ConfigError, ContractError
from optim import AdamW, clip_grad_norm, clip_grad_value, global_norm, scheduled_lr


def _param(values):
    return Tensor(np.asarray(values, dtype=np.float64), requires_grad=True)


def test_global_norm():
    assert global_norm([np.array([3.0]), np.array([[4.0]])]) == 5.0


def test_clip_norm_scales_jointly():
    grads, norm = clip_grad_norm([np.array([3.0]), np.array([4.0])], 1.0)
    assert norm == 5.0
    np.testing.assert_allclose(np.concatenate(grads), [0.6, 0.8])


def test_clip_norm_below_threshold_is_untouched():
    original = [np.array([0.1, -0.2])]
    grads, _ = clip_grad_norm(original, 0.5)
    assert grads[0] is original[0]


def test_clip_value():
    grads, _ = clip_grad_value([np.array([-2.0, 0.1, 3.0])], 0.5)
    np.testing.assert_array_equal(grads[0], [-0.5, 0.1, 0.5])


def test_first_step_moves_by_lr():
    p = _param([1.0, -1.0, 2.0])
    p.grad = np.array([0.3, -5.0, 0.01])
    opt = AdamW([("p", p)], lr=0.01, weight_decay=0.0, grad_clip=1e9)
    opt.step()
    np.testing.assert_allclose(p.data, [0.99, -0.99, 1.99], atol=1e-6)


def test_converges_on_quadratic():
    target = np.array([1.0, -2.0, 0.5])
    p = _param(np.zeros(3))
    opt = AdamW([("p", p)], lr=0.05, weight_decay=0.0, grad_clip=1e9)
    for _ in range(500):
        p.grad = 2.0 * (p.data - target)
        opt.step()
    np.testing.assert_allclose(p.data, target, atol=1e-3)


def test_decay_is_decoupled_from_gradient():
    values = np.array([2.0, -4.0])
    p = _param(values)
    opt = AdamW([("p", p)], lr=0.1, weight_decay=0.5)
    opt.step()
    np.testing.assert_array_equal(p.data, values * (1.0 - 0.1 * 0.5))


def test_zero_lr_leaves_parameters_untouched():
    p = _param([0.25, 0.5])
    before = p.data.copy()
    p.grad = np.array([1.0, -1.0])
    AdamW([("p", p)], lr=0.0).step()
    assert p.data.tobytes() == before.tobytes()


def test_step_reports_pre_clip_norm():
    p = _param([0.0, 0.0])
    p.grad = np.array([3.0, 4.0])
    stats = AdamW([("p", p)], lr=0.1, grad_clip=0.5).step()
    assert stats["grad_norm"] == 5.0
    assert stats["clipped_norm"] == pytest.approx(0.5)


def test_state_only_for_given_parameters():
    a, b = _param([1.0]), _param([2.0])
    opt = AdamW([("a", a), ("b", b)])
    assert opt.state_names() == ["a", "b"]


def test_rejects_frozen_parameter():
    with pytest.raises(ContractError):
        AdamW([("w", Tensor(np.ones(2)))])


@pytest.mark.parametrize("kwargs", [{"lr": -1.0}, {"clip_mode": "median"}])
def test_invalid_settings(kwargs):
    with pytest.raises(ConfigError):
        AdamW([("p", _param([1.0]))], **kwargs)


def test_cosine_schedule():
    assert scheduled_lr(0.1, 0, 10, "cosine") == pytest.approx(0.1)
    assert scheduled_lr(0.1, 5, 10, "cosine") == pytest.approx(0.05)
    assert scheduled_lr(0.1, 10, 10, "cosine") == pytest.approx(0.0, abs=1e-12)
    assert scheduled_lr(0.1, 7, 10, "constant") == 0.1
    with pytest.raises(ConfigError):
        scheduled_lr(0.1, 0, 10, "step")


def test_cosine_is_monotone():
    lrs = [scheduled_lr(1.0, s, 20, "cosine") for s in range(21)]
    assert all(a >= b for a, b in zip(lrs, lrs[1:]))
    assert not math.isnan(sum(lrs))
