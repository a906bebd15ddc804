import numpy as np
import pytest

from gfss.numcore import SGD, MissingGradient, SgdConfig, Tensor, sgd_step


def _param(value, grad=None):
    p = Tensor(np.asarray(value, np.float32), requires_grad=True)
    if grad is not None:
        p.grad = np.asarray(grad, np.float32)
    return p


def test_plain_sgd_hand_case():
    p = _param([1.0], grad=[0.5])
    sgd_step([p], SgdConfig(learning_rate=0.1), {})
    assert float(p.data[0]) == pytest.approx(0.95)


def test_momentum_hand_sequence():
    # two steps with constant unit gradient: 1.0 -> 0.9 -> 0.71
    p = _param([1.0])
    opt = SGD([p], SgdConfig(learning_rate=0.1, momentum=0.9))
    p.grad = np.ones(1, np.float32)
    opt.step()
    assert float(p.data[0]) == pytest.approx(0.9)
    p.grad = np.ones(1, np.float32)
    opt.step()
    assert float(p.data[0]) == pytest.approx(0.71)


def test_weight_decay_pulls_toward_zero():
    p = _param([1.0], grad=[0.0])
    sgd_step([p], SgdConfig(learning_rate=0.1, weight_decay=0.1), {})
    assert float(p.data[0]) == pytest.approx(0.99)


def test_zero_learning_rate_is_bitwise_noop():
    rng = np.random.default_rng(4)
    data = rng.standard_normal(64).astype(np.float32)
    p = _param(data, grad=rng.standard_normal(64).astype(np.float32))
    opt = SGD([p], SgdConfig(learning_rate=0.0, momentum=0.9, weight_decay=1e-4))
    opt.step()
    assert p.data.tobytes() == data.tobytes()


def test_grad_cleared_after_step():
    p = _param([1.0], grad=[1.0])
    sgd_step([p], SgdConfig(0.1), {})
    assert p.grad is None


def test_missing_gradient_raises():
    p = _param([1.0])
    with pytest.raises(MissingGradient):
        sgd_step([p], SgdConfig(0.1), {})


def test_state_mismatch_rejected():
    p = _param([1.0], grad=[1.0])
    with pytest.raises(ValueError):
        sgd_step([p], SgdConfig(0.1), {"velocity": [None, None]})


def test_config_validation():
    with pytest.raises(ValueError):
        SgdConfig(learning_rate=-1e-3)
    with pytest.raises(ValueError):
        SgdConfig(0.1, momentum=1.0)
    with pytest.raises(ValueError):
        SgdConfig(0.1, weight_decay=-0.1)
    SgdConfig(0.0)  # zero rate is allowed


def test_velocity_state_shared_across_steps():
    p = _param([0.0])
    opt = SGD([p], SgdConfig(learning_rate=1.0, momentum=0.5))
    for _ in range(3):
        p.grad = np.ones(1, np.float32)
        opt.step()
    # velocities: 1, 1.5, 1.75 -> positions 0 - (1 + 1.5 + 1.75)
    assert float(p.data[0]) == pytest.approx(-4.25)


def test_zero_grad():
    p = _param([1.0], grad=[1.0])
    SGD([p], SgdConfig(0.1)).zero_grad()
    assert p.grad is None
