import numpy as np
import pytest

from batteryttt.core.optim import AdamState, adamw_step, grad_norm, sgd_momentum_step
from batteryttt.core.tensor import Parameter, Value
from batteryttt.exceptions import ContractError


def _param(value) -> Parameter:
    return Parameter(name="w", value=Value(np.array(value, dtype=float)))


class TestSgdMomentum:
    def test_plain_step(self):
        p = _param([1.0, 2.0])
        sgd_momentum_step([p], [np.array([0.5, -1.0])], {}, lr=1.0, momentum=0.0)
        np.testing.assert_allclose(p.data, [0.5, 3.0])

    def test_momentum_recurrence(self):
        p = _param(1.0)
        buffers: dict = {}
        g = np.array(1.0)
        sgd_momentum_step([p], [g], buffers, lr=0.1, momentum=0.9)
        assert p.data == pytest.approx(0.9)
        sgd_momentum_step([p], [g], buffers, lr=0.1, momentum=0.9)
        assert p.data == pytest.approx(0.9 - 1.9 * 0.1)
        assert buffers["w"] == pytest.approx(1.9)

    def test_shape_mismatch(self):
        with pytest.raises(ContractError):
            sgd_momentum_step([_param([1.0, 2.0])], [np.zeros(3)], {}, lr=0.1, momentum=0.9)
        with pytest.raises(ContractError):
            sgd_momentum_step([_param([1.0])], [], {}, lr=0.1, momentum=0.9)


class TestAdamW:
    def test_bias_corrected_steps(self):
        p = _param(1.0)
        state = AdamState()
        g = np.array(0.5)
        lr, eps = 0.01, 1e-8
        adamw_step([p], [g], state, lr=lr, eps=eps)
        # t = 1: m_hat = g, v_hat = g^2
        expected = 1.0 - lr * 0.5 / (0.5 + eps)
        assert p.data == pytest.approx(expected, rel=1e-12)
        adamw_step([p], [g], state, lr=lr, eps=eps)
        m = 0.9 * 0.1 * 0.5 + 0.1 * 0.5
        v = 0.999 * 0.001 * 0.25 + 0.001 * 0.25
        m_hat, v_hat = m / (1 - 0.9**2), v / (1 - 0.999**2)
        expected -= lr * m_hat / (np.sqrt(v_hat) + eps)
        assert p.data == pytest.approx(expected, rel=1e-12)
        assert state.step == 2

    def test_decoupled_weight_decay(self):
        p = _param(2.0)
        adamw_step([p], [np.array(0.0)], AdamState(), lr=0.1, weight_decay=0.5)
        assert p.data == pytest.approx(2.0 * (1 - 0.05))


def test_grad_norm():
    assert grad_norm([np.array([3.0]), np.array([[4.0]])]) == pytest.approx(5.0)
