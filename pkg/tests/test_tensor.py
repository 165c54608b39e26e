import json

import numpy as np
import pytest

from batteryttt.core import tensor as T
from batteryttt.core.tensor import (
    Parameter,
    ParameterStore,
    Value,
    grad_check,
    grad_check_report,
    resolution_floor,
)
from batteryttt.exceptions import ConfigError, ContractError


def _param(name: str, array) -> Parameter:
    return Parameter(name=name, value=Value(np.asarray(array, dtype=float)))


class TestBackward:
    def test_scalar_required(self):
        x = Value(np.ones(3), requires_grad=True)
        with pytest.raises(ContractError):
            T.backward(x * 2.0)

    def test_product_rule(self):
        a = Value(np.array([1.0, 2.0, 3.0]), requires_grad=True)
        b = Value(np.array([4.0, 5.0, 6.0]), requires_grad=True)
        T.backward(T.sum_(a * b))
        np.testing.assert_array_equal(a.grad, b.data)
        np.testing.assert_array_equal(b.grad, a.data)

    def test_shared_node_accumulates(self):
        x = Value(np.array(3.0), requires_grad=True)
        T.backward(x * x + x)
        assert x.grad == pytest.approx(7.0)

    def test_repeated_backward_does_not_leak_intermediates(self):
        x = Value(np.array(2.0), requires_grad=True)
        y = x * x
        T.backward(y)
        x.zero_grad()
        T.backward(y)
        assert x.grad == pytest.approx(4.0)

    def test_second_backward_doubles_leaf_gradients(self):
        w = Value(np.array(3.0), requires_grad=True)
        loss = w * w
        T.backward(loss)
        assert w.grad == pytest.approx(6.0)
        T.backward(loss)
        assert w.grad == pytest.approx(12.0)

    def test_broadcast_must_be_explicit(self):
        with pytest.raises(ContractError):
            Value(np.ones((2, 3))) + Value(np.ones(3))

    def test_rank_limit(self):
        with pytest.raises(ContractError):
            Value(np.ones((1, 1, 1, 1)))

    def test_constants_get_no_gradient(self):
        x = Value(np.ones(2), requires_grad=True)
        c = T.constant(np.ones(2))
        T.backward(T.sum_(x * c))
        assert c.grad.sum() == 0.0


class TestOps:
    def test_softmax_rows_sum_to_one(self, rng):
        s = T.softmax(Value(rng.normal(size=(4, 7)) * 10))
        np.testing.assert_allclose(s.data.sum(axis=-1), 1.0, atol=1e-12)

    def test_mse_value(self):
        assert T.mse(Value(np.array([1.0, 2.0])), Value(np.array([2.0, 4.0]))).item() == pytest.approx(2.5)

    def test_interp_slope_and_clamp(self):
        x = Value(np.array([0.25, 1.5, -1.0]), requires_grad=True)
        y = T.interp(x, np.array([0.0, 1.0]), np.array([3.0, 5.0]))
        np.testing.assert_allclose(y.data, [3.5, 5.0, 3.0])
        T.backward(T.sum_(y))
        np.testing.assert_allclose(x.grad, [2.0, 0.0, 0.0])

    def test_cumsum_values(self):
        np.testing.assert_array_equal(T.cumsum(Value(np.array([1.0, 2.0, 3.0]))).data, [1.0, 3.0, 6.0])

    def test_cumsum_gradient(self):
        x = Value(np.array([1.0, 2.0, 3.0]), requires_grad=True)
        T.backward(T.sum_(T.cumsum(x)))
        np.testing.assert_array_equal(x.grad, [3.0, 2.0, 1.0])

    def test_matmul_shapes_checked(self):
        with pytest.raises(ContractError):
            T.matmul(Value(np.ones((2, 3))), Value(np.ones((2, 3))))

    def test_expand_only_size_one_axes(self):
        with pytest.raises(ContractError):
            T.expand(Value(np.ones((2, 3))), (4, 3))


class TestGradCheck:
    def test_quadratic_is_exact(self, rng):
        w = _param("w", rng.normal(size=(3, 2)))

        def loss():
            return T.sum_(w.value * w.value)

        assert grad_check(loss, [w]) < 1e-8

    def test_composite_ops(self, rng):
        w = _param("w", rng.normal(size=(4, 5)))
        b = _param("b", rng.normal(size=5))
        g = _param("g", rng.normal(size=(2, 3, 4)))
        x = T.constant(rng.normal(size=(2, 3, 4)))

        def loss():
            h = T.layer_norm(T.gelu(T.linear(x * g.value, w.value, b.value)))
            attn = T.softmax(T.matmul(h, T.transpose(h)))
            out = T.cumsum(T.softplus(T.matmul(attn, h)))
            return T.mean(T.tanh(out) * T.sigmoid(out)) + T.mse(out[:, 1:, :], T.constant(np.zeros((2, 2, 5))))

        assert grad_check(loss, [w, b, g], max_coords=60) < 1e-5

    def test_gather_and_concat(self, rng):
        a = _param("a", rng.normal(size=(3, 4)))

        def loss():
            picked = T.take(a.value, [0, 2, 2], axis=0)
            joined = T.concat([picked, T.reshape(a.value, (3, 4))], axis=0)
            return T.sum_(joined * joined * 0.5)

        assert grad_check(loss, [a]) < 1e-8

    def test_epsilon_must_be_positive(self):
        w = _param("w", np.ones(2))
        with pytest.raises(ContractError):
            grad_check(lambda: T.sum_(w.value), [w], epsilon=0.0)

    def _tiny_gradient(self):
        w = _param("w", [3.0, 1e-9])

        def loss():
            return T.sum_(w.value * w.value * T.constant(np.array([1.0, 0.0]))) + T.sum_(
                w.value * T.constant(np.array([0.0, 1e-12]))
            )

        return loss, w

    def test_no_floor_by_default(self):
        loss, w = self._tiny_gradient()
        # the 1e-12 slope is below what f(w +- eps) can resolve, so its difference is 0
        assert grad_check(loss, [w]) == pytest.approx(0.5)

    def test_floor_masks_only_unresolvable_coordinates(self):
        loss, w = self._tiny_gradient()
        report = grad_check_report(loss, [w], floor=1e-9)
        assert report.checked == 2
        assert report.below_floor == 1
        assert report.max_rel_error < 1e-8

    def test_floor_does_not_hide_large_errors(self):
        w = _param("w", [1e-3])

        def wrong():
            # the second term is invisible to the tape
            return T.sum_(w.value * 0.0) + T.constant(w.value.data.sum() * 5.0)

        report = grad_check_report(wrong, [w], floor=1e-9)
        assert report.below_floor == 0
        assert report.max_rel_error == pytest.approx(1.0)

    def test_floor_must_be_non_negative(self):
        w = _param("w", np.ones(2))
        with pytest.raises(ContractError):
            grad_check_report(lambda: T.sum_(w.value), [w], floor=-1.0)

    def test_resolution_floor_scales_with_loss(self):
        assert resolution_floor(0.0, 1e-5, 1e-4) == 0.0
        assert resolution_floor(2.0, 1e-5, 1e-4) == pytest.approx(2 * resolution_floor(1.0, 1e-5, 1e-4))
        assert resolution_floor(1.0, 1e-5, 1e-4) < 1e-3


class TestParameterStore:
    def _store(self) -> ParameterStore:
        store = ParameterStore()
        store.add("encoder.w", np.arange(6.0).reshape(2, 3))
        store.add("head.b", np.array([0.1]))
        return store

    def test_duplicate_names(self):
        store = self._store()
        with pytest.raises(ContractError):
            store.add("head.b", np.zeros(1))

    def test_partition_flags(self):
        store = self._store()
        store.set_trainable({"head.b"})
        assert store.trainable_names() == {"head.b"}
        assert not store["encoder.w"].requires_grad
        with pytest.raises(ContractError):
            store.set_trainable({"missing"})

    def test_dumps_round_trip_is_byte_stable(self):
        store = self._store()
        text = store.dumps()
        again = ParameterStore.loads(text)
        assert again.dumps() == text
        assert json.loads(text)["version"] == 1

    def test_frozen_flag_disables_training(self):
        store = ParameterStore.loads(self._store().dumps(frozen=True))
        assert store.trainable_names() == set()

    def test_invalid_payload(self):
        payload = self._store().to_dict()
        del payload["frozen"]
        with pytest.raises(ConfigError):
            ParameterStore.from_dict(payload)

    def test_clone_and_snapshot_are_independent(self):
        store = self._store()
        clone = store.clone()
        snap = store.snapshot()
        store["encoder.w"].data += 1.0
        np.testing.assert_array_equal(clone["encoder.w"].data, np.arange(6.0).reshape(2, 3))
        store.restore(snap)
        assert store.digest() == clone.digest()
        assert store.count() == 7
