import numpy as np
import pytest

from ganlab import tensor as T
from ganlab.errors import (
    ContractError,
    DimensionError,
    DomainError,
    FormatError,
    NumericError,
)

from helpers import central_diff, check_gradients, rel_err


class TestMatmul:
    def test_identity(self):
        eye = T.Tensor(np.eye(2))
        out = T.matmul(eye, T.Tensor(np.eye(2)))
        assert np.array_equal(out.data, np.eye(2))

    def test_hand_case(self):
        a = T.Tensor([[1.0, 2.0], [3.0, 4.0]])
        b = T.Tensor([[1.0], [1.0]])
        out = T.matmul(a, b)
        assert np.array_equal(out.data, [[3.0], [7.0]])

    def test_shape_mismatch_names_both(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
            T.matmul(T.Tensor(np.zeros((2, 3))), T.Tensor(np.zeros((2, 3))))

    def test_gradient_vs_finite_differences(self):
        rng = np.random.default_rng(11)
        a = rng.standard_normal((3, 4))
        b = rng.standard_normal((4, 2))
        worst = check_gradients(
            lambda x, y: T.reduce_sum(T.matmul(x, y)), [a, b], tol=1e-6
        )
        assert worst <= 1e-6

    def test_batched_matches_per_sample(self):
        rng = np.random.default_rng(3)
        a = rng.standard_normal((4, 3, 5))
        b = rng.standard_normal((4, 5, 2))
        out = T.matmul(T.Tensor(a), T.Tensor(b))
        for i in range(4):
            assert np.allclose(out.data[i], a[i] @ b[i])

    def test_batched_gradient(self):
        rng = np.random.default_rng(4)
        a = rng.standard_normal((2, 3, 4))
        b = rng.standard_normal((2, 4, 3))
        check_gradients(lambda x, y: T.reduce_sum(T.matmul(x, y)), [a, b], tol=1e-6)


class TestElementwise:
    def test_abs(self):
        out = T.abs_(T.Tensor([-1.0, 0.0, 2.0]))
        assert np.array_equal(out.data, [1.0, 0.0, 2.0])

    def test_sub_self_is_zero(self):
        x = T.Tensor([1.5, -2.5, 3.0])
        assert np.array_equal(T.sub(x, x).data, np.zeros(3))

    def test_abs_gradient_uses_sign(self):
        x = T.Tensor([-2.0, 3.0], requires_grad=True)
        T.reduce_sum(T.abs_(x)).backward()
        assert np.array_equal(x.grad, [-1.0, 1.0])

    def test_abs_subgradient_zero_at_zero(self):
        x = T.Tensor([0.0], requires_grad=True)
        T.reduce_sum(T.abs_(x)).backward()
        assert np.array_equal(x.grad, [0.0])

    def test_log_domain_error(self):
        with pytest.raises(DomainError):
            T.log(T.Tensor([1.0, 0.0]))

    def test_no_implicit_broadcasting(self):
        with pytest.raises(DimensionError):
            T.add(T.Tensor(np.zeros((2, 2))), T.Tensor(np.zeros(2)))

    def test_scalar_broadcast_allowed(self):
        out = T.add(T.Tensor([1.0, 2.0]), 1.0)
        assert np.array_equal(out.data, [2.0, 3.0])

    def test_dispatcher_matches_functions(self):
        x = T.Tensor([1.0, 4.0])
        assert np.array_equal(T.elementwise("log", x).data, np.log([1.0, 4.0]))
        assert np.array_equal(T.elementwise("neg", x).data, [-1.0, -4.0])
        assert np.array_equal(T.elementwise("scale", x, 2.0).data, [2.0, 8.0])

    def test_gradients(self):
        rng = np.random.default_rng(7)
        a = rng.standard_normal((3, 3)) + 3.0  # positive for log
        b = rng.standard_normal((3, 3))
        check_gradients(lambda x: T.reduce_sum(T.log(x)), [a])
        check_gradients(lambda x, y: T.reduce_sum(T.mul(x, y)), [a, b], tol=1e-6)
        check_gradients(lambda x: T.reduce_sum(T.exp(T.scale(x, 0.5))), [b])
        check_gradients(lambda x: T.reduce_sum(T.pow_scalar(x, 1.5)), [a])


class TestReduceSum:
    def test_all(self):
        assert T.reduce_sum(T.Tensor([[1.0, 2.0], [3.0, 4.0]])).item() == 10.0

    def test_axis0(self):
        out = T.reduce_sum(T.Tensor([[1.0, 2.0], [3.0, 4.0]]), axes={0})
        assert np.array_equal(out.data, [4.0, 6.0])

    def test_grad_is_ones(self):
        x = T.Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
        T.reduce_sum(x).backward()
        assert np.array_equal(x.grad, np.ones((2, 3)))

    def test_invalid_axis(self):
        with pytest.raises(DimensionError):
            T.reduce_sum(T.Tensor(np.zeros((2, 2))), axes={5})

    def test_partial_axis_gradient(self):
        rng = np.random.default_rng(9)
        a = rng.standard_normal((2, 3, 4))
        check_gradients(
            lambda x: T.reduce_sum(T.mul(T.reduce_sum(x, axes={1}), T.reduce_sum(x, axes={1}))),
            [a],
        )


class TestBackward:
    def test_sum_grad(self):
        x = T.Tensor([1.0, 2.0, 3.0], requires_grad=True)
        T.reduce_sum(x).backward()
        assert np.array_equal(x.grad, [1.0, 1.0, 1.0])

    def test_quadratic(self):
        x = T.Tensor([1.0, 2.0], requires_grad=True)
        T.reduce_sum(T.mul(x, x)).backward()
        assert np.array_equal(x.grad, [2.0, 4.0])

    def test_non_scalar_loss_rejected(self):
        x = T.Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(ContractError):
            T.backward(T.mul(x, x))

    def test_accumulation_across_calls(self):
        x = T.Tensor([1.0, 2.0], requires_grad=True)
        loss = T.reduce_sum(T.mul(x, x))
        loss.backward()
        loss.backward()
        assert np.array_equal(x.grad, [4.0, 8.0])

    def test_multiple_uses_accumulate(self):
        x = T.Tensor([3.0], requires_grad=True)
        y = T.add(T.mul(x, x), T.scale(x, 2.0))  # x^2 + 2x -> 2x + 2 = 8
        T.reduce_sum(y).backward()
        assert np.array_equal(x.grad, [8.0])

    def test_linearity_at_shared_leaf_exact(self):
        rng = np.random.default_rng(21)
        vals = rng.standard_normal(5)

        def f(t):
            return T.reduce_sum(T.mul(t, t))

        def g(t):
            return T.reduce_sum(T.abs_(t))

        x = T.Tensor(vals, requires_grad=True)
        T.add(f(x), g(x)).backward()
        combined = x.grad.copy()

        x2 = T.Tensor(vals, requires_grad=True)
        f(x2).backward()
        g(x2).backward()
        assert np.array_equal(combined, x2.grad)

    def test_tape_order_is_forward_creation_order(self):
        x = T.Tensor([1.0, 2.0], requires_grad=True)
        a = T.mul(x, x)
        b = T.abs_(a)
        c = T.reduce_sum(b)
        tape = T.ComputationTape.trace(c)
        seqs = [t._seq for t in tape.entries]
        assert seqs == sorted(seqs)
        assert tape.entries == [a, b, c]

    def test_detach_blocks_gradient(self):
        x = T.Tensor([1.0, 2.0], requires_grad=True)
        y = T.mul(x, x).detach()
        loss = T.reduce_sum(T.mul(y, y))
        loss.backward()
        assert x.grad is None

    def test_no_grad_suppresses_recording(self):
        x = T.Tensor([1.0, 2.0], requires_grad=True)
        with T.no_grad():
            y = T.mul(x, x)
        assert y.is_leaf

    def test_overflow_is_an_error(self):
        with pytest.raises(NumericError):
            T.exp(T.Tensor([1000.0]))

    def test_composite_gradient_vs_finite_differences(self):
        rng = np.random.default_rng(17)
        a = rng.standard_normal((4, 3))
        w = rng.standard_normal((3, 2))

        def loss(x, wt):
            h = T.tanh(T.matmul(x, wt))
            return T.reduce_sum(T.mul(h, h))

        check_gradients(loss, [a, w])


class TestActivationPrimitives:
    @pytest.mark.parametrize("fn", [T.relu, T.tanh, T.sigmoid])
    def test_gradients(self, fn):
        rng = np.random.default_rng(13)
        a = rng.standard_normal((4, 4)) * 2.0
        check_gradients(lambda x: T.reduce_sum(T.mul(fn(x), fn(x))), [a])

    def test_leaky_relu_value(self):
        out = T.leaky_relu(T.Tensor([-1.0]), alpha=0.2)
        assert np.allclose(out.data, [-0.2])

    def test_sigmoid_stable_at_large_inputs(self):
        out = T.sigmoid(T.Tensor([-800.0, 800.0]))
        assert np.all(np.isfinite(out.data))
        assert 0.0 <= out.data[0] < 1e-300 or out.data[0] == 0.0
        assert out.data[1] == 1.0


class TestStructural:
    def test_reshape_roundtrip_gradient(self):
        rng = np.random.default_rng(2)
        a = rng.standard_normal((2, 6))
        check_gradients(
            lambda x: T.reduce_sum(T.mul(T.reshape(x, (3, 4)), T.reshape(x, (3, 4)))), [a]
        )

    def test_transpose_gradient(self):
        rng = np.random.default_rng(2)
        a = rng.standard_normal((2, 3, 4))
        check_gradients(
            lambda x: T.reduce_sum(T.mul(T.transpose(x, (2, 0, 1)), T.transpose(x, (2, 0, 1)))),
            [a],
        )

    def test_concat_gradient(self):
        rng = np.random.default_rng(5)
        a = rng.standard_normal((2, 3))
        b = rng.standard_normal((2, 2))
        check_gradients(
            lambda x, y: T.reduce_sum(T.mul(T.concat([x, y], axis=1), T.concat([x, y], axis=1))),
            [a, b],
        )

    def test_broadcast_to_gradient(self):
        rng = np.random.default_rng(6)
        a = rng.standard_normal((1, 3))
        check_gradients(
            lambda x: T.reduce_sum(T.mul(T.broadcast_to(x, (4, 3)), T.broadcast_to(x, (4, 3)))),
            [a],
        )

    def test_broadcast_rejects_incompatible(self):
        with pytest.raises(DimensionError):
            T.broadcast_to(T.Tensor(np.zeros((2, 3))), (2, 4))


class TestAdam:
    def test_zero_gradient_leaves_params(self):
        p = T.Tensor([1.0, -2.0], requires_grad=True)
        state = T.AdamState()
        T.adam_step({"p": p}, {"p": np.zeros(2)}, state, lr=0.1)
        assert np.array_equal(p.data, [1.0, -2.0])
        assert state.step == 1

    def test_single_step_hand_value(self):
        # m=0.1, v=0.001, m_hat=1, v_hat=1 -> step = lr/(1+eps)
        p = T.Tensor([1.0], requires_grad=True)
        state = T.AdamState()
        T.adam_step({"p": p}, {"p": np.array([1.0])}, state, lr=0.1)
        expected = 1.0 - 0.1 * 1.0 / (1.0 + 1e-8)
        assert abs(p.data[0] - expected) < 1e-15
        assert abs(p.data[0] - 0.9) < 1e-8

    def test_identical_params_get_identical_updates(self):
        rng = np.random.default_rng(23)
        g = rng.standard_normal(4)
        p1 = T.Tensor(np.ones(4), requires_grad=True)
        p2 = T.Tensor(np.ones(4), requires_grad=True)
        state = T.AdamState()
        T.adam_step({"a": p1, "b": p2}, {"a": g.copy(), "b": g.copy()}, state, lr=0.01)
        assert np.array_equal(p1.data, p2.data)

    def test_non_finite_gradient_rejected_by_name(self):
        p = T.Tensor([1.0], requires_grad=True)
        with pytest.raises(NumericError, match="enc1.w"):
            T.adam_step({"enc1.w": p}, {"enc1.w": np.array([np.nan])}, T.AdamState(), lr=0.1)

    def test_shape_mismatch(self):
        p = T.Tensor([1.0], requires_grad=True)
        with pytest.raises(DimensionError):
            T.adam_step({"p": p}, {"p": np.zeros(3)}, T.AdamState(), lr=0.1)


class TestIagtFormat:
    def test_roundtrip_bitwise(self, tmp_path):
        rng = np.random.default_rng(31)
        arr = rng.standard_normal((3, 4, 5))
        path = tmp_path / "t.iagt"
        T.save_iagt(path, arr)
        back = T.load_iagt(path)
        assert back.shape == arr.shape
        assert np.array_equal(back, arr)

    def test_header_layout(self, tmp_path):
        path = tmp_path / "t.iagt"
        T.save_iagt(path, np.zeros((2, 3)))
        blob = path.read_bytes()
        assert blob[:4] == b"IAGT"
        assert int.from_bytes(blob[4:8], "little") == 2
        assert int.from_bytes(blob[8:16], "little") == 2
        assert int.from_bytes(blob[16:24], "little") == 3
        assert len(blob) == 24 + 6 * 8

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.iagt"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(FormatError, match="byte 0"):
            T.load_iagt(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "short.iagt"
        T.save_iagt(path, np.zeros(4))
        blob = path.read_bytes()
        path.write_bytes(blob[:-8])
        with pytest.raises(FormatError):
            T.load_iagt(path)


class TestDeterminism:
    def test_forward_bitwise_repeatable(self):
        rng = np.random.default_rng(41)
        a = rng.standard_normal((8, 8))
        b = rng.standard_normal((8, 8))
        r1 = T.matmul(T.Tensor(a), T.Tensor(b)).data
        r2 = T.matmul(T.Tensor(a), T.Tensor(b)).data
        assert np.array_equal(r1, r2)
        s1 = T.reduce_sum(T.Tensor(a), axes={0}).data
        s2 = T.reduce_sum(T.Tensor(a), axes={0}).data
        assert np.array_equal(s1, s2)
