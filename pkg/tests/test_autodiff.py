"""Tape, operator, optimizer, and finite-difference oracle tests."""

import numpy as np
import pytest

from nrfield.autodiff import (
    Adam,
    NumericOverflowError,
    ShapeError,
    Tape,
    TapeUsageError,
    Tensor,
    grad_check,
)


def test_sin_of_zero_is_zero():
    tape = Tape()
    out = tape.sin(Tensor(np.zeros((3, 2))))
    assert np.all(out.data == 0.0)


def test_silu_at_zero_is_zero():
    tape = Tape()
    out = tape.silu(Tensor([[0.0]]))
    assert out.data[0, 0] == 0.0


def test_square_gradient_at_three():
    w = Tensor([[3.0]], requires_grad=True)
    tape = Tape()
    loss = tape.square(w)
    tape.backward(loss)
    assert abs(tape.grad(w)[0, 0] - 6.0) < 1e-12


def test_sin_gradient_at_zero_is_one():
    x = Tensor([[0.0]], requires_grad=True)
    tape = Tape()
    loss = tape.sin(x)
    tape.backward(loss)
    assert abs(tape.grad(x)[0, 0] - 1.0) < 1e-12


def _random_mlp(rng, din=3, width=8, dout=2):
    params = []
    dims = [din, width, width, dout]
    for a, b in zip(dims[:-1], dims[1:]):
        params.append(Tensor(rng.normal(0.0, 1.0 / np.sqrt(a), (a, b)), requires_grad=True))
        params.append(Tensor(rng.normal(0.0, 0.1, (1, b)), requires_grad=True))
    return params


def test_three_layer_mlp_matches_finite_differences():
    rng = np.random.default_rng(7)
    params = _random_mlp(rng)
    x = rng.normal(size=(16, 3))
    y = rng.normal(size=(16, 2))

    def build():
        tape = Tape()
        h = tape.tanh(tape.affine(Tensor(x), params[0], params[1]))
        h = tape.tanh(tape.affine(h, params[2], params[3]))
        out = tape.affine(h, params[4], params[5])
        loss = tape.mean(tape.square(tape.sub(out, Tensor(y))))
        return tape, loss

    report = grad_check(build, params, n_coords=50, h=1e-6, tol=1e-5, rng=np.random.default_rng(1))
    assert report["max_rel_err"] < 1e-5, report["failures"]


def test_every_primitive_matches_finite_differences():
    rng = np.random.default_rng(11)
    w = Tensor(rng.normal(size=(4, 5)), requires_grad=True)
    b = Tensor(rng.normal(size=(1, 5)), requires_grad=True)
    row = Tensor(rng.normal(size=(1, 5)), requires_grad=True)
    col = Tensor(rng.normal(size=(6, 1)), requires_grad=True)
    x = rng.normal(size=(6, 4)) * 0.5
    idx = np.array([0, 2, 2, 5, 1])

    def build():
        tape = Tape()
        z = tape.affine(Tensor(x), w, b)
        z = tape.add(z, row)
        z = tape.hadamard(z, col)
        z = tape.concat([tape.sin(z), tape.cos(z), tape.tanh(z)], axis=1)
        z = tape.concat([z, tape.silu(z)], axis=1)
        z = tape.gather_rows(z, idx)
        z = tape.add(tape.exp(tape.scale(z, 0.1)), tape.relu(z))
        z = tape.sub(tape.square(z), z)
        s = tape.sum(z, axis=1)
        m = tape.mean(z, axis=0)
        loss = tape.add(tape.mean(s), tape.sum(tape.square(m)))
        return tape, loss

    report = grad_check(build, [w, b, row, col], n_coords=50, rng=np.random.default_rng(3))
    assert report["max_rel_err"] < 1e-5, report["failures"]


def test_shared_operand_gradients_accumulate():
    # z = x + x and hadamard(x, x) both route two gradient paths into x.
    x = Tensor([[1.5, -2.0]], requires_grad=True)
    tape = Tape()
    loss = tape.sum(tape.add(x, x))
    tape.backward(loss)
    assert np.all(tape.grad(x) == 2.0)

    tape = Tape()
    loss = tape.sum(tape.hadamard(x, x))
    tape.backward(loss)
    assert np.allclose(tape.grad(x), 2.0 * x.data)


def test_same_shape_add_gradients_are_independent():
    # Regression: the vjp of add hands the upstream gradient to both parents;
    # accumulating into one must not corrupt the other.
    a = Tensor([[1.0, 2.0]], requires_grad=True)
    b = Tensor([[3.0, 4.0]], requires_grad=True)
    tape = Tape()
    s = tape.add(a, b)
    loss = tape.sum(tape.add(tape.square(s), a))
    tape.backward(loss)
    assert np.allclose(tape.grad(a), 2.0 * (a.data + b.data) + 1.0)
    assert np.allclose(tape.grad(b), 2.0 * (a.data + b.data))


def test_gather_rows_backward_scatter_adds_duplicates():
    x = Tensor(np.arange(8.0).reshape(4, 2), requires_grad=True)
    tape = Tape()
    out = tape.gather_rows(x, np.array([1, 1, 3]))
    tape.backward(tape.sum(out))
    g = tape.grad(x)
    assert np.all(g == np.array([[0, 0], [2, 2], [0, 0], [1, 1]], dtype=float))


def test_forward_is_pure_and_repeatable():
    rng = np.random.default_rng(2)
    w = Tensor(rng.normal(size=(3, 3)), requires_grad=True)
    x = rng.normal(size=(5, 3))

    def run():
        tape = Tape()
        return tape.tanh(tape.affine(Tensor(x), w, Tensor(np.zeros((1, 3))))).data

    first, second = run(), run()
    assert np.array_equal(first, second)


def test_backward_does_not_modify_parameters():
    w = Tensor([[2.0]], requires_grad=True)
    before = w.data.copy()
    tape = Tape()
    tape.backward(tape.square(w))
    assert np.array_equal(w.data, before)


def test_input_gradients_are_available():
    x = Tensor([[0.3, -0.2]], requires_grad=True)
    tape = Tape()
    loss = tape.sum(tape.sin(x))
    tape.backward(loss)
    assert np.allclose(tape.grad(x), np.cos(x.data))


def test_backward_before_forward_is_a_usage_error():
    tape = Tape()
    with pytest.raises(TapeUsageError):
        tape.backward(Tensor([[1.0]]))


def test_backward_on_foreign_tensor_is_a_usage_error():
    tape = Tape()
    tape.sin(Tensor([[1.0]]))
    other = Tape()
    loss = other.sin(Tensor([[1.0]]))
    with pytest.raises(TapeUsageError):
        tape.backward(loss)


def test_non_finite_intermediate_reports_node_in_debug_mode():
    tape = Tape(check_finite=True)
    x = tape.scale(Tensor([[1000.0]]), 1.0)
    with np.errstate(over="ignore"):
        with pytest.raises(NumericOverflowError, match=r"numeric overflow at node 1 \(exp\)"):
            tape.exp(x)


def test_shape_mismatch_names_the_op():
    tape = Tape()
    with pytest.raises(ShapeError, match="affine"):
        tape.affine(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))), Tensor(np.zeros((1, 2))))
    with pytest.raises(ShapeError, match="hadamard"):
        tape.hadamard(Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 2))))


def test_adam_single_step_hand_computed():
    # w=1, g=2, lr=0.1: m_hat=2, v_hat=4 -> step = 0.1 * 2 / (2 + eps) ~= 0.1
    w = Tensor([[1.0]], requires_grad=True)
    opt = Adam(lr=0.1)
    opt.step([w], [np.array([[2.0]])])
    assert abs(w.data[0, 0] - 0.9) < 1e-8


def test_adam_zero_gradient_leaves_parameter_unchanged():
    w = Tensor([[0.7]], requires_grad=True)
    opt = Adam(lr=0.1)
    opt.step([w], [np.array([[0.0]])])
    assert w.data[0, 0] == 0.7


def test_adam_bias_correction_second_step():
    # Two steps with constant gradient g: both steps move by ~lr since
    # m_hat / sqrt(v_hat) = sign(g) for constant gradients.
    w = Tensor([[0.0]], requires_grad=True)
    opt = Adam(lr=0.01)
    for _ in range(2):
        opt.step([w], [np.array([[3.0]])])
    assert abs(w.data[0, 0] + 0.02) < 1e-9


def test_training_micro_loop_is_bitwise_deterministic():
    def run():
        rng = np.random.default_rng(5)
        params = _random_mlp(rng, din=2, width=6, dout=1)
        x = rng.normal(size=(32, 2))
        y = rng.normal(size=(32, 1))
        opt = Adam(lr=1e-3)
        for _ in range(100):
            tape = Tape()
            h = tape.tanh(tape.affine(Tensor(x), params[0], params[1]))
            h = tape.tanh(tape.affine(h, params[2], params[3]))
            out = tape.affine(h, params[4], params[5])
            loss = tape.mean(tape.square(tape.sub(out, Tensor(y))))
            tape.backward(loss)
            opt.step(params, [tape.grad(p) for p in params])
        return np.concatenate([p.data.ravel() for p in params])

    assert np.array_equal(run(), run())


def test_reductions_match_numpy():
    rng = np.random.default_rng(9)
    x = rng.normal(size=(4, 3))
    tape = Tape()
    t = Tensor(x)
    assert np.allclose(tape.sum(t).data, x.sum())
    assert np.allclose(tape.sum(t, axis=0).data, x.sum(axis=0, keepdims=True))
    assert np.allclose(tape.mean(t, axis=1).data, x.mean(axis=1, keepdims=True))


def test_concat_rejects_mismatched_shapes():
    tape = Tape()
    with pytest.raises(ShapeError, match="concat"):
        tape.concat([Tensor(np.zeros((2, 2))), Tensor(np.zeros((3, 2)))], axis=1)
