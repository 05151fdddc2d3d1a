import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from triplegraph.numerics import (
    AdamState,
    ContractError,
    NumericError,
    Parameter,
    SeededRng,
    ShapeError,
    Tensor,
    adam_step,
    affine,
    backward,
    gaussian_vector,
    grad,
    hadamard,
    layer_norm,
    ops,
    sigmoid,
    softmax,
    tanh,
)
from triplegraph.numerics.gradcheck import numerical_grad, relative_error


# --- spot values ------------------------------------------------------------


def test_affine_identity():
    out = affine(Tensor(np.eye(2)), Tensor([3.0, -1.0]), Tensor([0.0, 0.0]))
    np.testing.assert_array_equal(out.data, [3.0, -1.0])


def test_affine_zero_map():
    out = affine(Tensor(np.zeros((2, 2))), Tensor([9.0, -4.0]), Tensor([5.0, 7.0]))
    np.testing.assert_array_equal(out.data, [5.0, 7.0])


def test_affine_hand_multiply():
    out = affine(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([1.0, 1.0]), Tensor([1.0, 0.0]))
    np.testing.assert_array_equal(out.data, [4.0, 7.0])


def test_affine_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2,\)"):
        affine(Tensor(np.zeros((2, 3))), Tensor([1.0, 2.0]), Tensor([0.0, 0.0]))


def test_nonlinearity_spot_values():
    assert sigmoid(Tensor(0.0)).item() == 0.5
    assert tanh(Tensor(0.0)).item() == 0.0
    assert sigmoid(Tensor(math.log(3.0))).item() == pytest.approx(0.75, abs=1e-15)


def test_sigmoid_tanh_ranges(np_rng):
    x = Tensor(np_rng.normal(scale=10, size=1000))
    s, t = sigmoid(x).data, tanh(x).data
    assert ((s >= 0) & (s <= 1)).all() and ((t >= -1) & (t <= 1)).all()
    # no overflow warnings for extreme inputs
    assert np.isfinite(sigmoid(Tensor([-1000.0, 1000.0])).data).all()


def test_hadamard_shape_mismatch():
    with pytest.raises(ShapeError):
        hadamard(Tensor(np.ones(3)), Tensor(np.ones(4)))


def test_softmax_spot_values():
    np.testing.assert_allclose(softmax(Tensor([2.5] * 4)).data, [0.25] * 4, atol=1e-15)
    np.testing.assert_array_equal(softmax(Tensor([-3.0])).data, [1.0])
    np.testing.assert_allclose(softmax(Tensor([math.log(1), math.log(3)])).data, [0.25, 0.75], atol=1e-15)


def test_softmax_nan_rejected():
    with pytest.raises(NumericError):
        softmax(Tensor([0.0, float("nan")]))


def test_softmax_large_inputs_stable():
    out = softmax(Tensor([1000.0, 1000.0])).data
    np.testing.assert_allclose(out, [0.5, 0.5])


def test_layer_norm_spot_values():
    ones, zeros = Tensor(np.ones(3)), Tensor(np.zeros(3))
    np.testing.assert_allclose(layer_norm(Tensor([4.0, 4.0, 4.0]), ones, zeros).data, 0.0, atol=1e-12)
    out = layer_norm(Tensor([-1.0, 1.0]), Tensor(np.ones(2)), Tensor(np.zeros(2)), eps=1e-12)
    np.testing.assert_allclose(out.data, [-1.0, 1.0], atol=1e-10)
    # mean 2, var 8/3 -> (x - 2)/sqrt(8/3)
    out = layer_norm(Tensor([0.0, 2.0, 4.0]), ones, zeros)
    r = math.sqrt(1.5)
    np.testing.assert_allclose(out.data, [-r, 0.0, r], atol=1e-5)


def test_backward_sum_of_affine_matches_outer_structure(np_rng):
    W = Parameter(np_rng.normal(size=(3, 4)), "W")
    x = np_rng.normal(size=4)
    backward(affine(W, Tensor(x), Tensor(np.zeros(3))).sum())
    np.testing.assert_allclose(W.grad, np.tile(x, (3, 1)), atol=1e-14)
    num = numerical_grad(lambda: float((W.data @ x).sum()), [W.data])[0]
    assert relative_error(W.grad, num) < 1e-8


def test_backward_constant_loss_gives_zero_grad():
    w = Parameter(np.array([1.0, 2.0]), "w")
    loss = ops.mul(ops.sum(w), 0.0) + 3.0
    backward(loss)
    np.testing.assert_array_equal(w.grad, 0.0)


def test_backward_chain_rule_sigmoid_squared():
    w = Parameter(np.array(0.0), "w")
    s = sigmoid(w)
    backward(s * s)
    assert w.grad == pytest.approx(0.25, abs=1e-15)


def test_backward_non_scalar_raises():
    w = Parameter(np.ones(2), "w")
    with pytest.raises(ContractError):
        backward(w * 2.0)


def test_repeated_parameter_accumulates_exactly():
    w = Parameter(np.array(1.7), "w")
    backward(w + w)
    assert w.grad == 2.0


# --- adam -------------------------------------------------------------------


def test_adam_first_step():
    p = Parameter(np.array([1.0]), "p")
    s = AdamState.zeros_like(p)
    p.grad[:] = 2.0
    adam_step([p], [s], lr=0.1, beta1=0.5, beta2=0.9, eps=1e-8)
    assert p.data[0] - 1.0 == pytest.approx(-0.1, abs=1e-8)
    assert s.step == 1
    np.testing.assert_array_equal(p.grad, 0.0)


def test_adam_zero_gradient_keeps_param_and_counts_step():
    p = Parameter(np.array([1.0, -2.0]), "p")
    s = AdamState.zeros_like(p)
    adam_step([p], [s], lr=0.1)
    np.testing.assert_array_equal(p.data, [1.0, -2.0])
    assert s.step == 1


def test_adam_constant_gradient_steps_equal():
    p = Parameter(np.array([0.0]), "p")
    s = AdamState.zeros_like(p)
    deltas = []
    for _ in range(2):
        before = p.data.copy()
        p.grad[:] = 3.0
        adam_step([p], [s], lr=0.01, beta1=0.5, beta2=0.9)
        deltas.append(abs(p.data[0] - before[0]))
    assert deltas[1] == pytest.approx(deltas[0], rel=1e-6)
    assert (s.v >= 0).all()


# --- rng ----------------------------------------------------------------------


def test_gaussian_determinism():
    a = gaussian_vector(SeededRng(99), 17)
    b = gaussian_vector(SeededRng(99), 17)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, gaussian_vector(SeededRng(100), 17))


def test_gaussian_moments():
    z = gaussian_vector(SeededRng(3), 100_000)
    assert abs(z.mean()) < 0.02
    assert abs(z.var() - 1.0) < 0.03


def test_rng_state_roundtrip():
    r = SeededRng(5, stream=2)
    r.uniform(7)
    clone = SeededRng.from_state(r.get_state())
    np.testing.assert_array_equal(r.normal((9,)), clone.normal((9,)))


def test_rng_integers_in_range():
    v = SeededRng(1).integers(16, (10_000,))
    assert v.min() == 0 and v.max() == 15


# --- randomized gradient checks -------------------------------------------------


def _check(build, arrays, tol=1e-4):
    """``build(*tensors) -> scalar Tensor``; compares tape vs finite differences."""
    params = [Parameter(a, f"p{i}") for i, a in enumerate(arrays)]
    backward(build(*params))
    num = numerical_grad(lambda: build(*[Tensor(p.data) for p in params]).item(), [p.data for p in params])
    for p, n in zip(params, num):
        err = relative_error(p.grad, n)
        assert err < tol, (p.name, err)


def _weights(np_rng, shape):
    return np_rng.normal(size=shape)


UNARY = {
    "sigmoid": sigmoid,
    "tanh": tanh,
    "exp": ops.exp,
    "square": ops.square,
    "softmax": softmax,
}


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_gradients_random_shapes(name, np_rng):
    fn = UNARY[name]
    for _ in range(100):
        shape = tuple(np_rng.integers(1, 9, size=np_rng.integers(1, 3)))
        x = np_rng.normal(size=shape)
        w = _weights(np_rng, shape)
        _check(lambda x_: ops.sum(fn(x_) * Tensor(w)), [x])


@pytest.mark.parametrize("name", ["add", "sub", "mul", "div", "hadamard"])
def test_binary_gradients_random_shapes(name, np_rng):
    fn = {"add": ops.add, "sub": ops.sub, "mul": ops.mul, "div": ops.div, "hadamard": hadamard}[name]
    for _ in range(100):
        shape = tuple(np_rng.integers(1, 9, size=np_rng.integers(1, 3)))
        a = np_rng.normal(size=shape)
        b = np_rng.normal(size=shape)
        if name == "div":
            b = np.sign(b) * (np.abs(b) + 0.5)
        w = _weights(np_rng, shape)
        _check(lambda a_, b_: ops.sum(fn(a_, b_) * Tensor(w)), [a, b])


def test_log_sqrt_gradients(np_rng):
    for _ in range(100):
        shape = (int(np_rng.integers(1, 9)),)
        x = np_rng.uniform(0.5, 3.0, size=shape)
        w = _weights(np_rng, shape)
        _check(lambda x_: ops.sum(ops.log(x_) * Tensor(w)), [x])
        _check(lambda x_: ops.sum(ops.sqrt(x_) * Tensor(w)), [x])


def test_affine_gradients_random_shapes(np_rng):
    for _ in range(100):
        m, n = (int(v) for v in np_rng.integers(1, 9, size=2))
        lead = tuple(int(v) for v in np_rng.integers(1, 5, size=np_rng.integers(0, 3)))
        W, x, b = np_rng.normal(size=(m, n)), np_rng.normal(size=lead + (n,)), np_rng.normal(size=m)
        w = _weights(np_rng, lead + (m,))
        _check(lambda W_, x_, b_: ops.sum(affine(W_, x_, b_) * Tensor(w)), [W, x, b])


def test_matmul_gradients_random_shapes(np_rng):
    for _ in range(100):
        b_, l_, d_, k_ = (int(v) for v in np_rng.integers(1, 9, size=4))
        a, b = np_rng.normal(size=(b_, l_, d_)), np_rng.normal(size=(d_, k_))
        w = _weights(np_rng, (b_, l_, k_))
        _check(lambda a1, b1: ops.sum(ops.matmul(a1, b1) * Tensor(w)), [a, b])


def test_layer_norm_gradients_random_shapes(np_rng):
    for _ in range(100):
        k = int(np_rng.integers(2, 9))
        lead = tuple(int(v) for v in np_rng.integers(1, 5, size=np_rng.integers(0, 3)))
        x, g, b = np_rng.normal(size=lead + (k,)), np_rng.normal(size=k), np_rng.normal(size=k)
        w = _weights(np_rng, lead + (k,))
        _check(lambda x_, g_, b_: ops.sum(layer_norm(x_, g_, b_) * Tensor(w)), [x, g, b])


def test_layer_norm_per_gate_gains(np_rng):
    for _ in range(100):
        gates, k = int(np_rng.integers(1, 5)), int(np_rng.integers(2, 9))
        b_ = int(np_rng.integers(1, 5))
        x, g, b = np_rng.normal(size=(b_, gates, k)), np_rng.normal(size=(gates, k)), np_rng.normal(size=(gates, k))
        w = _weights(np_rng, (b_, gates, k))
        _check(lambda x_, g_, b2: ops.sum(layer_norm(x_, g_, b2) * Tensor(w)), [x, g, b])


def test_affine_without_bias(np_rng):
    W, x = np_rng.normal(size=(3, 4)), np_rng.normal(size=(2, 4))
    np.testing.assert_allclose(affine(Tensor(W), Tensor(x)).data, x @ W.T)
    _check(lambda W_, x_: ops.sum(ops.square(affine(W_, x_))), [W, x])


def test_reduction_and_shape_gradients(np_rng):
    for _ in range(100):
        shape = tuple(int(v) for v in np_rng.integers(1, 9, size=3))
        x = np_rng.normal(size=shape)
        w = _weights(np_rng, (shape[0], shape[2]))
        _check(lambda x_: ops.sum(ops.mean(x_, axis=1) * Tensor(w)), [x])
        w2 = _weights(np_rng, (shape[0], shape[2], shape[1]))
        _check(lambda x_: ops.sum(ops.swapaxes(x_) * Tensor(w2)), [x])
        w3 = _weights(np_rng, (shape[0] * shape[1], shape[2]))
        _check(lambda x_: ops.sum(ops.reshape(x_, (-1, shape[2])) * Tensor(w3)), [x])


def test_concat_index_norm_gradients(np_rng):
    for _ in range(100):
        n1, n2 = (int(v) for v in np_rng.integers(1, 9, size=2))
        a, b = np_rng.normal(size=(3, n1)), np_rng.normal(size=(3, n2))
        idx = np.array([0, 2, 2])
        _check(lambda a_, b_: ops.sum(ops.norm(ops.concat([a_, b_], axis=-1))[idx] * 1.3), [a, b])


# --- second order --------------------------------------------------------------


def test_double_backward_gradient_norm(np_rng):
    """d/dW of ||d f / d x||^2 through layer_norm, sigmoid, softmax, tanh."""
    for _ in range(20):
        n, m = (int(v) for v in np_rng.integers(2, 6, size=2))
        W0, x0 = np_rng.normal(size=(m, n)), np_rng.normal(size=(3, n))
        g0, b0 = np_rng.normal(size=m), np_rng.normal(size=m)

        def f(W, x, g, b):
            h = layer_norm(affine(W, x, Tensor(np.zeros(m))), g, b)
            return ops.sum(softmax(h) * sigmoid(h) * tanh(h))

        def penalty(W, g, b):
            x = Tensor(x0, requires_grad=True)
            (gx,) = grad(f(W, x, g, b), [x], create_graph=True)
            return ops.sum(ops.square(ops.norm(gx) - 1.0))

        params = [Parameter(a, "p") for a in (W0, g0, b0)]
        backward(penalty(*params))
        num = numerical_grad(lambda: penalty(*[Tensor(p.data) for p in params]).item(), [p.data for p in params])
        for p, nm in zip(params, num):
            assert relative_error(p.grad, nm) < 1e-4


# --- properties -------------------------------------------------------------------

finite = st.floats(-50, 50, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(st.lists(finite, min_size=1, max_size=12), st.floats(-100, 100))
def test_softmax_simplex_and_shift_invariance(xs, c):
    x = np.array(xs)
    a = softmax(Tensor(x)).data
    b = softmax(Tensor(x + c)).data
    assert abs(a.sum() - 1.0) < 1e-9
    assert (a > 0).all() or len(xs) > 1
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(-20, 20), min_size=2, max_size=10).filter(lambda v: np.var(v) > 1e-2),
    st.floats(-3, 3),
    st.data(),
)
def test_layer_norm_moments(xs, c, data):
    """Uniform gain c: output mean equals the bias mean and the spread about the bias is c^2."""
    k = len(xs)
    gain = np.full(k, c)
    bias = np.array(data.draw(st.lists(st.floats(-3, 3), min_size=k, max_size=k)))
    out = layer_norm(Tensor(xs), Tensor(gain), Tensor(bias), eps=1e-12).data
    assert abs(out.mean() - bias.mean()) < 1e-9
    assert abs(np.mean((out - bias) ** 2) - np.mean(gain**2)) < 1e-6
