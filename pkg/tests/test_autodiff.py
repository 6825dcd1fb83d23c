import math

import numpy as np
import pytest

from drpinn.autodiff import Dual, Tape, TapeError, Var, exp, grad, input_derivative, log, tanh

H = 1e-6


def fd(f, x, h=H):
    return (f(x + h) - f(x - h)) / (2 * h)


def test_square():
    tape = Tape()
    x = tape.var(3.0)
    assert grad(tape, x ** 2, [x]) == [6.0]


def test_tanh_against_finite_difference():
    tape = Tape()
    x = tape.var(0.5)
    (g,) = grad(tape, tanh(x), [x])
    assert g == pytest.approx(1 - math.tanh(0.5) ** 2, rel=1e-15)
    assert g == pytest.approx(0.7864477329659274, rel=1e-15)
    assert abs(g - fd(math.tanh, 0.5)) < 1e-9


def test_product_plus_exp():
    tape = Tape()
    x, y = tape.var(1.0), tape.var(2.0)
    gx, gy = grad(tape, x * y + exp(x), [x, y])
    assert gx == pytest.approx(2 + math.e, rel=1e-15)
    assert gy == 1.0


def test_unvisited_input_gets_zero():
    tape = Tape()
    x, y = tape.var(1.5), tape.var(np.ones((2, 3)))
    gx, gy = grad(tape, x * x, [x, y])
    assert gx == 3.0
    np.testing.assert_array_equal(gy, np.zeros((2, 3)))


def test_cross_tape_rejected():
    t1, t2 = Tape(), Tape()
    a, b = t1.var(1.0), t2.var(2.0)
    with pytest.raises(TapeError):
        a + b
    with pytest.raises(TapeError):
        grad(t1, a * 2.0, [b])


def test_non_scalar_output_rejected():
    tape = Tape()
    x = tape.var(np.ones(3))
    with pytest.raises(ValueError):
        grad(tape, x * 2.0, [x])


# every primitive against central differences on random points ---------------------------------

UNARY = {
    "neg": (lambda v: -v, lambda x: -x),
    "exp": (lambda v: exp(v), np.exp),
    "log": (lambda v: log(v), np.log),
    "tanh": (lambda v: tanh(v), np.tanh),
    "recip": (lambda v: 1.0 / v, lambda x: 1.0 / x),
    "pow2": (lambda v: v ** 2, lambda x: x ** 2),
    "pow3": (lambda v: v ** 3, lambda x: x ** 3),
    "addc": (lambda v: v + 1.7, lambda x: x + 1.7),
    "rsubc": (lambda v: 1.7 - v, lambda x: 1.7 - x),
    "mulc": (lambda v: v * -2.5, lambda x: x * -2.5),
    "divc": (lambda v: v / 3.0, lambda x: x / 3.0),
}

BINARY = {
    "add": (lambda a, b: a + b),
    "sub": (lambda a, b: a - b),
    "mul": (lambda a, b: a * b),
    "div": (lambda a, b: a / b),
}


def _rel_err(a, b):
    return abs(a - b) / max(abs(b), 1e-8)


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_primitive_gradients(name):
    op, ref = UNARY[name]
    rng = np.random.default_rng(hash(name) % 2**32)
    for x0 in rng.uniform(0.2, 3.0, 100):
        tape = Tape()
        x = tape.var(x0)
        (g,) = grad(tape, op(x), [x])
        assert _rel_err(g, fd(ref, x0)) < 1e-6


@pytest.mark.parametrize("name", sorted(BINARY))
def test_binary_primitive_gradients(name):
    op = BINARY[name]
    rng = np.random.default_rng(len(name))
    for a0, b0 in rng.uniform(0.2, 3.0, (100, 2)):
        tape = Tape()
        a, b = tape.var(a0), tape.var(b0)
        ga, gb = grad(tape, op(a, b), [a, b])
        assert _rel_err(ga, fd(lambda x: op(x, b0), a0)) < 1e-6
        assert _rel_err(gb, fd(lambda x: op(a0, x), b0)) < 1e-6


def test_matmul_sum_mean_getitem_gradients():
    rng = np.random.default_rng(0)
    W0, x0 = rng.normal(size=(3, 4)), rng.normal(size=(4, 5))
    idx = np.array([0, 2, 2])

    def f(W, x):
        y = W @ x
        return (tanh(y)[idx] ** 2).mean() + (y[1:2, :] * 0.5).sum()

    def f_np(W, x):
        y = W @ x
        return (np.tanh(y)[idx] ** 2).mean() + (y[1:2, :] * 0.5).sum()

    tape = Tape()
    W, x = tape.var(W0), tape.var(x0)
    gW, gx = grad(tape, f(W, x), [W, x])
    for G, X, which in ((gW, W0, 0), (gx, x0, 1)):
        num = np.zeros_like(X)
        for k in np.ndindex(X.shape):
            e = np.zeros_like(X)
            e[k] = H
            args_p = (W0 + e, x0) if which == 0 else (W0, x0 + e)
            args_m = (W0 - e, x0) if which == 0 else (W0, x0 - e)
            num[k] = (f_np(*args_p) - f_np(*args_m)) / (2 * H)
        np.testing.assert_allclose(G, num, rtol=1e-6, atol=1e-9)


def test_constant_matmul_both_sides():
    rng = np.random.default_rng(1)
    A, B = rng.normal(size=(2, 3)), rng.normal(size=(3, 2))
    tape = Tape()
    x = tape.var(rng.normal(size=(3, 3)))
    (g,) = grad(tape, (A @ x @ B).sum(), [x])
    np.testing.assert_allclose(g, A.T @ np.ones((2, 2)) @ B.T, rtol=1e-14)


def test_broadcast_gradient_is_unbroadcast():
    tape = Tape()
    b = tape.var(np.zeros((3, 1)))
    x = np.arange(12.0).reshape(3, 4)
    (g,) = grad(tape, ((x + b) ** 2).sum(), [b])
    np.testing.assert_allclose(g, 2 * x.sum(axis=1, keepdims=True))


def test_replay_reproduces_values():
    tape = Tape()
    x = tape.var(np.array([[0.3, -1.2]]))
    W = tape.var(np.array([[0.5], [2.0]]))
    y = tanh(W @ x) * 3.0 + exp(x) / 2.0 - 1.0
    loss = (y ** 2).mean()
    replayed = tape.replay()
    assert len(replayed) == len(tape)
    for v, r in zip(tape.values, replayed):
        np.testing.assert_array_equal(v, r)
    assert replayed[loss.index] == loss.value


def test_append_only_topological():
    tape = Tape()
    x = tape.var(2.0)
    y = x * x
    z = tanh(y) + x
    assert len(tape) == 4
    for i, ps in enumerate(tape.parents):
        assert all(p < i for p in ps)
    assert z.index == 3


# input derivatives ---------------------------------------------------------------------

def test_linear_net_derivative():
    tape = Tape()
    w, b = tape.var(np.array([[2.5]])), tape.var(np.array([[0.3]]))
    y, dy = input_derivative(lambda x: w @ x + b, np.array([[0.1, 0.7]]))
    np.testing.assert_array_equal(dy.value, [[2.5, 2.5]])


def test_constant_net_derivative_is_zero():
    tape = Tape()
    b = tape.var(np.array([[0.3]]))
    _, dy = input_derivative(lambda x: x * 0.0 + b, np.array([[0.1, 0.7]]))
    np.testing.assert_array_equal(np.asarray(dy.value if isinstance(dy, Var) else dy), 0.0)


def test_one_hidden_layer_against_finite_difference():
    rng = np.random.default_rng(3)
    W1, b1, W2, b2 = rng.normal(size=(5, 1)), rng.normal(size=(5, 1)), rng.normal(size=(1, 5)), rng.normal(size=(1, 1))

    def net_np(t):
        return (W2 @ np.tanh(W1 * t + b1) + b2).item()

    tape = Tape()
    p = [tape.var(a) for a in (W1, b1, W2, b2)]
    _, dy = input_derivative(lambda x: p[2] @ tanh(p[0] @ x + p[1]) + p[3], np.array([[0.3]]))
    assert dy.value.item() == pytest.approx(fd(net_np, 0.3), rel=1e-7)


def test_derivative_wrt_second_input_row():
    tape = Tape()
    W = tape.var(np.array([[1.5, -0.5]]))
    x = np.array([[0.2], [0.4]])
    _, dy0 = input_derivative(lambda z: tanh(W @ z), x, column=0)
    _, dy1 = input_derivative(lambda z: tanh(W @ z), x, column=1)
    s = 1 - math.tanh(1.5 * 0.2 - 0.5 * 0.4) ** 2
    assert dy0.value.item() == pytest.approx(1.5 * s, rel=1e-14)
    assert dy1.value.item() == pytest.approx(-0.5 * s, rel=1e-14)


# second order ------------------------------------------------------------------------

def test_gradient_through_input_derivative():
    # loss = (dy/dt)^2 with y = w tanh(t) gives d loss / dw = 2 w (1 - tanh(t)^2)^2
    w0, t0 = 1.0, 0.5
    tape = Tape()
    w = tape.var(np.array([[w0]]))
    _, dy = input_derivative(lambda x: w @ tanh(x), np.array([[t0]]))
    loss = (dy ** 2).sum()
    (g,) = grad(tape, loss, [w])
    expected = 2 * w0 * (1 - math.tanh(t0) ** 2) ** 2
    assert g.item() == pytest.approx(expected, rel=1e-12)
    expanded = lambda ww: ww ** 2 * (1 - math.tanh(t0) ** 2) ** 2  # noqa: E731
    assert g.item() == pytest.approx(fd(expanded, w0), rel=1e-6)


def test_second_order_linearity_and_independence():
    tape = Tape()
    w = tape.var(np.array([[0.8]]))
    unused = tape.var(np.array([[4.0]]))
    _, dy = input_derivative(lambda x: w @ tanh(x), np.array([[0.2, 0.9]]))
    r = (dy ** 2).mean()
    g1, g_unused = grad(tape, r, [w, unused])
    (g2,) = grad(tape, r * 2.0, [w])
    np.testing.assert_allclose(g2, 2 * g1, rtol=1e-15)
    np.testing.assert_array_equal(g_unused, 0.0)


def test_dual_arithmetic_with_constants():
    x = Dual(np.array([[0.5]]), np.array([[1.0]]))
    y = exp(x * 2.0) - x + 1.0
    assert y.tangent.item() == pytest.approx(2 * math.exp(1.0) - 1, rel=1e-15)
