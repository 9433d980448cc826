import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from neuroplan import autodiff as ad
from neuroplan import losses as L


def grad_of(fn, x):
    tape = ad.Tape()
    xv = tape.var(x)
    out = fn(xv)
    return out.data, tape.backward(out)[xv]


@pytest.mark.parametrize("fn,value,deriv", [
    (ad.exp, 1.0, 1.0),
    (ad.tanh, 0.0, 1.0),
    (ad.sin, 0.0, 1.0),
    (ad.cos, 1.0, 0.0),
    (ad.sigmoid, 0.5, 0.25),
])
def test_primitive_at_zero(fn, value, deriv):
    v, g = grad_of(fn, 0.0)
    assert v == pytest.approx(value) and g == pytest.approx(deriv)


def test_x_sin_x():
    _, g = grad_of(lambda x: x * ad.sin(x), 1.3)
    assert g == pytest.approx(math.sin(1.3) + 1.3 * math.cos(1.3))
    assert g == pytest.approx(1.3113, abs=1e-4)


def test_square_gradient():
    _, g = grad_of(lambda x: x * x, 3.0)
    assert g == 6.0


def test_constant_output():
    tape = ad.Tape()
    x = tape.var(2.0)
    c = tape.lift(5.0)
    grads = tape.backward(c)
    assert grads[c] == 1.0 and grads[x] == 0.0


def test_atan2_and_div():
    tape = ad.Tape()
    y, x = tape.var(1.0), tape.var(2.0)
    out = ad.atan2(y, x) + y / x
    g = tape.backward(out)
    assert g[y] == pytest.approx(2 / 5 + 1 / 2)
    assert g[x] == pytest.approx(-1 / 5 - 1 / 4)


def test_min_and_abs_subgradients():
    tape = ad.Tape()
    a, b = tape.var(1.0), tape.var(1.0)
    g = tape.backward(ad.minimum(a, b))
    assert (g[a], g[b]) == (1.0, 0.0)
    _, ga = grad_of(ad.abs, 0.0)
    assert ga == 0.0
    _, gs = grad_of(ad.sqrt, 0.0)
    assert gs == 0.0


def test_amin_tie_lowest_index():
    tape = ad.Tape()
    x = tape.var(np.array([3.0, 1.0, 1.0, 2.0]))
    m, idx = ad.amin(x)
    assert idx == 1
    np.testing.assert_array_equal(tape.backward(m)[x], [0, 1, 0, 0])


def test_matmul_and_broadcast():
    rng = np.random.default_rng(0)
    A, B = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
    tape = ad.Tape()
    a, b = tape.var(A), tape.var(B)
    out = ((a @ b) + np.ones(2)).sum()
    g = tape.backward(out)
    np.testing.assert_allclose(g[a], np.ones((3, 2)) @ B.T)
    np.testing.assert_allclose(g[b], A.T @ np.ones((3, 2)))


def test_take_with_repeated_index_accumulates():
    tape = ad.Tape()
    x = tape.var(np.array([1.0, 2.0, 3.0]))
    out = x[np.array([0, 0, 2])].sum()
    np.testing.assert_array_equal(tape.backward(out)[x], [2, 0, 1])


@pytest.mark.parametrize("bad", [
    lambda t: ad.exp(t.lift(800.0)),
    lambda t: ad.sqrt(t.lift(-1.0)),
    lambda t: t.lift(1.0) / t.lift(0.0),
    lambda t: t.lift(math.inf) + 1.0,
])
def test_non_finite_guard(bad):
    with pytest.raises(ad.NumericalError):
        bad(ad.Tape())


def test_mixing_tapes_is_rejected():
    a, b = ad.Tape().var(1.0), ad.Tape().var(2.0)
    with pytest.raises(ad.TapeError):
        a + b


def test_grad_check_quadratic():
    x = np.random.default_rng(1).normal(size=10)
    assert ad.grad_check(lambda t, v: (v * v).sum(), x) < 1e-8


def test_grad_check_collision_wrt_position():
    objs = np.array([[[4.0, 1.0], [-2.0, 3.0], [0.0, 0.0]]])

    def f(tape, p):
        return L.e_collision(p[0:1], p[1:2], objs, shift=5.0).sum()
    for q in ([1.0, 0.5], [-3.0, 2.0], [6.0, -1.0]):
        assert ad.grad_check(f, np.array(q)) < 1e-5


def test_grad_check_skips_kinks():
    chk = ad.grad_check_detail(lambda t, v: ad.abs(v).sum(), np.array([0.0, 1.0]), skip_kinks=True)
    assert chk.skipped == 1 and chk.max_rel_error < 1e-9


def test_fault_injection_is_detected():
    x = np.array([0.3, -0.7])
    f = lambda t, v: ad.sin(v).sum()  # noqa: E731
    assert ad.grad_check(f, x) < 1e-8
    ad.FAULTS["sin"] = 1.01
    try:
        assert ad.grad_check(f, x) > 1e-4
    finally:
        ad.FAULTS.clear()


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-2, 2), st.floats(0.1, 2))
def test_linearity_of_backward(a, b, x0, x1):
    x = np.array([x0, x1])

    def grads(fn):
        tape = ad.Tape()
        v = tape.var(x)
        return tape.backward(fn(v))[v]
    f = lambda v: ad.sin(v).sum() * v[1]  # noqa: E731
    g = lambda v: ad.exp(v[0]) + ad.sqrt(v[1])  # noqa: E731
    combo = grads(lambda v: a * f(v) + b * g(v))
    np.testing.assert_allclose(combo, a * grads(f) + b * grads(g), rtol=0, atol=1e-10)


def test_determinism_bit_identical():
    def run():
        tape = ad.Tape()
        x = tape.var(np.linspace(-1, 1, 7))
        y = ad.tanh(x @ np.arange(7.0).reshape(7, 1) * 0.1) * ad.exp(x[:1])
        out = y.sum()
        return [d.copy() for d in tape.data], tape.backward(out)[x]
    d1, g1 = run()
    d2, g2 = run()
    assert all(np.array_equal(a, b) for a, b in zip(d1, d2))
    assert np.array_equal(g1, g2)
