"""Reverse-tape primitives against central finite differences.

Every primitive gets (a) a value check against plain numpy and (b) a
gradient check: seed the output with a fixed random cotangent, run the
tape backward, and compare against a central-difference directional
derivative. Tolerances sit well above float64 FD noise (~1e-10 for unit
scale inputs at h=1e-6) and well below any sign/factor bug.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import mdapnn.autodiff as ad

RNG = np.random.default_rng(20240817)


def fd_directional(f, x, dx, h=1e-6):
    """(f(x + h dx) - f(x - h dx)) / 2h, scalar f."""
    return (f(x + h * dx) - f(x - h * dx)) / (2.0 * h)


def check_unary(op, npy, shape, lo=-2.0, hi=2.0, tol=5e-9):
    x = RNG.uniform(lo, hi, size=shape)
    dx = RNG.standard_normal(shape)
    cot = RNG.standard_normal(shape)

    t = ad.Tensor(x)
    out = op(t)
    assert np.allclose(out.value, npy(x), rtol=1e-13, atol=1e-13)
    ad.backward(out, seed=cot)

    def scalarized(xv):
        return float(np.sum(cot * npy(xv)))

    expect = fd_directional(scalarized, x, dx)
    got = float(np.sum(t.grad * dx))
    assert got == pytest.approx(expect, rel=1e-5, abs=tol)


class TestUnaryPrimitives:
    def test_tanh(self):
        check_unary(ad.tanh, np.tanh, (7, 3))

    def test_exp(self):
        check_unary(ad.exp, np.exp, (5, 2))

    def test_negexp(self):
        check_unary(ad.negexp, lambda x: np.exp(-x), (6, 1))

    def test_sigmoid(self):
        check_unary(ad.sigmoid, lambda x: 1.0 / (1.0 + np.exp(-x)), (4, 4))

    def test_softplus(self):
        check_unary(ad.softplus,
                    lambda x: np.maximum(x, 0) + np.log1p(np.exp(-np.abs(x))),
                    (8, 2))

    def test_softplus_large_arguments_stay_finite(self):
        t = ad.Tensor(np.array([[-800.0, 800.0]]))
        out = ad.softplus(t)
        assert np.all(np.isfinite(out.value))
        assert out.value[0, 0] == 0.0
        assert out.value[0, 1] == 800.0

    def test_pow_int(self):
        check_unary(lambda t: ad.pow_int(t, 4), lambda x: x ** 4, (5, 3))

    def test_scale(self):
        check_unary(lambda t: ad.scale(t, -2.5), lambda x: -2.5 * x, (5, 3))


class TestBinaryAndShape:
    def test_add_broadcast_bias(self):
        # (n,k) + (k,) bias broadcasting, the MLP wiring case
        x = RNG.standard_normal((6, 3))
        b = RNG.standard_normal(3)
        cot = RNG.standard_normal((6, 3))
        tx, tb = ad.Tensor(x), ad.Tensor(b)
        out = ad.add(tx, tb)
        assert np.allclose(out.value, x + b)
        ad.backward(out, seed=cot)
        assert np.allclose(tx.grad, cot)
        assert np.allclose(tb.grad, cot.sum(axis=0))
        assert tb.grad.shape == b.shape

    def test_mul_broadcast_column(self):
        x = RNG.standard_normal((5, 4))
        c = RNG.standard_normal((5, 1))
        cot = RNG.standard_normal((5, 4))
        tx, tc = ad.Tensor(x), ad.Tensor(c)
        out = ad.mul(tx, tc)
        ad.backward(out, seed=cot)
        assert np.allclose(tx.grad, cot * c)
        assert np.allclose(tc.grad, (cot * x).sum(axis=1, keepdims=True))

    def test_dotT(self):
        x = RNG.standard_normal((6, 3))
        w = RNG.standard_normal((4, 3))  # stored as (out, in)
        cot = RNG.standard_normal((6, 4))
        tx, tw = ad.Tensor(x), ad.Tensor(w)
        out = ad.dotT(tx, tw)
        assert np.allclose(out.value, x @ w.T)
        ad.backward(out, seed=cot)
        assert np.allclose(tx.grad, cot @ w)
        assert np.allclose(tw.grad, cot.T @ x)

    def test_rowdot(self):
        a = RNG.standard_normal((5, 4))
        w = RNG.standard_normal(4)
        cot = RNG.standard_normal((5, 1))
        ta = ad.Tensor(a)
        out = ad.rowdot(ta, w)
        assert out.shape == (5, 1)
        assert np.allclose(out.value.ravel(), a @ w)
        ad.backward(out, seed=cot)
        assert np.allclose(ta.grad, cot * w[None, :])

    def test_col_rows_reshape(self):
        a = RNG.standard_normal((6, 3))
        ta = ad.Tensor(a)
        c = ad.col(ta, 1)
        assert c.shape == (6, 1)
        ad.backward(ad.tensor_sum(c))
        expect = np.zeros_like(a)
        expect[:, 1] = 1.0
        assert np.allclose(ta.grad, expect)

        tb = ad.Tensor(a)
        r = ad.rows(tb, 2, 5)
        assert np.allclose(r.value, a[2:5])
        ad.backward(ad.tensor_sum(r))
        expect = np.zeros_like(a)
        expect[2:5] = 1.0
        assert np.allclose(tb.grad, expect)

        tc = ad.Tensor(a)
        sh = ad.reshape(tc, (3, 6))
        ad.backward(ad.tensor_sum(sh * np.arange(18.0).reshape(3, 6)))
        assert np.allclose(tc.grad, np.arange(18.0).reshape(6, 3))

    def test_sum_mean_axes(self):
        a = RNG.standard_normal((4, 5))
        for axis, keep in ((None, False), (0, False), (1, True)):
            ta = ad.Tensor(a)
            out = ad.tensor_sum(ta, axis=axis, keepdims=keep)
            assert np.allclose(out.value, a.sum(axis=axis, keepdims=keep))
            ad.backward(out)
            assert np.allclose(ta.grad, np.ones_like(a))
        ta = ad.Tensor(a)
        out = ad.tensor_mean(ta)
        ad.backward(out)
        assert np.allclose(ta.grad, np.full_like(a, 1.0 / a.size))


class TestGraphSemantics:
    def test_diamond_reuse_accumulates(self):
        # y = x*x + x used twice: dy/dx = 2x + 1
        x = np.array([[1.5, -0.5]])
        tx = ad.Tensor(x)
        y = ad.tensor_sum(ad.mul(tx, tx) + tx)
        ad.backward(y)
        assert np.allclose(tx.grad, 2 * x + 1)

    def test_constants_receive_no_gradient(self):
        tx = ad.Tensor(np.ones((2, 2)))
        out = ad.tensor_sum(ad.mul(tx, np.full((2, 2), 3.0)))
        ad.backward(out)
        assert np.allclose(tx.grad, 3.0)

    def test_operator_sugar_matches_functions(self):
        x = RNG.standard_normal((3, 2))
        t1, t2 = ad.Tensor(x), ad.Tensor(x)
        lhs = ((t1 * 2.0 - 1.0) / 4.0 + t1 ** 2).value
        rhs = (ad.add(ad.scale(ad.add(ad.scale(t2, 2.0), -1.0), 0.25),
                      ad.pow_int(t2, 2))).value
        assert np.allclose(lhs, rhs)

    def test_backward_is_deterministic(self):
        def run():
            t = ad.Tensor(np.linspace(-1, 1, 12).reshape(4, 3))
            w = ad.Tensor(np.linspace(0.1, 0.9, 9).reshape(3, 3))
            out = ad.tensor_mean(ad.tanh(ad.dotT(t, w)) ** 2)
            ad.backward(out)
            return t.grad.copy(), w.grad.copy()

        g1, g2 = run(), run()
        assert np.array_equal(g1[0], g2[0])
        assert np.array_equal(g1[1], g2[1])


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(1, 4), st.integers(0, 2 ** 31 - 1))
def test_composite_expression_gradient_property(n, k, seed):
    """Random chained expression: tape gradient matches finite differences."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1.5, 1.5, size=(n, k))
    w = rng.standard_normal((k, k)) * 0.7
    dx = rng.standard_normal((n, k))

    def value(xv):
        h = np.tanh(xv @ w.T)
        s = np.maximum(h, 0) + np.log1p(np.exp(-np.abs(h)))  # softplus
        return float(np.mean(s ** 2) + np.sum(np.exp(-xv)) / xv.size)

    tx = ad.Tensor(x)
    h = ad.tanh(ad.dotT(tx, w))
    out = ad.tensor_mean(ad.softplus(h) ** 2) + ad.scale(
        ad.tensor_sum(ad.negexp(tx)), 1.0 / x.size)
    assert out.value == pytest.approx(value(x), rel=1e-12)
    ad.backward(out)
    got = float(np.sum(tx.grad * dx))
    expect = fd_directional(value, x, dx)
    assert got == pytest.approx(expect, rel=2e-5, abs=1e-8)
