"""Forward-mode dual arithmetic against central finite differences."""

import numpy as np
import pytest

from curioplan import autodiff as ad


def central_diff(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        grad.flat[i] = (f(x + e) - f(x - e)) / (2 * h)
    return grad


def test_seed_identity():
    x = np.array([1.0, -2.0, 3.0])
    d = ad.seed(x)
    np.testing.assert_array_equal(d.val, x)
    np.testing.assert_array_equal(d.jac, np.eye(3))


@pytest.mark.parametrize("expr", [
    lambda x: ad.sum(ad.sin(x) * ad.cos(x * 2.0)),
    lambda x: ad.sum(ad.exp(x * 0.3) / (1.0 + x * x)),
    lambda x: ad.sum((x - 0.5) ** 3 + 2.0 / (x + 5.0)),
    lambda x: ad.sum(ad.sqrt(x * x + 1.0) - ad.log(x + 4.0)),
    lambda x: ad.sum(ad.tanh(x) @ np.arange(1.0, 5.0)),
])
def test_scalar_chain_matches_fd(expr):
    rng = np.random.default_rng(3)
    for _ in range(5):
        x = rng.normal(size=4)
        got = expr(ad.seed(x)).jac
        want = central_diff(lambda v: float(ad.value(expr(v))), x)
        np.testing.assert_allclose(got, want, rtol=1e-6, atol=1e-8)


def test_matmul_constant_left_and_right():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(3, 4))
    x = rng.normal(size=4)

    def f(v):
        return ad.sum(ad.sin(A @ v) ** 2)

    got = f(ad.seed(x)).jac
    want = central_diff(lambda v: float(ad.value(f(v))), x)
    np.testing.assert_allclose(got, want, rtol=1e-6)

    B = rng.normal(size=(4, 2))

    def g(v):
        return ad.sum((v @ B) * (v @ B))

    got = g(ad.seed(x)).jac
    want = central_diff(lambda v: float(ad.value(g(v))), x)
    np.testing.assert_allclose(got, want, rtol=1e-6)


def test_seed_rows_gives_row_local_jacobians():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(5, 3))
    P = rng.normal(size=(4, 3))

    d = ad.seed_rows(X)
    out = ad.sin(d @ P.T)
    assert out.val.shape == (5, 4)
    assert out.jac.shape == (5, 4, 3)
    # row t of the output depends only on row t of the input
    for t in range(5):
        want = np.cos(X[t] @ P.T)[:, None] * P
        np.testing.assert_allclose(out.jac[t], want, rtol=1e-12)


def test_getitem_keeps_tangents_aligned():
    d = ad.seed(np.array([1.0, 2.0, 3.0]))
    sub = d[1]
    assert sub.val == 2.0
    np.testing.assert_array_equal(sub.jac, [0.0, 1.0, 0.0])
    rows = ad.seed_rows(np.arange(6.0).reshape(2, 3))
    col = rows[:, 1]
    assert col.val.shape == (2,)
    np.testing.assert_array_equal(col.jac[0], [0.0, 1.0, 0.0])


def test_concat_mixed_plain_and_dual():
    d = ad.seed(np.array([1.0, 2.0]))
    c = ad.concat([d, np.array([5.0])], axis=-1)
    assert c.val.shape == (3,)
    np.testing.assert_array_equal(c.jac[2], [0.0, 0.0])
    np.testing.assert_array_equal(c.jac[0], [1.0, 0.0])


def test_division_by_dual():
    x = np.array([2.0, 4.0])

    def f(v):
        return ad.sum(1.0 / v + v / (v * v + 1.0))

    got = f(ad.seed(x)).jac
    want = central_diff(lambda v: float(ad.value(f(v))), x)
    np.testing.assert_allclose(got, want, rtol=1e-6)


def test_sum_with_axis():
    d = ad.seed_rows(np.arange(6.0).reshape(2, 3))
    s = ad.sum(d * d, axis=-1)
    assert s.val.shape == (2,)
    np.testing.assert_allclose(s.jac[1], 2.0 * np.array([3.0, 4.0, 5.0]))


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        ad.Dual(np.zeros(3), np.zeros((4, 2)))
