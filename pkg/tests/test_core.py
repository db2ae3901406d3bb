import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sofari.core import (RegressionData, SvdTriple, Variant, canonical_signs, compose_coefficient,
                         grad_u, grad_u_peeled, grad_v, grad_v_peeled, loss, nuisance_view)
from sofari.errors import ConstraintViolation

from oracles import central_diff, literal_loss, random_instance, simplified_loss


def test_regression_data_shapes(rng):
    x = rng.standard_normal((10, 3))
    d = RegressionData(x, rng.standard_normal(10))
    assert (d.n, d.p, d.q) == (10, 3, 1)
    np.testing.assert_allclose(d.gram, x.T @ x / 10, atol=1e-14)
    with pytest.raises(ValueError):
        RegressionData(x, rng.standard_normal((9, 2)))


def test_triple_from_matrix_roundtrip(rng):
    _, _, l, d, v = random_instance(rng, 5, 6, 4, 3)
    t = SvdTriple.from_matrix((l * d) @ v.T, rank=3)
    np.testing.assert_allclose(compose_coefficient(t), (l * d) @ v.T, atol=1e-12)
    np.testing.assert_allclose(t.d, d, rtol=1e-12)
    assert np.all(np.abs(t.v).max(axis=0) == t.v.max(axis=0))


def test_triple_rejects_bad_input():
    with pytest.raises(ConstraintViolation):
        SvdTriple(np.ones((3, 1)), [1.0], np.array([[1.0], [0.0]]))
    l = np.eye(3)[:, :2]
    with pytest.raises(ValueError):
        SvdTriple(l, [1.0, 2.0], np.eye(2))
    with pytest.raises(ValueError):
        SvdTriple(l, [1.0, 1.0], np.eye(2))


def test_from_factors_orders_layers(rng):
    v = np.linalg.qr(rng.standard_normal((5, 2)))[0]
    l = np.linalg.qr(rng.standard_normal((4, 2)))[0]
    t = SvdTriple.from_factors(l * [1.0, 3.0], v)
    np.testing.assert_allclose(t.d, [3.0, 1.0])
    np.testing.assert_allclose(compose_coefficient(t), (l * [1.0, 3.0]) @ v.T, atol=1e-13)


@given(st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_canonical_signs_idempotent_and_preserving(r, seed):
    g = np.random.default_rng(seed)
    l = g.standard_normal((6, r))
    v = g.standard_normal((5, r))
    l1, v1 = canonical_signs(l, v)
    l2, v2 = canonical_signs(l1, v1)
    np.testing.assert_array_equal(l1, l2)
    np.testing.assert_allclose(l1 @ v1.T, l @ v.T)


def test_nuisance_view_index_sets(rng):
    u = rng.standard_normal((4, 3))
    v = np.linalg.qr(rng.standard_normal((5, 3)))[0]
    s = nuisance_view(u, v, 1, Variant.STRONG)
    w = nuisance_view(u, v, 1, Variant.WEAK)
    np.testing.assert_array_equal(s.u_others, u[:, [0, 2]])
    np.testing.assert_array_equal(w.u_others, u[:, [2]])
    np.testing.assert_allclose(w.c1_hat, np.outer(u[:, 0], v[:, 0]))
    assert not np.any(s.c1_hat)


def test_loss_matches_literal(rng):
    x, y, l, d, v = random_instance(rng, 30, 5, 4, 2)
    data = RegressionData(x, y)
    assert abs(loss(data, l * d, v) - literal_loss(x, y, l * d, v)) < 1e-12
    with pytest.raises(ConstraintViolation):
        loss(data, l * d, v * 2)


def _grad_checks(seed):
    g = np.random.default_rng(seed)
    n = int(g.integers(20, 51))
    p, q = int(g.integers(3, 11)), int(g.integers(3, 11))
    r = int(g.integers(1, min(3, p, q) + 1))
    x, y, l, d, v = random_instance(g, n, p, q, r)
    u = l * d + 0.3 * g.standard_normal((p, r))
    data = RegressionData(x, y)
    worst = 0.0
    for k in range(r):
        def fu(z):
            uu = u.copy()
            uu[:, k] = z
            return simplified_loss(x, y, uu, v)

        def fv(z):
            vv = v.copy()
            vv[:, k] = z
            return simplified_loss(x, y, u, vv)

        for an, fd in ((grad_u(data, u, v, k), central_diff(fu, u[:, k])),
                       (grad_v(data, u, v, k), central_diff(fv, v[:, k]))):
            worst = max(worst, np.linalg.norm(an - fd) / max(np.linalg.norm(fd), 1e-8))
        view = nuisance_view(u, v, k, Variant.WEAK)
        c1 = view.c1_hat

        def pu(z):
            uu = u.copy()
            uu[:, k] = z
            return simplified_loss(x, y, uu[:, k:], v[:, k:], c1)

        def pv(z):
            vv = v.copy()
            vv[:, k] = z
            return simplified_loss(x, y, u[:, k:], vv[:, k:], c1)

        for an, fd in ((grad_u_peeled(data, view, u, v, k), central_diff(pu, u[:, k])),
                       (grad_v_peeled(data, view, u, v, k), central_diff(pv, v[:, k]))):
            worst = max(worst, np.linalg.norm(an - fd) / max(np.linalg.norm(fd), 1e-8))
    return worst


def gradient_suite(n_instances=100, seed=0):
    return max(_grad_checks(seed + i) for i in range(n_instances))


def test_gradients_match_central_differences():
    assert gradient_suite(100) <= 1e-5


def test_grad_u_matches_literal_loss(rng):
    # with orthonormal v the simplified and literal losses share their u-gradient
    x, y, l, d, v = random_instance(rng, 40, 6, 5, 3)
    data = RegressionData(x, y)
    u = l * d
    for k in range(3):
        def f(z):
            uu = u.copy()
            uu[:, k] = z
            return literal_loss(x, y, uu, v)
        fd = central_diff(f, u[:, k])
        assert np.linalg.norm(grad_u(data, u, v, k) - fd) <= 1e-6 * np.linalg.norm(fd) + 1e-8


def test_peeled_design_term_vanishes_for_orthonormal_v(rng):
    x, y, l, d, v = random_instance(rng, 40, 6, 5, 3)
    data = RegressionData(x, y)
    u = l * d
    view = nuisance_view(u, v, 2, Variant.WEAK)
    np.testing.assert_allclose(grad_u_peeled(data, view, u, v, 2), grad_u(data, u, v, 2), atol=1e-12)
