import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lymphch.grid import Grid, GridMismatch


def random_faces(g, rs):
    F = [rs.normal(size=g.face_shape(k)) for k in range(g.dim)]
    for k, f in enumerate(F):
        idx = [slice(None)] * g.dim
        idx[k] = 0
        f[tuple(idx)] = 0.0
        idx[k] = -1
        f[tuple(idx)] = 0.0
    return tuple(F)


GRIDS = [Grid.uniform(17, 1.0), Grid.uniform(40, 3.0), Grid((12, 9), (1.0, 2.0)), Grid.uniform(16, 1.0, dim=2)]


def test_construction_validation():
    with pytest.raises(ValueError):
        Grid.uniform(2)
    with pytest.raises(ValueError):
        Grid.uniform(10, L=0.0)
    with pytest.raises(ValueError):
        Grid((4, 4, 4), (1, 1, 1))
    g = Grid((8, 10), (2.0, 5.0))
    assert g.h == (0.25, 0.5)
    assert g.size == 80
    assert g.shape == (8, 10)


def test_grid_mismatch():
    g = Grid.uniform(8)
    with pytest.raises(GridMismatch):
        g.integrate(np.ones(9))


@pytest.mark.parametrize("g", GRIDS, ids=str)
def test_grad_of_constant_is_zero(g):
    for F in g.grad(np.full(g.shape, 3.7)):
        assert np.all(F == 0.0)


def test_grad_exact_for_linear():
    g = Grid.uniform(20, 2.0)
    (x,) = g.centers()
    (F,) = g.grad(3.0 * x + 1.0)
    np.testing.assert_allclose(F[1:-1], 3.0, rtol=1e-13)
    assert F[0] == 0.0 and F[-1] == 0.0


def test_div_of_zero_faces():
    g = Grid.uniform(8, dim=2)
    assert np.all(g.div(g.face_zeros()) == 0.0)


@pytest.mark.parametrize("g", GRIDS, ids=str)
def test_div_conservation(g):
    rs = np.random.default_rng(3)
    F = random_faces(g, rs)
    total = g.integrate(g.div(F))
    assert abs(total) <= 1e-14 * g.face_l2norm(F) * max(1.0, g.volume)


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 30), st.integers(0, 2**31 - 1), st.booleans())
def test_summation_by_parts(n, seed, two_d):
    g = Grid.uniform(n, 1.3, dim=2 if two_d else 1)
    rs = np.random.default_rng(seed)
    F = random_faces(g, rs)
    f = rs.normal(size=g.shape)
    lhs = g.inner(g.div(F), f)
    rhs = -g.face_inner(F, g.grad(f))
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


def test_matrices_match_operators():
    g = Grid((7, 5), (1.0, 2.0))
    rs = np.random.default_rng(0)
    f = rs.normal(size=g.shape)
    np.testing.assert_allclose(g.grad_matrix @ f.ravel(), g.flatten_faces(g.grad(f)), atol=1e-13)
    np.testing.assert_allclose(g.laplacian_matrix @ f.ravel(), g.laplacian(f).ravel(), atol=1e-12)
    np.testing.assert_allclose(g.face_avg_matrix @ f.ravel(), g.flatten_faces(g.face_value(f)), atol=1e-15)
    assert abs(g.div_matrix + g.grad_matrix.T).max() == 0.0


@pytest.mark.parametrize("g", GRIDS, ids=str)
def test_laplacian_symmetric_negative_semidefinite(g):
    rs = np.random.default_rng(1)
    f, h = rs.normal(size=g.shape), rs.normal(size=g.shape)
    assert g.inner(g.laplacian(f), f) <= 0.0
    assert g.inner(g.laplacian(f), h) == pytest.approx(g.inner(f, g.laplacian(h)), rel=1e-12)
    assert np.max(np.abs(g.laplacian(np.ones(g.shape)))) == 0.0
    # kernel is exactly the constants: the second eigenvalue is strictly negative
    ev = np.linalg.eigvalsh(g.laplacian_matrix.toarray())
    assert np.sum(np.abs(ev) < 1e-9) == 1


def test_laplacian_one_hot_stencil():
    g = Grid.uniform(9, 9.0)
    f = np.zeros(9)
    f[4] = 1.0
    lap = g.laplacian(f)
    np.testing.assert_allclose(lap[3:6], [1.0, -2.0, 1.0], atol=1e-14)
    assert np.all(lap[:3] == 0) and np.all(lap[6:] == 0)


def _orders(errs):
    return [np.log2(a / b) for a, b in zip(errs, errs[1:])]


def test_grad_second_order_on_cosine():
    errs = []
    for n in (32, 64, 128, 256):
        g = Grid.uniform(n, 2.0)
        (x,) = g.centers()
        (xf,) = g.faces(0)
        (F,) = g.grad(np.cos(np.pi * x / 2.0))
        errs.append(np.max(np.abs(F - (-np.pi / 2.0) * np.sin(np.pi * xf / 2.0))))
    assert min(_orders(errs)) >= 1.9


def test_laplacian_second_order_on_cosine():
    errs = []
    for n in (32, 64, 128, 256):
        g = Grid.uniform(n, 1.0)
        (x,) = g.centers()
        u = np.cos(np.pi * x)
        errs.append(np.max(np.abs(g.laplacian(u) + np.pi**2 * u)))
    assert min(_orders(errs)) >= 1.9


def test_laplacian_second_order_2d():
    errs = []
    for n in (16, 32, 64, 128):
        g = Grid.uniform(n, 1.0, dim=2)
        X, Y = g.centers()
        u = np.cos(np.pi * X) * np.cos(2 * np.pi * Y)
        errs.append(np.max(np.abs(g.laplacian(u) + 5 * np.pi**2 * u)))
    assert min(_orders(errs)) >= 1.9


def test_face_value():
    g = Grid.uniform(4)
    (F,) = g.face_value(np.array([0.0, 1.0, 3.0, 2.0]))
    np.testing.assert_allclose(F, [0.0, 0.5, 2.0, 2.5, 2.0])
    (K,) = g.face_value(np.full(4, 1.7))
    assert np.all(K == 1.7)


@given(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=40))
def test_face_value_between_neighbors(vals):
    f = np.sort(np.array(vals))
    g = Grid.uniform(len(f))
    (F,) = g.face_value(f)
    assert np.all(F[1:-1] >= f[:-1] - 1e-12) and np.all(F[1:-1] <= f[1:] + 1e-12)


def test_integrate_unit_square():
    g = Grid.uniform(13, 1.0, dim=2)
    assert g.integrate(np.ones(g.shape)) == 1.0


@settings(max_examples=30)
@given(st.integers(0, 2**31 - 1), st.floats(-3, 3))
def test_inner_bilinear_symmetric(seed, a):
    g = Grid((6, 7), (1.0, 1.5))
    rs = np.random.default_rng(seed)
    f, h, k = (rs.normal(size=g.shape) for _ in range(3))
    assert g.inner(f, h) == pytest.approx(g.inner(h, f), rel=1e-13)
    assert g.inner(a * f + k, h) == pytest.approx(a * g.inner(f, h) + g.inner(k, h), rel=1e-12, abs=1e-12)


def test_l2norm_of_cosine():
    errs = []
    for n in (32, 64, 128, 256):
        g = Grid.uniform(n)
        (x,) = g.centers()
        errs.append(abs(g.l2norm(np.cos(np.pi * x)) - np.sqrt(0.5)))
    # midpoint rule integrates cos^2 exactly on this grid
    assert max(errs) < 1e-13


def test_h1seminorm_and_bounds():
    g = Grid.uniform(100, 1.0)
    (x,) = g.centers()
    assert g.h1seminorm(x) == pytest.approx(np.sqrt(99 / 100), rel=1e-12)
    assert g.linf_bounds(x) == (x.min(), x.max())


def test_face_flatten_roundtrip():
    g = Grid((5, 4), (1.0, 1.0))
    rs = np.random.default_rng(0)
    F = random_faces(g, rs)
    G = g.unflatten_faces(g.flatten_faces(F))
    for a, b in zip(F, G):
        assert np.array_equal(a, b)
    assert g.n_faces == 6 * 4 + 5 * 5
