import numpy as np
import pytest

from porohdg import fe


@pytest.mark.parametrize("k,expected", [(1, 3), (2, 6), (3, 10), (4, 15)])
def test_simplex_dimension(k, expected):
    assert fe.dim_Pk(k, "triangle") == expected
    assert fe.simplex_basis(k).dim == expected


@pytest.mark.parametrize("k", [0, 1, 2, 3])
def test_edge_dimension(k):
    assert fe.dim_Pk(k, "edge") == k + 1
    assert fe.edge_basis(k).dim == k + 1


def test_dim_rejects_negative_degree():
    with pytest.raises(ValueError):
        fe.dim_Pk(-1)


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_reference_mass_is_identity(k):
    b = fe.simplex_basis(k)
    q = fe.quadrature("triangle", 2 * k)
    V = b.eval(q.points)
    G = (V * q.weights[:, None]).T @ V
    assert np.abs(G - np.eye(b.dim)).max() < 1e-12


@pytest.mark.parametrize("k", [0, 2, 4])
def test_edge_mass_is_identity(k):
    b = fe.edge_basis(k)
    q = fe.quadrature("edge", 2 * k)
    V = b.eval(q.points)
    G = (V * q.weights[:, None]).T @ V
    assert np.abs(G - np.eye(b.dim)).max() < 1e-12


def test_bases_are_degree_nested():
    pts = np.random.default_rng(0).random((40, 2)) * 0.45
    for k in (1, 2, 3):
        lo, hi = fe.simplex_basis(k), fe.simplex_basis(k + 1)
        assert np.abs(hi.eval(pts)[:, : lo.dim] - lo.eval(pts)).max() < 1e-12


@pytest.mark.parametrize("k", [1, 3, 4])
def test_gradients_match_finite_differences(k):
    b = fe.simplex_basis(k)
    pts = np.array([[0.2, 0.3], [0.6, 0.1], [0.05, 0.85]])
    eps = 1e-6
    gx = (b.eval(pts + [eps, 0.0]) - b.eval(pts - [eps, 0.0])) / (2 * eps)
    gy = (b.eval(pts + [0.0, eps]) - b.eval(pts - [0.0, eps])) / (2 * eps)
    g = b.grad(pts)
    assert np.abs(g[:, :, 0] - gx).max() < 1e-6
    assert np.abs(g[:, :, 1] - gy).max() < 1e-6


def test_evaluation_at_vertices_is_finite():
    b = fe.simplex_basis(4)
    assert np.isfinite(b.eval(fe.REF_VERTICES)).all()
    assert np.isfinite(b.grad(fe.REF_VERTICES)).all()


def test_quadrature_exactness_against_monomial_moments():
    # int_T x^a y^b = a! b! / (a+b+2)!
    from math import factorial

    for order in (1, 3, 5, 9):
        q = fe.quadrature("triangle", order)
        for a in range(order + 1):
            for b in range(order + 1 - a):
                num = np.sum(q.weights * q.points[:, 0] ** a * q.points[:, 1] ** b)
                ref = factorial(a) * factorial(b) / factorial(a + b + 2)
                assert abs(num - ref) < 1e-14, (order, a, b)


def test_quadrature_basics():
    q = fe.quadrature("triangle", 2)
    assert abs(q.weights.sum() - 0.5) < 1e-14
    assert abs(np.sum(q.weights * q.points[:, 0]) - 1.0 / 6.0) < 1e-14
    qe = fe.quadrature("edge", 3)
    assert abs(qe.weights.sum() - 1.0) < 1e-14
    for a in range(4):
        assert abs(np.sum(qe.weights * qe.points**a) - 1.0 / (a + 1)) < 1e-14


def test_quadrature_rejects_out_of_range_order():
    with pytest.raises(ValueError, match=str(fe.MAX_QUAD_ORDER)):
        fe.quadrature("triangle", fe.MAX_QUAD_ORDER + 1)
    with pytest.raises(ValueError):
        fe.quadrature("triangle", -1)


def test_affine_map_identity_and_scaling():
    ref = fe.affine_map(fe.REF_VERTICES)
    assert np.abs(ref.jac - np.eye(2)).max() < 1e-15
    assert abs(ref.det - 1.0) < 1e-15
    scaled = fe.affine_map(2.0 * fe.REF_VERTICES)
    assert abs(scaled.det - 4.0) < 1e-15


def test_affine_map_face_normals():
    amap = fe.affine_map(fe.REF_VERTICES)
    s = 1.0 / np.sqrt(2.0)
    assert np.allclose(amap.face_normals[0], [s, s], atol=1e-15)
    assert np.allclose(amap.face_normals[1], [-1.0, 0.0], atol=1e-15)
    assert np.allclose(amap.face_normals[2], [0.0, -1.0], atol=1e-15)
    # normals orthogonal to their face tangents
    for lf, (a, b) in enumerate(fe.LOCAL_FACE_VERTICES):
        t = fe.REF_VERTICES[b] - fe.REF_VERTICES[a]
        assert abs(np.dot(t, amap.face_normals[lf])) < 1e-14


def test_affine_map_rejects_degenerate():
    with pytest.raises(ValueError):
        fe.affine_map([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    with pytest.raises(ValueError):
        fe.affine_map([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]])  # clockwise


@pytest.mark.parametrize("k", [1, 2, 3])
def test_pushforward_mass_scales_with_jacobian(k):
    verts = np.array([[0.2, -0.1], [1.4, 0.3], [0.5, 1.7]])
    amap = fe.affine_map(verts)
    b = fe.simplex_basis(k)
    q = fe.quadrature("triangle", 2 * k)
    V = b.eval(q.points)
    M = amap.det * (V * q.weights[:, None]).T @ V
    assert np.abs(M - amap.det * np.eye(b.dim)).max() < 1e-12 * amap.det


def test_roundtrip_reference_physical():
    verts = np.array([[0.0, 0.0], [2.0, 0.5], [0.5, 3.0]])
    amap = fe.affine_map(verts)
    pts = np.random.default_rng(1).random((30, 2)) * 0.4
    phys = amap.to_physical(pts)
    back = amap.to_reference(phys)
    assert np.abs(back - pts).max() < 1e-13
