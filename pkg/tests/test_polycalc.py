from math import factorial

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hho.mesh import generate_mesh
from hho.polycalc import (UnsupportedOrderError, dim_poly, elliptic_project, gram_matrices, l2_project,
                          laplacian_matrix, monomial_exponents, quadrature, reference_triangle_rule,
                          trace_constant_probe, eval_monomials)

SQUARE = generate_mesh("cartesian", 1)


def test_square_area():
    assert abs(quadrature(SQUARE, "element", 0, 2).measure - 1.0) < 1e-15


def test_square_x2y2():
    q = quadrature(SQUARE, "element", 0, 4)
    assert abs(q.integrate(lambda x: x[:, 0] ** 2 * x[:, 1] ** 2) - 1 / 9) < 1e-13


def test_face_length():
    m = generate_mesh("voronoi_polygonal", 3)
    for F in range(m.n_faces):
        assert abs(quadrature(m, "face", F, 0).measure - m.face_area[F]) < 1e-15


@pytest.mark.parametrize("order", range(0, 13))
def test_triangle_rule_exactness(order):
    pts, w = reference_triangle_rule(order)
    assert np.all(w > 0)
    assert np.all(pts >= -1e-14) and np.all(pts.sum(1) <= 1 + 1e-14)
    assert abs(w.sum() - 1.0) < 1e-14
    # barycentric (l1, l2) over the unit triangle of area 1/2: int l1^a l2^b = a! b! / (a+b+2)!
    for a in range(order + 1):
        for b in range(order + 1 - a):
            exact = factorial(a) * factorial(b) / factorial(a + b + 2)
            assert abs(0.5 * (w @ (pts[:, 1] ** a * pts[:, 2] ** b)) - exact) < 1e-14


def test_unsupported_order():
    with pytest.raises(UnsupportedOrderError):
        quadrature(SQUARE, "element", 0, -1)
    with pytest.raises(UnsupportedOrderError):
        quadrature(SQUARE, "element", 0, 10_000)


def test_polygon_exactness():
    m = generate_mesh("voronoi_polygonal", 3)
    T = int(np.argmax([len(f) for f in m.element_faces]))
    q = quadrature(m, "element", T, 6)
    # divergence theorem oracle: int x^a y^b = sum_F int_F x^{a+1} y^b n_x / (a+1)
    a, b = 3, 3
    nrm = m.outward_normals(T)
    ref = 0.0
    for i, F in enumerate(m.element_faces[T]):
        qf = quadrature(m, "face", int(F), 8)
        ref += qf.integrate(lambda x: x[:, 0] ** (a + 1) * x[:, 1] ** b) * nrm[i, 0] / (a + 1)
    assert abs(q.integrate(lambda x: x[:, 0] ** a * x[:, 1] ** b) - ref) < 1e-14


def test_gram_degree0():
    M, K = gram_matrices(SQUARE, 0, 0)
    assert np.allclose(M, [[1.0]]) and np.allclose(K, [[0.0]])


def test_gram_constant_kernel():
    M, K = gram_matrices(generate_mesh("voronoi_polygonal", 3), 2, 3)
    e = np.zeros(len(K))
    e[0] = 1.0
    assert np.abs(K @ e).max() < 1e-12
    assert np.allclose(M, M.T) and np.all(np.linalg.eigvalsh(M) > 0)


def test_gram_scaled_entry():
    M, _ = gram_matrices(SQUARE, 0, 1)
    hT = np.sqrt(2.0)
    assert abs(M[1, 1] - 1 / (12 * hT ** 2)) < 1e-14


def test_project_reproduces_linear():
    c = l2_project(lambda x: x[:, 0], SQUARE, "element", 0, 1)
    x = np.random.default_rng(0).random((10, 2))
    assert np.abs(c(x) - x[:, 0]).max() < 1e-13


def test_project_sinsin_constant():
    c = l2_project(lambda x: np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1]), SQUARE, "element", 0, 0, order=24)
    assert abs(c.coeffs[0] - 4 / np.pi ** 2) < 1e-12
    assert abs(c.coeffs[0] - 0.4052847) < 1e-7


def _sin(x):
    return np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])


def _sin_grad(x):
    return np.pi * np.column_stack([np.cos(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1]),
                                    np.sin(np.pi * x[:, 0]) * np.cos(np.pi * x[:, 1])])


def _local_errors(l, n, elliptic):
    m = generate_mesh("triangular", n)
    e0 = e1 = 0.0
    for T in range(m.n_elements):
        c = elliptic_project(_sin, _sin_grad, m, T, l) if elliptic else l2_project(_sin, m, "element", T, l)
        q = quadrature(m, "element", T, 2 * l + 8)
        e0 += q.weights @ (c(q.points) - _sin(q.points)) ** 2
        g = np.einsum("qid,i->qd", c.basis.grad(q.points), c.coeffs)
        e1 += q.weights @ ((g - _sin_grad(q.points)) ** 2).sum(1)
    return np.sqrt(e0), np.sqrt(e1), m.h


@pytest.mark.parametrize("l", [0, 1, 2])
def test_l2_projection_order(l):
    a, _, h1 = _local_errors(l, 4, False)
    b, _, h2 = _local_errors(l, 8, False)
    assert abs(np.log(a / b) / np.log(h1 / h2) - (l + 1)) < 0.2


@pytest.mark.parametrize("l", [1, 2, 3])
def test_elliptic_projection_order(l):
    _, a, h1 = _local_errors(l, 4, True)
    _, b, h2 = _local_errors(l, 8, True)
    assert abs(np.log(a / b) / np.log(h1 / h2) - l) < 0.2


def test_elliptic_degree0_is_mean():
    m = generate_mesh("voronoi_polygonal", 3)
    for T in range(3):
        a = elliptic_project(_sin, _sin_grad, m, T, 0).coeffs
        b = l2_project(_sin, m, "element", T, 0).coeffs
        assert abs(a[0] - b[0]) < 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 4), st.integers(0, 2**31 - 1))
def test_projectors_fix_polynomials(l, seed):
    m = generate_mesh("voronoi_polygonal", 3)
    rng = np.random.default_rng(seed)
    T = int(rng.integers(m.n_elements))
    c = rng.standard_normal(dim_poly(l))
    ctr, h = m.element_centroid[T], m.element_diameter[T]

    def f(x):
        return eval_monomials(x, ctr, h, l) @ c

    def g(x):
        return np.einsum("qid,i->qd", eval_monomials(x, ctr, h, l, derivative=1), c)

    assert np.abs(l2_project(f, m, "element", T, l).coeffs - c).max() < 1e-9
    assert np.abs(elliptic_project(f, g, m, T, l).coeffs - c).max() < 1e-9


def test_trace_probe_constant():
    m = generate_mesh("voronoi_polygonal", 3)
    T = 0
    hT, A = m.element_diameter[T], m.element_area[T]
    expect = max(np.sqrt(hT * m.face_area[F] / A) for F in m.element_faces[T])
    assert abs(trace_constant_probe(m, T, 0) - expect) < 1e-10


def test_trace_probe_scale_invariant_and_monotone():
    a = trace_constant_probe(generate_mesh("triangular", 2), 0, 2)
    b = trace_constant_probe(generate_mesh("triangular", 8), 0, 2)
    assert abs(a - b) < 1e-8
    m = generate_mesh("cartesian", 2)
    vals = [trace_constant_probe(m, 0, l) for l in range(5)]
    assert np.all(np.diff(vals) > 0)


def test_laplacian_matrix():
    # Delta of scaled monomials, checked against finite differences
    deg = 3
    L = laplacian_matrix(deg)
    x = np.array([[0.3, 0.2]])
    ctr, h, d = np.array([0.1, -0.2]), 0.7, 1e-4
    c = np.random.default_rng(1).standard_normal(dim_poly(deg))
    f = lambda p: eval_monomials(p, ctr, h, deg) @ c
    fd = sum(f(x + s * d * e) for e in (np.array([[1, 0]]), np.array([[0, 1]])) for s in (1, -1)) - 4 * f(x)
    fd = fd / d ** 2
    got = eval_monomials(x, ctr, h, deg) @ (L @ c) / h ** 2
    assert abs(got[0] - fd[0]) < 1e-5 * max(1, abs(fd[0]))


def test_exponent_ordering():
    ex = monomial_exponents(2)
    assert ex.tolist() == [[0, 0], [1, 0], [0, 1], [2, 0], [1, 1], [0, 2]]
