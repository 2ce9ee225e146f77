import numpy as np
import pytest

from hho.estimators import (Problem, adapt_loop, dorfler_mark, friedrichs_constant, local_estimators,
                            lshape_problem, ndof_slope, node_average, poincare_constant, uniform_loop)
from hho.hho_core import BrokenPolynomial, HHOSpace, global_reconstruct, jump_seminorm, reduce_global
from hho.mesh import generate_mesh
from hho.poisson import broken_errors, sinsin, solve_poisson
from hho.polycalc import UnsupportedOrderError, eval_monomials

U, GRAD, F = sinsin()


def _bubble(x):
    return x[:, 0] * (1 - x[:, 0]) * x[:, 1] * (1 - x[:, 1])


@pytest.mark.parametrize("kind", ["triangular", "cartesian", "voronoi_polygonal"])
def test_average_keeps_continuous_fields(kind):
    m = generate_mesh(kind, 3)
    w = global_reconstruct(reduce_global(HHOSpace(m, 3), _bubble))
    avg = node_average(w, 4)
    assert avg.max_interface_mismatch() < 1e-12
    sub = avg.submesh
    c = sub.vertices[sub.triangles].mean(1)
    assert np.abs(avg.evaluate(c[:, None])[:, 0] - _bubble(c)).max() < 1e-12


def test_average_of_two_constants():
    m = generate_mesh("triangular", 1)
    a, b = 2.0, 5.0
    w = BrokenPolynomial(m, 0, np.array([[a], [b]]))
    avg = node_average(w, 2, boundary=lambda x: np.full(len(x), -1.0))
    diag = m.faces[int(m.interface_faces[0])]
    mid = m.vertices[diag].mean(0)
    i = int(np.argmin(np.linalg.norm(avg.nodes - mid, axis=1)))
    assert abs(avg.node_values[i] - 0.5 * (a + b)) < 1e-14
    # nodes on the domain boundary take the boundary value instead
    assert np.all(avg.node_values[np.linalg.norm(avg.nodes - mid, axis=1) > 1e-12] == -1.0)
    assert avg.max_interface_mismatch() < 1e-13


def test_average_needs_positive_degree():
    m = generate_mesh("triangular", 1)
    with pytest.raises(UnsupportedOrderError):
        node_average(BrokenPolynomial(m, 0, np.zeros((2, 1))), 0)


def test_averaging_bound_stable(rng):
    ratios = []
    for n in (4, 8, 16):
        m = generate_mesh("voronoi_polygonal", n)
        sp = HHOSpace(m, 1)
        w = global_reconstruct(reduce_global(sp, lambda x: np.sin(3 * x[:, 0]) * np.cos(2 * x[:, 1]) + x[:, 0] ** 3))
        w.coeffs += 0.01 * rng.standard_normal(w.coeffs.shape)
        avg = node_average(w, 2, boundary=lambda x: np.sin(3 * x[:, 0]) * np.cos(2 * x[:, 1]) + x[:, 0] ** 3)
        sub = avg.submesh
        from hho.polycalc import triangle_quadrature
        xq, wq = triangle_quadrature(sub.vertices[sub.triangles], 6)
        par = sub.parent
        wv = np.einsum("tqi,ti->tq", eval_monomials(xq, m.element_centroid[par][:, None],
                                                    m.element_diameter[par][:, None], 2), w.coeffs[par])
        diff = (wq * (wv - avg.evaluate(xq)) ** 2).sum()
        ratios.append(diff / jump_seminorm(w, 2) ** 2 / m.h ** 2)
    assert max(ratios) / min(ratios) < 4


def test_estimators_vanish_for_exact_polynomial_solution():
    m = generate_mesh("voronoi_polygonal", 3)
    f = lambda x: 2 * (x[:, 1] * (1 - x[:, 1]) + x[:, 0] * (1 - x[:, 0]))
    uh = solve_poisson(m, 3, f)
    est = local_estimators(uh, f)
    for eta in (est.eta_nc, est.eta_res, est.eta_sta):
        assert np.abs(eta).max() < 1e-10


def test_estimators_vanish_harmonic_quadratic():
    m = generate_mesh("triangular", 3)
    g = lambda x: x[:, 0] ** 2 - x[:, 1] ** 2
    f = lambda x: 0 * x[:, 0]
    uh = solve_poisson(m, 1, f, g=g)
    est = local_estimators(uh, f, boundary=g)
    assert est.bound < 1e-10


def test_residual_estimator_oscillation_free():
    # f + Delta p_T u constant on every element => eta_res = 0
    m = generate_mesh("cartesian", 3)
    f = lambda x: 1.0 + 0 * x[:, 0]
    uh = solve_poisson(m, 0, f)  # Delta of a P^1 reconstruction is zero, f is constant
    assert np.abs(local_estimators(uh, f).eta_res).max() < 1e-13


def test_constants():
    m = generate_mesh("cartesian", 2)
    assert poincare_constant(m, 0) == 1 / np.pi
    cp = 1 / np.pi
    hT, perim, area = m.element_diameter[0], 2.0, 0.25
    assert abs(friedrichs_constant(m, 0) - cp * hT * perim / area * (1 + cp)) < 1e-13


@pytest.mark.parametrize("kind", ["triangular", "cartesian", "voronoi_polygonal"])
@pytest.mark.parametrize("k", [0, 1, 2])
def test_upper_bound_and_effectivity(kind, k):
    eff = []
    for n in (4, 8, 16, 32):
        m = generate_mesh(kind, n)
        uh = solve_poisson(m, k, F)
        est = local_estimators(uh, F)
        _, err = broken_errors(global_reconstruct(uh), U, GRAD, 2 * k + 6)
        est.error = err
        assert est.bound >= err
        eff.append(est.effectivity)
    eff = np.array(eff)
    assert np.all((eff >= 1) & (eff <= 20))
    assert np.all((eff[1:] / eff[:-1] >= 0.5) & (eff[1:] / eff[:-1] <= 2))


def test_dorfler():
    eta2 = np.array([1.0, 4.0, 2.0, 3.0])
    assert dorfler_mark(eta2, 0.5).tolist() == [1, 3]
    assert dorfler_mark(eta2, 1.0).tolist() == [0, 1, 2, 3]
    with pytest.raises(ValueError):
        dorfler_mark(eta2, 0.0)


def test_smooth_problem_adaptive_matches_uniform():
    P = Problem("smooth", generate_mesh("triangular", 2), F, exact=U, grad=GRAD)
    ad = adapt_loop(P, 1, 0.5, max_iter=30, max_ndof=3000)
    un = uniform_loop(P, 1, 7)
    assert abs(ndof_slope(ad) - ndof_slope(un)) < 0.25
    assert abs(ndof_slope(un) + 1.0) < 0.25


@pytest.mark.parametrize("k", [0, 1])
def test_lshape_adaptivity(k):
    ad = adapt_loop(lshape_problem(1), k, 0.5, max_iter=40, max_ndof=2500)
    un = uniform_loop(lshape_problem(1), k, 5)
    s_ad, s_un = ndof_slope(ad), ndof_slope(un, 3)
    assert abs(s_ad + (k + 1) / 2) <= 0.3
    assert s_un > -(k + 1) / 2 + 0.1
    assert all(s.estimator.bound >= s.error for s in ad)
