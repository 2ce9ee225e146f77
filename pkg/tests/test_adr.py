import numpy as np
import pytest
import scipy.sparse.linalg as spla

from hho.adr import (AdrConfigError, AdrData, AdrDiscretization, _qf, advective_reconstruction, diffusive_nitsche_form,
                     norm_matrices, peclet_and_norms, rotating_benchmark, sharp_error)
from hho.hho_core import HHOSpace, reduce_local
from hho.mesh import generate_mesh
from hho.poisson import eoc_fit, element_loads

ROT = lambda x: np.column_stack([0.5 - x[:, 1], x[:, 0] - 0.5])


def test_zeta_validation():
    with pytest.raises(AdrConfigError, match="zeta must be >= 1"):
        AdrData(zeta=0.5)
    with pytest.raises(AdrConfigError):
        AdrData(kappa=-1.0)


def test_diffusive_form_zero_kappa():
    A = diffusive_nitsche_form(generate_mesh("triangular", 3), 1, 0.0)
    assert abs(A).max() == 0


def test_diffusive_form_interior_vectors(rng):
    m = generate_mesh("voronoi_polygonal", 3)
    sp = HHOSpace(m, 1)
    kap = rng.uniform(0.5, 2.0, m.n_elements)
    A = diffusive_nitsche_form(m, 1, kap, zeta=2.0)
    v = rng.standard_normal(sp.ndofs)
    v[sp.boundary_face_dofs] = 0.0
    ref = sum(kap[g.elements] @ np.einsum("ei,eij,ej->e", g.gather(v), g.local_form(), g.gather(v)) for g in sp.groups)
    assert abs(v @ A @ v - ref) < 1e-11 * abs(ref)


@pytest.mark.parametrize("kind", ["triangular", "voronoi_polygonal"])
def test_diffusive_coercivity(kind, rng):
    m = generate_mesh(kind, 4)
    data, _, _ = rotating_benchmark(1.0)
    data.kappa = rng.uniform(0.1, 3.0, m.n_elements)
    d = AdrDiscretization(m, 1, data)
    K, _, _ = norm_matrices(d)
    A = d.global_matrix("diffusive")
    q = min(v @ A @ v / _qf(K, d.space, v) for v in rng.standard_normal((100, d.space.ndofs)))
    assert q >= 1 - 1e-10


def test_advective_reconstruction_identities(meshes, rng):
    m = meshes["voronoi_polygonal"]
    sp = HHOSpace(m, 2)
    for T in range(0, m.n_elements, 4):
        G = advective_reconstruction(m, T, 2, ROT).matrix
        c = reduce_local(sp, T, lambda x: 1.0 + 0 * x[:, 0])
        assert np.abs(G @ c).max() < 1e-12 * np.abs(G).max()
        Gx = advective_reconstruction(m, T, 2, lambda x: np.column_stack([np.ones(len(x)), np.zeros(len(x))])).matrix
        out = Gx @ reduce_local(sp, T, lambda x: x[:, 0])
        assert abs(out[0] - 1) < 1e-12 and np.abs(out[1:]).max() < 1e-12
        G0 = advective_reconstruction(m, T, 2, lambda x: np.zeros_like(x)).matrix
        assert np.all(G0 == 0)


def test_pure_reaction_is_mass(rng):
    m = generate_mesh("cartesian", 3)
    d = AdrDiscretization(m, 1, AdrData(kappa=0.0, mu=1.0))
    A = d.global_matrix("advective")
    sp = d.space
    v = rng.standard_normal(sp.ndofs)
    ref = sum(np.einsum("ei,eij,ej->", g.gather(v)[:, :g.nbk], g.Mk, g.gather(v)[:, :g.nbk]) for g in sp.groups)
    assert abs(v @ A @ v - ref) < 1e-12 * ref


@pytest.mark.parametrize("kind", ["triangular", "cartesian", "voronoi_polygonal"])
@pytest.mark.parametrize("k", [0, 1, 2])
def test_reformulation_and_positivity(kind, k, rng):
    m = generate_mesh(kind, 3)
    data, _, _ = rotating_benchmark(0.0)
    d = AdrDiscretization(m, k, data)
    A = d.global_matrix("advective")
    B = d.reformulated_advective_matrix()
    V = rng.standard_normal((20, d.space.ndofs))
    for u in V:
        for v in V[:3]:
            assert abs(v @ A @ u - v @ B @ u) <= 1e-11 * max(1, abs(v @ A @ u))
    S = 0.5 * (A + A.T)
    assert all(v @ S @ v > 0 for v in rng.standard_normal((100, d.space.ndofs)))


@pytest.mark.parametrize("kind", ["triangular", "voronoi_polygonal"])
@pytest.mark.parametrize("kappa", [1.0, 1e-3, 0.0])
def test_coercivity_rayleigh(kind, kappa, rng):
    m = generate_mesh(kind, 4)
    data, _, _ = rotating_benchmark(kappa)
    d = AdrDiscretization(m, 1, data)
    K, Bm, _ = norm_matrices(d)
    Aa, Af = d.global_matrix("advective"), d.global_matrix("full")
    c = d.coercivity_constant()
    for v in rng.standard_normal((100, d.space.ndofs)):
        assert v @ Aa @ v >= (c - 1e-10) * _qf(Bm, d.space, v)
        assert v @ Af @ v >= (c - 1e-10) * (_qf(K, d.space, v) + _qf(Bm, d.space, v))


def test_vanishing_reaction_matches_weak_poisson():
    m = generate_mesh("voronoi_polygonal", 4)
    f = lambda x: np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])
    d = AdrDiscretization(m, 1, AdrData(kappa=1.0, mu=1e-8, f=f))
    u = d.solve()
    # reference: diffusive Nitsche form alone, solved monolithically
    A = diffusive_nitsche_form(m, 1, 1.0)
    sp = d.space
    b = np.zeros(sp.ndofs)
    for g, l in zip(sp.groups, element_loads(sp, f, d.order)):
        np.add.at(b, g.dofs[:, :g.nbk].ravel(), l.ravel())
    ref = spla.spsolve(A.tocsc(), b)
    assert np.abs(u.values - ref).max() <= 1e-6 * np.abs(ref).max()


def test_condensed_equals_monolithic():
    data, _, _ = rotating_benchmark(1e-3)
    d = AdrDiscretization(generate_mesh("voronoi_polygonal", 3), 2, data)
    a, b = d.solve(), d.solve(condensed=False)
    assert np.abs(a.values - b.values).max() < 1e-10 * np.abs(b.values).max()


def test_peclet_and_norms():
    m = generate_mesh("triangular", 4)
    d1 = AdrDiscretization(m, 1, rotating_benchmark(1.0)[0])
    n1 = peclet_and_norms(d1, d1.space.zeros(dirichlet=False))
    assert n1.flat == 0 and n1.sharp == 0 and n1.kappa == 0
    # |beta| <= 1 on the unit square, kappa = 1: Pe_T <= h_T
    assert np.all(n1.peclet <= m.element_diameter + 1e-14)
    d0 = AdrDiscretization(m, 1, rotating_benchmark(0.0)[0])
    pe0 = peclet_and_norms(d0, d0.space.zeros(dirichlet=False)).peclet
    assert np.all(np.isinf(pe0))


@pytest.mark.parametrize("kappa,k,lo,hi", [(1.0, 1, 1.75, 2.25), (0.0, 1, 1.2, 1.8), (1e-3, 0, 0.2, 1.25)])
def test_sharp_norm_rates(kappa, k, lo, hi):
    data, u, _ = rotating_benchmark(kappa)
    rows = []
    for n in (8, 16, 32):
        m = generate_mesh("triangular", n)
        d = AdrDiscretization(m, k, data)
        rows.append((m.h, sharp_error(d, d.solve(), u)))
    h, e = zip(*rows)
    assert lo <= eoc_fit(h, e) <= hi
