import numpy as np
import pytest

from hho.mesh import (MeshParseError, MeshTopologyError, UnsupportedGeometryError, PolytopalMesh,
                      generate_mesh, l_shaped_mesh, read_mesh, refine, regularity_report,
                      simplicial_submesh, write_mesh)


def test_triangular_one_cell():
    m = generate_mesh("triangular", 1)
    assert (m.n_elements, m.n_faces, len(m.interface_faces)) == (2, 5, 1)


def test_cartesian_counts():
    m = generate_mesh("cartesian", 2)
    assert (m.n_elements, m.n_faces, len(m.interface_faces)) == (4, 12, 4)


@pytest.mark.parametrize("n", [2, 4, 8])
def test_voronoi_partition_of_unity(n):
    m = generate_mesh("voronoi_polygonal", n)
    assert abs(m.element_area.sum() - 1.0) < 1e-12


def test_voronoi_seed_reproducible():
    a = generate_mesh("voronoi_polygonal", 6, seed=7)
    b = generate_mesh("voronoi_polygonal", 6, seed=7)
    c = generate_mesh("voronoi_polygonal", 6, seed=8)
    assert np.array_equal(a.vertices, b.vertices)
    assert a.vertices.shape != c.vertices.shape or not np.array_equal(a.vertices, c.vertices)


@pytest.mark.parametrize("kind", ["triangular", "cartesian", "voronoi_polygonal"])
def test_mesh_invariants(kind):
    m = generate_mesh(kind, 5, domain=((0.0, 2.0), (-1.0, 0.5)))
    assert abs(m.element_area.sum() - 3.0) < 1e-12
    for T in range(m.n_elements):
        nrm = m.outward_normals(T)
        # closed polygon: sum of |F| n_TF vanishes
        s = (m.face_area[m.element_faces[T]][:, None] * nrm).sum(0)
        assert np.abs(s).max() < 1e-12
    # every interface face sees opposite outward normals from its two elements
    for F in m.interface_faces:
        T1, T2 = m.face_elements[F]
        n1 = m.outward_normals(T1)[m.local_face_index(T1, F)]
        n2 = m.outward_normals(T2)[m.local_face_index(T2, F)]
        assert np.allclose(n1, -n2)


def test_invalid_arguments():
    with pytest.raises(ValueError):
        generate_mesh("triangular", 0)
    with pytest.raises(ValueError):
        generate_mesh("hexagonal", 2)


def test_read_two_triangles(tmp_path):
    p = tmp_path / "sq.txt"
    p.write_text("hho-mesh 2 4 5 2\n0 0\n1 0\n1 1\n0 1\n"
                 "0 1\n1 2\n2 0\n2 3\n3 0\n3 0 1 2\n3 2 3 4\n")
    m = read_mesh(p)
    ref = generate_mesh("triangular", 1)
    assert (m.n_elements, m.n_faces, len(m.interface_faces)) == (2, 5, 1)
    assert np.allclose(np.sort(m.element_area), np.sort(ref.element_area))
    assert np.allclose(sorted(map(tuple, m.vertices)), sorted(map(tuple, ref.vertices)))


def test_read_face_with_three_elements(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("hho-mesh 2 4 5 3\n0 0\n1 0\n1 1\n0 1\n"
                 "0 1\n1 2\n2 0\n2 3\n3 0\n3 0 1 2\n3 2 3 4\n3 2 3 4\n")
    with pytest.raises(MeshTopologyError):
        read_mesh(p)


def test_read_parse_error_reports_line(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("hho-mesh 2 3 3 1\n0 0\n1 x\n0 1\n0 1\n1 2\n2 0\n3 0 1 2\n")
    with pytest.raises(MeshParseError) as exc:
        read_mesh(p)
    assert exc.value.line == 3


@pytest.mark.parametrize("kind", ["triangular", "cartesian", "voronoi_polygonal"])
def test_write_read_roundtrip(kind, tmp_path):
    m = generate_mesh(kind, 5)
    write_mesh(m, tmp_path / "m.txt")
    r = read_mesh(tmp_path / "m.txt")
    assert np.array_equal(m.vertices, r.vertices)
    assert np.array_equal(m.faces, r.faces)
    assert all(np.array_equal(a, b) for a, b in zip(m.element_faces, r.element_faces))


def test_submesh_shapes():
    tri = simplicial_submesh(generate_mesh("triangular", 1))
    assert tri.n_triangles == 2
    sq = simplicial_submesh(generate_mesh("cartesian", 1))
    assert sq.n_triangles == 4
    assert np.allclose(sq.area, 0.25)


def test_submesh_hexagon():
    t = np.linspace(0, 2 * np.pi, 7)[:-1]
    v = np.column_stack([np.cos(t), np.sin(t)])
    m = PolytopalMesh.from_polygons(v, [list(range(6))])
    s = simplicial_submesh(m)
    assert s.n_triangles == 6
    assert abs(s.area.sum() - m.element_area[0]) < 1e-12


def test_submesh_areas_match_parents(meshes):
    for m in meshes.values():
        s = simplicial_submesh(m)
        acc = np.bincount(s.parent, weights=s.area, minlength=m.n_elements)
        assert np.allclose(acc, m.element_area, rtol=0, atol=1e-12)


def test_regularity_ratios():
    for kind in ("triangular", "cartesian"):
        r4 = regularity_report(generate_mesh(kind, 4))
        r8 = regularity_report(generate_mesh(kind, 8))
        assert abs(r4.min_face_element_ratio - 1 / np.sqrt(2)) < 1e-12
        assert abs(r4.min_face_element_ratio - r8.min_face_element_ratio) < 1e-12
        assert abs(r4.min_inradius_ratio - r8.min_inradius_ratio) < 1e-12


def test_refine_empty_marking():
    m = generate_mesh("triangular", 2)
    r, parent = refine(m, [])
    assert r.n_elements == m.n_elements
    assert np.allclose(r.vertices, m.vertices)


def test_refine_all_marked():
    m = generate_mesh("triangular", 1)
    r, parent = refine(m, [0, 1])
    assert r.n_elements >= 4
    assert abs(r.element_area.sum() - 1.0) < 1e-14
    r.check()
    assert np.allclose(np.bincount(parent, weights=r.element_area), m.element_area)


def test_refine_halves_h():
    m = generate_mesh("triangular", 2)
    hs = [m.h]
    for _ in range(4):
        m, _ = refine(m, np.arange(m.n_elements))
        hs.append(m.h)
    ratio = np.array(hs[2::2]) / np.array(hs[:-2:2])
    assert np.all((ratio > 0.4) & (ratio < 0.6))
    # shape regularity does not degrade under bisection
    assert regularity_report(m).min_inradius_ratio > 0.5 * regularity_report(generate_mesh("triangular", 2)).min_inradius_ratio


def test_refine_conforming_local():
    m = generate_mesh("triangular", 4)
    r, _ = refine(m, [0])
    r.check()
    # no hanging nodes: every interior face is shared by two elements
    assert np.all((r.face_elements[:, 1] >= 0) | r.boundary_face)
    assert r.n_elements > m.n_elements


def test_refine_rejects_polygons():
    with pytest.raises(UnsupportedGeometryError):
        refine(generate_mesh("cartesian", 2), [0])


def test_l_shape_area():
    m = l_shaped_mesh(2)
    assert abs(m.element_area.sum() - 3.0) < 1e-12
    assert all(len(fl) == 3 for fl in m.element_faces)
