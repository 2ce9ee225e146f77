"""Planar polytopal meshes: data structure, generators, native text I/O,
centroid-fan simplicial submesh, regularity diagnostics and newest-vertex
bisection for triangular meshes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.spatial import Voronoi


class MeshError(ValueError):
    """Base class for invalid meshes."""


class MeshParseError(MeshError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class MeshTopologyError(MeshError):
    def __init__(self, message: str, face: int | None = None):
        prefix = f"face {face}: " if face is not None else ""
        super().__init__(prefix + message)
        self.face = face


class UnsupportedGeometryError(MeshError):
    def __init__(self, message: str, element: int | None = None):
        prefix = f"element {element}: " if element is not None else ""
        super().__init__(prefix + message)
        self.element = element


def _polygon_area_centroid(xy: np.ndarray) -> tuple[float, np.ndarray]:
    x, y = xy[:, 0], xy[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * cross.sum()
    cx = ((x + xn) * cross).sum() / (6.0 * area)
    cy = ((y + yn) * cross).sum() / (6.0 * area)
    return area, np.array([cx, cy])


def _diameter(xy: np.ndarray) -> float:
    d = xy[:, None, :] - xy[None, :, :]
    return float(np.sqrt((d ** 2).sum(-1)).max())


class PolytopalMesh:
    """Immutable 2D polytopal mesh.

    Elements are stored as counterclockwise lists of face indices; faces are
    straight segments given by a vertex pair. Faces carry their own
    orientation (tangent from vertex 0 to vertex 1) so face unknowns are
    single-valued; ``normal_sign[T][i]`` turns the face normal into the
    outward normal of ``T``.
    """

    def __init__(self, vertices, faces, element_faces: Sequence[Sequence[int]],
                 newest_vertex=None, validate: bool = True):
        self.vertices = np.asarray(vertices, dtype=float).reshape(-1, 2)
        self.faces = np.asarray(faces, dtype=np.int64).reshape(-1, 2)
        self.element_faces = [np.asarray(f, dtype=np.int64) for f in element_faces]
        nf = len(self.faces)
        for T, fl in enumerate(self.element_faces):
            if len(fl) < 3:
                raise MeshTopologyError(f"element {T} has fewer than 3 faces")
            if fl.min() < 0 or fl.max() >= nf:
                raise MeshTopologyError(f"element {T} references an unknown face")

        # face -> elements
        adj = [[] for _ in range(nf)]
        for T, fl in enumerate(self.element_faces):
            for F in fl:
                adj[F].append(T)
        for F, a in enumerate(adj):
            if len(a) == 0:
                raise MeshTopologyError("face not used by any element", face=F)
            if len(a) > 2:
                raise MeshTopologyError(f"face shared by {len(a)} elements", face=F)
        self.face_elements = np.full((nf, 2), -1, dtype=np.int64)
        for F, a in enumerate(adj):
            self.face_elements[F, :len(a)] = a
        self.boundary_face = self.face_elements[:, 1] < 0

        v0 = self.vertices[self.faces[:, 0]]
        v1 = self.vertices[self.faces[:, 1]]
        edge = v1 - v0
        self.face_area = np.sqrt((edge ** 2).sum(1))
        if np.any(self.face_area <= 0):
            F = int(np.argmin(self.face_area))
            raise MeshTopologyError("zero-length face", face=F)
        self.face_diameter = self.face_area.copy()
        self.face_midpoint = 0.5 * (v0 + v1)
        self.face_tangent = edge / self.face_area[:, None]
        self.face_normal = np.column_stack([self.face_tangent[:, 1], -self.face_tangent[:, 0]])

        self.element_vertices = []
        self.normal_sign = []
        for T, fl in enumerate(self.element_faces):
            loop, signs = self._vertex_loop(T, fl)
            self.element_vertices.append(loop)
            self.normal_sign.append(signs)

        ne = len(self.element_faces)
        self.element_area = np.empty(ne)
        self.element_centroid = np.empty((ne, 2))
        self.element_diameter = np.empty(ne)
        for T, loop in enumerate(self.element_vertices):
            xy = self.vertices[loop]
            a, c = _polygon_area_centroid(xy)
            if a <= 0:
                raise MeshTopologyError(f"element {T} has non-positive area {a:g}")
            self.element_area[T] = a
            self.element_centroid[T] = c
            self.element_diameter[T] = _diameter(xy)
        self.h = float(self.element_diameter.max())

        if newest_vertex is None and all(len(fl) == 3 for fl in self.element_faces):
            newest_vertex = self._longest_edge_labels()
        self.newest_vertex = None if newest_vertex is None else np.asarray(newest_vertex, dtype=np.int64)

        if validate:
            self.check()

    def _vertex_loop(self, T, fl):
        # faces are listed counterclockwise; consecutive faces share a vertex
        m = len(fl)
        a, b = self.faces[fl[0]]
        na, nb = self.faces[fl[1]]
        start = b if a in (na, nb) else a
        loop = np.empty(m, dtype=np.int64)
        signs = np.empty(m)
        cur = start
        for i, F in enumerate(fl):
            f0, f1 = self.faces[F]
            if f0 == cur:
                signs[i], nxt = 1.0, f1
            elif f1 == cur:
                signs[i], nxt = -1.0, f0
            else:
                raise MeshTopologyError(f"faces of element {T} do not form a closed chain", face=int(F))
            loop[i] = cur
            cur = nxt
        if cur != start:
            raise MeshTopologyError(f"boundary of element {T} is not closed")
        return loop, signs

    def _longest_edge_labels(self):
        newest = np.empty(self.n_elements, dtype=np.int64)
        for T, (fl, loop) in enumerate(zip(self.element_faces, self.element_vertices)):
            i = int(np.argmax(self.face_area[fl]))
            # face i joins loop[i] and loop[i+1]; the opposite vertex is the newest
            newest[T] = loop[(i + 2) % 3]
        return newest

    @property
    def n_elements(self) -> int:
        return len(self.element_faces)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def interface_faces(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_face)

    @property
    def boundary_faces(self) -> np.ndarray:
        return np.flatnonzero(self.boundary_face)

    def outward_normals(self, T: int) -> np.ndarray:
        return self.face_normal[self.element_faces[T]] * self.normal_sign[T][:, None]

    def element_polygon(self, T: int) -> np.ndarray:
        return self.vertices[self.element_vertices[T]]

    def is_convex(self, T: int, tol: float = 1e-12) -> bool:
        xy = self.element_polygon(T)
        d1 = np.roll(xy, -1, axis=0) - xy
        d2 = np.roll(d1, -1, axis=0)
        cross = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        return bool(np.all(cross >= -tol * self.element_diameter[T] ** 2))

    @property
    def domain_area(self) -> float:
        return float(self.element_area.sum())

    def check(self, tol: float = 1e-12):
        """Validate normal consistency and closedness of every element."""
        for T in range(self.n_elements):
            s = (self.outward_normals(T) * self.face_area[self.element_faces[T]][:, None]).sum(0)
            if np.abs(s).max() > tol * max(1.0, self.element_diameter[T]):
                raise MeshTopologyError(f"element {T} is not a closed polygon")
        for F in self.interface_faces:
            T1, T2 = self.face_elements[F]
            s1 = self.normal_sign[T1][self.element_faces[T1] == F][0]
            s2 = self.normal_sign[T2][self.element_faces[T2] == F][0]
            if s1 != -s2:
                raise MeshTopologyError("inconsistent orientation of adjacent elements", face=int(F))

    def local_face_index(self, T: int, F: int) -> int:
        return int(np.flatnonzero(self.element_faces[T] == F)[0])

    def face_count_groups(self) -> dict[int, np.ndarray]:
        counts = np.array([len(fl) for fl in self.element_faces])
        return {int(m): np.flatnonzero(counts == m) for m in np.unique(counts)}

    def __repr__(self):
        return (f"PolytopalMesh(n_elements={self.n_elements}, n_faces={self.n_faces}, "
                f"n_vertices={self.n_vertices}, h={self.h:.4g})")

    @classmethod
    def from_polygons(cls, vertices, polygons, newest_vertex=None, validate=True):
        """Build a mesh from counterclockwise vertex loops."""
        edges = {}
        faces = []
        element_faces = []
        for loop in polygons:
            fl = []
            m = len(loop)
            for i in range(m):
                a, b = int(loop[i]), int(loop[(i + 1) % m])
                key = (a, b) if a < b else (b, a)
                F = edges.get(key)
                if F is None:
                    F = len(faces)
                    edges[key] = F
                    faces.append((a, b))
                fl.append(F)
            element_faces.append(fl)
        return cls(vertices, faces, element_faces, newest_vertex=newest_vertex, validate=validate)


# --------------------------------------------------------------------------
# generators

def _check_domain(domain):
    (x0, x1), (y0, y1) = domain
    if not (x1 > x0 and y1 > y0):
        raise ValueError(f"invalid domain {domain}")
    return float(x0), float(x1), float(y0), float(y1)


def _lattice(n, x0, x1, y0, y1):
    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    return np.column_stack([X.ravel(), Y.ravel()])


def generate_mesh(kind: str, n: int, domain=((0.0, 1.0), (0.0, 1.0)),
                  seed: int = 1234, jitter: float = 0.3) -> PolytopalMesh:
    """Generate one of the built-in mesh families on an axis-aligned rectangle.

    ``triangular`` gives ``2 n**2`` right triangles (one diagonal direction),
    ``cartesian`` ``n**2`` rectangles, and ``voronoi_polygonal`` the Voronoi
    diagram of a jittered ``n x n`` lattice clipped to the rectangle.
    """
    if int(n) != n or n < 1:
        raise ValueError(f"subdivision count must be a positive integer, got {n!r}")
    n = int(n)
    x0, x1, y0, y1 = _check_domain(domain)
    if kind in ("triangular", "tri"):
        pts = _lattice(n, x0, x1, y0, y1)
        polys = []
        for j in range(n):
            for i in range(n):
                a = j * (n + 1) + i
                b, c, d = a + 1, a + n + 2, a + n + 1
                polys.append((a, b, c))
                polys.append((a, c, d))
        return PolytopalMesh.from_polygons(pts, polys)
    if kind in ("cartesian", "cart"):
        pts = _lattice(n, x0, x1, y0, y1)
        polys = []
        for j in range(n):
            for i in range(n):
                a = j * (n + 1) + i
                polys.append((a, a + 1, a + n + 2, a + n + 1))
        return PolytopalMesh.from_polygons(pts, polys)
    if kind in ("voronoi_polygonal", "voro", "polygonal"):
        return _voronoi_mesh(n, x0, x1, y0, y1, seed, jitter)
    raise ValueError(f"unknown mesh kind {kind!r}")


def _voronoi_mesh(n, x0, x1, y0, y1, seed, jitter):
    rng = np.random.default_rng(seed)
    hx, hy = (x1 - x0) / n, (y1 - y0) / n
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    sites = np.column_stack([x0 + (i.ravel() + 0.5) * hx, y0 + (j.ravel() + 0.5) * hy])
    sites += rng.uniform(-jitter, jitter, sites.shape) * np.array([hx, hy])
    # mirror the sites across the four sides so that the original cells are
    # exactly the clipped ones
    mirrored = [sites,
                np.column_stack([2 * x0 - sites[:, 0], sites[:, 1]]),
                np.column_stack([2 * x1 - sites[:, 0], sites[:, 1]]),
                np.column_stack([sites[:, 0], 2 * y0 - sites[:, 1]]),
                np.column_stack([sites[:, 0], 2 * y1 - sites[:, 1]])]
    vor = Voronoi(np.vstack(mirrored))
    used = {}
    verts = []
    polys = []
    scale = max(x1 - x0, y1 - y0)
    for s in range(len(sites)):
        region = vor.regions[vor.point_region[s]]
        if -1 in region or len(region) == 0:
            raise MeshError("unbounded Voronoi cell after mirroring")
        loop = []
        for v in region:
            if v not in used:
                p = vor.vertices[v].copy()
                # snap to the box sides
                for c, (lo, hi) in enumerate(((x0, x1), (y0, y1))):
                    if abs(p[c] - lo) < 1e-10 * scale:
                        p[c] = lo
                    elif abs(p[c] - hi) < 1e-10 * scale:
                        p[c] = hi
                used[v] = len(verts)
                verts.append(p)
            loop.append(used[v])
        xy = np.array([verts[v] for v in loop])
        if _polygon_area_centroid(xy)[0] < 0:
            loop = loop[::-1]
        polys.append(loop)
    verts = np.array(verts)
    verts, polys = _collapse_short_edges(verts, polys, 0.2 * min(hx, hy), (x0, x1, y0, y1))
    return PolytopalMesh.from_polygons(verts, polys)


def _collapse_short_edges(verts, polys, tol, box):
    x0, x1, y0, y1 = box
    eps = 1e-12 * max(x1 - x0, y1 - y0)

    def sides(p):
        return {k for k, hit in enumerate((abs(p[0] - x0) < eps, abs(p[0] - x1) < eps,
                                          abs(p[1] - y0) < eps, abs(p[1] - y1) < eps)) if hit}

    parent = list(range(len(verts)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    verts = verts.copy()
    vertex_polys = [set() for _ in range(len(verts))]
    for ip, loop in enumerate(polys):
        for v in loop:
            vertex_polys[v].add(ip)

    def n_distinct(ip):
        return len({find(v) for v in polys[ip]})

    changed = True
    while changed:
        changed = False
        for loop in polys:
            m = len(loop)
            for i in range(m):
                a, b = find(loop[i]), find(loop[(i + 1) % m])
                if a == b or np.linalg.norm(verts[a] - verts[b]) >= tol:
                    continue
                if any(n_distinct(ip) <= 3 for ip in vertex_polys[a] & vertex_polys[b]):
                    continue
                sa, sb = sides(verts[a]), sides(verts[b])
                if len(sa) == 2 and len(sb) == 2:
                    continue
                if len(sa) == 2 or (sa and not sb):
                    keep, drop = a, b
                elif len(sb) == 2 or (sb and not sa):
                    keep, drop = b, a
                elif sa and sb:
                    if sa != sb:
                        continue
                    keep, drop = a, b
                    verts[keep] = 0.5 * (verts[a] + verts[b])
                else:
                    keep, drop = a, b
                    verts[keep] = 0.5 * (verts[a] + verts[b])
                parent[drop] = keep
                vertex_polys[keep] |= vertex_polys[drop]
                changed = True
    new_polys = []
    for loop in polys:
        out = []
        for v in loop:
            r = find(v)
            if not out or out[-1] != r:
                out.append(r)
        if len(out) > 1 and out[0] == out[-1]:
            out.pop()
        new_polys.append(out)
    keep_ids = sorted({v for loop in new_polys for v in loop})
    remap = {v: i for i, v in enumerate(keep_ids)}
    return verts[keep_ids], [[remap[v] for v in loop] for loop in new_polys]


def l_shaped_mesh(n: int) -> PolytopalMesh:
    """Triangulation of (-1,1)^2 minus [0,1]x[-1,0] with ``2n`` cells per side.

    Diagonals are oriented so that the re-entrant corner is a vertex of
    every adjacent triangle.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    N = 2 * n
    pts = _lattice(N, -1.0, 1.0, -1.0, 1.0)
    polys = []
    for j in range(N):
        for i in range(N):
            xc = -1.0 + (i + 0.5) * (2.0 / N)
            yc = -1.0 + (j + 0.5) * (2.0 / N)
            if xc > 0 and yc < 0:
                continue
            a = j * (N + 1) + i
            b, c, d = a + 1, a + N + 2, a + N + 1
            if (xc > 0) == (yc > 0):
                polys.append((a, b, c))
                polys.append((a, c, d))
            else:
                polys.append((a, b, d))
                polys.append((b, c, d))
    used = sorted({v for p in polys for v in p})
    remap = {v: i for i, v in enumerate(used)}
    return PolytopalMesh.from_polygons(pts[used], [[remap[v] for v in p] for p in polys])


# --------------------------------------------------------------------------
# native text format

def write_mesh(mesh: PolytopalMesh, path) -> None:
    lines = [f"hho-mesh 2 {mesh.n_vertices} {mesh.n_faces} {mesh.n_elements}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    lines += [f"{a} {b}" for a, b in mesh.faces]
    for fl in mesh.element_faces:
        lines.append(" ".join([str(len(fl))] + [str(int(F)) for F in fl]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path, format: str = "native_text") -> PolytopalMesh:
    if format != "native_text":
        raise ValueError(f"unsupported mesh format {format!r}")
    records = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            records.append((lineno, line.split()))
    if not records:
        raise MeshParseError("empty file", 1)
    lineno, head = records[0]
    if len(head) != 5 or head[0] != "hho-mesh" or head[1] != "2":
        raise MeshParseError("expected header 'hho-mesh 2 <nv> <nf> <ne>'", lineno)
    try:
        nv, nf, ne = (int(t) for t in head[2:])
    except ValueError:
        raise MeshParseError("non-integer counts in header", lineno) from None
    body = records[1:]
    if len(body) != nv + nf + ne:
        where = body[-1][0] if body else lineno
        raise MeshParseError(f"expected {nv + nf + ne} records after header, found {len(body)}", where)
    verts = np.empty((nv, 2))
    faces = np.empty((nf, 2), dtype=np.int64)
    elems = []
    for i, (ln, tok) in enumerate(body[:nv]):
        if len(tok) != 2:
            raise MeshParseError("vertex line needs 2 coordinates", ln)
        try:
            verts[i] = [float(t) for t in tok]
        except ValueError:
            raise MeshParseError("bad coordinate", ln) from None
    for i, (ln, tok) in enumerate(body[nv:nv + nf]):
        if len(tok) != 2:
            raise MeshParseError("face line needs 2 vertex indices", ln)
        try:
            faces[i] = [int(t) for t in tok]
        except ValueError:
            raise MeshParseError("bad vertex index", ln) from None
        if faces[i].min() < 0 or faces[i].max() >= nv:
            raise MeshParseError("vertex index out of range", ln)
    for ln, tok in body[nv + nf:]:
        try:
            vals = [int(t) for t in tok]
        except ValueError:
            raise MeshParseError("bad face index", ln) from None
        if vals[0] != len(vals) - 1:
            raise MeshParseError(f"element declares {vals[0]} faces but lists {len(vals) - 1}", ln)
        if min(vals[1:]) < 0 or max(vals[1:]) >= nf:
            raise MeshParseError("face index out of range", ln)
        elems.append(vals[1:])
    return PolytopalMesh(verts, faces, elems)


# --------------------------------------------------------------------------
# simplicial submesh and regularity

@dataclass
class SimplicialSubmesh:
    """Centroid-fan triangulation of a polytopal mesh.

    ``vertices`` holds the mesh vertices followed by the centroids of the
    non-triangular elements; ``triangles`` are counterclockwise. For a
    triangle, ``edge_face[t, i]`` is the parent face of the edge opposite
    local vertex ``i`` or -1 for edges interior to the parent.
    """
    vertices: np.ndarray
    triangles: np.ndarray
    parent: np.ndarray
    edge_face: np.ndarray
    inradius: np.ndarray = field(init=False)
    diameter: np.ndarray = field(init=False)
    area: np.ndarray = field(init=False)

    def __post_init__(self):
        p = self.vertices[self.triangles]
        e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
        lengths = np.sqrt((e ** 2).sum(-1))
        self.area = 0.5 * (e[:, 2, 0] * (-e[:, 1, 1]) - e[:, 2, 1] * (-e[:, 1, 0]))
        self.diameter = lengths.max(1)
        self.inradius = 2.0 * self.area / lengths.sum(1)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)


def simplicial_submesh(mesh: PolytopalMesh) -> SimplicialSubmesh:
    verts = [mesh.vertices]
    nv = mesh.n_vertices
    tris, parent, edge_face = [], [], []
    extra = []
    for T in range(mesh.n_elements):
        loop = mesh.element_vertices[T]
        fl = mesh.element_faces[T]
        if len(loop) == 3:
            tris.append(loop)
            parent.append(T)
            # edge opposite local vertex i is face (i+1)
            edge_face.append([fl[1], fl[2], fl[0]])
            continue
        c = mesh.element_centroid[T]
        xy = mesh.vertices[loop]
        d1 = xy - c
        d2 = np.roll(xy, -1, axis=0) - c
        cross = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        if np.any(cross <= 1e-14 * mesh.element_diameter[T] ** 2):
            raise UnsupportedGeometryError("not star-shaped with respect to its centroid", element=T)
        ic = nv + len(extra)
        extra.append(c)
        m = len(loop)
        for i in range(m):
            tris.append([ic, loop[i], loop[(i + 1) % m]])
            parent.append(T)
            edge_face.append([fl[i], -1, -1])
    if extra:
        verts.append(np.array(extra))
    return SimplicialSubmesh(np.vstack(verts), np.array(tris, dtype=np.int64),
                             np.array(parent, dtype=np.int64), np.array(edge_face, dtype=np.int64))


@dataclass
class RegularityReport:
    h: float
    min_inradius_ratio: float
    min_submesh_diameter_ratio: float
    max_face_count: int
    min_face_element_ratio: float

    @property
    def rho(self) -> float:
        """Largest regularity parameter compatible with the measured ratios."""
        return float(min(self.min_inradius_ratio, self.min_submesh_diameter_ratio,
                         np.sqrt(self.min_face_element_ratio)))


def regularity_report(mesh: PolytopalMesh, submesh: SimplicialSubmesh | None = None) -> RegularityReport:
    sub = simplicial_submesh(mesh) if submesh is None else submesh
    ratio_face = min(float((mesh.face_diameter[fl] / mesh.element_diameter[T]).min())
                     for T, fl in enumerate(mesh.element_faces))
    return RegularityReport(
        h=mesh.h,
        min_inradius_ratio=float((sub.inradius / sub.diameter).min()),
        min_submesh_diameter_ratio=float((sub.diameter / mesh.element_diameter[sub.parent]).min()),
        max_face_count=max(len(fl) for fl in mesh.element_faces),
        min_face_element_ratio=ratio_face,
    )


# --------------------------------------------------------------------------
# newest-vertex bisection

def refine(mesh: PolytopalMesh, marked) -> tuple[PolytopalMesh, np.ndarray]:
    """Newest-vertex bisection of the marked triangles with conforming closure.

    Returns the refined mesh and, for every new element, the index of its
    parent in ``mesh``.
    """
    if any(len(fl) != 3 for fl in mesh.element_faces) or mesh.newest_vertex is None:
        raise UnsupportedGeometryError("newest-vertex bisection needs a matching triangular mesh")
    marked = np.unique(np.asarray(list(marked), dtype=np.int64))
    if marked.size and (marked.min() < 0 or marked.max() >= mesh.n_elements):
        raise ValueError("marked element index out of range")

    # triangle as (a, b, c): refinement edge ab, newest vertex c
    tris = []
    for T, loop in enumerate(mesh.element_vertices):
        i = int(np.flatnonzero(loop == mesh.newest_vertex[T])[0])
        c = loop[i]
        a, b = loop[(i + 1) % 3], loop[(i + 2) % 3]
        tris.append((int(a), int(b), int(c)))

    def key(u, v):
        return (u, v) if u < v else (v, u)

    edge_marked = {key(*tris[T][:2]) for T in marked}
    # closure: a triangle with any marked edge must also bisect its refinement edge
    changed = True
    while changed:
        changed = False
        for a, b, c in tris:
            ref = key(a, b)
            if ref in edge_marked:
                continue
            if key(b, c) in edge_marked or key(c, a) in edge_marked:
                edge_marked.add(ref)
                changed = True

    verts = [v for v in mesh.vertices]
    midpoint = {}

    def mid(u, v):
        kk = key(u, v)
        if kk not in midpoint:
            midpoint[kk] = len(verts)
            verts.append(0.5 * (verts[u] + verts[v]))
        return midpoint[kk]

    def bisect(t):
        a, b, c = t
        if key(a, b) not in edge_marked:
            return [t]
        m = mid(a, b)
        return bisect((c, a, m)) + bisect((b, c, m))

    new_tris, parents = [], []
    for T, t in enumerate(tris):
        for child in bisect(t):
            new_tris.append(child)
            parents.append(T)
    verts = np.array(verts)
    polys, newest = [], []
    for a, b, c in new_tris:
        e1, e2 = verts[b] - verts[a], verts[c] - verts[a]
        area = e1[0] * e2[1] - e1[1] * e2[0]
        polys.append((a, b, c) if area > 0 else (b, a, c))
        newest.append(c)
    return PolytopalMesh.from_polygons(verts, polys, newest_vertex=newest), np.array(parents, dtype=np.int64)
