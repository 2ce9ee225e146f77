"""Hybrid local spaces and operators.

Everything element-local is computed in batches of elements sharing the
same face count, so each operator is a stacked dense array of shape
(n_elements_in_group, rows, cols). Local DOFs are ordered element block
first, then one block per face in the counterclockwise order of the element.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .mesh import PolytopalMesh
from .polycalc import (dim_poly, element_quadrature_batch, eval_face_monomials,
                       eval_monomials, laplacian_matrix, segment_quadrature)

VARIANTS = ("hho", "vem")


@dataclass(frozen=True)
class LocalDofSpace:
    element: int
    degree: int
    n_faces: int

    @property
    def element_dim(self) -> int:
        return dim_poly(self.degree)

    @property
    def face_dim(self) -> int:
        return self.degree + 1

    @property
    def dim(self) -> int:
        return self.element_dim + self.n_faces * self.face_dim

    def face_slice(self, i: int) -> slice:
        start = self.element_dim + i * self.face_dim
        return slice(start, start + self.face_dim)


class LocalGroup:
    """Geometry, quadrature and local operators for a batch of elements."""

    def __init__(self, space: "HHOSpace", elements: np.ndarray):
        mesh, k = space.mesh, space.k
        self.space = space
        self.elements = np.asarray(elements, dtype=np.int64)
        self.n = len(self.elements)
        self.m = len(mesh.element_faces[self.elements[0]])
        self.k = k
        self.nbk, self.nb1, self.nbf = dim_poly(k), dim_poly(k + 1), k + 1
        self.N = self.nbk + self.m * self.nbf

        E = self.elements
        self.faces = np.array([mesh.element_faces[T] for T in E])
        self.loops = np.array([mesh.element_vertices[T] for T in E])
        self.signs = np.array([mesh.normal_sign[T] for T in E])
        self.normals = mesh.face_normal[self.faces] * self.signs[..., None]
        self.xT = mesh.element_centroid[E]
        self.hT = mesh.element_diameter[E]
        self.area = mesh.element_area[E]
        self.hF = mesh.face_diameter[self.faces]
        self.boundary = mesh.boundary_face[self.faces]

        nT = mesh.n_elements
        dofs = np.empty((self.n, self.N), dtype=np.int64)
        dofs[:, :self.nbk] = E[:, None] * self.nbk + np.arange(self.nbk)
        fd = nT * self.nbk + self.faces[..., None] * self.nbf + np.arange(self.nbf)
        dofs[:, self.nbk:] = fd.reshape(self.n, -1)
        self.dofs = dofs
        self._build(2 * k + 2)

    # -- quadrature helpers ---------------------------------------------
    def element_quadrature(self, order):
        return element_quadrature_batch(self.space.mesh, self.elements, order)

    def face_quadrature(self, order):
        """Points (n, m, nqf, 2) and weights (n, m, nqf) on each element face."""
        V = self.space.mesh.vertices
        a = V[self.loops]
        b = V[np.roll(self.loops, -1, axis=1)]
        return segment_quadrature(a, b, order)

    def element_basis(self, x, degree, derivative=0):
        extra = x.ndim - 2
        c = self.xT.reshape((self.n,) + (1,) * extra + (2,))
        h = self.hT.reshape((self.n,) + (1,) * extra)
        return eval_monomials(x, c, h, degree, derivative)

    def face_basis(self, xf, degree=None):
        mesh = self.space.mesh
        degree = self.k if degree is None else degree
        mid = mesh.face_midpoint[self.faces][:, :, None, :]
        tan = mesh.face_tangent[self.faces][:, :, None, :]
        h = self.hF[:, :, None]
        return eval_face_monomials(xf, mid, tan, h, degree)

    # -- operator construction ------------------------------------------
    def _build(self, order):
        k, nbk, nb1, nbf, m, n, N = self.k, self.nbk, self.nb1, self.nbf, self.m, self.n, self.N
        xq, wq = self.element_quadrature(order)
        phi = self.element_basis(xq, k + 1)
        dphi = self.element_basis(xq, k + 1, derivative=1)
        xf, wf = self.face_quadrature(order)
        phif = self.element_basis(xf, k + 1)
        dphif = self.element_basis(xf, k + 1, derivative=1)
        psi = self.face_basis(xf)
        dn = np.einsum("efqid,efd->efqi", dphif, self.normals)

        M1 = np.einsum("eq,eqi,eqj->eij", wq, phi, phi)
        K1 = np.einsum("eq,eqid,eqjd->eij", wq, dphi, dphi)
        MF = np.einsum("efq,efqi,efqj->efij", wf, psi, psi)
        MFT = np.einsum("efq,efqi,efqj->efij", wf, psi, phif)
        self.M1, self.K1, self.MF, self.MFT = M1, K1, MF, MFT
        self.Mk = M1[:, :nbk, :nbk]
        self.phi_int = np.einsum("eq,eqi->ei", wq, phi)

        # potential reconstruction, integration-by-parts form of the right-hand side
        B = np.zeros((n, nb1, N))
        B[:, :, :nbk] = K1[:, :, :nbk] - np.einsum("efq,efqi,efqj->eij", wf, dn, phif[..., :nbk])
        Bf = np.einsum("efq,efqi,efqj->eifj", wf, dn, psi)
        B[:, :, nbk:] = Bf.reshape(n, nb1, m * nbf)
        lvec = self.phi_int / self.area[:, None]
        r = np.zeros((n, N))
        r[:, :nbk] = lvec[:, :nbk]
        Kaug = K1 + lvec[:, :, None] * lvec[:, None, :]
        self.P = np.linalg.solve(Kaug, B + lvec[:, :, None] * r[:, None, :])

        # gradient reconstruction in P^k(T)^2
        RG = np.zeros((n, 2, nbk, N))
        RG[:, :, :, :nbk] = -np.einsum("eq,eqid,eqj->edij", wq, dphi[:, :, :nbk, :], phi[:, :, :nbk])
        RGf = np.einsum("efq,efqi,efd,efqj->edifj", wf, phif[..., :nbk], self.normals, psi)
        RG[:, :, :, nbk:] = RGf.reshape(n, 2, nbk, m * nbf)
        self.G = np.linalg.solve(self.Mk[:, None], RG)

        # residuals: element and face projections of (p_T v - v_X)
        ET = np.zeros((n, nbk, N))
        ET[:, :, :nbk] = np.eye(nbk)
        EF = np.zeros((n, m, nbf, N))
        for f in range(m):
            EF[:, f, :, nbk + f * nbf: nbk + (f + 1) * nbf] = np.eye(nbf)
        self.ET, self.EF = ET, EF
        proj_k = np.linalg.solve(self.Mk, M1[:, :nbk, :])
        self.deltaT = proj_k @ self.P - ET
        trace_face = np.linalg.solve(MF, MFT)
        self.trace_k = trace_face[..., :nbk]
        self.deltaTF = np.einsum("efij,ejk->efik", trace_face, self.P) - EF
        self.D = self.deltaTF - np.einsum("efij,ejk->efik", self.trace_k, self.deltaT)
        self.boundary_difference = EF - np.einsum("efij,ejk->efik", self.trace_k, ET)

        w = 1.0 / self.hF
        self.S_hho = np.einsum("ef,efji,efjl,eflk->eik", w, self.D, MF, self.D)
        self.S_vem = (np.einsum("e,eji,ejl,elk->eik", self.hT ** -2, self.deltaT, self.Mk, self.deltaT)
                      + np.einsum("ef,efji,efjl,eflk->eik", w, self.deltaTF, MF, self.deltaTF))
        self.consistent = np.einsum("eji,ejl,elk->eik", self.P, K1, self.P)

    def stabilization(self, variant: str | None = None) -> np.ndarray:
        variant = self.space.variant if variant is None else variant
        if variant == "hho":
            return self.S_hho
        if variant == "vem":
            return self.S_vem
        raise ValueError(f"unknown stabilization variant {variant!r}")

    @property
    def S(self) -> np.ndarray:
        return self.stabilization()

    @cached_property
    def A(self) -> np.ndarray:
        return self.consistent + self.S

    def local_form(self, variant=None) -> np.ndarray:
        return self.consistent + self.stabilization(variant)

    def boundary_residual_operator(self, variant=None) -> np.ndarray:
        """Operator (n, m, nbf, N) mapping local DOFs to the face residuals."""
        S = self.stabilization(variant)
        nbk, m, nbf = self.nbk, self.m, self.nbf
        Sff = S[:, nbk:, nbk:]
        rhs = -Sff @ self.boundary_difference.reshape(self.n, m * nbf, self.N)
        rhs = rhs.reshape(self.n, m, nbf, self.N)
        return np.linalg.solve(self.MF, rhs)

    def laplacian_of_reconstruction(self) -> np.ndarray:
        """Operator (n, nb1, N) giving the Laplacian of p_T v in the P^{k+1} basis."""
        L = laplacian_matrix(self.k + 1)
        return np.einsum("ij,e,ejk->eik", L, self.hT ** -2, self.P)

    def gather(self, values: np.ndarray) -> np.ndarray:
        return values[self.dofs]


class HHOSpace:
    """Global hybrid space of degree ``k`` on a polytopal mesh."""

    def __init__(self, mesh: PolytopalMesh, k: int, variant: str = "hho", chunk: int = 4096):
        if k < 0:
            raise ValueError("polynomial degree must be >= 0")
        if variant not in VARIANTS:
            raise ValueError(f"unknown stabilization variant {variant!r}")
        self.mesh, self.k, self.variant = mesh, int(k), variant
        self.nbk, self.nb1, self.nbf = dim_poly(k), dim_poly(k + 1), k + 1
        self.n_element_dofs = mesh.n_elements * self.nbk
        self.n_face_dofs = mesh.n_faces * self.nbf
        self.ndofs = self.n_element_dofs + self.n_face_dofs
        self.groups = []
        for m, elems in mesh.face_count_groups().items():
            for s in range(0, len(elems), chunk):
                self.groups.append(LocalGroup(self, elems[s:s + chunk]))
        self._where = {}
        for gi, g in enumerate(self.groups):
            for j, T in enumerate(g.elements):
                self._where[int(T)] = (gi, j)

    def locate(self, T: int):
        gi, j = self._where[int(T)]
        return self.groups[gi], j

    def local_space(self, T: int) -> LocalDofSpace:
        return LocalDofSpace(T, self.k, len(self.mesh.element_faces[T]))

    def element_dofs(self, T: int) -> np.ndarray:
        return T * self.nbk + np.arange(self.nbk)

    def face_dofs(self, F) -> np.ndarray:
        F = np.atleast_1d(np.asarray(F, dtype=np.int64))
        return (self.n_element_dofs + F[:, None] * self.nbf + np.arange(self.nbf)).ravel()

    def local_dofs(self, T: int) -> np.ndarray:
        g, j = self.locate(T)
        return g.dofs[j]

    @cached_property
    def boundary_face_dofs(self) -> np.ndarray:
        return self.face_dofs(self.mesh.boundary_faces)

    @cached_property
    def interface_face_dofs(self) -> np.ndarray:
        return self.face_dofs(self.mesh.interface_faces)

    @property
    def n_condensed_dofs(self) -> int:
        return len(self.mesh.interface_faces) * self.nbf

    def zeros(self, dirichlet: bool = True) -> "DofVector":
        return DofVector(self, np.zeros(self.ndofs), dirichlet=dirichlet)


class DofVector:
    """Coefficients of a hybrid function: element blocks then face blocks."""

    def __init__(self, space: HHOSpace, values, dirichlet: bool = False):
        values = np.asarray(values, dtype=float)
        if values.shape != (space.ndofs,):
            raise ValueError(f"expected {space.ndofs} coefficients, got {values.shape}")
        self.space = space
        self.values = values
        self.dirichlet = dirichlet
        if dirichlet and np.any(values[space.boundary_face_dofs] != 0.0):
            raise ValueError("Dirichlet-constrained vector has non-zero boundary face blocks")

    @property
    def k(self) -> int:
        return self.space.k

    @property
    def mesh(self) -> PolytopalMesh:
        return self.space.mesh

    def element_block(self, T: int) -> np.ndarray:
        return self.values[self.space.element_dofs(T)]

    def face_block(self, F: int) -> np.ndarray:
        return self.values[self.space.face_dofs(F)]

    @property
    def element_values(self) -> np.ndarray:
        return self.values[:self.space.n_element_dofs].reshape(-1, self.space.nbk)

    @property
    def face_values(self) -> np.ndarray:
        return self.values[self.space.n_element_dofs:].reshape(-1, self.space.nbf)

    def __sub__(self, other: "DofVector") -> "DofVector":
        return DofVector(self.space, self.values - other.values)

    def __add__(self, other: "DofVector") -> "DofVector":
        return DofVector(self.space, self.values + other.values)

    def __mul__(self, a: float) -> "DofVector":
        return DofVector(self.space, a * self.values, dirichlet=self.dirichlet)

    __rmul__ = __mul__


# --------------------------------------------------------------------------
# reduction

def _call(v, pts):
    return np.asarray(v(pts.reshape(-1, 2)), dtype=float).reshape(pts.shape[:-1])


def reduce_elements(space: HHOSpace, v, order: int | None = None) -> np.ndarray:
    """L2 projections of ``v`` on P^k(T) for all elements, shape (nT, nbk)."""
    order = 2 * space.k + 6 if order is None else order
    out = np.empty((space.mesh.n_elements, space.nbk))
    for g in space.groups:
        xq, wq = g.element_quadrature(order)
        phi = g.element_basis(xq, space.k)
        rhs = np.einsum("eq,eqi->ei", wq * _call(v, xq), phi)
        out[g.elements] = np.linalg.solve(g.Mk, rhs[..., None])[..., 0]
    return out


def reduce_faces(space: HHOSpace, v, faces=None, order: int | None = None) -> np.ndarray:
    """L2 projections of the trace of ``v`` on P^k(F), shape (len(faces), nbf)."""
    mesh = space.mesh
    order = 2 * space.k + 6 if order is None else order
    faces = np.arange(mesh.n_faces) if faces is None else np.asarray(faces, dtype=np.int64)
    a = mesh.vertices[mesh.faces[faces, 0]]
    b = mesh.vertices[mesh.faces[faces, 1]]
    xf, wf = segment_quadrature(a, b, order)
    psi = eval_face_monomials(xf, mesh.face_midpoint[faces][:, None], mesh.face_tangent[faces][:, None],
                              mesh.face_diameter[faces][:, None], space.k)
    MF = np.einsum("fq,fqi,fqj->fij", wf, psi, psi)
    rhs = np.einsum("fq,fqi->fi", wf * _call(v, xf), psi)
    return np.linalg.solve(MF, rhs[..., None])[..., 0]


def reduce_global(space: HHOSpace, v, order: int | None = None) -> DofVector:
    vals = np.concatenate([reduce_elements(space, v, order).ravel(),
                           reduce_faces(space, v, order=order).ravel()])
    return DofVector(space, vals)


def reduce_local(space: HHOSpace, T: int, v, order: int | None = None) -> np.ndarray:
    g, j = space.locate(T)
    order = 2 * space.k + 6 if order is None else order
    mesh = space.mesh
    out = np.empty(g.N)
    out[:g.nbk] = reduce_elements_single(space, T, v, order)
    out[g.nbk:] = reduce_faces(space, v, faces=mesh.element_faces[T], order=order).ravel()
    return out


def reduce_elements_single(space, T, v, order):
    from .polycalc import l2_project
    return l2_project(v, space.mesh, "element", T, space.k, order=order).coeffs


# --------------------------------------------------------------------------
# single-element operator views

@dataclass
class LocalOperator:
    """Dense local operator of one element.

    ``matrix`` maps local DOF coefficients to coefficients in ``codomain``;
    for bilinear forms ``codomain`` is ``"dofs"`` and ``matrix`` is the Gram
    matrix.
    """
    element: int
    matrix: np.ndarray
    codomain: str


def _single(mesh_or_space, T, k=None, variant="hho"):
    if isinstance(mesh_or_space, HHOSpace):
        return mesh_or_space.locate(T)
    sp = HHOSpace.__new__(HHOSpace)
    sp.mesh, sp.k, sp.variant = mesh_or_space, int(k), variant
    sp.nbk, sp.nb1, sp.nbf = dim_poly(k), dim_poly(k + 1), k + 1
    sp.n_element_dofs = mesh_or_space.n_elements * sp.nbk
    sp.n_face_dofs = mesh_or_space.n_faces * sp.nbf
    sp.ndofs = sp.n_element_dofs + sp.n_face_dofs
    g = LocalGroup(sp, np.array([T]))
    return g, 0


def potential_reconstruction(mesh, T: int, k: int) -> LocalOperator:
    g, j = _single(mesh, T, k)
    return LocalOperator(T, g.P[j], f"P{k + 1}(T)")


def gradient_reconstruction(mesh, T: int, k: int) -> LocalOperator:
    g, j = _single(mesh, T, k)
    return LocalOperator(T, g.G[j].reshape(2 * g.nbk, g.N), f"P{k}(T)^2")


def stabilization(mesh, T: int, k: int, variant: str = "hho") -> LocalOperator:
    g, j = _single(mesh, T, k, variant)
    return LocalOperator(T, g.stabilization(variant)[j], "dofs")


def boundary_residual(mesh, T: int, k: int, v: np.ndarray, variant: str = "hho") -> np.ndarray:
    """Face residual polynomials (m, k+1) of local DOF vector ``v``."""
    g, j = _single(mesh, T, k, variant)
    return g.boundary_residual_operator(variant)[j] @ v


# --------------------------------------------------------------------------
# nonlinear stabilization and norms

def signed_power(r, p, cutoff=1e-14):
    """|r|^{p-2} r, set to zero where |r| <= cutoff."""
    a = np.abs(r)
    out = np.zeros_like(r)
    nz = a > cutoff
    out[nz] = a[nz] ** (p - 2) * r[nz]
    return out


class FaceResidualQuadrature:
    """Values of the face residual (delta_TF - delta_T) at face quadrature points."""

    def __init__(self, g: LocalGroup, order: int):
        xf, wf = g.face_quadrature(order)
        psi = g.face_basis(xf)
        self.values = np.einsum("efqi,efij->efqj", psi, g.D)
        self.weights = wf
        self.scale = g.hF


def plap_stabilization_value(mesh, T: int, k: int, u, v, p: float, order=None) -> float:
    g, j = _single(mesh, T, k)
    order = 2 * k + 6 if order is None else order
    fq = FaceResidualQuadrature(g, order)
    Du = fq.values[j] @ u
    Dv = fq.values[j] @ v
    w = fq.weights[j] * (fq.scale[j] ** (1.0 - p))[:, None]
    return float((w * signed_power(Du, p) * Dv).sum())


def norms(v: DofVector, p: float = 2.0, order: int | None = None):
    """Discrete W^{1,p}-like norm: (global value, per-element p-th powers)."""
    if p <= 1:
        raise ValueError("p must be > 1")
    space = v.space
    k = space.k
    order = 2 * k + 6 if order is None else order
    per = np.zeros(space.mesh.n_elements)
    for g in space.groups:
        loc = g.gather(v.values)
        xq, wq = g.element_quadrature(order)
        dphi = g.element_basis(xq, k, derivative=1)
        grad = np.einsum("eqid,ei->eqd", dphi, loc[:, :g.nbk])
        vol = (wq * np.sqrt((grad ** 2).sum(-1)) ** p).sum(1)
        xf, wf = g.face_quadrature(order)
        psi = g.face_basis(xf)
        phif = g.element_basis(xf, k)
        vf = np.einsum("efqi,efi->efq", psi, loc[:, g.nbk:].reshape(g.n, g.m, g.nbf))
        vt = np.einsum("efqi,ei->efq", phif, loc[:, :g.nbk])
        face = ((wf * np.abs(vf - vt) ** p).sum(-1) * g.hF ** (1.0 - p)).sum(1)
        per[g.elements] = vol + face
    return float(per.sum() ** (1.0 / p)), per


def l2_norm_elements(v: DofVector) -> float:
    """L2 norm of the broken polynomial made of the element blocks."""
    total = 0.0
    for g in v.space.groups:
        loc = g.gather(v.values)[:, :g.nbk]
        total += np.einsum("ei,eij,ej->", loc, g.Mk, loc)
    return float(np.sqrt(max(total, 0.0)))


def energy_norm(v: DofVector, variant: str | None = None) -> float:
    total = 0.0
    for g in v.space.groups:
        loc = g.gather(v.values)
        total += np.einsum("ei,eij,ej->", loc, g.local_form(variant), loc)
    return float(np.sqrt(max(total, 0.0)))


def stabilization_seminorm(v: DofVector, variant: str | None = None) -> float:
    total = 0.0
    for g in v.space.groups:
        loc = g.gather(v.values)
        total += np.einsum("ei,eij,ej->", loc, g.stabilization(variant), loc)
    return float(np.sqrt(max(total, 0.0)))


# --------------------------------------------------------------------------
# broken polynomial fields and jumps

@dataclass
class BrokenPolynomial:
    """One polynomial of degree ``degree`` per element in the scaled monomial basis."""
    mesh: PolytopalMesh
    degree: int
    coeffs: np.ndarray

    def __call__(self, T: int, x) -> np.ndarray:
        return eval_monomials(x, self.mesh.element_centroid[T], self.mesh.element_diameter[T],
                              self.degree) @ self.coeffs[T]

    def integral(self, space: HHOSpace | None = None) -> float:
        total = 0.0
        for T in range(self.mesh.n_elements):
            from .polycalc import quadrature
            q = quadrature(self.mesh, "element", T, self.degree)
            total += q.weights @ self(T, q.points)
        return float(total)


def jump_seminorm(w: BrokenPolynomial, k: int, order: int | None = None) -> float:
    """Face-projected jump seminorm; boundary faces use the one-sided trace."""
    mesh = w.mesh
    order = 2 * max(k, w.degree) + 2 if order is None else order
    F = np.arange(mesh.n_faces)
    a = mesh.vertices[mesh.faces[:, 0]]
    b = mesh.vertices[mesh.faces[:, 1]]
    xf, wf = segment_quadrature(a, b, order)
    T1 = mesh.face_elements[:, 0]
    T2 = mesh.face_elements[:, 1]

    def trace(T):
        ok = T >= 0
        vals = np.zeros(xf.shape[:-1])
        Ts = np.where(ok, T, 0)
        phi = eval_monomials(xf, mesh.element_centroid[Ts][:, None], mesh.element_diameter[Ts][:, None], w.degree)
        vals = np.einsum("fqi,fi->fq", phi, w.coeffs[Ts])
        return np.where(ok[:, None], vals, 0.0)

    jump = trace(T1) - trace(T2)
    psi = eval_face_monomials(xf, mesh.face_midpoint[:, None], mesh.face_tangent[:, None],
                              mesh.face_diameter[:, None], k)
    MF = np.einsum("fq,fqi,fqj->fij", wf, psi, psi)
    rhs = np.einsum("fq,fqi->fi", wf * jump, psi)
    c = np.linalg.solve(MF, rhs[..., None])[..., 0]
    sq = np.einsum("fi,fij,fj->f", c, MF, c)
    return float(np.sqrt((sq / mesh.face_diameter[F]).sum()))


def global_reconstruct(u: DofVector) -> BrokenPolynomial:
    space = u.space
    coeffs = np.empty((space.mesh.n_elements, space.nb1))
    for g in space.groups:
        coeffs[g.elements] = np.einsum("eij,ej->ei", g.P, g.gather(u.values))
    return BrokenPolynomial(space.mesh, space.k + 1, coeffs)


# --------------------------------------------------------------------------
# discrete Poincare inequality

def h1_norm_matrices(space: HHOSpace):
    """Sparse Gram matrices of ||v||_{1,h}^2 and of ||v_h||^2 (element blocks)."""
    import scipy.sparse as sps
    rows, cols, va, vm = [], [], [], []
    for g in space.groups:
        xf, wf = g.face_quadrature(2 * g.k + 2)
        psi = g.face_basis(xf)
        phi = g.element_basis(xf, g.k)
        W = np.zeros(psi.shape[:3] + (g.N,))
        W[..., :g.nbk] = -phi
        for f in range(g.m):
            W[:, f, :, g.nbk + f * g.nbf: g.nbk + (f + 1) * g.nbf] = psi[:, f]
        A = np.einsum("efq,efqi,efqj->eij", wf / g.hF[..., None], W, W)
        A[:, :g.nbk, :g.nbk] += g.K1[:, :g.nbk, :g.nbk]
        M = np.zeros_like(A)
        M[:, :g.nbk, :g.nbk] = g.Mk
        rows.append(np.repeat(g.dofs, g.N, axis=1).ravel())
        cols.append(np.tile(g.dofs, (1, g.N)).ravel())
        va.append(A.ravel())
        vm.append(M.ravel())
    r, c = np.concatenate(rows), np.concatenate(cols)
    shape = (space.ndofs, space.ndofs)
    return (sps.coo_matrix((np.concatenate(va), (r, c)), shape=shape).tocsr(),
            sps.coo_matrix((np.concatenate(vm), (r, c)), shape=shape).tocsr())


def _interior_dofs(space: HHOSpace) -> np.ndarray:
    keep = np.ones(space.ndofs, dtype=bool)
    keep[space.boundary_face_dofs] = False
    return np.flatnonzero(keep)


def poincare_ratios(space: HHOSpace, n_samples: int = 100, seed: int = 0) -> np.ndarray:
    """||v_h|| / ||v||_{1,h} for random v with zero boundary face blocks."""
    A, M = h1_norm_matrices(space)
    idx = _interior_dofs(space)
    A, M = A[idx][:, idx], M[idx][:, idx]
    V = np.random.default_rng(seed).standard_normal((len(idx), n_samples))
    num = np.einsum("in,in->n", V, M @ V)
    den = np.einsum("in,in->n", V, A @ V)
    return np.sqrt(num / den)


def discrete_poincare_constant(space: HHOSpace) -> float:
    """max over v in U_{h,D} of ||v_h|| / ||v||_{1,h} (generalized eigenvalue)."""
    from scipy.sparse.linalg import eigsh
    A, M = h1_norm_matrices(space)
    idx = _interior_dofs(space)
    A, M = A[idx][:, idx].tocsc(), M[idx][:, idx].tocsc()
    if A.shape[0] <= 50:
        from scipy.linalg import eigh
        lam = eigh(M.toarray(), A.toarray(), eigvals_only=True)[-1]
    else:
        lam = eigsh(M, k=1, M=A, which="LA", return_eigenvectors=False)[0]
    return float(np.sqrt(lam))
