"""Poisson problem: local forms, static condensation, solve, fluxes and errors.

The static condensation here is generic: it takes one dense local matrix and
right-hand side per element (as stacked group arrays) and works for
nonsymmetric forms too, so the advection-diffusion-reaction solver and the
Newton steps of the p-Laplacian reuse it.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .hho_core import (BrokenPolynomial, DofVector, HHOSpace, LocalOperator, _call, _single,
                       energy_norm, global_reconstruct, jump_seminorm, reduce_faces,
                       reduce_global, stabilization_seminorm)
from .linsolve import SparseSystem, solve_general, solve_spd
from .mesh import PolytopalMesh


# --------------------------------------------------------------------------
# local forms and loads

def local_form(mesh, T: int, k: int, variant: str = "hho") -> LocalOperator:
    g, j = _single(mesh, T, k, variant)
    A = g.local_form(variant)[j]
    return LocalOperator(T, 0.5 * (A + A.T), "dofs")


def element_loads(space: HHOSpace, f, order: int | None = None) -> list[np.ndarray]:
    """(f, phi_i)_T for the P^k basis of every element, one array per group."""
    order = 2 * space.k + 6 if order is None else order
    out = []
    for g in space.groups:
        xq, wq = g.element_quadrature(order)
        phi = g.element_basis(xq, space.k)
        out.append(np.einsum("eq,eqi->ei", wq * _call(f, xq), phi))
    return out


# --------------------------------------------------------------------------
# generic static condensation

@dataclass
class CondensedSystem:
    """Face-only Schur complement system plus what is needed to recover elements."""
    space: HHOSpace
    matrix: sp.csr_matrix
    rhs: np.ndarray
    free: np.ndarray            # face-numbered DOF indices kept as unknowns
    fixed: np.ndarray           # face-numbered DOF indices with prescribed values
    fixed_values: np.ndarray
    symmetric: bool
    recovery: list = field(repr=False, default_factory=list)

    @property
    def ndof(self) -> int:
        return self.matrix.shape[0]

    def system(self) -> SparseSystem:
        return SparseSystem(self.matrix, self.rhs, symmetric=self.symmetric)

    def solve(self) -> np.ndarray:
        sysm = self.system()
        x = solve_spd(sysm) if self.symmetric else solve_general(sysm)
        return self.recover(x)

    def recover(self, x_free: np.ndarray) -> np.ndarray:
        space = self.space
        faces = np.zeros(space.n_face_dofs)
        faces[self.free] = x_free
        faces[self.fixed] = self.fixed_values
        out = np.empty(space.ndofs)
        out[space.n_element_dofs:] = faces
        for g, (XF, Xb) in zip(space.groups, self.recovery):
            uF = faces[g.dofs[:, g.nbk:] - space.n_element_dofs]
            out[g.dofs[:, :g.nbk]] = Xb - np.einsum("eij,ej->ei", XF, uF)
        return out


def condense(space: HHOSpace, local_matrices, local_rhs, fixed_faces=None, fixed_values=None,
             symmetric: bool = True) -> CondensedSystem:
    """Eliminate element unknowns element by element.

    ``local_matrices[i]`` has shape (n, N, N) for group ``i`` and
    ``local_rhs[i]`` shape (n, N). Face DOFs listed in ``fixed_faces`` (face
    numbering, i.e. global index minus the number of element DOFs) are
    lifted with ``fixed_values``.
    """
    nE = space.n_element_dofs
    rows, cols, vals = [], [], []
    rhs = np.zeros(space.n_face_dofs)
    recovery = []
    for g, A, b in zip(space.groups, local_matrices, local_rhs):
        nbk = g.nbk
        ATT, ATF = A[:, :nbk, :nbk], A[:, :nbk, nbk:]
        AFT, AFF = A[:, nbk:, :nbk], A[:, nbk:, nbk:]
        X = np.linalg.solve(ATT, np.concatenate([ATF, b[:, :nbk, None]], axis=2))
        XF, Xb = X[..., :-1], X[..., -1]
        S = AFF - AFT @ XF
        if symmetric:
            S = 0.5 * (S + S.transpose(0, 2, 1))
        r = b[:, nbk:] - np.einsum("eij,ej->ei", AFT, Xb)
        fd = g.dofs[:, nbk:] - nE
        rows.append(np.repeat(fd, fd.shape[1], axis=1).ravel())
        cols.append(np.tile(fd, (1, fd.shape[1])).ravel())
        vals.append(S.ravel())
        np.add.at(rhs, fd.ravel(), r.ravel())
        recovery.append((XF, Xb))
    n = space.n_face_dofs
    K = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n)).tocsr()
    fixed = np.zeros(0, dtype=np.int64) if fixed_faces is None else np.asarray(fixed_faces, dtype=np.int64)
    fixed_values = np.zeros(len(fixed)) if fixed_values is None else np.asarray(fixed_values, dtype=float)
    mask = np.ones(n, dtype=bool)
    mask[fixed] = False
    free = np.flatnonzero(mask)
    Kff = K[free][:, free]
    r = rhs[free]
    if len(fixed) and np.any(fixed_values):
        r = r - K[free][:, fixed] @ fixed_values
    return CondensedSystem(space, Kff.tocsr(), r, free, fixed, fixed_values, symmetric, recovery)


def assemble_global(space: HHOSpace, local_matrices, local_rhs=None):
    """Un-condensed global matrix (and right-hand side) over all DOFs."""
    rows, cols, vals = [], [], []
    b = np.zeros(space.ndofs)
    for i, (g, A) in enumerate(zip(space.groups, local_matrices)):
        d = g.dofs
        rows.append(np.repeat(d, g.N, axis=1).ravel())
        cols.append(np.tile(d, (1, g.N)).ravel())
        vals.append(A.ravel())
        if local_rhs is not None:
            np.add.at(b, d.ravel(), local_rhs[i].ravel())
    A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(space.ndofs, space.ndofs)).tocsr()
    return A, b


# --------------------------------------------------------------------------
# Poisson

def _poisson_locals(space, f, variant, order=None):
    mats = []
    for g in space.groups:
        A = g.local_form(variant)
        mats.append(0.5 * (A + A.transpose(0, 2, 1)))
    loads = element_loads(space, f, order)
    rhs = [np.concatenate([l, np.zeros((g.n, g.N - g.nbk))], axis=1) for g, l in zip(space.groups, loads)]
    return mats, rhs


def _dirichlet_data(space, g_bc):
    faces = space.mesh.boundary_faces
    fixed = space.boundary_face_dofs - space.n_element_dofs
    if g_bc is None:
        return fixed, np.zeros(len(fixed))
    return fixed, reduce_faces(space, g_bc, faces=faces).ravel()


def assemble_condensed(mesh: PolytopalMesh, k: int, f, variant: str = "hho", g=None,
                       space: HHOSpace | None = None) -> CondensedSystem:
    """Condensed Poisson system; boundary face blocks are eliminated.

    ``g`` optionally prescribes non-homogeneous Dirichlet data (the boundary
    face blocks are then set to the face projections of ``g``).
    """
    space = HHOSpace(mesh, k, variant) if space is None else space
    mats, rhs = _poisson_locals(space, f, variant)
    fixed, vals = _dirichlet_data(space, g)
    return condense(space, mats, rhs, fixed, vals, symmetric=True)


def solve_poisson(mesh: PolytopalMesh, k: int, f, variant: str = "hho", g=None,
                  space: HHOSpace | None = None) -> DofVector:
    space = HHOSpace(mesh, k, variant) if space is None else space
    cs = assemble_condensed(mesh, k, f, variant, g=g, space=space)
    return DofVector(space, cs.solve(), dirichlet=g is None)


def solve_monolithic(mesh: PolytopalMesh, k: int, f, variant: str = "hho", g=None,
                     space: HHOSpace | None = None) -> DofVector:
    """Dense solve of the full element+face system (reference for small meshes)."""
    space = HHOSpace(mesh, k, variant) if space is None else space
    mats, rhs = _poisson_locals(space, f, variant)
    A, b = assemble_global(space, mats, rhs)
    fixed, vals = _dirichlet_data(space, g)
    fixed = fixed + space.n_element_dofs
    x = np.zeros(space.ndofs)
    x[fixed] = vals
    free = np.setdiff1d(np.arange(space.ndofs), fixed)
    Ad = A.toarray()
    x[free] = np.linalg.solve(Ad[np.ix_(free, free)], b[free] - Ad[np.ix_(free, fixed)] @ vals)
    return DofVector(space, x, dirichlet=g is None)


# --------------------------------------------------------------------------
# fluxes and balance

@dataclass
class FluxReport:
    fluxes: dict               # element -> (m, k+1) face-basis coefficients of S_TF
    balance: np.ndarray        # per-element max balance residual
    continuity: np.ndarray     # per-interface ||S_T1F + S_T2F||_F
    balance_scale: float
    continuity_scale: float
    boundary_flux_total: float
    source_total: float

    @property
    def max_balance(self) -> float:
        return float(self.balance.max()) / self.balance_scale

    @property
    def max_continuity(self) -> float:
        c = float(self.continuity.max()) if len(self.continuity) else 0.0
        return c / self.continuity_scale


def fluxes_and_balance(u: DofVector, f, variant: str | None = None, order: int | None = None) -> FluxReport:
    """Numerical fluxes S_TF = -grad(p_T u).n_TF + R_TF u, local balance and continuity."""
    space = u.space
    mesh = space.mesh
    k = space.k
    order = 2 * k + 6 if order is None else order
    loads = element_loads(space, f, order)
    face_flux = np.zeros((mesh.n_faces, 2, k + 1))
    fluxes = {}
    balance = np.zeros(mesh.n_elements)
    bscale = 0.0
    for g, load in zip(space.groups, loads):
        loc = g.gather(u.values)
        pu = np.einsum("eij,ej->ei", g.P, loc)
        xf, wf = g.face_quadrature(2 * k + 2)
        dphif = g.element_basis(xf, k + 1, derivative=1)
        psi = g.face_basis(xf)
        dn = np.einsum("efqid,efd,ei->efq", dphif, g.normals, pu)
        moments = np.einsum("efq,efq,efqj->efj", wf, -dn, psi)
        S = np.linalg.solve(g.MF, moments[..., None])[..., 0]
        S += np.einsum("efik,ek->efi", g.boundary_residual_operator(variant), loc)
        vol = np.einsum("eij,ej->ei", g.K1[:, :g.nbk, :], pu)
        surf = np.einsum("efj,efji->ei", S, g.MFT[..., :g.nbk])
        balance[g.elements] = np.abs(vol + surf - load).max(1)
        bscale = max(bscale, np.abs(load).max(), np.abs(vol).max())
        for j, T in enumerate(g.elements):
            fluxes[int(T)] = S[j]
            for i, F in enumerate(g.faces[j]):
                side = 0 if mesh.face_elements[F, 0] == T else 1
                face_flux[F, side] = S[j, i]
    MF = _global_face_mass(space)
    interfaces, bfaces = mesh.interface_faces, mesh.boundary_faces
    s = face_flux[interfaces, 0] + face_flux[interfaces, 1]
    cont = np.sqrt(np.abs(np.einsum("fi,fij,fj->f", s, MF[interfaces], s)))
    mags = np.sqrt(np.abs(np.einsum("fsi,fij,fsj->fs", face_flux, MF, face_flux)))
    # the constant face basis function is 1, so row 0 of M_F integrates
    boundary_total = float(np.einsum("fj,fj->", MF[bfaces, 0, :], face_flux[bfaces, 0]))
    source_total = float(sum(l[:, 0].sum() for l in loads))
    return FluxReport(fluxes, balance, cont, max(bscale, 1e-300), max(float(mags.max()), 1e-300),
                      boundary_total, source_total)


def _global_face_mass(space):
    mesh = space.mesh
    from .polycalc import eval_face_monomials, segment_quadrature
    a = mesh.vertices[mesh.faces[:, 0]]
    b = mesh.vertices[mesh.faces[:, 1]]
    xf, wf = segment_quadrature(a, b, 2 * space.k + 2)
    psi = eval_face_monomials(xf, mesh.face_midpoint[:, None], mesh.face_tangent[:, None],
                              mesh.face_diameter[:, None], space.k)
    return np.einsum("fq,fqi,fqj->fij", wf, psi, psi)


# --------------------------------------------------------------------------
# errors

@dataclass
class ErrorReport:
    h: float
    ndof: int
    energy: float          # ||I_h u - u_h||_{a,h}
    grad_recon: float      # ||grad_h(p_h u_h - u)||
    l2_element: float      # ||pi^k u - u_T||
    l2_recon: float        # ||p_h u_h - u||
    jump: float            # |p_h u_h|_{J,h}
    stab: float            # |u_h|_{s,h}


def broken_errors(w: BrokenPolynomial, exact, grad_exact, order: int) -> tuple[float, float]:
    """L2 and broken H1-seminorm errors of a broken polynomial field."""
    mesh = w.mesh
    from .polycalc import eval_monomials, element_quadrature_batch
    e0 = e1 = 0.0
    for m, elems in mesh.face_count_groups().items():
        xq, wq = element_quadrature_batch(mesh, elems, order)
        c = mesh.element_centroid[elems][:, None]
        h = mesh.element_diameter[elems][:, None]
        v = np.einsum("eqi,ei->eq", eval_monomials(xq, c, h, w.degree), w.coeffs[elems])
        dv = np.einsum("eqid,ei->eqd", eval_monomials(xq, c, h, w.degree, 1), w.coeffs[elems])
        pts = xq.reshape(-1, 2)
        ue = np.asarray(exact(pts), dtype=float).reshape(v.shape)
        gx, gy = grad_exact(pts)
        ge = np.stack([np.asarray(gx, float).reshape(v.shape), np.asarray(gy, float).reshape(v.shape)], -1)
        e0 += (wq * (v - ue) ** 2).sum()
        e1 += (wq[..., None] * (dv - ge) ** 2).sum()
    return float(np.sqrt(e0)), float(np.sqrt(e1))


def compute_errors(u: DofVector, exact, grad_exact, variant: str | None = None,
                   ndof: int | None = None, order: int | None = None) -> ErrorReport:
    space = u.space
    k = space.k
    order = 2 * k + 6 if order is None else order
    Iu = reduce_global(space, exact, order)
    diff = DofVector(space, Iu.values - u.values)
    energy = energy_norm(diff, variant)
    from .hho_core import l2_norm_elements
    l2e = l2_norm_elements(diff)
    ph = global_reconstruct(u)
    l2r, gr = broken_errors(ph, exact, grad_exact, order)
    return ErrorReport(h=space.mesh.h, ndof=space.n_condensed_dofs if ndof is None else ndof,
                       energy=energy, grad_recon=gr, l2_element=l2e, l2_recon=l2r,
                       jump=jump_seminorm(ph, k), stab=stabilization_seminorm(u, variant))


def eoc(h, e) -> np.ndarray:
    """Pairwise orders log(e_i/e_{i-1}) / log(h_i/h_{i-1}); first entry NaN."""
    h, e = np.asarray(h, float), np.asarray(e, float)
    out = np.full(len(h), np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        out[1:] = np.log(e[1:] / e[:-1]) / np.log(h[1:] / h[:-1])
    return out


def eoc_fit(h, e, last: int = 3) -> float:
    """Least-squares slope of log e against log h over the last points."""
    h, e = np.asarray(h, float)[-last:], np.asarray(e, float)[-last:]
    return float(np.polyfit(np.log(h), np.log(e), 1)[0])


# --------------------------------------------------------------------------
# benchmark data

def sinsin():
    """u = sin(pi x) sin(pi y) with f = 2 pi^2 u."""
    pi = np.pi

    def u(x):
        return np.sin(pi * x[:, 0]) * np.sin(pi * x[:, 1])

    def grad(x):
        return (pi * np.cos(pi * x[:, 0]) * np.sin(pi * x[:, 1]),
                pi * np.sin(pi * x[:, 0]) * np.cos(pi * x[:, 1]))

    def f(x):
        return 2 * pi ** 2 * u(x)

    return u, grad, f
