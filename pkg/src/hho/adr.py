"""Diffusion-advection-reaction: -div(kappa grad u) + beta.grad u + mu u = f.

Diffusion uses the hybrid local form weighted by a piecewise constant
kappa, with boundary conditions imposed weakly (Nitsche) on boundary face
unknowns. Advection uses a reconstructed advective derivative G_beta in a
skew-symmetric form plus an element-face upwind penalty. No unknown is
eliminated on the boundary; every boundary term is added to the local
matrix of the owning element, so static condensation still applies.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hho_core import DofVector, HHOSpace, LocalGroup, _call, reduce_global
from .linsolve import SparseSystem
from .mesh import PolytopalMesh
from .poisson import assemble_global, condense, element_loads


class AdrConfigError(ValueError):
    pass


@dataclass
class AdrData:
    """Problem coefficients.

    ``kappa`` is a scalar or an array with one value per element; ``beta``
    maps points (n, 2) to velocities (n, 2); ``mu`` is a scalar or callable.
    ``beta_grad`` optionally maps points to the velocity Jacobian (n, 2, 2).
    """
    kappa: object = 1.0
    beta: object = None
    mu: object = 1.0
    f: object = None
    zeta: float = 1.0
    mu0: float | None = None
    beta_grad: object = None

    def __post_init__(self):
        if self.zeta < 1.0:
            raise AdrConfigError("zeta must be >= 1")
        if np.any(np.asarray(self.kappa) < 0):
            raise AdrConfigError("kappa must be nonnegative")
        if self.beta is None:
            self.beta = lambda x: np.zeros_like(x)
        if self.mu0 is None:
            if callable(self.mu):
                raise AdrConfigError("mu0 must be given when mu is a function")
            self.mu0 = float(self.mu)
        if self.mu0 <= 0:
            raise AdrConfigError("reaction lower bound mu0 must be positive")

    def kappa_elements(self, mesh: PolytopalMesh) -> np.ndarray:
        k = np.asarray(self.kappa, dtype=float)
        return np.full(mesh.n_elements, float(k)) if k.ndim == 0 else k

    def mu_at(self, x):
        if callable(self.mu):
            return _call(self.mu, x)
        return np.full(x.shape[:-1], float(self.mu))

    def beta_at(self, x):
        return np.asarray(self.beta(x.reshape(-1, 2)), dtype=float).reshape(x.shape)


def rotating_benchmark(kappa: float):
    """u = sin(pi x) sin(pi y), beta = (1/2 - y, x - 1/2), mu = 1."""
    pi = np.pi

    def u(x):
        return np.sin(pi * x[:, 0]) * np.sin(pi * x[:, 1])

    def grad(x):
        return (pi * np.cos(pi * x[:, 0]) * np.sin(pi * x[:, 1]),
                pi * np.sin(pi * x[:, 0]) * np.cos(pi * x[:, 1]))

    def beta(x):
        return np.column_stack([0.5 - x[:, 1], x[:, 0] - 0.5])

    def beta_grad(x):
        J = np.zeros((len(x), 2, 2))
        J[:, 0, 1] = -1.0
        J[:, 1, 0] = 1.0
        return J

    def f(x):
        gx, gy = grad(x)
        b = beta(x)
        return kappa * 2 * pi ** 2 * u(x) + b[:, 0] * gx + b[:, 1] * gy + u(x)

    data = AdrData(kappa=kappa, beta=beta, mu=1.0, f=f, zeta=1.0, beta_grad=beta_grad)
    return data, u, grad


# --------------------------------------------------------------------------
# local pieces

@dataclass
class _AdvectionPieces:
    RB: np.ndarray        # (n, nbk, N): Mk @ G_beta
    Gb: np.ndarray        # (n, nbk, N): G_beta
    upwind: np.ndarray    # (n, N, N): 1/2 sum_F (|b.n| (u_F - u_T), v_F - v_T)_F
    minus: np.ndarray     # (n, N, N): sum_F ((b.n)^- (u_F - u_T), v_F - v_T)_F
    mass_mu: np.ndarray   # (n, nbk, nbk)
    bnd_abs: np.ndarray   # (n, N, N): 1/2 (|b.n| u_F, v_F) on boundary faces
    bnd_plus: np.ndarray  # (n, N, N): ((b.n)^+ u_F, v_F) on boundary faces
    beta_T: np.ndarray    # (n,) sup |beta| on T
    bn_max: np.ndarray    # (n, m) sup |beta.n| on each face
    mu_max: np.ndarray    # (n,)


def _face_jump_values(g: LocalGroup, xf):
    """Values of v_F - v_T at face points as an operator (n, m, nqf, N)."""
    psi = g.face_basis(xf)
    phi = g.element_basis(xf, g.k)
    W = np.zeros(psi.shape[:3] + (g.N,))
    W[..., :g.nbk] = -phi
    for f in range(g.m):
        W[:, f, :, g.nbk + f * g.nbf: g.nbk + (f + 1) * g.nbf] = psi[:, f]
    face_only = np.zeros_like(W)
    for f in range(g.m):
        face_only[:, f, :, g.nbk + f * g.nbf: g.nbk + (f + 1) * g.nbf] = psi[:, f]
    return W, face_only


def advection_pieces(g: LocalGroup, data: AdrData, order: int) -> _AdvectionPieces:
    k, nbk, N = g.k, g.nbk, g.N
    xq, wq = g.element_quadrature(order)
    phi = g.element_basis(xq, k)
    dphi = g.element_basis(xq, k, derivative=1)
    bq = data.beta_at(xq)
    RB = np.zeros((g.n, nbk, N))
    RB[:, :, :nbk] = -np.einsum("eq,eqid,eqd,eqj->eij", wq, dphi, bq, phi)
    xf, wf = g.face_quadrature(order)
    bn = np.einsum("efqd,efd->efq", data.beta_at(xf), g.normals)
    phif = g.element_basis(xf, k)
    psi = g.face_basis(xf)
    RBf = np.einsum("efq,efq,efqi,efqj->eifj", wf, bn, phif, psi)
    RB[:, :, nbk:] = RBf.reshape(g.n, nbk, g.m * g.nbf)
    Gb = np.linalg.solve(g.Mk, RB)
    W, Fo = _face_jump_values(g, xf)
    upwind = 0.5 * np.einsum("efq,efqi,efqj->eij", wf * np.abs(bn), W, W)
    minus = np.einsum("efq,efqi,efqj->eij", wf * 0.5 * (np.abs(bn) - bn), W, W)
    wb = wf * g.boundary[..., None]
    bnd_abs = 0.5 * np.einsum("efq,efqi,efqj->eij", wb * np.abs(bn), Fo, Fo)
    bnd_plus = np.einsum("efq,efqi,efqj->eij", wb * 0.5 * (np.abs(bn) + bn), Fo, Fo)
    muq = data.mu_at(xq)
    mass_mu = np.einsum("eq,eqi,eqj->eij", wq * muq, phi, phi)
    bmod = np.sqrt((bq ** 2).sum(-1))
    V = g.space.mesh.vertices[g.loops]
    bv = np.sqrt((data.beta_at(V) ** 2).sum(-1))
    beta_T = np.maximum(bmod.max(1), bv.max(1))
    return _AdvectionPieces(RB, Gb, upwind, minus, mass_mu, bnd_abs, bnd_plus, beta_T,
                            np.abs(bn).max(-1), muq.max(1))


def advective_reconstruction(mesh: PolytopalMesh, T: int, k: int, beta, order: int | None = None):
    from .hho_core import LocalOperator, _single
    g, j = _single(mesh, T, k)
    order = 2 * k + 6 if order is None else order
    data = AdrData(kappa=0.0, beta=beta, mu=1.0)
    return LocalOperator(T, advection_pieces(g, data, order).Gb[j], f"P{k}(T)")


def nitsche_pieces(g: LocalGroup, kappa_T: np.ndarray, zeta: float):
    """Boundary Nitsche terms (n, N, N) of the owning elements, kappa included."""
    k = g.k
    xf, wf = g.face_quadrature(2 * k + 2)
    dphif = g.element_basis(xf, k + 1, derivative=1)
    dn = np.einsum("efqid,efd,eij->efqj", dphif, g.normals, g.P)
    _, Fo = _face_jump_values(g, xf)
    wb = wf * g.boundary[..., None] * kappa_T[:, None, None]
    A = -np.einsum("efq,efqi,efqj->eij", wb, Fo, dn)          # -(k grad p u.n, v_F)
    A += np.einsum("efq,efqi,efqj->eij", wb, dn, Fo)          # +(u_F, k grad p v.n)
    A += zeta * np.einsum("efq,efqi,efqj->eij", wb / g.hF[..., None], Fo, Fo)
    mass_b = np.einsum("efq,efqi,efqj->eij", wb / g.hF[..., None], Fo, Fo)
    return A, mass_b


def advective_reactive_local(g: LocalGroup, pieces: _AdvectionPieces) -> np.ndarray:
    """Local advective-reactive matrix (rows: test, cols: trial), no boundary term."""
    nbk = g.nbk
    A = pieces.upwind.copy()
    A[:, :nbk, :] += 0.5 * pieces.RB
    A[:, :, :nbk] -= 0.5 * pieces.RB.transpose(0, 2, 1)
    A[:, :nbk, :nbk] += pieces.mass_mu
    return A


# --------------------------------------------------------------------------
# global system

class AdrDiscretization:
    def __init__(self, mesh: PolytopalMesh, k: int, data: AdrData, variant: str = "hho",
                 order: int | None = None, space: HHOSpace | None = None):
        self.mesh, self.k, self.data = mesh, k, data
        self.space = HHOSpace(mesh, k, variant) if space is None else space
        self.order = 2 * k + 6 if order is None else order
        kap = data.kappa_elements(mesh)
        self.kappa = kap
        self.pieces, self.diff_locals, self.adv_locals, self.nitsche_mass = [], [], [], []
        for g in self.space.groups:
            pc = advection_pieces(g, data, self.order)
            kT = kap[g.elements]
            Ad = kT[:, None, None] * g.local_form()
            Ad = 0.5 * (Ad + Ad.transpose(0, 2, 1))
            Nb, mb = nitsche_pieces(g, kT, data.zeta)
            self.pieces.append(pc)
            self.diff_locals.append(Ad + Nb)
            self.nitsche_mass.append(mb)
            self.adv_locals.append(advective_reactive_local(g, pc) + pc.bnd_abs)

    def local_matrices(self):
        return [a + b for a, b in zip(self.diff_locals, self.adv_locals)]

    def local_rhs(self, f):
        loads = element_loads(self.space, f, self.order)
        return [np.concatenate([l, np.zeros((g.n, g.N - g.nbk))], axis=1)
                for g, l in zip(self.space.groups, loads)]

    def global_matrix(self, which: str = "full"):
        mats = {"full": self.local_matrices(), "diffusive": self.diff_locals,
                "advective": self.adv_locals}[which]
        A, _ = assemble_global(self.space, mats)
        return A

    def reformulated_advective_matrix(self):
        """Equivalent upwind form: -(u_T, G_b v) + ((b.n)^-(u_F-u_T), v_F-v_T) + mu + (b.n)^+ on the boundary."""
        mats = []
        for g, pc in zip(self.space.groups, self.pieces):
            A = pc.minus + pc.bnd_plus
            A[:, :, :g.nbk] -= pc.RB.transpose(0, 2, 1)
            A[:, :g.nbk, :g.nbk] += pc.mass_mu
            mats.append(A)
        A, _ = assemble_global(self.space, mats)
        return A

    def solve(self, f=None, condensed: bool = True) -> DofVector:
        f = self.data.f if f is None else f
        mats, rhs = self.local_matrices(), self.local_rhs(f)
        if condensed:
            cs = condense(self.space, mats, rhs, symmetric=False)
            self.last_system = cs
            return DofVector(self.space, cs.solve())
        A, b = assemble_global(self.space, mats, rhs)
        from .linsolve import solve_general
        return DofVector(self.space, solve_general(SparseSystem(A, b)))

    # diagnostics -------------------------------------------------------
    def lipschitz(self) -> np.ndarray:
        """L_{beta,T} = max_i ||grad beta_i||_inf(T)."""
        out = np.zeros(self.mesh.n_elements)
        for g in self.space.groups:
            xq, _ = g.element_quadrature(self.order)
            if self.data.beta_grad is not None:
                J = np.asarray(self.data.beta_grad(xq.reshape(-1, 2))).reshape(xq.shape[:2] + (2, 2))
            else:
                d = 1e-6 * g.hT[:, None, None]
                J = np.zeros(xq.shape[:2] + (2, 2))
                for c in range(2):
                    e = np.zeros(2)
                    e[c] = 1.0
                    J[..., :, c] = (self.data.beta_at(xq + d * e) - self.data.beta_at(xq - d * e)) / (2 * d)
            out[g.elements] = np.sqrt((J ** 2).sum(-1)).max(axis=(1, 2))
        return out

    def reference_time(self) -> np.ndarray:
        mu_max = np.zeros(self.mesh.n_elements)
        for g, pc in zip(self.space.groups, self.pieces):
            mu_max[g.elements] = pc.mu_max
        return 1.0 / np.maximum(mu_max, self.lipschitz())

    def reference_velocity(self) -> np.ndarray:
        out = np.zeros(self.mesh.n_elements)
        for g, pc in zip(self.space.groups, self.pieces):
            out[g.elements] = pc.beta_T
        return out

    def stability_condition(self) -> np.ndarray:
        """Per element: h_T max(L_beta, mu0) <= beta_T."""
        h = self.mesh.element_diameter
        return h * np.maximum(self.lipschitz(), self.data.mu0) <= self.reference_velocity()

    def coercivity_constant(self) -> float:
        return float(np.minimum(1.0, self.reference_time() * self.data.mu0).min())


@dataclass
class AdrNorms:
    peclet: np.ndarray
    kappa: float
    beta_mu: float
    flat: float
    sharp: float


def _qf(mats, space, v):
    tot = 0.0
    for g, A in zip(space.groups, mats):
        loc = g.gather(v)
        tot += np.einsum("ei,eij,ej->", loc, A, loc)
    return tot


def norm_matrices(disc: AdrDiscretization):
    """Local Gram matrices of the kappa-, (beta,mu)- and G_beta parts of the norms."""
    tau = disc.reference_time()
    bT = disc.reference_velocity()
    kap, sharp = [], []
    bm = []
    for g, pc, mb in zip(disc.space.groups, disc.pieces, disc.nitsche_mass):
        kT = disc.kappa[g.elements]
        A = g.local_form()
        kap.append(kT[:, None, None] * 0.5 * (A + A.transpose(0, 2, 1)) + mb)
        B = pc.upwind + pc.bnd_abs
        B[:, :g.nbk, :g.nbk] += g.Mk / tau[g.elements][:, None, None]
        bm.append(B)
        be = bT[g.elements]
        w = np.where(be > 0, g.hT / np.where(be > 0, be, 1.0), 0.0)
        sharp.append(w[:, None, None] * np.einsum("eki,ekl,elj->eij", pc.Gb, g.Mk, pc.Gb))
    return kap, bm, sharp


def peclet_and_norms(disc: AdrDiscretization, v: DofVector) -> AdrNorms:
    mesh = disc.mesh
    kap_el = disc.kappa
    kF = np.full(mesh.n_faces, np.inf)
    for s in range(2):
        T = mesh.face_elements[:, s]
        ok = T >= 0
        kF[ok] = np.minimum(kF[ok], kap_el[T[ok]])
    pe = np.zeros(mesh.n_elements)
    for g, pc in zip(disc.space.groups, disc.pieces):
        num = g.hF * pc.bn_max
        kf = kF[g.faces]
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(kf > 0, num / np.where(kf > 0, kf, 1.0), np.inf)
        pe[g.elements] = r.max(1)
    K, B, S = norm_matrices(disc)
    sp = disc.space
    nk = _qf(K, sp, v.values)
    nb = _qf(B, sp, v.values)
    ns = _qf(S, sp, v.values)
    flat = nk + nb
    return AdrNorms(pe, float(np.sqrt(max(nk, 0))), float(np.sqrt(max(nb, 0))),
                    float(np.sqrt(max(flat, 0))), float(np.sqrt(max(flat + ns, 0))))


def sharp_error(disc: AdrDiscretization, uh: DofVector, exact) -> float:
    Iu = reduce_global(disc.space, exact, disc.order)
    return peclet_and_norms(disc, DofVector(disc.space, Iu.values - uh.values)).sharp


def assemble_solve_adr(mesh: PolytopalMesh, k: int, data: AdrData, f=None) -> DofVector:
    return AdrDiscretization(mesh, k, data).solve(f)


def diffusive_nitsche_form(mesh: PolytopalMesh, k: int, kappa, zeta: float = 1.0):
    """Global sparse matrix of the weakly-constrained diffusive form."""
    data = AdrData(kappa=kappa, zeta=zeta)
    disc = AdrDiscretization(mesh, k, data)
    return disc.global_matrix("diffusive")
