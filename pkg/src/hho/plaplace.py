"""p-Laplacian: nonlinear residual and Jacobian assembly, Newton solver, errors.

The discrete problem uses the gradient reconstruction G_T inside the flux
law sigma(tau) = |tau|^{p-2} tau, plus the face-residual stabilization

    s_T(u, v) = sum_F h_F^{1-p} int_F |D_F u|^{p-2} D_F u D_F v,
    D_F = delta_TF - delta_T|_F.

Newton's method runs on the statically condensed linearised system.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .hho_core import (DofVector, FaceResidualQuadrature, HHOSpace, _call, global_reconstruct,
                       norms, reduce_faces, reduce_global)
from .linsolve import SparseSystem
from .mesh import PolytopalMesh
from .poisson import condense, solve_poisson

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


@dataclass
class PlapConfig:
    p: float = 2.0
    eps: float = 1e-10
    tol: float = 1e-9
    max_iter: int = 50
    max_halvings: int = 30
    rescale: bool = True        # scalar energy minimisation of the p=2 initial guess
    shift: float = 1e-10        # relative diagonal shift of the element blocks (p > 2)

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError("p must be > 1")

    @property
    def p_dual(self) -> float:
        return self.p / (self.p - 1.0)


# --------------------------------------------------------------------------
# flux law

def _modulus(tau, eps):
    return np.sqrt((np.asarray(tau) ** 2).sum(-1) + eps ** 2)


def sigma(tau, p: float, eps: float = 0.0) -> np.ndarray:
    """|tau|^{p-2} tau (with |tau| regularised by eps), sigma(0) = 0."""
    if not p > 1:
        raise ValueError("p must be > 1")
    tau = np.asarray(tau, dtype=float)
    r = _modulus(tau, eps)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.where(r > 0, r ** (p - 2), 0.0)
    return c[..., None] * tau


def dsigma(tau, p: float, eps: float = 0.0) -> np.ndarray:
    """Jacobian |tau|^{p-2} I + (p-2)|tau|^{p-4} tau (x) tau, shape (..., 2, 2)."""
    if not p > 1:
        raise ValueError("p must be > 1")
    tau = np.asarray(tau, dtype=float)
    r = _modulus(tau, eps)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(r > 0, r ** (p - 2), 0.0)
        b = np.where(r > 0, (p - 2) * r ** (p - 4), 0.0)
    return a[..., None, None] * np.eye(2) + b[..., None, None] * tau[..., :, None] * tau[..., None, :]


def _scalar_law(D, p, eps):
    """|D|^{p-2} D and its derivative, regularised like sigma."""
    r = np.sqrt(D ** 2 + eps ** 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(r > 0, r ** (p - 2), 0.0)
        da = np.where(r > 0, r ** (p - 2) + (p - 2) * r ** (p - 4) * D ** 2, 0.0)
    if eps == 0.0:
        small = np.abs(D) <= 1e-14
        a = np.where(small, 0.0, a)
        da = np.where(small, 0.0, da)
    return a * D, da


# --------------------------------------------------------------------------
# assembly

@dataclass
class _GroupData:
    Gq: np.ndarray       # (n, nq, 2, N) reconstructed gradient at quadrature points
    wq: np.ndarray       # (n, nq)
    Dq: np.ndarray       # (n, m, nqf, N) face residuals at face points
    wf: np.ndarray       # (n, m, nqf) weights times h_F^{1-p}
    load: np.ndarray     # (n, N) int f v_T (element part only)


class PlapProblem:
    """Residual, Jacobian and energy of the discrete p-Laplacian on one mesh."""

    def __init__(self, mesh: PolytopalMesh, k: int, f, p: float, g=None, order: int | None = None,
                 space: HHOSpace | None = None):
        if not p > 1:
            raise ValueError("p must be > 1")
        self.space = HHOSpace(mesh, k) if space is None else space
        self.mesh, self.k, self.p, self.f, self.g = mesh, k, float(p), f, g
        order = 2 * k + 6 if order is None else order
        self.data = []
        for grp in self.space.groups:
            xq, wq = grp.element_quadrature(order)
            phi = grp.element_basis(xq, k)
            Gq = np.einsum("eqi,edij->eqdj", phi, grp.G)
            fq = FaceResidualQuadrature(grp, order)
            wf = fq.weights * (grp.hF ** (1.0 - p))[..., None]
            load = np.zeros((grp.n, grp.N))
            load[:, :grp.nbk] = np.einsum("eq,eqi->ei", wq * _call(f, xq), phi)
            self.data.append(_GroupData(Gq, wq, fq.values, wf, load))
        sp = self.space
        self.fixed = sp.boundary_face_dofs - sp.n_element_dofs
        self.fixed_values = (np.zeros(len(self.fixed)) if g is None else
                             reduce_faces(sp, g, faces=mesh.boundary_faces).ravel())
        free = np.ones(sp.ndofs, dtype=bool)
        free[sp.boundary_face_dofs] = False
        self.free = free

    # local pieces -------------------------------------------------------
    def local_residuals(self, values, eps=0.0):
        out = []
        for grp, d in zip(self.space.groups, self.data):
            loc = grp.gather(values)
            gu = np.einsum("eqdj,ej->eqd", d.Gq, loc)
            s = sigma(gu, self.p, eps)
            r = np.einsum("eq,eqd,eqdj->ej", d.wq, s, d.Gq)
            Du = np.einsum("efqj,ej->efq", d.Dq, loc)
            law, _ = _scalar_law(Du, self.p, eps)
            r += np.einsum("efq,efq,efqj->ej", d.wf, law, d.Dq)
            out.append(r - d.load)
        return out

    def local_jacobians(self, values, eps=0.0):
        out = []
        for grp, d in zip(self.space.groups, self.data):
            loc = grp.gather(values)
            gu = np.einsum("eqdj,ej->eqd", d.Gq, loc)
            ds = dsigma(gu, self.p, eps)
            J = np.einsum("eq,eqai,eqab,eqbj->eij", d.wq, d.Gq, ds, d.Gq)
            Du = np.einsum("efqj,ej->efq", d.Dq, loc)
            _, dlaw = _scalar_law(Du, self.p, eps)
            J += np.einsum("efq,efqi,efqj->eij", d.wf * dlaw, d.Dq, d.Dq)
            out.append(0.5 * (J + J.transpose(0, 2, 1)))
        return out

    # global views -------------------------------------------------------
    def residual(self, values, eps=0.0) -> np.ndarray:
        """Global residual over all DOFs (boundary rows included, not masked)."""
        r = np.zeros(self.space.ndofs)
        for grp, rl in zip(self.space.groups, self.local_residuals(values, eps)):
            np.add.at(r, grp.dofs.ravel(), rl.ravel())
        return r

    def residual_norm(self, values, eps=0.0) -> float:
        return float(np.linalg.norm(self.residual(values, eps)[self.free]))

    def jacobian(self, values, eps=0.0) -> SparseSystem:
        from .poisson import assemble_global
        A, _ = assemble_global(self.space, self.local_jacobians(values, eps))
        return SparseSystem(A, -self.residual(values, eps), symmetric=True)

    def energy(self, values) -> float:
        p = self.p
        total = 0.0
        for grp, d in zip(self.space.groups, self.data):
            loc = grp.gather(values)
            gu = np.einsum("eqdj,ej->eqd", d.Gq, loc)
            total += (d.wq * np.sqrt((gu ** 2).sum(-1)) ** p).sum() / p
            Du = np.einsum("efqj,ej->efq", d.Dq, loc)
            total += (d.wf * np.abs(Du) ** p).sum() / p
            total -= np.einsum("ej,ej->", d.load, loc)
        return float(total)

    def source_norm(self) -> float:
        """||f||_{L^{p'}}."""
        q = self.p / (self.p - 1.0)
        total = 0.0
        for grp in self.space.groups:
            xq, wq = grp.element_quadrature(2 * self.k + 6)
            total += (wq * np.abs(_call(self.f, xq)) ** q).sum()
        return float(total ** (1.0 / q))

    def l2_source_norm(self) -> float:
        total = 0.0
        for grp in self.space.groups:
            xq, wq = grp.element_quadrature(2 * self.k + 6)
            total += (wq * _call(self.f, xq) ** 2).sum()
        return float(np.sqrt(total))


def assemble_residual(u: DofVector, mesh: PolytopalMesh, k: int, f, p: float, eps: float = 0.0) -> np.ndarray:
    return PlapProblem(mesh, k, f, p, space=u.space).residual(u.values, eps)


def assemble_jacobian(u: DofVector, mesh: PolytopalMesh, k: int, f, p: float, eps: float = 0.0) -> SparseSystem:
    return PlapProblem(mesh, k, f, p, space=u.space).jacobian(u.values, eps)


# --------------------------------------------------------------------------
# Newton

@dataclass
class NewtonResult:
    u: DofVector
    iterations: int
    residuals: list
    energies: list
    halvings: list
    rescale_factor: float = 1.0
    final_residual: float = 0.0        # un-regularised
    apriori_constant: float | None = None   # ||u_h||_{1,p,h} / ||f||_{L^p'}^{1/(p-1)} (homogeneous data)


def _initial_guess(prob: PlapProblem, config: PlapConfig):
    """p = 2 solve, split as u_g + u_f: u_g carries the boundary data with no
    source, u_f the source with zero boundary data. For p != 2 the source part
    is rescaled by a 1D minimisation of the (convex) discrete energy, which
    fixes its magnitude when |f| is far from the p = 2 scaling."""
    sp = prob.space
    zero = lambda x: np.zeros(len(x))
    ug = solve_poisson(prob.mesh, prob.k, zero, g=prob.g, space=sp).values if prob.g is not None \
        else np.zeros(sp.ndofs)
    uf = solve_poisson(prob.mesh, prob.k, prob.f, space=sp).values
    lam = 1.0
    if config.rescale and config.p != 2.0 and np.any(uf):
        res = minimize_scalar(lambda t: prob.energy(ug + t * uf), bracket=(0.0, 1.0), tol=1e-8)
        if res.success and prob.energy(ug + res.x * uf) < prob.energy(ug + uf):
            lam = float(res.x)
    return ug + lam * uf, lam


def newton_solve(mesh: PolytopalMesh, k: int, f, p: float, config: PlapConfig | None = None, g=None,
                 space: HHOSpace | None = None) -> NewtonResult:
    config = PlapConfig(p=p) if config is None else config
    prob = PlapProblem(mesh, k, f, p, g=g, space=space)
    sp = prob.space
    x, lam = _initial_guess(prob, config)
    eps = config.eps if p < 2 else 0.0
    scale = 1.0 + prob.l2_source_norm()
    rnorm = prob.residual_norm(x, eps)
    residuals, energies, halvings = [rnorm], [prob.energy(x)], []
    it = 0
    while rnorm > config.tol * scale:
        if it >= config.max_iter:
            raise ConvergenceError(f"Newton did not converge in {config.max_iter} iterations "
                                   f"(residual {rnorm:.3e})", residuals)
        J = prob.local_jacobians(x, eps)
        if p > 2 and config.shift > 0:
            # for p > 2 the element-constant mode is controlled only by the
            # stabilization, whose derivative degenerates as the face residuals
            # vanish; a tiny shift keeps the element blocks invertible
            for grp, Jg in zip(sp.groups, J):
                i = np.arange(grp.nbk)
                Jg[:, i, i] += config.shift * np.abs(Jg).max(axis=(1, 2))[:, None]
        R = prob.local_residuals(x, eps)
        cs = condense(sp, J, [-r for r in R], prob.fixed, np.zeros(len(prob.fixed)), symmetric=True)
        dx = cs.solve()
        step, nh = 1.0, 0
        while True:
            xn = x + step * dx
            rn = prob.residual_norm(xn, eps)
            if rn < rnorm or nh >= config.max_halvings:
                break
            step *= 0.5
            nh += 1
        if not rn < rnorm:
            raise ConvergenceError("line search failed to decrease the residual", residuals)
        x, rnorm = xn, rn
        it += 1
        residuals.append(rnorm)
        energies.append(prob.energy(x))
        halvings.append(nh)
        log.debug("newton %d: residual %.3e step %.3g", it, rnorm, step)
    final = prob.residual_norm(x, 0.0)
    if final > config.tol * scale:
        log.warning("un-regularised residual %.3e exceeds the tolerance %.3e", final, config.tol * scale)
    u = DofVector(sp, x, dirichlet=g is None)
    const = None
    fn = prob.source_norm()
    if g is None and fn > 0:
        const = norms(u, p)[0] / fn ** (1.0 / (p - 1.0))
    return NewtonResult(u, it, residuals, energies, halvings, lam, final, const)


# --------------------------------------------------------------------------
# errors and benchmark

@dataclass
class PlapErrorReport:
    h: float
    ndof: int
    discrete: float        # ||I_h u - u_h||_{1,p,h}
    grad_recon: float      # ||grad_h(p_h u_h - u)||_{L^p}
    stab: float            # |u_h|_{s,h}


def plap_errors(u: DofVector, exact, grad_exact, p: float, order: int | None = None) -> PlapErrorReport:
    space = u.space
    k = space.k
    order = 2 * k + 6 if order is None else order
    Iu = reduce_global(space, exact, order)
    disc, _ = norms(DofVector(space, Iu.values - u.values), p, order)
    ph = global_reconstruct(u)
    mesh = space.mesh
    from .polycalc import eval_monomials, element_quadrature_batch
    tot = 0.0
    for m, elems in mesh.face_count_groups().items():
        xq, wq = element_quadrature_batch(mesh, elems, order)
        dv = np.einsum("eqid,ei->eqd", eval_monomials(xq, mesh.element_centroid[elems][:, None],
                                                      mesh.element_diameter[elems][:, None], k + 1, 1),
                       ph.coeffs[elems])
        gx, gy = grad_exact(xq.reshape(-1, 2))
        ge = np.stack([np.reshape(gx, wq.shape), np.reshape(gy, wq.shape)], -1)
        tot += (wq * np.sqrt(((dv - ge) ** 2).sum(-1)) ** p).sum()
    stab = 0.0
    for grp in space.groups:
        fq = FaceResidualQuadrature(grp, order)
        Du = np.einsum("efqj,ej->efq", fq.values, grp.gather(u.values))
        stab += (fq.weights * (grp.hF ** (1.0 - p))[..., None] * np.abs(Du) ** p).sum()
    return PlapErrorReport(mesh.h, space.n_condensed_dofs, disc, float(tot ** (1.0 / p)),
                           float(stab ** (1.0 / p)))


def exp_benchmark(p: float):
    """u = exp(x + pi y) and the matching source f = -div(|grad u|^{p-2} grad u)."""
    pi = np.pi
    c = (1.0 + pi ** 2) ** (p / 2.0)

    def u(x):
        return np.exp(x[:, 0] + pi * x[:, 1])

    def grad(x):
        e = u(x)
        return e, pi * e

    def f(x):
        return -(p - 1.0) * c * u(x) ** (p - 1.0)

    return u, grad, f
