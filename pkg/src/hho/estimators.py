"""Residual-based a posteriori estimators and an adaptive refinement loop.

The energy error ||grad_h(p_h u_h - u)|| is bounded by

    ( sum_T eta_nc^2 + (eta_res + eta_sta)^2 )^{1/2}

with a nonconformity part measured against a conforming node average of
the reconstruction, an oscillation-type residual part and a part built
from the face residuals of the stabilization.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .hho_core import BrokenPolynomial, DofVector, HHOSpace, _call, global_reconstruct
from .mesh import PolytopalMesh, SimplicialSubmesh, l_shaped_mesh, refine, simplicial_submesh
from .polycalc import UnsupportedOrderError, eval_monomials, monomial_exponents, triangle_quadrature
from .poisson import broken_errors, solve_poisson

log = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# node averaging

def lagrange_barycentric(l: int) -> np.ndarray:
    """Barycentric coordinates (nloc, 3) of the degree-l Lagrange nodes."""
    ex = monomial_exponents(l)
    lam = np.empty((len(ex), 3))
    lam[:, 1] = ex[:, 0] / l
    lam[:, 2] = ex[:, 1] / l
    lam[:, 0] = 1.0 - lam[:, 1] - lam[:, 2]
    return lam


@dataclass
class ConformingField:
    """Continuous piecewise polynomial of degree ``degree`` on a simplicial submesh."""
    submesh: SimplicialSubmesh
    degree: int
    coeffs: np.ndarray          # (nt, nloc) scaled-monomial coefficients per triangle
    nodes: np.ndarray           # (n_nodes, 2) global Lagrange nodes
    node_values: np.ndarray     # (n_nodes,)
    local_nodes: np.ndarray     # (nt, nloc) node indices per triangle

    @property
    def centers(self):
        return self.submesh.vertices[self.submesh.triangles].mean(1)

    @property
    def scales(self):
        return self.submesh.diameter

    def evaluate(self, x, derivative=0):
        """Values (or gradients) at points x of shape (nt, nq, 2)."""
        c = self.centers[:, None]
        h = self.scales[:, None]
        B = eval_monomials(x, c, h, self.degree, derivative)
        if derivative == 0:
            return np.einsum("tqi,ti->tq", B, self.coeffs)
        return np.einsum("tqid,ti->tqd", B, self.coeffs)

    def max_interface_mismatch(self, npts: int = 4) -> float:
        """Largest value jump across shared submesh edges, sampled at a few points."""
        sub = self.submesh
        tris = sub.triangles
        s = np.linspace(0.1, 0.9, npts)
        edges = {}
        worst = 0.0
        for t, tri in enumerate(tris):
            for i in range(3):
                a, b = tri[(i + 1) % 3], tri[(i + 2) % 3]
                key = (min(a, b), max(a, b))
                edges.setdefault(key, []).append(t)
        for (a, b), ts in edges.items():
            if len(ts) != 2:
                continue
            pts = sub.vertices[a] + s[:, None] * (sub.vertices[b] - sub.vertices[a])
            vals = []
            for t in ts:
                B = eval_monomials(pts, self.centers[t], self.scales[t], self.degree)
                vals.append(B @ self.coeffs[t])
            worst = max(worst, float(np.abs(vals[0] - vals[1]).max()))
        return worst


def node_average(w: BrokenPolynomial, l: int | None = None, submesh: SimplicialSubmesh | None = None,
                 boundary=None) -> ConformingField:
    """Average the Lagrange-node values of ``w`` over the adjacent submesh triangles.

    Nodes on the domain boundary take the value ``boundary(x)`` (zero by default).
    """
    l = w.degree if l is None else l
    if l < 1:
        raise UnsupportedOrderError("node averaging needs degree >= 1")
    mesh = w.mesh
    sub = simplicial_submesh(mesh) if submesh is None else submesh
    lam = lagrange_barycentric(l)
    tri_xy = sub.vertices[sub.triangles]                      # (nt, 3, 2)
    pts = np.einsum("na,tad->tnd", lam, tri_xy)               # (nt, nloc, 2)
    par = sub.parent
    vals = np.einsum("tni,ti->tn", eval_monomials(pts, mesh.element_centroid[par][:, None],
                                                  mesh.element_diameter[par][:, None], w.degree),
                     w.coeffs[par])
    lo, hi = mesh.vertices.min(0), mesh.vertices.max(0)
    scale = float((hi - lo).max())
    keys = np.round((pts.reshape(-1, 2) - lo) / scale, 9)
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = inv.reshape(pts.shape[:2])
    count = np.bincount(inv.ravel(), minlength=len(uniq))
    avg = np.bincount(inv.ravel(), weights=vals.ravel(), minlength=len(uniq)) / count
    nodes = np.zeros((len(uniq), 2))
    nodes[inv.ravel()] = pts.reshape(-1, 2)

    on_bdry = np.zeros(len(uniq), dtype=bool)
    for i in range(3):
        ef = sub.edge_face[:, i]
        hit = (ef >= 0)
        hit[hit] = mesh.boundary_face[ef[hit]]
        local = np.isclose(lam[:, i], 0.0)
        on_bdry[inv[np.ix_(hit, local)].ravel()] = True
    avg[on_bdry] = 0.0 if boundary is None else _call(boundary, nodes[on_bdry][None])[0]

    centers = tri_xy.mean(1)
    V = eval_monomials(pts, centers[:, None], sub.diameter[:, None], l)
    coeffs = np.linalg.solve(V, avg[inv][..., None])[..., 0]
    return ConformingField(sub, l, coeffs, nodes, avg, inv)


# --------------------------------------------------------------------------
# local estimators

def poincare_constant(mesh: PolytopalMesh, T: int) -> float:
    return 1.0 / np.pi if mesh.is_convex(T) else 1.0


def friedrichs_constant(mesh: PolytopalMesh, T: int, cp: float | None = None) -> float:
    cp = poincare_constant(mesh, T) if cp is None else cp
    perim = mesh.face_area[mesh.element_faces[T]].sum()
    return cp * (mesh.element_diameter[T] * perim / mesh.element_area[T]) * (1.0 + cp)


@dataclass
class EstimatorField:
    eta_nc: np.ndarray
    eta_res: np.ndarray
    eta_sta: np.ndarray
    c_p: np.ndarray
    c_f: np.ndarray
    heuristic_cf: bool = False      # True when C_F was applied to non-triangular elements
    error: float | None = None      # ||grad_h(p_h u_h - u)|| when the exact solution is known

    @property
    def local(self) -> np.ndarray:
        """Per-element squared contribution eta_nc^2 + (eta_res + eta_sta)^2."""
        return self.eta_nc ** 2 + (self.eta_res + self.eta_sta) ** 2

    @property
    def bound(self) -> float:
        return float(np.sqrt(self.local.sum()))

    @property
    def effectivity(self) -> float | None:
        if self.error is None:
            return None
        return self.bound / self.error if self.error > 0 else np.inf


def local_estimators(u: DofVector, f, ustar: ConformingField | None = None, variant: str | None = None,
                     order: int | None = None, boundary=None) -> EstimatorField:
    space = u.space
    mesh = space.mesh
    k = space.k
    order = 2 * k + 6 if order is None else order
    ph = global_reconstruct(u)
    if ustar is None:
        ustar = node_average(ph, k + 1, boundary=boundary)
    nT = mesh.n_elements

    # nonconformity: gradient mismatch on each submesh triangle, gathered per element
    sub = ustar.submesh
    xq, wq = triangle_quadrature(sub.vertices[sub.triangles], 2 * (k + 1) + 2)
    par = sub.parent
    dp = np.einsum("tqid,ti->tqd", eval_monomials(xq, mesh.element_centroid[par][:, None],
                                                  mesh.element_diameter[par][:, None], k + 1, 1),
                   ph.coeffs[par])
    diff = dp - ustar.evaluate(xq, 1)
    eta_nc = np.sqrt(np.bincount(par, weights=(wq * (diff ** 2).sum(-1)).sum(1), minlength=nT))

    cp = np.array([poincare_constant(mesh, T) for T in range(nT)])
    cf = np.array([friedrichs_constant(mesh, T, cp[T]) for T in range(nT)])
    eta_res = np.zeros(nT)
    eta_sta = np.zeros(nT)
    for g in space.groups:
        loc = g.gather(u.values)
        lap = np.einsum("eij,ej->ei", g.laplacian_of_reconstruction(), loc)
        xe, we = g.element_quadrature(order)
        r = _call(f, xe) + np.einsum("eqi,ei->eq", g.element_basis(xe, k + 1), lap)
        mean = (we * r).sum(1) / we.sum(1)
        osc = np.sqrt((we * (r - mean[:, None]) ** 2).sum(1))
        E = g.elements
        eta_res[E] = cp[E] * g.hT * osc
        R = np.einsum("efik,ek->efi", g.boundary_residual_operator(variant), loc)
        rr = np.einsum("efi,efij,efj->e", R, g.MF, R)
        eta_sta[E] = np.sqrt(cf[E] * g.hT * np.maximum(rr, 0.0))
    heuristic = any(len(fl) != 3 for fl in mesh.element_faces)
    return EstimatorField(eta_nc, eta_res, eta_sta, cp, cf, heuristic_cf=heuristic)


def effectivity(est: EstimatorField, error: float) -> float:
    est.error = error
    return est.effectivity


# --------------------------------------------------------------------------
# adaptivity

@dataclass
class Problem:
    """Poisson problem data: source, optional Dirichlet data and exact solution."""
    name: str
    mesh: PolytopalMesh
    f: object
    g: object = None
    exact: object = None
    grad: object = None


def lshape_problem(n: int = 2) -> Problem:
    """Harmonic u = r^{2/3} sin(2 theta/3) on the L-shaped domain (re-entrant corner at 0)."""
    a = 2.0 / 3.0

    def polar(x):
        r = np.hypot(x[:, 0], x[:, 1])
        th = np.mod(np.arctan2(x[:, 1], x[:, 0]), 2 * np.pi)
        return r, th

    def u(x):
        r, th = polar(x)
        return r ** a * np.sin(a * th)

    def grad(x):
        r, th = polar(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            c = np.where(r > 0, a * r ** (a - 1), 0.0)
        return c * np.sin((a - 1) * th), c * np.cos((a - 1) * th)

    def f(x):
        return np.zeros(len(x))

    return Problem("lshape", l_shaped_mesh(n), f, g=u, exact=u, grad=grad)


def dorfler_mark(eta2: np.ndarray, theta: float) -> np.ndarray:
    """Smallest set of elements carrying a fraction ``theta`` of sum(eta2)."""
    if not 0 < theta <= 1:
        raise ValueError("theta must lie in (0, 1]")
    order = np.argsort(-eta2, kind="stable")
    if theta >= 1.0:
        return np.sort(order)
    cum = np.cumsum(eta2[order])
    n = int(np.searchsorted(cum, theta * cum[-1] * (1 - 1e-14))) + 1
    return np.sort(order[:n])


@dataclass
class AdaptStep:
    iteration: int
    mesh: PolytopalMesh
    u: DofVector
    estimator: EstimatorField
    ndof: int
    error: float | None
    marked: np.ndarray = field(repr=False, default=None)


def adapt_loop(problem: Problem, k: int, theta: float = 0.5, max_iter: int = 10, tol: float = 0.0,
               variant: str = "hho", max_ndof: int | None = None) -> list[AdaptStep]:
    mesh = problem.mesh
    steps = []
    for it in range(max_iter):
        space = HHOSpace(mesh, k, variant)
        u = solve_poisson(mesh, k, problem.f, variant, g=problem.g, space=space)
        est = local_estimators(u, problem.f, boundary=problem.g)
        err = None
        if problem.exact is not None:
            _, err = broken_errors(global_reconstruct(u), problem.exact, problem.grad, 2 * k + 6)
            est.error = err
        marked = dorfler_mark(est.local, theta)
        steps.append(AdaptStep(it, mesh, u, est, space.n_condensed_dofs, err, marked))
        log.info("adapt %d: ndof=%d eta=%.3e err=%s", it, space.n_condensed_dofs, est.bound, err)
        if est.bound <= tol or it == max_iter - 1:
            break
        if max_ndof is not None and space.n_condensed_dofs >= max_ndof:
            break
        mesh, _ = refine(mesh, marked)
    return steps


def uniform_loop(problem: Problem, k: int, levels: int, variant: str = "hho") -> list[AdaptStep]:
    """Same as ``adapt_loop`` with every element marked."""
    return adapt_loop(problem, k, theta=1.0, max_iter=levels, variant=variant)


def ndof_slope(steps: list[AdaptStep], last: int = 4) -> float:
    """Least-squares slope of log(error) against log(N_dof) over the last steps."""
    n = np.array([s.ndof for s in steps], float)[-last:]
    e = np.array([s.error for s in steps], float)[-last:]
    return float(np.polyfit(np.log(n), np.log(e), 1)[0])


ESTIMATOR_CSV_HEADER = ["iter", "ndof", "energy_error", "eta_total", "effectivity"]


def estimator_rows(steps: list[AdaptStep]) -> list[list]:
    return [[s.iteration, s.ndof, s.error, s.estimator.bound, s.estimator.effectivity] for s in steps]
