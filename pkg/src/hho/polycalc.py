"""Scaled monomial bases, quadrature on polygons and faces, Gram matrices and
the L2 / elliptic projectors on local polynomial spaces.

Element integrals always go through the centroid-fan triangulation of the
element; face integrals use Gauss-Legendre on the segment.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import cho_factor, cho_solve, eigh
from scipy.special import roots_jacobi, roots_legendre

from .mesh import PolytopalMesh

MAX_QUADRATURE_ORDER = 60


class UnsupportedOrderError(ValueError):
    pass


class IllConditionedBasisError(np.linalg.LinAlgError):
    pass


# --------------------------------------------------------------------------
# monomials

def dim_poly(degree: int, d: int = 2) -> int:
    if degree < 0:
        return 0
    return (degree + 1) * (degree + 2) // 2 if d == 2 else degree + 1


@lru_cache(maxsize=None)
def monomial_exponents(degree: int) -> np.ndarray:
    """Exponents (a, b) of x^a y^b ordered by total degree; P^l is a prefix."""
    out = [(t - b, b) for t in range(degree + 1) for b in range(t + 1)]
    return np.array(out, dtype=np.int64).reshape(-1, 2)


def _powers(z, degree):
    p = np.empty(z.shape + (degree + 1,))
    p[..., 0] = 1.0
    for i in range(1, degree + 1):
        p[..., i] = p[..., i - 1] * z
    return p


def eval_monomials(x, center, h, degree, derivative: int = 0):
    """Scaled monomials ((x - center)/h)^alpha at points ``x``.

    ``x`` has shape (..., 2); ``center`` and ``h`` must broadcast against
    ``x[..., 0]``. ``derivative=0`` gives (..., nb), ``1`` the gradients
    (..., nb, 2).
    """
    x = np.asarray(x, dtype=float)
    center = np.asarray(center, dtype=float)
    h = np.asarray(h, dtype=float)
    X = (x[..., 0] - center[..., 0]) / h
    Y = (x[..., 1] - center[..., 1]) / h
    ex = monomial_exponents(degree)
    a, b = ex[:, 0], ex[:, 1]
    PX, PY = _powers(X, degree), _powers(Y, degree)
    if derivative == 0:
        return PX[..., a] * PY[..., b]
    if derivative == 1:
        hh = h[..., None]
        dx = a * PX[..., np.maximum(a - 1, 0)] * PY[..., b] / hh
        dy = b * PX[..., a] * PY[..., np.maximum(b - 1, 0)] / hh
        return np.stack([dx, dy], axis=-1)
    raise ValueError("derivative must be 0 or 1")


def eval_face_monomials(x, midpoint, tangent, h, degree):
    s = ((x[..., 0] - midpoint[..., 0]) * tangent[..., 0]
         + (x[..., 1] - midpoint[..., 1]) * tangent[..., 1]) / h
    return _powers(s, degree)


@lru_cache(maxsize=None)
def laplacian_matrix(degree: int) -> np.ndarray:
    """Coefficient map of the Laplacian for unit-scaled monomials.

    Returns L (dim P^degree x dim P^degree) with Delta m_alpha = h^-2 sum_beta
    L[beta, alpha] m_beta.
    """
    ex = monomial_exponents(degree)
    index = {tuple(e): i for i, e in enumerate(ex)}
    L = np.zeros((len(ex), len(ex)))
    for j, (a, b) in enumerate(ex):
        if a >= 2:
            L[index[(a - 2, b)], j] += a * (a - 1)
        if b >= 2:
            L[index[(a, b - 2)], j] += b * (b - 1)
    return L


@lru_cache(maxsize=None)
def gradient_matrices(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Coefficient maps of d/dx and d/dy for unit-scaled monomials."""
    ex = monomial_exponents(degree)
    index = {tuple(e): i for i, e in enumerate(ex)}
    Dx = np.zeros((len(ex), len(ex)))
    Dy = np.zeros((len(ex), len(ex)))
    for j, (a, b) in enumerate(ex):
        if a >= 1:
            Dx[index[(a - 1, b)], j] = a
        if b >= 1:
            Dy[index[(a, b - 1)], j] = b
    return Dx, Dy


# --------------------------------------------------------------------------
# quadrature

@dataclass
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def measure(self) -> float:
        return float(self.weights.sum())

    def integrate(self, f) -> float:
        return float(np.dot(self.weights, f(self.points)))


def _check_order(order):
    if order < 0 or int(order) != order:
        raise UnsupportedOrderError(f"quadrature order must be a non-negative integer, got {order}")
    if order > MAX_QUADRATURE_ORDER:
        raise UnsupportedOrderError(f"quadrature order {order} exceeds supported maximum {MAX_QUADRATURE_ORDER}")


@lru_cache(maxsize=None)
def reference_triangle_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Collapsed Gauss-Jacobi rule on the unit triangle, barycentric coordinates.

    Returns (bary (nq, 3), weights summing to 1).
    """
    _check_order(order)
    n = max(1, (order + 2) // 2)
    xl, wl = roots_legendre(n)
    xj, wj = roots_jacobi(n, 1.0, 0.0)
    # collapsed map (u, v) -> (u (1 - v), v); the Jacobi weight absorbs the Jacobian 1 - v
    u = 0.5 * (xl + 1.0)
    v = 0.5 * (xj + 1.0)
    U, V = np.meshgrid(u, v, indexing="ij")
    W = np.outer(wl, wj) / 8.0
    s = U * (1.0 - V)
    t = V
    bary = np.column_stack([1.0 - s.ravel() - t.ravel(), s.ravel(), t.ravel()])
    w = W.ravel() * 2.0
    return bary, w / w.sum()


@lru_cache(maxsize=None)
def reference_segment_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre on [0, 1] exact to ``order``."""
    _check_order(order)
    n = max(1, (order + 2) // 2)
    x, w = roots_legendre(n)
    return 0.5 * (x + 1.0), 0.5 * w


def triangle_quadrature(tri_xy, order):
    """Quadrature on a stack of triangles (..., 3, 2) -> points (..., nq, 2), weights (..., nq)."""
    bary, w = reference_triangle_rule(order)
    tri_xy = np.asarray(tri_xy, dtype=float)
    pts = np.einsum("qi,...ij->...qj", bary, tri_xy)
    e1 = tri_xy[..., 1, :] - tri_xy[..., 0, :]
    e2 = tri_xy[..., 2, :] - tri_xy[..., 0, :]
    area = 0.5 * np.abs(e1[..., 0] * e2[..., 1] - e1[..., 1] * e2[..., 0])
    return pts, area[..., None] * w


def segment_quadrature(a, b, order):
    """Gauss-Legendre on a stack of segments (..., 2) -> (..., nq, 2), (..., nq)."""
    s, w = reference_segment_rule(order)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    pts = a[..., None, :] + s[:, None] * (b - a)[..., None, :]
    length = np.sqrt(((b - a) ** 2).sum(-1))
    return pts, length[..., None] * w


def element_subtriangles(mesh: PolytopalMesh, elements) -> np.ndarray:
    """Fan triangles (n, nsub, 3, 2) for elements sharing the same face count."""
    elements = np.asarray(elements, dtype=np.int64)
    m = len(mesh.element_vertices[elements[0]])
    loops = np.array([mesh.element_vertices[T] for T in elements])
    if loops.shape[1] != m:
        raise ValueError("elements must share the same face count")
    xy = mesh.vertices[loops]
    if m == 3:
        return xy[:, None, :, :]
    c = mesh.element_centroid[elements]
    tri = np.empty((len(elements), m, 3, 2))
    tri[:, :, 0, :] = c[:, None, :]
    tri[:, :, 1, :] = xy
    tri[:, :, 2, :] = np.roll(xy, -1, axis=1)
    return tri


def element_quadrature_batch(mesh: PolytopalMesh, elements, order: int):
    """Points (n, nq, 2) and weights (n, nq) for elements sharing a face count.

    Points are ordered subtriangle-major.
    """
    tri = element_subtriangles(mesh, elements)
    pts, w = triangle_quadrature(tri, order)
    n = len(tri)
    return pts.reshape(n, -1, 2), w.reshape(n, -1)


def quadrature(mesh: PolytopalMesh, region: str, index: int, order: int) -> QuadratureRule:
    """Quadrature rule on one element (``region='element'``) or one face."""
    _check_order(order)
    if region == "element":
        pts, w = element_quadrature_batch(mesh, [index], order)
        return QuadratureRule(pts[0], w[0], order)
    if region == "face":
        a, b = mesh.vertices[mesh.faces[index]]
        pts, w = segment_quadrature(a, b, order)
        return QuadratureRule(pts, w, order)
    raise ValueError(f"unknown region {region!r}")


# --------------------------------------------------------------------------
# bases and Gram matrices

@dataclass
class Basis:
    """Scaled monomial basis on an element or a face."""
    region: str
    index: int
    degree: int
    center: np.ndarray
    h: float
    tangent: np.ndarray | None = None

    @property
    def dimension(self) -> int:
        return dim_poly(self.degree, 2 if self.region == "element" else 1)

    def __call__(self, x):
        if self.region == "element":
            return eval_monomials(x, self.center, self.h, self.degree)
        return eval_face_monomials(x, self.center, self.tangent, self.h, self.degree)

    def grad(self, x):
        if self.region != "element":
            raise ValueError("gradient only defined for element bases")
        return eval_monomials(x, self.center, self.h, self.degree, derivative=1)


def element_basis(mesh: PolytopalMesh, T: int, degree: int) -> Basis:
    return Basis("element", T, degree, mesh.element_centroid[T], float(mesh.element_diameter[T]))


def face_basis(mesh: PolytopalMesh, F: int, degree: int) -> Basis:
    return Basis("face", F, degree, mesh.face_midpoint[F], float(mesh.face_diameter[F]),
                 mesh.face_tangent[F])


def make_basis(mesh, region, index, degree) -> Basis:
    return element_basis(mesh, index, degree) if region == "element" else face_basis(mesh, index, degree)


@dataclass
class PolyCoeffs:
    coeffs: np.ndarray
    basis: Basis

    def __post_init__(self):
        if len(self.coeffs) != self.basis.dimension:
            raise ValueError("coefficient length does not match basis dimension")

    def __call__(self, x):
        return self.basis(x) @ self.coeffs

    @property
    def degree(self) -> int:
        return self.basis.degree


def gram_matrices(mesh: PolytopalMesh, T: int, degree: int):
    """Mass and stiffness matrices of the scaled monomial basis of P^degree(T)."""
    B = element_basis(mesh, T, degree)
    q = quadrature(mesh, "element", T, 2 * degree)
    phi = B(q.points)
    dphi = B.grad(q.points)
    M = np.einsum("q,qi,qj->ij", q.weights, phi, phi)
    K = np.einsum("q,qid,qjd->ij", q.weights, dphi, dphi)
    return M, K


def mass_condition_number(mesh, region, index, degree) -> float:
    if region == "element":
        M = gram_matrices(mesh, index, degree)[0]
    else:
        B = face_basis(mesh, index, degree)
        q = quadrature(mesh, "face", index, 2 * degree)
        v = B(q.points)
        M = (v * q.weights[:, None]).T @ v
    return float(np.linalg.cond(M))


def _solve_spd(M, rhs):
    try:
        cf = cho_factor(M)
    except np.linalg.LinAlgError:
        raise IllConditionedBasisError("mass matrix is not positive definite") from None
    return cho_solve(cf, rhs)


def default_order(degree: int, polynomial: bool = False) -> int:
    return 2 * (degree + 1) if polynomial else 2 * degree + 6


def l2_project(f, mesh: PolytopalMesh, region: str, index: int, degree: int,
               order: int | None = None, return_residual: bool = False):
    """L2-orthogonal projection of ``f`` onto P^degree of an element or face."""
    B = make_basis(mesh, region, index, degree)
    q = quadrature(mesh, region, index, default_order(degree) if order is None else order)
    v = B(q.points)
    M = (v * q.weights[:, None]).T @ v
    rhs = v.T @ (q.weights * np.asarray(f(q.points), dtype=float))
    c = _solve_spd(M, rhs)
    out = PolyCoeffs(c, B)
    if return_residual:
        return out, float(np.abs(M @ c - rhs).max())
    return out


def elliptic_project(f, grad_f, mesh: PolytopalMesh, T: int, degree: int,
                     order: int | None = None, return_residual: bool = False):
    """Elliptic projection: gradient-orthogonal with matching mean value."""
    B = element_basis(mesh, T, degree)
    q = quadrature(mesh, "element", T, default_order(degree) if order is None else order)
    phi = B(q.points)
    dphi = B.grad(q.points)
    w = q.weights
    K = np.einsum("q,qid,qjd->ij", w, dphi, dphi)
    g = np.asarray(grad_f(q.points), dtype=float)
    rhs = np.einsum("q,qid,qd->i", w, dphi, g)
    mean_row = w @ phi
    fmean = w @ np.asarray(f(q.points), dtype=float)
    area = w.sum()
    # rank-one closure: K + l l^T with l = int(phi)/|T|
    lvec = mean_row / area
    c = np.linalg.solve(K + np.outer(lvec, lvec), rhs + lvec * (fmean / area))
    out = PolyCoeffs(c, B)
    if return_residual:
        res = max(float(np.abs(K @ c - rhs).max()), abs(mean_row @ c - fmean))
        return out, res
    return out


def trace_constant_probe(mesh: PolytopalMesh, T: int, degree: int) -> float:
    """Best constant C in ||v||_F <= C h_T^{-1/2} ||v||_T over v in P^degree(T), max over faces."""
    B = element_basis(mesh, T, degree)
    M, _ = gram_matrices(mesh, T, degree)
    hT = mesh.element_diameter[T]
    best = 0.0
    for F in mesh.element_faces[T]:
        q = quadrature(mesh, "face", int(F), 2 * degree)
        v = B(q.points)
        MF = (v * q.weights[:, None]).T @ v
        lam = eigh(MF, M, eigvals_only=True)[-1]
        best = max(best, float(np.sqrt(lam * hT)))
    return best
