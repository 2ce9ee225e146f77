"""Sparse global solves with an explicit residual contract."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10


class SolverError(RuntimeError):
    """Base class for global solve failures."""


class NotSPDError(SolverError):
    pass


class SingularSystemError(SolverError):
    pass


class ResidualContractError(SolverError):
    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


@dataclass
class SparseSystem:
    matrix: sp.spmatrix
    rhs: np.ndarray
    symmetric: bool = False
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.matrix = sp.csr_matrix(self.matrix)
        self.rhs = np.asarray(self.rhs, dtype=float)
        n, m = self.matrix.shape
        if n != m or self.rhs.shape[0] != n:
            raise ValueError(f"incompatible system shapes {self.matrix.shape} and {self.rhs.shape}")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def asymmetry(self) -> float:
        A = self.matrix
        d = abs(A - A.T)
        scale = abs(A).max() if A.nnz else 1.0
        return float(d.max() / scale) if d.nnz else 0.0

    def relative_residual(self, x) -> float:
        r = self.matrix @ x - self.rhs
        nb = np.linalg.norm(self.rhs)
        return float(np.linalg.norm(r) / (nb if nb > 0 else 1.0))


def _check(system, x, tol, name):
    res = system.relative_residual(x)
    if not np.all(np.isfinite(x)) or res > tol:
        raise ResidualContractError(f"{name}: relative residual {res:.3e} exceeds {tol:.1e}", res)
    return res


def _direct(system):
    if system.dim == 0:
        return np.zeros(0)
    with warnings.catch_warnings():
        warnings.simplefilter("error", spla.MatrixRankWarning)
        try:
            return np.atleast_1d(spla.spsolve(system.matrix.tocsc(), system.rhs))
        except (spla.MatrixRankWarning, RuntimeError) as exc:
            raise SingularSystemError(str(exc)) from exc


def _refine(system, x, tol, steps=3):
    """A few sweeps of iterative refinement with the direct solver."""
    for _ in range(steps):
        if system.relative_residual(x) <= tol:
            break
        r = system.rhs - system.matrix @ x
        x = x + _direct(SparseSystem(system.matrix, r))
    return x


def solve_spd(system: SparseSystem, tol: float = RESIDUAL_TOL, method: str = "direct") -> np.ndarray:
    """Solve a symmetric positive definite system."""
    if not system.symmetric:
        raise NotSPDError("system is not flagged symmetric")
    if system.dim and np.any(system.matrix.diagonal() <= 0):
        raise NotSPDError("non-positive diagonal entry")
    if not np.any(system.rhs):
        return np.zeros(system.dim)
    x = None
    if method == "direct":
        try:
            x = _refine(system, _direct(system), tol)
        except SingularSystemError as exc:
            raise NotSPDError(f"factorization failed: {exc}") from exc
    if x is None or system.relative_residual(x) > tol:
        log.info("falling back to conjugate gradients")
        d = system.matrix.diagonal()
        M = sp.diags(1.0 / d)
        x0 = x if x is not None and np.all(np.isfinite(x)) else None
        x, info = spla.cg(system.matrix, system.rhs, x0=x0, rtol=0.1 * tol, atol=0.0,
                          maxiter=10 * system.dim + 100, M=M)
        if info < 0:
            raise NotSPDError("conjugate gradient breakdown")
    _check(system, x, tol, "solve_spd")
    return x


def solve_general(system: SparseSystem, tol: float = RESIDUAL_TOL, method: str = "direct") -> np.ndarray:
    """Solve a general (possibly nonsymmetric) nonsingular system."""
    if not np.any(system.rhs):
        return np.zeros(system.dim)
    x = None
    if method == "direct":
        x = _refine(system, _direct(system), tol)
    if x is None or system.relative_residual(x) > tol:
        log.info("falling back to GMRES")
        ilu = spla.spilu(system.matrix.tocsc())
        M = spla.LinearOperator(system.matrix.shape, ilu.solve)
        x0 = x if x is not None and np.all(np.isfinite(x)) else None
        x, info = spla.gmres(system.matrix, system.rhs, x0=x0, rtol=0.1 * tol, atol=0.0,
                             restart=200, maxiter=50, M=M)
        if info < 0:
            raise SingularSystemError("GMRES breakdown")
    _check(system, x, tol, "solve_general")
    return x


def solve(system: SparseSystem, tol: float = RESIDUAL_TOL) -> np.ndarray:
    return solve_spd(system, tol) if system.symmetric else solve_general(system, tol)
