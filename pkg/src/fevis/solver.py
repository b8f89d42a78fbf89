"""Galerkin assembly for -lap(u) + u = f with natural boundary conditions, and a CG solver."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .expr import parse
from .mesh import Mesh
from .quadrature import QuadratureRule, quadrature_rule, simplex_monomial_integral  # noqa: F401
from .space import FEField, FunctionSpace, function_space, interpolate

log = logging.getLogger(__name__)

HELMHOLTZ_FORCING = "(1.0+8.0*pi^2)*cos(2*pi*x[0])*cos(2*pi*x[1])"


def helmholtz_exact(points: np.ndarray) -> np.ndarray:
    """Manufactured solution whose forcing is :data:`HELMHOLTZ_FORCING`."""
    return np.cos(2 * np.pi * points[..., 0]) * np.cos(2 * np.pi * points[..., 1])


class ConvergenceError(RuntimeError):
    def __init__(self, iterations: int, residual: float, target: float):
        super().__init__(f"CG did not converge in {iterations} iterations: "
                         f"residual {residual:.3e} > {target:.3e}")
        self.iterations = iterations
        self.residual = residual
        self.target = target


@dataclass
class LinearSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray

    def __iter__(self):
        yield self.matrix
        yield self.rhs


def _scatter_matrix(space: FunctionSpace, local: np.ndarray) -> sp.csr_matrix:
    dm = space.dof_map
    nd = dm.shape[1]
    rows = np.repeat(dm, nd, axis=1).ravel()
    cols = np.tile(dm, (1, nd)).ravel()
    n = space.global_dof_count
    A = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def _rule_and_tables(space: FunctionSpace, degree: int):
    rule = quadrature_rule(space.dim, degree)
    phi, dphi = space.element.tabulate(rule.points)
    return rule, phi, dphi


def local_mass(space: FunctionSpace) -> np.ndarray:
    """Per-cell mass matrices ``(ncells, nd, nd)``."""
    rule, phi, _ = _rule_and_tables(space, 2 * space.degree)
    ref = np.einsum("q,qi,qj->ij", rule.weights, phi, phi)
    return space.mesh.det[:, None, None] * ref[None]


def local_stiffness(space: FunctionSpace) -> np.ndarray:
    """Per-cell stiffness matrices ``(ncells, nd, nd)``."""
    rule, _, dphi = _rule_and_tables(space, max(2 * space.degree - 2, 0))
    mesh = space.mesh
    grads = np.einsum("cdj,qid->cqij", mesh.jacobians_inv, dphi)
    return np.einsum("q,cqia,cqja,c->cij", rule.weights, grads, grads, mesh.det)


def assemble_mass(space: FunctionSpace) -> sp.csr_matrix:
    return _scatter_matrix(space, local_mass(space))


def assemble_stiffness(space: FunctionSpace) -> sp.csr_matrix:
    return _scatter_matrix(space, local_stiffness(space))


def assemble_load(space: FunctionSpace, f: FEField) -> np.ndarray:
    """``b_i = integral(phi_i * f)`` for a field ``f`` on the same mesh (any degree)."""
    if f.space.mesh is not space.mesh:
        raise ValueError("load field must live on the same mesh as the test space")
    rule = quadrature_rule(space.dim, space.degree + f.degree)
    phi = space.element.values(rule.points)  # (q, nd)
    psi = f.space.element.values(rule.points)  # (q, nf)
    fq = f.coeffs[f.space.dof_map] @ psi.T  # (c, q)
    local = np.einsum("q,qi,cq,c->ci", rule.weights, phi, fq, space.mesh.det)
    return np.bincount(space.dof_map.ravel(), weights=local.ravel(),
                       minlength=space.global_dof_count)


def assemble_load_exact(space: FunctionSpace, fn: Callable[[np.ndarray], np.ndarray],
                        degree: Optional[int] = None) -> np.ndarray:
    """``b_i = integral(phi_i * fn)`` with ``fn`` sampled at physical quadrature points."""
    mesh = space.mesh
    rule = quadrature_rule(space.dim, degree if degree is not None else 2 * space.degree + 2)
    phi = space.element.values(rule.points)
    xq = mesh.origins[:, None, :] + np.einsum("cij,qj->cqi", mesh.jacobians, rule.points)
    local = np.einsum("q,qi,cq,c->ci", rule.weights, phi, fn(xq), mesh.det)
    return np.bincount(space.dof_map.ravel(), weights=local.ravel(),
                       minlength=space.global_dof_count)


def assemble_helmholtz(space: FunctionSpace, f) -> LinearSystem:
    """Bilinear form ``grad u . grad v + u v`` and load ``f v``; no boundary rows touched.

    ``f`` is either an :class:`FEField` on the same mesh or a vectorized
    callable of physical points (an :class:`~fevis.expr.Expression` works).
    """
    if isinstance(f, FEField):
        if f.space.mesh is not space.mesh or f.dim != space.dim:
            raise ValueError("forcing field does not live on the solution mesh")
        b = assemble_load(space, f)
    else:
        if getattr(f, "dim", space.dim) != space.dim:
            raise ValueError(f"forcing is {f.dim}-D but the mesh is {space.dim}-D")
        b = assemble_load_exact(space, f)
    local = local_stiffness(space) + local_mass(space)
    return LinearSystem(_scatter_matrix(space, local), b)


def cg(A, b, rel_tol: float = 1e-10, max_iter: Optional[int] = None):
    """Unpreconditioned conjugate gradients from a zero initial guess.

    Returns:
        ``(x, iterations, residual_norm)``.

    Raises:
        ConvergenceError: if ``||b - A x|| > rel_tol * ||b||`` after ``max_iter`` steps.
    """
    b = np.asarray(b, dtype=float)
    n = len(b)
    if max_iter is None:
        max_iter = 10 * n
    x = np.zeros(n)
    r = b.copy()
    target = rel_tol * np.linalg.norm(b)
    rr = r @ r
    if np.sqrt(rr) <= target:
        return x, 0, float(np.sqrt(rr))
    p = r.copy()
    for it in range(1, max_iter + 1):
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0:
            raise ValueError("matrix is not positive definite")
        alpha = rr / pAp
        x += alpha * p
        r -= alpha * Ap
        rr_new = r @ r
        if np.sqrt(rr_new) <= target:
            # confirm against the true residual, not the recurrence
            true_res = np.linalg.norm(b - A @ x)
            if true_res <= target:
                log.debug("cg converged in %d iterations, residual %.3e", it, true_res)
                return x, it, float(true_res)
            r = b - A @ x
            rr_new = r @ r
        p = r + (rr_new / rr) * p
        rr = rr_new
    raise ConvergenceError(max_iter, float(np.linalg.norm(b - A @ x)), target)


def cg_solve(system, rel_tol: float = 1e-10, max_iter: Optional[int] = None) -> np.ndarray:
    A, b = system
    x, _, _ = cg(A, b, rel_tol, max_iter)
    return x


def l2_error(field: FEField, exact: Callable[[np.ndarray], np.ndarray], degree: Optional[int] = None) -> float:
    """``||field - exact||_L2`` by cellwise quadrature (default degree ``2k + 2``)."""
    space = field.space
    mesh = space.mesh
    rule = quadrature_rule(space.dim, degree if degree is not None else 2 * space.degree + 2)
    phi = space.element.values(rule.points)
    uh = field.coeffs[space.dof_map] @ phi.T  # (c, q)
    xq = mesh.origins[:, None, :] + np.einsum("cij,qj->cqi", mesh.jacobians, rule.points)
    err = uh - exact(xq)
    return float(np.sqrt(np.einsum("q,cq,c->", rule.weights, err**2, mesh.det)))


def solve_helmholtz(mesh: Mesh, k: int, rel_tol: float = 1e-10,
                    max_iter: Optional[int] = None, forcing: str = "exact") -> FEField:
    """Solve the Neumann Helmholtz problem with the cosine forcing on a 2D mesh.

    ``forcing="exact"`` integrates the forcing expression at quadrature points;
    ``forcing="interpolate"`` first interpolates it into the solution space,
    which adds an interpolation error that dominates on very coarse P1 meshes.
    """
    if mesh.dim != 2:
        raise ValueError("the Helmholtz driver needs a 2D mesh")
    V = function_space(mesh, "CG", k)
    expr = parse(HELMHOLTZ_FORCING, 2)
    if forcing == "interpolate":
        f = interpolate(V, expr)
    elif forcing == "exact":
        f = expr
    else:
        raise ValueError(f"unknown forcing mode {forcing!r}")
    system = assemble_helmholtz(V, f)
    return FEField(V, cg_solve(system, rel_tol, max_iter))
