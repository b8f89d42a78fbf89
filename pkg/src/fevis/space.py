"""Continuous Lagrange function spaces, FE fields and point evaluation."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Optional

import numpy as np

from .element import ReferenceElement, lagrange_element
from .expr import Expression, evaluate
from .mesh import Mesh, SpatialIndex, box_mesh, unit_square_mesh

FAMILIES = ("P", "CG")


class UnsupportedFamilyError(ValueError):
    pass


class OutOfDomainError(ValueError):
    """A point handed to evaluation lies outside every cell of the mesh."""

    def __init__(self, point):
        super().__init__(f"point {np.asarray(point).tolist()} is outside the mesh")
        self.point = point


class FieldFormatError(ValueError):
    pass


class FunctionSpace:
    """Mesh x Lagrange element with a global numbering of the nodes.

    Numbering: mesh vertices first (in vertex order), then edge nodes sorted by
    edge vertex pair and position along the edge, then face nodes likewise,
    then interior nodes by cell and local lattice order.
    """

    def __init__(self, mesh: Mesh, element: ReferenceElement, family: str = "P"):
        if element.dim != mesh.dim:
            raise ValueError(f"element dimension {element.dim} != mesh dimension {mesh.dim}")
        self.mesh = mesh
        self.element = element
        self.family = family
        self.degree = element.degree
        self.dof_map, self.dof_coords = self._number_dofs()
        self.dof_map.setflags(write=False)
        self.dof_coords.setflags(write=False)

    def _number_dofs(self):
        mesh, elem = self.mesh, self.element
        k, d1 = elem.degree, mesh.dim + 1
        ncells, nd = mesh.num_cells, elem.ndofs
        # a node is identified by the vertices it leans on and its lattice weights,
        # written as (support size, vertex ids ascending, -weights) so that row
        # order is the numbering order
        perm = np.argsort(mesh.cells, axis=1)
        verts = np.take_along_axis(mesh.cells, perm, axis=1)
        weights = np.transpose(elem.lattice[:, perm], (1, 0, 2))  # (ncells, nd, d1)
        verts = np.broadcast_to(verts[:, None, :], weights.shape)
        big = np.iinfo(np.int64).max
        order = np.argsort(np.where(weights > 0, verts, big), axis=2, kind="stable")
        verts = np.take_along_axis(verts, order, axis=2)
        weights = np.take_along_axis(weights, order, axis=2)
        support = np.count_nonzero(weights, axis=2)
        verts = np.where(weights > 0, verts, -1)
        rows = np.concatenate([support[..., None], verts, -weights], axis=2).reshape(-1, 2 * d1 + 1)

        shared = rows[:, 0] < d1
        keys, inverse = np.unique(rows[shared], axis=0, return_inverse=True)
        dof_map = np.empty(ncells * nd, dtype=np.int64)
        dof_map[shared] = inverse.ravel()
        n_interior = int(np.count_nonzero(~shared))
        dof_map[~shared] = len(keys) + np.arange(n_interior)
        all_keys = np.concatenate([keys, rows[~shared]])

        kv = all_keys[:, 1: 1 + d1]
        kw = -all_keys[:, 1 + d1:]
        coords = np.einsum("gi,gid->gd", kw, mesh.vertices[np.maximum(kv, 0)]) / k
        return dof_map.reshape(ncells, nd), coords

    @property
    def dim(self) -> int:
        return self.mesh.dim

    @property
    def global_dof_count(self) -> int:
        return len(self.dof_coords)

    @cached_property
    def index(self) -> SpatialIndex:
        return SpatialIndex(self.mesh)


def function_space(mesh: Mesh, family: str, k: int) -> FunctionSpace:
    """Continuous Lagrange space; ``"P"`` and ``"CG"`` are the same family."""
    if family not in FAMILIES:
        raise UnsupportedFamilyError(
            f"unsupported element family {family!r}; only continuous Lagrange ('P' or 'CG') is available")
    return FunctionSpace(mesh, lagrange_element(mesh.dim, k), family)


class FEField:
    """Coefficient vector over a function space."""

    def __init__(self, space: FunctionSpace, coeffs):
        coeffs = np.array(coeffs, dtype=float)
        if coeffs.shape != (space.global_dof_count,):
            raise ValueError(f"expected {space.global_dof_count} coefficients, got {coeffs.shape}")
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("field coefficients must be finite")
        coeffs.setflags(write=False)
        self.space = space
        self.coeffs = coeffs

    @property
    def dim(self) -> int:
        return self.space.dim

    @property
    def degree(self) -> int:
        return self.space.degree

    def locate(self, points) -> tuple[np.ndarray, np.ndarray]:
        return self.space.index.locate(points)

    def inside(self, points) -> np.ndarray:
        cells, _ = self.locate(points)
        return cells >= 0

    def _values_in(self, cells, xi) -> np.ndarray:
        phi = self.space.element.values(xi)
        return np.einsum("ni,ni->n", phi, self.coeffs[self.space.dof_map[cells]])

    def _gradients_in(self, cells, xi) -> np.ndarray:
        _, dphi = self.space.element.tabulate(xi)
        ref = np.einsum("nid,ni->nd", dphi, self.coeffs[self.space.dof_map[cells]])
        return np.einsum("ndj,nd->nj", self.space.mesh.jacobians_inv[cells], ref)

    def probe(self, points, fill: float = np.nan) -> tuple[np.ndarray, np.ndarray]:
        """Values at ``(n, dim)`` points, ``fill`` where outside; also returns the inside mask."""
        cells, xi = self.locate(points)
        mask = cells >= 0
        out = np.full(len(cells), fill, dtype=float)
        if mask.any():
            out[mask] = self._values_in(cells[mask], xi[mask])
        return out, mask

    def evaluate(self, points) -> np.ndarray:
        """Values at ``(n, dim)`` points; raises :class:`OutOfDomainError` for outside points."""
        cells, xi = self.locate(points)
        if np.any(cells < 0):
            raise OutOfDomainError(np.atleast_2d(points)[np.argmax(cells < 0)])
        return self._values_in(cells, xi)

    def gradient(self, points) -> np.ndarray:
        cells, xi = self.locate(points)
        if np.any(cells < 0):
            raise OutOfDomainError(np.atleast_2d(points)[np.argmax(cells < 0)])
        return self._gradients_in(cells, xi)

    def eval_in_cell(self, cell: int, point) -> float:
        """Evaluate through one specific cell's basis (no containment check)."""
        mesh = self.space.mesh
        xi = mesh.jacobians_inv[cell] @ (np.asarray(point, dtype=float) - mesh.origins[cell])
        return float(self._values_in(np.array([cell]), xi[None, :])[0])


def interpolate(space: FunctionSpace, expr: Expression) -> FEField:
    """Nodal interpolation: each coefficient is the expression at its node."""
    if expr.dim != space.dim:
        raise ValueError(f"expression is {expr.dim}-D but the mesh is {space.dim}-D")
    # an ExprEvalError from here carries the offending node's coordinates
    return FEField(space, evaluate(expr, space.dof_coords))


def eval_point(field: FEField, point) -> float:
    return float(field.evaluate(np.asarray(point, dtype=float)[None, :])[0])


def eval_gradient(field: FEField, point) -> np.ndarray:
    return field.gradient(np.asarray(point, dtype=float)[None, :])[0]


def inside(field: FEField, point) -> bool:
    return bool(field.inside(np.asarray(point, dtype=float)[None, :])[0])


def degrade_to_linear(field: FEField, mode: str = "interpolate") -> FEField:
    """Re-express ``field`` in P1 on the same mesh.

    ``"interpolate"`` samples the field at the mesh vertices; ``"l2project"``
    solves the P1 mass-matrix system against the field.
    """
    mesh = field.space.mesh
    target = function_space(mesh, "P", 1)
    if mode == "interpolate":
        # vertex DOFs come first in any space, in mesh vertex order
        return FEField(target, field.coeffs[: mesh.num_vertices])
    if mode == "l2project":
        from .solver import assemble_load, assemble_mass, cg_solve

        M = assemble_mass(target)
        b = assemble_load(target, field)
        n = target.global_dof_count
        return FEField(target, cg_solve((M, b), rel_tol=1e-13, max_iter=10 * n))
    raise ValueError(f"unknown degrade mode {mode!r}; use 'interpolate' or 'l2project'")


# -- field container ---------------------------------------------------------

_MAGIC = b"FEVF"
_VERSION = 1
_KINDS = {("square", "kuhn"): 0, ("box", "kuhn"): 1, ("box", "symmetric"): 2}


def save_field(field: FEField, path) -> None:
    """Write a field and the parameters of its generated mesh.

    Layout (little endian): magic ``FEVF``, u32 version, u32 dim, u32 degree,
    u32 mesh kind (0 square, 1 Kuhn box, 2 symmetric box), ``dim`` x u32 counts, ``dim`` x f64
    lengths, u64 coefficient count, then the coefficients as f64.
    """
    mesh = field.space.mesh
    kind = (mesh.kind, mesh.split)
    if kind not in _KINDS:
        raise FieldFormatError("only fields on generated square/box meshes can be saved")
    d = mesh.dim
    header = struct.pack(f"<4sIIII{d}I{d}dQ", _MAGIC, _VERSION, d, field.degree,
                         _KINDS[kind], *mesh.counts, *mesh.lengths, len(field.coeffs))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(field.coeffs.astype("<f8").tobytes())


def load_field(path, family: str = "P") -> FEField:
    data = Path(path).read_bytes()
    if len(data) < 20 or data[:4] != _MAGIC:
        raise FieldFormatError(f"{path}: not a field container")
    version, d, degree, kind = struct.unpack_from("<IIII", data, 4)
    if version != _VERSION or d not in (2, 3) or kind not in _KINDS.values() or (kind == 0) != (d == 2):
        raise FieldFormatError(f"{path}: unsupported container (version {version}, dim {d})")
    fmt = f"<{d}I{d}dQ"
    try:
        *rest, n = struct.unpack_from(fmt, data, 20)
    except struct.error as err:
        raise FieldFormatError(f"{path}: truncated header") from err
    counts, lengths = rest[:d], rest[d:]
    offset = 20 + struct.calcsize(fmt)
    if len(data) - offset != 8 * n:
        raise FieldFormatError(f"{path}: expected {n} coefficients")
    coeffs = np.frombuffer(data, dtype="<f8", count=n, offset=offset)
    if kind == 0:
        mesh = unit_square_mesh(*counts, lengths)
    else:
        mesh = box_mesh(*counts, lengths, split="kuhn" if kind == 1 else "symmetric")
    space = function_space(mesh, family, degree)
    return FEField(space, coeffs)


def field_from_callable(space: FunctionSpace, fn) -> FEField:
    """Interpolate a vectorized Python callable ``fn(points) -> values``."""
    return FEField(space, np.asarray(fn(space.dof_coords), dtype=float))


def interior_facet_points(space: FunctionSpace, n: int, rng: Optional[np.random.Generator] = None):
    """Random points on interior facets with their two incident cells."""
    rng = rng or np.random.default_rng()
    mesh = space.mesh
    facets = [(f, cs) for f, cs in mesh.facet_cells().items() if len(cs) == 2]
    out = []
    for _ in range(n):
        f, cs = facets[rng.integers(len(facets))]
        w = rng.dirichlet(np.ones(len(f)))
        out.append((w @ mesh.vertices[list(f)], tuple(cs)))
    return out
