"""Simplicial meshes on axis-aligned boxes, per-cell affine geometry and point location."""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

#: Barycentric coordinates down to this value still count as "inside".
CONTAINMENT_TOL = 1e-12
#: Cells with |det J| at or below this are rejected as degenerate.
DEGENERATE_TOL = 1e-14


class InvalidMeshError(ValueError):
    """Raised for meshes with degenerate cells or inconsistent connectivity."""


@dataclass(frozen=True, eq=False)
class Mesh:
    """A conforming simplicial mesh.

    Attributes:
        dim: spatial dimension (2 or 3).
        vertices: ``(nverts, dim)`` physical coordinates.
        cells: ``(ncells, dim + 1)`` vertex indices, positively oriented.
        kind: ``"square"`` or ``"box"`` for generated meshes, used by the field
            container to rebuild the mesh.
        split: hexahedron split pattern of box meshes.
        counts: subdivisions per axis.
        lengths: box side lengths.
    """

    dim: int
    vertices: np.ndarray
    cells: np.ndarray
    kind: str = "custom"
    counts: tuple[int, ...] = ()
    lengths: tuple[float, ...] = ()
    split: str = "kuhn"
    _facet_cells: tuple = field(default=None, repr=False)

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise InvalidMeshError(f"unsupported dimension {self.dim}")
        verts = np.ascontiguousarray(self.vertices, dtype=float)
        cells = np.array(self.cells, dtype=np.int64)
        if verts.ndim != 2 or verts.shape[1] != self.dim:
            raise InvalidMeshError("vertices must have shape (n, dim)")
        if cells.ndim != 2 or cells.shape[1] != self.dim + 1:
            raise InvalidMeshError("cells must have shape (m, dim + 1)")
        if cells.size and (cells.min() < 0 or cells.max() >= len(verts)):
            raise InvalidMeshError("cell references a vertex out of range")
        srt = np.sort(cells, axis=1)
        if np.any(srt[:, 1:] == srt[:, :-1]):
            raise InvalidMeshError("cell with repeated vertices")

        # normalize orientation: swap the last two vertices of inverted cells
        edges = verts[cells[:, 1:]] - verts[cells[:, :1]]
        signed = np.linalg.det(edges)
        flip = signed < 0
        cells[flip, -2:] = cells[flip, -1:-3:-1]

        verts.setflags(write=False)
        cells.setflags(write=False)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "cells", cells)

        combos = list(itertools.combinations(range(self.dim + 1), self.dim))
        all_facets = srt[:, combos].reshape(-1, self.dim)
        facets, inverse, counts = np.unique(all_facets, axis=0, return_inverse=True,
                                            return_counts=True)
        if np.any(counts > 2):
            raise InvalidMeshError("non-manifold facet shared by more than two cells")
        object.__setattr__(self, "_facet_cells", (facets, inverse.ravel(), counts, len(combos)))

        if np.any(self.det <= DEGENERATE_TOL):
            bad = int(np.argmin(self.det))
            raise InvalidMeshError(f"degenerate cell {bad} (|det J| = {self.det[bad]:.3e})")

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_cells(self) -> int:
        return len(self.cells)

    @cached_property
    def origins(self) -> np.ndarray:
        return self.vertices[self.cells[:, 0]]

    @cached_property
    def jacobians(self) -> np.ndarray:
        """``(ncells, dim, dim)``; column ``j`` is the edge from vertex 0 to vertex ``j+1``."""
        edges = self.vertices[self.cells[:, 1:]] - self.origins[:, None, :]
        return np.ascontiguousarray(np.swapaxes(edges, 1, 2))

    @cached_property
    def jacobians_inv(self) -> np.ndarray:
        return np.linalg.inv(self.jacobians)

    @cached_property
    def det(self) -> np.ndarray:
        return np.abs(np.linalg.det(self.jacobians))

    @property
    def volumes(self) -> np.ndarray:
        return self.det / math.factorial(self.dim)

    @property
    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def facet_cells(self) -> dict[tuple[int, ...], list[int]]:
        """Map each facet (sorted vertex tuple) to its incident cells."""
        facets, inverse, _, per_cell = self._facet_cells
        out: dict[tuple[int, ...], list[int]] = {tuple(f): [] for f in facets.tolist()}
        keys = list(out)
        for i, f in enumerate(inverse.tolist()):
            out[keys[f]].append(i // per_cell)
        return out

    @cached_property
    def boundary_facets(self) -> np.ndarray:
        facets, _, counts, _ = self._facet_cells
        return facets[counts == 1]

    def barycentric(self, cell: int, point: Sequence[float]) -> np.ndarray:
        xi = self.jacobians_inv[cell] @ (np.asarray(point, dtype=float) - self.origins[cell])
        return np.concatenate([[1.0 - xi.sum()], xi])


@dataclass(frozen=True)
class AffineMap:
    """The map ``x = origin + J xi`` from the reference simplex onto one cell."""

    cell_index: int
    origin: np.ndarray
    jacobian: np.ndarray
    jacobian_inv: np.ndarray
    det: float

    def to_physical(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        return self.origin + xi @ self.jacobian.T

    def to_reference(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x - self.origin) @ self.jacobian_inv.T


def _check_counts(counts, lengths, dim):
    if len(counts) != dim or len(lengths) != dim:
        raise ValueError(f"expected {dim} counts and {dim} lengths")
    for n in counts:
        if int(n) != n or n < 1:
            raise ValueError(f"subdivision counts must be positive integers, got {counts}")
    for length in lengths:
        if not length > 0:
            raise ValueError(f"box lengths must be positive, got {lengths}")


def unit_square_mesh(nx: int, ny: int, lengths: Sequence[float] = (1.0, 1.0)) -> Mesh:
    """Triangulate ``[0, Lx] x [0, Ly]`` with ``nx * ny`` squares cut along the
    lower-left to upper-right diagonal."""
    _check_counts((nx, ny), lengths, 2)
    xs = np.linspace(0.0, lengths[0], nx + 1)
    ys = np.linspace(0.0, lengths[1], ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return i + (nx + 1) * j

    cells = []
    for j in range(ny):
        for i in range(nx):
            ll, lr, ul, ur = vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1)
            cells.append((ll, lr, ur))
            cells.append((ll, ur, ul))
    return Mesh(2, vertices, np.array(cells), kind="square",
                counts=(int(nx), int(ny)), lengths=tuple(float(v) for v in lengths))


# Kuhn simplices of the unit cube: walk from corner 0 to corner 7 adding one
# axis at a time, in every possible axis order.
SPLITS = ("kuhn", "symmetric")
_KUHN_PATHS = []
for _perm in itertools.permutations(range(3)):
    _corner = [0, 0, 0]
    _path = [tuple(_corner)]
    for _axis in _perm:
        _corner[_axis] = 1
        _path.append(tuple(_corner))
    _KUHN_PATHS.append(_path)


def box_mesh(nx: int, ny: int, nz: int, lengths: Sequence[float] = (1.0, 1.0, 1.0),
             split: str = "kuhn") -> Mesh:
    """Tetrahedralize a box by splitting each lattice hexahedron into six Kuhn simplices.

    ``split="kuhn"`` uses the same main diagonal in every hexahedron.
    ``split="symmetric"`` mirrors the pattern in each half of the box (per axis,
    hexahedra past the midplane are reflected) so the mesh keeps all symmetries
    of the box about its centre; this needs even counts.
    """
    _check_counts((nx, ny, nz), lengths, 3)
    if split not in SPLITS:
        raise ValueError(f"unknown split {split!r}; use one of {SPLITS}")
    if split == "symmetric" and any(n % 2 for n in (nx, ny, nz)):
        raise ValueError("the symmetric split needs even subdivision counts")
    xs = np.linspace(0.0, lengths[0], nx + 1)
    ys = np.linspace(0.0, lengths[1], ny + 1)
    zs = np.linspace(0.0, lengths[2], nz + 1)
    # mirror the lattice so coordinates are exactly symmetric about the midplanes
    for arr, length in ((xs, lengths[0]), (ys, lengths[1]), (zs, lengths[2])):
        half = len(arr) // 2
        arr[len(arr) - half:] = (length - arr[:half])[::-1]
    Z, Y, X = np.meshgrid(zs, ys, xs, indexing="ij")
    vertices = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])

    I, J, K = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    I, J, K = (a.transpose(2, 1, 0).ravel() for a in (I, J, K))  # x fastest
    paths = np.array(_KUHN_PATHS)  # (6, 4, 3) corner offsets
    cells = []
    for path in paths:
        corners = []
        for a, b, c in path:
            if split == "symmetric":
                a = np.where(I >= nx // 2, 1 - a, a)
                b = np.where(J >= ny // 2, 1 - b, b)
                c = np.where(K >= nz // 2, 1 - c, c)
            corners.append((I + a) + (nx + 1) * ((J + b) + (ny + 1) * (K + c)))
        cells.append(np.stack(corners, axis=1))
    # cell order: hexahedron-major, then path
    cells = np.stack(cells, axis=1).reshape(-1, 4)
    return Mesh(3, vertices, cells, kind="box", counts=(int(nx), int(ny), int(nz)),
                lengths=tuple(float(v) for v in lengths), split=split)


def affine_map(mesh: Mesh, cell: int) -> AffineMap:
    if not 0 <= cell < mesh.num_cells:
        raise IndexError(f"cell {cell} out of range for mesh with {mesh.num_cells} cells")
    det = float(mesh.det[cell])
    if det <= DEGENERATE_TOL:
        raise InvalidMeshError(f"degenerate cell {cell} (|det J| = {det:.3e})")
    return AffineMap(
        cell_index=int(cell),
        origin=mesh.origins[cell].copy(),
        jacobian=mesh.jacobians[cell].copy(),
        jacobian_inv=mesh.jacobians_inv[cell].copy(),
        det=det,
    )


class SpatialIndex:
    """Uniform bucket grid over the mesh bounding box.

    Each bucket lists, in ascending order, every cell whose bounding box touches
    it (stored CSR-style in ``offsets``/``cells``). Lookups return the
    lowest-index containing cell, same as a full scan.
    """

    # bucket-coordinate slack so cells touching a bucket face are listed in both buckets
    _SLACK = 1e-9

    def __init__(self, mesh: Mesh, buckets_per_axis: Optional[int] = None):
        if mesh.num_cells == 0:
            raise ValueError("cannot index an empty mesh")
        if buckets_per_axis is None:
            buckets_per_axis = 2 * math.ceil(mesh.num_cells ** (1.0 / mesh.dim) - 1e-9)
        if buckets_per_axis < 1:
            raise ValueError("buckets_per_axis must be positive")
        self.mesh = mesh
        self.nb = int(buckets_per_axis)
        self.lo, self.hi = mesh.bbox
        self.size = (self.hi - self.lo) / self.nb
        self._tol = CONTAINMENT_TOL * max(1.0, float(np.max(np.abs(mesh.vertices))))
        self._strides = self.nb ** np.arange(mesh.dim)

        cv = mesh.vertices[mesh.cells]
        lo_b = np.floor((cv.min(axis=1) - self.lo) / self.size - self._SLACK).astype(np.int64)
        hi_b = np.floor((cv.max(axis=1) - self.lo) / self.size + self._SLACK).astype(np.int64)
        lo_b = np.clip(lo_b, 0, self.nb - 1)
        hi_b = np.clip(hi_b, 0, self.nb - 1)
        extent = hi_b - lo_b

        buckets, owners = [], []
        cell_ids = np.arange(mesh.num_cells)
        for offset in itertools.product(*(range(e + 1) for e in extent.max(axis=0))):
            off = np.array(offset)
            ok = np.all(off <= extent, axis=1)
            buckets.append((lo_b[ok] + off) @ self._strides)
            owners.append(cell_ids[ok])
        buckets = np.concatenate(buckets)
        owners = np.concatenate(owners)
        order = np.lexsort((owners, buckets))
        self.cells = owners[order]
        self.offsets = np.concatenate(
            [[0], np.cumsum(np.bincount(buckets, minlength=self.nb ** mesh.dim))])

    def bucket_cells(self, bucket: int) -> np.ndarray:
        return self.cells[self.offsets[bucket]: self.offsets[bucket + 1]]

    def bucket_of(self, points: np.ndarray) -> np.ndarray:
        """Bucket index per point, or -1 for points outside the bounding box."""
        points = np.atleast_2d(points)
        outside = np.any((points < self.lo - self._tol) | (points > self.hi + self._tol), axis=1)
        outside |= ~np.all(np.isfinite(points), axis=1)
        with np.errstate(invalid="ignore"):
            ijk = np.floor((points - self.lo) / self.size)
        ijk = np.clip(np.nan_to_num(ijk), 0, self.nb - 1).astype(np.int64)
        b = ijk @ self._strides
        b[outside] = -1
        return b

    def locate(self, points, chunk: int = 50000) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized location.

        Returns:
            ``(cells, xi)``: the containing cell per point (-1 when none) and the
            reference coordinates in that cell (zero where cell is -1).
        """
        mesh = self.mesh
        points = np.atleast_2d(np.asarray(points, dtype=float))
        n = len(points)
        cells = np.full(n, -1, dtype=np.int64)
        xi = np.zeros((n, mesh.dim))
        for s in range(0, n, chunk):
            p = points[s: s + chunk]
            b = self.bucket_of(p)
            idx = np.flatnonzero(b >= 0)
            if not len(idx):
                continue
            start = self.offsets[b[idx]]
            count = self.offsets[b[idx] + 1] - start
            point_of = np.repeat(idx, count)
            pos = np.arange(count.sum()) - np.repeat(np.cumsum(count) - count, count)
            cand = self.cells[np.repeat(start, count) + pos]
            loc = np.einsum("mij,mj->mi", mesh.jacobians_inv[cand], p[point_of] - mesh.origins[cand])
            hit = (1.0 - loc.sum(axis=1) >= -CONTAINMENT_TOL) & np.all(loc >= -CONTAINMENT_TOL, axis=1)
            hits = np.flatnonzero(hit)
            # candidates are ascending per point, so the first hit is the lowest cell
            first_pts, first = np.unique(point_of[hits], return_index=True)
            cells[s + first_pts] = cand[hits[first]]
            xi[s + first_pts] = loc[hits[first]]
        return cells, xi


def build_spatial_index(mesh: Mesh, buckets_per_axis: Optional[int] = None) -> SpatialIndex:
    return SpatialIndex(mesh, buckets_per_axis)


def locate_cell(mesh: Mesh, index: SpatialIndex, point) -> Optional[int]:
    """Lowest-index cell containing ``point``, or ``None`` outside the mesh."""
    if index.mesh is not mesh:
        raise ValueError("spatial index was built for a different mesh")
    cells, _ = index.locate(np.asarray(point, dtype=float)[None, :])
    c = int(cells[0])
    return None if c < 0 else c


def brute_force_locate(mesh: Mesh, point) -> Optional[int]:
    """Scan every cell; the reference answer for :func:`locate_cell`."""
    for c in range(mesh.num_cells):
        if np.all(mesh.barycentric(c, point) >= -CONTAINMENT_TOL):
            return c
    return None


def facet_incidence_counts(mesh: Mesh) -> Counter:
    """Histogram of how many cells share each facet."""
    return Counter(len(cs) for cs in mesh.facet_cells().values())
