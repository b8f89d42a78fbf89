"""Lagrange elements of arbitrary degree on the reference simplex."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

MAX_DEGREE = 10

_CLASS_NAMES = {2: {1: "vertex", 2: "edge", 3: "interior"},
                3: {1: "vertex", 2: "edge", 3: "face", 4: "interior"}}


def _lattice(dim: int, k: int) -> list[tuple[int, ...]]:
    """Barycentric multi-indices ``(b0, b1, ..., b_dim)`` summing to ``k``.

    Ordered vertices first (in reference vertex order), then edges, faces and
    interior nodes, each group by support and then lexicographically.
    """
    idx = []
    for a in itertools.product(range(k + 1), repeat=dim):
        if sum(a) <= k:
            idx.append((k - sum(a),) + a)

    def key(b):
        support = tuple(i for i, v in enumerate(b) if v)
        return (len(support), support, tuple(-v for v in b))

    return sorted(idx, key=key)


@dataclass(frozen=True, eq=False)
class ReferenceElement:
    """Continuous Lagrange ``P_k`` element on the reference simplex ``{xi >= 0, sum(xi) <= 1}``.

    Basis functions use the product form over barycentric coordinates,

        phi_b(lam) = prod_i prod_{j < b_i} (k lam_i - j) / (j + 1),

    which is nodal on the principal lattice without any linear solve.
    ``lattice[i]`` is the barycentric multi-index of node ``i``; entry 0 belongs
    to the reference origin.
    """

    dim: int
    degree: int
    nodes: np.ndarray
    lattice: np.ndarray
    node_classes: tuple[str, ...]

    @property
    def ndofs(self) -> int:
        return len(self.nodes)

    def _factors(self, xi: np.ndarray):
        k = self.degree
        lam = np.concatenate([1.0 - xi.sum(axis=1, keepdims=True), xi], axis=1)
        F = np.empty(lam.shape + (k + 1,))
        dF = np.empty_like(F)
        F[..., 0] = 1.0
        dF[..., 0] = 0.0
        for m in range(k):
            t = (k * lam - m) / (m + 1)
            F[..., m + 1] = F[..., m] * t
            dF[..., m + 1] = dF[..., m] * t + F[..., m] * (k / (m + 1))
        return F, dF

    def tabulate(self, xi) -> tuple[np.ndarray, np.ndarray]:
        """Basis values ``(n, ndofs)`` and reference gradients ``(n, ndofs, dim)``."""
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        F, dF = self._factors(xi)
        cols = np.arange(self.dim + 1)
        f = F[:, cols, self.lattice]  # (n, ndofs, dim+1)
        df = dF[:, cols, self.lattice]
        phi = np.prod(f, axis=2)
        dlam = np.empty_like(f)
        for i in range(self.dim + 1):
            g = f.copy()
            g[:, :, i] = df[:, :, i]
            dlam[:, :, i] = np.prod(g, axis=2)
        dphi = dlam[:, :, 1:] - dlam[:, :, :1]
        return phi, dphi

    def values(self, xi) -> np.ndarray:
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        F, _ = self._factors(xi)
        return np.prod(F[:, np.arange(self.dim + 1), self.lattice], axis=2)


@lru_cache(maxsize=None)
def lagrange_element(dim: int, k: int) -> ReferenceElement:
    """Build (and cache) the degree-``k`` Lagrange element in ``dim`` dimensions."""
    if dim not in (2, 3):
        raise ValueError(f"dimension must be 2 or 3, got {dim}")
    if int(k) != k or not 1 <= k <= MAX_DEGREE:
        raise ValueError(f"degree must be an integer in [1, {MAX_DEGREE}], got {k}")
    k = int(k)
    lattice = np.array(_lattice(dim, k), dtype=np.int64)
    nodes = lattice[:, 1:] / k
    classes = tuple(_CLASS_NAMES[dim][int(np.count_nonzero(b))] for b in lattice)
    lattice.setflags(write=False)
    nodes.setflags(write=False)
    return ReferenceElement(dim, k, nodes, lattice, classes)


def eval_basis(elem: ReferenceElement, xi) -> np.ndarray:
    """All basis functions at one reference point; ``(ndofs,)``."""
    return elem.values(np.asarray(xi, dtype=float)[None, :])[0]


def eval_basis_gradients(elem: ReferenceElement, xi) -> np.ndarray:
    """Reference-coordinate gradients at one point; ``(ndofs, dim)``."""
    return elem.tabulate(np.asarray(xi, dtype=float)[None, :])[1][0]
