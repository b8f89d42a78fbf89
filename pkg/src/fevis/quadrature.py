"""Quadrature rules on the reference triangle and tetrahedron."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import factorial

import numpy as np
from scipy.special import roots_jacobi

MAX_DEGREE = 20


@dataclass(frozen=True)
class QuadratureRule:
    dim: int
    degree: int
    points: np.ndarray
    weights: np.ndarray

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Contract sampled values (quadrature points along axis 0) with the weights."""
        return np.tensordot(self.weights, values, axes=(0, 0))


def simplex_monomial_integral(exponents) -> float:
    """Exact integral of ``prod xi_i^a_i`` over the reference simplex."""
    num = 1
    for a in exponents:
        num *= factorial(a)
    return num / factorial(sum(exponents) + len(exponents))


def _collapsed(dim: int, degree: int):
    """Conical-product Gauss-Jacobi rule (Duffy collapse); all weights positive."""
    n = degree // 2 + 1
    # s-direction of a collapse from the square/cube: weight (1-s)^(dim-1-axis)
    rules = []
    for axis in range(dim):
        alpha = dim - 1 - axis
        x, w = roots_jacobi(n, alpha, 0)
        rules.append(((x + 1) / 2, w / 2 ** (alpha + 1)))
    if dim == 2:
        (a, wa), (b, wb) = rules
        A, B = np.meshgrid(a, b, indexing="ij")
        pts = np.column_stack([A.ravel(), (B * (1 - A)).ravel()])
        wts = np.outer(wa, wb).ravel()
    else:
        (a, wa), (b, wb), (c, wc) = rules
        A, B, C = np.meshgrid(a, b, c, indexing="ij")
        x0 = A
        x1 = B * (1 - A)
        x2 = C * (1 - A) * (1 - B)
        pts = np.column_stack([x0.ravel(), x1.ravel(), x2.ravel()])
        wts = np.einsum("i,j,k->ijk", wa, wb, wc).ravel()
    return pts, wts


def _symmetric(dim: int, degree: int):
    """Low-order symmetric rules with positive weights, or None."""
    if degree <= 1:
        return np.full((1, dim), 1.0 / (dim + 1)), np.array([1.0 / factorial(dim)])
    if degree == 2 and dim == 2:
        pts = np.array([[1 / 6, 1 / 6], [2 / 3, 1 / 6], [1 / 6, 2 / 3]])
        return pts, np.full(3, 1 / 6)
    if degree == 2 and dim == 3:
        a = (5 - np.sqrt(5)) / 20
        b = (5 + 3 * np.sqrt(5)) / 20
        pts = np.array([[a, a, a], [b, a, a], [a, b, a], [a, a, b]])
        return pts, np.full(4, 1 / 24)
    return None


@lru_cache(maxsize=None)
def quadrature_rule(dim: int, degree: int) -> QuadratureRule:
    """A rule exact for polynomials of total degree ``<= degree``."""
    if dim not in (2, 3):
        raise ValueError(f"dimension must be 2 or 3, got {dim}")
    if int(degree) != degree or not 0 <= degree <= MAX_DEGREE:
        raise ValueError(f"quadrature degree must be an integer in [0, {MAX_DEGREE}], got {degree}")
    degree = int(degree)
    rule = _symmetric(dim, degree) or _collapsed(dim, degree)
    pts, wts = rule
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(dim, degree, pts, wts)
