"""Build high-order finite-element fields and look at them without lying about them."""

__version__ = "0.1.0"

from .element import ReferenceElement, eval_basis, eval_basis_gradients, lagrange_element
from .expr import Expression, eval_expr, parse
from .mesh import (AffineMap, Mesh, SpatialIndex, affine_map, box_mesh, build_spatial_index,
                   locate_cell, unit_square_mesh)
from .quadrature import QuadratureRule, quadrature_rule
from .render import (AnalyticField, Camera, ImageGrid, RenderConfig, diff_image, mip_render,
                     read_nrrd, sample2d, write_nrrd, write_pgm)
from .solver import LinearSystem, assemble_helmholtz, cg_solve, solve_helmholtz
from .space import (FEField, FunctionSpace, degrade_to_linear, eval_gradient, eval_point,
                    function_space, inside, interpolate, load_field, save_field)

__all__ = [
    "AffineMap", "AnalyticField", "Camera", "Expression", "FEField", "FunctionSpace",
    "ImageGrid", "LinearSystem", "Mesh", "QuadratureRule", "ReferenceElement", "RenderConfig",
    "SpatialIndex", "affine_map", "assemble_helmholtz", "box_mesh", "build_spatial_index",
    "cg_solve", "degrade_to_linear", "diff_image", "eval_basis", "eval_basis_gradients",
    "eval_expr", "eval_gradient", "eval_point", "function_space", "inside", "interpolate",
    "lagrange_element", "load_field", "locate_cell", "mip_render", "parse", "quadrature_rule",
    "read_nrrd", "sample2d", "save_field", "solve_helmholtz", "unit_square_mesh", "write_nrrd",
    "write_pgm",
]
