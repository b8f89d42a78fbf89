import numpy as np
import pytest
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from fevis.expr import parse
from fevis.mesh import Mesh, box_mesh, unit_square_mesh
from fevis.solver import (HELMHOLTZ_FORCING, ConvergenceError, assemble_helmholtz, assemble_load,
                          assemble_load_exact, assemble_mass, assemble_stiffness, cg, cg_solve,
                          helmholtz_exact, l2_error, local_mass, local_stiffness, solve_helmholtz)
from fevis.space import FEField, function_space, interpolate


def _reference_triangle():
    return Mesh(2, np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]))


class TestLocalMatrices:
    def test_p1_reference_mass(self):
        V = function_space(_reference_triangle(), "P", 1)
        want = np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]]) / 24
        np.testing.assert_allclose(local_mass(V)[0], want, atol=1e-12)

    def test_p1_reference_stiffness(self):
        V = function_space(_reference_triangle(), "P", 1)
        want = np.array([[2, -1, -1], [-1, 1, 0], [-1, 0, 1]]) / 2
        np.testing.assert_allclose(local_stiffness(V)[0], want, atol=1e-12)

    def test_p1_tetrahedron(self):
        # volume 1/6; mass (1/120)(1 + delta_ij); gradients of barycentrics
        m = Mesh(3, np.vstack([np.zeros(3), np.eye(3)]), np.array([[0, 1, 2, 3]]))
        V = function_space(m, "P", 1)
        np.testing.assert_allclose(local_mass(V)[0], (np.ones((4, 4)) + np.eye(4)) / 120, atol=1e-12)
        g = np.vstack([-np.ones(3), np.eye(3)])
        np.testing.assert_allclose(local_stiffness(V)[0], g @ g.T / 6, atol=1e-12)

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_mass_against_brute_force(self, k):
        # stretched cell; midpoint sums over a fine sub-lattice as an independent integrator
        verts = np.array([[0.2, 0.1], [1.4, 0.3], [0.5, 1.2]])
        m = Mesh(2, verts, np.array([[0, 1, 2]]))
        V = function_space(m, "P", k)
        n = 300
        i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        keep = i + j < n - 1
        # centroids of the "upward" sub-triangles, then "downward" ones
        up = np.column_stack([(i[keep] + 1 / 3) / n, (j[keep] + 1 / 3) / n])
        down = np.column_stack([(i[keep] + 2 / 3) / n, (j[keep] + 2 / 3) / n])
        last = i + j == n - 1
        up = np.vstack([up, np.column_stack([(i[last] + 1 / 3) / n, (j[last] + 1 / 3) / n])])
        xi = np.vstack([up, down])
        phi = V.element.values(xi)
        area = m.det[0] / 2
        brute = phi.T @ phi * area / len(xi)
        np.testing.assert_allclose(local_mass(V)[0], brute, atol=5e-5 * np.abs(brute).max())


class TestAssembly:
    @pytest.mark.parametrize("make,k", [
        (lambda: unit_square_mesh(3, 3), 1),
        (lambda: unit_square_mesh(2, 3, (1.0, 0.5)), 3),
        (lambda: box_mesh(2, 2, 1, (1, 1, 1)), 2),
    ])
    def test_symmetric_positive_definite(self, make, k):
        V = function_space(make(), "P", k)
        A, _ = assemble_helmholtz(V, lambda x: np.ones(x.shape[:-1]))
        assert sp.issparse(A) and A.format == "csr"
        assert abs(A - A.T).max() <= 1e-12 * abs(A).max()
        rng = np.random.default_rng(0)
        for _ in range(20):
            x = rng.normal(size=A.shape[0])
            assert x @ (A @ x) > 0

    def test_mass_sums_to_area(self):
        V = function_space(unit_square_mesh(3, 2, (2.0, 1.5)), "P", 3)
        assert assemble_mass(V).sum() == pytest.approx(3.0, rel=1e-12)

    def test_stiffness_kills_constants(self):
        V = function_space(box_mesh(2, 2, 2, (1, 1, 1)), "P", 2)
        np.testing.assert_allclose(assemble_stiffness(V) @ np.ones(V.global_dof_count), 0, atol=1e-12)

    def test_stiffness_energy_of_linear(self):
        # integral |grad(x + 2y)|^2 = 5 * area
        V = function_space(unit_square_mesh(3, 3), "P", 2)
        u = interpolate(V, parse("x[0]+2*x[1]", 2)).coeffs
        assert u @ (assemble_stiffness(V) @ u) == pytest.approx(5.0, rel=1e-12)

    def test_constant_load_sums_to_measure(self):
        V = function_space(unit_square_mesh(4, 4, (2.0, 1.0)), "P", 3)
        f = interpolate(V, parse("3", 2))
        assert assemble_load(V, f).sum() == pytest.approx(6.0, abs=1e-10)
        _, b = assemble_helmholtz(V, f)
        assert b.sum() == pytest.approx(6.0, abs=1e-10)

    def test_load_field_and_expression_agree_for_polynomials(self):
        V = function_space(unit_square_mesh(2, 2), "P", 2)
        expr = parse("x[0]*x[1]+x[1]^2", 2)
        np.testing.assert_allclose(assemble_load(V, interpolate(V, expr)), assemble_load_exact(V, expr), atol=1e-14)

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_galerkin_consistency_constant(self, k):
        V = function_space(unit_square_mesh(3, 3), "CG", k)
        c = 1.7
        f = interpolate(V, parse(repr(c), 2))
        A, b = assemble_helmholtz(V, f)
        assert np.max(np.abs(A @ f.coeffs - b)) <= 1e-9

    def test_forcing_on_other_mesh_rejected(self):
        V = function_space(unit_square_mesh(2, 2), "P", 1)
        W = function_space(unit_square_mesh(2, 2), "P", 1)
        with pytest.raises(ValueError):
            assemble_helmholtz(V, interpolate(W, parse("1", 2)))
        with pytest.raises(ValueError):
            assemble_helmholtz(V, parse("1", 3))


class TestCG:
    def test_identity_one_iteration(self):
        b = np.array([1.0, -2.0, 3.0])
        x, it, _ = cg(sp.identity(3, format="csr"), b)
        np.testing.assert_array_equal(x, b)
        assert it == 1

    def test_two_by_two(self):
        x = cg_solve((np.array([[4.0, 1.0], [1.0, 3.0]]), np.array([1.0, 2.0])))
        np.testing.assert_allclose(x, [1 / 11, 7 / 11], atol=1e-10)

    def test_zero_rhs(self):
        x, it, _ = cg(np.eye(2), np.zeros(2))
        assert it == 0 and not x.any()

    def test_helmholtz_p1_residual_and_oracle(self):
        V = function_space(unit_square_mesh(10, 10), "P", 1)
        A, b = assemble_helmholtz(V, parse(HELMHOLTZ_FORCING, 2))
        x, it, res = cg(A, b, rel_tol=1e-10)
        assert it <= 10 * V.global_dof_count
        assert np.linalg.norm(b - A @ x) <= 1e-10 * np.linalg.norm(b)
        np.testing.assert_allclose(x, spsolve(A.tocsc(), b), atol=1e-8)

    def test_nonconvergence_carries_residual(self):
        V = function_space(unit_square_mesh(6, 6), "P", 2)
        A, b = assemble_helmholtz(V, parse(HELMHOLTZ_FORCING, 2))
        with pytest.raises(ConvergenceError) as info:
            cg(A, b, rel_tol=1e-12, max_iter=3)
        assert info.value.iterations == 3
        assert info.value.residual > info.value.target > 0

    def test_indefinite_rejected(self):
        with pytest.raises(ValueError):
            cg(np.diag([1.0, -1.0]), np.array([1.0, 1.0]))

    def test_deterministic(self):
        V = function_space(unit_square_mesh(5, 5), "P", 2)
        system = assemble_helmholtz(V, parse(HELMHOLTZ_FORCING, 2))
        assert cg_solve(system).tobytes() == cg_solve(system).tobytes()


class TestHelmholtz:
    def test_exact_solution_matches_forcing(self):
        # -lap u + u = (1 + 8 pi^2) u for the cosine product, checked by finite differences
        rng = np.random.default_rng(0)
        x = rng.random((20, 2))
        h = 1e-4
        lap = sum((helmholtz_exact(x + h * e) - 2 * helmholtz_exact(x) + helmholtz_exact(x - h * e)) / h**2
                  for e in np.eye(2))
        f = parse(HELMHOLTZ_FORCING, 2)(x)
        np.testing.assert_allclose(-lap + helmholtz_exact(x), f, atol=1e-4 * np.abs(f).max())

    def test_l2_error_zero_for_exact_polynomial(self):
        V = function_space(unit_square_mesh(2, 2), "P", 3)
        expr = parse("x[0]^3 - x[1]*x[0]", 2)
        assert l2_error(interpolate(V, expr), expr) < 1e-14

    def test_l2_error_of_constant_offset(self):
        V = function_space(unit_square_mesh(2, 2, (2.0, 1.0)), "P", 1)
        f = FEField(V, np.full(V.global_dof_count, 3.0))
        assert l2_error(f, lambda x: np.zeros(x.shape[:-1])) == pytest.approx(3 * np.sqrt(2.0), rel=1e-14)

    def test_ten_by_ten_errors(self):
        e1 = l2_error(solve_helmholtz(unit_square_mesh(10, 10), 1), helmholtz_exact)
        e3 = l2_error(solve_helmholtz(unit_square_mesh(10, 10), 3), helmholtz_exact)
        assert np.isfinite(e1) and e1 < 0.5
        assert e3 * 10 <= e1

    def test_interpolated_forcing_mode(self):
        u = solve_helmholtz(unit_square_mesh(8, 8), 2, forcing="interpolate")
        assert l2_error(u, helmholtz_exact) < 0.05

    @pytest.mark.parametrize("k", [1, 2])
    def test_convergence_order(self, k):
        errs = [l2_error(solve_helmholtz(unit_square_mesh(n, n), k), helmholtz_exact) for n in (4, 8, 16)]
        orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(orders >= k + 0.5)

    def test_rejects_3d_and_bad_mode(self):
        with pytest.raises(ValueError):
            solve_helmholtz(box_mesh(1, 1, 1), 1)
        with pytest.raises(ValueError):
            solve_helmholtz(unit_square_mesh(2, 2), 1, forcing="guess")
