import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fevis.element import MAX_DEGREE, eval_basis, eval_basis_gradients, lagrange_element

CASES = [(d, k) for d in (2, 3) for k in range(1, MAX_DEGREE + 1)]


def _dofs(dim, k):
    # dimension of P_k in `dim` variables: C(k + dim, dim)
    num = 1
    for i in range(1, dim + 1):
        num = num * (k + i) // i
    return num


def _random_reference_points(dim, n, seed=0):
    rng = np.random.default_rng(seed)
    return rng.dirichlet(np.ones(dim + 1), size=n)[:, 1:]


@pytest.mark.parametrize("dim,k", CASES)
def test_node_count_and_kronecker(dim, k):
    e = lagrange_element(dim, k)
    assert e.ndofs == _dofs(dim, k)
    phi = e.values(e.nodes)
    assert np.max(np.abs(phi - np.eye(e.ndofs))) <= 1e-10


@pytest.mark.parametrize("dim,k", CASES)
def test_partition_of_unity(dim, k):
    e = lagrange_element(dim, k)
    xi = _random_reference_points(dim, 50)
    phi, dphi = e.tabulate(xi)
    np.testing.assert_allclose(phi.sum(axis=1), 1.0, atol=1e-10)
    np.testing.assert_allclose(dphi.sum(axis=1), 0.0, atol=1e-8)


@pytest.mark.parametrize("dim,k", [c for c in CASES if c[1] <= 6])
def test_reproduces_every_monomial_up_to_degree(dim, k):
    e = lagrange_element(dim, k)
    xi = _random_reference_points(dim, 40, seed=k)
    phi = e.values(xi)
    for powers in itertools.product(range(k + 1), repeat=dim):
        if sum(powers) > k:
            continue
        mono = lambda p: np.prod(p ** np.array(powers), axis=-1)
        np.testing.assert_allclose(phi @ mono(e.nodes), mono(xi), atol=1e-10)


def test_nodes_equispaced_lattice():
    e = lagrange_element(2, 3)
    want = {(i / 3, j / 3) for i in range(4) for j in range(4) if i + j <= 3}
    assert {tuple(np.round(p, 14)) for p in e.nodes} == {tuple(np.round(p, 14)) for p in want}


def test_node_order_vertices_then_edges_then_interior():
    e = lagrange_element(2, 3)
    np.testing.assert_array_equal(e.nodes[:3], [[0, 0], [1, 0], [0, 1]])
    assert e.node_classes == ("vertex",) * 3 + ("edge",) * 6 + ("interior",)
    e3 = lagrange_element(3, 4)
    counts = {c: e3.node_classes.count(c) for c in set(e3.node_classes)}
    assert counts == {"vertex": 4, "edge": 18, "face": 12, "interior": 1}
    order = ["vertex", "edge", "face", "interior"]
    ranks = [order.index(c) for c in e3.node_classes]
    assert ranks == sorted(ranks)


def test_p1_is_barycentric():
    e = lagrange_element(2, 1)
    xi = np.array([0.2, 0.3])
    np.testing.assert_allclose(eval_basis(e, xi), [0.5, 0.2, 0.3], atol=1e-15)
    np.testing.assert_allclose(eval_basis_gradients(e, xi), [[-1, -1], [1, 0], [0, 1]], atol=1e-15)


@pytest.mark.parametrize("dim,k", [(2, 1), (2, 3), (2, 7), (3, 2), (3, 5)])
def test_gradients_match_central_differences(dim, k):
    e = lagrange_element(dim, k)
    xi = _random_reference_points(dim, 10, seed=1) * 0.9 + 0.02
    h = 1e-6
    grad = e.tabulate(xi)[1]
    for a in range(dim):
        step = np.zeros(dim)
        step[a] = h
        fd = (e.values(xi + step) - e.values(xi - step)) / (2 * h)
        np.testing.assert_allclose(grad[:, :, a], fd, atol=1e-6 * max(1.0, np.abs(fd).max()))


@pytest.mark.parametrize("bad", [0, -1, MAX_DEGREE + 1])
def test_rejects_unsupported_degree(bad):
    with pytest.raises(ValueError):
        lagrange_element(2, bad)


def test_single_point_shapes():
    e = lagrange_element(3, 2)
    assert eval_basis(e, [0.1, 0.2, 0.3]).shape == (10,)
    assert eval_basis_gradients(e, [0.1, 0.2, 0.3]).shape == (10, 3)
    assert e.tabulate(np.zeros((4, 3)))[1].shape == (4, 10, 3)


@settings(max_examples=60, deadline=None)
@given(k=st.integers(1, MAX_DEGREE),
       a=st.floats(0, 1), b=st.floats(0, 1))
def test_partition_of_unity_anywhere(k, a, b):
    e = lagrange_element(2, k)
    assert eval_basis(e, [a, b * (1 - a)]).sum() == pytest.approx(1.0, abs=1e-9)
