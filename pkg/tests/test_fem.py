import numpy as np
import pytest

from chwet.fem import (FemSpace, assemble_boundary_mass, assemble_mass, assemble_stiffness,
                       assemble_weighted_mass, evaluate_at_points, gradient_field, integrate_functional,
                       l2_difference)
from chwet.mesh import BoundaryLabel, BoundaryTag, bisect, generate_rectangle, from_arrays
from chwet.physics import F_m
from oracles import dense_mass_stiffness, integrate_triangles


def unit_triangle_space():
    m = from_arrays([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]], [[0, 1], [1, 2], [2, 0]], [1, 1, 1], [0, 0, 0])
    return FemSpace(m)


def square(n=4, labels=None, degree=1):
    return FemSpace(generate_rectangle(1, 1, n, n, labels), degree)


def test_p1_mass_on_unit_triangle():
    M = assemble_mass(unit_triangle_space()).toarray()
    area = 0.5
    assert np.allclose(np.diag(M), area / 6) and np.allclose(M[~np.eye(3, dtype=bool)], area / 12)


@pytest.mark.parametrize("degree", [1, 2])
def test_mass_partition_of_unity_and_symmetry(degree):
    V = square(3, degree=degree)
    M = assemble_mass(V)
    one = np.ones(V.dof_count)
    assert one @ M @ one == pytest.approx(1.0, abs=1e-14)
    assert abs(M - M.T).max() <= 1e-14 * abs(M).max()
    if degree == 1:
        assert np.all(M @ one > 0)


def test_matrices_match_dense_oracle():
    m = bisect(generate_rectangle(1, 0.5, 3, 2), [0, 3, 7])
    V = FemSpace(m)
    Mo, Ko = dense_mass_stiffness(m.vertices, m.triangles)
    assert np.allclose(assemble_mass(V).toarray(), Mo, atol=1e-14)
    assert np.allclose(assemble_stiffness(V).toarray(), Ko, atol=1e-13)


@pytest.mark.parametrize("degree", [1, 2])
def test_stiffness_kernel_and_linear_energy(degree):
    V = square(3, degree=degree)
    K = assemble_stiffness(V)
    assert np.abs(K @ np.ones(V.dof_count)).max() < 1e-12
    u = V.interpolate(lambda x, y: x)
    assert u @ K @ u == pytest.approx(1.0, abs=1e-12)


def test_stiffness_eigenvalues_nonnegative():
    V = square(4)  # 25 dofs
    ev = np.linalg.eigvalsh(assemble_stiffness(V).toarray())
    assert ev.min() >= -1e-12


def test_weighted_mass():
    V = square(4)
    M = assemble_mass(V).toarray()
    assert np.allclose(assemble_weighted_mass(V, 1.0).toarray(), M, atol=1e-12)
    assert np.allclose(assemble_weighted_mass(V, 2.5).toarray(), 2.5 * M, atol=1e-12)
    phi = V.interpolate(lambda x, y: x)
    q = V.quadrature(4)
    W = assemble_weighted_mass(V, V.values_at(phi, q) ** 2, 4, weight_degree=2)
    one = np.ones(V.dof_count)
    assert one @ W @ one == pytest.approx(1 / 3, abs=1e-12)


def test_weighted_mass_rejects_low_order():
    with pytest.raises(ValueError):
        assemble_weighted_mass(square(2), 1.0, quad_order=3, weight_degree=2)


def test_boundary_mass():
    V = square(3, {"bottom": BoundaryLabel.solid()})
    one = np.ones(V.dof_count)
    assert one @ assemble_boundary_mass(V) @ one == pytest.approx(4.0)
    assert one @ assemble_boundary_mass(V, BoundaryTag.SOLID) @ one == pytest.approx(1.0)
    assert assemble_boundary_mass(V, None, 0.0).count_nonzero() == 0
    B = assemble_boundary_mass(V, BoundaryTag.SOLID).toarray()
    interior = np.setdiff1d(np.arange(V.dof_count), V.boundary_dofs(BoundaryTag.SOLID))
    assert np.all(B[interior] == 0) and np.all(B[:, interior] == 0)


def test_integrate_functional_basics():
    V = square(3)
    assert integrate_functional(V, lambda u, g, x: 1.0) == pytest.approx(1.0)
    assert integrate_functional(V, lambda u, g, x: F_m(u), np.ones(V.dof_count)) == 0.0
    assert integrate_functional(V, lambda u, g, x: F_m(u), np.zeros(V.dof_count)) == pytest.approx(0.25)


@pytest.mark.parametrize("degree", [1, 2])
def test_integrate_functional_matches_high_order_oracle(degree):
    m = bisect(generate_rectangle(1, 1, 2, 2), [1, 4])
    V = FemSpace(m, degree)
    f = lambda x, y: 0.3 + x - 2 * y + x * y  # noqa: E731
    u = V.interpolate(f)  # exact in P1 only up to the xy term on P2
    if degree == 1:
        u = V.interpolate(lambda x, y: 0.3 + x - 2 * y)
        f = lambda x, y: 0.3 + x - 2 * y  # noqa: E731
    got = integrate_functional(V, lambda w, g, x: F_m(w), u, quad_order=4 * degree)
    ref = integrate_triangles(m.vertices, m.triangles, lambda x, y: F_m(f(x, y)))
    assert got == pytest.approx(ref, abs=1e-10)


def test_integrate_functional_non_finite():
    V = square(2)
    with np.errstate(invalid="ignore"), pytest.raises(ArithmeticError, match="triangle"):
        integrate_functional(V, lambda u, g, x: np.log(u - 5), np.zeros(V.dof_count))


def test_gradient_field():
    V = square(3)
    assert np.all(gradient_field(V, np.full(V.dof_count, 2.0)) == 0)
    g = gradient_field(V, V.interpolate(lambda x, y: x))
    assert np.allclose(g, [1, 0], atol=1e-14)
    phi = V.interpolate(lambda x, y: np.sin(3 * x) * y)
    gg = gradient_field(V, phi)
    assert np.sum(V.areas * np.sum(gg * gg, axis=1)) == pytest.approx(phi @ assemble_stiffness(V) @ phi, rel=1e-12)


def test_point_evaluation_and_l2_difference():
    V = square(4)
    W = FemSpace(bisect(V.mesh, np.arange(V.mesh.n_triangles)))
    f = lambda x, y: 1 + 2 * x - y  # noqa: E731
    pts = np.array([[0.1, 0.2], [0.77, 0.31], [1.0, 1.0]])
    assert np.allclose(evaluate_at_points(V, V.interpolate(f), pts), f(pts[:, 0], pts[:, 1]))
    assert l2_difference(V, V.interpolate(f), W, W.interpolate(f)) < 1e-13
    d = l2_difference(V, V.interpolate(f), W, W.interpolate(lambda x, y: f(x, y) + 0.5))
    assert d == pytest.approx(0.5, rel=1e-12)
