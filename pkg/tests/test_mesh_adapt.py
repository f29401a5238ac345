import numpy as np
import pytest

from chwet.fem import FemSpace
from chwet.mesh import bisect, generate_rectangle
from chwet.mesh_adapt import (MetricField, MetricParams, MeshAdapter, adapt, adapt_to_function,
                              compute_metric, recover_hessian)
from chwet.physics import mass
from chwet.scheme import State
from oracles import brute_force_conformity, structured_hessian


def interior_vertices(V, margin=0.15):
    x = V.mesh.vertices
    return np.flatnonzero(np.all((x > margin) & (x < 1 - margin), axis=1))


def grid(n=20):
    return FemSpace(generate_rectangle(1, 1, n, n))


def test_linear_field_has_zero_hessian():
    V = grid()
    H = recover_hessian(V, V.interpolate(lambda x, y: 1 + 2 * x - 3 * y))
    assert np.abs(H).max() < 1e-10


@pytest.mark.parametrize("func", [lambda x, y: x ** 2, lambda x, y: x * y, lambda x, y: np.sin(2 * x) * y])
def test_hessian_against_structured_oracle(func):
    V = grid()
    H = recover_hessian(V, V.interpolate(func))
    idx = interior_vertices(V)
    for i in idx:
        ref = structured_hessian(func, *V.mesh.vertices[i])
        assert np.abs(H[i] - ref).max() <= 0.1 * max(1.0, np.abs(ref).max())


def test_metric_clamps():
    p = MetricParams(gamma=1.0, h_min=1e-3, h_max=0.1)
    m = compute_metric(np.zeros((1, 2, 2)), p)
    assert np.allclose(m.eigenvalues, 1 / 0.1 ** 2)
    m = compute_metric(np.diag([1e12, -1e12])[None], p)
    assert np.allclose(m.eigenvalues, 1e6)
    m = compute_metric(np.diag([500.0, -2000.0])[None], p)
    assert np.allclose(sorted(m.eigenvalues[0]), [500.0, 2000.0])
    R = np.array([[np.cos(0.3), -np.sin(0.3)], [np.sin(0.3), np.cos(0.3)]])
    m = compute_metric((R @ np.diag([500.0, -2000.0]) @ R.T)[None], p)
    assert np.allclose(m.tensors[0], R @ np.diag([500.0, 2000.0]) @ R.T)
    assert m.size()[0] == pytest.approx(1 / np.sqrt(2000.0))


def test_params_validation():
    for kw in ({"gamma": 0}, {"h_min": 0.1, "h_max": 0.05}, {"adapt_every": 0}):
        with pytest.raises(ValueError):
            MetricParams(**kw)


def _uniform_metric(mesh, h):
    n = mesh.n_vertices
    lam = np.full((n, 2), 1 / h ** 2)
    return MetricField(np.einsum("ni,ij->nij", lam, np.eye(2)), lam)


def test_matching_metric_leaves_mesh_unchanged():
    m = generate_rectangle(1, 1, 10, 10)
    p = MetricParams(h_min=0.01, h_max=0.5)
    new, _ = adapt(m, [], _uniform_metric(m, 0.12), p)  # longest edge 0.141 within [0.6, 1.4] h
    assert new is m


def test_constant_and_linear_transfer():
    m = bisect(generate_rectangle(1, 1, 6, 6), np.arange(30))
    V = FemSpace(m)
    p = MetricParams(h_min=0.01, h_max=0.5, passes=3)
    lin = V.interpolate(lambda x, y: 2 * x - y)
    new, (c, l) = adapt(m, [np.full(m.n_vertices, 0.7), lin], _uniform_metric(m, 0.05), p)
    assert new.n_vertices > m.n_vertices and np.all(c == 0.7)
    assert np.allclose(l, 2 * new.vertices[:, 0] - new.vertices[:, 1], atol=1e-14)
    coarse, (c2,) = adapt(new, [c], _uniform_metric(new, 0.5), p)
    assert coarse.n_vertices < new.n_vertices and np.all(c2 == 0.7)


def test_interface_band_refinement():
    h_min = 0.004
    p = MetricParams(gamma=0.01, h_min=h_min, h_max=0.1)
    eps = 0.01
    func = lambda x, y: np.tanh((x - 0.37) / (np.sqrt(2) * eps))  # noqa: E731
    m = adapt_to_function(generate_rectangle(1, 1, 10, 10), func, p)
    assert brute_force_conformity(m.triangles, m.boundary_edges)
    V = FemSpace(m)
    centroid = m.vertices[m.triangles].mean(axis=1)
    longest = m.edge_lengths().max(axis=1)
    band = np.abs(centroid[:, 0] - 0.37) < 10 * h_min
    small = longest < 1.5 * h_min * np.sqrt(2)
    assert small.sum() > 0
    assert band[small].mean() >= 0.8
    # element count grows only near the interface
    assert (~band).sum() < band.sum()
    # refinement leaves the interpolated field's mass unchanged
    assert np.isfinite(mass(V, V.interpolate(func)))


def test_refinement_only_event_conserves_mass():
    V = FemSpace(generate_rectangle(1, 1, 8, 8))
    phi = V.interpolate(lambda x, y: np.tanh((x - 0.5) / 0.05))
    s = State.initial(V, phi, 0.01)
    hook = MeshAdapter(MetricParams(gamma=0.01, h_min=0.01, h_max=0.125, adapt_every=1, c_coarsen=1e-9))
    out = hook(State(V, phi, phi, 0.0, 0.01, 1))
    assert out is not None
    new, drift = out
    assert abs(drift) < 1e-12 and new.space.dof_count > V.dof_count
    assert hook(State(V, phi, phi, 0.0, 0.01, 1)) is not None
    assert MeshAdapter(MetricParams(adapt_every=5))(State(V, phi, phi, 0.0, 0.01, 1)) is None
    assert s.step == 0
