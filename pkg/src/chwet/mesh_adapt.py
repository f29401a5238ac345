"""
Hessian-based sizing and conforming bisection adaptation.

The recovered Hessian ``H`` of the phase field is turned into a metric with
eigenvalues ``min(max(|lambda| / gamma, 1/h_max^2), 1/h_min^2)``.  Its
largest eigenvalue gives an isotropic target edge length
``h = 1 / sqrt(max lambda)``, which drives newest-vertex bisection and
coarsening.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fem import FemSpace, gradient_field
from .mesh import Mesh, bisect, coarsen

C_REFINE = 1.4
C_COARSEN = 0.6


@dataclass(frozen=True)
class MetricParams:
    gamma: float = 0.01
    h_min: float = 0.002
    h_max: float = 0.05
    adapt_every: int = 10
    passes: int = 8
    c_refine: float = C_REFINE
    c_coarsen: float = C_COARSEN
    mass_correction: bool = False

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not 0 < self.h_min < self.h_max:
            raise ValueError(f"need 0 < h_min < h_max, got {self.h_min}, {self.h_max}")
        if self.adapt_every < 1 or self.passes < 1:
            raise ValueError("adapt_every and passes must be at least 1")
        if not 0 < self.c_coarsen < self.c_refine:
            raise ValueError("need 0 < c_coarsen < c_refine")


@dataclass(frozen=True)
class MetricField:
    """Per-vertex metric tensors (N, 2, 2) and their clamped eigenvalues (N, 2)."""

    tensors: np.ndarray
    eigenvalues: np.ndarray

    def size(self) -> np.ndarray:
        """Isotropic target edge length per vertex."""
        return 1.0 / np.sqrt(self.eigenvalues.max(axis=1))


def _vertex_average(mesh: Mesh, cell_values: np.ndarray) -> np.ndarray:
    """Area-weighted average of per-triangle values at the vertices."""
    A = mesh.signed_areas()
    t = mesh.triangles
    shape = cell_values.shape[1:]
    flat = A[:, None] * cell_values.reshape(len(t), -1)
    idx = t.T.ravel()
    out = np.stack([np.bincount(idx, np.tile(flat[:, j], 3), minlength=mesh.n_vertices)
                    for j in range(flat.shape[1])], axis=1)
    wsum = np.bincount(idx, np.tile(A, 3), minlength=mesh.n_vertices)
    return (out / wsum[:, None]).reshape((mesh.n_vertices,) + shape)


def recover_hessian(space: FemSpace, phi) -> np.ndarray:
    """Double gradient recovery of a P1 field; returns symmetric (N, 2, 2) tensors."""
    if space.degree != 1:
        raise ValueError("Hessian recovery needs a P1 field")
    mesh = space.mesh
    g = _vertex_average(mesh, gradient_field(space, phi))
    rows = np.stack([gradient_field(space, g[:, 0]), gradient_field(space, g[:, 1])], axis=1)
    H = _vertex_average(mesh, rows)
    return 0.5 * (H + np.swapaxes(H, 1, 2))


def compute_metric(hessian: np.ndarray, params: MetricParams) -> MetricField:
    lam, R = np.linalg.eigh(hessian)
    lam = np.minimum(np.maximum(np.abs(lam) / params.gamma, 1.0 / params.h_max ** 2), 1.0 / params.h_min ** 2)
    G = np.einsum("nij,nj,nkj->nik", R, lam, R)
    return MetricField(G, lam)


def _transfer_refined(new_mesh: Mesh, old_n: int, values: np.ndarray) -> np.ndarray:
    """Extend vertex values to midpoints appended by bisection (parent average)."""
    par = new_mesh.vertex_parents[old_n:]
    out = np.empty((new_mesh.n_vertices,) + values.shape[1:])
    out[:old_n] = values
    out[old_n:] = 0.5 * (values[par[:, 0]] + values[par[:, 1]])
    return out


def _marks(mesh: Mesh, size: np.ndarray, params: MetricParams):
    longest = mesh.edge_lengths().max(axis=1)
    h = size[mesh.triangles].min(axis=1)
    return np.flatnonzero(longest > params.c_refine * h), np.flatnonzero(longest < params.c_coarsen * h)


def adapt(mesh: Mesh, fields, metric: MetricField, params: MetricParams):
    """Refine and coarsen ``mesh`` towards the metric's sizing field.

    ``fields`` is a list of P1 vertex arrays; they are carried along by
    linear interpolation (new midpoints take the average of the edge ends,
    removed vertices are dropped).  Returns ``(new_mesh, new_fields)``.
    """
    fields = [np.asarray(f, dtype=float) for f in fields]
    size = metric.size()
    for _ in range(params.passes):
        ref, crs = _marks(mesh, size, params)
        changed = False
        if ref.size:
            n0 = mesh.n_vertices
            mesh = bisect(mesh, ref)
            size = _transfer_refined(mesh, n0, size)
            fields = [_transfer_refined(mesh, n0, f) for f in fields]
            changed = True
            _, crs = _marks(mesh, size, params)
        if crs.size:
            new, kept = coarsen(mesh, crs, return_map=True)
            if new is not mesh:
                mesh = new
                size = size[kept]
                fields = [f[kept] for f in fields]
                changed = True
        if not changed:
            break
    return mesh, fields


def adapt_state_fields(space: FemSpace, fields, params: MetricParams, phi=None):
    """Adapt to the Hessian of ``phi`` (default ``fields[0]``) and transfer ``fields``."""
    phi = fields[0] if phi is None else phi
    metric = compute_metric(recover_hessian(space, phi), params)
    return adapt(space.mesh, fields, metric, params)


def adapt_to_function(mesh: Mesh, func, params: MetricParams, max_rounds: int = 60) -> Mesh:
    """Adapt ``mesh`` to the interpolant of ``func(x, y)``, re-interpolating each round."""
    for _ in range(max_rounds):
        space = FemSpace(mesh, 1)
        phi = space.interpolate(func)
        metric = compute_metric(recover_hessian(space, phi), params)
        one = MetricParams(params.gamma, params.h_min, params.h_max, params.adapt_every, 1,
                           params.c_refine, params.c_coarsen)
        new, _ = adapt(mesh, [phi], metric, one)
        if new is mesh:
            return mesh
        mesh = new
    return mesh


class MeshAdapter:
    """Post-step hook adapting the mesh every ``params.adapt_every`` accepted steps."""

    def __init__(self, params: MetricParams):
        self.params = params

    def __call__(self, state):
        from .physics import mass
        from .scheme import State

        if state.step % self.params.adapt_every:
            return None
        space = state.space
        mesh, (phi, mu) = adapt_state_fields(space, [state.phi, state.mu], self.params)
        if mesh is space.mesh:
            return None
        new_space = FemSpace(mesh, 1)
        m_old = mass(space, state.phi)
        if self.params.mass_correction:
            phi = phi + (m_old - mass(new_space, phi)) / mesh.area()
        drift = mass(new_space, phi) - m_old
        return State(new_space, phi, mu, state.time, state.dt, state.step), drift
