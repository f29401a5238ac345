"""
Lagrange P1/P2 spaces on triangle meshes: quadrature, assembly, functionals.

Nonlinear coefficients are always evaluated at quadrature points: fields are
interpolated there first and the pointwise function is applied afterwards.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh


class EvaluationError(ArithmeticError):
    """A pointwise integrand produced a non-finite value."""


# ----------------------------------------------------------------------------
# Quadrature
# ----------------------------------------------------------------------------

def _sym3(a, w):
    return [(a, a, w), (1 - 2 * a, a, w), (a, 1 - 2 * a, w)]


@lru_cache(maxsize=None)
def triangle_rule(degree: int):
    """Quadrature on the reference triangle ``{xi, eta >= 0, xi + eta <= 1}``.

    Returns ``(points (nq, 2), weights (nq,))`` with weights summing to 1, so
    that ``sum(w * f) * area`` approximates the integral over a physical
    triangle.  The rule is exact for polynomials of total degree ``degree``.
    """
    if degree < 0:
        raise ValueError("quadrature degree must be non-negative")
    if degree <= 1:
        pts = [(1 / 3, 1 / 3, 1.0)]
    elif degree == 2:
        pts = _sym3(1 / 6, 1 / 3)
    elif degree <= 4:
        pts = (_sym3(0.445948490915965, 0.223381589678011)
               + _sym3(0.091576213509771, 0.109951743655322))
        w = np.array([p[2] for p in pts])
        pts = [(p[0], p[1], p[2] / w.sum()) for p in pts]
    elif degree == 5:
        r15 = np.sqrt(15.0)
        pts = ([(1 / 3, 1 / 3, 9 / 40)]
               + _sym3((6 - r15) / 21, (155 - r15) / 1200)
               + _sym3((6 + r15) / 21, (155 + r15) / 1200))
    else:
        return _collapsed_gauss(degree)
    arr = np.array(pts, dtype=float)
    return arr[:, :2].copy(), arr[:, 2].copy()


def _collapsed_gauss(degree):
    # Duffy map of a tensor Gauss rule; the Jacobian adds one degree in u.
    n = degree // 2 + 2
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1)
    w = 0.5 * w
    U, V = np.meshgrid(x, x, indexing="ij")
    WU, WV = np.meshgrid(w, w, indexing="ij")
    xi = U.ravel()
    eta = (V * (1 - U)).ravel()
    weights = (WU * WV * (1 - U)).ravel() * 2.0
    return np.column_stack([xi, eta]), weights


@lru_cache(maxsize=None)
def edge_rule(npoints: int):
    """Gauss-Legendre on [0, 1] (weights sum to 1), exact to degree ``2n-1``."""
    if npoints < 1:
        raise ValueError("need at least one edge quadrature point")
    x, w = np.polynomial.legendre.leggauss(npoints)
    return 0.5 * (x + 1), 0.5 * w


# ----------------------------------------------------------------------------
# Reference elements
# ----------------------------------------------------------------------------

def _p1_basis(xi, eta):
    l0 = 1 - xi - eta
    val = np.stack([l0, xi, eta], axis=-1)
    grad = np.broadcast_to(np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]]), val.shape + (2,)).copy()
    return val, grad


def _p2_basis(xi, eta):
    lam, dlam = _p1_basis(xi, eta)
    l0, l1, l2 = lam[..., 0], lam[..., 1], lam[..., 2]
    g = dlam[..., 0, :], dlam[..., 1, :], dlam[..., 2, :]
    val = np.stack([
        l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
        4 * l1 * l2, 4 * l2 * l0, 4 * l0 * l1,
    ], axis=-1)
    grad = np.stack([
        (4 * l0 - 1)[..., None] * g[0],
        (4 * l1 - 1)[..., None] * g[1],
        (4 * l2 - 1)[..., None] * g[2],
        4 * (l1[..., None] * g[2] + l2[..., None] * g[1]),
        4 * (l2[..., None] * g[0] + l0[..., None] * g[2]),
        4 * (l0[..., None] * g[1] + l1[..., None] * g[0]),
    ], axis=-2)
    return val, grad


def _edge_basis(degree, s):
    # 1D Lagrange basis on an edge: endpoints first, then the midpoint
    if degree == 1:
        return np.stack([1 - s, s], axis=-1)
    return np.stack([(1 - s) * (1 - 2 * s), s * (2 * s - 1), 4 * s * (1 - s)], axis=-1)


@dataclass(frozen=True)
class Quadrature:
    """Interior quadrature data on every triangle."""

    points: np.ndarray    # (M, nq, 2) physical coordinates
    weights: np.ndarray   # (M, nq), include the triangle area
    basis: np.ndarray     # (nq, nb)
    order: int


@dataclass(frozen=True)
class BoundaryQuadrature:
    """Edge quadrature on a subset of boundary edges."""

    edge_ids: np.ndarray  # (K,) indices into mesh.boundary_edges
    points: np.ndarray    # (K, nq, 2)
    weights: np.ndarray   # (K, nq), include the edge length
    basis: np.ndarray     # (nq, nbe)
    dofs: np.ndarray      # (K, nbe)
    tags: np.ndarray
    subids: np.ndarray


class FemSpace:
    """Continuous Lagrange space of degree 1 or 2 on a mesh."""

    def __init__(self, mesh: Mesh, degree: int = 1):
        if degree not in (1, 2):
            raise ValueError(f"unsupported polynomial degree {degree}")
        self.mesh = mesh
        self.degree = degree
        nv = mesh.n_vertices
        if degree == 1:
            self.cell_dofs = mesh.triangles
            self.dof_count = nv
            self.dof_coords = mesh.vertices
        else:
            edges, tri2edge = mesh.edges()
            self.cell_dofs = np.hstack([mesh.triangles, nv + tri2edge])
            self.dof_count = nv + len(edges)
            self.dof_coords = np.vstack([mesh.vertices, 0.5 * (mesh.vertices[edges[:, 0]]
                                                               + mesh.vertices[edges[:, 1]])])
        self._cache = {}
        p = mesh.vertices[mesh.triangles]
        J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # columns are edge vectors
        self._origin = p[:, 0]
        self._J = J
        self._det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        self._Jinv = np.stack([
            np.stack([J[:, 1, 1], -J[:, 0, 1]], axis=1),
            np.stack([-J[:, 1, 0], J[:, 0, 0]], axis=1),
        ], axis=1) / self._det[:, None, None]
        self.areas = 0.5 * self._det

    def __repr__(self):
        return f"FemSpace(P{self.degree}, {self.dof_count} dofs)"

    @property
    def n_cell_dofs(self):
        return self.cell_dofs.shape[1]

    def _reference(self, xi, eta):
        return _p1_basis(xi, eta) if self.degree == 1 else _p2_basis(xi, eta)

    def quadrature(self, order: int) -> Quadrature:
        key = ("q", order)
        if key not in self._cache:
            ref, w = triangle_rule(order)
            val, _ = self._reference(ref[:, 0], ref[:, 1])
            pts = self._origin[:, None, :] + np.einsum("mij,qj->mqi", self._J, ref)
            self._cache[key] = Quadrature(pts, self.areas[:, None] * w[None, :], val, order)
        return self._cache[key]

    def physical_gradients(self, order: int) -> np.ndarray:
        """Basis gradients at quadrature points, shape (M, nq, nb, 2)."""
        key = ("g", order)
        if key not in self._cache:
            ref, _ = triangle_rule(order)
            _, dref = self._reference(ref[:, 0], ref[:, 1])
            # grad_x psi = J^{-T} grad_ref psi
            self._cache[key] = np.einsum("mji,qbj->mqbi", self._Jinv, dref)
        return self._cache[key]

    def boundary_dofs(self, labels=None) -> np.ndarray:
        mask = self.mesh.boundary_edge_mask(labels)
        return np.unique(self._boundary_edge_dofs()[mask])

    def _boundary_edge_dofs(self):
        if "bdofs" not in self._cache:
            be = self.mesh.boundary_edges
            if self.degree == 1:
                d = be
            else:
                edges, _ = self.mesh.edges()
                nv = self.mesh.n_vertices
                keys = edges[:, 0] * nv + edges[:, 1]
                bkeys = np.minimum(be[:, 0], be[:, 1]) * nv + np.maximum(be[:, 0], be[:, 1])
                d = np.column_stack([be, nv + np.searchsorted(keys, bkeys)])
            self._cache["bdofs"] = d
        return self._cache["bdofs"]

    def boundary_quadrature(self, labels=None, npoints: int = 2) -> BoundaryQuadrature:
        key = ("bq", _label_key(labels), npoints)
        if key not in self._cache:
            mesh = self.mesh
            ids = np.flatnonzero(mesh.boundary_edge_mask(labels))
            be = mesh.boundary_edges[ids]
            s, w = edge_rule(npoints)
            a = mesh.vertices[be[:, 0]]
            b = mesh.vertices[be[:, 1]]
            pts = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]
            length = np.linalg.norm(b - a, axis=1)
            self._cache[key] = BoundaryQuadrature(
                ids, pts, length[:, None] * w[None, :], _edge_basis(self.degree, s),
                self._boundary_edge_dofs()[ids], mesh.boundary_tags[ids], mesh.boundary_subids[ids])
        return self._cache[key]

    def values_at(self, u, quad) -> np.ndarray:
        """Interpolate dof values ``u`` at the points of ``quad``."""
        u = np.asarray(u, dtype=float)
        dofs = quad.dofs if isinstance(quad, BoundaryQuadrature) else self.cell_dofs
        return u[dofs] @ quad.basis.T

    def gradients_at(self, u, order: int) -> np.ndarray:
        """Gradient of ``u`` at interior quadrature points, shape (M, nq, 2)."""
        return np.einsum("mb,mqbi->mqi", np.asarray(u, dtype=float)[self.cell_dofs],
                         self.physical_gradients(order))

    def interpolate(self, func) -> np.ndarray:
        """Nodal interpolant of ``func(x, y)`` (or a constant)."""
        if callable(func):
            x = self.dof_coords
            return np.asarray(func(x[:, 0], x[:, 1]), dtype=float) * np.ones(self.dof_count)
        return np.full(self.dof_count, float(func))


def _label_key(labels):
    if labels is None:
        return None
    if isinstance(labels, (list, tuple, set, frozenset)):
        return tuple(sorted(repr(x) for x in labels))
    return repr(labels)


@dataclass
class Field:
    """Dof vector tied to a space."""

    space: FemSpace
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.space.dof_count,):
            raise ValueError(f"field has {self.values.shape} values, space has {self.space.dof_count} dofs")
        if not np.isfinite(self.values).all():
            raise ValueError("field contains non-finite values")


# ----------------------------------------------------------------------------
# Assembly
# ----------------------------------------------------------------------------

def _scatter(space: FemSpace, local: np.ndarray, rows=None, cols=None, shape=None) -> sp.csr_matrix:
    dofs = space.cell_dofs if rows is None else rows
    cdofs = dofs if cols is None else cols
    nb_r, nb_c = dofs.shape[1], cdofs.shape[1]
    I = np.repeat(dofs, nb_c, axis=1).ravel()
    J = np.tile(cdofs, (1, nb_r)).ravel()
    n = space.dof_count
    A = sp.coo_matrix((local.ravel(), (I, J)), shape=shape or (n, n))
    return A.tocsr()


def _weight_values(weight, points):
    if callable(weight):
        return np.asarray(weight(points), dtype=float) * np.ones(points.shape[:-1])
    w = np.asarray(weight, dtype=float)
    if w.ndim == 0:
        return np.full(points.shape[:-1], float(w))
    if w.shape != points.shape[:-1]:
        raise ValueError(f"weight array has shape {w.shape}, expected {points.shape[:-1]}")
    return w


def assemble_mass(space: FemSpace) -> sp.csr_matrix:
    """Consistent mass matrix, exact for the polynomial integrand."""
    q = space.quadrature(2 * space.degree)
    local = np.einsum("mq,qa,qb->mab", q.weights, q.basis, q.basis)
    return _scatter(space, local)


def assemble_stiffness(space: FemSpace) -> sp.csr_matrix:
    order = 2 * (space.degree - 1)
    q = space.quadrature(order)
    G = space.physical_gradients(order)
    local = np.einsum("mq,mqai,mqbi->mab", q.weights, G, G)
    return _scatter(space, local)


def assemble_weighted_mass(space: FemSpace, weight, quad_order: int = 4,
                           weight_degree: int | None = None) -> sp.csr_matrix:
    """``W_ij = int w psi_i psi_j`` by quadrature of order ``quad_order``.

    ``weight`` is a constant, an array of values at the quadrature points of
    ``space.quadrature(quad_order)``, or a callable of the (M, nq, 2) points.
    ``weight_degree`` declares the polynomial degree of the weight; the rule
    must then be exact for the whole integrand.
    """
    if weight_degree is None:
        weight_degree = 0
    needed = 2 * space.degree + weight_degree
    if quad_order < needed:
        raise ValueError(f"quad_order {quad_order} is below the degree {needed} of the integrand")
    q = space.quadrature(quad_order)
    w = _weight_values(weight, q.points)
    local = np.einsum("mq,mq,qa,qb->mab", q.weights, w, q.basis, q.basis)
    return _scatter(space, local)


def assemble_load(space: FemSpace, values, quad_order: int = 4) -> np.ndarray:
    """``b_i = int f psi_i`` with ``f`` given like the weight of :func:`assemble_weighted_mass`."""
    q = space.quadrature(quad_order)
    f = _weight_values(values, q.points)
    local = np.einsum("mq,mq,qa->ma", q.weights, f, q.basis)
    return np.bincount(space.cell_dofs.ravel(), local.ravel(), minlength=space.dof_count)


def assemble_boundary_mass(space: FemSpace, labels=None, weight=1.0, npoints: int = 2) -> sp.csr_matrix:
    """``B_ij = int_{labeled boundary} w psi_i psi_j``; interior rows stay empty."""
    bq = space.boundary_quadrature(labels, npoints)
    w = _weight_values(weight, bq.points)
    local = np.einsum("kq,kq,qa,qb->kab", bq.weights, w, bq.basis, bq.basis)
    return _scatter(space, local, rows=bq.dofs)


def assemble_boundary_load(space: FemSpace, values, labels=None, npoints: int = 2) -> np.ndarray:
    bq = space.boundary_quadrature(labels, npoints)
    f = _weight_values(values, bq.points)
    local = np.einsum("kq,kq,qa->ka", bq.weights, f, bq.basis)
    return np.bincount(bq.dofs.ravel(), local.ravel(), minlength=space.dof_count)


def integrate_functional(space: FemSpace, integrand, u=None, domain="interior",
                         quad_order: int = 4, npoints: int = 2) -> float:
    """Integrate ``integrand(phi, grad_phi, x)`` over the interior or a boundary part.

    ``domain`` is ``"interior"`` or a boundary label selection (anything
    accepted by :meth:`Mesh.boundary_edge_mask`, or ``"boundary"`` for all).
    On boundaries ``grad_phi`` is passed as None.
    """
    if u is None:
        u = np.zeros(space.dof_count)
    if isinstance(domain, str) and domain == "interior":
        q = space.quadrature(quad_order)
        vals = np.asarray(integrand(space.values_at(u, q), space.gradients_at(u, quad_order), q.points),
                          dtype=float) * np.ones(q.weights.shape)
        bad = ~np.isfinite(vals)
        if bad.any():
            m = int(np.argwhere(bad)[0, 0])
            raise EvaluationError(f"non-finite integrand on triangle {m}")
        return float(np.sum(q.weights * vals))
    labels = None if isinstance(domain, str) and domain == "boundary" else domain
    bq = space.boundary_quadrature(labels, npoints)
    vals = np.asarray(integrand(space.values_at(u, bq), None, bq.points), dtype=float) * np.ones(bq.weights.shape)
    bad = ~np.isfinite(vals)
    if bad.any():
        k = int(np.argwhere(bad)[0, 0])
        edge = space.mesh.boundary_edges[bq.edge_ids[k]]
        raise EvaluationError(f"non-finite integrand on boundary edge {tuple(edge)}")
    return float(np.sum(bq.weights * vals))


def gradient_field(space: FemSpace, u) -> np.ndarray:
    """Exact per-triangle gradient of a P1 field, shape (M, 2)."""
    if space.degree != 1:
        raise ValueError("gradient_field is defined for P1 spaces only")
    u = np.asarray(u, dtype=float)[space.cell_dofs]
    du = np.column_stack([u[:, 1] - u[:, 0], u[:, 2] - u[:, 0]])
    return np.einsum("mji,mj->mi", space._Jinv, du)


def locate_points(mesh: Mesh, points, candidates: int = 12):
    """Triangle index and barycentric coordinates ``(M, 3)`` of each point.

    Points outside the mesh (beyond round-off) raise ValueError.
    """
    from scipy.spatial import cKDTree

    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    p = mesh.vertices[mesh.triangles]
    centroids = p.mean(axis=1)
    k = min(candidates, mesh.n_triangles)
    _, cand = cKDTree(centroids).query(pts, k=k)
    cand = cand.reshape(len(pts), k)
    tri = -np.ones(len(pts), dtype=np.int64)
    bary = np.zeros((len(pts), 3))
    best = np.full(len(pts), -np.inf)

    def bary_of(t, x):
        a, b, c = p[t, 0], p[t, 1], p[t, 2]
        det = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
        l1 = ((x[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (x[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])) / det
        l2 = ((b[:, 0] - a[:, 0]) * (x[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (x[:, 0] - a[:, 0])) / det
        return np.column_stack([1 - l1 - l2, l1, l2])

    for j in range(k):
        lam = bary_of(cand[:, j], pts)
        score = lam.min(axis=1)
        better = score > best
        best[better] = score[better]
        tri[better] = cand[better, j]
        bary[better] = lam[better]
    missing = np.flatnonzero(best < -1e-9)
    for i in missing:  # brute force fallback
        lam = bary_of(np.arange(mesh.n_triangles), np.repeat(pts[i:i + 1], mesh.n_triangles, axis=0))
        t = int(np.argmax(lam.min(axis=1)))
        best[i], tri[i], bary[i] = lam[t].min(), t, lam[t]
    if (best < -1e-9).any():
        i = int(np.argmin(best))
        raise ValueError(f"point {tuple(pts[i])} lies outside the mesh")
    return tri, bary


def evaluate_at_points(space: FemSpace, u, points) -> np.ndarray:
    """Values of the finite element function ``u`` at arbitrary points (..., 2)."""
    points = np.asarray(points, dtype=float)
    tri, lam = locate_points(space.mesh, points)
    vals, _ = space._reference(lam[:, 1], lam[:, 2])
    u = np.asarray(u, dtype=float)
    out = np.einsum("pb,pb->p", u[space.cell_dofs[tri]], vals)
    return out.reshape(points.shape[:-1])


def l2_difference(space_a: FemSpace, u_a, space_b: FemSpace, u_b, quad_order: int = 4) -> float:
    """``||u_a - u_b||_{L2}`` integrated on the quadrature of ``space_a``."""
    q = space_a.quadrature(quad_order)
    if space_b is space_a:
        diff = space_a.values_at(np.asarray(u_a) - np.asarray(u_b), q)
    else:
        diff = space_a.values_at(u_a, q) - evaluate_at_points(space_b, u_b, q.points)
    return float(np.sqrt(np.sum(q.weights * diff * diff)))
