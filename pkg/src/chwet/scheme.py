"""
The linear implicit-explicit time step for Cahn-Hilliard with wetting.

Given ``phi_n`` the step solves for ``(phi_{n+1}, mu_{n+1/alpha})`` from::

    (d_t phi, psi) + b (grad mu, grad psi) = (mdot, psi)_boundary
    (mu, nu) = eps (grad phi_s, grad nu) + (1/eps) (fhat_m, nu) + (fhat_w, nu)_wall

where ``phi_s = (1 - s) phi_n + s phi_{n+1}`` with ``s = 1/alpha + beta``.
(alpha, beta) = (2, 0) is the second-order optimal-dissipation variant,
(1, 0) the first-order one, and (2, c dt) the modified second-order one.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import physics as ph
from .fem import (FemSpace, assemble_boundary_load, assemble_boundary_mass, assemble_load,
                  assemble_mass, assemble_stiffness, assemble_weighted_mass)
from .linalg import LinearSolveConfig, solve
from .mesh import BoundaryTag

QUAD_ORDER = 4  # per polynomial degree
EDGE_POINTS = 2  # for P1, one more per extra degree


def _ep(space):
    return EDGE_POINTS + space.degree - 1


@dataclass(frozen=True)
class SchemeParams:
    alpha: int = 2
    beta: float = 0.0
    beta_factor: float | None = None  # beta = beta_factor * dt when set

    def __post_init__(self):
        if self.alpha not in (1, 2):
            raise ValueError(f"alpha must be 1 or 2, got {self.alpha}")
        if self.beta_factor is None:
            self._check_beta(self.beta)
        elif self.beta_factor < 0:
            raise ValueError("beta_factor must be non-negative")

    def _check_beta(self, beta):
        if not 0 <= beta <= 1 - 1 / self.alpha + 1e-15:
            raise ValueError(f"beta = {beta} outside [0, {1 - 1 / self.alpha}] for alpha = {self.alpha}")

    def beta_at(self, dt: float) -> float:
        if self.beta_factor is None:
            return self.beta
        beta = self.beta_factor * dt
        self._check_beta(beta)
        return beta

    @classmethod
    def od1w(cls) -> "SchemeParams":
        return cls(1, 0.0)

    @classmethod
    def od2w(cls) -> "SchemeParams":
        return cls(2, 0.0)

    @classmethod
    def od2modw(cls, factor: float = 10.0) -> "SchemeParams":
        return cls(2, 0.0, factor)

    @classmethod
    def from_name(cls, name: str, factor: float = 10.0) -> "SchemeParams":
        key = name.lower().replace("-", "").replace("_", "")
        if key == "od1w":
            return cls.od1w()
        if key == "od2w":
            return cls.od2w()
        if key == "od2modw":
            return cls.od2modw(factor)
        raise ValueError(f"unknown scheme {name!r} (expected od1w, od2w or od2modw)")


@dataclass(frozen=True)
class State:
    """Discrete state after ``step`` accepted steps.

    ``mu`` is the chemical potential computed by the last step and ``dt`` the
    time step to try next.
    """

    space: FemSpace
    phi: np.ndarray
    mu: np.ndarray
    time: float
    dt: float
    step: int = 0

    def __post_init__(self):
        if len(self.phi) != self.space.dof_count or len(self.mu) != self.space.dof_count:
            raise ValueError("phi and mu must live on the state's space")
        if not self.dt > 0:
            raise ValueError(f"time step must be positive, got {self.dt}")

    @classmethod
    def initial(cls, space: FemSpace, phi, dt: float, time: float = 0.0) -> "State":
        phi = np.asarray(phi, dtype=float)
        return cls(space, phi, np.zeros_like(phi), time, dt, 0)


def _operators(space: FemSpace):
    c = space._cache
    if "M" not in c:
        c["M"] = assemble_mass(space)
        c["K"] = assemble_stiffness(space)
    return c["M"], c["K"]


def _flux_load(space: FemSpace, physics: ph.PhysicsParams):
    if not physics.mdot:
        return np.zeros(space.dof_count)
    bq = space.boundary_quadrature(None, _ep(space))
    vals = np.zeros(bq.weights.shape)
    for subid, value in physics.mdot.items():
        vals[(bq.tags == BoundaryTag.OPEN) & (bq.subids == subid)] = value
    return assemble_boundary_load(space, vals, None, _ep(space))


def dirichlet_dofs(space: FemSpace, physics: ph.PhysicsParams):
    """Dof indices and values of strongly imposed phi."""
    if not physics.dirichlet_phi:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    mesh = space.mesh
    dofs, vals = [], []
    for subid, value in physics.dirichlet_phi.items():
        mask = (mesh.boundary_tags == BoundaryTag.OPEN) & (mesh.boundary_subids == subid)
        d = np.unique(space._boundary_edge_dofs()[mask])
        dofs.append(d)
        vals.append(np.full(len(d), float(value)))
    dofs = np.concatenate(dofs)
    vals = np.concatenate(vals)
    dofs, idx = np.unique(dofs, return_index=True)
    return dofs, vals[idx]


def assemble_step_system(state: State, physics: ph.PhysicsParams, scheme: SchemeParams, dt: float | None = None):
    """Block system ``A [phi_new; mu] = rhs`` for one step of size ``dt``.

    The first block row is the phi equation multiplied by ``dt``.  Returns
    ``(A, rhs)`` with ``A`` in CSR format.
    """
    space = state.space
    dt = state.dt if dt is None else dt
    eps, b = physics.epsilon, physics.mobility
    s = 1.0 / scheme.alpha + scheme.beta_at(dt)
    M, K = _operators(space)
    phi_n = state.phi

    q = space.quadrature(QUAD_ORDER * space.degree)
    u = space.values_at(phi_n, q)
    W = assemble_weighted_mass(space, 1.5 * u * u - 0.5, QUAD_ORDER * space.degree, weight_degree=2 * space.degree)
    L_m = assemble_load(space, -0.5 * u ** 3 - 0.5 * u, QUAD_ORDER * space.degree)

    bq, theta = ph.wall_theta(space, physics, _ep(space))
    if len(bq.edge_ids):
        a_w, b_w = ph.fhat_w_split(space.values_at(phi_n, bq), theta)
        B = assemble_boundary_mass(space, BoundaryTag.SOLID, b_w, _ep(space))
        L_w = assemble_boundary_load(space, a_w, BoundaryTag.SOLID, _ep(space))
    else:
        B = sp.csr_matrix(M.shape)
        L_w = np.zeros(space.dof_count)

    A = sp.bmat([[M, dt * b * K],
                 [-(eps * s) * K - W / eps - B, M]], format="csr")
    rhs = np.concatenate([M @ phi_n + dt * _flux_load(space, physics),
                          eps * (1 - s) * (K @ phi_n) + L_m / eps + L_w])

    dofs, vals = dirichlet_dofs(space, physics)
    if len(dofs):
        n = space.dof_count
        rows = n + dofs
        A = A.tolil()
        for r, d in zip(rows, dofs):
            A.rows[r] = [int(d)]
            A.data[r] = [1.0]
        A = A.tocsr()
        rhs[rows] = vals
    return A, rhs


def numerical_dissipation(space: FemSpace, phi_n, phi_np1, physics: ph.PhysicsParams,
                          scheme: SchemeParams, dt: float):
    """Raw ``(nd_philic, nd_phobic, nd_wall)`` integrals of one step."""
    beta = scheme.beta_at(dt)
    _, K = _operators(space)
    delta = (np.asarray(phi_np1) - np.asarray(phi_n)) / dt
    philic = dt * (1.0 / scheme.alpha - 0.5 + beta) * float(delta @ (K @ delta))

    q = space.quadrature(QUAD_ORDER * space.degree)
    u0 = space.values_at(phi_n, q)
    u1 = space.values_at(phi_np1, q)
    phobic = float(np.sum(q.weights * (ph.fhat_m(u0, u1) * (u1 - u0) / dt - (ph.F_m(u1) - ph.F_m(u0)) / dt)))

    bq, theta = ph.wall_theta(space, physics, _ep(space))
    if len(bq.edge_ids):
        w0 = space.values_at(phi_n, bq)
        w1 = space.values_at(phi_np1, bq)
        wall = float(np.sum(bq.weights * (ph.fhat_w(w0, w1, theta) * (w1 - w0) / dt
                                          - (ph.wall_energy(w1, theta) - ph.wall_energy(w0, theta)) / dt)))
    else:
        wall = 0.0
    return philic, phobic, wall


def branch_crossings(space: FemSpace, phi_n, phi_np1) -> int:
    """Number of wall quadrature points where phi moves across a joint at +-1."""
    bq = space.boundary_quadrature(BoundaryTag.SOLID, _ep(space))
    if len(bq.edge_ids) == 0:
        return 0
    w0 = np.sign(np.trunc(space.values_at(phi_n, bq)))
    w1 = np.sign(np.trunc(space.values_at(phi_np1, bq)))
    return int(np.count_nonzero(w0 != w1))


def energy_report(space, phi, physics, time, dt=0.0, **extra) -> ph.EnergyReport:
    e_mix, e_wall = ph.free_energy(space, phi, physics, QUAD_ORDER * space.degree, _ep(space))
    return ph.EnergyReport(time=time, dt=dt, e_mix=e_mix, e_wall=e_wall, mass=ph.mass(space, phi), **extra)


@dataclass(frozen=True)
class StepResult:
    phi: np.ndarray
    mu: np.ndarray
    dt: float
    report: ph.EnergyReport
    energy_before: float


def trial_step(state: State, physics: ph.PhysicsParams, scheme: SchemeParams,
               solver: LinearSolveConfig | None = None, dt: float | None = None,
               energy_before: float | None = None) -> StepResult:
    """Solve one step of size ``dt`` (default ``state.dt``) without committing it."""
    space = state.space
    dt = state.dt if dt is None else dt
    A, rhs = assemble_step_system(state, physics, scheme, dt)
    x = solve(A, rhs, solver)
    n = space.dof_count
    phi, mu = x[:n], x[n:]
    _, K = _operators(space)
    diss = dt * physics.mobility * float(mu @ (K @ mu))
    philic, phobic, wall = numerical_dissipation(space, state.phi, phi, physics, scheme, dt)
    eps = physics.epsilon
    work = dt * float(_flux_load(space, physics) @ mu) if physics.mdot else 0.0
    if energy_before is None:
        e0 = ph.free_energy(space, state.phi, physics, QUAD_ORDER * space.degree, _ep(space))
        energy_before = e0[0] + e0[1]
    report = energy_report(space, phi, physics, state.time + dt, dt,
                           dissipation=diss, nd_philic=philic, nd_phobic=phobic, nd_wall=wall,
                           nd=eps * philic + phobic / eps + wall, boundary_work=work,
                           branch_crossings=branch_crossings(space, state.phi, phi))
    return StepResult(phi, mu, dt, report, energy_before)


def step(state: State, physics: ph.PhysicsParams, scheme: SchemeParams,
         solver: LinearSolveConfig | None = None):
    """Advance one step of size ``state.dt``; returns ``(new_state, report)``."""
    r = trial_step(state, physics, scheme, solver)
    new = State(state.space, r.phi, r.mu, state.time + r.dt, state.dt, state.step + 1)
    return new, r.report


def energy_residual(result: StepResult) -> float:
    """``E(phi_new) - E(phi_old) + D + dt ND - boundary work``; zero up to round-off."""
    rep = result.report
    return rep.e_total - result.energy_before + rep.dissipation + rep.dt * rep.nd - rep.boundary_work


# ----------------------------------------------------------------------------
# Contact angle measurement
# ----------------------------------------------------------------------------

def _isoline_graph(space: FemSpace, phi):
    mesh = space.mesh
    edges, tri2edge = mesh.edges()
    pos = np.asarray(phi)[: mesh.n_vertices] >= 0
    cross = pos[edges[:, 0]] != pos[edges[:, 1]]
    u0 = phi[edges[:, 0]]
    u1 = phi[edges[:, 1]]
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(cross, u0 / (u0 - u1), 0.0)
    pts = mesh.vertices[edges[:, 0]] + s[:, None] * (mesh.vertices[edges[:, 1]] - mesh.vertices[edges[:, 0]])
    tc = cross[tri2edge]
    links = tri2edge[tc.sum(axis=1) == 2]
    mask = cross[links]
    pairs = links[mask].reshape(-1, 2)
    adj = {}
    for a, b in pairs.tolist():
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    return edges, cross, pts, adj


def contact_angles(space: FemSpace, phi, substrate=BoundaryTag.SOLID, window: float = 0.05, degree: int = 2):
    """Angles (radians, measured inside ``phi > 0``) at every contact point.

    The zero isoline of the P1 interpolant is traced from each point where it
    meets the substrate, up to distance ``window`` from the wall.  The traced
    points are fitted by a least-squares polynomial of ``degree`` giving the
    wall-tangential offset as a function of height, and the angle follows
    from its slope at the wall.  Returns a list of ``(contact_point, angle)``.
    """
    if space.degree != 1:
        raise ValueError("contact angle extraction needs a P1 field")
    mesh = space.mesh
    phi = np.asarray(phi, dtype=float)
    edges, cross, pts, adj = _isoline_graph(space, phi)
    nv = mesh.n_vertices
    ekeys = edges[:, 0] * nv + edges[:, 1]
    bmask = mesh.boundary_edge_mask(substrate)
    be = mesh.boundary_edges[bmask]
    bkeys = np.minimum(be[:, 0], be[:, 1]) * nv + np.maximum(be[:, 0], be[:, 1])
    eids = np.searchsorted(ekeys, bkeys)
    out = []
    for (i, j), e in zip(be, eids):
        if not cross[e]:
            continue
        c = pts[e]
        t = mesh.vertices[j] - mesh.vertices[i]
        t /= np.linalg.norm(t)
        n_in = np.array([-t[1], t[0]])
        side = 1.0 if phi[j] >= 0 else -1.0  # direction along the wall into phi > 0
        seen = {e}
        frontier = [e]
        while frontier:
            nxt = []
            for k in frontier:
                for m in adj.get(k, ()):
                    if m not in seen and (pts[m] - c) @ n_in <= window:
                        seen.add(m)
                        nxt.append(m)
            frontier = nxt
        P = pts[sorted(seen)] - c
        h = P @ n_in
        s = P @ t
        if len(P) < degree + 1:
            continue
        coef = np.polynomial.polynomial.polyfit(h, s, degree)
        slope = coef[1]
        d = np.array([slope, 1.0]) / np.hypot(slope, 1.0)
        out.append((c, float(np.arccos(np.clip(side * d[0], -1, 1)))))
    return out


def equilibrium_angle(space: FemSpace, phi, substrate=BoundaryTag.SOLID, window: float | None = None,
                      epsilon: float | None = None, degree: int = 2) -> float:
    """Mean contact angle of the zero isoline at the substrate (radians).

    ``window`` defaults to ``5 * epsilon``.
    """
    if window is None:
        if epsilon is None:
            raise ValueError("give either window or epsilon")
        window = 5 * epsilon
    found = contact_angles(space, phi, substrate, window, degree)
    if not found:
        raise ValueError("the zero isoline does not meet the substrate")
    return float(np.mean([a for _, a in found]))
