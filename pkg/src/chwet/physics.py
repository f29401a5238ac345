"""
Model functions of the Cahn-Hilliard wetting problem.

Pointwise functions accept scalars or numpy arrays.  The wall energy is the
C^2 extension of the cubic wall energy outside [-1, 1], so that the wall
contribution stays bounded below.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .fem import FemSpace, integrate_functional
from .mesh import BoundaryTag

SQRT2 = np.sqrt(2.0)
HALF_SQRT2 = SQRT2 / 2


def F_m(phi):
    """Double-well mixing energy density ``(phi^2 - 1)^2 / 4``."""
    phi = np.asarray(phi, dtype=float)
    return 0.25 * (phi * phi - 1.0) ** 2


def f_m(phi):
    phi = np.asarray(phi, dtype=float)
    return phi ** 3 - phi


def wall_energy(phi, theta):
    """Modified cubic wall energy, quadratic outside the physical range."""
    phi = np.asarray(phi, dtype=float)
    c = HALF_SQRT2 * np.cos(theta)
    inner = (phi ** 3 - 3 * phi) / 3
    low = 2 / 3 - (phi + 1) ** 2
    high = -2 / 3 + (phi - 1) ** 2
    return c * np.where(phi < -1, low, np.where(phi > 1, high, inner))


def f_w(phi, theta):
    """Derivative of :func:`wall_energy` with respect to ``phi``."""
    phi = np.asarray(phi, dtype=float)
    c = HALF_SQRT2 * np.cos(theta)
    return c * np.where(phi < -1, -2 * (phi + 1), np.where(phi > 1, 2 * (phi - 1), phi * phi - 1))


def fhat_m(phi_n, phi_np1):
    """Second-order linearisation of ``f_m`` around the old value."""
    phi_n = np.asarray(phi_n, dtype=float)
    return 1.5 * phi_n ** 2 * phi_np1 - 0.5 * phi_n ** 3 - 0.5 * (phi_n + phi_np1)


def fhat_w_split(phi_n, theta):
    """Coefficients ``(a, b)`` such that ``fhat_w(phi_n, x, theta) = a + b x``."""
    phi_n = np.asarray(phi_n, dtype=float)
    c = -HALF_SQRT2 * np.cos(theta)
    a = c * (1 + np.minimum(1 - phi_n, 0) + np.minimum(1 + phi_n, 0))
    b = -c * np.clip(phi_n, -1, 1)
    return a, b


def fhat_w(phi_n, phi_np1, theta):
    a, b = fhat_w_split(phi_n, theta)
    return a + b * np.asarray(phi_np1, dtype=float)


# ----------------------------------------------------------------------------
# Contact angle fields and parameters
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class ThetaField:
    """Equilibrium contact angle on the solid boundary.

    ``kind`` is 'uniform' (``value``), 'per_label' (``by_subid`` maps boundary
    sub-ids to angles, ``value`` is the fallback) or 'analytic'
    (``theta0 + amplitude cos(fx pi x) cos(fy pi y)`` at physical points).
    """

    kind: str = "uniform"
    value: float = np.pi / 2
    by_subid: Mapping[int, float] = field(default_factory=dict)
    theta0: float = np.pi / 2
    amplitude: float = 0.0
    fx: float = 0.0
    fy: float = 0.0

    def __post_init__(self):
        if self.kind not in ("uniform", "per_label", "analytic"):
            raise ValueError(f"unknown theta kind {self.kind!r}")
        values = [self.value, *self.by_subid.values()]
        if self.kind == "analytic":
            values = [self.theta0 - abs(self.amplitude), self.theta0 + abs(self.amplitude)]
        for v in values:
            if not 0 < v < np.pi:
                raise ValueError(f"contact angle {v} outside (0, pi)")

    @classmethod
    def uniform(cls, theta: float) -> "ThetaField":
        return cls("uniform", value=float(theta))

    @classmethod
    def per_label(cls, by_subid: Mapping[int, float], default: float = np.pi / 2) -> "ThetaField":
        return cls("per_label", value=float(default), by_subid=dict(by_subid))

    @classmethod
    def analytic(cls, theta0, amplitude, fx, fy) -> "ThetaField":
        return cls("analytic", theta0=theta0, amplitude=amplitude, fx=fx, fy=fy)

    def at(self, points, subids=None):
        """Angle at quadrature ``points`` (..., 2) lying on edges with ``subids`` (...,)."""
        shape = points.shape[:-1]
        if self.kind == "uniform":
            return np.full(shape, self.value)
        if self.kind == "per_label":
            out = np.full(shape, self.value)
            sub = np.broadcast_to(subids, shape)
            for k, v in self.by_subid.items():
                out[sub == k] = v
            return out
        x, y = points[..., 0], points[..., 1]
        return self.theta0 + self.amplitude * np.cos(self.fx * np.pi * x) * np.cos(self.fy * np.pi * y)


@dataclass(frozen=True)
class PhysicsParams:
    """Interface width, mobility, contact angles and boundary data.

    ``mdot`` maps boundary sub-ids of Open edges to a mass flux (mass per unit
    boundary length and time entering the domain).  ``dirichlet_phi`` maps
    sub-ids to a value of phi imposed strongly on the dofs of those edges.
    """

    epsilon: float
    mobility: float = 1.0
    theta: ThetaField = field(default_factory=ThetaField)
    mdot: Mapping[int, float] = field(default_factory=dict)
    dirichlet_phi: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not self.mobility > 0:
            raise ValueError(f"mobility must be positive, got {self.mobility}")

    @property
    def has_flux(self) -> bool:
        return any(v != 0 for v in self.mdot.values())


def wall_theta(space: FemSpace, physics: PhysicsParams, npoints: int = 2):
    """Boundary quadrature on the solid wall and the angle at its points."""
    bq = space.boundary_quadrature(BoundaryTag.SOLID, npoints)
    return bq, physics.theta.at(bq.points, bq.subids[:, None] * np.ones(bq.points.shape[1], dtype=int))


def free_energy(space: FemSpace, phi, physics: PhysicsParams, quad_order: int = 4, npoints: int = 2):
    """Return ``(E_mix, E_wall)``."""
    eps = physics.epsilon
    e_mix = integrate_functional(
        space, lambda u, g, x: F_m(u) / eps + 0.5 * eps * np.sum(g * g, axis=-1), phi,
        quad_order=quad_order)
    bq, theta = wall_theta(space, physics, npoints)
    if len(bq.edge_ids) == 0:
        return e_mix, 0.0
    e_wall = float(np.sum(bq.weights * wall_energy(space.values_at(phi, bq), theta)))
    if not np.isfinite(e_wall):
        raise FloatingPointError("non-finite wall energy")
    return e_mix, e_wall


def mass(space: FemSpace, phi) -> float:
    q = space.quadrature(2 * space.degree)
    return float(np.sum(q.weights * space.values_at(phi, q)))


@dataclass(frozen=True)
class EnergyReport:
    """Diagnostics of one accepted step.

    The three ``nd_*`` entries are the raw integrals; the numerical
    dissipation rate entering the energy law is
    ``epsilon * nd_philic + nd_phobic / epsilon + nd_wall`` (see ``nd``).
    ``dissipation`` is ``dt * b * ||grad mu||^2``.
    """

    time: float
    dt: float
    e_mix: float
    e_wall: float
    mass: float
    dissipation: float = 0.0
    nd_philic: float = 0.0
    nd_phobic: float = 0.0
    nd_wall: float = 0.0
    nd: float = 0.0
    boundary_work: float = 0.0
    branch_crossings: int = 0

    @property
    def e_total(self) -> float:
        return self.e_mix + self.e_wall


# ----------------------------------------------------------------------------
# Initial conditions
# ----------------------------------------------------------------------------

def tanh_interface(x, y, theta, epsilon, x0=0.0, y0=0.0):
    """Planar equilibrium profile meeting the wall ``y = y0`` at angle ``theta``.

    The phase ``phi = +1`` lies to the right of the interface and the angle is
    measured inside it.
    """
    return np.tanh(((x - x0) * np.sin(theta) - (y - y0) * np.cos(theta)) / (SQRT2 * epsilon))


def droplet(x, y, center, radius, epsilon):
    d = np.hypot(x - center[0], y - center[1])
    return -np.tanh((d - radius) / (SQRT2 * epsilon))


def two_droplets(x, y, x1, x2, radius, epsilon, sharp=False):
    d1 = np.hypot(x - x1, y)
    d2 = np.hypot(x - x2, y)
    if sharp:
        return np.where((d1 < radius) | (d2 < radius), 1.0, -1.0)
    return 1 - np.tanh((d1 - radius) / (SQRT2 * epsilon)) - np.tanh((d2 - radius) / (SQRT2 * epsilon))


INITIAL_KINDS = ("tanh_interface", "droplet", "two_droplets", "random_normal", "constant")


def initial_condition(space: FemSpace, kind: str, epsilon: float = 0.01, **params) -> np.ndarray:
    """Nodal interpolant of one of the supported initial fields.

    ``random_normal`` draws i.i.d. values with mean ``mean`` (default 0) and
    variance ``variance`` from ``numpy.random.default_rng(seed)``.
    """
    x, y = space.dof_coords[:, 0], space.dof_coords[:, 1]
    if kind == "tanh_interface":
        return tanh_interface(x, y, params.get("theta", np.pi / 2), epsilon,
                              params.get("x0", 0.0), params.get("y0", 0.0))
    if kind == "droplet":
        return droplet(x, y, params.get("center", (0.0, 0.0)), params["radius"], epsilon)
    if kind == "two_droplets":
        return two_droplets(x, y, params.get("x1", 0.65), params.get("x2", 1.35), params.get("radius", 0.25),
                            epsilon, params.get("sharp", False))
    if kind == "random_normal":
        rng = np.random.default_rng(params.get("seed", 0))
        return rng.normal(params.get("mean", 0.0), np.sqrt(params.get("variance", 0.1)), space.dof_count)
    if kind == "constant":
        return np.full(space.dof_count, float(params.get("value", 0.0)))
    raise ValueError(f"unknown initial condition kind {kind!r}")
