"""
Convergence, dissipation and contact-angle studies.

Each harness takes a base :class:`~chwet.io.ScenarioConfig`, runs the
simulations it needs and returns a JSON-serialisable dict, optionally also
written to ``result_path``.
"""
from __future__ import annotations

import copy
import json
import math
import time as _time
from pathlib import Path

import numpy as np

from . import build
from .fem import FemSpace, l2_difference
from .mesh import BoundaryTag
from .scheme import SchemeParams, State, contact_angles, step
from .time_adapt import run_to_time

DT_REF = 0.00665


def observed_order(sizes, errors) -> float:
    """Least-squares slope of ``log(error)`` against ``log(size)``."""
    sizes, errors = np.asarray(sizes, float), np.asarray(errors, float)
    if len(sizes) < 2 or np.any(errors <= 0):
        return float("nan")
    return float(np.polyfit(np.log(sizes), np.log(errors), 1)[0])


def _write(result, result_path):
    if result_path is not None:
        Path(result_path).parent.mkdir(parents=True, exist_ok=True)
        Path(result_path).write_text(json.dumps(result, indent=2, default=str))
    return result


def _fixed_run(state, physics, scheme, dt, T, solver=None):
    """Integrate with a fixed step; ``T - time`` must be a multiple of ``dt``."""
    n = int(round((T - state.time) / dt))
    if n < 1 or abs(n * dt - (T - state.time)) > 1e-9 * max(1.0, T):
        raise ValueError(f"dt = {dt} does not divide the interval up to T = {T}")
    state = State(state.space, state.phi, state.mu, state.time, dt, state.step)
    reports = []
    for _ in range(n):
        state, rep = step(state, physics, scheme, solver)
        reports.append(rep)
    return state, reports


def relax(state, physics, steps: int, dt: float, solver=None):
    """Smooth the discrete initial data with small first-order steps; time is reset to 0."""
    if steps <= 0:
        return state
    s = State(state.space, state.phi, state.mu, 0.0, dt, 0)
    for _ in range(steps):
        s, _ = step(s, physics, SchemeParams.od1w(), solver)
    return State.initial(s.space, s.phi, state.dt)


def _base_state(cfg):
    cfg = copy.deepcopy(cfg)
    cfg.mesh_adapt.enabled = False
    return build.initial_state(cfg)


def converge_time(cfg, dts, dt_ref: float = DT_REF, schemes=("od1w", "od2w", "od2modw"),
                  T: float | None = None, relax_steps: int = 0, relax_dt: float = 1e-3,
                  result_path=None) -> dict:
    """Self-convergence in time on a fixed mesh.

    Errors are L2 distances at time ``T`` (default ``cfg.time.T``) to the
    solution computed with ``dt_ref``; every step size must divide ``T``.
    """
    T = cfg.time.T if T is None else T
    physics = build.physics_params(cfg)
    solver = build.solver_config(cfg)
    state0 = relax(_base_state(cfg), physics, relax_steps, relax_dt, solver)
    space = state0.space
    out = {"kind": "converge_time", "T": T, "dt_ref": dt_ref, "dts": list(map(float, dts)),
           "relax_steps": relax_steps, "schemes": {}}
    for name in schemes:
        scheme = SchemeParams.from_name(name, cfg.scheme.beta_factor)
        start = _time.perf_counter()
        try:
            ref, _ = _fixed_run(state0, physics, scheme, dt_ref, T, solver)
            errors = []
            for dt in dts:
                s, _ = _fixed_run(state0, physics, scheme, dt, T, solver)
                d = s.phi - ref.phi
                errors.append(float(np.sqrt(d @ (_mass(space) @ d))))
            out["schemes"][name] = {"errors": errors, "order": observed_order(dts, errors),
                                    "seconds": _time.perf_counter() - start}
        except ValueError as exc:
            out["schemes"][name] = {"errors": None, "order": float("nan"), "error": str(exc)}
    return _write(out, result_path)


def _mass(space):
    from .scheme import _operators
    return _operators(space)[0]


def converge_space(cfg, hs, h_ref: float = 0.02, dt: float | None = None, T: float | None = None,
                   scheme_name: str | None = None, result_path=None) -> dict:
    """Self-convergence in space on uniform rectangle meshes of size ``h``.

    The rectangle of the base config is meshed with ``lx/h x ly/h`` cells;
    errors are L2 distances at ``T`` to the ``h_ref`` solution, integrated
    on the reference mesh.
    """
    T = cfg.time.T if T is None else T
    dt = cfg.time.dt if dt is None else dt
    physics = build.physics_params(cfg)
    solver = build.solver_config(cfg)
    scheme = SchemeParams.from_name(scheme_name or cfg.scheme.name, cfg.scheme.beta_factor)
    if cfg.mesh.source != "rectangle":
        raise ValueError("converge_space needs a rectangle mesh")
    sols = {}
    for h in list(hs) + [h_ref]:
        c = copy.deepcopy(cfg)
        c.mesh.nx = int(round(cfg.mesh.lx / h))
        c.mesh.ny = int(round(cfg.mesh.ly / h))
        if abs(c.mesh.nx * h - cfg.mesh.lx) > 1e-9 or abs(c.mesh.ny * h - cfg.mesh.ly) > 1e-9:
            raise ValueError(f"h = {h} does not divide the rectangle {cfg.mesh.lx} x {cfg.mesh.ly}")
        s, _ = _fixed_run(_base_state(c), physics, scheme, dt, T, solver)
        sols[h] = s
    ref = sols[h_ref]
    errors = [l2_difference(ref.space, ref.phi, sols[h].space, sols[h].phi) for h in hs]
    out = {"kind": "converge_space", "T": T, "dt": dt, "h_ref": h_ref, "hs": list(map(float, hs)),
           "errors": errors, "order": observed_order(hs, errors), "scheme": scheme_name or cfg.scheme.name}
    return _write(out, result_path)


def dissipation_study(cfg, dts, schemes=("od1w", "od2w"), T: float | None = None,
                      relax_steps: int = 100, relax_dt: float = 1e-3, result_path=None) -> dict:
    """Total numerical dissipation ``sum dt |ND|`` over ``[0, T]`` for each step size."""
    T = cfg.time.T if T is None else T
    physics = build.physics_params(cfg)
    solver = build.solver_config(cfg)
    state0 = relax(_base_state(cfg), physics, relax_steps, relax_dt, solver)
    out = {"kind": "dissipation", "T": T, "dts": list(map(float, dts)), "schemes": {}}
    for name in schemes:
        scheme = SchemeParams.from_name(name, cfg.scheme.beta_factor)
        totals, philic_max, philic_min = [], 0.0, math.inf
        for dt in dts:
            _, reps = _fixed_run(state0, physics, scheme, dt, T, solver)
            totals.append(float(sum(r.dt * abs(r.nd) for r in reps)))
            philic_max = max(philic_max, max(abs(r.nd_philic) for r in reps))
            philic_min = min(philic_min, min(r.nd_philic for r in reps))
        out["schemes"][name] = {"total_nd": totals, "slope": observed_order(dts, totals),
                                "max_abs_nd_philic": philic_max, "min_nd_philic": philic_min}
    return _write(out, result_path)


def measure_angle(space: FemSpace, phi, epsilon: float, window_factor: float = 5.0, degree: int = 2):
    found = contact_angles(space, phi, BoundaryTag.SOLID, window_factor * epsilon, degree)
    if not found:
        raise ValueError("the zero isoline does not meet the substrate")
    return float(np.mean([a for _, a in found])), [float(a) for _, a in found]


def angle_test(cfg, thetas, T: float | None = None, tol: float = 1e-6, degree: int = 2,
               result_path=None) -> dict:
    """Relax a sessile droplet for each imposed angle and measure the contact angle.

    A run stops at ``T`` or once ``max |phi_new - phi_old| / dt < tol``.
    """
    T = cfg.time.T if T is None else T
    rows = []
    for theta in thetas:
        c = copy.deepcopy(cfg)
        c.physics.theta_kind = "uniform"
        c.physics.theta = float(theta)
        physics = build.physics_params(c)
        state = build.initial_state(c)
        post = None
        if c.mesh_adapt.enabled:
            from .mesh_adapt import MeshAdapter
            post = MeshAdapter(build.metric_params(c))
        start = _time.perf_counter()

        def settled(o, prev):
            return float(np.max(np.abs(o.state.phi - prev.phi))) / o.dt_used < tol

        res = run_to_time(state, physics, build.scheme_params(c), build.solver_config(c),
                          build.time_params(c), T, post_step=post, stop=settled)
        prev = res.state
        steps = len(res.outcomes)
        angle, per_point = measure_angle(prev.space, prev.phi, c.physics.epsilon, degree=degree)
        rows.append({"theta": float(theta), "theta_star": angle, "ratio": angle / float(theta),
                     "per_contact_point": per_point, "final_time": prev.time, "steps": steps,
                     "dof_count": prev.space.dof_count, "seconds": _time.perf_counter() - start})
    return _write({"kind": "angle_test", "rows": rows}, result_path)
