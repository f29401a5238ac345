"""Turn a :class:`~chwet.io.ScenarioConfig` into solver objects and run it."""
from __future__ import annotations

import json
import logging
import time as _time
from pathlib import Path

import numpy as np

from . import io
from .fem import FemSpace
from .linalg import LinearSolveConfig
from .mesh import SIDES, BoundaryLabel, generate_rectangle, import_mesh
from .mesh_adapt import MeshAdapter, MetricParams, adapt_to_function
from .physics import PhysicsParams, ThetaField, initial_condition, mass, two_droplets, tanh_interface, droplet
from .scheme import SchemeParams, State, energy_report
from .time_adapt import TimeAdaptParams, run_to_time

log = logging.getLogger(__name__)


def physics_params(cfg) -> PhysicsParams:
    p = cfg.physics
    if p.theta_kind == "uniform":
        theta = ThetaField.uniform(p.theta)
    elif p.theta_kind == "per_label":
        theta = ThetaField.per_label(p.theta_by_subid, p.theta)
    elif p.theta_kind == "analytic":
        theta = ThetaField.analytic(p.theta0, p.amplitude, p.fx, p.fy)
    else:
        raise ValueError(f"unknown theta.kind {p.theta_kind!r}")
    return PhysicsParams(p.epsilon, p.mobility, theta, dict(p.mdot), dict(p.dirichlet_phi))


def scheme_params(cfg) -> SchemeParams:
    return SchemeParams.from_name(cfg.scheme.name, cfg.scheme.beta_factor)


def time_params(cfg) -> TimeAdaptParams | None:
    t = cfg.time
    params = TimeAdaptParams(t.dt_min, t.dt_max, t.dE_min, t.dE_max, t.factor, t.dt, t.max_recalculations)
    return params if t.adapt else None


def metric_params(cfg) -> MetricParams:
    a = cfg.mesh_adapt
    return MetricParams(a.gamma, a.h_min, a.h_max, a.adapt_every, a.passes, mass_correction=a.mass_correction)


def solver_config(cfg) -> LinearSolveConfig:
    s = cfg.solver
    return LinearSolveConfig(s.method, s.rel_tolerance, s.max_iterations, s.preconditioner)


def build_mesh(cfg):
    m = cfg.mesh
    if m.source == "file":
        return import_mesh(m.path)
    # each side carries its index as sub-id: bottom 0, right 1, top 2, left 3
    labels = {side: (BoundaryLabel.solid(k) if side in m.solid else BoundaryLabel.open(k))
              for k, side in enumerate(SIDES)}
    return generate_rectangle(m.lx, m.ly, m.nx, m.ny, labels, origin=(m.x0, m.y0))


def _initial_function(cfg):
    """Closed-form initial field as ``f(x, y)``, or None for random data."""
    kind, p, eps = cfg.initial.kind, cfg.initial.params, cfg.physics.epsilon
    if kind == "tanh_interface":
        return lambda x, y: tanh_interface(x, y, p.get("theta", np.pi / 2), eps, p.get("x0", 0.0), p.get("y0", 0.0))
    if kind == "droplet":
        return lambda x, y: droplet(x, y, (p.get("cx", 0.0), p.get("cy", 0.0)), p["radius"], eps)
    if kind == "two_droplets":
        return lambda x, y: two_droplets(x, y, p.get("x1", 0.65), p.get("x2", 1.35), p.get("radius", 0.25),
                                         eps, p.get("sharp", False))
    if kind == "constant":
        return lambda x, y: np.full_like(x, float(p.get("value", 0.0)))
    return None


def initial_state(cfg) -> State:
    mesh = build_mesh(cfg)
    func = _initial_function(cfg)
    if cfg.mesh_adapt.enabled and cfg.mesh_adapt.initial and func is not None:
        mesh = adapt_to_function(mesh, func, metric_params(cfg))
    space = FemSpace(mesh, cfg.mesh.degree)
    params = dict(cfg.initial.params)
    if cfg.initial.kind == "droplet":
        params["center"] = (params.pop("cx", 0.0), params.pop("cy", 0.0))
    if cfg.initial.kind == "random_normal":
        params["seed"] = cfg.seed
    phi = initial_condition(space, cfg.initial.kind, cfg.physics.epsilon, **params)
    return State.initial(space, phi, cfg.time.dt)


def apply_overrides(cfg, output=None, seed=None, scheme=None, no_mesh_adapt=False,
                    no_time_adapt=False, fixed_dt=None):
    if output is not None:
        cfg.output.directory = str(output)
    if seed is not None:
        cfg.seed = int(seed)
    if scheme is not None:
        cfg.scheme.name = scheme
    if no_mesh_adapt:
        cfg.mesh_adapt.enabled = False
    if no_time_adapt:
        cfg.time.adapt = False
    if fixed_dt is not None:
        cfg.time.adapt = False
        cfg.time.dt = float(fixed_dt)
    return cfg.validate()


def run_scenario(cfg, output_dir=None, quiet: bool = False) -> dict:
    """Run a configured simulation, writing CSV/VTK output and ``result.json``."""
    out = Path(output_dir or cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "energy.csv"
    if csv_path.exists():
        csv_path.unlink()
    start = _time.perf_counter()
    physics = physics_params(cfg)
    scheme = scheme_params(cfg)
    solver = solver_config(cfg)
    adapt = time_params(cfg)
    state = initial_state(cfg)
    post = MeshAdapter(metric_params(cfg)) if cfg.mesh_adapt.enabled else None
    if post is not None and state.space.degree != 1:
        raise ValueError("mesh adaptation requires mesh.degree = 1")

    rep0 = energy_report(state.space, state.phi, physics, state.time)
    io.append_csv(csv_path, rep0, 0, 0, state.space.dof_count)
    vtk_every = cfg.output.vtk_every
    if vtk_every:
        io.write_vtk(state.space.mesh, {"phi": state.phi, "mu": state.mu}, out / "state_00000.vtk")
    stats = {"steps": 0, "recalculations": 0}

    def record(o):
        st = o.state
        stats["steps"] += 1
        stats["recalculations"] += o.recalculations
        if st.step % cfg.output.csv_every == 0:
            io.append_csv(csv_path, o.report, st.step, o.recalculations, o.dof_count, o.mesh_mass_drift)
        if vtk_every and st.step % vtk_every == 0:
            io.write_vtk(st.space.mesh, {"phi": st.phi, "mu": st.mu}, out / f"state_{st.step:05d}.vtk")

    res = run_to_time(state, physics, scheme, solver, adapt, cfg.time.T, [record], post_step=post)
    final = res.state
    if vtk_every and final.step % vtk_every:
        io.write_vtk(final.space.mesh, {"phi": final.phi, "mu": final.mu}, out / f"state_{final.step:05d}.vtk")
    io.save_checkpoint(out / "final_state.npz", final)
    rep = energy_report(final.space, final.phi, physics, final.time)
    summary = {
        "final_time": final.time,
        "steps": stats["steps"],
        "recalculations": stats["recalculations"],
        "E_mix": rep.e_mix,
        "E_wall": rep.e_wall,
        "E_total": rep.e_total,
        "mass": rep.mass,
        "initial_E_total": rep0.e_total,
        "initial_mass": rep0.mass,
        "dof_count": final.space.dof_count,
        "wall_clock_seconds": _time.perf_counter() - start,
        "config": cfg.to_dict(),
    }
    (out / "result.json").write_text(json.dumps(summary, indent=2, default=str))
    if not quiet:
        print(f"t = {final.time:.6g}  steps = {stats['steps']}  E = {rep.e_total:.12g}  "
              f"M = {rep.mass:.12g}  wall-clock = {summary['wall_clock_seconds']:.1f} s")
    return summary
