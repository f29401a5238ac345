"""
Scenario configuration, VTK snapshots, CSV diagnostics and checkpoints.

Configuration files are flat ``section.key = value`` lines; see the README
for the full grammar.  Values are numbers (arithmetic with ``pi`` and
``sqrt`` allowed), ``true``/``false``, or bare strings.
"""
from __future__ import annotations

import ast
import logging
import math
import operator
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .mesh import Mesh

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Malformed or invalid configuration."""


# ----------------------------------------------------------------------------
# Value parsing
# ----------------------------------------------------------------------------

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNOPS = {ast.UAdd: operator.pos, ast.USub: operator.neg}
_NAMES = {"pi": math.pi, "e": math.e}
_FUNCS = {"sqrt": math.sqrt, "cos": math.cos, "sin": math.sin, "exp": math.exp}


def _eval_number(node):
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        return node.value
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_eval_number(node.left), _eval_number(node.right))
    if isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
        return _UNOPS[type(node.op)](_eval_number(node.operand))
    if isinstance(node, ast.Name) and node.id in _NAMES:
        return _NAMES[node.id]
    if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS
            and len(node.args) == 1 and not node.keywords):
        return _FUNCS[node.func.id](_eval_number(node.args[0]))
    raise ValueError("not a number")


def parse_value(text: str):
    """Number, boolean, or string."""
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    try:
        return _eval_number(ast.parse(text, mode="eval").body)
    except (SyntaxError, ValueError, ZeroDivisionError, OverflowError, TypeError):
        return text


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Flat ``key -> value`` dict; duplicate keys and malformed lines are errors."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key or not value or any(c.isspace() for c in key):
            raise ConfigError(f"{source}:{lineno}: malformed entry {raw.strip()!r}")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = (parse_value(value), lineno)
    return out


# ----------------------------------------------------------------------------
# Scenario configuration
# ----------------------------------------------------------------------------

SIDE_NAMES = ("bottom", "right", "top", "left")
INITIAL_PARAMS = {
    "tanh_interface": {"theta", "x0", "y0"},
    "droplet": {"cx", "cy", "radius"},
    "two_droplets": {"x1", "x2", "radius", "sharp"},
    "random_normal": {"variance", "mean"},
    "constant": {"value"},
}


@dataclass
class MeshConfig:
    source: str = "rectangle"
    lx: float = 1.0
    ly: float = 1.0
    nx: int = 10
    ny: int = 10
    x0: float = 0.0
    y0: float = 0.0
    solid: tuple = ("bottom",)
    path: str | None = None
    degree: int = 1


@dataclass
class PhysicsConfig:
    epsilon: float = 0.01
    mobility: float = 1.0
    theta: float = math.pi / 2
    theta_kind: str = "uniform"
    theta_by_subid: dict = field(default_factory=dict)
    theta0: float = math.pi / 2
    amplitude: float = 0.0
    fx: float = 0.0
    fy: float = 0.0
    mdot: dict = field(default_factory=dict)
    dirichlet_phi: dict = field(default_factory=dict)


@dataclass
class SchemeConfig:
    name: str = "od2w"
    beta_factor: float = 10.0


@dataclass
class TimeConfig:
    T: float = 1.0
    dt: float = 0.02
    adapt: bool = True
    dt_min: float = 0.0
    dt_max: float = 0.32
    dE_min: float = 1e-4
    dE_max: float = 2e-4
    factor: float = math.sqrt(2.0)
    max_recalculations: int = 60


@dataclass
class MeshAdaptConfig:
    enabled: bool = False
    gamma: float = 0.01
    h_min: float = 0.002
    h_max: float = 0.05
    adapt_every: int = 10
    passes: int = 8
    initial: bool = True
    mass_correction: bool = False


@dataclass
class InitialConfig:
    kind: str = "constant"
    params: dict = field(default_factory=dict)


@dataclass
class OutputConfig:
    directory: str = "output"
    vtk_every: int = 0
    csv_every: int = 1


@dataclass
class SolverConfig:
    method: str = "direct"
    rel_tolerance: float = 1e-10
    max_iterations: int = 500
    preconditioner: str = "ilu"


@dataclass
class ScenarioConfig:
    mesh: MeshConfig = field(default_factory=MeshConfig)
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    scheme: SchemeConfig = field(default_factory=SchemeConfig)
    time: TimeConfig = field(default_factory=TimeConfig)
    mesh_adapt: MeshAdaptConfig = field(default_factory=MeshAdaptConfig)
    initial: InitialConfig = field(default_factory=InitialConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self) -> "ScenarioConfig":
        """Check ranges by building the typed parameter objects."""
        from . import build
        m = self.mesh
        if m.source not in ("rectangle", "file"):
            raise ConfigError(f"mesh.source must be 'rectangle' or 'file', got {m.source!r}")
        if m.source == "file":
            if not m.path:
                raise ConfigError("mesh.path is required when mesh.source = file")
            if not Path(m.path).is_file():
                raise ConfigError(f"mesh.path: file {m.path!r} does not exist")
        else:
            for name in ("lx", "ly"):
                if not getattr(m, name) > 0:
                    raise ConfigError(f"mesh.{name} must be positive")
            for name in ("nx", "ny"):
                v = getattr(m, name)
                if not (isinstance(v, int) and v >= 1):
                    raise ConfigError(f"mesh.{name} must be a positive integer")
        if m.degree not in (1, 2):
            raise ConfigError("mesh.degree must be 1 or 2")
        bad = set(m.solid) - set(SIDE_NAMES)
        if bad:
            raise ConfigError(f"mesh.solid: unknown side(s) {sorted(bad)}")
        if self.initial.kind not in INITIAL_PARAMS:
            raise ConfigError(f"initial.kind: unknown kind {self.initial.kind!r}")
        extra = set(self.initial.params) - INITIAL_PARAMS[self.initial.kind]
        if extra:
            raise ConfigError(f"initial: unknown key(s) {sorted(extra)} for kind {self.initial.kind!r}")
        if self.time.T <= 0:
            raise ConfigError("time.T must be positive")
        if self.output.vtk_every < 0 or self.output.csv_every < 1:
            raise ConfigError("output.vtk_every must be >= 0 and output.csv_every >= 1")
        checks = [("physics", build.physics_params), ("scheme", build.scheme_params),
                  ("time", build.time_params), ("mesh_adapt", build.metric_params),
                  ("solver", build.solver_config)]
        for section, fn in checks:
            try:
                fn(self)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"{section}: {exc}") from exc
        return self


def _assign(obj, attr, value, key, lineno):
    cur = getattr(obj, attr)
    if isinstance(cur, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"line {lineno}: {key} must be true or false")
    elif isinstance(cur, int) and not isinstance(cur, bool):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(f"line {lineno}: {key} must be an integer")
    elif isinstance(cur, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"line {lineno}: {key} must be a number")
        value = float(value)
    elif isinstance(cur, str) or cur is None:
        value = str(value)
    setattr(obj, attr, value)


def _subid(text, key, lineno):
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"line {lineno}: {key}: expected an integer boundary sub-id") from None


def config_from_dict(entries: dict, base_dir: Path | None = None) -> ScenarioConfig:
    """Build a config from ``key -> (value, lineno)`` entries."""
    cfg = ScenarioConfig()
    sections = {"mesh": cfg.mesh, "scheme": cfg.scheme, "time": cfg.time,
                "mesh_adapt": cfg.mesh_adapt, "output": cfg.output, "solver": cfg.solver}
    for key, (value, lineno) in entries.items():
        parts = key.split(".")
        head = parts[0]
        if key == "seed":
            _assign(cfg, "seed", value, key, lineno)
        elif head == "mesh" and len(parts) == 2 and parts[1] == "solid":
            sides = () if value in ("", "none") else tuple(s.strip() for s in str(value).split(",") if s.strip())
            cfg.mesh.solid = sides
        elif head in sections and len(parts) == 2 and hasattr(sections[head], parts[1]):
            _assign(sections[head], parts[1], value, key, lineno)
        elif head == "physics":
            p = cfg.physics
            rest = parts[1:]
            if len(rest) == 1 and rest[0] in ("epsilon", "mobility", "theta"):
                _assign(p, rest[0], value, key, lineno)
            elif rest[:1] == ["theta"] and len(rest) == 2:
                sub = rest[1]
                if sub == "kind":
                    p.theta_kind = str(value)
                elif sub in ("theta0", "amplitude", "fx", "fy"):
                    _assign(p, sub, value, key, lineno)
                elif sub == "default":
                    _assign(p, "theta", value, key, lineno)
                else:
                    p.theta_by_subid[_subid(sub, key, lineno)] = float(value)
            elif rest[:1] in (["mdot"], ["dirichlet_phi"]) and len(rest) == 2:
                if isinstance(value, (bool, str)):
                    raise ConfigError(f"line {lineno}: {key} must be a number")
                getattr(p, rest[0])[_subid(rest[1], key, lineno)] = float(value)
            else:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
        elif head == "initial" and len(parts) == 2:
            if parts[1] == "kind":
                cfg.initial.kind = str(value)
            else:
                cfg.initial.params[parts[1]] = value
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
    if cfg.mesh.path and base_dir is not None and not os.path.isabs(cfg.mesh.path):
        cfg.mesh.path = str(base_dir / cfg.mesh.path)
    return cfg


def load_config(path) -> ScenarioConfig:
    """Parse and validate a scenario file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {str(path)!r} does not exist")
    entries = parse_config_text(path.read_text(), str(path))
    cfg = config_from_dict(entries, path.parent).validate()
    log.info("resolved config: %s", cfg.to_dict())
    return cfg


# ----------------------------------------------------------------------------
# Output
# ----------------------------------------------------------------------------

def write_vtk(mesh: Mesh, fields: dict, path, title: str = "chwet") -> None:
    """Legacy ASCII unstructured grid with one point scalar per field."""
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {mesh.n_vertices} double"]
    lines += [f"{x!r} {y!r} 0.0" for x, y in mesh.vertices.tolist()]
    lines.append(f"CELLS {mesh.n_triangles} {4 * mesh.n_triangles}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles.tolist()]
    lines.append(f"CELL_TYPES {mesh.n_triangles}")
    lines += ["5"] * mesh.n_triangles
    if fields:
        lines.append(f"POINT_DATA {mesh.n_vertices}")
        for name, values in fields.items():
            values = np.asarray(values, dtype=float)[: mesh.n_vertices]
            if len(values) != mesh.n_vertices:
                raise ValueError(f"field {name!r} has {len(values)} values for {mesh.n_vertices} points")
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            lines += [repr(v) for v in values.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


CSV_COLUMNS = ("step", "time", "dt", "recalculations", "E_mix", "E_wall", "E_total", "mass",
               "dissipation", "nd_philic", "nd_phobic", "nd_wall", "dof_count",
               "mesh_mass_drift", "branch_crossings")


def csv_row(step, report, recalculations=0, dof_count=0, mesh_mass_drift=0.0) -> str:
    vals = [str(int(step)), f"{report.time:.15g}", f"{report.dt:.15g}", str(int(recalculations))]
    vals += [f"{v:.15g}" for v in (report.e_mix, report.e_wall, report.e_total, report.mass,
                                   report.dissipation, report.nd_philic, report.nd_phobic, report.nd_wall)]
    vals += [str(int(dof_count)), f"{mesh_mass_drift:.15g}", str(int(report.branch_crossings))]
    return ",".join(vals)


def append_csv(path, report, step: int, recalculations: int = 0, dof_count: int = 0,
               mesh_mass_drift: float = 0.0) -> None:
    """Append one diagnostics row, writing the header first if the file is new or empty."""
    path = Path(path)
    new = not path.exists() or path.stat().st_size == 0
    with path.open("a") as fh:
        if new:
            fh.write(",".join(CSV_COLUMNS) + "\n")
        fh.write(csv_row(step, report, recalculations, dof_count, mesh_mass_drift) + "\n")
        fh.flush()


def read_csv(path) -> dict:
    """Columns of a diagnostics file as float arrays."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    data = np.array(rows, dtype=float).reshape(-1, len(header))
    return {name: data[:, i] for i, name in enumerate(header)}


def save_checkpoint(path, state) -> None:
    m = state.space.mesh
    np.savez(path, vertices=m.vertices, triangles=m.triangles, boundary_edges=m.boundary_edges,
             boundary_tags=m.boundary_tags, boundary_subids=m.boundary_subids,
             vertex_parents=m.vertex_parents, degree=state.space.degree, phi=state.phi, mu=state.mu,
             time=state.time, dt=state.dt, step=state.step)


def load_checkpoint(path):
    from .fem import FemSpace
    from .mesh import check_mesh
    from .scheme import State

    with np.load(path) as d:
        mesh = Mesh(d["vertices"], d["triangles"], d["boundary_edges"], d["boundary_tags"],
                    d["boundary_subids"], d["vertex_parents"])
        check_mesh(mesh)
        space = FemSpace(mesh, int(d["degree"]))
        return State(space, d["phi"].copy(), d["mu"].copy(), float(d["time"]), float(d["dt"]), int(d["step"]))
