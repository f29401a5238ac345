"""
Energy-driven time step control.

A trial step of size ``dt`` is rejected (and retried with ``dt / f``) when
its physical energy decrease ``dt b ||grad mu||^2`` exceeds ``dE_max`` while
``dt > dt_min``, or when the free energy grows by more than ``dE_max / 100``.
An accepted step whose energy decrease stays below ``dE_min`` lets the next
step grow by ``f`` up to ``dt_max``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Callable, Iterable

import numpy as np

from .linalg import LinearSolveConfig
from .physics import EnergyReport, PhysicsParams
from .scheme import SchemeParams, State, trial_step

log = logging.getLogger(__name__)


class TimeAdaptError(RuntimeError):
    """The refinement loop exceeded its recalculation cap."""


@dataclass(frozen=True)
class TimeAdaptParams:
    dt_min: float = 0.0
    dt_max: float = 0.32
    dE_min: float = 1e-4
    dE_max: float = 2e-4
    factor: float = np.sqrt(2.0)
    dt0: float = 0.02
    max_recalculations: int = 60

    def __post_init__(self):
        if not 0 <= self.dt_min < self.dt_max:
            raise ValueError(f"need 0 <= dt_min < dt_max, got {self.dt_min}, {self.dt_max}")
        if not 0 < self.dE_min < self.dE_max:
            raise ValueError(f"need 0 < dE_min < dE_max, got {self.dE_min}, {self.dE_max}")
        if not self.factor > 1:
            raise ValueError(f"factor must exceed 1, got {self.factor}")
        if not self.dt0 > 0:
            raise ValueError("dt0 must be positive")
        if self.max_recalculations < 0:
            raise ValueError("max_recalculations must be non-negative")


@dataclass(frozen=True)
class StepOutcome:
    """Result of one accepted step.

    ``state`` is None in trajectories recorded without states.
    ``mesh_mass_drift`` is the mass change caused by a mesh adaptation
    performed right after this step (0 when the mesh was kept).
    """

    state: State | None
    recalculations: int
    dt_used: float
    dt_next: float
    report: EnergyReport
    dof_count: int = 0
    mesh_mass_drift: float = 0.0
    adapted: bool = False


def _grow(dt, adapt):
    new = dt * adapt.factor
    if new >= adapt.dt_max * (1 - 1e-12):
        return adapt.dt_max
    return new


def adaptive_step(state: State, physics: PhysicsParams, scheme: SchemeParams,
                  solver: LinearSolveConfig | None, adapt: TimeAdaptParams) -> StepOutcome:
    """One accepted step of the energy-driven controller."""
    dt = state.dt
    e_old = None
    for recalc in range(adapt.max_recalculations + 1):
        r = trial_step(state, physics, scheme, solver, dt, e_old)
        e_old = r.energy_before
        dE = r.report.dissipation
        # energy supplied through the boundary is not a stability failure
        growth = r.report.e_total - e_old - r.report.boundary_work
        if (dE > adapt.dE_max and dt > adapt.dt_min) or growth > adapt.dE_max / 100:
            dt = dt / adapt.factor
            continue
        dt_next = _grow(dt, adapt) if (dE < adapt.dE_min and dt < adapt.dt_max) else dt
        new = State(state.space, r.phi, r.mu, state.time + dt, dt_next, state.step + 1)
        return StepOutcome(new, recalc, dt, dt_next, r.report, state.space.dof_count)
    raise TimeAdaptError(
        f"step {state.step + 1} at t = {state.time:.6g}: no acceptable dt after "
        f"{adapt.max_recalculations} recalculations (last dt = {dt:.3e}, dE = {dE:.3e}, "
        f"energy growth = {growth:.3e})")


def fixed_step(state: State, physics: PhysicsParams, scheme: SchemeParams,
               solver: LinearSolveConfig | None = None, dt: float | None = None) -> StepOutcome:
    dt = state.dt if dt is None else dt
    r = trial_step(state, physics, scheme, solver, dt)
    new = State(state.space, r.phi, r.mu, state.time + dt, dt, state.step + 1)
    return StepOutcome(new, 0, dt, dt, r.report, state.space.dof_count)


@dataclass
class RunResult:
    state: State
    outcomes: list


def run_to_time(state: State, physics: PhysicsParams, scheme: SchemeParams,
                solver: LinearSolveConfig | None, adapt: TimeAdaptParams | None, T: float,
                callbacks: Iterable[Callable[[StepOutcome], None]] = (),
                post_step: Callable[[State], tuple] | None = None,
                keep_states: bool = False, max_steps: int | None = None,
                stop: Callable[[StepOutcome, State], bool] | None = None) -> RunResult:
    """Advance until ``time >= T``.

    With ``adapt=None`` the step size ``state.dt`` is kept fixed; the last
    step is not shortened, so choose ``dt`` dividing ``T - time`` when the
    final time matters.  ``post_step(state)`` may return
    ``(new_state, mass_drift)`` after a mesh change, or None.  ``stop(outcome,
    previous_state)`` ends the run early when it returns True.
    """
    if not T > state.time:
        raise ValueError(f"final time {T} must exceed the current time {state.time}")
    callbacks = list(callbacks)
    outcomes = []
    tol = 1e-9 * max(1.0, abs(T))
    while state.time < T - tol:
        if max_steps is not None and len(outcomes) >= max_steps:
            break
        prev = state
        if adapt is None:
            out = fixed_step(state, physics, scheme, solver)
        else:
            out = adaptive_step(state, physics, scheme, solver, adapt)
        state = out.state
        done = stop is not None and stop(out, prev)
        if post_step is not None:
            res = post_step(state)
            if res is not None:
                state, drift = res
                out = replace(out, state=state, mesh_mass_drift=drift, adapted=True)
        for cb in callbacks:
            cb(out)
        outcomes.append(out if keep_states else replace(out, state=None))
        if out.recalculations:
            log.debug("step %d: %d recalculations, dt = %.4g", state.step, out.recalculations, out.dt_used)
        if done:
            break
    return RunResult(state, outcomes)
