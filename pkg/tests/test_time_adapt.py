import numpy as np
import pytest

from chwet.fem import FemSpace
from chwet.mesh import BoundaryLabel, generate_rectangle
from chwet.physics import PhysicsParams, ThetaField, initial_condition
from chwet.scheme import SchemeParams, State
from chwet.time_adapt import TimeAdaptError, TimeAdaptParams, adaptive_step, run_to_time

F = np.sqrt(2)


def droplet_state(dt=0.02):
    V = FemSpace(generate_rectangle(2, 0.5, 20, 5, {"bottom": BoundaryLabel.solid()}))
    phi = initial_condition(V, "two_droplets", 0.1, x1=0.65, x2=1.35, radius=0.25)
    return State.initial(V, phi, dt)


PHYS = PhysicsParams(0.1, 1e-2, ThetaField.uniform(np.pi / 4))


def test_params_validation():
    for kw in ({"dt_min": 1.0, "dt_max": 0.5}, {"dE_min": 2e-4, "dE_max": 1e-4}, {"factor": 1.0},
               {"dt0": 0.0}, {"max_recalculations": -1}):
        with pytest.raises(ValueError):
            TimeAdaptParams(**kw)


def test_pure_phase_grows_dt_to_cap():
    V = FemSpace(generate_rectangle(1, 1, 4, 4, BoundaryLabel.solid()))
    adapt = TimeAdaptParams(dt_max=0.16, dt0=0.02, factor=F)
    s = State.initial(V, np.ones(V.dof_count), 0.02)
    dts = []
    for _ in range(10):
        out = adaptive_step(s, PHYS, SchemeParams.od2w(), None, adapt)
        assert out.recalculations == 0
        dts.append(out.dt_used)
        s = out.state
    assert dts[1] == pytest.approx(0.02 * F)
    assert max(dts) == 0.16 and all(d <= 0.16 for d in dts)


def test_refinement_branch():
    s = droplet_state(0.02)
    out = adaptive_step(s, PHYS, SchemeParams.od2w(), None, TimeAdaptParams(dE_min=1e-6, dE_max=2e-6))
    assert out.recalculations >= 1
    assert out.dt_used == pytest.approx(0.02 / F ** out.recalculations)
    assert out.report.dissipation <= 2e-6


def test_recalculation_cap():
    s = droplet_state(0.02)
    with pytest.raises(TimeAdaptError, match="recalculations"):
        adaptive_step(s, PHYS, SchemeParams.od2w(), None,
                      TimeAdaptParams(dE_min=1e-14, dE_max=2e-14, max_recalculations=2))


def test_trajectory_invariants():
    adapt = TimeAdaptParams(dt_max=0.08, dE_min=5e-5, dE_max=1e-4, dt0=0.02)
    s = droplet_state(0.02)
    res = run_to_time(s, PHYS, SchemeParams.od2w(), None, adapt, 0.4, keep_states=True)
    prev_next = 0.02
    e_prev = None
    for o in res.outcomes:
        assert o.dt_used <= adapt.dt_max + 1e-15
        ratio = o.dt_used / prev_next
        k = np.log(ratio) / np.log(F)
        assert abs(k - round(k)) < 1e-9 and round(k) == -o.recalculations
        assert o.report.dissipation <= adapt.dE_max
        e_new = o.report.e_total
        if e_prev is not None:
            assert e_new - e_prev <= adapt.dE_max / 100
        e_prev = e_new
        step_ratio = o.dt_next / o.dt_used
        assert step_ratio == pytest.approx(1.0) or step_ratio == pytest.approx(F) or o.dt_next == adapt.dt_max
        prev_next = o.dt_next
    assert 0.4 <= res.state.time <= 0.4 + adapt.dt_max


def test_fixed_run_one_step():
    s = droplet_state(0.05)
    res = run_to_time(s, PHYS, SchemeParams.od1w(), None, None, 0.05)
    assert len(res.outcomes) == 1 and res.state.time == pytest.approx(0.05)
    with pytest.raises(ValueError):
        run_to_time(s, PHYS, SchemeParams.od1w(), None, None, 0.0)


def test_callbacks_and_stop():
    s = droplet_state(0.01)
    seen = []
    res = run_to_time(s, PHYS, SchemeParams.od1w(), None, None, 1.0, [seen.append],
                      stop=lambda o, prev: o.state.step >= 3)
    assert len(seen) == 3 and len(res.outcomes) == 3 and res.outcomes[0].state is None
