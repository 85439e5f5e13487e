import math

import numpy as np
import pytest

from conftest import random_plan, random_spec
from footplan.gradients import (
    augmented_lagrangian,
    constraint_jacobian,
    cost_gradient,
    lagrangian_gradient,
    state_sensitivities,
)
from footplan.lip import Foothold, LipParams, LipState
from footplan.problem import (
    FootstepPlan,
    Multipliers,
    ProblemSpec,
    constraint_count,
    constraint_values,
    cost,
    mirror_y,
    rollout,
)

FD_H = 1e-6


def perturbed_plan(plan, foot_idx=None, axis=None, dur_idx=None, delta=0.0):
    feet = list(plan.footholds)
    durs = list(plan.durations)
    if foot_idx is not None:
        xy = list(feet[foot_idx].xy)
        xy[axis] += delta
        feet[foot_idx] = Foothold(xy=tuple(xy), z=feet[foot_idx].z)
    if dur_idx is not None:
        durs[dur_idx] += delta
    return FootstepPlan(footholds=tuple(feet), durations=tuple(durs))


def random_multipliers(rng, spec, active_scale=0.5):
    m = constraint_count(spec.horizon)
    lam = tuple(float(v) for v in rng.uniform(0.0, active_scale, m))
    return Multipliers(lam=lam, mu=float(rng.uniform(0.5, 5.0)))


def away_from_activation(spec, plan, margin=1e-4):
    return all(abs(c) > margin for c in constraint_values(spec, plan))


def test_causality_zeros_are_exact():
    rng = np.random.default_rng(0)
    for _ in range(20):
        spec = random_spec(rng)
        plan = random_plan(rng, spec)
        sens = state_sensitivities(spec, plan)
        n = spec.horizon
        for axis in range(2):
            for j in range(n + 1):  # boundary j+1
                for k in range(n):  # foothold u_{k+1}
                    if j + 1 <= k + 1:
                        assert sens.d_pos_d_foot[axis, j, k] == 0.0
                        assert sens.d_vel_d_foot[axis, j, k] == 0.0
                for k in range(n + 1):  # duration dt_k
                    if j + 1 <= k:
                        assert sens.d_pos_d_dt[axis, j, k] == 0.0
                        assert sens.d_vel_d_dt[axis, j, k] == 0.0


def test_single_step_short_duration_limits(params):
    spec = ProblemSpec(
        initial_state=LipState(pos=(0.02, 0.0), vel=(0.31, -0.12)),
        current_support=Foothold(xy=(0.0, 0.1)),
        support_side="left",
        params=params,
        horizon=1,
    )
    plan = FootstepPlan(footholds=(Foothold(xy=(0.1, -0.1)),), durations=(1e-9, 1e-9))
    sens = state_sensitivities(spec, plan)
    # as durations shrink, the foothold loses influence and dt_0 acts as
    # a pure time shift with slope equal to the initial velocity
    assert sens.d_pos_d_foot[0, 1, 0] == pytest.approx(0.0, abs=1e-8)
    assert sens.d_pos_d_dt[0, 0, 0] == pytest.approx(spec.initial_state.vel[0], abs=1e-6)
    assert sens.d_pos_d_dt[1, 0, 0] == pytest.approx(spec.initial_state.vel[1], abs=1e-6)


def test_state_sensitivities_match_finite_differences():
    rng = np.random.default_rng(42)
    checked = 0
    while checked < 60:
        spec = random_spec(rng)
        plan = random_plan(rng, spec)
        sens = state_sensitivities(spec, plan)
        n = spec.horizon

        def boundary_states(p):
            return rollout(spec, p)

        for k in range(n):
            for axis in range(2):
                plus = boundary_states(perturbed_plan(plan, foot_idx=k, axis=axis, delta=FD_H))
                minus = boundary_states(perturbed_plan(plan, foot_idx=k, axis=axis, delta=-FD_H))
                for j in range(n + 1):
                    fd_p = (plus[j].pos[axis] - minus[j].pos[axis]) / (2 * FD_H)
                    fd_v = (plus[j].vel[axis] - minus[j].vel[axis]) / (2 * FD_H)
                    assert sens.d_pos_d_foot[axis, j, k] == pytest.approx(fd_p, rel=1e-5, abs=1e-8)
                    assert sens.d_vel_d_foot[axis, j, k] == pytest.approx(fd_v, rel=1e-5, abs=1e-8)
        for k in range(n + 1):
            plus = boundary_states(perturbed_plan(plan, dur_idx=k, delta=FD_H))
            minus = boundary_states(perturbed_plan(plan, dur_idx=k, delta=-FD_H))
            for j in range(n + 1):
                for axis in range(2):
                    fd_p = (plus[j].pos[axis] - minus[j].pos[axis]) / (2 * FD_H)
                    fd_v = (plus[j].vel[axis] - minus[j].vel[axis]) / (2 * FD_H)
                    assert sens.d_pos_d_dt[axis, j, k] == pytest.approx(fd_p, rel=1e-5, abs=1e-8)
                    assert sens.d_vel_d_dt[axis, j, k] == pytest.approx(fd_v, rel=1e-5, abs=1e-8)
        checked += 1


def test_lagrangian_gradient_matches_scalar_fd():
    rng = np.random.default_rng(123)
    checked = 0
    while checked < 40:
        spec = random_spec(rng)
        plan = random_plan(rng, spec)
        if not away_from_activation(spec, plan):
            continue
        mult = random_multipliers(rng, spec)
        grad = lagrangian_gradient(spec, plan, mult).flat()

        def al(p):
            return augmented_lagrangian(spec, p, mult)

        n = spec.horizon
        fd = []
        for k in range(n):
            for axis in range(2):
                fp = al(perturbed_plan(plan, foot_idx=k, axis=axis, delta=FD_H))
                fm = al(perturbed_plan(plan, foot_idx=k, axis=axis, delta=-FD_H))
                fd.append((fp - fm) / (2 * FD_H))
        for k in range(n + 1):
            fp = al(perturbed_plan(plan, dur_idx=k, delta=FD_H))
            fm = al(perturbed_plan(plan, dur_idx=k, delta=-FD_H))
            fd.append((fp - fm) / (2 * FD_H))
        assert grad == pytest.approx(np.array(fd), rel=1e-5, abs=1e-7)
        checked += 1


def test_interior_plan_with_zero_multipliers_gives_cost_gradient(in_place_spec):
    from footplan.problem import nominal_plan

    plan = nominal_plan(in_place_spec)
    assert max(constraint_values(in_place_spec, plan)) < 0
    mult = Multipliers.zeros(in_place_spec, mu=1.0)
    lg = lagrangian_gradient(in_place_spec, plan, mult)
    cg = cost_gradient(in_place_spec, plan)
    assert lg == cg


def test_cost_term_zero_at_exact_tracking(params):
    spec = ProblemSpec(
        initial_state=LipState(pos=(0.0, 0.1), vel=(0.0, 0.0)),
        current_support=Foothold(xy=(0.0, 0.1)),
        support_side="left",
        ref_velocity=(0.0, 0.0),
        params=params,
    )
    plan = FootstepPlan(
        footholds=(Foothold(xy=(0.0, 0.1)), Foothold(xy=(0.0, 0.1))),
        durations=(0.4, 0.4, 0.4),
    )
    g = cost_gradient(spec, plan).flat()
    assert np.all(g == 0.0)


def test_gradient_mirror_symmetry():
    rng = np.random.default_rng(9)
    for _ in range(20):
        spec = random_spec(rng)
        plan = random_plan(rng, spec)
        mult = random_multipliers(rng, spec)
        mspec, mplan = mirror_y(spec, plan)
        g = lagrangian_gradient(spec, plan, mult)
        mg = lagrangian_gradient(mspec, mplan, mult)
        for (gx, gy), (mx, my) in zip(g.d_footholds, mg.d_footholds):
            assert mx == pytest.approx(gx, abs=1e-14)
            assert my == pytest.approx(-gy, abs=1e-14)
        assert mg.d_durations == pytest.approx(g.d_durations, abs=1e-14)


def test_constraint_jacobian_matches_fd():
    rng = np.random.default_rng(77)
    checked = 0
    while checked < 20:
        spec = random_spec(rng)
        plan = random_plan(rng, spec)
        jac = constraint_jacobian(spec, plan)
        assert jac.shape == (constraint_count(spec.horizon), 3 * spec.horizon + 1)
        n = spec.horizon
        cols = []
        for k in range(n):
            for axis in range(2):
                cp = constraint_values(spec, perturbed_plan(plan, foot_idx=k, axis=axis, delta=FD_H))
                cm = constraint_values(spec, perturbed_plan(plan, foot_idx=k, axis=axis, delta=-FD_H))
                cols.append((np.array(cp) - np.array(cm)) / (2 * FD_H))
        for k in range(n + 1):
            cp = constraint_values(spec, perturbed_plan(plan, dur_idx=k, delta=FD_H))
            cm = constraint_values(spec, perturbed_plan(plan, dur_idx=k, delta=-FD_H))
            cols.append((np.array(cp) - np.array(cm)) / (2 * FD_H))
        fd_jac = np.stack(cols, axis=1)
        assert jac == pytest.approx(fd_jac, rel=1e-5, abs=1e-7)
        checked += 1


def test_augmented_lagrangian_value_composition():
    rng = np.random.default_rng(5)
    spec = random_spec(rng)
    plan = random_plan(rng, spec)
    mult = random_multipliers(rng, spec)
    c = constraint_values(spec, plan)
    expected = cost(spec, plan)
    for cj, lj in zip(c, mult.lam):
        a = max(0.0, cj)
        expected += lj * a + mult.mu * a * a
    assert augmented_lagrangian(spec, plan, mult) == pytest.approx(expected, rel=1e-12)
