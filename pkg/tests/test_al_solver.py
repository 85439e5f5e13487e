import math

import numpy as np
import pytest

from conftest import orbit_speed, random_plan, random_spec
from footplan.al_solver import AlConfig, al_solve, project_plan
from footplan.errors import DimensionError
from footplan.gradients import _Ctx, _al_value_flat, _flatten, lagrangian_gradient
from footplan.lip import Foothold, LipParams, LipState
from footplan.problem import (
    ConstraintLimits,
    FootstepPlan,
    Multipliers,
    ProblemSpec,
    constraint_values,
    nominal_plan,
)

TIGHT = AlConfig(grad_norm_delta_tol=1e-8, max_inner_iters=4000, mu_max=8.0)


def test_stationary_start_stays_put(params):
    # interior unconstrained optimum found independently; the solver must
    # declare convergence quickly without moving it
    from scipy.optimize import minimize

    spec = ProblemSpec(
        initial_state=LipState(pos=(0.01, -0.02), vel=(0.25, 0.1)),
        current_support=Foothold(xy=(0.0, 0.1)),
        support_side="left",
        ref_velocity=(0.2, 0.0),
        params=params,
        horizon=1,
    )
    ctx = _Ctx(spec)

    def f(zv):
        _, fval, _ = _al_value_flat(ctx, list(zv), (), 0.0)
        return fval

    z0 = np.array(_flatten(nominal_plan(spec)))
    r = minimize(f, z0, method="Nelder-Mead", options={"xatol": 1e-13, "fatol": 1e-16, "maxiter": 40000})
    r = minimize(f, r.x, method="BFGS", options={"gtol": 1e-11})
    opt = FootstepPlan(footholds=(Foothold(xy=(r.x[0], r.x[1])),), durations=tuple(r.x[2:]))
    assert max(constraint_values(spec, opt)) < -1e-3

    res = al_solve(spec, opt, Multipliers.zeros(spec), AlConfig())
    assert res.feasible
    assert res.iterations <= 5
    moved = np.max(np.abs(np.array(_flatten(res.plan)) - r.x))
    assert moved <= 1e-6


def test_unreachable_reference_clipped_to_feasibility(params):
    v_star = orbit_speed(params.omega, 0.2, 0.4)
    spec = ProblemSpec(
        initial_state=LipState(pos=(0.0, 0.0), vel=(0.0, v_star)),
        current_support=Foothold(xy=(0.0, 0.1)),
        support_side="left",
        ref_velocity=(2.5, 0.0),  # far beyond l_max / v_max at any timing
        params=params,
    )
    res = al_solve(spec, nominal_plan(spec), Multipliers.zeros(spec), TIGHT)
    assert res.feasible
    values = constraint_values(spec, res.plan)
    assert max(values) <= TIGHT.constraint_tol


def test_dual_feasibility_and_penalty_growth(params, in_place_spec):
    rng = np.random.default_rng(1)
    plan = random_plan(rng, in_place_spec)
    cfg = AlConfig(max_inner_iters=60, inner_per_outer=10)
    res = al_solve(in_place_spec, plan, Multipliers.zeros(in_place_spec), cfg)
    assert all(l >= 0.0 for l in res.mult.lam)
    # penalty grew by exactly phi per completed outer cycle
    outer_cycles = res.iterations // cfg.inner_per_outer
    if res.iterations % cfg.inner_per_outer == 0 and res.iterations > 0:
        assert res.mult.mu == pytest.approx(cfg.mu0 * cfg.phi**outer_cycles)
    assert res.mult.mu >= cfg.mu0


def test_projected_gradient_small_in_warm_started_regime(params, in_place_spec):
    # warm-started operation is the designed regime: solve tightly once,
    # then re-enter with defaults as the 200 Hz loop would
    ref = al_solve(in_place_spec, nominal_plan(in_place_spec), Multipliers.zeros(in_place_spec), TIGHT)
    assert ref.feasible
    res = al_solve(in_place_spec, ref.plan, Multipliers(lam=ref.mult.lam, mu=1.0), AlConfig())
    assert res.feasible
    g = lagrangian_gradient(in_place_spec, res.plan, res.mult).flat()
    lim = in_place_spec.limits
    n = in_place_spec.horizon
    for k, dt in enumerate(res.plan.durations):
        i = 2 * n + k
        lower = 0.0 if k == 0 else lim.t_lower
        if (abs(dt - lower) < 1e-9 and g[i] > 0) or (abs(dt - lim.t_upper) < 1e-9 and g[i] < 0):
            g[i] = 0.0
    assert np.linalg.norm(g) <= 10 * AlConfig().grad_norm_delta_tol


def test_projection_identity_inside_bounds(params):
    lim = ConstraintLimits()
    plan = FootstepPlan(
        footholds=(Foothold(xy=(0.1, -0.1)), Foothold(xy=(0.2, 0.1))),
        durations=(0.3, 0.4, 0.5),
    )
    assert project_plan(plan, lim, 200.0) == plan


def test_projection_clamps_future_durations(params):
    lim = ConstraintLimits()
    plan = FootstepPlan(
        footholds=(Foothold(xy=(0.1, -0.1)), Foothold(xy=(0.2, 0.1))),
        durations=(0.3, lim.t_upper + 0.1, 0.05),
    )
    out = project_plan(plan, lim, 200.0)
    assert out.durations[1] == lim.t_upper
    assert out.durations[2] == lim.t_lower


def test_projection_remaining_time_rule(params):
    # below zero the remaining time is decremented by one loop period,
    # never clamped back up
    lim = ConstraintLimits()
    plan = FootstepPlan(
        footholds=(Foothold(xy=(0.1, -0.1)), Foothold(xy=(0.2, 0.1))),
        durations=(-0.001, 0.4, 0.4),
    )
    out = project_plan(plan, lim, 200.0)
    assert out.durations[0] == pytest.approx(-0.001 - 1.0 / 200.0, abs=1e-15)
    # small positive remaining time is left alone even below t_lower
    plan2 = FootstepPlan(footholds=plan.footholds, durations=(0.07, 0.4, 0.4))
    assert project_plan(plan2, lim, 200.0).durations[0] == 0.07
    # upper clamp still applies to the current step
    plan3 = FootstepPlan(footholds=plan.footholds, durations=(0.9, 0.4, 0.4))
    assert project_plan(plan3, lim, 200.0).durations[0] == lim.t_upper


def test_projection_foothold_anchors(params):
    lim = ConstraintLimits()
    plan = FootstepPlan(
        footholds=(Foothold(xy=(1.0, 0.0)), Foothold(xy=(0.0, 0.8))),
        durations=(0.4, 0.4, 0.4),
    )
    anchors = [(0.0, 0.0), (0.0, 0.0)]
    out = project_plan(plan, lim, 200.0, anchors=anchors)
    assert math.hypot(*out.footholds[0].xy) == pytest.approx(lim.l_max)
    assert math.hypot(*out.footholds[1].xy) == pytest.approx(lim.l_max)
    # direction preserved
    assert out.footholds[0].xy[1] == pytest.approx(0.0)
    assert out.footholds[0].xy[0] > 0


def test_non_finite_gradient_flagged(params, in_place_spec):
    bad = FootstepPlan(
        footholds=(Foothold(xy=(1e154, 0.0)), Foothold(xy=(0.0, 0.1))),
        durations=(0.4, 0.4, 0.4),
    )
    res = al_solve(in_place_spec, bad, Multipliers.zeros(in_place_spec), AlConfig())
    assert not res.feasible
    assert "non-finite" in res.diagnostic


def test_multiplier_dimension_checked(params, in_place_spec):
    plan = nominal_plan(in_place_spec)
    with pytest.raises(DimensionError):
        al_solve(in_place_spec, plan, Multipliers(lam=(0.0,), mu=1.0), AlConfig())


def test_trace_emission(tmp_path, params, in_place_spec):
    trace = tmp_path / "trace.csv"
    cfg = AlConfig(max_inner_iters=30, trace_path=str(trace))
    al_solve(in_place_spec, nominal_plan(in_place_spec), Multipliers.zeros(in_place_spec), cfg)
    lines = trace.read_text().strip().splitlines()
    assert lines[0] == "iteration,cost,grad_norm,max_residual"
    assert len(lines) >= 3
    first = lines[1].split(",")
    assert int(first[0]) == 0
    float(first[1]), float(first[2]), float(first[3])  # parseable


def test_frozen_durations_mode(params, in_place_spec):
    plan = nominal_plan(in_place_spec)
    cfg = AlConfig(optimize_durations=False, max_inner_iters=200, grad_norm_delta_tol=1e-7)
    res = al_solve(in_place_spec, plan, Multipliers.zeros(in_place_spec), cfg)
    assert res.plan.durations == plan.durations
    assert res.feasible
