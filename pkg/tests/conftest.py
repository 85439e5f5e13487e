import numpy as np
import pytest

from footplan.lip import Foothold, LipParams, LipState
from footplan.problem import ConstraintLimits, ProblemSpec


@pytest.fixture
def params():
    return LipParams(g=9.81, h=0.81)


def orbit_speed(omega: float, width: float, step_time: float) -> float:
    """Boundary sway speed of the symmetric stepping-in-place orbit."""
    import math

    return omega * (width / 2.0) * math.tanh(omega * step_time / 2.0)


@pytest.fixture
def in_place_spec(params):
    """Stepping in place on the left foot, starting exactly on the
    periodic lateral orbit (width 0.2, step time 0.4)."""
    v_star = orbit_speed(params.omega, 0.2, 0.4)
    return ProblemSpec(
        initial_state=LipState(pos=(0.0, 0.0), vel=(0.0, v_star)),
        current_support=Foothold(xy=(0.0, 0.1)),
        support_side="left",
        ref_velocity=(0.0, 0.0),
        params=params,
    )


def random_spec(rng: np.random.Generator, horizon: int = 2) -> ProblemSpec:
    """Random but physically sane problem instance."""
    side = "left" if rng.random() < 0.5 else "right"
    sy = 0.1 if side == "left" else -0.1
    return ProblemSpec(
        initial_state=LipState(
            pos=(rng.uniform(-0.1, 0.1), rng.uniform(-0.08, 0.08)),
            vel=(rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4)),
        ),
        current_support=Foothold(xy=(rng.uniform(-0.05, 0.05), sy + rng.uniform(-0.03, 0.03))),
        support_side=side,
        ref_velocity=(rng.uniform(-0.3, 0.3), rng.uniform(-0.2, 0.2)),
        w_x=rng.uniform(0.5, 2.0),
        w_y=rng.uniform(0.5, 2.0),
        limits=ConstraintLimits(),
        params=LipParams(g=9.81, h=rng.uniform(0.6, 1.0)),
        horizon=horizon,
    )


def random_plan(rng: np.random.Generator, spec: ProblemSpec):
    from footplan.problem import FootstepPlan

    feet = []
    side = 1.0 if spec.support_side == "left" else -1.0
    sx, sy = spec.current_support.xy
    for k in range(1, spec.horizon + 1):
        lateral = -side * 0.2 if k % 2 == 1 else 0.0
        feet.append(
            Foothold(
                xy=(
                    sx + rng.uniform(-0.15, 0.25),
                    sy + lateral + rng.uniform(-0.05, 0.05),
                )
            )
        )
    durations = tuple(rng.uniform(0.25, 0.6) for _ in range(spec.horizon + 1))
    return FootstepPlan(footholds=tuple(feet), durations=durations)
