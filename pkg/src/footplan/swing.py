"""Quintic swing-foot trajectories with an enforced mid-swing apex.

Horizontal axes are single fifth-order polynomials from the current foot
state to the goal (touchdown at rest).  The vertical axis is built in two
halves joined at mid-swing, where the height equals the commanded apex
and velocity and acceleration vanish, guaranteeing ground clearance and a
C2 joint.  Trajectories are immutable; regenerating mid-swing from a
sampled state keeps position, velocity, and acceleration continuous, which
is what allows the planner to move the goal foothold while the foot is in
the air.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InvalidInputError

Vec3 = tuple[float, float, float]


@dataclass(frozen=True)
class QuinticSegment:
    """One polynomial piece per axis over [0, duration]."""

    coeffs: tuple[float, float, float, float, float, float]
    duration: float

    def position(self, t: float) -> float:
        c = self.coeffs
        return c[0] + t * (c[1] + t * (c[2] + t * (c[3] + t * (c[4] + t * c[5]))))

    def velocity(self, t: float) -> float:
        c = self.coeffs
        return c[1] + t * (2 * c[2] + t * (3 * c[3] + t * (4 * c[4] + t * 5 * c[5])))

    def acceleration(self, t: float) -> float:
        c = self.coeffs
        return 2 * c[2] + t * (6 * c[3] + t * (12 * c[4] + t * 20 * c[5]))


def _quintic(p0, v0, a0, p1, v1, a1, T) -> QuinticSegment:
    """Unique quintic matching position, velocity, and acceleration at
    both ends (closed-form solve)."""
    if T <= 0:
        raise InvalidInputError(f"segment duration must be positive, got {T}")
    T2 = T * T
    c0 = p0
    c1 = v0
    c2 = 0.5 * a0
    c3 = (-3 * T2 * a0 + T2 * a1 - 12 * T * v0 - 8 * T * v1 - 20 * p0 + 20 * p1) / (2 * T2 * T)
    c4 = (1.5 * T2 * a0 - T2 * a1 + 8 * T * v0 + 7 * T * v1 + 15 * p0 - 15 * p1) / (T2 * T2)
    c5 = (-T2 * a0 + T2 * a1 - 6 * T * v0 - 6 * T * v1 - 12 * p0 + 12 * p1) / (2 * T2 * T2 * T)
    return QuinticSegment(coeffs=(c0, c1, c2, c3, c4, c5), duration=T)


@dataclass(frozen=True)
class SwingTrajectory:
    """Sampleable swing trajectory over [0, duration]."""

    x: QuinticSegment
    y: QuinticSegment
    z_rise: QuinticSegment
    z_fall: QuinticSegment
    duration: float

    def sample(self, t: float) -> tuple[Vec3, Vec3, Vec3]:
        """Position, velocity, acceleration at time t, clamped to the span."""
        t = min(max(t, 0.0), self.duration)
        half = 0.5 * self.duration
        if t <= half:
            zs, tz = self.z_rise, t
        else:
            zs, tz = self.z_fall, t - half
        return (
            (self.x.position(t), self.y.position(t), zs.position(tz)),
            (self.x.velocity(t), self.y.velocity(t), zs.velocity(tz)),
            (self.x.acceleration(t), self.y.acceleration(t), zs.acceleration(tz)),
        )

    def position(self, t: float) -> Vec3:
        return self.sample(t)[0]


def plan_swing(
    start_pos: Vec3,
    start_vel: Vec3,
    start_acc: Vec3,
    goal_pos: Vec3,
    duration: float,
    apex_height: float,
) -> SwingTrajectory:
    """Build a swing trajectory from the current foot state to the goal.

    The goal is reached at rest (zero terminal velocity and acceleration).
    apex_height is the absolute z commanded at mid-swing; it must not lie
    below either endpoint.
    """
    if duration <= 0:
        raise InvalidInputError(f"duration must be positive, got {duration}")
    if not all(math.isfinite(v) for v in (*start_pos, *start_vel, *start_acc, *goal_pos)):
        raise InvalidInputError("swing boundary values must be finite")
    if apex_height < start_pos[2] - 1e-12 or apex_height < goal_pos[2] - 1e-12:
        raise InvalidInputError(
            f"apex {apex_height} below an endpoint ({start_pos[2]}, {goal_pos[2]})"
        )
    half = 0.5 * duration
    return SwingTrajectory(
        x=_quintic(start_pos[0], start_vel[0], start_acc[0], goal_pos[0], 0.0, 0.0, duration),
        y=_quintic(start_pos[1], start_vel[1], start_acc[1], goal_pos[1], 0.0, 0.0, duration),
        z_rise=_quintic(start_pos[2], start_vel[2], start_acc[2], apex_height, 0.0, 0.0, half),
        z_fall=_quintic(apex_height, 0.0, 0.0, goal_pos[2], 0.0, 0.0, half),
        duration=duration,
    )


def retarget(
    traj: SwingTrajectory,
    t_now: float,
    new_goal: Vec3,
    apex_height: float,
    remaining: float | None = None,
) -> SwingTrajectory:
    """Regenerate the swing from its state at t_now toward a moved goal.

    Continuity of position, velocity, and acceleration at the regeneration
    instant is inherited from the boundary conditions.
    """
    pos, vel, acc = traj.sample(t_now)
    span = remaining if remaining is not None else traj.duration - t_now
    return plan_swing(pos, vel, acc, new_goal, span, apex_height)


def resample(traj: SwingTrajectory, rate: float) -> list[tuple[float, Vec3]]:
    """Uniform timestamped positions including both endpoints.

    Sample count is floor(duration * rate) + 1.
    """
    if rate <= 0:
        raise InvalidInputError(f"rate must be positive, got {rate}")
    count = int(math.floor(traj.duration * rate)) + 1
    if count < 2:
        count = 2
    step = traj.duration / (count - 1)
    return [(i * step, traj.position(i * step)) for i in range(count)]
