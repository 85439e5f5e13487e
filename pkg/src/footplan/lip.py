"""Closed-form linear inverted pendulum dynamics.

The model is a point mass at constant height h over a massless leg pivoting
about the stance foot.  Per axis the equation of motion is

    accel = omega^2 * (com - foot),   omega = sqrt(g / h)

which has the exact solution

    com(t)  = (com0 - foot) * cosh(omega t) + vel0 * sinh(omega t) / omega + foot
    vel(t)  = (com0 - foot) * omega * sinh(omega t) + vel0 * cosh(omega t)

The x and y axes are fully decoupled, so everything here is computed per
axis with plain floats.  These functions sit on the planner's hot path
(called at 200 Hz inside a gradient loop), so they avoid numpy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InvalidInputError

Vec2 = tuple[float, float]


def _vec2(v, name: str) -> Vec2:
    x, y = float(v[0]), float(v[1])
    if not (math.isfinite(x) and math.isfinite(y)):
        raise InvalidInputError(f"{name} must be finite, got ({x}, {y})")
    return (x, y)


def _finite(v, name: str) -> float:
    v = float(v)
    if not math.isfinite(v):
        raise InvalidInputError(f"{name} must be finite, got {v}")
    return v


@dataclass(frozen=True)
class LipParams:
    """Pendulum constants: gravity g, height h, natural frequency omega."""

    g: float = 9.81
    h: float = 0.81

    def __post_init__(self):
        if not (math.isfinite(self.g) and self.g > 0):
            raise InvalidInputError(f"g must be positive, got {self.g}")
        if not (math.isfinite(self.h) and self.h > 0):
            raise InvalidInputError(f"h must be positive, got {self.h}")

    @property
    def omega(self) -> float:
        return math.sqrt(self.g / self.h)


@dataclass(frozen=True)
class LipState:
    """CoM position and velocity in the horizontal plane of motion."""

    pos: Vec2
    vel: Vec2

    def __post_init__(self):
        object.__setattr__(self, "pos", _vec2(self.pos, "pos"))
        object.__setattr__(self, "vel", _vec2(self.vel, "vel"))


@dataclass(frozen=True)
class Foothold:
    """Foot position: xy in the motion plane plus terrain height z."""

    xy: Vec2
    z: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "xy", _vec2(self.xy, "xy"))
        object.__setattr__(self, "z", _finite(self.z, "z"))


def _step_axis(rel: float, vel: float, omega: float, ch: float, sh: float) -> tuple[float, float]:
    """One-axis propagation given precomputed cosh/sinh of omega*dt."""
    return rel * ch + vel * sh / omega, rel * omega * sh + vel * ch


def propagate(state: LipState, foot: Foothold, dt: float, params: LipParams) -> LipState:
    """Advance the CoM state exactly over a support phase of duration dt."""
    dt = _finite(dt, "dt")
    if dt < 0:
        raise InvalidInputError(f"dt must be non-negative, got {dt}")
    if dt == 0.0:
        return state
    w = params.omega
    e = math.exp(w * dt)
    ei = 1.0 / e
    ch = 0.5 * (e + ei)
    sh = 0.5 * (e - ei)
    ux, uy = foot.xy
    rx, vx = _step_axis(state.pos[0] - ux, state.vel[0], w, ch, sh)
    ry, vy = _step_axis(state.pos[1] - uy, state.vel[1], w, ch, sh)
    return LipState(pos=(rx + ux, ry + uy), vel=(vx, vy))


@dataclass(frozen=True)
class StepDerivatives:
    """Sensitivities of the propagated state to its inputs.

    The scalar blocks are identical for both axes because the dynamics are
    axis-decoupled with a common omega:

        dpos_dpos  = cosh(omega dt)
        dpos_dvel  = sinh(omega dt) / omega
        dpos_dfoot = 1 - cosh(omega dt)
        dvel_dpos  = omega sinh(omega dt)
        dvel_dvel  = cosh(omega dt)
        dvel_dfoot = -omega sinh(omega dt)

    The duration sensitivities are the terminal velocity and acceleration,
    which do differ per axis.
    """

    dpos_dpos: float
    dpos_dvel: float
    dpos_dfoot: float
    dvel_dpos: float
    dvel_dvel: float
    dvel_dfoot: float
    dpos_ddt: Vec2  # terminal velocity per axis
    dvel_ddt: Vec2  # terminal acceleration omega^2 (pos' - foot) per axis


def propagate_derivatives(
    state: LipState, foot: Foothold, dt: float, params: LipParams
) -> StepDerivatives:
    """Jacobian blocks of propagate() with respect to state, foot, and dt."""
    dt = _finite(dt, "dt")
    if dt < 0:
        raise InvalidInputError(f"dt must be non-negative, got {dt}")
    w = params.omega
    e = math.exp(w * dt)
    ei = 1.0 / e
    ch = 0.5 * (e + ei)
    sh = 0.5 * (e - ei)
    ux, uy = foot.xy
    relx = state.pos[0] - ux
    rely = state.pos[1] - uy
    posx, velx = _step_axis(relx, state.vel[0], w, ch, sh)
    posy, vely = _step_axis(rely, state.vel[1], w, ch, sh)
    return StepDerivatives(
        dpos_dpos=ch,
        dpos_dvel=sh / w,
        dpos_dfoot=1.0 - ch,
        dvel_dpos=w * sh,
        dvel_dvel=ch,
        dvel_dfoot=-w * sh,
        dpos_ddt=(velx, vely),
        dvel_ddt=(w * w * posx, w * w * posy),
    )


def orbital_energy(state: LipState, foot: Foothold, params: LipParams) -> Vec2:
    """Per-axis conserved quantity 0.5 vel^2 - 0.5 omega^2 (pos - foot)^2."""
    w2 = params.omega**2
    ex = 0.5 * state.vel[0] ** 2 - 0.5 * w2 * (state.pos[0] - foot.xy[0]) ** 2
    ey = 0.5 * state.vel[1] ** 2 - 0.5 * w2 * (state.pos[1] - foot.xy[1]) ** 2
    return (ex, ey)
