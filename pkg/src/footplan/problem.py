"""The finite-horizon footstep optimization problem.

Decision vector: N future foothold positions u_1..u_N plus N+1 step
durations dt_0..dt_N, where dt_0 is the remaining time on the current
support foot.  Rolling the pendulum dynamics out over the plan gives N+1
boundary states (the state at the end of each duration); the cost tracks a
reference CoM velocity at those boundaries and the constraint block bounds
leg extension, CoM speed, lateral foot clearance, and step durations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .errors import ConfigError, DimensionError, InvalidInputError
from .lip import Foothold, LipParams, LipState, Vec2, propagate

LEFT = "left"
RIGHT = "right"


@dataclass(frozen=True)
class ConstraintLimits:
    """Kinematic and timing limits of the constraint block.

    l_max   -- maximum horizontal leg extension (m)
    v_max   -- maximum CoM speed at step boundaries (m/s)
    r_foot  -- minimum lateral clearance between consecutive feet (m)
    t_lower -- minimum duration of a full step (s); the remaining current
               step is only bounded below by zero
    t_upper -- maximum step duration (s)
    """

    l_max: float = 0.5
    v_max: float = 1.0
    r_foot: float = 0.1
    t_lower: float = 0.2
    t_upper: float = 0.8

    def __post_init__(self):
        for name in ("l_max", "v_max", "r_foot", "t_lower", "t_upper"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise InvalidInputError(f"{name} must be strictly positive, got {v}")
        if self.t_lower >= self.t_upper:
            raise InvalidInputError(
                f"t_lower ({self.t_lower}) must be below t_upper ({self.t_upper})"
            )


@dataclass(frozen=True)
class FootstepPlan:
    """Decision variables: footholds u_1..u_N and durations dt_0..dt_N."""

    footholds: tuple[Foothold, ...]
    durations: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "footholds", tuple(self.footholds))
        object.__setattr__(self, "durations", tuple(float(d) for d in self.durations))
        if len(self.footholds) < 1:
            raise DimensionError("plan needs at least one foothold")
        if len(self.durations) != len(self.footholds) + 1:
            raise DimensionError(
                f"expected {len(self.footholds) + 1} durations for "
                f"{len(self.footholds)} footholds, got {len(self.durations)}"
            )

    @property
    def horizon(self) -> int:
        return len(self.footholds)


@dataclass(frozen=True)
class ProblemSpec:
    """One planning problem instance.

    support_side is the side of the current support foot; planned footholds
    alternate sides starting opposite to it.  Weights w_x, w_y form the
    diagonal velocity-tracking weight matrix.
    """

    initial_state: LipState
    current_support: Foothold
    support_side: str = LEFT
    ref_velocity: Vec2 = (0.0, 0.0)
    w_x: float = 1.0
    w_y: float = 1.0
    limits: ConstraintLimits = field(default_factory=ConstraintLimits)
    params: LipParams = field(default_factory=LipParams)
    horizon: int = 2

    def __post_init__(self):
        if self.support_side not in (LEFT, RIGHT):
            raise InvalidInputError(f"support_side must be 'left' or 'right', got {self.support_side!r}")
        if self.w_x < 0 or self.w_y < 0:
            raise InvalidInputError("weights must be non-negative")
        if self.horizon < 1:
            raise InvalidInputError("horizon must be at least 1")
        object.__setattr__(self, "ref_velocity", (float(self.ref_velocity[0]), float(self.ref_velocity[1])))

    def check_plan(self, plan: FootstepPlan) -> None:
        if plan.horizon != self.horizon:
            raise DimensionError(f"plan horizon {plan.horizon} != spec horizon {self.horizon}")


@dataclass(frozen=True)
class Multipliers:
    """Dual state of the augmented Lagrangian: one lambda per constraint
    plus the shared quadratic penalty weight mu."""

    lam: tuple[float, ...]
    mu: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "lam", tuple(float(v) for v in self.lam))
        if any(v < 0 for v in self.lam):
            raise InvalidInputError("inequality multipliers must be non-negative")
        if not (math.isfinite(self.mu) and self.mu > 0):
            raise InvalidInputError(f"mu must be positive, got {self.mu}")

    @staticmethod
    def zeros(spec: ProblemSpec, mu: float = 1.0) -> "Multipliers":
        return Multipliers(lam=(0.0,) * constraint_count(spec.horizon), mu=mu)


def rollout(spec: ProblemSpec, plan: FootstepPlan) -> list[LipState]:
    """Boundary states x_1..x_{N+1} obtained by chaining the closed-form
    dynamics: dt_0 on the current support, then dt_k on u_k."""
    spec.check_plan(plan)
    states = []
    state = spec.initial_state
    foot = spec.current_support
    for k, dt in enumerate(plan.durations):
        state = propagate(state, foot, max(dt, 0.0), spec.params)
        states.append(state)
        if k < plan.horizon:
            foot = plan.footholds[k]
    return states


def cost(spec: ProblemSpec, plan: FootstepPlan) -> float:
    """Weighted squared velocity-tracking error summed over boundary states."""
    refx, refy = spec.ref_velocity
    total = 0.0
    for s in rollout(spec, plan):
        total += spec.w_x * (s.vel[0] - refx) ** 2 + spec.w_y * (s.vel[1] - refy) ** 2
    return total


def constraint_count(horizon: int) -> int:
    return 6 * horizon + 4


def constraint_names(horizon: int) -> list[str]:
    """Stable ordering of the constraint block; residuals <= 0 feasible."""
    names = []
    for j in range(1, horizon + 1):
        names.append(f"next_step_length[{j}]")
    for j in range(1, horizon + 2):
        names.append(f"current_step_length[{j}]")
    for j in range(1, horizon + 2):
        names.append(f"velocity_limit[{j}]")
    for k in range(1, horizon + 1):
        names.append(f"no_crossing[{k}]")
    for k in range(horizon + 1):
        names.append(f"t_upper[{k}]")
    for k in range(horizon + 1):
        names.append(f"t_lower[{k}]")
    return names


def crossing_signs(spec: ProblemSpec) -> list[float]:
    """Sign s_k of the clearance residual s_k*(u_k,y - u_{k-1,y}) + r_foot.

    s_k = +1 when u_k is the right foot (its y must sit at least r_foot
    below the foot before it), -1 when u_k is the left foot.  Feet
    alternate starting opposite the current support side.
    """
    signs = []
    for k in range(1, spec.horizon + 1):
        incoming_is_right = (spec.support_side == LEFT) == (k % 2 == 1)
        signs.append(1.0 if incoming_is_right else -1.0)
    return signs


def constraint_values(spec: ProblemSpec, plan: FootstepPlan) -> list[float]:
    """Residual vector c with c_j <= 0 feasible, ordered per constraint_names."""
    spec.check_plan(plan)
    states = rollout(spec, plan)
    lim = spec.limits
    n = spec.horizon
    feet = [spec.current_support] + list(plan.footholds)
    c: list[float] = []
    for j in range(1, n + 1):  # next-step length at touchdown of u_j
        px, py = states[j - 1].pos
        ux, uy = feet[j].xy
        c.append(math.hypot(px - ux, py - uy) - lim.l_max)
    for j in range(1, n + 2):  # extension of the leg just left behind
        px, py = states[j - 1].pos
        ux, uy = feet[j - 1].xy
        c.append(math.hypot(px - ux, py - uy) - lim.l_max)
    for j in range(1, n + 2):  # CoM speed at each boundary
        vx, vy = states[j - 1].vel
        c.append(math.hypot(vx, vy) - lim.v_max)
    for k, s in enumerate(crossing_signs(spec), start=1):
        c.append(s * (feet[k].xy[1] - feet[k - 1].xy[1]) + lim.r_foot)
    for dt in plan.durations:
        c.append(dt - lim.t_upper)
    for k, dt in enumerate(plan.durations):
        lower = 0.0 if k == 0 else lim.t_lower
        c.append(lower - dt)
    return c


def nominal_plan(
    spec: ProblemSpec, step_width: float = 0.2, step_time: float = 0.4
) -> FootstepPlan:
    """Alternating-stance seed plan for the solvers.

    Footholds are anchored to the CoM's predicted average-velocity path,
    half a step period ahead of it (a trailing foot lets the pendulum run
    away), and alternate laterally at the stance width around the support
    side.  All durations start at step_time.
    """
    cx, cy = spec.initial_state.pos
    refx, refy = spec.ref_velocity
    side = 1.0 if spec.support_side == LEFT else -1.0
    half = 0.5 * step_width
    feet = []
    for k in range(1, spec.horizon + 1):
        lateral = -side * half if k % 2 == 1 else side * half
        advance = step_time * (k + 0.5)
        feet.append(
            Foothold(
                xy=(cx + refx * advance, cy + refy * advance + lateral),
                z=spec.current_support.z,
            )
        )
    return FootstepPlan(footholds=tuple(feet), durations=(step_time,) * (spec.horizon + 1))


def walk_spec(
    ref_velocity: Vec2 = (0.0, 0.0),
    params: LipParams | None = None,
    limits: ConstraintLimits | None = None,
    step_width: float = 0.2,
    step_time: float = 0.4,
    support_side: str = LEFT,
    w_x: float = 1.0,
    w_y: float = 1.0,
    horizon: int = 2,
) -> ProblemSpec:
    """Problem instance positioned on the nominal periodic gait.

    The CoM starts at the origin at a touchdown instant: the support foot
    sits half a forward step ahead and half a stance width to its side,
    the forward boundary speed follows the closed-form periodic gait and
    the sway speed points toward the new support foot.
    """
    params = params or LipParams()
    limits = limits or ConstraintLimits()
    w = params.omega
    half_t = 0.5 * w * step_time
    refx, refy = float(ref_velocity[0]), float(ref_velocity[1])
    step_len_x = refx * step_time
    vx = w * (step_len_x / 2.0) / math.tanh(half_t) if step_len_x else 0.0
    sway = w * (step_width / 2.0) * math.tanh(half_t)
    side = 1.0 if support_side == LEFT else -1.0
    return ProblemSpec(
        initial_state=LipState(pos=(0.0, 0.0), vel=(vx, side * sway + refy)),
        current_support=Foothold(
            xy=(step_len_x / 2.0, side * step_width / 2.0 + refy * step_time / 2.0)
        ),
        support_side=support_side,
        ref_velocity=(refx, refy),
        w_x=w_x,
        w_y=w_y,
        limits=limits,
        params=params,
        horizon=horizon,
    )


def mirror_y(spec: ProblemSpec, plan: FootstepPlan) -> tuple[ProblemSpec, FootstepPlan]:
    """Reflect the whole problem about the x axis (used by symmetry tests)."""

    def flip_state(s: LipState) -> LipState:
        return LipState(pos=(s.pos[0], -s.pos[1]), vel=(s.vel[0], -s.vel[1]))

    def flip_foot(f: Foothold) -> Foothold:
        return Foothold(xy=(f.xy[0], -f.xy[1]), z=f.z)

    mirrored_spec = replace(
        spec,
        initial_state=flip_state(spec.initial_state),
        current_support=flip_foot(spec.current_support),
        support_side=RIGHT if spec.support_side == LEFT else LEFT,
        ref_velocity=(spec.ref_velocity[0], -spec.ref_velocity[1]),
    )
    mirrored_plan = FootstepPlan(
        footholds=tuple(flip_foot(f) for f in plan.footholds),
        durations=plan.durations,
    )
    return mirrored_spec, mirrored_plan


# --- plain-text key-value serialization ---------------------------------
#
# Format: one `key = value` per line, `#` starts a comment, SI units.
# Documented keys: g, h, horizon, support_side, support_x, support_y,
# support_z, init_pos_x, init_pos_y, init_vel_x, init_vel_y, ref_vel_x,
# ref_vel_y, w_x, w_y, l_max, v_max, r_foot, t_lower, t_upper.

_SPEC_FLOAT_KEYS = {
    "g", "h", "support_x", "support_y", "support_z",
    "init_pos_x", "init_pos_y", "init_vel_x", "init_vel_y",
    "ref_vel_x", "ref_vel_y", "w_x", "w_y",
    "l_max", "v_max", "r_foot", "t_lower", "t_upper",
}


def parse_kv_text(text: str) -> dict[str, str]:
    """Parse `key = value` lines; later keys override earlier ones."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def spec_to_text(spec: ProblemSpec) -> str:
    lines = [
        "# footstep problem spec (SI units)",
        f"g = {spec.params.g!r}",
        f"h = {spec.params.h!r}",
        f"horizon = {spec.horizon}",
        f"support_side = {spec.support_side}",
        f"support_x = {spec.current_support.xy[0]!r}",
        f"support_y = {spec.current_support.xy[1]!r}",
        f"support_z = {spec.current_support.z!r}",
        f"init_pos_x = {spec.initial_state.pos[0]!r}",
        f"init_pos_y = {spec.initial_state.pos[1]!r}",
        f"init_vel_x = {spec.initial_state.vel[0]!r}",
        f"init_vel_y = {spec.initial_state.vel[1]!r}",
        f"ref_vel_x = {spec.ref_velocity[0]!r}",
        f"ref_vel_y = {spec.ref_velocity[1]!r}",
        f"w_x = {spec.w_x!r}",
        f"w_y = {spec.w_y!r}",
        f"l_max = {spec.limits.l_max!r}",
        f"v_max = {spec.limits.v_max!r}",
        f"r_foot = {spec.limits.r_foot!r}",
        f"t_lower = {spec.limits.t_lower!r}",
        f"t_upper = {spec.limits.t_upper!r}",
    ]
    return "\n".join(lines) + "\n"


def spec_from_kv(kv: dict[str, str], base: ProblemSpec | None = None) -> ProblemSpec:
    """Build a ProblemSpec from parsed key-value pairs, filling gaps from base."""
    if base is None:
        base = ProblemSpec(
            initial_state=LipState(pos=(0.0, 0.0), vel=(0.0, 0.0)),
            current_support=Foothold(xy=(0.0, 0.1)),
        )
    vals: dict[str, float] = {}
    for key, raw in kv.items():
        if key in _SPEC_FLOAT_KEYS:
            try:
                vals[key] = float(raw)
            except ValueError as exc:
                raise ConfigError(f"key {key}: expected a number, got {raw!r}") from exc
        elif key == "horizon":
            try:
                vals[key] = int(raw)
            except ValueError as exc:
                raise ConfigError(f"key horizon: expected an integer, got {raw!r}") from exc
        elif key == "support_side":
            if raw not in (LEFT, RIGHT):
                raise ConfigError(f"key support_side: expected left or right, got {raw!r}")
            vals[key] = raw  # type: ignore[assignment]
        # unknown keys are left to the caller (scenario-level settings)

    def get(key, fallback):
        return vals.get(key, fallback)

    try:
        return ProblemSpec(
            initial_state=LipState(
                pos=(get("init_pos_x", base.initial_state.pos[0]), get("init_pos_y", base.initial_state.pos[1])),
                vel=(get("init_vel_x", base.initial_state.vel[0]), get("init_vel_y", base.initial_state.vel[1])),
            ),
            current_support=Foothold(
                xy=(get("support_x", base.current_support.xy[0]), get("support_y", base.current_support.xy[1])),
                z=get("support_z", base.current_support.z),
            ),
            support_side=get("support_side", base.support_side),
            ref_velocity=(get("ref_vel_x", base.ref_velocity[0]), get("ref_vel_y", base.ref_velocity[1])),
            w_x=get("w_x", base.w_x),
            w_y=get("w_y", base.w_y),
            limits=ConstraintLimits(
                l_max=get("l_max", base.limits.l_max),
                v_max=get("v_max", base.limits.v_max),
                r_foot=get("r_foot", base.limits.r_foot),
                t_lower=get("t_lower", base.limits.t_lower),
                t_upper=get("t_upper", base.limits.t_upper),
            ),
            params=LipParams(g=get("g", base.params.g), h=get("h", base.params.h)),
            horizon=int(get("horizon", base.horizon)),
        )
    except InvalidInputError as exc:
        raise ConfigError(str(exc)) from exc


def spec_from_text(text: str, base: ProblemSpec | None = None) -> ProblemSpec:
    return spec_from_kv(parse_kv_text(text), base)
