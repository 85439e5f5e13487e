"""Closed-loop walking simulator and push-recovery benchmark harness.

The point-mass model simulated here is the same closed-form pendulum the
planner optimizes: between planner ticks the CoM follows the analytic
propagation exactly (no separate integrator), so any planner-vs-plant
mismatch comes from the scenario (pushes, terrain), never from numerics.

Episode anatomy, at a 1 kHz base rate: the planner runs every fifth
substep (200 Hz), the reference solver is interleaved at 20 Hz in
deterministic mode, terrain planes refresh at 5 Hz, and the support foot
switches the instant the commanded remaining step time runs out.  Pushes
are applied as instantaneous CoM velocity jumps of force*duration/mass at
a touchdown of the chosen foot.

Success formalization: a post-push step is "good" when the step-average
CoM velocity (displacement over duration) is within 0.05 m/s of the
reference and no kinematic threshold was exceeded during the step; a
recovery needs six consecutive good steps, and steps_to_recover counts
the bad steps before that window starts.

Kinematic thresholds judged on the executed motion:
  - 3D leg extension above sqrt(l_max^2 + h^2) at a touchdown
  - CoM ground clearance below 0.45 * h
  - touchdown height error above 0.03 m (early/late contact stumble)
  - runaway: CoM speed above 3 m/s or horizontal leg extension 1.6*l_max
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .al_solver import AlConfig
from .errors import InvalidInputError, NoDataError
from .lip import Foothold, LipState, propagate
from .planner import MODES, AsyncPlanner, PlannerOutput
from .problem import LEFT, RIGHT, ProblemSpec, nominal_plan
from .ref_solver import IpConfig
from .swing import SwingTrajectory, plan_swing, retarget
from .terrain import (
    DEFAULT_FOOTPRINT_RADIUS,
    FLAT_PLANE,
    HeightMap,
    TerrainPlane,
    fit_plane,
    query_footprint_height,
)
from .errors import DegenerateFitError

STEP_Z_TOLERANCE = 0.03  # touchdown height error treated as a stumble (m)
RECOVERY_WINDOW = 6  # consecutive good steps that define a stable walk
RECOVERY_VEL_TOL = 0.05  # step-average velocity error bound (m/s)
CLEARANCE_FRACTION = 0.45  # minimum CoM height over terrain, fraction of h
NOT_READY_GRACE = 50  # planner ticks allowed without a plan
MIN_SWITCH_INTERVAL = 0.08  # physical floor between support switches (s)


@dataclass(frozen=True)
class PushEvent:
    """Impulse disturbance riding on a touchdown event.

    direction_deg is measured in the horizontal plane, 0 = pushed forward
    (+x), 90 = pushed left (+y).  The impulse converts to a CoM velocity
    jump of force * duration / mass.
    """

    force: float
    direction_deg: float
    duration: float = 0.1
    trigger: str = "left-touchdown"  # left-touchdown or right-touchdown

    def __post_init__(self):
        if self.force < 0:
            raise InvalidInputError("push force must be non-negative")
        if self.duration <= 0:
            raise InvalidInputError("push duration must be positive")
        if self.trigger not in ("left-touchdown", "right-touchdown"):
            raise InvalidInputError(f"unknown push trigger {self.trigger!r}")


@dataclass(frozen=True)
class Scenario:
    """What happens during an episode."""

    duration: float = 8.0
    push: PushEvent | None = None
    height_map: HeightMap | None = None
    terrain_aware: bool = True
    warmup_steps: int = 4
    apex_clearance: float = 0.05
    footprint_radius: float = DEFAULT_FOOTPRINT_RADIUS


@dataclass
class TickLog:
    """Columnar per-planner-tick trajectory record."""

    tick: list = field(default_factory=list)
    time: list = field(default_factory=list)
    com_x: list = field(default_factory=list)
    com_y: list = field(default_factory=list)
    com_z: list = field(default_factory=list)
    vel_x: list = field(default_factory=list)
    vel_y: list = field(default_factory=list)
    support_x: list = field(default_factory=list)
    support_y: list = field(default_factory=list)
    support_z: list = field(default_factory=list)
    support_side: list = field(default_factory=list)
    swing_x: list = field(default_factory=list)
    swing_y: list = field(default_factory=list)
    swing_z: list = field(default_factory=list)
    dt0: list = field(default_factory=list)
    dt1: list = field(default_factory=list)
    dt2: list = field(default_factory=list)
    source: list = field(default_factory=list)
    plane_alpha: list = field(default_factory=list)
    plane_beta: list = field(default_factory=list)
    plane_h: list = field(default_factory=list)

    def row_count(self) -> int:
        return len(self.tick)


@dataclass
class StepRecord:
    index: int
    start_time: float
    end_time: float
    avg_vel_err: float
    violations: list[str]

    @property
    def good(self) -> bool:
        return self.avg_vel_err <= RECOVERY_VEL_TOL and not self.violations


@dataclass
class EpisodeResult:
    success: bool
    steps_to_recover: int  # bad steps between the push and the stable window
    failure_reason: str
    steps: list[StepRecord]
    log: TickLog
    summary: dict

    def write_csv(self, path: str) -> None:
        cols = [
            "tick", "time", "com_x", "com_y", "com_z", "vel_x", "vel_y",
            "support_x", "support_y", "support_z", "support_side",
            "swing_x", "swing_y", "swing_z", "dt0", "dt1", "dt2", "source",
            "plane_alpha", "plane_beta", "plane_h",
        ]
        log = self.log
        with open(path, "w") as fh:
            fh.write("# units: m, m/s, s; side: left/right; source: fast/reference\n")
            fh.write(",".join(cols) + "\n")
            for i in range(log.row_count()):
                fh.write(
                    ",".join(_csv_cell(getattr(log, c)[i]) for c in cols) + "\n"
                )

    def write_summary(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _csv_cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


class _TerrainModel:
    """Ground truth terrain plus what the planner is allowed to see."""

    def __init__(self, scenario: Scenario):
        self.height_map = scenario.height_map
        self.aware = scenario.terrain_aware and scenario.height_map is not None
        self.footprint_radius = scenario.footprint_radius

    def true_height(self, xy) -> float:
        if self.height_map is None:
            return 0.0
        try:
            # truth = the map itself at fine resolution (noise and all is
            # what the world looks like); queries off the map fall to zero
            return query_footprint_height(
                self.height_map, xy, max(2 * self.height_map.resolution, 0.02)
            )
        except NoDataError:
            return 0.0

    def perceived_height(self, xy, support: Foothold) -> float:
        if not self.aware:
            return support.z  # proprioception only: assume flat at stance
        try:
            return query_footprint_height(self.height_map, xy, self.footprint_radius)
        except NoDataError:
            return support.z


def run_episode(
    spec: ProblemSpec,
    mode: str,
    scenario: Scenario,
    total_mass: float = 14.0,
    seed: int = 0,
    al_config: AlConfig | None = None,
    ip_config: IpConfig | None = None,
    single_thread: bool = True,
    sim_rate: float = 1000.0,
    fast_rate: float = 200.0,
    ref_rate: float = 20.0,
    plane_rate: float = 5.0,
    step_width: float = 0.2,
    nominal_step_time: float = 0.4,
    min_switch_interval: float = MIN_SWITCH_INTERVAL,
) -> EpisodeResult:
    """Simulate one walking episode under a planner mode.

    The seed only matters for components that draw randomness; the episode
    itself is deterministic in single-threaded mode.
    """
    if mode not in MODES:
        raise InvalidInputError(f"mode must be one of {MODES}")
    al_config = al_config or AlConfig(loop_rate=fast_rate)
    planner = AsyncPlanner(
        spec,
        mode=mode,
        al_config=al_config,
        ip_config=ip_config,
        fast_rate=fast_rate,
        ref_rate=ref_rate,
        single_thread=single_thread,
        step_width=step_width,
        nominal_step_time=nominal_step_time,
    )
    if not single_thread:
        planner.start()

    terrain = _TerrainModel(scenario)
    h_nom = spec.params.h
    leg_limit = math.sqrt(spec.limits.l_max**2 + h_nom**2)

    substep = 1.0 / sim_rate
    ticks_per_fast = max(1, round(sim_rate / fast_rate))
    ticks_per_plane = max(1, round(sim_rate / plane_rate))
    n_substeps = int(round(scenario.duration * sim_rate))

    state = spec.initial_state
    support = Foothold(xy=spec.current_support.xy, z=terrain.true_height(spec.current_support.xy))
    side = spec.support_side
    plane: TerrainPlane = TerrainPlane(0.0, 0.0, support.z, anchor=support.xy)

    # swing bookkeeping: before the first switch the swing foot idles at
    # the mirrored stance position
    mirror_y = support.xy[1] - (step_width if side == LEFT else -step_width)
    swing_start = (support.xy[0], mirror_y, terrain.true_height((support.xy[0], mirror_y)))
    swing: SwingTrajectory | None = None
    swing_t0 = 0.0
    swing_goal_z = swing_start[2]
    last_sampled_swing = swing_start

    log = TickLog()
    steps: list[StepRecord] = []
    sim_time = 0.0
    remaining = None  # commanded remaining time of the current step
    commanded: PlannerOutput | None = None
    not_ready = 0
    failure = ""
    push_pending = scenario.push is not None and scenario.push.force > 0
    push_applied_at_step = -1
    step_count = 0
    step_start_time = 0.0
    step_start_pos = state.pos
    step_violations: list[str] = []
    push_vel = (0.0, 0.0)
    if scenario.push is not None:
        d = math.radians(scenario.push.direction_deg)
        dv = scenario.push.force * scenario.push.duration / total_mass
        push_vel = (dv * math.cos(d), dv * math.sin(d))

    def com_z(xy) -> float:
        if terrain.aware:
            return plane.height_at(xy) + h_nom
        return support.z + h_nom

    def record_step(end_time: float) -> None:
        dt_step = end_time - step_start_time
        if dt_step <= 1e-9:
            return
        avg = (
            (state.pos[0] - step_start_pos[0]) / dt_step,
            (state.pos[1] - step_start_pos[1]) / dt_step,
        )
        err = math.hypot(avg[0] - spec.ref_velocity[0], avg[1] - spec.ref_velocity[1])
        steps.append(
            StepRecord(
                index=step_count,
                start_time=step_start_time,
                end_time=end_time,
                avg_vel_err=err,
                violations=list(step_violations),
            )
        )

    last_tick_time = 0.0
    last_switch_time = 0.0
    try:
        for i in range(n_substeps):
            # --- planner tick ---
            if i % ticks_per_fast == 0:
                if i % ticks_per_plane == 0 and terrain.aware and commanded is not None:
                    try:
                        plane = fit_plane(
                            terrain.height_map,
                            support,
                            commanded.plan.footholds,
                            scenario.footprint_radius,
                        )
                    except (DegenerateFitError, NoDataError):
                        pass  # keep previous plane
                out = planner.tick_fast(state, support, sim_time - last_tick_time)
                last_tick_time = sim_time
                if out is None:
                    not_ready += 1
                    if not_ready > NOT_READY_GRACE:
                        failure = "planner not ready"
                        break
                else:
                    not_ready = 0
                    commanded = out
                    remaining = out.plan.durations[0]
                    # retarget the swing toward the (possibly moved) goal
                    target = out.plan.footholds[0]
                    goal_z = terrain.perceived_height(target.xy, support)
                    span = max(remaining, 0.02)
                    apex = max(last_sampled_swing[2], goal_z) + scenario.apex_clearance
                    if swing is None:
                        swing = plan_swing(
                            last_sampled_swing, (0, 0, 0), (0, 0, 0),
                            (target.xy[0], target.xy[1], goal_z), span, apex,
                        )
                    else:
                        swing = retarget(
                            swing, sim_time - swing_t0,
                            (target.xy[0], target.xy[1], goal_z), apex, remaining=span,
                        )
                    swing_t0 = sim_time
                    swing_goal_z = goal_z
                    log.tick.append(planner.tick_count)
                    log.time.append(sim_time)
                    log.com_x.append(state.pos[0])
                    log.com_y.append(state.pos[1])
                    log.com_z.append(com_z(state.pos))
                    log.vel_x.append(state.vel[0])
                    log.vel_y.append(state.vel[1])
                    log.support_x.append(support.xy[0])
                    log.support_y.append(support.xy[1])
                    log.support_z.append(support.z)
                    log.support_side.append(side)
                    sw = swing.position(sim_time - swing_t0) if swing else last_sampled_swing
                    log.swing_x.append(sw[0])
                    log.swing_y.append(sw[1])
                    log.swing_z.append(sw[2])
                    durs = out.plan.durations
                    log.dt0.append(durs[0])
                    log.dt1.append(durs[1] if len(durs) > 1 else 0.0)
                    log.dt2.append(durs[2] if len(durs) > 2 else 0.0)
                    log.source.append(out.source)
                    log.plane_alpha.append(plane.alpha)
                    log.plane_beta.append(plane.beta)
                    log.plane_h.append(plane.h0_anchor)

            if commanded is None:
                sim_time += substep
                continue

            # --- instantaneous support switch when commanded time runs out;
            # a physical swing cannot re-land faster than the switch floor ---
            if (
                remaining is not None
                and remaining <= 0.0
                and sim_time - last_switch_time >= min_switch_interval
            ):
                new_xy = commanded.plan.footholds[0].xy
                true_z = terrain.true_height(new_xy)
                z_err = abs(swing_goal_z - true_z)
                if z_err > STEP_Z_TOLERANCE:
                    failure = f"stumble: touchdown height error {z_err:.3f} m"
                    break
                record_step(sim_time)
                step_count += 1
                step_start_time = sim_time
                step_start_pos = state.pos
                step_violations = []
                last_switch_time = sim_time
                old_support = support
                support = Foothold(xy=new_xy, z=true_z)
                side = RIGHT if side == LEFT else LEFT
                dz = com_z(state.pos) - true_z
                ext3d = math.sqrt(
                    (state.pos[0] - new_xy[0]) ** 2 + (state.pos[1] - new_xy[1]) ** 2 + dz * dz
                )
                if ext3d > leg_limit + 1e-9:
                    step_violations.append(f"leg extension {ext3d:.3f} m at touchdown")
                # push fires on the configured touchdown (side = foot that
                # just became support)
                if (
                    push_pending
                    and step_count >= scenario.warmup_steps
                    and scenario.push.trigger == f"{side}-touchdown"
                ):
                    state = LipState(
                        pos=state.pos,
                        vel=(state.vel[0] + push_vel[0], state.vel[1] + push_vel[1]),
                    )
                    push_pending = False
                    push_applied_at_step = step_count
                # swing restarts from the released foot; the next planner
                # tick will see the new support and shift its plan
                last_sampled_swing = (old_support.xy[0], old_support.xy[1], old_support.z)
                swing = None
                remaining = None

            # --- exact dynamics over one substep ---
            state = propagate(state, support, substep, spec.params)
            sim_time += substep
            if remaining is not None:
                remaining -= substep
            if swing is not None:
                last_sampled_swing = swing.position(sim_time - swing_t0)

            # --- continuous safety checks ---
            speed = math.hypot(*state.vel)
            horiz = math.hypot(state.pos[0] - support.xy[0], state.pos[1] - support.xy[1])
            if speed > 3.0 or horiz > 1.6 * spec.limits.l_max:
                failure = f"fell: speed {speed:.2f} m/s, extension {horiz:.2f} m"
                break
            clearance = com_z(state.pos) - terrain.true_height(state.pos)
            if clearance < CLEARANCE_FRACTION * h_nom:
                failure = f"ground clearance {clearance:.3f} m"
                break
            if horiz > spec.limits.l_max + 1e-9:
                if "overextension" not in " ".join(step_violations):
                    step_violations.append(f"overextension {horiz:.3f} m mid-step")
    finally:
        if not single_thread:
            planner.stop()

    record_step(sim_time)

    # --- success judgement ---
    success = False
    steps_to_recover = -1
    if not failure:
        if scenario.push is None or scenario.push.force == 0.0:
            tail = steps[-RECOVERY_WINDOW:]
            success = len(tail) == RECOVERY_WINDOW and all(s.good for s in tail)
            steps_to_recover = 0
        elif push_applied_at_step >= 0:
            post = [s for s in steps if s.index >= push_applied_at_step]
            for i in range(len(post) - RECOVERY_WINDOW + 1):
                if all(s.good for s in post[i : i + RECOVERY_WINDOW]):
                    success = True
                    steps_to_recover = i
                    break
        else:
            failure = "push never triggered"

    summary = {
        "mode": mode,
        "success": success,
        "failure_reason": failure,
        "steps_taken": step_count,
        "steps_to_recover": steps_to_recover,
        "push_applied_at_step": push_applied_at_step,
        "sim_duration": round(sim_time, 6),
        "ref_velocity": list(spec.ref_velocity),
        "seed": seed,
        "step_records": [
            {
                "index": s.index,
                "avg_vel_err": s.avg_vel_err,
                "good": s.good,
                "violations": s.violations,
            }
            for s in steps
        ],
    }
    return EpisodeResult(
        success=success,
        steps_to_recover=steps_to_recover,
        failure_reason=failure,
        steps=steps,
        log=log,
        summary=summary,
    )


# --- sweeps ---------------------------------------------------------------

SWEEP_DIRECTIONS = tuple(float(a) for a in range(0, 360, 45))


def push_sweep(
    spec: ProblemSpec,
    modes,
    directions=SWEEP_DIRECTIONS,
    scenario: Scenario | None = None,
    total_mass: float = 14.0,
    seed: int = 0,
    force_resolution: float = 5.0,
    force_floor: float = 0.0,
    force_ceiling: float = 640.0,
    **episode_kwargs,
) -> dict[tuple[str, float], float]:
    """Maximum recoverable push per mode per direction, by bisection.

    Returns {(mode, direction_deg): max force}.  Deterministic given the
    seed and single-threaded episodes.
    """
    base = scenario or Scenario()
    table: dict[tuple[str, float], float] = {}
    for mode in modes:
        for direction in directions:
            def survives(force: float) -> bool:
                sc = replace(
                    base,
                    push=PushEvent(force=force, direction_deg=direction)
                    if force > 0
                    else None,
                )
                res = run_episode(
                    spec, mode, sc, total_mass=total_mass, seed=seed, **episode_kwargs
                )
                return res.success

            lo = force_floor
            if not survives(lo):
                table[(mode, direction)] = 0.0
                continue
            hi = max(force_resolution, 2 * force_resolution)
            while hi < force_ceiling and survives(hi):
                lo = hi
                hi *= 2.0
            if hi >= force_ceiling:
                table[(mode, direction)] = lo
                continue
            while hi - lo > force_resolution:
                mid = 0.5 * (lo + hi)
                if survives(mid):
                    lo = mid
                else:
                    hi = mid
            table[(mode, direction)] = lo
    return table


def success_rate_sweep(
    spec: ProblemSpec,
    modes,
    family: str,
    values,
    trials: int = 10,
    seed: int = 0,
    scenario: Scenario | None = None,
    init_pos_radius: float = 0.04,
    init_vel_radius: float = 0.25,
    **episode_kwargs,
) -> dict[tuple[str, float], float]:
    """Fraction of randomized-start episodes succeeding per terrain value.

    family "slope" sweeps ramp angles (degrees), "steps" sweeps step
    heights (m).  Initial CoM position and velocity are perturbed inside
    the given balls, identically across modes for a fair comparison.
    """
    from .terrain import ramp_map, steps_map

    if family not in ("slope", "steps"):
        raise InvalidInputError("family must be 'slope' or 'steps'")
    base = scenario or Scenario()
    table: dict[tuple[str, float], float] = {}
    for value in values:
        if family == "slope":
            hmap = ramp_map(float(value), extent=6.0, resolution=0.02)
        else:
            hmap = steps_map(float(value), step_length=0.3, extent=6.0, resolution=0.02)
        rng = np.random.default_rng(seed + int(round(1000 * float(value))))
        perturbations = [
            (
                rng.uniform(-init_pos_radius, init_pos_radius, 2),
                rng.uniform(-init_vel_radius, init_vel_radius, 2),
            )
            for _ in range(trials)
        ]
        for mode in modes:
            aware = mode != "terrain-blind"
            planner_mode = mode if mode in MODES else "arto-al"
            wins = 0
            for t_idx, (dp, dv) in enumerate(perturbations):
                pspec = replace(
                    spec,
                    initial_state=LipState(
                        pos=(spec.initial_state.pos[0] + dp[0], spec.initial_state.pos[1] + dp[1]),
                        vel=(spec.initial_state.vel[0] + dv[0], spec.initial_state.vel[1] + dv[1]),
                    ),
                )
                sc = replace(base, height_map=hmap, terrain_aware=aware)
                res = run_episode(
                    pspec, planner_mode, sc, seed=seed + t_idx, **episode_kwargs
                )
                wins += res.success
            table[(mode, float(value))] = wins / trials
    return table


def write_sweep_csv(table: dict, path: str, value_name: str = "direction_deg") -> None:
    """Sweep table as plot-ready CSV: mode, value, result."""
    with open(path, "w") as fh:
        fh.write(f"mode,{value_name},result\n")
        for (mode, value), result in sorted(table.items()):
            fh.write(f"{mode},{value!r},{result!r}\n")
