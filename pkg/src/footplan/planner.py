"""Two-rate planner orchestration.

A fast augmented-Lagrangian loop (200 Hz, driven by the caller's ticks)
and a slower high-accuracy reference loop (20 Hz) cooperate: every fresh
reference solution reseeds the fast solver's plan and multipliers, and
when the fast solve comes back infeasible the latest reference solution is
emitted instead.  The two sides communicate only through single-slot
snapshot mailboxes (atomic replace, immutable payloads), so the fast loop
never observes a half-written reference solution.

Modes
    arto-al      fast loop + reference loop (the full pipeline)
    al-only      fast loop alone, degraded mode
    ref-only     reference loop alone, output held between its solves
    no-time-adp  like arto-al but step durations are frozen at nominal

In threaded operation the reference loop runs in a background worker at
wall-clock rate; in single-threaded deterministic mode it is interleaved
synchronously every fast_rate/ref_rate fast ticks, which makes whole runs
reproducible bit for bit.
"""

from __future__ import annotations

import json
import math
import threading
import time
from dataclasses import dataclass, replace

from .al_solver import AlConfig, al_solve
from .lip import Foothold, LipState
from .problem import (
    FootstepPlan,
    Multipliers,
    ProblemSpec,
    nominal_plan,
)
from .ref_solver import IpConfig, WarmStart, ref_solve, shift_warm_start

MODES = ("arto-al", "al-only", "ref-only", "no-time-adp")


@dataclass(frozen=True)
class PlannerOutput:
    plan: FootstepPlan
    source: str  # "fast" or "reference"
    timestamp: float
    feasible: bool


class Mailbox:
    """Single-slot snapshot mailbox: one writer replaces, readers snapshot."""

    def __init__(self):
        self._lock = threading.Lock()
        self._value = None
        self._version = 0

    def publish(self, value) -> None:
        with self._lock:
            self._value = value
            self._version += 1

    def read(self):
        with self._lock:
            return self._version, self._value


@dataclass(frozen=True)
class _RefSolution:
    plan: FootstepPlan
    mult: Multipliers
    solve_time: float
    step_index: int


class AsyncPlanner:
    """Holds the planner state machine for one walking session."""

    def __init__(
        self,
        spec: ProblemSpec,
        mode: str = "arto-al",
        al_config: AlConfig | None = None,
        ip_config: IpConfig | None = None,
        fast_rate: float = 200.0,
        ref_rate: float = 20.0,
        single_thread: bool = True,
        step_width: float = 0.2,
        nominal_step_time: float = 0.4,
        tick_log_path: str | None = None,
    ):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        self.mode = mode
        self.spec_template = spec
        freeze = mode == "no-time-adp"
        base_al = al_config or AlConfig()
        self.al_config = replace(base_al, optimize_durations=not freeze and base_al.optimize_durations)
        self.ip_config = ip_config or IpConfig()
        self.optimize_durations = not freeze
        self.fast_rate = fast_rate
        self.ref_rate = ref_rate
        self.single_thread = single_thread
        self.step_width = step_width
        self.nominal_step_time = nominal_step_time
        self._interleave = max(1, round(fast_rate / ref_rate))

        self.sim_time = 0.0
        self.tick_count = 0
        self.step_index = 0
        self._side = spec.support_side
        self._last_support: Foothold | None = None
        self._plan: FootstepPlan | None = None
        self._mult: Multipliers | None = None
        self.last_seed_mult: Multipliers | None = None

        self.ref_mailbox: Mailbox = Mailbox()
        self._consumed_ref_version = 0
        self._ref_warm: WarmStart | None = None
        self._ref_solve_time = 0.0
        self._ref_step_index = 0

        self._state_mailbox: Mailbox = Mailbox()
        self._worker: threading.Thread | None = None
        self._stop_flag = threading.Event()

        self._tick_log_path = tick_log_path
        self._tick_log: list[dict] | None = [] if tick_log_path else None

    # -- helpers ----------------------------------------------------------

    def _spec_now(self, state: LipState, support: Foothold) -> ProblemSpec:
        return replace(
            self.spec_template,
            initial_state=state,
            current_support=support,
            support_side=self._side,
        )

    def _detect_step(self, support: Foothold) -> bool:
        prev = self._last_support
        self._last_support = support
        if prev is None:
            return False
        return support.xy != prev.xy

    def _shift_internal(self, elapsed: float, step_taken: bool, spec: ProblemSpec) -> None:
        if self._plan is None:
            return
        carrier = WarmStart(plan=self._plan, mult=self._mult or Multipliers.zeros(spec))
        shifted = shift_warm_start(carrier, elapsed, step_taken, spec)
        self._plan = shifted.plan

    def _shifted_ref(self, ref: _RefSolution, spec: ProblemSpec) -> FootstepPlan:
        """Project a stored reference solution forward to the current time."""
        carrier = WarmStart(plan=ref.plan, mult=ref.mult)
        for _ in range(self.step_index - ref.step_index):
            carrier = shift_warm_start(carrier, 0.0, True, spec)
        elapsed = self.sim_time - ref.solve_time
        if elapsed > 0.0:
            carrier = shift_warm_start(carrier, elapsed, False, spec)
        return carrier.plan

    # -- fast loop --------------------------------------------------------

    def tick_fast(self, state: LipState, support: Foothold, elapsed: float) -> PlannerOutput | None:
        """One 200 Hz planning tick.  Returns the freshest usable plan, or
        None when neither solver has produced a feasible plan yet."""
        t_wall = time.perf_counter()
        self.sim_time += elapsed
        self.tick_count += 1
        step_taken = self._detect_step(support)
        if step_taken:
            self._side = "right" if self._side == "left" else "left"
            self.step_index += 1
        spec = self._spec_now(state, support)
        self._shift_internal(elapsed, step_taken, spec)

        self._state_mailbox.publish((state, support, self.sim_time))
        if (
            self.single_thread
            and self.mode in ("arto-al", "ref-only", "no-time-adp")
            and (self.tick_count - 1) % self._interleave == 0
        ):
            self.tick_reference(state, support)

        version, ref = self.ref_mailbox.read()
        if ref is not None and version > self._consumed_ref_version:
            self._consumed_ref_version = version
            self._plan = self._shifted_ref(ref, spec)
            self._mult = ref.mult
        self.last_seed_mult = self._mult

        if self._plan is None:
            self._plan = nominal_plan(spec, self.step_width, self.nominal_step_time)
            self._mult = Multipliers.zeros(spec, mu=self.al_config.mu0)

        out: PlannerOutput | None = None
        if self.mode == "ref-only":
            if ref is not None:
                out = PlannerOutput(self._plan, "reference", self.sim_time, True)
        else:
            seed_mult = Multipliers(
                lam=(self._mult or Multipliers.zeros(spec)).lam, mu=self.al_config.mu0
            )
            result = al_solve(spec, self._plan, seed_mult, self.al_config)
            if result.feasible:
                self._plan = result.plan
                self._mult = result.mult
                out = PlannerOutput(result.plan, "fast", self.sim_time, True)
            elif ref is not None:
                fallback = self._shifted_ref(ref, spec)
                self._plan = fallback
                self._mult = ref.mult
                out = PlannerOutput(fallback, "reference", self.sim_time, True)
            else:
                out = None

        if self._tick_log is not None:
            self._tick_log.append(
                {
                    "tick": self.tick_count,
                    "sim_time": round(self.sim_time, 9),
                    "wall_ms": (time.perf_counter() - t_wall) * 1e3,
                    "source": out.source if out else "none",
                    "feasible": bool(out),
                }
            )
        return out

    # -- reference loop ---------------------------------------------------

    def tick_reference(self, state: LipState, support: Foothold) -> None:
        """One reference solve; publishes to the mailbox only on success."""
        if self.mode == "al-only":
            return
        spec = self._spec_now(state, support)
        if self._ref_warm is None:
            warm = WarmStart(
                plan=nominal_plan(spec, self.step_width, self.nominal_step_time),
                mult=Multipliers.zeros(spec),
            )
        else:
            warm = self._ref_warm
            for _ in range(self.step_index - self._ref_step_index):
                warm = shift_warm_start(warm, 0.0, True, spec)
            elapsed = self.sim_time - self._ref_solve_time
            if elapsed > 0.0:
                warm = shift_warm_start(warm, elapsed, False, spec)
        result = ref_solve(spec, warm, self.ip_config, optimize_durations=self.optimize_durations)
        if result.feasible:
            self._ref_warm = WarmStart(plan=result.plan, mult=result.mult)
            self._ref_solve_time = self.sim_time
            self._ref_step_index = self.step_index
            self.ref_mailbox.publish(
                _RefSolution(result.plan, result.mult, self.sim_time, self.step_index)
            )
        # infeasible: previous reference solution is retained

    # -- threaded operation ------------------------------------------------

    def start(self) -> None:
        """Launch the reference worker (threaded mode only)."""
        if self.single_thread or self.mode == "al-only":
            return
        self._stop_flag.clear()
        self._worker = threading.Thread(target=self._ref_worker, daemon=True)
        self._worker.start()

    def stop(self) -> None:
        self._stop_flag.set()
        if self._worker is not None:
            self._worker.join(timeout=2.0)
            self._worker = None
        self.close()

    def _ref_worker(self) -> None:
        period = 1.0 / self.ref_rate
        while not self._stop_flag.is_set():
            t0 = time.perf_counter()
            _, snapshot = self._state_mailbox.read()
            if snapshot is not None:
                state, support, _ = snapshot
                self.tick_reference(state, support)
            remaining = period - (time.perf_counter() - t0)
            if remaining > 0:
                self._stop_flag.wait(remaining)

    def close(self) -> None:
        """Flush the structured tick log, if one was requested."""
        if self._tick_log is not None and self._tick_log_path:
            with open(self._tick_log_path, "w") as fh:
                for row in self._tick_log:
                    fh.write(json.dumps(row) + "\n")
            self._tick_log = []
