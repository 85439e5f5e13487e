"""Fast augmented-Lagrangian solver: projected gradient descent with dual
updates and penalty growth.

The primal iteration is dx <- dx - alpha * dL/dx followed by a projection
onto the box/ball bounds.  Every inner_per_outer primal steps the
multipliers update as lambda <- max(0, lambda + mu c) and the penalty grows
mu <- phi mu.  Convergence is declared when the gradient norm stops
changing: |norm_i - norm_{i-1}| < grad_norm_delta_tol.

The remaining current-step time dt_0 gets special projection treatment:
when it crosses below zero it is decremented by one loop period instead of
being clamped, which forces an imminent support switch downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import DimensionError
from .gradients import _al_gradient_flat, _al_value_flat, _Ctx, _flatten, _unflatten
from .problem import ConstraintLimits, FootstepPlan, Multipliers, ProblemSpec


@dataclass(frozen=True)
class AlConfig:
    """Tuning knobs for the fast solver.

    alpha is the primal step size, phi > 1 the penalty growth factor, mu0
    the starting penalty.  max_inner_iters is the per-call iteration
    budget; a dual update fires every inner_per_outer primal steps.
    """

    alpha: float = 0.005
    phi: float = 1.5
    mu0: float = 1.0
    grad_norm_delta_tol: float = 0.05
    max_inner_iters: int = 100
    inner_per_outer: int = 10
    constraint_tol: float = 1e-3
    optimize_durations: bool = True
    loop_rate: float = 200.0
    # mu_max bounds the penalty on long diagnostic runs; fixed-step descent
    # destabilizes once alpha * mu * |grad c|^2 grows past O(1).  The default
    # budget never reaches it.
    mu_max: float | None = None
    trace_path: str | None = None

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.phi <= 1:
            raise ValueError("phi must exceed 1")
        if self.grad_norm_delta_tol <= 0 or self.constraint_tol <= 0:
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class SolveResult:
    plan: FootstepPlan
    mult: Multipliers
    feasible: bool
    iterations: int
    grad_norm: float
    cost: float = 0.0
    max_residual: float = 0.0
    diagnostic: str = ""


def _project_flat(
    z: list[float],
    n: int,
    limits: ConstraintLimits,
    loop_rate: float,
    anchors,
) -> None:
    """In-place projection of the flat plan onto its bounds."""
    base = 2 * n
    dt0 = z[base]
    if dt0 < 0.0:
        z[base] = dt0 - 1.0 / loop_rate  # never clamped up; forces a switch
    elif dt0 > limits.t_upper:
        z[base] = limits.t_upper
    for k in range(1, n + 1):
        dt = z[base + k]
        if dt < limits.t_lower:
            z[base + k] = limits.t_lower
        elif dt > limits.t_upper:
            z[base + k] = limits.t_upper
    if anchors is not None:
        for k in range(n):
            ax, ay = anchors[k]
            dx = z[2 * k] - ax
            dy = z[2 * k + 1] - ay
            d = math.hypot(dx, dy)
            if d > limits.l_max:
                scale = limits.l_max / d
                z[2 * k] = ax + dx * scale
                z[2 * k + 1] = ay + dy * scale


def project_plan(
    plan: FootstepPlan,
    limits: ConstraintLimits,
    loop_rate: float,
    anchors=None,
) -> FootstepPlan:
    """Clamp plan variables to their bounds.

    Durations are clamped into [t_lower, t_upper], except the remaining
    current-step time: when negative it is decremented by 1/loop_rate
    rather than clamped.  When anchors (one reference point per foothold,
    typically the predicted CoM at that touchdown) are given, each foothold
    is pulled back onto the l_max ball around its anchor.
    """
    if loop_rate <= 0:
        raise ValueError("loop_rate must be positive")
    n = plan.horizon
    z = _flatten(plan)
    _project_flat(z, n, limits, loop_rate, anchors)
    feet = tuple(
        type(f)(xy=(z[2 * k], z[2 * k + 1]), z=f.z) for k, f in enumerate(plan.footholds)
    )
    return FootstepPlan(footholds=feet, durations=tuple(z[2 * n:]))


def al_solve(
    spec: ProblemSpec,
    init: FootstepPlan,
    init_mult: Multipliers,
    cfg: AlConfig | None = None,
) -> SolveResult:
    """Run the projected-gradient augmented-Lagrangian loop from init."""
    cfg = cfg or AlConfig()
    spec.check_plan(init)
    ctx = _Ctx(spec)
    if len(init_mult.lam) != ctx.m:
        raise DimensionError(
            f"multiplier vector has {len(init_mult.lam)} entries, expected {ctx.m}"
        )
    z = _flatten(init)
    lam = list(init_mult.lam)
    mu = init_mult.mu
    alpha = cfg.alpha
    nvar = ctx.nvar
    base = 2 * ctx.n
    isfinite = math.isfinite

    best_feas_z = None
    best_feas_val = math.inf
    best_any_z = list(z)
    best_any_res = math.inf
    prev_gnorm = None
    gnorm = math.inf
    iterations = 0
    trace: list[tuple[int, float, float, float]] | None = [] if cfg.trace_path else None
    diagnostic = ""

    for it in range(cfg.max_inner_iters):
        g, f, c, px, py = _al_gradient_flat(ctx, z, lam, mu)
        bad = False
        for gi in g:
            if not isfinite(gi):
                bad = True
                break
        if bad:
            diagnostic = f"non-finite gradient at iteration {it}"
            break
        if not cfg.optimize_durations:
            for k in range(base, nvar):
                g[k] = 0.0
        gnorm = math.sqrt(sum(gi * gi for gi in g))
        maxres = max(c)
        al_val = f
        for cj, lj in zip(c, lam):
            if cj > 0.0:
                al_val += lj * cj + mu * cj * cj
        if maxres <= cfg.constraint_tol:
            if al_val < best_feas_val:
                best_feas_val = al_val
                best_feas_z = list(z)
        if maxres < best_any_res:
            best_any_res = maxres
            best_any_z = list(z)
        if trace is not None:
            trace.append((it, f, gnorm, maxres))
        iterations = it + 1
        if prev_gnorm is not None and abs(gnorm - prev_gnorm) < cfg.grad_norm_delta_tol:
            break
        prev_gnorm = gnorm
        for i in range(nvar):
            z[i] -= alpha * g[i]
        _project_flat(
            z,
            ctx.n,
            spec.limits,
            cfg.loop_rate,
            [(px[k], py[k]) for k in range(ctx.n)],
        )
        if (it + 1) % cfg.inner_per_outer == 0:
            _, _, c_now = _al_value_flat(ctx, z, lam, mu)
            for j, cj in enumerate(c_now):
                nl = lam[j] + mu * cj
                lam[j] = nl if nl > 0.0 else 0.0
            mu *= cfg.phi
            if cfg.mu_max is not None and mu > cfg.mu_max:
                mu = cfg.mu_max

    if diagnostic:
        result_z = best_feas_z if best_feas_z is not None else best_any_z
        feasible = best_feas_z is not None
    elif best_feas_z is not None:
        result_z = best_feas_z
        feasible = True
    else:
        result_z = best_any_z
        feasible = False

    _, fres, cres = _al_value_flat(ctx, result_z, lam, mu)
    if cfg.trace_path and trace is not None:
        with open(cfg.trace_path, "w") as fh:
            fh.write("iteration,cost,grad_norm,max_residual\n")
            for row in trace:
                fh.write(f"{row[0]},{row[1]!r},{row[2]!r},{row[3]!r}\n")
    return SolveResult(
        plan=_unflatten(spec, result_z, template=init),
        mult=Multipliers(lam=tuple(lam), mu=mu),
        feasible=feasible,
        iterations=iterations,
        grad_norm=gnorm if isfinite(gnorm) else math.inf,
        cost=fres,
        max_residual=max(cres),
        diagnostic=diagnostic,
    )
