"""High-accuracy reference solver and warm-start bookkeeping.

An interior-point method over the smooth footstep NLP.  The solver walks
the feasible path: a log barrier on the inequality residuals replaces the
constraints, each barrier subproblem is minimized by damped Newton with an
Armijo line search that rejects any infeasible trial point, and the
barrier weight follows a Fiacco-McCormick reduction schedule down to
near zero.  Multipliers are recovered from the barrier terms
(y_j = eta / -c_j) and handed to the fast solver as its warm start.

The problem is tiny (7 variables at the default horizon), so the barrier
Hessian is formed by central finite differences of the analytic gradient
and the Newton systems are solved dense.

Warm starts that violate constraints are first pulled into the strict
interior by a short penalty descent (phase 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .al_solver import SolveResult
from .gradients import _Ctx, _flatten, _nlp_eval_flat, _unflatten
from .lip import Foothold
from .problem import FootstepPlan, Multipliers, ProblemSpec


@dataclass(frozen=True)
class IpConfig:
    tol_stationarity: float = 1e-6
    tol_feasibility: float = 1e-8
    barrier_init: float = 0.01
    barrier_reduction: float = 0.1
    # gaps of active constraints scale with the barrier weight; below ~1e-9
    # they drop under float resolution of the primal step and Newton spins
    barrier_min: float = 1e-9
    max_newton_per_barrier: int = 40
    max_backtracks: int = 40
    phase1_iters: int = 400


@dataclass(frozen=True)
class WarmStart:
    """Previous solution plus the bookkeeping needed to reuse it."""

    plan: FootstepPlan
    mult: Multipliers
    wall_time_of_solution: float = 0.0
    step_index_at_solution: int = 0


def shift_warm_start(
    prev: WarmStart, elapsed: float, step_taken: bool, spec: ProblemSpec
) -> WarmStart:
    """Advance a stored solution in time so it can seed the next solve.

    Without a step the footholds are kept and the remaining current-step
    time shrinks by the elapsed interval.  After a support switch the plan
    shifts forward one step and the vacated final step is synthesized by
    repeating the last planned displacement mirrored laterally.
    """
    if elapsed < 0:
        raise ValueError("elapsed must be non-negative")
    feet = list(prev.plan.footholds)
    durs = list(prev.plan.durations)
    n = len(feet)
    if step_taken:
        if n >= 2:
            last, penult = feet[-1], feet[-2]
        else:
            last = feet[-1]
            penult = Foothold(xy=spec.current_support.xy, z=spec.current_support.z)
        dx = last.xy[0] - penult.xy[0]
        dy = last.xy[1] - penult.xy[1]
        synthesized = Foothold(xy=(last.xy[0] + dx, last.xy[1] - dy), z=last.z)
        feet = feet[1:] + [synthesized]
        durs = durs[1:] + [durs[-1]]
    durs[0] -= elapsed
    return WarmStart(
        plan=FootstepPlan(footholds=tuple(feet), durations=tuple(durs)),
        mult=prev.mult,
        wall_time_of_solution=prev.wall_time_of_solution,
        step_index_at_solution=prev.step_index_at_solution + (1 if step_taken else 0),
    )


def ref_solve(
    spec: ProblemSpec,
    warm: WarmStart,
    cfg: IpConfig | None = None,
    optimize_durations: bool = True,
) -> SolveResult:
    """Solve the footstep NLP to tight tolerance from a warm start.

    Never raises on solver trouble: iteration exhaustion or a failed
    linear solve returns the best iterate flagged infeasible.
    """
    cfg = cfg or IpConfig()
    spec.check_plan(warm.plan)
    ctx = _Ctx(spec)
    n = spec.horizon
    m_full = ctx.m

    if optimize_durations:
        free = list(range(ctx.nvar))
        rows_keep = list(range(m_full))
    else:
        free = list(range(2 * n))
        # duration bound rows are constants over the frozen variables
        rows_keep = list(range(m_full - 2 * (n + 1)))

    z_full = _flatten(warm.plan)
    base = 2 * n
    # frozen or initial durations must at least be inside their bounds
    lo0, hi = 0.0, spec.limits.t_upper
    for k in range(n + 1):
        lo = lo0 if k == 0 else spec.limits.t_lower
        z_full[base + k] = min(max(z_full[base + k], lo + 1e-9), hi - 1e-9)

    z_frozen = list(z_full)

    def evaluate(zf):
        z_all = list(z_frozen)
        for idx, i in enumerate(free):
            z_all[i] = float(zf[idx])
        f, gf, c, rows = _nlp_eval_flat(ctx, z_all)
        g = np.array([gf[i] for i in free])
        cr = np.array([c[j] for j in rows_keep])
        J = np.array([[rows[j][i] for i in free] for j in rows_keep])
        return f, g, cr, J

    from .gradients import _al_value_flat

    def evaluate_light(zf):
        """Cost and residuals only, for line-search probes."""
        z_all = list(z_frozen)
        for idx, i in enumerate(free):
            z_all[i] = float(zf[idx])
        _, f, c = _al_value_flat(ctx, z_all, (), 0.0)
        return f, np.array([c[j] for j in rows_keep])

    # a stale solution's multipliers encode how deep into the barrier
    # schedule it had gone; restart near that depth instead of from the top
    eta0 = cfg.barrier_init
    if any(l > 0.0 for l in warm.mult.lam):
        _, c0 = evaluate_light(np.array([z_full[i] for i in free]))
        gaps = [
            warm.mult.lam[j] * max(-c0[idx], 0.0)
            for idx, j in enumerate(rows_keep)
            if warm.mult.lam[j] > 1e-12
        ]
        if gaps:
            eta0 = min(cfg.barrier_init, max(10.0 * float(np.mean(gaps)), 1e-9))

    z0 = np.array([z_full[i] for i in free], dtype=float)
    try:
        _, c0 = evaluate_light(z0)
        if np.max(c0) >= 0.0:
            z0 = _al_feasibility_pass(spec, z_frozen, free, optimize_durations)
        z0, interior_ok = _phase1(cfg, evaluate, evaluate_light, z0)
        if interior_ok:
            z_fin, y_fin, iters, diagnostic = _barrier_loop(
                cfg, evaluate, evaluate_light, z0, eta0
            )
        else:
            z_fin, y_fin, iters, diagnostic = z0, None, 0, "no strictly feasible point found"
    except (np.linalg.LinAlgError, FloatingPointError, OverflowError) as exc:
        z_fin, y_fin, iters, diagnostic = z0, None, 0, f"linear algebra failure: {exc}"

    f, g, c, J = evaluate(z_fin)
    lam_full = np.zeros(m_full)
    if y_fin is not None:
        gl_inf = float(np.max(np.abs(g + J.T @ y_fin)))
        for idx, j in enumerate(rows_keep):
            lam_full[j] = max(0.0, float(y_fin[idx]))
    else:
        gl_inf = math.inf
    z_out = list(z_full)
    for idx, i in enumerate(free):
        z_out[i] = float(z_fin[idx])
    feasible = bool(
        np.max(c) <= cfg.tol_feasibility and not diagnostic and gl_inf <= cfg.tol_stationarity
    )
    return SolveResult(
        plan=_unflatten(spec, z_out, template=warm.plan),
        mult=Multipliers(lam=tuple(lam_full), mu=1.0),
        feasible=feasible,
        iterations=iters,
        grad_norm=gl_inf,
        cost=f,
        max_residual=float(np.max(c)),
        diagnostic=diagnostic,
    )


def _al_feasibility_pass(spec: ProblemSpec, z_frozen, free, optimize_durations: bool):
    """Feasibility restoration: run the fast solver with zeroed cost
    weights, which turns it into a pure constraint-violation descent."""
    from dataclasses import replace

    from .al_solver import AlConfig, al_solve

    fspec = replace(spec, w_x=0.0, w_y=0.0)
    plan = _unflatten(spec, list(z_frozen))
    cfg = AlConfig(
        alpha=0.01,
        mu0=10.0,
        phi=2.0,
        mu_max=200.0,
        max_inner_iters=300,
        inner_per_outer=10,
        grad_norm_delta_tol=1e-12,
        constraint_tol=1e-9,
        optimize_durations=optimize_durations,
    )
    res = al_solve(fspec, plan, Multipliers.zeros(fspec, mu=10.0), cfg)
    z_all = _flatten(res.plan)
    return np.array([z_all[i] for i in free], dtype=float)


def _phase1(cfg: IpConfig, evaluate, evaluate_light, z0: np.ndarray):
    """Pull the iterate into the strict interior if it is not already.

    A pure-feasibility pass of the fast augmented-Lagrangian solver (cost
    weights zeroed) handles the heavy lifting; a short descent on the
    squared violation then pushes strictly inside.
    """
    _, c = evaluate_light(z0)
    if np.max(c) < 0.0:
        return z0, True
    z = z0.copy()
    margin = 1e-3
    step = 0.05
    _, _, c, J = evaluate(z)

    def viol(cv):
        a = np.maximum(cv + margin, 0.0)
        return float(a @ a)

    v = viol(c)
    for _ in range(cfg.phase1_iters):
        if np.max(c) < -0.5 * margin:
            return z, True
        a = np.maximum(c + margin, 0.0)
        grad = 2.0 * (J.T @ a)
        if float(np.linalg.norm(grad)) < 1e-14:
            break
        z_t = z - step * grad
        _, _, c_t, J_t = evaluate(z_t)
        v_t = viol(c_t)
        if v_t < v:
            z, c, J, v = z_t, c_t, J_t, v_t
            step *= 1.2
        else:
            step *= 0.5
            if step < 1e-12:
                break
    _, c = evaluate_light(z)
    return z, bool(np.max(c) < 0.0)


def _barrier_loop(cfg: IpConfig, evaluate, evaluate_light, z0: np.ndarray, eta0: float):
    """Fiacco-McCormick outer loop over damped-Newton barrier subproblems."""
    z = z0.copy()
    eta = eta0
    iters = 0
    diagnostic = ""
    nvar = len(z)
    eye = np.eye(nvar)

    def barrier_parts(zv):
        f, g, c, J = evaluate(zv)
        if np.max(c) >= 0.0:
            return f, g, c, J, math.inf, None, None
        y = eta / (-c)
        bval = f - eta * float(np.sum(np.log(-c)))
        bgrad = g + J.T @ y
        return f, g, c, J, bval, bgrad, y

    y_last = None
    final_retries = 2
    while True:
        # minimize the eta-subproblem
        for _ in range(cfg.max_newton_per_barrier):
            f, g, c, J, bval, bgrad, y = barrier_parts(z)
            if bgrad is None:
                return z, y_last, iters, "iterate left the interior"
            y_last = y
            gn = float(np.max(np.abs(bgrad)))
            if gn <= max(10.0 * eta, 0.5 * cfg.tol_stationarity):
                break
            iters += 1
            # exact barrier curvature J^T diag(eta/c^2) J plus an FD
            # Lagrangian Hessian at frozen multipliers; differencing the
            # barrier terms directly would step across the boundary once
            # eta (and with it the active-constraint gap) gets tiny
            H_lag = _fd_lagrangian_hessian(evaluate, z, y, g, J)
            H = H_lag + J.T @ ((eta / (c * c))[:, None] * J)
            delta = 0.0
            for _ in range(20):
                try:
                    L = np.linalg.cholesky(H + delta * eye)
                    dz = -np.linalg.solve(L.T, np.linalg.solve(L, bgrad))
                    break
                except np.linalg.LinAlgError:
                    delta = 1e-8 if delta == 0.0 else delta * 10.0
            else:
                return z, y_last, iters, "barrier hessian not positive definite"
            slope = float(bgrad @ dz)
            if slope >= 0.0:  # fall back to steepest descent
                dz = -bgrad
                slope = -float(bgrad @ bgrad)
            alpha = 1.0
            accepted = False
            for _ in range(cfg.max_backtracks):
                z_t = z + alpha * dz
                f_t, c_t = evaluate_light(z_t)
                if np.max(c_t) < 0.0:
                    b_t = f_t - eta * float(np.sum(np.log(-c_t)))
                    if b_t <= bval + 1e-4 * alpha * slope:
                        accepted = True
                        break
                alpha *= 0.5
            if not accepted:
                break  # subproblem is as converged as line search allows
            moved = alpha * float(np.max(np.abs(dz)))
            z = z + alpha * dz
            if moved < 1e-14 * (1.0 + float(np.max(np.abs(z)))):
                break  # below float resolution, no further progress possible
        if eta <= cfg.barrier_min:
            # a stalled line search can leave the last subproblem slightly
            # unpolished; re-entering with a fresh Hessian usually finishes
            _, _, _, _, _, bg_now, _ = barrier_parts(z)
            if (
                final_retries > 0
                and bg_now is not None
                and float(np.max(np.abs(bg_now))) > 0.5 * cfg.tol_stationarity
            ):
                final_retries -= 1
                continue
            break
        eta = max(cfg.barrier_min, min(cfg.barrier_reduction * eta, eta**1.2))

    f, g, c, J, bval, bgrad, y = barrier_parts(z)
    if bgrad is not None:
        y_last = y
        gl = float(np.max(np.abs(g + J.T @ y)))
        if gl > cfg.tol_stationarity:
            diagnostic = "stationarity tolerance not reached"
    return z, y_last, iters, diagnostic


def _fd_lagrangian_hessian(evaluate, z, y, g0, J0) -> np.ndarray:
    """Forward-difference Hessian of f + y^T c at frozen multipliers.

    Forward differences reuse the gradient already computed at z; the
    Newton tolerance per barrier level is loose enough for the accuracy.
    """
    nvar = len(z)
    H = np.empty((nvar, nvar))
    gl0 = g0 + J0.T @ y
    for i in range(nvar):
        h = 1e-7 * max(1.0, abs(z[i]))
        zp = z.copy()
        zp[i] += h
        _, gp, _, Jp = evaluate(zp)
        H[:, i] = ((gp + Jp.T @ y) - gl0) / h
    return 0.5 * (H + H.T)
