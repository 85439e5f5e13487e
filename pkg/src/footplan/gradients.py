"""Analytical gradients of the cost and constraints over a footstep plan.

Boundary states are chained through the closed-form pendulum step, so
sensitivities obey a forward recursion: the step from boundary k to k+1
(duration dt_k on foot k) contributes a direct term at its own boundary
and is then carried through the cosh/sinh blocks of every later step.
Cross-axis sensitivities vanish because the dynamics are axis-decoupled.

The flat variable layout used by the solvers is

    z = [u_1x, u_1y, ..., u_Nx, u_Ny, dt_0, ..., dt_N]

Causality zeros are stored exactly (hard zeros, no roundoff): a decision
variable acting during step k cannot influence boundaries j <= k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lip import Foothold, Vec2
from .problem import (
    FootstepPlan,
    Multipliers,
    ProblemSpec,
    constraint_count,
    crossing_signs,
)

_NORM_EPS = 1e-12  # below this, distance/speed residuals get a zero gradient row


class _Ctx:
    """Per-spec constants unpacked once for the flat hot path."""

    __slots__ = (
        "n", "omega", "x0", "y0", "vx0", "vy0", "sup_x", "sup_y",
        "ref_x", "ref_y", "w_x", "w_y",
        "l_max", "v_max", "r_foot", "t_lower", "t_upper", "signs", "m", "nvar",
    )

    def __init__(self, spec: ProblemSpec):
        self.n = spec.horizon
        self.omega = spec.params.omega
        self.x0, self.y0 = spec.initial_state.pos
        self.vx0, self.vy0 = spec.initial_state.vel
        self.sup_x, self.sup_y = spec.current_support.xy
        self.ref_x, self.ref_y = spec.ref_velocity
        self.w_x = spec.w_x
        self.w_y = spec.w_y
        lim = spec.limits
        self.l_max = lim.l_max
        self.v_max = lim.v_max
        self.r_foot = lim.r_foot
        self.t_lower = lim.t_lower
        self.t_upper = lim.t_upper
        self.signs = crossing_signs(spec)
        self.m = constraint_count(spec.horizon)
        self.nvar = 3 * spec.horizon + 1


def _flatten(plan: FootstepPlan) -> list[float]:
    z: list[float] = []
    for f in plan.footholds:
        z.append(f.xy[0])
        z.append(f.xy[1])
    z.extend(plan.durations)
    return z


def _unflatten(spec: ProblemSpec, z, template: FootstepPlan | None = None) -> FootstepPlan:
    """Rebuild a plan from the flat layout; foothold heights, which the
    planar solvers do not touch, are carried over from the template."""
    n = spec.horizon
    heights = [f.z for f in template.footholds] if template is not None else [0.0] * n
    feet = tuple(
        Foothold(xy=(z[2 * k], z[2 * k + 1]), z=heights[k]) for k in range(n)
    )
    return FootstepPlan(footholds=feet, durations=tuple(z[2 * n:]))


def _rollout_flat(ctx: _Ctx, z):
    """Boundary states and per-step trig terms for a flat plan.

    Returns (fx, fy, px, py, vx, vy, ch, sh) with feet indexed by step
    (0 = current support) and boundaries 1..N+1 stored at 0..N.  Negative
    durations propagate as zero time, matching problem.rollout.
    """
    n = ctx.n
    w = ctx.omega
    exp = math.exp
    fx = [ctx.sup_x]
    fy = [ctx.sup_y]
    for k in range(n):
        fx.append(z[2 * k])
        fy.append(z[2 * k + 1])
    px = [0.0] * (n + 1)
    py = [0.0] * (n + 1)
    vx = [0.0] * (n + 1)
    vy = [0.0] * (n + 1)
    ch = [1.0] * (n + 1)
    sh = [0.0] * (n + 1)
    x, y, vxc, vyc = ctx.x0, ctx.y0, ctx.vx0, ctx.vy0
    base = 2 * n
    for k in range(n + 1):
        dt = z[base + k]
        if dt < 0.0:
            dt = 0.0
        e = exp(w * dt)
        ei = 1.0 / e
        c = 0.5 * (e + ei)
        s = 0.5 * (e - ei)
        ch[k] = c
        sh[k] = s
        ux, uy = fx[k], fy[k]
        rx = x - ux
        ry = y - uy
        x = rx * c + vxc * s / w + ux
        y = ry * c + vyc * s / w + uy
        nvx = rx * w * s + vxc * c
        nvy = ry * w * s + vyc * c
        vxc, vyc = nvx, nvy
        px[k] = x
        py[k] = y
        vx[k] = vxc
        vy[k] = vyc
    return fx, fy, px, py, vx, vy, ch, sh


def _sensitivities_flat(ctx: _Ctx, fx, fy, px, py, vx, vy, ch, sh):
    """Forward-recursion sensitivities of boundary states.

    Su_p[j][k], Su_v[j][k]: d pos_{j+1} / d u_{k+1} per axis (same value on
    both axes).  St_p[a][j][k], St_v[a][j][k]: d pos_{j+1} / d dt_k for axis
    a.  Entries at or before the acting step are exact zeros.
    """
    n = ctx.n
    w = ctx.omega
    Su_p = [[0.0] * n for _ in range(n + 1)]
    Su_v = [[0.0] * n for _ in range(n + 1)]
    for k in range(n):  # foothold u_{k+1} acts during step k+1
        step = k + 1
        bp = 1.0 - ch[step]
        bv = -w * sh[step]
        Su_p[step][k] = bp
        Su_v[step][k] = bv
        for j in range(step + 1, n + 1):
            c, s = ch[j], sh[j]
            bp, bv = bp * c + bv * s / w, bp * w * s + bv * c
            Su_p[j][k] = bp
            Su_v[j][k] = bv
    w2 = w * w
    St_p = ([[0.0] * (n + 1) for _ in range(n + 1)], [[0.0] * (n + 1) for _ in range(n + 1)])
    St_v = ([[0.0] * (n + 1) for _ in range(n + 1)], [[0.0] * (n + 1) for _ in range(n + 1)])
    for axis, (p, v, f) in enumerate(((px, vx, fx), (py, vy, fy))):
        tp = St_p[axis]
        tv = St_v[axis]
        for k in range(n + 1):  # duration dt_k acts during step k
            bp = v[k]  # terminal velocity of step k
            bv = w2 * (p[k] - f[k])  # terminal acceleration of step k
            tp[k][k] = bp
            tv[k][k] = bv
            for j in range(k + 1, n + 1):
                c, s = ch[j], sh[j]
                bp, bv = bp * c + bv * s / w, bp * w * s + bv * c
                tp[j][k] = bp
                tv[j][k] = bv
    return Su_p, Su_v, St_p, St_v


def _constraints_flat(ctx: _Ctx, z, fx, fy, px, py, vx, vy):
    """Residual list c (c <= 0 feasible), ordered as problem.constraint_names."""
    n = ctx.n
    hyp = math.hypot
    c: list[float] = []
    for j in range(1, n + 1):
        c.append(hyp(px[j - 1] - fx[j], py[j - 1] - fy[j]) - ctx.l_max)
    for j in range(1, n + 2):
        c.append(hyp(px[j - 1] - fx[j - 1], py[j - 1] - fy[j - 1]) - ctx.l_max)
    for j in range(1, n + 2):
        c.append(hyp(vx[j - 1], vy[j - 1]) - ctx.v_max)
    for k in range(1, n + 1):
        c.append(ctx.signs[k - 1] * (fy[k] - fy[k - 1]) + ctx.r_foot)
    base = 2 * n
    for k in range(n + 1):
        c.append(z[base + k] - ctx.t_upper)
    for k in range(n + 1):
        lower = 0.0 if k == 0 else ctx.t_lower
        c.append(lower - z[base + k])
    return c


def _constraint_row(ctx: _Ctx, idx, z, fx, fy, px, py, vx, vy, sens):
    """Gradient of constraint idx as a dense list over the flat layout."""
    n = ctx.n
    Su_p, Su_v, St_p, St_v = sens
    row = [0.0] * ctx.nvar
    base = 2 * n
    if idx < n:  # next-step length at boundary j
        j = idx + 1
        dx = px[j - 1] - fx[j]
        dy = py[j - 1] - fy[j]
        r = math.hypot(dx, dy)
        if r < _NORM_EPS:
            return row
        dx /= r
        dy /= r
        for m in range(1, n + 1):
            g = Su_p[j - 1][m - 1] - (1.0 if m == j else 0.0)
            row[2 * (m - 1)] = dx * g
            row[2 * (m - 1) + 1] = dy * g
        for k in range(n + 1):
            row[base + k] = dx * St_p[0][j - 1][k] + dy * St_p[1][j - 1][k]
        return row
    idx -= n
    if idx < n + 1:  # trailing-leg length at boundary j
        j = idx + 1
        dx = px[j - 1] - fx[j - 1]
        dy = py[j - 1] - fy[j - 1]
        r = math.hypot(dx, dy)
        if r < _NORM_EPS:
            return row
        dx /= r
        dy /= r
        for m in range(1, n + 1):
            g = Su_p[j - 1][m - 1] - (1.0 if m == j - 1 else 0.0)
            row[2 * (m - 1)] = dx * g
            row[2 * (m - 1) + 1] = dy * g
        for k in range(n + 1):
            row[base + k] = dx * St_p[0][j - 1][k] + dy * St_p[1][j - 1][k]
        return row
    idx -= n + 1
    if idx < n + 1:  # CoM speed at boundary j
        j = idx + 1
        sx = vx[j - 1]
        sy = vy[j - 1]
        r = math.hypot(sx, sy)
        if r < _NORM_EPS:
            return row
        sx /= r
        sy /= r
        for m in range(1, n + 1):
            g = Su_v[j - 1][m - 1]
            row[2 * (m - 1)] = sx * g
            row[2 * (m - 1) + 1] = sy * g
        for k in range(n + 1):
            row[base + k] = sx * St_v[0][j - 1][k] + sy * St_v[1][j - 1][k]
        return row
    idx -= n + 1
    if idx < n:  # lateral clearance between feet k-1 and k
        k = idx + 1
        s = ctx.signs[k - 1]
        row[2 * (k - 1) + 1] = s
        if k >= 2:
            row[2 * (k - 2) + 1] = -s
        return row
    idx -= n
    if idx < n + 1:  # duration upper bound
        row[base + idx] = 1.0
        return row
    idx -= n + 1
    row[base + idx] = -1.0  # duration lower bound
    return row


def _cost_flat(ctx: _Ctx, vx, vy) -> float:
    total = 0.0
    for j in range(ctx.n + 1):
        ex = vx[j] - ctx.ref_x
        ey = vy[j] - ctx.ref_y
        total += ctx.w_x * ex * ex + ctx.w_y * ey * ey
    return total


def _al_value_flat(ctx: _Ctx, z, lam, mu):
    """(augmented Lagrangian, cost, residuals) for a flat plan."""
    fx, fy, px, py, vx, vy, ch, sh = _rollout_flat(ctx, z)
    c = _constraints_flat(ctx, z, fx, fy, px, py, vx, vy)
    f = _cost_flat(ctx, vx, vy)
    val = f
    for cj, lj in zip(c, lam):
        if cj > 0.0:
            val += lj * cj + mu * cj * cj
    return val, f, c


def _al_gradient_flat(ctx: _Ctx, z, lam, mu):
    """(gradient of the augmented Lagrangian, cost, residuals, px, py).

    Inactive inequalities (c < 0) contribute nothing; at exact activation
    the active branch's one-sided gradient is used.  The boundary CoM
    positions px, py are returned for the caller's projection anchors.
    """
    fx, fy, px, py, vx, vy, ch, sh = _rollout_flat(ctx, z)
    sens = _sensitivities_flat(ctx, fx, fy, px, py, vx, vy, ch, sh)
    Su_p, Su_v, St_p, St_v = sens
    n = ctx.n
    base = 2 * n
    g = [0.0] * ctx.nvar
    # velocity-tracking cost term
    for j in range(n + 1):
        gx = 2.0 * ctx.w_x * (vx[j] - ctx.ref_x)
        gy = 2.0 * ctx.w_y * (vy[j] - ctx.ref_y)
        if gx == 0.0 and gy == 0.0:
            continue
        svj = Su_v[j]
        for m in range(n):
            s = svj[m]
            if s != 0.0:
                g[2 * m] += gx * s
                g[2 * m + 1] += gy * s
        tvx = St_v[0][j]
        tvy = St_v[1][j]
        for k in range(n + 1):
            g[base + k] += gx * tvx[k] + gy * tvy[k]
    # constraint terms, active rows only
    c = _constraints_flat(ctx, z, fx, fy, px, py, vx, vy)
    for idx, cj in enumerate(c):
        if cj < 0.0:
            continue
        coeff = lam[idx] + 2.0 * mu * cj
        if coeff == 0.0:
            continue
        row = _constraint_row(ctx, idx, z, fx, fy, px, py, vx, vy, sens)
        for i in range(ctx.nvar):
            ri = row[i]
            if ri != 0.0:
                g[i] += coeff * ri
    f = _cost_flat(ctx, vx, vy)
    return g, f, c, px, py


def _nlp_eval_flat(ctx: _Ctx, z):
    """(cost, cost gradient, residuals, Jacobian rows) in one pass.

    Used by the reference solver, which needs every constraint row
    regardless of activation.
    """
    fx, fy, px, py, vx, vy, ch, sh = _rollout_flat(ctx, z)
    sens = _sensitivities_flat(ctx, fx, fy, px, py, vx, vy, ch, sh)
    Su_v = sens[1]
    St_v = sens[3]
    n = ctx.n
    base = 2 * n
    gf = [0.0] * ctx.nvar
    for j in range(n + 1):
        gx = 2.0 * ctx.w_x * (vx[j] - ctx.ref_x)
        gy = 2.0 * ctx.w_y * (vy[j] - ctx.ref_y)
        svj = Su_v[j]
        for m in range(n):
            s = svj[m]
            gf[2 * m] += gx * s
            gf[2 * m + 1] += gy * s
        tvx = St_v[0][j]
        tvy = St_v[1][j]
        for k in range(n + 1):
            gf[base + k] += gx * tvx[k] + gy * tvy[k]
    c = _constraints_flat(ctx, z, fx, fy, px, py, vx, vy)
    rows = [
        _constraint_row(ctx, idx, z, fx, fy, px, py, vx, vy, sens)
        for idx in range(ctx.m)
    ]
    return _cost_flat(ctx, vx, vy), gf, c, rows


# --- public surface ------------------------------------------------------


@dataclass(frozen=True)
class StateSensitivities:
    """Derivatives of boundary states with respect to the decision variables.

    Arrays are indexed [axis, j, k]: axis 0/1 = x/y, j = boundary state
    1..N+1 stored at 0..N, k = foothold u_{k+1} (d_pos_d_foot, d_vel_d_foot,
    shape (2, N+1, N)) or duration dt_k (d_pos_d_dt, d_vel_d_dt, shape
    (2, N+1, N+1)).  Entries pair same-axis components; cross-axis
    derivatives are identically zero.  Causality zeros are exact.
    """

    d_pos_d_foot: np.ndarray
    d_vel_d_foot: np.ndarray
    d_pos_d_dt: np.ndarray
    d_vel_d_dt: np.ndarray


def state_sensitivities(spec: ProblemSpec, plan: FootstepPlan) -> StateSensitivities:
    spec.check_plan(plan)
    ctx = _Ctx(spec)
    z = _flatten(plan)
    fx, fy, px, py, vx, vy, ch, sh = _rollout_flat(ctx, z)
    Su_p, Su_v, St_p, St_v = _sensitivities_flat(ctx, fx, fy, px, py, vx, vy, ch, sh)
    du_p = np.array([Su_p, Su_p], dtype=float)
    du_v = np.array([Su_v, Su_v], dtype=float)
    dt_p = np.array(St_p, dtype=float)
    dt_v = np.array(St_v, dtype=float)
    return StateSensitivities(du_p, du_v, dt_p, dt_v)


@dataclass(frozen=True)
class PlanGradient:
    """Gradient of a scalar objective over the plan variables."""

    d_footholds: tuple[Vec2, ...]
    d_durations: tuple[float, ...]

    def flat(self) -> np.ndarray:
        out = []
        for gx, gy in self.d_footholds:
            out.append(gx)
            out.append(gy)
        out.extend(self.d_durations)
        return np.array(out, dtype=float)


def _wrap_gradient(spec: ProblemSpec, g: list[float]) -> PlanGradient:
    n = spec.horizon
    feet = tuple((g[2 * k], g[2 * k + 1]) for k in range(n))
    return PlanGradient(d_footholds=feet, d_durations=tuple(g[2 * n:]))


def augmented_lagrangian(spec: ProblemSpec, plan: FootstepPlan, mult: Multipliers) -> float:
    """Scalar cost + lambda^T max(0, c) + mu * sum max(0, c)^2."""
    _check_mult(spec, mult)
    ctx = _Ctx(spec)
    val, _, _ = _al_value_flat(ctx, _flatten(plan), mult.lam, mult.mu)
    return val


def lagrangian_gradient(spec: ProblemSpec, plan: FootstepPlan, mult: Multipliers) -> PlanGradient:
    """Gradient of the augmented Lagrangian over footholds and durations."""
    spec.check_plan(plan)
    _check_mult(spec, mult)
    ctx = _Ctx(spec)
    g, _, _, _, _ = _al_gradient_flat(ctx, _flatten(plan), mult.lam, mult.mu)
    return _wrap_gradient(spec, g)


def cost_gradient(spec: ProblemSpec, plan: FootstepPlan) -> PlanGradient:
    """Gradient of the tracking cost alone (no constraint terms)."""
    spec.check_plan(plan)
    ctx = _Ctx(spec)
    g, _, _, _, _ = _al_gradient_flat(ctx, _flatten(plan), [0.0] * ctx.m, 0.0)
    return _wrap_gradient(spec, g)


def constraint_jacobian(spec: ProblemSpec, plan: FootstepPlan) -> np.ndarray:
    """Dense Jacobian of the residual vector, one row per constraint."""
    spec.check_plan(plan)
    ctx = _Ctx(spec)
    z = _flatten(plan)
    fx, fy, px, py, vx, vy, ch, sh = _rollout_flat(ctx, z)
    sens = _sensitivities_flat(ctx, fx, fy, px, py, vx, vy, ch, sh)
    rows = [
        _constraint_row(ctx, idx, z, fx, fy, px, py, vx, vy, sens)
        for idx in range(ctx.m)
    ]
    return np.array(rows, dtype=float)


def _check_mult(spec: ProblemSpec, mult: Multipliers) -> None:
    expected = constraint_count(spec.horizon)
    if len(mult.lam) != expected:
        from .errors import DimensionError

        raise DimensionError(
            f"multiplier vector has {len(mult.lam)} entries, expected {expected}"
        )
