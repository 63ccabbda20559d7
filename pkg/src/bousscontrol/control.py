"""Null-control synthesis.

Linear problem: minimize over distributed controls (v, v0) supported in omega

    J = 1/2 iint w^2 (|v|^2 + |v0|^2) dx dt
        + 1/(2 eps) (|y(T)|^2 + |theta(T)|^2),

where the linear system maps (v, v0) to (y, theta) and w is either 1 or the
normalized blow-up weight rho2.  The quadratic is minimized by conjugate
gradients in the preconditioned variable z = w v, which absorbs the weight
spread exactly (the Hessian becomes I + (1/eps) (L W^-1)^T (L W^-1)); the
reduced gradient in v-space is w^2 v + 1~_omega zeta with zeta the adjoint
stage driven by terminal data (y(T)/eps, theta(T)/eps).

Nonlinear problem: outer source-term fixed point.  At iterate k all nonlinear
and nonlocal terms of the previous trajectory are frozen into (F1, F2) of the
linear system and the linear control problem is re-solved; on convergence the
control is validated by an independent nonlinear re-simulation.

Large-time pipeline: free decay until the energy crosses delta, then the
nonlinear synthesis on the remaining short horizon.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConvergenceError, DomainError, RegimeError
from .grids import GridSpec, TimeGrid
from . import operators as ops
from .adjoint import run_adjoint
from .forward import LinearPropagator, SystemSpec, Trajectory, run_nonlinear
from .weights import CONTROL_WEIGHT_LOG_CAP, WeightTables, control_weight_logs


@dataclass
class ControlTrajectory:
    """Time-sampled distributed controls; sample n acts on [t_n, t_{n+1})."""

    vu: np.ndarray   # (nt, nx+1, ny)
    vv: np.ndarray   # (nt, nx, ny+1)
    v0: np.ndarray   # (nt, nx, ny)

    @classmethod
    def zeros(cls, grid: GridSpec, nt: int) -> "ControlTrajectory":
        return cls(np.zeros((nt, grid.nx + 1, grid.ny)),
                   np.zeros((nt, grid.nx, grid.ny + 1)),
                   np.zeros((nt, grid.nx, grid.ny)))

    def copy(self) -> "ControlTrajectory":
        return ControlTrajectory(self.vu.copy(), self.vv.copy(), self.v0.copy())

    def scaled(self, a: float) -> "ControlTrajectory":
        return ControlTrajectory(a * self.vu, a * self.vv, a * self.v0)

    def plus(self, other: "ControlTrajectory", a: float = 1.0) -> "ControlTrajectory":
        return ControlTrajectory(self.vu + a * other.vu, self.vv + a * other.vv,
                                 self.v0 + a * other.v0)


def control_inner(a: ControlTrajectory, b: ControlTrajectory, grid: GridSpec,
                  dt: float) -> float:
    s = float(np.sum(a.vu * b.vu) + np.sum(a.vv * b.vv) + np.sum(a.v0 * b.v0))
    return s * grid.cell_area * dt


def control_norm(a: ControlTrajectory, grid: GridSpec, dt: float) -> float:
    return float(np.sqrt(max(control_inner(a, a, grid, dt), 0.0)))


@dataclass(frozen=True)
class PenaltySpec:
    epsilon: float = 1.0e-6
    weight_mode: str = "carleman"
    t_clip: float | None = None      # default T - 2 dt
    cg_tol: float = 1.0e-8
    cg_max_iters: int = 600

    def __post_init__(self):
        if self.epsilon <= 0.0:
            raise DomainError("penalty epsilon must be positive")
        if self.weight_mode not in ("carleman", "unweighted"):
            raise DomainError("weight_mode must be 'carleman' or 'unweighted'")
        if self.t_clip is not None and self.t_clip <= 0.0:
            raise DomainError("t_clip must be positive (or None for T - 2 dt)")


@dataclass(frozen=True)
class OuterLoopSpec:
    max_outer: int = 20
    outer_tol: float = 1.0e-9
    damping: float = 1.0

    def __post_init__(self):
        if self.max_outer < 1:
            raise DomainError("max_outer must be >= 1")
        if self.outer_tol <= 0.0:
            raise DomainError("outer_tol must be positive")
        if not (0.0 < self.damping <= 1.0):
            raise DomainError("damping must lie in (0, 1]")


@dataclass
class SynthesisReport:
    terminal_norm: float = 0.0
    control_energy_weighted: float = 0.0
    cg_iters: int = 0
    outer_iters: int = 0
    eps: float = 0.0
    wall_time_s: float = 0.0
    uncontrolled_terminal_norm: float = 0.0
    data_norm: float = 0.0
    converged: bool = True
    j_history: list = field(default_factory=list)
    update_history: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    z_state: object = field(default=None, repr=False)  # warm-start carrier, not serialized

    def lines(self):
        out = [
            f"terminal_norm = {self.terminal_norm:.17g}",
            f"control_energy_weighted = {self.control_energy_weighted:.17g}",
            f"cg_iters = {self.cg_iters}",
            f"outer_iters = {self.outer_iters}",
            f"eps = {self.eps:.17g}",
            f"wall_time_s = {self.wall_time_s:.6f}",
            f"uncontrolled_terminal_norm = {self.uncontrolled_terminal_norm:.17g}",
            f"data_norm = {self.data_norm:.17g}",
            f"converged = {self.converged}",
        ]
        if self.update_history:
            out.append("update_norms = "
                       + ",".join(f"{u:.17g}" for u in self.update_history))
        for k, v in sorted(self.extra.items()):
            out.append(f"{k} = {v:.17g}" if isinstance(v, float) else f"{k} = {v}")
        return out


def step_weight_logs(pen: PenaltySpec, weights: WeightTables | None,
                     tgrid: TimeGrid) -> np.ndarray:
    """Per-step log control weights for the configured mode."""
    if pen.weight_mode == "unweighted":
        return np.zeros(tgrid.nt)
    if weights is None:
        raise DomainError("carleman weight_mode needs WeightTables")
    t_clip = pen.t_clip if pen.t_clip is not None else tgrid.t_final - 2.0 * tgrid.dt
    return control_weight_logs(weights, t_clip, cap=CONTROL_WEIGHT_LOG_CAP)


def weighted_control_energy(c: ControlTrajectory, logw: np.ndarray,
                            grid: GridSpec, dt: float) -> float:
    """iint w^2 (|v|^2 + |v0|^2) computed through logs (overflow-safe)."""
    total = 0.0
    for n in range(len(logw)):
        sq = float(np.sum(c.vu[n] ** 2) + np.sum(c.vv[n] ** 2) + np.sum(c.v0[n] ** 2))
        if sq > 0.0:
            total += np.exp(min(2.0 * logw[n] + np.log(sq), 700.0))
    return total * grid.cell_area * dt


class LinearControlProblem:
    """Penalized HUM quadratic for one linear configuration."""

    def __init__(self, y0, th0, f1, f2, pen: PenaltySpec, logw: np.ndarray,
                 grid: GridSpec, tgrid: TimeGrid, nu0: float, bumps,
                 coupling: float | None = None):
        self.grid, self.tgrid = grid, tgrid
        self.pen = pen
        self.logw = logw
        self.w_inv = np.exp(-logw)
        self.bumps = bumps
        self.masks = tuple(b > 0.0 for b in bumps)
        self.prop = LinearPropagator(grid, tgrid, nu0, bumps=bumps, coupling=coupling)
        self.y0, self.th0 = y0, th0
        self.sources = None
        if f1 is not None or f2 is not None:
            nt = tgrid.nt
            self.sources = (
                f1[0] if f1 is not None else np.zeros((nt, grid.nx + 1, grid.ny)),
                f1[1] if f1 is not None else np.zeros((nt, grid.nx, grid.ny + 1)),
                f2 if f2 is not None else np.zeros((nt, grid.nx, grid.ny)))
        self.n_forward = 0

    # -- building blocks ----------------------------------------------------

    def controls_from_z(self, z: ControlTrajectory) -> ControlTrajectory:
        wi = self.w_inv[:, None, None]
        mu, mv, mc = self.masks
        return ControlTrajectory(z.vu * wi * mu, z.vv * wi * mv, z.v0 * wi * mc)

    def _terminal_of(self, controls, with_sources: bool):
        src = self.sources if with_sources else None
        y0 = self.y0 if with_sources else (self.grid.zeros_u(), self.grid.zeros_v())
        th0 = self.th0 if with_sources else self.grid.zeros_cells()
        self.n_forward += 1
        u, v, th = self.prop.run(y0, th0, controls=controls, sources=src, store=False)
        return u, v, th

    def _bt_zeta(self, ut, vt, tht, weight_inv: bool = True) -> ControlTrajectory:
        """(1/eps) B^T L^T applied to a terminal state, optionally through W^-1."""
        eps = self.pen.epsilon
        adj = run_adjoint((ut / eps, vt / eps), tht / eps, None, None, self.prop,
                          project_terminal=False)
        bu, bv, bc = self.bumps
        out = ControlTrajectory(adj.zeta_u * bu, adj.zeta_v * bv, adj.zeta_th * bc)
        if weight_inv:
            wi = self.w_inv[:, None, None]
            out = ControlTrajectory(out.vu * wi, out.vv * wi, out.v0 * wi)
        return out

    def hessian_apply(self, z: ControlTrajectory) -> ControlTrajectory:
        ut, vt, tht = self._terminal_of(self.controls_from_z(z), with_sources=False)
        return z.plus(self._bt_zeta(ut, vt, tht))

    def rhs(self):
        """-gradient at z = 0, and the free terminal norm / J(0)."""
        ut, vt, tht = self._terminal_of(None, with_sources=True)
        tnorm_sq = (ops.norm_velocity(ut, vt, self.grid) ** 2
                    + ops.norm_cells(tht, self.grid) ** 2)
        g0 = self._bt_zeta(ut, vt, tht)
        return g0.scaled(-1.0), tnorm_sq

    def terminal_norm(self, controls: ControlTrajectory) -> float:
        ut, vt, tht = self._terminal_of(controls, with_sources=True)
        return float(np.sqrt(ops.norm_velocity(ut, vt, self.grid) ** 2
                             + ops.norm_cells(tht, self.grid) ** 2))

    # -- CG minimization in z -----------------------------------------------

    def solve(self, z0: ControlTrajectory | None = None):
        grid, dt, pen = self.grid, self.tgrid.dt, self.pen
        b, free_tnorm_sq = self.rhs()
        if z0 is None:
            z = ControlTrajectory.zeros(grid, self.tgrid.nt)
            r = b.copy()
            j0 = 0.5 * free_tnorm_sq / pen.epsilon
        else:
            z = z0.copy()
            r = b.plus(self.hessian_apply(z), -1.0)
            j0 = (0.5 * control_inner(z, z, grid, dt)
                  + 0.5 * self.terminal_norm(self.controls_from_z(z)) ** 2 / pen.epsilon)
        p = r.copy()
        rr = control_inner(r, r, grid, dt)
        gnorm0 = np.sqrt(rr)
        j_hist = [j0]
        j = j0
        iters = 0
        if gnorm0 > 0.0:
            for it in range(1, pen.cg_max_iters + 1):
                hp = self.hessian_apply(p)
                php = control_inner(p, hp, grid, dt)
                if php <= 0.0:
                    raise ConvergenceError("CG curvature lost (operator not SPD?)",
                                           history=j_hist)
                alpha = rr / php
                z = z.plus(p, alpha)
                r = r.plus(hp, -alpha)
                j = j - 0.5 * alpha * rr
                j_hist.append(j)
                iters = it
                rr_new = control_inner(r, r, grid, dt)
                if np.sqrt(rr_new) <= pen.cg_tol * gnorm0:
                    rr = rr_new
                    break
                p = r.plus(p, rr_new / rr)
                rr = rr_new
            else:
                raise ConvergenceError(
                    f"CG stalled: |g|/|g0| = {np.sqrt(rr) / gnorm0:.3e} after "
                    f"{pen.cg_max_iters} iterations", history=j_hist)
        controls = self.controls_from_z(z)
        return z, controls, iters, j_hist, float(np.sqrt(free_tnorm_sq))


def objective(controls: ControlTrajectory, y0, th0, f1, f2, pen: PenaltySpec,
              weights: WeightTables | None, grid: GridSpec, tgrid: TimeGrid,
              nu0: float, bumps, coupling=None) -> float:
    """J = control energy (weighted) + terminal penalty, by one forward run."""
    logw = step_weight_logs(pen, weights, tgrid)
    prob = LinearControlProblem(y0, th0, f1, f2, pen, logw, grid, tgrid, nu0,
                                bumps, coupling)
    tn = prob.terminal_norm(controls)
    return (0.5 * weighted_control_energy(controls, logw, grid, tgrid.dt)
            + 0.5 * tn * tn / pen.epsilon)


def gradient(controls: ControlTrajectory, y0, th0, f1, f2, pen: PenaltySpec,
             weights: WeightTables | None, grid: GridSpec, tgrid: TimeGrid,
             nu0: float, bumps, coupling=None) -> ControlTrajectory:
    """Reduced gradient w^2 v + 1~_omega zeta via one forward + one adjoint."""
    logw = step_weight_logs(pen, weights, tgrid)
    prob = LinearControlProblem(y0, th0, f1, f2, pen, logw, grid, tgrid, nu0,
                                bumps, coupling)
    ut, vt, tht = prob._terminal_of(controls, with_sources=True)
    zeta = prob._bt_zeta(ut, vt, tht, weight_inv=False)
    wsq = np.exp(np.minimum(2.0 * logw, 700.0))[:, None, None]
    mu, mv, mc = prob.masks
    return ControlTrajectory(
        (controls.vu * wsq + zeta.vu) * mu,
        (controls.vv * wsq + zeta.vv) * mv,
        (controls.v0 * wsq + zeta.v0) * mc)


def solve_linear_control(y0, th0, f1, f2, pen: PenaltySpec,
                         weights: WeightTables | None, grid: GridSpec,
                         tgrid: TimeGrid, nu0: float, bumps, coupling=None,
                         z0: ControlTrajectory | None = None):
    """Penalized HUM for the linear system.

    Returns (controls, controlled trajectory, SynthesisReport); the report's
    uncontrolled terminal norm comes from the same data with controls off.
    """
    t0 = time.perf_counter()
    logw = step_weight_logs(pen, weights, tgrid)
    prob = LinearControlProblem(y0, th0, f1, f2, pen, logw, grid, tgrid, nu0,
                                bumps, coupling)
    z, controls, iters, j_hist, free_tnorm = prob.solve(z0=z0)
    traj = prob.prop.run(y0, th0, controls=controls, sources=prob.sources)
    tn = traj.terminal_norm(grid)
    report = SynthesisReport(
        terminal_norm=tn,
        control_energy_weighted=control_inner(z, z, grid, tgrid.dt),
        cg_iters=iters,
        outer_iters=1,
        eps=pen.epsilon,
        wall_time_s=time.perf_counter() - t0,
        uncontrolled_terminal_norm=free_tnorm,
        data_norm=float(np.sqrt(ops.norm_velocity(y0[0], y0[1], grid) ** 2
                                + ops.norm_cells(th0, grid) ** 2)),
        j_history=j_hist,
        z_state=z,
    )
    return controls, traj, report


def _frozen_sources(traj: Trajectory, spec: SystemSpec, grid: GridSpec, nt: int):
    """Move all nonlinear/nonlocal terms of a trajectory into (F1, F2)."""
    from .forward import nonlocal_coefficients

    nu0 = spec.law.nu0
    f1u = np.zeros((nt, grid.nx + 1, grid.ny))
    f1v = np.zeros((nt, grid.nx, grid.ny + 1))
    f2 = np.zeros((nt, grid.nx, grid.ny))
    for n in range(nt):
        u, v, th = traj.u[n], traj.v[n], traj.theta[n]
        nu, nu_th = nonlocal_coefficients(u, v, th, spec, grid)
        au, av = ops.advect_velocity(u, v, u, v, grid)
        f1u[n] = (nu - nu0) * ops.laplacian_u(u, grid) - au
        f1v[n] = (nu - nu0) * ops.laplacian_v(v, grid) - av
        f2[n] = ((nu_th - nu0) * ops.laplacian_cells(th, grid)
                 - ops.advect_scalar(th, u, v, grid))
        if spec.heating_on:
            f2[n] += nu * ops.heating(u, v, grid)
    return (f1u, f1v), f2


def solve_nonlinear_control(y0, th0, spec: SystemSpec, pen: PenaltySpec,
                            outer: OuterLoopSpec, weights: WeightTables | None,
                            grid: GridSpec, tgrid: TimeGrid, bumps):
    """Source-term fixed point around the linear synthesis.

    Each outer pass freezes the nonlinear terms of the previous controlled
    trajectory into (F1, F2) and re-solves the linear control problem (warm
    started).  On convergence the control is re-simulated through the full
    nonlinear solver; that trajectory and its terminal norm are reported.
    """
    t0 = time.perf_counter()
    nu0 = spec.law.nu0
    nt = tgrid.nt
    controls_prev = ControlTrajectory.zeros(grid, nt)
    f1 = f2 = None
    f1_prev = f2_prev = None
    z_prev = None
    updates: list[float] = []
    cg_total = 0
    converged = False
    traj = None
    n_outer = 0
    for k in range(1, outer.max_outer + 1):
        n_outer = k
        controls, traj, rep = solve_linear_control(
            y0, th0, f1, f2, pen, weights, grid, tgrid, nu0, bumps,
            coupling=spec.buoyancy, z0=z_prev)
        z_prev = rep.z_state
        cg_total += rep.cg_iters
        upd = control_norm(controls.plus(controls_prev, -1.0), grid, tgrid.dt)
        updates.append(upd)
        scale = max(control_norm(controls, grid, tgrid.dt), 1.0e-300)
        controls_prev = controls
        if upd <= outer.outer_tol * max(scale, 1.0):
            converged = True
            break
        if len(updates) >= 4 and all(
                updates[-i] > updates[-i - 1] for i in (1, 2, 3)):
            raise ConvergenceError(
                "outer fixed point diverging over 3 consecutive iterations; "
                "reduce the data norm or the damping factor", history=updates)
        f1_new, f2_new = _frozen_sources(traj, spec, grid, nt)
        if outer.damping < 1.0 and f1_prev is not None:
            d = outer.damping
            f1_new = ((1 - d) * f1_prev[0] + d * f1_new[0],
                      (1 - d) * f1_prev[1] + d * f1_new[1])
            f2_new = (1 - d) * f2_prev + d * f2_new
        f1, f2 = f1_new, f2_new
        f1_prev, f2_prev = f1_new, f2_new

    resim, _trace = run_nonlinear(y0, th0, controls_prev, spec, grid, tgrid,
                                  bumps=bumps)
    logw = step_weight_logs(pen, weights, tgrid)
    report = SynthesisReport(
        terminal_norm=resim.terminal_norm(grid),
        control_energy_weighted=weighted_control_energy(controls_prev, logw,
                                                        grid, tgrid.dt),
        cg_iters=cg_total,
        outer_iters=n_outer,
        eps=pen.epsilon,
        wall_time_s=time.perf_counter() - t0,
        uncontrolled_terminal_norm=0.0,
        data_norm=float(np.sqrt(ops.norm_velocity(y0[0], y0[1], grid) ** 2
                                + ops.norm_cells(th0, grid) ** 2)),
        converged=converged,
        update_history=updates,
    )
    rep_free, _ = run_nonlinear(y0, th0, None, spec, grid, tgrid)
    report.uncontrolled_terminal_norm = rep_free.terminal_norm(grid)
    return controls_prev, resim, report


@dataclass
class LargeTimeReport:
    crossing_time: float
    t_star_predicted: float
    decay_c1: float
    decay_c2: float
    fit_r_squared: float
    final_norm: float
    delta: float
    phase1_steps: int
    synthesis: SynthesisReport

    def lines(self):
        out = [
            f"crossing_time = {self.crossing_time:.17g}",
            f"t_star_predicted = {self.t_star_predicted:.17g}",
            f"decay_c1 = {self.decay_c1:.17g}",
            f"decay_c2 = {self.decay_c2:.17g}",
            f"fit_r_squared = {self.fit_r_squared:.17g}",
            f"final_norm = {self.final_norm:.17g}",
            f"delta = {self.delta:.17g}",
            f"phase1_steps = {self.phase1_steps}",
        ]
        out += [f"synthesis_{ln}" for ln in self.synthesis.lines()]
        return out


def large_time_control(y0, th0, delta: float, spec: SystemSpec,
                       pen: PenaltySpec, outer: OuterLoopSpec,
                       weights_fn, grid: GridSpec, phase1_tgrid: TimeGrid,
                       tail_tgrid: TimeGrid, bumps,
                       use_tstar_bound: bool = False):
    """Decay-then-control pipeline.

    Phase 1 integrates the uncontrolled system until the energy monitor E
    drops below ``delta`` (optionally waiting until the fitted decay-law bound
    if ``use_tstar_bound``); phase 2 runs the local nonlinear synthesis on the
    tail horizon from the crossing state.  ``weights_fn(tail_tgrid)`` builds
    the weight tables for the tail horizon.

    Returns (composed trajectory, LargeTimeReport).
    """
    from .diagnostics import decay_fit, t_star

    e0 = (ops.h1_seminorm_sq_velocity(y0[0], y0[1], grid)
          + ops.norm_cells(th0, grid) ** 2 + ops.h1_seminorm_sq_cells(th0, grid))

    if e0 <= delta:
        cross_idx = 0
        traj1 = None
        fit_c1 = fit_c2 = r2 = float("nan")
        t_pred = 0.0
        cross_time = 0.0
        tail_y0, tail_th0 = y0, th0
    else:
        traj1, trace1 = run_nonlinear(y0, th0, None, spec, grid, phase1_tgrid)
        energy = trace1.energy
        below = np.nonzero(energy <= delta)[0]
        if below.size == 0:
            n = len(energy)
            tail = energy[int(0.9 * n):]
            if tail.size >= 2 and tail[-1] >= tail[0]:
                raise RegimeError("decay stalled: E not decreasing over the "
                                  "final 10% of the phase-1 horizon")
            raise RegimeError(
                f"E never crossed delta={delta:g} within the phase-1 horizon "
                f"(final E = {energy[-1]:.3e}); extend phase1 time")
        cross_idx = int(below[0])
        cross_time = float(trace1.t[cross_idx])
        fit = decay_fit(trace1, (0.2 * cross_time, cross_time))
        fit_c1, fit_c2, r2 = fit.c1, fit.c2, fit.r_squared
        t_pred = t_star(fit, delta, float(energy[0]))
        if use_tstar_bound and t_pred > cross_time:
            k = int(np.searchsorted(trace1.t, t_pred))
            cross_idx = min(max(k, cross_idx), phase1_tgrid.nt)
            cross_time = float(trace1.t[cross_idx])
        tail_y0 = (traj1.u[cross_idx], traj1.v[cross_idx])
        tail_th0 = traj1.theta[cross_idx]

    weights = weights_fn(tail_tgrid) if weights_fn is not None else None
    controls, traj2, rep = solve_nonlinear_control(
        tail_y0, tail_th0, spec, pen, outer, weights, grid, tail_tgrid, bumps)

    if traj1 is None:
        composed = traj2
    else:
        composed = Trajectory(
            t=np.concatenate([traj1.t[:cross_idx + 1], cross_time + traj2.t[1:]]),
            u=np.concatenate([traj1.u[:cross_idx + 1], traj2.u[1:]]),
            v=np.concatenate([traj1.v[:cross_idx + 1], traj2.v[1:]]),
            theta=np.concatenate([traj1.theta[:cross_idx + 1], traj2.theta[1:]]),
            p=np.concatenate([traj1.p[:cross_idx + 1], traj2.p[1:]]),
            meta={"kind": "composed", **traj2.meta},
        )
    report = LargeTimeReport(
        crossing_time=cross_time,
        t_star_predicted=t_pred,
        decay_c1=fit_c1, decay_c2=fit_c2, fit_r_squared=r2,
        final_norm=traj2.terminal_norm(grid),
        delta=delta,
        phase1_steps=cross_idx,
        synthesis=rep,
    )
    return composed, report
