"""Experiment orchestration: builds the configured objects, runs one
experiment kind, and persists deterministic artifacts.

Exit codes: 0 success / all checks passed, 2 configuration or geometry error
(no artifacts written), 3 solver failure (non-convergence, blow-up, regime),
4 verification-suite failure.
"""

from __future__ import annotations

import os

import numpy as np

from .exceptions import BoussControlError, ConfigError, GeometryError
from .config import ExperimentConfig, emit_resolved
from .geometry import build_eta0, bump_on_solver_grids
from .grids import GridSpec, TimeGrid
from . import operators as ops
from .adjoint import duality_defect
from .control import (ControlTrajectory, PenaltySpec, control_inner,
                      gradient, large_time_control, objective,
                      solve_linear_control, solve_nonlinear_control)
from .diagnostics import decay_fit, emit_report, t_star, weighted_norms
from .fieldio import dump_trajectory, energy_trace_csv
from .forward import (EnergyTrace, SystemSpec, Trajectory,
                      first_dirichlet_eigenvalue, run_nonlinear,
                      scaled_initial_data, sine_theta, stream_velocity)
from .mms import run_mms
from .weights import check_weight_chain, check_weight_gap, eval_weights, export_weight_csv


def _initial_data(cfg: ExperimentConfig):
    grid = cfg.grid
    if cfg.init_target_energy is not None:
        return scaled_initial_data(grid, cfg.init_target_energy,
                                   cfg.init_vel_amp, cfg.init_theta_amp)
    return stream_velocity(grid, cfg.init_vel_amp), sine_theta(grid, cfg.init_theta_amp)


def trace_from_trajectory(traj: Trajectory, grid: GridSpec) -> EnergyTrace:
    n = len(traj.t)
    gy = np.zeros(n)
    ts = np.zeros(n)
    gt = np.zeros(n)
    for k in range(n):
        gy[k] = ops.h1_seminorm_sq_velocity(traj.u[k], traj.v[k], grid)
        ts[k] = ops.norm_cells(traj.theta[k], grid) ** 2
        gt[k] = ops.h1_seminorm_sq_cells(traj.theta[k], grid)
    return EnergyTrace(t=traj.t, grad_y_sq=gy, theta_sq=ts, grad_theta_sq=gt,
                       lam1=first_dirichlet_eigenvalue(grid))


def _write_energy_csv(path, trace: EnergyTrace, config_hash: str) -> None:
    energy_trace_csv(path, trace)
    with open(path) as fh:
        body = fh.read()
    with open(path, "w") as fh:
        fh.write(f"# config_hash = {config_hash}\n")
        fh.write(body)


def _tables_for(cfg: ExperimentConfig, tgrid: TimeGrid):
    eta0 = build_eta0(cfg.grid, cfg.patch)
    return eval_weights(cfg.wparams, eta0, tgrid)


def run_experiment(cfg: ExperimentConfig, out_dir: str, jobs: int = 1) -> int:
    try:
        bumps = bump_on_solver_grids(cfg.grid, cfg.patch)
        y0, th0 = _initial_data(cfg)
    except (ConfigError, GeometryError) as exc:
        print(f"configuration error: {exc}")
        return 2

    os.makedirs(out_dir, exist_ok=True)
    chash = cfg.digest()
    ghash = cfg.grid.digest()
    emit_resolved(cfg, os.path.join(out_dir, "resolved_config.txt"))

    handler = {
        "simulate": _run_simulate,
        "decay": _run_decay,
        "linear-control": _run_linear_control,
        "nonlinear-control": _run_nonlinear_control,
        "large-time": _run_large_time,
        "verify": _run_verify,
    }[cfg.kind]
    try:
        if cfg.kind == "linear-control":
            return handler(cfg, out_dir, bumps, y0, th0, chash, ghash, jobs)
        return handler(cfg, out_dir, bumps, y0, th0, chash, ghash)
    except BoussControlError as exc:
        with open(os.path.join(out_dir, "error.txt"), "w") as fh:
            fh.write(f"{type(exc).__name__}: {exc}\n")
        print(f"solver error: {exc}")
        return 3


def _run_simulate(cfg, out_dir, bumps, y0, th0, chash, ghash):
    traj, trace = run_nonlinear(y0, th0, None, cfg.system, cfg.grid, cfg.tgrid)
    _write_energy_csv(os.path.join(out_dir, "energy.csv"), trace, chash)
    lines = [
        f"final_norm = {traj.terminal_norm(cfg.grid):.17g}",
        f"energy_initial = {trace.energy[0]:.17g}",
        f"energy_final = {trace.energy[-1]:.17g}",
        f"phi_monotone = {trace.phi_monotone}",
        f"smallness_ok = {trace.smallness_ok}",
        f"max_div = {traj.meta.get('max_div', 0.0):.17g}",
    ]
    emit_report(os.path.join(out_dir, "report.txt"), {"simulate": lines},
                config_hash=chash, grid_hash=ghash)
    if cfg.dump_fields:
        dump_trajectory(os.path.join(out_dir, "fields"), traj)
    return 0


def _run_decay(cfg, out_dir, bumps, y0, th0, chash, ghash):
    traj, trace = run_nonlinear(y0, th0, None, cfg.system, cfg.grid, cfg.tgrid)
    _write_energy_csv(os.path.join(out_dir, "energy.csv"), trace, chash)
    t_final = cfg.tgrid.t_final
    fit = decay_fit(trace, (cfg.decay_fit_lo_frac * t_final,
                            cfg.decay_fit_hi_frac * t_final))
    lines = fit.lines()
    lines.append(f"phi_monotone = {trace.phi_monotone}")
    lines.append(f"phi_violation_step = {trace.phi_violation_step()}")
    lines.append(f"smallness_ok = {trace.smallness_ok}")
    try:
        ts = t_star(fit, cfg.lt_delta, float(trace.energy[0]))
        lines.append(f"t_star_delta = {cfg.lt_delta:.17g}")
        lines.append(f"t_star = {ts:.17g}")
    except BoussControlError as exc:
        lines.append(f"t_star_error = {exc}")
    emit_report(os.path.join(out_dir, "report.txt"), {"decay": lines},
                config_hash=chash, grid_hash=ghash)
    if cfg.dump_fields:
        dump_trajectory(os.path.join(out_dir, "fields"), traj)
    return 0


def _synthesis_artifacts(cfg, out_dir, name, controls, traj, rep, tables,
                         chash, ghash):
    sections = {name: rep.lines()}
    if tables is not None:
        norms = weighted_norms(traj, controls, tables, cfg.grid, cfg.tgrid,
                               t_clip=cfg.pen.t_clip)
        sections["weighted_norms"] = norms.lines()
    emit_report(os.path.join(out_dir, "report.txt"), sections,
                config_hash=chash, grid_hash=ghash)
    if cfg.dump_fields:
        dump_trajectory(os.path.join(out_dir, "fields"), traj)
        ctrl_dir = os.path.join(out_dir, "controls")
        os.makedirs(ctrl_dir, exist_ok=True)
        from .fieldio import dump_field
        for k in range(controls.vu.shape[0]):
            tk = k * cfg.tgrid.dt
            dump_field(os.path.join(ctrl_dir, f"control_vu_{k:05d}.fld"),
                       controls.vu[k], "control:vu", tk)
            dump_field(os.path.join(ctrl_dir, f"control_vv_{k:05d}.fld"),
                       controls.vv[k], "control:vv", tk)
            dump_field(os.path.join(ctrl_dir, f"control_v0_{k:05d}.fld"),
                       controls.v0[k], "control:v0", tk)


def _run_linear_control(cfg, out_dir, bumps, y0, th0, chash, ghash, jobs=1):
    tables = None
    if cfg.pen.weight_mode == "carleman":
        tables = _tables_for(cfg, cfg.tgrid)
        export_weight_csv(tables, os.path.join(out_dir, "weights.csv"))
    nu0 = cfg.system.law.nu0
    controls, traj, rep = solve_linear_control(
        y0, th0, None, None, cfg.pen, tables, cfg.grid, cfg.tgrid, nu0, bumps,
        coupling=cfg.system.buoyancy)
    rep.extra["terminal_over_uncontrolled"] = (
        rep.terminal_norm / rep.uncontrolled_terminal_norm
        if rep.uncontrolled_terminal_norm > 0 else 0.0)

    def sweep_member(i_eps):
        i, eps = i_eps
        pen_i = PenaltySpec(epsilon=eps, weight_mode=cfg.pen.weight_mode,
                            t_clip=cfg.pen.t_clip, cg_tol=cfg.pen.cg_tol,
                            cg_max_iters=cfg.pen.cg_max_iters)
        _, _, rep_i = solve_linear_control(y0, th0, None, None, pen_i, tables,
                                           cfg.grid, cfg.tgrid, nu0, bumps,
                                           coupling=cfg.system.buoyancy)
        emit_report(os.path.join(out_dir, f"report_eps_{i}.txt"),
                    {"linear_control": rep_i.lines()},
                    config_hash=chash, grid_hash=ghash)
        return i, rep_i.terminal_norm

    members = list(enumerate(cfg.eps_sweep))
    if jobs > 1 and len(members) > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(sweep_member, members))
    else:
        results = [sweep_member(m) for m in members]
    for i, tn in results:
        rep.extra[f"sweep_terminal_{i}"] = tn
    _synthesis_artifacts(cfg, out_dir, "linear_control", controls, traj, rep,
                         tables, chash, ghash)
    return 0


def _run_nonlinear_control(cfg, out_dir, bumps, y0, th0, chash, ghash):
    tables = None
    if cfg.pen.weight_mode == "carleman":
        tables = _tables_for(cfg, cfg.tgrid)
    controls, traj, rep = solve_nonlinear_control(
        y0, th0, cfg.system, cfg.pen, cfg.outer, tables, cfg.grid, cfg.tgrid,
        bumps)
    trace = trace_from_trajectory(traj, cfg.grid)
    _write_energy_csv(os.path.join(out_dir, "energy.csv"), trace, chash)
    _synthesis_artifacts(cfg, out_dir, "nonlinear_control", controls, traj,
                         rep, tables, chash, ghash)
    return 0 if rep.converged else 3


def _run_large_time(cfg, out_dir, bumps, y0, th0, chash, ghash):
    phase1 = TimeGrid(cfg.lt_phase1_t_final, cfg.lt_phase1_nt)
    tail = TimeGrid(cfg.lt_tail_t_final, cfg.lt_tail_nt)

    def weights_fn(tg):
        if cfg.pen.weight_mode != "carleman":
            return None
        eta0 = build_eta0(cfg.grid, cfg.patch)
        return eval_weights(cfg.wparams, eta0, tg)

    pen = PenaltySpec(epsilon=cfg.pen.epsilon, weight_mode=cfg.pen.weight_mode,
                      t_clip=min(cfg.pen.t_clip or tail.t_final - 2 * tail.dt,
                                 tail.t_final - 2 * tail.dt),
                      cg_tol=cfg.pen.cg_tol, cg_max_iters=cfg.pen.cg_max_iters)
    composed, rep = large_time_control(
        y0, th0, cfg.lt_delta, cfg.system, pen, cfg.outer, weights_fn,
        cfg.grid, phase1, tail, bumps)
    trace = trace_from_trajectory(composed, cfg.grid)
    _write_energy_csv(os.path.join(out_dir, "energy.csv"), trace, chash)
    emit_report(os.path.join(out_dir, "report.txt"),
                {"large_time": rep.lines()}, config_hash=chash, grid_hash=ghash)
    if cfg.dump_fields:
        dump_trajectory(os.path.join(out_dir, "fields"), composed)
    return 0 if rep.synthesis.converged else 3


def _run_verify(cfg, out_dir, bumps, y0, th0, chash, ghash):
    """Invariant suite: duality, gradient check, MMS order, weight checks,
    artifact determinism."""
    from .geometry import ControlPatch

    checks: list[tuple[str, bool, str]] = []
    rng = np.random.default_rng(cfg.seed)

    grid = GridSpec(16, 16)
    tgrid = TimeGrid(1.0, 64)
    patch = ControlPatch((0.5, 0.5), (0.2, 0.2))
    vb = bump_on_solver_grids(grid, patch)
    defect = max(duality_defect(grid, tgrid, 0.1, vb, rng) for _ in range(10))
    checks.append(("duality_defect", defect <= 1.0e-10, f"{defect:.3e}"))

    pen = PenaltySpec(epsilon=1.0e-4, weight_mode="unweighted")
    th0v = 0.1 * sine_theta(grid, 1.0)
    y0v = (grid.zeros_u(), grid.zeros_v())
    base = ControlTrajectory.zeros(grid, tgrid.nt)
    mask = tuple(b > 0 for b in vb)
    base.vu[:] = 0.3 * rng.standard_normal(base.vu.shape) * mask[0]
    base.vv[:] = 0.3 * rng.standard_normal(base.vv.shape) * mask[1]
    base.v0[:] = 0.3 * rng.standard_normal(base.v0.shape) * mask[2]
    g = gradient(base, y0v, th0v, None, None, pen, None, grid, tgrid, 0.1, vb)
    worst = 0.0
    for _ in range(5):
        d = ControlTrajectory.zeros(grid, tgrid.nt)
        d.vu[:] = rng.standard_normal(d.vu.shape) * mask[0]
        d.vv[:] = rng.standard_normal(d.vv.shape) * mask[1]
        d.v0[:] = rng.standard_normal(d.v0.shape) * mask[2]
        h = 1.0e-5
        jp = objective(base.plus(d, h), y0v, th0v, None, None, pen, None,
                       grid, tgrid, 0.1, vb)
        jm = objective(base.plus(d, -h), y0v, th0v, None, None, pen, None,
                       grid, tgrid, 0.1, vb)
        an = control_inner(g, d, grid, tgrid.dt)
        worst = max(worst, abs(an - (jp - jm) / (2 * h)) / max(abs(an), 1e-300))
    checks.append(("gradient_fd", worst <= 1.0e-5, f"{worst:.3e}"))

    mrep = run_mms(cfg.system if cfg.system.mode == "nonlinear" else SystemSpec(),
                   grid_sizes=(16, 32), t_final=0.25, nt=16)
    ok = 1.5 <= mrep.order <= 2.5
    checks.append(("mms_order", ok, f"{mrep.order:.3f}"))

    margin = check_weight_gap(cfg.wparams)
    checks.append(("weight_gap_margin", margin > 0.0, f"{margin:.6g}"))
    tg256 = TimeGrid(1.0, 256)
    tables = eval_weights(cfg.wparams, build_eta0(grid, patch), tg256)
    chain = check_weight_chain(tables, 1.0 - 2.0 / 256)
    checks.append(("weight_chain_finite", chain.all_finite,
                   ",".join(f"{k}={v:.3g}" for k, v in chain.ratios.items())))

    det_cfg = cfg.with_kind("decay")
    sub = [os.path.join(out_dir, "det_a"), os.path.join(out_dir, "det_b")]
    for s in sub:
        run_experiment(det_cfg, s)
    same = compare_artifact_dirs(sub[0], sub[1])
    checks.append(("determinism", same, "byte-identical" if same else "mismatch"))

    lines = [f"{name} = {'pass' if ok else 'FAIL'} ({val})"
             for name, ok, val in checks]
    emit_report(os.path.join(out_dir, "verify_report.txt"), {"verify": lines},
                config_hash=chash, grid_hash=ghash)
    for line in lines:
        print(line)
    return 0 if all(ok for _, ok, _ in checks) else 4


def compare_artifact_dirs(a: str, b: str) -> bool:
    """Byte-compare two artifact directories, ignoring wall-clock lines."""
    fa = sorted(os.path.relpath(os.path.join(r, f), a)
                for r, _, fs in os.walk(a) for f in fs)
    fb = sorted(os.path.relpath(os.path.join(r, f), b)
                for r, _, fs in os.walk(b) for f in fs)
    if fa != fb:
        return False
    for rel in fa:
        pa, pb = os.path.join(a, rel), os.path.join(b, rel)
        with open(pa, "rb") as f1, open(pb, "rb") as f2:
            da, db = f1.read(), f2.read()
        if da == db:
            continue

        def strip(blob):
            return b"\n".join(ln for ln in blob.split(b"\n")
                              if b"wall_time_s" not in ln)

        if strip(da) != strip(db):
            return False
    return True
