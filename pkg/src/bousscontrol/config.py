"""Strict experiment configuration: flat ``section.key = value`` text files.

Unknown keys are errors; every default is materialized at parse time and the
resolved configuration echoes as a sorted, fully-explicit key set, so
``parse(emit(parse(x))) == parse(x)`` and the config hash pins the experiment.
"auto" placeholders (minimal feasible m, coupling, t_clip) are resolved
eagerly during parsing.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

from .exceptions import ConfigError
from .geometry import ControlPatch
from .grids import GridSpec, TimeGrid
from .control import OuterLoopSpec, PenaltySpec
from .forward import SystemSpec
from .operators import ViscosityLaw
from .weights import WeightParams, find_min_m

_KINDS = ("simulate", "linear-control", "nonlinear-control", "decay",
          "large-time", "verify")

_DEFAULTS: dict[str, str] = {
    "kind": "simulate",
    "seed": "0",
    "dump_fields": "false",
    "grid.nx": "32",
    "grid.ny": "32",
    "grid.lx": "1.0",
    "grid.ly": "1.0",
    "time.t_final": "1.0",
    "time.nt": "128",
    "system.variant": "l2",
    "system.nu0": "1.0",
    "system.nu1": "0.1",
    "system.p": "2.0",
    "system.theta_source": "velocity",
    "system.heating": "true",
    "system.mode": "nonlinear",
    "system.coupling": "auto",
    "weights.auto_m": "true",
    "weights.s": "1.0",
    "weights.lambda": "1.0",
    "weights.m": "14.0",
    "weights.eta_sup": "1.0",
    "patch.cx": "0.5",
    "patch.cy": "0.5",
    "patch.hx": "0.2",
    "patch.hy": "0.2",
    "patch.inner_margin": "0.25",
    "penalty.eps": "1e-6",
    "penalty.weight_mode": "carleman",
    "penalty.t_clip": "auto",
    "penalty.cg_tol": "1e-6",
    "penalty.cg_max_iters": "600",
    "outer.max": "20",
    "outer.tol": "1e-9",
    "outer.damping": "1.0",
    "init.target_energy": "auto",
    "init.vel_amp": "1.0",
    "init.theta_amp": "1.0",
    "decay.fit_lo_frac": "0.2",
    "decay.fit_hi_frac": "1.0",
    "large_time.delta": "1e-4",
    "large_time.phase1_t_final": "1.0",
    "large_time.phase1_nt": "256",
    "large_time.tail_t_final": "0.75",
    "large_time.tail_nt": "96",
    "linear_control.eps_sweep": "",
}


def _parse_bool(key, s):
    if s in ("true", "True", "1"):
        return True
    if s in ("false", "False", "0"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {s!r}")


def _parse_float(key, s):
    try:
        return float(s)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {s!r}") from None


def _parse_int(key, s):
    try:
        return int(s)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {s!r}") from None


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    seed: int
    dump_fields: bool
    grid: GridSpec
    tgrid: TimeGrid
    system: SystemSpec
    wparams: WeightParams
    patch: ControlPatch
    pen: PenaltySpec
    outer: OuterLoopSpec
    init_target_energy: float | None
    init_vel_amp: float
    init_theta_amp: float
    decay_fit_lo_frac: float
    decay_fit_hi_frac: float
    lt_delta: float
    lt_phase1_t_final: float
    lt_phase1_nt: int
    lt_tail_t_final: float
    lt_tail_nt: int
    eps_sweep: tuple = ()
    resolved: dict = field(default_factory=dict, compare=False)

    def resolved_lines(self):
        return [f"{k} = {self.resolved[k]}" for k in sorted(self.resolved)]

    def digest(self) -> str:
        text = "\n".join(self.resolved_lines())
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def with_kind(self, kind: str) -> "ExperimentConfig":
        if kind not in _KINDS:
            raise ConfigError(f"unknown experiment kind {kind!r}")
        resolved = dict(self.resolved)
        resolved["kind"] = kind
        return replace(self, kind=kind, resolved=resolved)


def parse_config_text(text: str) -> ExperimentConfig:
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, val = (s.strip() for s in stripped.split("=", 1))
        if key not in _DEFAULTS:
            raise ConfigError(f"unknown configuration key {key!r}")
        if key in raw:
            raise ConfigError(f"duplicate configuration key {key!r}")
        raw[key] = val

    vals = dict(_DEFAULTS)
    vals.update(raw)

    if vals["kind"] not in _KINDS:
        raise ConfigError(f"kind: expected one of {_KINDS}, got {vals['kind']!r}")

    grid = GridSpec(nx=_parse_int("grid.nx", vals["grid.nx"]),
                    ny=_parse_int("grid.ny", vals["grid.ny"]),
                    lx=_parse_float("grid.lx", vals["grid.lx"]),
                    ly=_parse_float("grid.ly", vals["grid.ly"]))
    tgrid = TimeGrid(t_final=_parse_float("time.t_final", vals["time.t_final"]),
                     nt=_parse_int("time.nt", vals["time.nt"]))

    variant = vals["system.variant"]
    if variant not in ("l2", "lp"):
        raise ConfigError(f"system.variant: expected l2|lp, got {variant!r}")
    law = ViscosityLaw(variant=variant,
                       nu0=_parse_float("system.nu0", vals["system.nu0"]),
                       nu1=_parse_float("system.nu1", vals["system.nu1"]),
                       p=_parse_float("system.p", vals["system.p"]))
    coupling = (None if vals["system.coupling"] == "auto"
                else _parse_float("system.coupling", vals["system.coupling"]))
    system = SystemSpec(
        law=law,
        theta_coeff_source=vals["system.theta_source"],
        nu0_coupling=coupling,
        heating_on=_parse_bool("system.heating", vals["system.heating"]),
        mode=vals["system.mode"],
    )

    lam = _parse_float("weights.lambda", vals["weights.lambda"])
    eta_sup = _parse_float("weights.eta_sup", vals["weights.eta_sup"])
    if _parse_bool("weights.auto_m", vals["weights.auto_m"]):
        m = find_min_m(lam, eta_sup)
        vals["weights.m"] = f"{m:.17g}"
        vals["weights.auto_m"] = "false"
    else:
        m = _parse_float("weights.m", vals["weights.m"])
    wparams = WeightParams(s=_parse_float("weights.s", vals["weights.s"]),
                           lam=lam, m=m, eta_sup=eta_sup)

    patch = ControlPatch(
        center=(_parse_float("patch.cx", vals["patch.cx"]),
                _parse_float("patch.cy", vals["patch.cy"])),
        half_widths=(_parse_float("patch.hx", vals["patch.hx"]),
                     _parse_float("patch.hy", vals["patch.hy"])),
        inner_margin=_parse_float("patch.inner_margin", vals["patch.inner_margin"]))

    if vals["penalty.t_clip"] == "auto":
        t_clip = tgrid.t_final - 2.0 * tgrid.dt
        vals["penalty.t_clip"] = f"{t_clip:.17g}"
    else:
        t_clip = _parse_float("penalty.t_clip", vals["penalty.t_clip"])
    pen = PenaltySpec(epsilon=_parse_float("penalty.eps", vals["penalty.eps"]),
                      weight_mode=vals["penalty.weight_mode"],
                      t_clip=t_clip,
                      cg_tol=_parse_float("penalty.cg_tol", vals["penalty.cg_tol"]),
                      cg_max_iters=_parse_int("penalty.cg_max_iters",
                                              vals["penalty.cg_max_iters"]))
    outer = OuterLoopSpec(max_outer=_parse_int("outer.max", vals["outer.max"]),
                          outer_tol=_parse_float("outer.tol", vals["outer.tol"]),
                          damping=_parse_float("outer.damping", vals["outer.damping"]))

    target = (None if vals["init.target_energy"] == "auto"
              else _parse_float("init.target_energy", vals["init.target_energy"]))

    sweep: tuple = ()
    if vals["linear_control.eps_sweep"].strip():
        sweep = tuple(_parse_float("linear_control.eps_sweep", s.strip())
                      for s in vals["linear_control.eps_sweep"].split(","))

    return ExperimentConfig(
        kind=vals["kind"],
        seed=_parse_int("seed", vals["seed"]),
        dump_fields=_parse_bool("dump_fields", vals["dump_fields"]),
        grid=grid, tgrid=tgrid, system=system, wparams=wparams, patch=patch,
        pen=pen, outer=outer,
        init_target_energy=target,
        init_vel_amp=_parse_float("init.vel_amp", vals["init.vel_amp"]),
        init_theta_amp=_parse_float("init.theta_amp", vals["init.theta_amp"]),
        decay_fit_lo_frac=_parse_float("decay.fit_lo_frac", vals["decay.fit_lo_frac"]),
        decay_fit_hi_frac=_parse_float("decay.fit_hi_frac", vals["decay.fit_hi_frac"]),
        lt_delta=_parse_float("large_time.delta", vals["large_time.delta"]),
        lt_phase1_t_final=_parse_float("large_time.phase1_t_final",
                                       vals["large_time.phase1_t_final"]),
        lt_phase1_nt=_parse_int("large_time.phase1_nt", vals["large_time.phase1_nt"]),
        lt_tail_t_final=_parse_float("large_time.tail_t_final",
                                     vals["large_time.tail_t_final"]),
        lt_tail_nt=_parse_int("large_time.tail_nt", vals["large_time.tail_nt"]),
        eps_sweep=sweep,
        resolved=vals,
    )


def parse_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config_text(fh.read())


def emit_resolved(cfg: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        for line in cfg.resolved_lines():
            fh.write(line + "\n")
