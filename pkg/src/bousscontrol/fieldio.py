"""Field and trace persistence.

Fields use a one-line text header followed by raw little-endian float64 bytes
(C order); round-trips are bit-exact.  Energy traces are CSV.
"""

from __future__ import annotations

import os

import numpy as np

from .exceptions import ShapeError
from .forward import EnergyTrace, Trajectory

_MAGIC = "BCFIELD1"


def dump_field(path, arr: np.ndarray, kind: str, time: float) -> None:
    a = np.ascontiguousarray(arr, dtype="<f8")
    if a.ndim != 2:
        raise ShapeError("field dumps are 2-D")
    header = (f"{_MAGIC} kind={kind} nx={a.shape[0]} ny={a.shape[1]} "
              f"time={time!r}\n")
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(a.tobytes())


def load_field(path):
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").strip()
        parts = header.split()
        if parts[0] != _MAGIC:
            raise ShapeError(f"not a field dump: {path}")
        meta = dict(p.split("=", 1) for p in parts[1:])
        shape = (int(meta["nx"]), int(meta["ny"]))
        buf = fh.read()
    arr = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    meta["time"] = float(meta["time"])
    return arr, meta


def dump_trajectory(outdir, traj: Trajectory, prefix: str = "state",
                    every: int = 1) -> list:
    """One file per field per stored node; returns the written paths."""
    os.makedirs(outdir, exist_ok=True)
    kind = traj.meta.get("kind", "state")
    paths = []
    for k in range(0, len(traj.t), every):
        tk = float(traj.t[k])
        for name, arr in (("u", traj.u[k]), ("v", traj.v[k]),
                          ("theta", traj.theta[k]), ("p", traj.p[k])):
            p = os.path.join(outdir, f"{prefix}_{name}_{k:05d}.fld")
            dump_field(p, arr, f"{kind}:{name}", tk)
            paths.append(p)
    return paths


def dump_adjoint_trajectory(outdir, adj, prefix: str = "adjoint",
                            every: int = 1) -> list:
    """Adjoint counterpart of dump_trajectory (kind-tagged 'adjoint')."""
    os.makedirs(outdir, exist_ok=True)
    paths = []
    for k in range(0, len(adj.t), every):
        tk = float(adj.t[k])
        for name, arr in (("phi_u", adj.phi_u[k]), ("phi_v", adj.phi_v[k]),
                          ("pi", adj.pi[k]), ("psi", adj.psi[k])):
            p = os.path.join(outdir, f"{prefix}_{name}_{k:05d}.fld")
            dump_field(p, arr, f"adjoint:{name}", tk)
            paths.append(p)
    return paths


def energy_trace_csv(path, trace: EnergyTrace) -> None:
    with open(path, "w") as fh:
        fh.write("t,E,Phi,grad_y_sq,theta_sq,grad_theta_sq\n")
        e = trace.energy
        phi = trace.phi
        for k in range(len(trace.t)):
            fh.write(",".join(f"{x:.17g}" for x in (
                trace.t[k], e[k], phi[k], trace.grad_y_sq[k],
                trace.theta_sq[k], trace.grad_theta_sq[k])) + "\n")


def read_energy_trace_csv(path):
    data = np.genfromtxt(path, delimiter=",", names=True)
    return data
