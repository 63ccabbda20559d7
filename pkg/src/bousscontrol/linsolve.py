"""Matrix-free preconditioned conjugate gradient.

The production path solves its constant-coefficient systems spectrally
(operators.SpectralSolver); this CG is the generic fallback and the
independent cross-check route for those solves.
"""

from __future__ import annotations

import numpy as np

from .exceptions import LinearSolverError


def cg_solve(apply_op, b: np.ndarray, tol: float = 1.0e-10, max_iters: int = 2000,
             diag: np.ndarray | None = None, x0: np.ndarray | None = None,
             project_nullspace=None):
    """Solve A x = b for SPD (or SPSD with an explicit nullspace projector) A.

    ``apply_op`` maps an array like ``b`` to A x; ``diag`` is the Jacobi
    preconditioner; ``project_nullspace`` removes the known nullspace
    component from iterates (e.g. mean removal for the Neumann Poisson).
    """
    x = np.zeros_like(b) if x0 is None else x0.copy()
    if project_nullspace is not None:
        b = project_nullspace(b)
        x = project_nullspace(x)
    r = b - apply_op(x)
    if project_nullspace is not None:
        r = project_nullspace(r)
    bnorm = float(np.linalg.norm(b.ravel()))
    if bnorm == 0.0:
        return np.zeros_like(b), 0
    z = r / diag if diag is not None else r
    p = z.copy()
    rz = float(np.sum(r * z))
    for it in range(1, max_iters + 1):
        ap = apply_op(p)
        if project_nullspace is not None:
            ap = project_nullspace(ap)
        alpha = rz / float(np.sum(p * ap))
        x += alpha * p
        r -= alpha * ap
        if float(np.linalg.norm(r.ravel())) <= tol * bnorm:
            return x, it
        z = r / diag if diag is not None else r
        rz_new = float(np.sum(r * z))
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise LinearSolverError(
        f"CG did not reach tol={tol:g} within {max_iters} iterations",
        residual=float(np.linalg.norm(r.ravel())) / bnorm)
