"""Linear solves for the per-step systems."""
from __future__ import annotations

import warnings

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DIRECT, ITERATIVE = "DIRECT", "ITERATIVE"


class SolverError(RuntimeError):
    pass


def _residual(A, x, b) -> float:
    nb = np.linalg.norm(b)
    return float(np.linalg.norm(A @ x - b) / (nb if nb > 0 else 1.0))


def solve(system, method: str = DIRECT, tol: float = 1e-10, maxiter: int = 5000):
    """Solve system.matrix x = system.rhs; returns (x, relative residual)."""
    A = sp.csc_matrix(system.matrix)
    b = np.asarray(system.rhs, dtype=float)
    if A.shape[0] != A.shape[1] or A.shape[0] != len(b):
        raise ValueError("system is not square or rhs size mismatch")
    if A.shape[0] == 0:
        raise SolverError("singular system: empty active set")
    if method == DIRECT:
        with warnings.catch_warnings():
            warnings.simplefilter("error", spla.MatrixRankWarning)
            try:
                x = spla.splu(A).solve(b)
            except (RuntimeError, spla.MatrixRankWarning) as exc:
                raise SolverError(f"singular system: {exc}") from exc
        if not np.all(np.isfinite(x)):
            raise SolverError("singular system: non-finite solution")
        res = _residual(A, x, b)
        if res > 1e-10:
            raise SolverError(f"singular system: residual {res:.3e} after LU solve")
        return x, res
    if method == ITERATIVE:
        d = A.diagonal()
        if np.any(d == 0):
            raise SolverError("singular system: zero diagonal entry")
        P = spla.LinearOperator(A.shape, matvec=lambda v: v / d)
        history = []
        x, info = spla.bicgstab(A, b, rtol=tol, atol=0.0, M=P, maxiter=maxiter,
                                callback=lambda xk: history.append(_residual(A, xk, b)))
        res = _residual(A, x, b)
        if info != 0 or res > 10 * tol:
            tail = ", ".join(f"{h:.2e}" for h in history[-5:])
            raise SolverError(f"iteration stagnated (info={info}), residual {res:.3e}; last: {tail}")
        return x, res
    raise ValueError(f"unknown solver method {method!r}")
