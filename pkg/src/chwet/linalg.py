"""Sparse solves for the coupled (phi, mu) system."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SolverError(RuntimeError):
    """Factorization breakdown or Krylov non-convergence."""


@dataclass(frozen=True)
class LinearSolveConfig:
    method: str = "direct"            # 'direct' or 'krylov'
    rel_tolerance: float = 1e-10
    max_iterations: int = 500
    preconditioner: str = "ilu"       # 'ilu' or 'none'
    check_residual: bool = False

    def __post_init__(self):
        if self.method not in ("direct", "krylov"):
            raise ValueError(f"unknown solver method {self.method!r}")
        if not 0 < self.rel_tolerance <= 1e-4:
            raise ValueError(f"rel_tolerance must lie in (0, 1e-4], got {self.rel_tolerance}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.preconditioner not in ("ilu", "none"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")


def solve(A, rhs, config: LinearSolveConfig | None = None) -> np.ndarray:
    """Solve ``A x = rhs`` with sparse LU (SuperLU) or preconditioned GMRES."""
    config = config or LinearSolveConfig()
    A = sp.csc_matrix(A)
    rhs = np.asarray(rhs, dtype=float)
    if A.shape[0] != A.shape[1] or A.shape[0] != rhs.shape[0]:
        raise ValueError(f"shape mismatch: A is {A.shape}, rhs has {rhs.shape}")
    norm_b = np.linalg.norm(rhs)
    if config.method == "direct":
        try:
            lu = spla.splu(A)
        except RuntimeError as exc:
            raise SolverError(f"sparse LU failed: {exc}") from exc
        x = lu.solve(rhs)
        if not np.isfinite(x).all():
            raise SolverError("sparse LU produced non-finite values (singular matrix)")
        if config.check_residual:
            res = np.linalg.norm(A @ x - rhs)
            if res > 1e-8 * max(norm_b, 1e-300):
                raise SolverError(f"direct solve residual {res:.3e} too large (|b| = {norm_b:.3e})")
        return x

    M = None
    if config.preconditioner == "ilu":
        try:
            ilu = spla.spilu(A, drop_tol=1e-5, fill_factor=20)
        except RuntimeError as exc:
            raise SolverError(f"incomplete factorization failed: {exc}") from exc
        M = spla.LinearOperator(A.shape, ilu.solve)
    x, info = spla.gmres(A, rhs, rtol=config.rel_tolerance, atol=0.0, restart=100,
                         maxiter=config.max_iterations, M=M)
    res = np.linalg.norm(A @ x - rhs)
    if info != 0 or res > config.rel_tolerance * norm_b * (1 + 1e-8):
        raise SolverError(f"GMRES did not converge (info={info}, residual {res:.3e}, |b| = {norm_b:.3e})")
    return x
