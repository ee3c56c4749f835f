"""Fixed-point (Tyler-type) MLE of the normalized speckle covariance, and the SCM baseline."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import hermitize

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 200


class ConvergenceError(RuntimeError):
    def __init__(self, msg: str, residual: float, iterations: int):
        super().__init__(msg)
        self.residual = residual
        self.iterations = iterations


class DegenerateDataError(ValueError):
    pass


@dataclass(frozen=True)
class CovarianceEstimate:
    matrix: np.ndarray
    iterations: int
    final_residual: float


def _normalize_trace(M: np.ndarray) -> np.ndarray:
    N = M.shape[-1]
    tr = np.trace(M, axis1=-2, axis2=-1).real
    return M * (N / tr)[..., None, None]


def sample_covariance(secondary) -> np.ndarray:
    """(1/K) sum c c^H rescaled to trace N."""
    X = np.asarray(secondary, dtype=complex)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError("secondary data must have shape (K, N) with K >= 1")
    S = X.T @ X.conj() / X.shape[0]
    return _normalize_trace(hermitize(S))


def _fp_map(U: np.ndarray, M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Trace-normalized (N/K) sum u u^H / (u^H M^-1 u) over a stack.

    U: (T, K, N); M: (T, N, N). Returns (f(M), quadratic forms (T, K)).
    """
    T, K, N = U.shape
    # solve M V = U^T for all samples at once; q = u^H M^-1 u
    V = np.linalg.solve(M, np.swapaxes(U, 1, 2))          # (T, N, K)
    q = np.einsum("tkn,tnk->tk", U.conj(), V).real
    W = U / q[..., None]
    F = (N / K) * np.einsum("tkn,tkm->tnm", W, U.conj())
    return _normalize_trace(hermitize(F)), q


def fixed_point_mle_batch(secondary, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                          init: str = "identity", raise_on_fail: bool = True):
    """Vectorized fixed-point estimate over a stack of datasets.

    secondary: (T, K, N). Returns (M (T, N, N), iterations (T,), residual (T,)).
    Each dataset stops updating as soon as its own relative Frobenius change
    drops to ``tol``, so a row's result does not depend on the rest of the stack.
    """
    U = np.asarray(secondary, dtype=complex)
    if U.ndim != 3:
        raise ValueError("expected secondary data of shape (T, K, N)")
    T, K, N = U.shape
    if K < N:
        raise ValueError(f"need K >= N secondary vectors, got K={K}, N={N}")
    norms = np.linalg.norm(U, axis=2)
    if np.any(norms == 0):
        raise DegenerateDataError("zero secondary vector")
    # the fixed-point map is invariant to per-sample positive scaling
    U = U / norms[..., None]

    if init == "identity":
        M = np.broadcast_to(np.eye(N, dtype=complex), (T, N, N)).copy()
    elif init in ("scm", "sample-covariance"):
        M = _normalize_trace(hermitize(np.einsum("tkn,tkm->tnm", U, U.conj()) / K))
    else:
        raise ValueError(f"unknown init {init!r}")

    iters = np.zeros(T, dtype=int)
    resid = np.full(T, np.inf)
    active = np.arange(T)
    for it in range(1, max_iter + 1):
        if active.size == 0:
            break
        Ma = M[active]
        F, q = _fp_map(U[active], Ma)
        if np.any(q <= 0) or not np.all(np.isfinite(q)):
            raise DegenerateDataError("nonpositive quadratic form c^H M^-1 c")
        r = np.linalg.norm(F - Ma, axis=(1, 2)) / np.linalg.norm(F, axis=(1, 2))
        M[active] = F
        iters[active] = it
        resid[active] = r
        active = active[r > tol]

    if active.size and raise_on_fail:
        worst = float(resid[active].max())
        raise ConvergenceError(
            f"fixed-point iteration did not converge in {max_iter} iterations "
            f"({active.size} datasets, worst residual {worst:.3e})",
            residual=worst, iterations=max_iter)
    return M, iters, resid


def fixed_point_mle(secondary, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                    init: str = "identity") -> CovarianceEstimate:
    """Fixed-point MLE of the trace-N normalized covariance from K secondary vectors.

    Parameters
    ----------
    secondary : array of shape (K, N)
        Clutter-only vectors, one per row.
    tol : float
        Relative Frobenius change at which iteration stops.
    max_iter : int
        Iteration cap; exceeding it raises ConvergenceError.
    init : {"identity", "sample-covariance"}
        Starting point.
    """
    X = np.asarray(secondary, dtype=complex)
    if X.ndim != 2:
        raise ValueError("expected secondary data of shape (K, N)")
    M, it, r = fixed_point_mle_batch(X[None], tol=tol, max_iter=max_iter, init=init)
    return CovarianceEstimate(matrix=M[0], iterations=int(it[0]), final_residual=float(r[0]))


def fixed_point_residual(secondary, M) -> float:
    """||f(M) - M||_F / ||M||_F with f the trace-normalized fixed-point map."""
    X = np.asarray(secondary, dtype=complex)
    U = X / np.linalg.norm(X, axis=1, keepdims=True)
    F, _ = _fp_map(U[None], np.asarray(M, dtype=complex)[None])
    return float(np.linalg.norm(F[0] - M) / np.linalg.norm(M))
