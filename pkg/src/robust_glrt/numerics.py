"""Small dense complex linear algebra shared by the other modules."""
from __future__ import annotations

import numpy as np
from scipy.linalg import lapack


class FactorizationError(np.linalg.LinAlgError):
    """Cholesky factorization hit a non-positive pivot.

    ``pivot`` is the 0-based index of the leading minor that failed.
    """

    def __init__(self, pivot: int, msg: str | None = None):
        self.pivot = pivot
        super().__init__(msg or f"matrix is not positive definite (pivot {pivot} failed)")


def hermitize(A: np.ndarray) -> np.ndarray:
    """Return (A + A^H)/2; works on stacks of matrices."""
    A = np.asarray(A)
    return 0.5 * (A + np.conj(np.swapaxes(A, -1, -2)))


def _check_square(A: np.ndarray) -> None:
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
        raise ValueError(f"expected a non-empty square matrix, got shape {A.shape}")


def cholesky(A) -> np.ndarray:
    """Lower-triangular R with R R^H = A for Hermitian positive-definite A.

    Raises FactorizationError carrying the failing pivot index.
    """
    A = np.asarray(A, dtype=complex)
    _check_square(A)
    scale = np.linalg.norm(A)
    if np.linalg.norm(A - A.conj().T) > 1e-12 * max(scale, 1.0):
        raise ValueError("matrix is not Hermitian")
    R, info = lapack.zpotrf(A, lower=1, clean=1)
    if info > 0:
        raise FactorizationError(info - 1)
    if info < 0:
        raise ValueError(f"illegal argument to potrf (info={info})")
    return R


def cho_solve(R: np.ndarray, b) -> np.ndarray:
    """Solve (R R^H) v = b given the lower Cholesky factor R."""
    b = np.asarray(b, dtype=complex)
    v, info = lapack.zpotrs(R, b, lower=1)
    if info != 0:
        raise ValueError(f"potrs failed (info={info})")
    return v


def hermitian_solve(A, b) -> np.ndarray:
    """Solve A v = b for Hermitian positive-definite A."""
    A = np.asarray(A, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if A.shape[0] != b.shape[0]:
        raise ValueError(f"dimension mismatch: A is {A.shape}, b is {b.shape}")
    return cho_solve(cholesky(A), b)


def hermitian_inverse(A) -> np.ndarray:
    """Explicit inverse of a Hermitian PD matrix via one Cholesky factorization."""
    A = np.asarray(A, dtype=complex)
    R = cholesky(A)
    return hermitize(cho_solve(R, np.eye(A.shape[0], dtype=complex)))


def quad_form(A, u, v) -> complex:
    """u^H A v."""
    A = np.asarray(A)
    u = np.asarray(u)
    v = np.asarray(v)
    if A.ndim != 2 or u.shape != (A.shape[0],) or v.shape != (A.shape[1],):
        raise ValueError(f"dimension mismatch: A {A.shape}, u {u.shape}, v {v.shape}")
    return complex(np.vdot(u, A @ v))


def random_hpd(rng: np.random.Generator, n: int, cond: float = 10.0) -> np.ndarray:
    """Random Hermitian PD matrix with prescribed condition number (test helper)."""
    G = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    Q, _ = np.linalg.qr(G)
    eig = np.geomspace(1.0, cond, n) if n > 1 else np.ones(1)
    return hermitize((Q * eig) @ Q.conj().T)
