"""Fractional trigonometric objective F(phi) and its maximization over an arc.

F(phi) = p^H C^-1 z z^H C^-1 p / p^H C^-1 p with p = p(phi) a steering vector,
written as a ratio of two real trigonometric polynomials

    P_c(phi) = c_0 + 2 Re sum_{k=1}^{N-1} c_k exp(-j k phi).

Two independent routes give max F over [theta - beta, theta + beta]:

* ``grid_max_F``: dense sampling plus golden-section refinement (the oracle).
* ``solve_detector_sdp``: minimize t such that t*y - x is nonnegative on the arc,
  with the arc-nonnegative cone parameterized by two PSD Gram matrices and
  solved by the interior-point code in ``sdp``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import sdp as _sdp

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class CoefficientError(ValueError):
    """The denominator polynomial is not positive where it must be."""


@dataclass(frozen=True)
class TrigRatioCoeffs:
    """Numerator (x) and denominator (y) coefficients; leading axes allowed for batches."""
    x: np.ndarray
    y: np.ndarray

    @property
    def N(self) -> int:
        return self.x.shape[-1]

    def __getitem__(self, idx) -> "TrigRatioCoeffs":
        return TrigRatioCoeffs(self.x[idx], self.y[idx])


def _subdiag_sums(A: np.ndarray) -> np.ndarray:
    """c_k = sum_{n - m = k} A[n, m] for k = 0..N-1 (works on stacks)."""
    N = A.shape[-1]
    return np.stack([np.trace(A, offset=-k, axis1=-2, axis2=-1) for k in range(N)], axis=-1)


def trig_coeffs(C_inv, z) -> TrigRatioCoeffs:
    """Coefficients of F from the inverse covariance and the CUT vector.

    x_k sums the k-th subdiagonal of C^-1 z z^H C^-1, y_k that of C^-1;
    x_0 and y_0 are the traces. Accepts stacks: C_inv (..., N, N), z (..., N).
    """
    C_inv = np.asarray(C_inv, dtype=complex)
    z = np.asarray(z, dtype=complex)
    u = np.einsum("...nm,...m->...n", C_inv, z)
    A = u[..., :, None] * u[..., None, :].conj()
    x = _subdiag_sums(A)
    y = _subdiag_sums(C_inv)
    x[..., 0] = x[..., 0].real
    y[..., 0] = y[..., 0].real
    return TrigRatioCoeffs(x, y)


def trig_poly(c, phi) -> np.ndarray:
    """Evaluate c_0 + 2 Re sum_k c_k e^{-j k phi}.

    c has shape (..., N); phi broadcasts against the leading axes with one
    extra trailing axis of evaluation points, i.e. phi (..., G) -> (..., G).
    """
    c = np.asarray(c)
    phi = np.asarray(phi, dtype=float)
    if phi.ndim == 0:
        return trig_poly(c, phi[None])[..., 0]
    N = c.shape[-1]
    k = np.arange(1, N)
    E = np.exp(-1j * phi[..., None] * k)                       # (..., G, N-1)
    s = np.einsum("...gk,...k->...g", E, c[..., 1:]) if N > 1 else 0.0
    return c[..., :1].real + 2.0 * np.real(s)


def eval_F(coeffs: TrigRatioCoeffs, phi):
    """F at ``phi`` (scalar or array); raises CoefficientError on a nonpositive denominator."""
    phi_arr = np.asarray(phi, dtype=float)
    scalar = phi_arr.ndim == 0
    ph = phi_arr.reshape(-1) if coeffs.x.ndim == 1 else phi_arr
    num = trig_poly(coeffs.x, ph)
    den = trig_poly(coeffs.y, ph)
    if np.any(den <= 0):
        raise CoefficientError("denominator polynomial is not positive")
    out = num / den
    return float(out[0]) if scalar else out.reshape(phi_arr.shape) if coeffs.x.ndim == 1 else out


def _F_shared(coeffs: TrigRatioCoeffs, phi: np.ndarray) -> np.ndarray:
    """F on one common set of points: coeffs (T, N), phi (G,) -> (T, G)."""
    E = np.exp(-1j * np.outer(np.arange(1, coeffs.N), phi))          # (N-1, G)
    num = coeffs.x[:, :1].real + 2.0 * np.real(coeffs.x[:, 1:] @ E)
    den = coeffs.y[:, :1].real + 2.0 * np.real(coeffs.y[:, 1:] @ E)
    return num / den


def _F_rows(coeffs: TrigRatioCoeffs, phi: np.ndarray) -> np.ndarray:
    """F with one phi per coefficient row: coeffs (S, N), phi (S, G) -> (S, G)."""
    return trig_poly(coeffs.x, phi) / trig_poly(coeffs.y, phi)


def grid_max_F(coeffs: TrigRatioCoeffs, theta: float, beta: float, grid_points: int = 512,
               refine: float = 1e-12, candidates: int = 3):
    """Maximum of F over [theta - beta, theta + beta] by sampling then golden-section search.

    Every grid local maximum among the ``candidates`` best is refined inside its
    neighbouring grid cells. Batched coefficients (T, N) give arrays (T,).

    Returns
    -------
    t_max, phi_star
    """
    single = coeffs.x.ndim == 1
    cf = coeffs[None] if single else coeffs
    T, N = cf.x.shape
    if grid_points < 2 * N + 1:
        raise ValueError(f"grid_points must be >= 2N+1 = {2 * N + 1}")
    if beta == 0:
        t = _F_rows(cf, np.full((T, 1), float(theta)))[:, 0]
        phi = np.full(T, float(theta))
        return (float(t[0]), float(phi[0])) if single else (t, phi)

    lo, hi = theta - beta, theta + beta
    grid = np.linspace(lo, hi, grid_points)
    h = grid[1] - grid[0]
    vals = _F_shared(cf, grid)
    if np.any(~np.isfinite(vals)):
        raise CoefficientError("non-finite F on the grid")

    # local maxima of the sampled values, including endpoints
    left = np.concatenate([np.full((T, 1), -np.inf), vals[:, :-1]], axis=1)
    right = np.concatenate([vals[:, 1:], np.full((T, 1), -np.inf)], axis=1)
    score = np.where((vals >= left) & (vals >= right), vals, -np.inf)
    n_cand = min(candidates, grid_points)
    idx = np.argsort(-score, axis=1, kind="stable")[:, :n_cand]          # (T, n_cand)
    valid = np.isfinite(np.take_along_axis(score, idx, axis=1))
    centre = grid[idx]
    a = np.maximum(centre - h, lo)
    b = np.minimum(centre + h, hi)

    rows = np.repeat(np.arange(T), n_cand)
    sub = cf[rows]
    a = a.reshape(-1)
    b = b.reshape(-1)
    best_phi = centre.reshape(-1).copy()
    best_val = np.take_along_axis(vals, idx, axis=1).reshape(-1).copy()

    f = lambda ph: _F_rows(sub, ph[:, None])[:, 0]  # noqa: E731
    n_iter = max(1, int(math.ceil(math.log(refine / (2 * h)) / math.log(GOLDEN)))) if 2 * h > refine else 0
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(n_iter):
        go_right = fc < fd            # maximum lies in [c, b]
        a = np.where(go_right, c, a)
        b = np.where(go_right, b, d)
        new_c = np.where(go_right, d, b - GOLDEN * (b - a))
        new_d = np.where(go_right, a + GOLDEN * (b - a), c)
        fc_keep, fd_keep = fc, fd
        c, d = new_c, new_d
        # reuse the surviving interior point, evaluate only the new one
        probe = np.where(go_right, d, c)
        fp = f(probe)
        fc = np.where(go_right, fd_keep, fp)
        fd = np.where(go_right, fp, fc_keep)
    mid = 0.5 * (a + b)
    for ph, fv in ((c, fc), (d, fd), (mid, f(mid))):
        better = fv > best_val
        best_val = np.where(better, fv, best_val)
        best_phi = np.where(better, ph, best_phi)

    best_val = np.where(valid.reshape(-1), best_val, -np.inf).reshape(T, n_cand)
    best_phi = best_phi.reshape(T, n_cand)
    j = np.argmax(best_val, axis=1)
    t = best_val[np.arange(T), j]
    phi = best_phi[np.arange(T), j]
    return (float(t[0]), float(phi[0])) if single else (t, phi)


# --------------------------------------------------------------------------
# Arc-nonnegativity cone
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ArcConeMap:
    """DFT parameterization of trigonometric polynomials nonnegative on an arc."""
    N: int
    M_dft: int
    theta: float
    beta: float
    W: np.ndarray    # (M_dft, N)
    W1: np.ndarray   # (M_dft, N-1)
    d: np.ndarray    # (M_dft,)

    def apply(self, X1, X2) -> np.ndarray:
        """q = W^H [diag(W X1 W^H) + d o diag(W1 X2 W1^H)]."""
        D1 = np.einsum("mi,ij,mj->m", self.W, X1, self.W.conj())
        D2 = np.einsum("mi,ij,mj->m", self.W1, X2, self.W1.conj()) if self.N > 1 else 0.0
        return self.W.conj().T @ (D1 + self.d * D2)

    def functionals(self) -> tuple[np.ndarray, np.ndarray]:
        """Hermitian matrices H1[k], H2[k] with q_k = tr(X1 H1[k]) + tr(X2 H2[k]).

        H1[k] is (N, N) and H2[k] is (N-1, N-1), stacked over k = 0..N-1.
        They are complex (not Hermitian) since q_k is complex for k >= 1.
        """
        W, W1, d = self.W, self.W1, self.d
        ph = W.conj()                                  # conj(W[m, k])
        # (a_m^H a_m)[a, b] = conj(W[m, a]) W[m, b]
        H1 = np.einsum("mk,ma,mb->kab", ph, W.conj(), W)
        H2 = np.einsum("mk,m,ma,mb->kab", ph, d, W1.conj(), W1)
        return H1, H2


def build_arc_cone(N: int, M_dft: int | None, theta: float, beta: float) -> ArcConeMap:
    """W, W1 from the M-point DFT and d_k = cos(2 pi k / M - theta) - cos(beta)."""
    if M_dft is None:
        M_dft = 2 * N
    if M_dft < 2 * N - 1:
        raise ValueError(f"M_dft must be >= 2N-1 = {2 * N - 1}, got {M_dft}")
    if not (0.0 < beta < math.pi):
        raise ValueError(f"beta must lie in (0, pi), got {beta}")
    m = np.arange(M_dft)
    Wdft = np.exp(-2j * np.pi * np.outer(m, m) / M_dft)
    W = Wdft[:, :N]
    W1 = Wdft[:, :N - 1]
    d = np.cos(2 * np.pi * m / M_dft - theta) - math.cos(beta)
    return ArcConeMap(N, M_dft, float(theta), float(beta), W, W1, d)


# --------------------------------------------------------------------------
# SDP for the arc maximum
# --------------------------------------------------------------------------

def _embed(H: np.ndarray) -> np.ndarray:
    """Real symmetric embedding [[Re H, -Im H], [Im H, Re H]] (stacks allowed)."""
    R, I = H.real, H.imag
    top = np.concatenate([R, -I], axis=-1)
    bot = np.concatenate([I, R], axis=-1)
    return np.concatenate([top, bot], axis=-2)


def _unembed(Y: np.ndarray) -> np.ndarray:
    n = Y.shape[0] // 2
    return 0.5 * (Y[:n, :n] + Y[n:, n:]) + 0.5j * (Y[n:, :n] - Y[:n, n:])


def _real_rows(Hk: np.ndarray) -> np.ndarray:
    """Constraint matrices on the real embedding for Re q_0, Re q_k, Im q_k (k >= 1).

    For Hermitian X and complex H, Re tr(X H) = tr(X herm(H)) and the matching
    matrix on the embedded variable is embed(herm(H)) / 2.
    """
    herm = lambda A: 0.5 * (A + np.conj(np.swapaxes(A, -1, -2)))  # noqa: E731
    rows = [herm(Hk[0])]
    for k in range(1, Hk.shape[0]):
        rows.append(herm(Hk[k]))
        rows.append(herm(-1j * Hk[k]))
    return 0.5 * _embed(np.stack(rows))


def _real_coeffs(c: np.ndarray) -> np.ndarray:
    out = [c[0].real]
    for k in range(1, c.shape[0]):
        out.extend([c[k].real, c[k].imag])
    return np.asarray(out)


@dataclass
class SdpSolution:
    t_star: float
    X1: np.ndarray
    X2: np.ndarray
    status: str
    gap: float
    primal_res: float
    dual_res: float
    iterations: int
    dual_obj: float = float("nan")


def solve_detector_sdp(coeffs: TrigRatioCoeffs, cone: ArcConeMap, tol: float = 1e-8,
                       max_iter: int = 100) -> SdpSolution:
    """Minimize t subject to t*y - x = map(X1, X2), X1, X2 PSD Hermitian, t >= 0.

    x and y are rescaled internally (x by x_0, y by y_0, the map by 1/M) so the
    solver sees O(1) data; t_star is reported in the original units.
    """
    x = np.asarray(coeffs.x, dtype=complex)
    y = np.asarray(coeffs.y, dtype=complex)
    N = x.shape[0]
    if N != cone.N:
        raise ValueError("coefficient length does not match cone dimension")
    y0 = float(y[0].real)
    if y0 <= 0:
        raise CoefficientError("y_0 must be positive")
    x0 = float(x[0].real)
    if x0 <= 0:
        # zero numerator: F vanishes identically
        return SdpSolution(0.0, np.zeros((N, N), complex), np.zeros((N - 1, N - 1), complex),
                           "optimal", 0.0, 0.0, 0.0, 0, 0.0)
    xs, ys = x / x0, y / y0

    H1, H2 = cone.functionals()
    A1 = -_real_rows(H1) / cone.M_dft                       # (2N-1, 2N, 2N)
    yr = _real_coeffs(ys)
    m = yr.shape[0]
    C_blocks = [np.ones((1, 1)), np.zeros((2 * N, 2 * N))]
    A_blocks = [yr.reshape(m, 1, 1), A1]
    if N > 1:
        A2 = -_real_rows(H2) / cone.M_dft                   # (2N-1, 2N-2, 2N-2)
        C_blocks.append(np.zeros((2 * N - 2, 2 * N - 2)))
        A_blocks.append(A2)
    prob = _sdp.BlockSDP(C=C_blocks, A=A_blocks, b=_real_coeffs(xs),
                         embedded=[False] + [True] * (len(C_blocks) - 1))
    res = _sdp.solve(prob, tol=tol, max_iter=max_iter)

    scale = x0 / y0
    t_star = float(res.X[0][0, 0]) * scale
    # Gram matrices in the unscaled map's units: map(X1, X2) = t y - x
    X1 = _unembed(res.X[1]) * (x0 / cone.M_dft)
    X2 = _unembed(res.X[2]) * (x0 / cone.M_dft) if N > 1 else np.zeros((0, 0), complex)
    status = res.status if res.status in ("optimal", "max-iter", "infeasible") else "max-iter"
    return SdpSolution(t_star=t_star, X1=X1, X2=X2, status=status,
                       gap=res.gap * scale, primal_res=res.primal_res, dual_res=res.dual_res,
                       iterations=res.iterations, dual_obj=res.dual_obj * scale)
