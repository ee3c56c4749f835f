"""NMF/ANMF and the interval-maximized (theta-MLE) detection statistics."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .covariance import fixed_point_mle_batch
from .numerics import hermitian_inverse, hermitize
from .signal_model import Hypothesis, MismatchInterval, ScenarioConfig, steering_vector
from .trigpoly import SdpSolution, build_arc_cone, grid_max_F, solve_detector_sdp, trig_coeffs

DETECTORS = ("anmf", "theta-mle")
ENGINES = ("grid", "sdp")
DEFAULT_GRID_POINTS = 512


class SolverError(RuntimeError):
    """The SDP engine did not reach its tolerance; ``solution`` carries the diagnostics."""

    def __init__(self, msg: str, solution: SdpSolution):
        super().__init__(msg)
        self.solution = solution


@dataclass
class DetectionOutcome:
    statistic: float
    threshold: float
    decision: Hypothesis
    phi_hat: float
    engine: str
    detector: str = "theta-mle"
    diagnostics: dict = field(default_factory=dict)


def _inv_stack(M: np.ndarray) -> np.ndarray:
    N = M.shape[-1]
    return hermitize(np.linalg.solve(M, np.broadcast_to(np.eye(N, dtype=complex), M.shape)))


def nmf_statistic(z, p, M) -> float:
    """|z^H M^-1 p|^2 / ((z^H M^-1 z)(p^H M^-1 p)), in [0, 1]."""
    z = np.asarray(z, dtype=complex)
    if not np.any(z):
        raise ValueError("zero CUT vector")
    return float(nmf_statistics(z[None], np.asarray(p, dtype=complex), hermitian_inverse(M)[None])[0])


def nmf_statistics(Z: np.ndarray, p: np.ndarray, M_inv: np.ndarray) -> np.ndarray:
    """Batched NMF: Z (T, N), p (N,) or (T, N), M_inv (T, N, N). Zero rows give 0."""
    Z = np.asarray(Z, dtype=complex)
    nz = np.linalg.norm(Z, axis=-1)
    Zn = Z / np.where(nz > 0, nz, 1.0)[..., None]
    p = np.broadcast_to(p, Z.shape)
    Mp = np.einsum("tnm,tm->tn", M_inv, p)
    Mz = np.einsum("tnm,tm->tn", M_inv, Zn)
    num = np.abs(np.einsum("tn,tn->t", Zn.conj(), Mp)) ** 2
    den = np.einsum("tn,tn->t", Zn.conj(), Mz).real * np.einsum("tn,tn->t", p.conj(), Mp).real
    out = np.where(nz > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return np.clip(out, 0.0, 1.0)


def theta_mle_statistics(Z: np.ndarray, M_inv: np.ndarray, interval: MismatchInterval,
                         engine: str = "grid", grid_points: int = DEFAULT_GRID_POINTS,
                         sdp_tol: float = 1e-8, on_failure: str = "raise"):
    """Batched theta-MLE statistic max_phi F(phi) / (z^H M^-1 z).

    Returns (statistic (T,), phi_hat (T,), sdp solutions or None, fallback mask (T,)).
    Under the SDP engine phi_hat still comes from the grid refinement. With
    ``on_failure="grid"`` a non-optimal SDP solve is replaced by the grid value
    and flagged in the mask instead of raising SolverError.
    """
    if engine not in ENGINES:
        raise ValueError(f"unknown engine {engine!r}")
    Z = np.asarray(Z, dtype=complex)
    T, N = Z.shape
    nz = np.linalg.norm(Z, axis=-1)
    Zn = Z / np.where(nz > 0, nz, 1.0)[:, None]
    coeffs = trig_coeffs(M_inv, Zn)
    qz = np.einsum("tn,tnm,tm->t", Zn.conj(), M_inv, Zn).real
    t_grid, phi_hat = grid_max_F(coeffs, interval.theta, interval.beta, grid_points=grid_points)
    t_grid = np.atleast_1d(t_grid)
    phi_hat = np.atleast_1d(phi_hat)
    sols = None
    fallback = np.zeros(T, dtype=bool)
    if engine == "grid" or interval.beta == 0:
        t = t_grid
    else:
        cone = build_arc_cone(N, 2 * N, interval.theta, interval.beta)
        sols = []
        t = np.empty(T)
        for i in range(T):
            if nz[i] == 0:
                t[i] = 0.0
                sols.append(None)
                continue
            sol = solve_detector_sdp(coeffs[i], cone, tol=sdp_tol)
            sols.append(sol)
            if sol.status != "optimal":
                if on_failure != "grid":
                    raise SolverError(f"SDP {sol.status} (gap {sol.gap:.3e}, primal residual "
                                      f"{sol.primal_res:.3e})", sol)
                fallback[i] = True
                t[i] = t_grid[i]
            else:
                t[i] = sol.t_star
    stat = np.where(nz > 0, t / np.where(qz > 0, qz, 1.0), 0.0)
    return np.clip(stat, 0.0, 1.0), phi_hat, sols, fallback


def theta_mle_statistic(z, M, interval: MismatchInterval, engine: str = "grid",
                        grid_points: int = DEFAULT_GRID_POINTS) -> tuple[float, float]:
    """(statistic, phi_hat) for one CUT vector and a known/estimated covariance."""
    z = np.asarray(z, dtype=complex)
    if not np.any(z):
        return 0.0, float(interval.theta)
    Minv = hermitian_inverse(M)
    stat, phi, _, _ = theta_mle_statistics(z[None], Minv[None], interval, engine, grid_points)
    return float(stat[0]), float(phi[0])


def adaptive_detect(z, secondary, scenario: ScenarioConfig, threshold: float,
                    detector: str = "theta-mle", engine: str = "grid") -> DetectionOutcome:
    """Estimate M from the secondary data, evaluate the statistic on z, compare to threshold."""
    if detector not in DETECTORS:
        raise ValueError(f"unknown detector {detector!r}")
    M, iters, resid = fixed_point_mle_batch(np.asarray(secondary, dtype=complex)[None])
    diag = {"fp_iterations": int(iters[0]), "fp_residual": float(resid[0])}
    Minv = _inv_stack(M)[0]
    z = np.asarray(z, dtype=complex)
    if detector == "anmf":
        p = steering_vector(scenario.theta, scenario.N)
        stat = float(nmf_statistics(z[None], p, Minv[None])[0])
        phi_hat = float(scenario.theta)
    else:
        s, ph, sols, _ = theta_mle_statistics(z[None], Minv[None], scenario.interval, engine)
        stat, phi_hat = float(s[0]), float(ph[0])
        if sols and sols[0] is not None:
            diag.update(sdp_status=sols[0].status, sdp_gap=sols[0].gap,
                        sdp_iterations=sols[0].iterations, t_star=sols[0].t_star)
    decision = Hypothesis.H1 if stat > threshold else Hypothesis.H0
    return DetectionOutcome(stat, float(threshold), decision, phi_hat,
                            engine if detector == "theta-mle" else "closed-form", detector, diag)


def estimate_inverse_batch(secondary: np.ndarray, **kw) -> tuple[np.ndarray, np.ndarray]:
    """Fixed-point estimates for a stack of secondary sets and their inverses."""
    M, iters, _ = fixed_point_mle_batch(secondary, **kw)
    return M, _inv_stack(M)
