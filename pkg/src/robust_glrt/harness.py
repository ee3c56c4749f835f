"""Monte Carlo engine: threshold calibration, Pd-vs-SNR curves, CFAR sweeps, mismatch and K studies.

Every trial owns a generator keyed by (seed, stream, trial index), and trials
are processed in fixed-size chunks whose boundaries do not depend on the worker
count, so results are bit-identical for any ``threads`` value.

Within one experiment the same clutter realisation of trial ``i`` is reused at
every SNR point and for every detector (common random numbers); the fixed-point
covariance estimate is therefore computed once per trial.
"""
from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import norm

from .clutter import STREAM_H0, STREAM_H1, ClutterGenerator, trial_rng
from .detectors import DEFAULT_GRID_POINTS, DETECTORS, ENGINES, estimate_inverse_batch, nmf_statistics, theta_mle_statistics
from .signal_model import CONFIG_KEYS, ScenarioConfig, db_to_linear, snr_to_alpha, steering_vector

# independent H0 resample used to check a calibrated threshold
STREAM_VALIDATE = 3

DEFAULT_CHUNK = 512
DEFAULT_SNR_GRID = tuple(float(s) for s in range(0, 26))
CSV_COLUMNS = ["detector", "engine", "snr_db", "pd", "stderr", "trials", "threshold", "seed",
               "flagged"] + list(CONFIG_KEYS)


class InsufficientTrialsError(ValueError):
    pass


@dataclass(frozen=True)
class RunOptions:
    """Execution knobs that never change the statistics, only how they are computed."""
    engine: str = "grid"
    threads: int = 0              # 0 -> os.cpu_count()
    chunk_size: int = DEFAULT_CHUNK
    grid_points: int = DEFAULT_GRID_POINTS

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise ValueError(f"unknown engine {self.engine!r}")
        if self.chunk_size < 1:
            raise ValueError("chunk_size must be >= 1")

    @property
    def workers(self) -> int:
        return self.threads if self.threads > 0 else (os.cpu_count() or 1)


# --------------------------------------------------------------------------
# interval helpers
# --------------------------------------------------------------------------

def wilson_interval(successes: float, n: float, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval; ``n`` may be non-integer (effective sample size)."""
    if n <= 0:
        raise ValueError("n must be positive")
    z = float(norm.ppf(0.5 + confidence / 2))
    p = successes / n
    den = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return max(0.0, centre - half), min(1.0, centre + half)


def pooled_wilson_interval(p: float, n_cal: int, n_test: int, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson interval around ``p`` for a test Pfa measured at a threshold calibrated on ``n_cal`` trials.

    Both the calibration sample and the test sample fluctuate, so the effective
    sample size is 1 / (1/n_cal + 1/n_test).
    """
    n_eff = 1.0 / (1.0 / n_cal + 1.0 / n_test)
    return wilson_interval(p * n_eff, n_eff, confidence)


# --------------------------------------------------------------------------
# core trial engine
# --------------------------------------------------------------------------

@dataclass
class SimResult:
    statistics: dict            # detector -> (n_snr, trials)
    flagged: dict               # detector -> sorted trial indices recounted with the grid engine
    engine: str


def engine_label(detector: str, engine: str) -> str:
    """Code path that produced a detector's numbers; ANMF has a closed form under any engine."""
    return engine if detector == "theta-mle" else "closed-form"


def _chunks(trials: int, size: int) -> list[tuple[int, int]]:
    return [(a, min(a + size, trials)) for a in range(0, trials, size)]


def _run_chunk(scenario: ScenarioConfig, gen: ClutterGenerator, detectors, stream: int,
               amplitudes: np.ndarray | None, phi: float, opts: RunOptions, start: int, stop: int):
    T = stop - start
    cut = np.empty((T, scenario.N), dtype=complex)
    sec = np.empty((T, scenario.K, scenario.N), dtype=complex)
    psi = np.zeros(T)
    for j, i in enumerate(range(start, stop)):
        rng = trial_rng(scenario.rng_seed, i, stream)
        b = gen.draw(rng)
        cut[j] = b.cut
        sec[j] = b.secondary
        if amplitudes is not None:
            # always consume the draw so a fixed phase leaves the clutter stream untouched
            psi[j] = rng.uniform(0.0, 2 * math.pi)
    if scenario.alpha_phase is not None:
        psi[:] = scenario.alpha_phase
    _, Minv = estimate_inverse_batch(sec)

    p_nom = steering_vector(scenario.theta, scenario.N)
    amps = np.zeros(1) if amplitudes is None else amplitudes
    target = np.exp(1j * psi)[:, None] * steering_vector(phi, scenario.N)[None, :]
    out = {d: np.empty((amps.size, T)) for d in detectors}
    flagged = {d: [] for d in detectors}
    for s, a in enumerate(amps):
        Z = cut + a * target if a != 0 else cut
        if "anmf" in out:
            out["anmf"][s] = nmf_statistics(Z, p_nom, Minv)
        if "theta-mle" in out:
            stat, _, _, fb = theta_mle_statistics(Z, Minv, scenario.interval, opts.engine,
                                                  opts.grid_points, on_failure="grid")
            out["theta-mle"][s] = stat
            flagged["theta-mle"].extend(int(start + j) for j in np.flatnonzero(fb))
    return out, flagged


def simulate(scenario: ScenarioConfig, detectors, trials: int, stream: int = STREAM_H0,
             snr_db_grid=None, phi: float | None = None, options: RunOptions | None = None) -> SimResult:
    """Statistics of ``trials`` independent trials, for each detector and SNR point.

    ``snr_db_grid=None`` means clutter only (one row). Otherwise the target
    alpha * p(phi) with a uniformly random phase is added to the CUT, |alpha|
    following the SNR definition with E[s^2] = nu.
    """
    opts = options or RunOptions()
    detectors = tuple(detectors)
    for d in detectors:
        if d not in DETECTORS:
            raise ValueError(f"unknown detector {d!r}")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    phi = scenario.phi if phi is None else float(phi)
    amps = None
    if snr_db_grid is not None:
        p = steering_vector(phi, scenario.N)
        amps = np.array([abs(snr_to_alpha(db_to_linear(s), scenario.nu, p)) if np.isfinite(s) else 0.0
                         for s in snr_db_grid])
    gen = ClutterGenerator(scenario)
    chunks = _chunks(trials, opts.chunk_size)
    work = lambda c: _run_chunk(scenario, gen, detectors, stream, amps, phi, opts, *c)  # noqa: E731
    if opts.workers == 1 or len(chunks) == 1:
        parts = [work(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=opts.workers) as pool:
            parts = list(pool.map(work, chunks))
    stats = {d: np.concatenate([p[0][d] for p in parts], axis=1) for d in detectors}
    flagged = {d: sorted(i for p in parts for i in p[1][d]) for d in detectors}
    return SimResult(stats, flagged, opts.engine)


# --------------------------------------------------------------------------
# calibration
# --------------------------------------------------------------------------

@dataclass
class CalibrationResult:
    detector: str
    threshold: float
    pfa_target: float
    trials: int
    achieved_pfa: float
    achieved_pfa_ci: tuple
    engine: str = "grid"
    scenario: ScenarioConfig | None = None
    flagged: int = 0


def _check_trials(trials: int, pfa: float) -> None:
    if trials * pfa < 100 - 1e-9:
        raise InsufficientTrialsError(
            f"{trials} trials cannot resolve Pfa={pfa:g}; need at least {math.ceil(100 / pfa)}")


def threshold_from_statistics(stats: np.ndarray, pfa: float) -> float:
    """Empirical (1 - pfa) quantile with midpoint interpolation."""
    return float(np.quantile(np.asarray(stats, dtype=float), 1.0 - pfa, method="midpoint"))


def calibrate_thresholds(scenario: ScenarioConfig, detectors, trials: int,
                         options: RunOptions | None = None) -> dict:
    """Calibrate each detector separately to ``scenario.pfa_target`` on shared H0 trials."""
    _check_trials(trials, scenario.pfa_target)
    opts = options or RunOptions()
    sim = simulate(scenario, detectors, trials, STREAM_H0, options=opts)
    out = {}
    for d, st in sim.statistics.items():
        st = st[0]
        thr = threshold_from_statistics(st, scenario.pfa_target)
        k = int(np.count_nonzero(st > thr))
        out[d] = CalibrationResult(d, thr, scenario.pfa_target, trials, k / trials,
                                   wilson_interval(k, trials), engine_label(d, opts.engine), scenario,
                                   len(sim.flagged[d]))
    return out


def calibrate_threshold(scenario: ScenarioConfig, detector: str, trials: int,
                        options: RunOptions | None = None) -> CalibrationResult:
    return calibrate_thresholds(scenario, (detector,), trials, options)[detector]


@dataclass
class PfaCheck:
    detector: str
    rho: float
    threshold: float
    pfa: float
    exceedances: int
    trials: int
    interval: tuple

    @property
    def inside(self) -> bool:
        return self.interval[0] <= self.pfa <= self.interval[1]


def pfa_check(scenario: ScenarioConfig, calibration: dict, trials: int,
              options: RunOptions | None = None, stream: int = STREAM_VALIDATE) -> dict:
    """Empirical Pfa of calibrated thresholds on an independent H0 resample."""
    sim = simulate(scenario, tuple(calibration), trials, stream, options=options)
    out = {}
    for d, cal in calibration.items():
        k = int(np.count_nonzero(sim.statistics[d][0] > cal.threshold))
        ci = pooled_wilson_interval(cal.pfa_target, cal.trials, trials)
        out[d] = PfaCheck(d, scenario.rho, cal.threshold, k / trials, k, trials, ci)
    return out


# --------------------------------------------------------------------------
# detection curves
# --------------------------------------------------------------------------

@dataclass
class PdCurve:
    detector: str
    snr_db_grid: np.ndarray
    pd: np.ndarray
    stderr: np.ndarray
    trials: int
    threshold: float
    scenario: ScenarioConfig
    engine: str = "grid"
    flagged: int = 0
    label: str = ""

    def crossing(self, level: float) -> float:
        return crossing_snr(self.snr_db_grid, self.pd, level)

    def monotone_violations(self, n_se: float = 3.0) -> list[int]:
        """Indices i with pd[i+1] < pd[i] beyond ``n_se`` pooled standard errors."""
        se = np.sqrt(self.stderr[:-1] ** 2 + self.stderr[1:] ** 2)
        drop = self.pd[:-1] - self.pd[1:]
        return [int(i) for i in np.flatnonzero(drop > n_se * np.maximum(se, 1e-300) + 1e-15)]


def crossing_snr(snr_db, pd, level: float) -> float:
    """SNR (dB) at which pd first reaches ``level``, linearly interpolated; nan if never."""
    snr_db = np.asarray(snr_db, dtype=float)
    pd = np.asarray(pd, dtype=float)
    hit = np.flatnonzero(pd >= level)
    if hit.size == 0:
        return math.nan
    i = int(hit[0])
    if i == 0:
        return float(snr_db[0])
    x0, x1, y0, y1 = snr_db[i - 1], snr_db[i], pd[i - 1], pd[i]
    return float(x0 + (level - y0) * (x1 - x0) / (y1 - y0))


def pd_curves(scenario: ScenarioConfig, thresholds: dict, snr_db_grid=DEFAULT_SNR_GRID,
              trials_per_point: int = 10_000, options: RunOptions | None = None,
              label: str = "") -> dict:
    """Pd vs SNR for several detectors on common H1 trials; ``thresholds`` maps detector -> threshold."""
    opts = options or RunOptions()
    grid = np.asarray(snr_db_grid, dtype=float)
    sim = simulate(scenario, tuple(thresholds), trials_per_point, STREAM_H1, grid, options=opts)
    out = {}
    for d, thr in thresholds.items():
        pd = np.count_nonzero(sim.statistics[d] > thr, axis=1) / trials_per_point
        se = np.sqrt(pd * (1 - pd) / trials_per_point)
        out[d] = PdCurve(d, grid, pd, se, trials_per_point, float(thr), scenario, engine_label(d, opts.engine),
                         len(sim.flagged[d]), label)
    return out


def pd_curve(scenario: ScenarioConfig, detector: str, threshold: float, snr_db_grid=DEFAULT_SNR_GRID,
             trials_per_point: int = 10_000, options: RunOptions | None = None) -> PdCurve:
    return pd_curves(scenario, {detector: threshold}, snr_db_grid, trials_per_point, options)[detector]


def mismatch_study(scenario: ScenarioConfig, thresholds: dict, mismatch_list, snr_db_grid=DEFAULT_SNR_GRID,
                   trials_per_point: int = 10_000, options: RunOptions | None = None) -> dict:
    """One curve family per mismatch theta - phi; returns {mismatch: {detector: PdCurve}}."""
    out = {}
    for m in mismatch_list:
        sc = scenario.with_(phi=scenario.theta - float(m))
        out[float(m)] = pd_curves(sc, thresholds, snr_db_grid, trials_per_point, options,
                                  label=f"mismatch={float(m)!r}")
    return out


def k_sensitivity(scenario: ScenarioConfig, detectors, k_list, threshold_policy="recalibrate",
                  snr_db_grid=DEFAULT_SNR_GRID, trials_per_point: int = 10_000,
                  calibration_trials: int | None = None, options: RunOptions | None = None) -> dict:
    """Pd curves for each K; returns {K: (calibrations or None, {detector: PdCurve})}.

    ``threshold_policy`` is "recalibrate" or a mapping detector -> fixed threshold.
    """
    detectors = tuple(detectors)
    out = {}
    for K in k_list:
        sc = scenario.with_(K=int(K))
        if threshold_policy == "recalibrate":
            n_cal = calibration_trials or math.ceil(100 / sc.pfa_target) * 10
            cal = calibrate_thresholds(sc, detectors, n_cal, options)
            thr = {d: cal[d].threshold for d in detectors}
        else:
            cal = None
            thr = {d: float(threshold_policy[d]) for d in detectors}
        out[int(K)] = (cal, pd_curves(sc, thr, snr_db_grid, trials_per_point, options, label=f"K={int(K)}"))
    return out


# --------------------------------------------------------------------------
# CFAR sweep
# --------------------------------------------------------------------------

@dataclass
class CfarTable:
    detector: str
    rho: float
    thresholds: np.ndarray
    pfa: np.ndarray
    stderr: np.ndarray
    trials: int


def cfar_sweep(scenario: ScenarioConfig, detectors, rho_list, trials: int, threshold_grid=None,
               options: RunOptions | None = None) -> list[CfarTable]:
    """Empirical exceedance probability over a fixed threshold grid, one table per (rho, detector)."""
    grid = np.linspace(0.0, 1.0, 101) if threshold_grid is None else np.asarray(threshold_grid, dtype=float)
    tables = []
    for rho in rho_list:
        sim = simulate(scenario.with_(rho=float(rho)), detectors, trials, STREAM_H0, options=options)
        for d, st in sim.statistics.items():
            srt = np.sort(st[0])
            pfa = 1.0 - np.searchsorted(srt, grid, side="right") / trials
            tables.append(CfarTable(d, float(rho), grid, pfa, np.sqrt(pfa * (1 - pfa) / trials), trials))
    return tables


# --------------------------------------------------------------------------
# CSV output
# --------------------------------------------------------------------------

def _scenario_row(sc: ScenarioConfig) -> list:
    return [v if isinstance(v, str) else repr(v) for v in sc.to_flat().values()]


def write_curves_csv(path: str | Path, curves) -> None:
    """Long-format CSV, one row per (curve, SNR point)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for c in curves:
            for s, p, e in zip(c.snr_db_grid, c.pd, c.stderr):
                w.writerow([c.detector, c.engine, repr(float(s)), repr(float(p)), repr(float(e)), c.trials,
                            repr(c.threshold), c.scenario.rng_seed, c.flagged] + _scenario_row(c.scenario))


def write_calibration_csv(path: str | Path, results) -> None:
    cols = ["detector", "engine", "threshold", "pfa_target", "trials", "achieved_pfa", "ci_low", "ci_high",
            "seed", "flagged"] + list(CONFIG_KEYS)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in results:
            w.writerow([r.detector, r.engine, repr(r.threshold), repr(r.pfa_target), r.trials,
                        repr(r.achieved_pfa), repr(r.achieved_pfa_ci[0]), repr(r.achieved_pfa_ci[1]),
                        r.scenario.rng_seed, r.flagged] + _scenario_row(r.scenario))


def write_cfar_csv(path: str | Path, tables, scenario: ScenarioConfig, engine: str) -> None:
    """One row per (table, threshold grid point)."""
    cols = ["detector", "engine", "rho", "threshold", "pfa", "stderr", "trials", "seed"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for t in tables:
            for thr, p, e in zip(t.thresholds, t.pfa, t.stderr):
                w.writerow([t.detector, engine_label(t.detector, engine), repr(t.rho), repr(float(thr)), repr(float(p)), repr(float(e)),
                            t.trials, scenario.rng_seed])


# --------------------------------------------------------------------------
# SDP versus grid oracle sweep
# --------------------------------------------------------------------------

@dataclass
class OracleRecord:
    index: int
    theta: float
    beta: float
    cond: float
    t_grid: float
    phi_grid: float
    t_sdp: float
    rel_gap: float
    status: str
    iterations: int
    coeffs: object = field(repr=False, default=None)
    solution: object = field(repr=False, default=None)


def oracle_instance(rng: np.random.Generator, N: int, max_cond: float = 1e4, beta_margin: float = 0.01):
    """Random (C^-1, z, theta, beta, cond) with cond(C) log-uniform in [1, max_cond]."""
    from .numerics import random_hpd

    cond = float(10 ** rng.uniform(0.0, math.log10(max_cond)))
    C = random_hpd(rng, N, cond)
    z = rng.standard_normal(N) + 1j * rng.standard_normal(N)
    theta = float(rng.uniform(-math.pi, math.pi))
    beta = float(rng.uniform(beta_margin, math.pi - beta_margin))
    return np.linalg.inv(C), z, theta, beta, cond


def oracle_sweep(instances: int, seed: int, N: int = 8, tol: float = 1e-8, keep_payload: bool = False,
                 max_cond: float = 1e4) -> list[OracleRecord]:
    """Solve random instances with both engines and record the relative disagreement of t."""
    from .trigpoly import build_arc_cone, grid_max_F, solve_detector_sdp, trig_coeffs

    out = []
    for i in range(instances):
        Cinv, z, theta, beta, cond = oracle_instance(trial_rng(seed, i, STREAM_VALIDATE + 1), N, max_cond)
        cf = trig_coeffs(Cinv, z)
        tg, pg = grid_max_F(cf, theta, beta)
        sol = solve_detector_sdp(cf, build_arc_cone(N, 2 * N, theta, beta), tol=tol)
        rel = abs(sol.t_star - tg) / max(abs(tg), 1e-300)
        out.append(OracleRecord(i, theta, beta, cond, tg, pg, sol.t_star, rel, sol.status, sol.iterations,
                                cf if keep_payload else None, sol if keep_payload else None))
    return out
