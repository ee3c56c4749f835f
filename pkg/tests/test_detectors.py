from __future__ import annotations

import math

import numpy as np
import pytest

from robust_glrt.clutter import ClutterGenerator, trial_rng
from robust_glrt.detectors import (SolverError, adaptive_detect, nmf_statistic, nmf_statistics,
                                   theta_mle_statistic, theta_mle_statistics)
from robust_glrt.numerics import hermitian_inverse, random_hpd
from robust_glrt.signal_model import Hypothesis, MismatchInterval, ScenarioConfig, steering_vector

from conftest import crandn


def test_nmf_examples(rng):
    M = random_hpd(rng, 8, 50)
    p = steering_vector(0.4, 8)
    assert nmf_statistic(p, p, M) == pytest.approx(1.0, abs=1e-12)
    assert nmf_statistic((2 - 3j) * p, p, M) == pytest.approx(1.0, abs=1e-12)
    # orthogonal under the M^-1 inner product
    z = crandn(rng, 8)
    Mi = hermitian_inverse(M)
    z_perp = z - (np.vdot(p, Mi @ z) / np.vdot(p, Mi @ p)) * p
    assert nmf_statistic(z_perp, p, M) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        nmf_statistic(np.zeros(8), p, M)


def test_theta_mle_beta_zero_equals_nmf(rng):
    for _ in range(50):
        M = random_hpd(rng, 8, 10 ** rng.uniform(0, 3))
        z = crandn(rng, 8)
        theta = rng.uniform(-3, 3)
        t, phi = theta_mle_statistic(z, M, MismatchInterval(theta, 0.0))
        assert t == pytest.approx(nmf_statistic(z, steering_vector(theta, 8), M), abs=1e-9)
        assert phi == theta


def test_theta_mle_noiseless_in_interval():
    iv = MismatchInterval(math.pi / 3, math.pi / 6)
    phi0 = 0.9
    t, phi = theta_mle_statistic(steering_vector(phi0, 8), np.eye(8), iv)
    assert t == pytest.approx(1.0, abs=1e-12)
    assert phi == pytest.approx(phi0, abs=1e-6)


def test_engines_agree(rng):
    iv_list = [MismatchInterval(rng.uniform(-3, 3), rng.uniform(0.05, 3.0)) for _ in range(10)]
    for iv in iv_list:
        M = random_hpd(rng, 8, 100)
        z = crandn(rng, 8)
        tg, _ = theta_mle_statistic(z, M, iv, "grid")
        ts, _ = theta_mle_statistic(z, M, iv, "sdp")
        assert ts == pytest.approx(tg, rel=1e-6)


def test_bounds_and_dominance(rng):
    T = 2000
    Mi = np.stack([hermitian_inverse(random_hpd(rng, 8, 10 ** rng.uniform(0, 3))) for _ in range(T)])
    Z = crandn(rng, T, 8)
    iv = MismatchInterval(math.pi / 3, math.pi / 6)
    tm, _, _, _ = theta_mle_statistics(Z, Mi, iv)
    nm = nmf_statistics(Z, steering_vector(iv.theta, 8), Mi)
    assert np.all((0 <= tm) & (tm <= 1)) and np.all((0 <= nm) & (nm <= 1))
    assert np.all(tm >= nm - 1e-12)


def test_scale_invariances(rng):
    iv = MismatchInterval(0.8, 0.4)
    M = random_hpd(rng, 8, 30)
    z = crandn(rng, 8)
    p = steering_vector(iv.theta, 8)
    t0, _ = theta_mle_statistic(z, M, iv)
    n0 = nmf_statistic(z, p, M)
    for c in (1e-4, 3.7, 2e5):
        assert theta_mle_statistic(z, c * M, iv)[0] == pytest.approx(t0, abs=1e-12)
        assert nmf_statistic(z, p, c * M) == pytest.approx(n0, abs=1e-12)
        assert theta_mle_statistic(c * z, M, iv)[0] == pytest.approx(t0, abs=1e-12)


def test_zero_cut_gives_zero():
    iv = MismatchInterval(0.5, 0.3)
    Z = np.zeros((2, 4), complex)
    Mi = np.stack([np.eye(4, dtype=complex)] * 2)
    stat, _, _, _ = theta_mle_statistics(Z, Mi, iv)
    np.testing.assert_array_equal(stat, 0.0)
    np.testing.assert_array_equal(nmf_statistics(Z, steering_vector(0.5, 4), Mi), 0.0)
    assert theta_mle_statistic(np.zeros(4), np.eye(4), iv)[0] == 0.0


def test_sdp_failure_raises_or_falls_back(monkeypatch, rng):
    import robust_glrt.detectors as det
    from robust_glrt.trigpoly import solve_detector_sdp

    def broken(coeffs, cone, tol=1e-8):
        sol = solve_detector_sdp(coeffs, cone, tol=tol, max_iter=1)
        sol.status = "max-iter"
        return sol

    monkeypatch.setattr(det, "solve_detector_sdp", broken)
    Mi = hermitian_inverse(random_hpd(rng, 8, 10))[None]
    z = crandn(rng, 1, 8)
    iv = MismatchInterval(0.5, 0.3)
    with pytest.raises(SolverError) as exc:
        theta_mle_statistics(z, Mi, iv, "sdp")
    assert exc.value.solution.status == "max-iter"
    stat, _, _, fb = theta_mle_statistics(z, Mi, iv, "sdp", on_failure="grid")
    assert fb.tolist() == [True]
    assert stat[0] == theta_mle_statistics(z, Mi, iv, "grid")[0][0]


def test_adaptive_detect_examples():
    sc = ScenarioConfig()
    b = ClutterGenerator(sc).draw(trial_rng(0, 0))
    out = adaptive_detect(b.cut, b.secondary, sc, threshold=1.0)
    assert out.decision is Hypothesis.H0 and out.statistic < 1
    assert out.engine == "grid" and out.diagnostics["fp_residual"] <= 1e-10
    z = 1e6 * steering_vector(sc.theta, sc.N) + b.cut
    out = adaptive_detect(z, b.secondary, sc, threshold=0.999)
    assert out.decision is Hypothesis.H1 and out.statistic > 0.999
    out_sdp = adaptive_detect(z, b.secondary, sc, threshold=0.999, engine="sdp")
    assert out_sdp.diagnostics["sdp_status"] == "optimal"
    assert out_sdp.statistic == pytest.approx(out.statistic, rel=1e-6)
    anmf = adaptive_detect(b.cut, b.secondary, sc, 0.5, detector="anmf")
    assert anmf.engine == "closed-form" and anmf.detector == "anmf"
    again = adaptive_detect(b.cut, b.secondary, sc, threshold=1.0)
    assert again.statistic == adaptive_detect(b.cut, b.secondary, sc, threshold=1.0).statistic


def test_decision_is_strict_inequality():
    sc = ScenarioConfig()
    b = ClutterGenerator(sc).draw(trial_rng(1, 0))
    s = adaptive_detect(b.cut, b.secondary, sc, 0.5).statistic
    assert adaptive_detect(b.cut, b.secondary, sc, s).decision is Hypothesis.H0
    assert adaptive_detect(b.cut, b.secondary, sc, np.nextafter(s, 0)).decision is Hypothesis.H1
