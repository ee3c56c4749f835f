from __future__ import annotations

import math

import numpy as np
import pytest

from robust_glrt.numerics import random_hpd
from robust_glrt.signal_model import steering_vector
from robust_glrt.trigpoly import (CoefficientError, TrigRatioCoeffs, build_arc_cone, eval_F, grid_max_F,
                                  solve_detector_sdp, trig_coeffs, trig_poly)

from conftest import crandn


def _instance(rng, N=8, cond=100.0):
    C = random_hpd(rng, N, cond)
    return np.linalg.inv(C), crandn(rng, N)


def test_coeff_examples():
    c = trig_coeffs(np.eye(2), np.array([1, 0]))
    np.testing.assert_allclose(c.x, [1, 0])
    np.testing.assert_allclose(c.y, [2, 0])
    c = trig_coeffs(np.eye(2), np.array([1, 1]))
    np.testing.assert_allclose(c.x, [2, 1])
    np.testing.assert_allclose(c.y, [2, 0])


def test_coeffs_quadratic_form_oracle(rng):
    for _ in range(10):
        Ci, z = _instance(rng)
        c = trig_coeffs(Ci, z)
        assert c.x[0].real >= 0 and c.y[0].real > 0
        for phi in rng.uniform(-math.pi, math.pi, 20):
            p = steering_vector(phi, 8)
            num = abs(np.vdot(p, Ci @ z)) ** 2
            den = np.vdot(p, Ci @ p).real
            assert trig_poly(c.x, phi) == pytest.approx(num, rel=1e-10)
            assert trig_poly(c.y, phi) == pytest.approx(den, rel=1e-10)


def test_coeffs_batched_match_single(rng):
    Ci = np.stack([_instance(rng)[0] for _ in range(4)])
    Z = crandn(rng, 4, 8)
    cb = trig_coeffs(Ci, Z)
    for i in range(4):
        ci = trig_coeffs(Ci[i], Z[i])
        np.testing.assert_allclose(cb.x[i], ci.x, rtol=1e-13)
        np.testing.assert_allclose(cb.y[i], ci.y, rtol=1e-13)


def test_eval_F_examples():
    N = 5
    p0 = steering_vector(0.7, N)
    assert eval_F(trig_coeffs(np.eye(N), p0), 0.7) == pytest.approx(N)
    c = trig_coeffs(np.eye(2), np.array([1, 0]))
    np.testing.assert_allclose(eval_F(c, np.linspace(-3, 3, 7)), 0.5)
    c = trig_coeffs(np.eye(2), np.array([1, 1]))
    phi = np.linspace(-3, 3, 13)
    np.testing.assert_allclose(eval_F(c, phi), 1 + np.cos(phi))


def test_eval_F_bad_denominator():
    c = TrigRatioCoeffs(np.array([1.0, 0.0]), np.array([1.0, 1.0]))   # 1 + 2cos(phi) changes sign
    with pytest.raises(CoefficientError):
        eval_F(c, math.pi)


def test_grid_examples():
    c = trig_coeffs(np.eye(2), np.array([1, 1]))
    t, phi = grid_max_F(c, math.pi / 3, math.pi / 6)
    assert t == pytest.approx(1 + math.cos(math.pi / 6), abs=1e-12)
    assert phi == pytest.approx(math.pi / 6, abs=1e-9)
    t0, phi0 = grid_max_F(c, 0.4, 0.0)
    assert t0 == eval_F(c, 0.4) and phi0 == 0.4


def test_grid_is_maximal(rng):
    for _ in range(20):
        Ci, z = _instance(rng)
        theta, beta = rng.uniform(-3, 3), rng.uniform(0.01, 3.1)
        c = trig_coeffs(Ci, z)
        t, phi = grid_max_F(c, theta, beta)
        assert abs(phi - theta) <= beta + 1e-12
        samples = eval_F(c, rng.uniform(theta - beta, theta + beta, 1000))
        assert np.all(t >= samples - 1e-12 * t)
        dense = eval_F(c, np.linspace(theta - beta, theta + beta, 200_001)).max()
        assert t >= dense - 1e-12 * t and t == pytest.approx(dense, rel=1e-8)


def test_grid_rejects_coarse_grid(rng):
    with pytest.raises(ValueError):
        grid_max_F(trig_coeffs(*_instance(rng)), 0.0, 0.5, grid_points=10)


def test_arc_cone_d_vector():
    cone = build_arc_cone(8, 16, math.pi / 3, math.pi / 6)
    k = np.arange(16)
    np.testing.assert_allclose(cone.d, np.cos(2 * np.pi * k / 16 - math.pi / 3) - math.cos(math.pi / 6), atol=1e-15)
    assert cone.W.shape == (16, 8) and cone.W1.shape == (16, 7)
    full = build_arc_cone(4, 8, 0.0, math.pi - 1e-12)
    assert np.all(full.d >= -1e-9)
    np.testing.assert_allclose(full.d, np.cos(2 * np.pi * np.arange(8) / 8) + 1, atol=1e-9)


def test_arc_cone_argument_checks():
    with pytest.raises(ValueError):
        build_arc_cone(8, 14, 0.0, 0.5)
    with pytest.raises(ValueError):
        build_arc_cone(8, 16, 0.0, 0.0)


def test_arc_cone_map_nonnegative_on_arc(rng):
    for theta, beta in ((math.pi / 3, math.pi / 6), (-1.0, 0.3), (2.0, 2.5)):
        cone = build_arc_cone(8, 16, theta, beta)
        phi = np.linspace(theta - beta, theta + beta, 10_000)
        for X1, X2 in ((np.eye(8), np.zeros((7, 7))), (np.zeros((8, 8)), np.eye(7))):
            q = cone.apply(X1, X2)
            assert np.min(trig_poly(q, phi)) >= -1e-9 * np.max(np.abs(q))
        for _ in range(5):
            G1, G2 = crandn(rng, 8, 8), crandn(rng, 7, 7)
            q = cone.apply(G1 @ G1.conj().T, G2 @ G2.conj().T)
            assert np.min(trig_poly(q, phi)) >= -1e-9 * np.max(np.abs(q))


def test_arc_cone_functionals_match_apply(rng):
    cone = build_arc_cone(6, 12, 0.5, 0.8)
    G1, G2 = crandn(rng, 6, 6), crandn(rng, 5, 5)
    X1, X2 = G1 @ G1.conj().T, G2 @ G2.conj().T
    H1, H2 = cone.functionals()
    q = np.einsum("ab,kba->k", X1, H1) + np.einsum("ab,kba->k", X2, H2)
    np.testing.assert_allclose(q, cone.apply(X1, X2), rtol=1e-12, atol=1e-10)


def test_sdp_examples():
    cone = build_arc_cone(2, 4, math.pi / 3, math.pi / 6)
    s = solve_detector_sdp(trig_coeffs(np.eye(2), np.array([1, 0])), cone)
    assert s.status == "optimal" and s.t_star == pytest.approx(0.5, abs=1e-7)
    s = solve_detector_sdp(trig_coeffs(np.eye(2), np.array([1, 1])), cone)
    assert s.status == "optimal" and s.t_star == pytest.approx(1 + math.cos(math.pi / 6), abs=1e-7)


def test_sdp_matches_grid_and_certificate(rng):
    for i in range(30):
        Ci, z = _instance(rng, cond=10 ** rng.uniform(0, 4))
        theta, beta = rng.uniform(-3, 3), rng.uniform(0.01, math.pi - 0.01)
        c = trig_coeffs(Ci, z)
        cone = build_arc_cone(8, 16, theta, beta)
        s = solve_detector_sdp(c, cone)
        tg, _ = grid_max_F(c, theta, beta)
        assert s.status == "optimal"
        assert abs(s.t_star - tg) <= 1e-6 * max(1.0, abs(s.t_star))
        assert s.primal_res <= 1e-8 and s.gap <= 1e-8 * max(1.0, s.t_star) * 10
        # certificate: map(X1, X2) = t y - x with PSD Gram matrices
        np.testing.assert_allclose(cone.apply(s.X1, s.X2), s.t_star * c.y - c.x,
                                   atol=1e-6 * max(1.0, np.abs(c.x).max()))
        assert np.linalg.eigvalsh(s.X1)[0] >= -1e-9 * np.abs(s.X1).max()
        assert np.linalg.eigvalsh(s.X2)[0] >= -1e-9 * np.abs(s.X2).max()
        phi = np.linspace(theta - beta, theta + beta, 10_000)
        g = trig_poly(s.t_star * c.y - c.x, phi)
        assert np.min(g) >= -1e-8 * max(1.0, np.abs(c.x).max())


def test_sdp_monotone_in_beta(rng):
    Ci, z = _instance(rng)
    c = trig_coeffs(Ci, z)
    ts = [solve_detector_sdp(c, build_arc_cone(8, 16, 0.4, b)).t_star for b in (0.1, 0.3, 0.9, 2.0)]
    assert all(a <= b + 1e-8 * max(1, b) for a, b in zip(ts, ts[1:]))


def test_sdp_scale_invariance(rng):
    Ci, z = _instance(rng)
    cone = build_arc_cone(8, 16, 1.0, 0.6)
    r = []
    for s in (1.0, 1e-3, 37.0):
        t = solve_detector_sdp(trig_coeffs(s * Ci, z), cone).t_star
        r.append(t / np.vdot(z, s * Ci @ z).real)
    assert r[1] == pytest.approx(r[0], rel=1e-10) and r[2] == pytest.approx(r[0], rel=1e-10)


def test_sdp_zero_numerator():
    s = solve_detector_sdp(trig_coeffs(np.eye(3), np.zeros(3)), build_arc_cone(3, 6, 0.0, 0.5))
    assert s.t_star == 0.0 and s.status == "optimal"
