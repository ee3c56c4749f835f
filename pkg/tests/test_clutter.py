from __future__ import annotations

import math

import numpy as np
import pytest

from robust_glrt.clutter import (ClutterGenerator, TextureModel, complex_normal, dump_batch, generate_batch,
                                 load_batch, sample_speckle, sample_texture, toeplitz_covariance, trial_rng)
from robust_glrt.numerics import cholesky
from robust_glrt.signal_model import ScenarioConfig


def test_toeplitz_examples():
    np.testing.assert_array_equal(toeplitz_covariance(0.0, 5), np.eye(5))
    M = toeplitz_covariance(0.4, 8)
    assert M[0, 2] == pytest.approx(0.16)
    assert np.trace(M).real == pytest.approx(8)
    R = cholesky(toeplitz_covariance(0.999, 8))
    assert np.all(np.isfinite(R))
    with pytest.raises(ValueError):
        toeplitz_covariance(1.0, 4)


def test_texture_mean_square():
    s = sample_texture(TextureModel(3), np.random.default_rng(1), size=100_000)
    assert np.all(s > 0)
    assert np.mean(s**2) == pytest.approx(3.0, abs=0.05)


def test_texture_nu1_is_half_normal():
    s = sample_texture(TextureModel(1), np.random.default_rng(2), size=100_000)
    # half-normal: E[s] = sqrt(2/pi), median = 0.6745
    assert np.mean(s) == pytest.approx(math.sqrt(2 / math.pi), abs=0.01)
    assert np.median(s) == pytest.approx(0.6745, abs=0.01)


def test_texture_non_integer_nu():
    s = sample_texture(TextureModel(2.5), np.random.default_rng(3), size=100_000)
    assert np.mean(s**2) == pytest.approx(2.5, abs=0.05)


def test_texture_deterministic():
    a = sample_texture(TextureModel(3), np.random.default_rng(7), size=10)
    b = sample_texture(TextureModel(3), np.random.default_rng(7), size=10)
    np.testing.assert_array_equal(a, b)


def test_complex_normal_unit_power():
    u = complex_normal(np.random.default_rng(4), (200_000,))
    assert np.mean(np.abs(u) ** 2) == pytest.approx(1.0, abs=0.01)
    assert np.var(u.real) == pytest.approx(0.5, abs=0.01)


def test_speckle_white_covariance():
    g = sample_speckle(np.eye(4, dtype=complex), np.random.default_rng(5), count=100_000)
    C = g.T @ g.conj() / g.shape[0]
    assert np.max(np.abs(C - np.eye(4))) <= 0.02


def test_speckle_lag1_correlation():
    g = sample_speckle(cholesky(toeplitz_covariance(0.4, 8)), np.random.default_rng(6), count=100_000)
    r = np.mean(g[:, 1] * g[:, 0].conj())
    assert r.real == pytest.approx(0.4, abs=0.02)
    assert abs(r.imag) <= 0.02


def test_speckle_deterministic_and_single():
    R = cholesky(toeplitz_covariance(0.4, 4))
    np.testing.assert_array_equal(sample_speckle(R, np.random.default_rng(1)), sample_speckle(R, np.random.default_rng(1)))
    assert sample_speckle(R, np.random.default_rng(1)).shape == (4,)


def test_speckle_circular_symmetry():
    g = sample_speckle(cholesky(toeplitz_covariance(0.4, 4)), np.random.default_rng(8), count=100_000)
    n = g.shape[0]
    prod = g[:, :, None] * g[:, None, :]
    pseudo = prod.mean(axis=0)
    se = np.sqrt(np.mean(np.abs(prod - pseudo) ** 2, axis=0) / n)
    assert np.all(np.abs(pseudo) <= 3 * se)


def test_batch_shapes_and_K0():
    sc = ScenarioConfig()
    b = generate_batch(sc, np.random.default_rng(0))
    assert b.cut.shape == (8,) and b.secondary.shape == (32, 8) and b.textures.shape == (33,)
    b0 = generate_batch(sc, np.random.default_rng(0), K=0)
    assert b0.K == 0 and b0.cut.shape == (8,)


def test_batch_same_seed_identical():
    sc = ScenarioConfig()
    a = generate_batch(sc, trial_rng(3, 17))
    b = generate_batch(sc, trial_rng(3, 17))
    np.testing.assert_array_equal(a.cut, b.cut)
    np.testing.assert_array_equal(a.secondary, b.secondary)
    c = generate_batch(sc, trial_rng(3, 18))
    assert not np.array_equal(a.cut, c.cut)


def test_batch_power_and_covariance():
    sc = ScenarioConfig()
    gen = ClutterGenerator(sc)
    data = np.concatenate([np.vstack([b.cut[None], b.secondary])
                           for b in (gen.draw(trial_rng(1, i)) for i in range(10_000))])
    power = np.mean(np.sum(np.abs(data) ** 2, axis=1))
    assert power == pytest.approx(24.0, rel=0.02)
    n = data.shape[0]
    C = data.T @ data.conj() / n
    target = 3.0 * toeplitz_covariance(0.4, 8)
    # per-entry standard error of the mean of c_n conj(c_m)
    se = np.sqrt(np.mean(np.abs(data[:, :, None] * data[:, None, :].conj() - C) ** 2, axis=0) / n)
    assert np.all(np.abs(C - target) <= 3 * se + 1e-12)


def test_texture_independent_of_speckle():
    sc = ScenarioConfig()
    rng = np.random.default_rng(9)
    s = sample_texture(TextureModel(3), rng, size=100_000)
    g = sample_speckle(cholesky(toeplitz_covariance(0.4, 8)), rng, count=100_000)
    assert abs(np.corrcoef(s, np.linalg.norm(g, axis=1))[0, 1]) <= 0.01
    assert sc.nu == 3


def test_dump_load_roundtrip(tmp_path):
    b = generate_batch(ScenarioConfig(), trial_rng(5, 0))
    path = tmp_path / "x.bin"
    dump_batch(b, 5, path)
    raw = path.read_bytes()
    assert raw[:4] == b"CGCL"
    assert len(raw) == 4 + 4 + 4 + 4 + 8 + 33 * 8 * 16
    b2, seed = load_batch(path)
    assert seed == 5
    np.testing.assert_array_equal(b2.cut, b.cut)
    np.testing.assert_array_equal(b2.secondary, b.secondary)
    path.write_bytes(raw[:-3])
    with pytest.raises(ValueError):
        load_batch(path)
