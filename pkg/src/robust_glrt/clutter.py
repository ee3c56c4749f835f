"""Compound-Gaussian (SIRP) clutter: chi texture times correlated complex Gaussian speckle."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .numerics import cholesky
from .signal_model import ScenarioConfig

# stream tags keep H0 calibration, H1 detection and replay draws independent
STREAM_H0 = 0
STREAM_H1 = 1
STREAM_MISC = 2


def trial_rng(seed: int, trial: int, stream: int = STREAM_H0) -> np.random.Generator:
    """Per-trial generator keyed by (seed, stream, trial), independent of scheduling."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream, trial)))


@dataclass(frozen=True)
class TextureModel:
    nu: float = 3.0

    def __post_init__(self):
        if self.nu < 1:
            raise ValueError("nu must be >= 1")


def toeplitz_covariance(rho: float, N: int) -> np.ndarray:
    """M[n, m] = rho**|n-m| (real, unit diagonal, trace N)."""
    if not (0.0 <= rho < 1.0):
        raise ValueError(f"rho must lie in [0, 1), got {rho}")
    idx = np.arange(N)
    return (rho ** np.abs(idx[:, None] - idx[None, :])).astype(complex)


def sample_texture(model: TextureModel, rng: np.random.Generator, size=None):
    """s = sqrt(chi-square with nu dof), i.e. chi distributed; E[s^2] = nu.

    Integer ``nu`` is realised literally as a sum of nu squared standard normals.
    """
    nu = model.nu
    if float(nu).is_integer():
        lead = () if size is None else tuple(np.atleast_1d(size))
        shape = lead + (int(nu),)
        s2 = np.sum(rng.standard_normal(shape) ** 2, axis=-1)
    else:
        s2 = rng.chisquare(nu, size=size)
    return np.sqrt(s2)


def complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """Circular complex normal with E|u|^2 = 1 (variance 1/2 per component)."""
    x = rng.standard_normal(tuple(np.atleast_1d(shape)) + (2,))
    return (x[..., 0] + 1j * x[..., 1]) * np.sqrt(0.5)


def sample_speckle(factor: np.ndarray, rng: np.random.Generator, count: int | None = None) -> np.ndarray:
    """g = R u with u ~ CN(0, I); returns shape (N,) or (count, N)."""
    N = factor.shape[0]
    if count is None:
        return factor @ complex_normal(rng, N)
    u = complex_normal(rng, (count, N))
    return u @ factor.T


@dataclass(frozen=True)
class ClutterBatch:
    cut: np.ndarray        # (N,)
    secondary: np.ndarray  # (K, N)
    textures: np.ndarray   # (K+1,), textures[0] belongs to the CUT

    @property
    def N(self) -> int:
        return self.cut.shape[0]

    @property
    def K(self) -> int:
        return self.secondary.shape[0]


class ClutterGenerator:
    """Caches the speckle Cholesky factor for a scenario and draws batches."""

    def __init__(self, scenario: ScenarioConfig):
        self.scenario = scenario
        self.texture = TextureModel(scenario.nu)
        self.factor = cholesky(toeplitz_covariance(scenario.rho, scenario.N))

    def draw(self, rng: np.random.Generator, K: int | None = None) -> ClutterBatch:
        K = self.scenario.K if K is None else int(K)
        if K < 0:
            raise ValueError("K must be >= 0")
        s = sample_texture(self.texture, rng, size=K + 1)
        g = sample_speckle(self.factor, rng, count=K + 1)
        c = s[:, None] * g
        return ClutterBatch(cut=c[0], secondary=c[1:], textures=s)


def generate_batch(scenario: ScenarioConfig, rng: np.random.Generator, K: int | None = None) -> ClutterBatch:
    """One CUT clutter vector plus K secondary vectors, all independent.

    ``K`` overrides the scenario's count (e.g. 0 for a CUT-only draw).
    """
    return ClutterGenerator(scenario).draw(rng, K)


# --------------------------------------------------------------------------
# Binary replay format:
#   magic b"CGCL", u32 version, u32 N, u32 K, u64 seed,
#   then (K+1) * N complex samples as little-endian float64 (re, im) pairs,
#   CUT first, followed by the K secondary vectors.
# --------------------------------------------------------------------------

_MAGIC = b"CGCL"
_HEADER = struct.Struct("<4sIIIQ")
_VERSION = 1


def dump_batch(batch: ClutterBatch, seed: int, path: str | Path) -> None:
    data = np.vstack([batch.cut[None, :], batch.secondary]).astype("<c16")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, batch.N, batch.K, int(seed)))
        fh.write(data.tobytes(order="C"))


def load_batch(path: str | Path) -> tuple[ClutterBatch, int]:
    """Read a batch written by ``dump_batch``; textures are not stored and come back as NaN."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError("truncated clutter file")
    magic, version, N, K, seed = _HEADER.unpack_from(raw)
    if magic != _MAGIC or version != _VERSION:
        raise ValueError("not a clutter replay file")
    expected = _HEADER.size + (K + 1) * N * 16
    if len(raw) != expected:
        raise ValueError(f"clutter file size {len(raw)} != expected {expected}")
    data = np.frombuffer(raw, dtype="<c16", offset=_HEADER.size).reshape(K + 1, N).astype(complex)
    return ClutterBatch(cut=data[0].copy(), secondary=data[1:].copy(), textures=np.full(K + 1, np.nan)), seed
