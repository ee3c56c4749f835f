"""Steering vectors, target model, scenario configuration and the SNR mapping."""
from __future__ import annotations

import math
import re
from dataclasses import asdict, dataclass, fields, replace
from enum import Enum
from pathlib import Path

import numpy as np


class Hypothesis(str, Enum):
    H0 = "H0"
    H1 = "H1"


def steering_vector(phase_increment: float, N: int) -> np.ndarray:
    """[1, e^{j phi}, ..., e^{j (N-1) phi}]."""
    if N < 1:
        raise ValueError("N must be >= 1")
    return np.exp(1j * phase_increment * np.arange(N))


def steering_matrix(phases, N: int) -> np.ndarray:
    """Rows are steering vectors for each phase in ``phases``; shape (len(phases), N)."""
    phases = np.atleast_1d(np.asarray(phases, dtype=float))
    return np.exp(1j * np.outer(phases, np.arange(N)))


@dataclass(frozen=True)
class MismatchInterval:
    theta: float
    beta: float

    def __post_init__(self):
        if not (0.0 <= self.beta < math.pi):
            raise ValueError(f"beta must lie in [0, pi), got {self.beta}")

    @property
    def bounds(self) -> tuple[float, float]:
        return self.theta - self.beta, self.theta + self.beta

    def contains(self, phi: float) -> bool:
        return abs(self.theta - phi) <= self.beta


@dataclass(frozen=True)
class TargetModel:
    alpha: complex
    actual_phase: float


def snr_to_alpha(snr_linear: float, nu: float, p, phase: float = 0.0) -> complex:
    """Target amplitude giving SNR = |alpha|^2 ||p||^2 / (N E[s^2]) with E[s^2] = nu."""
    if snr_linear < 0:
        raise ValueError("snr_linear must be nonnegative")
    p = np.asarray(p)
    N = p.shape[0]
    pn2 = float(np.vdot(p, p).real)
    if pn2 == 0.0:
        raise ValueError("steering vector has zero norm")
    mag = math.sqrt(snr_linear * N * nu / pn2)
    return mag * complex(math.cos(phase), math.sin(phase))


def snr_from_alpha(alpha: complex, nu: float, p) -> float:
    p = np.asarray(p)
    return abs(alpha) ** 2 * float(np.vdot(p, p).real) / (p.shape[0] * nu)


def db_to_linear(snr_db: float) -> float:
    return 10.0 ** (snr_db / 10.0)


def assemble_cut(hypothesis: Hypothesis | str, target: TargetModel | None, clutter) -> np.ndarray:
    """Cell-under-test vector: clutter alone under H0, alpha p(phi) + clutter under H1."""
    clutter = np.asarray(clutter, dtype=complex)
    if Hypothesis(hypothesis) is Hypothesis.H0 or target is None:
        return clutter.copy()
    p = steering_vector(target.actual_phase, clutter.shape[-1])
    return target.alpha * p + clutter


# --------------------------------------------------------------------------
# Scenario configuration
# --------------------------------------------------------------------------

class ConfigError(ValueError):
    """Invalid configuration; ``line`` is the 1-based line number when known."""

    def __init__(self, msg: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(where + msg)


# config-file key -> ScenarioConfig field
CONFIG_KEYS = {
    "n_antennas": "N",
    "k_secondary": "K",
    "theta_rad": "theta",
    "beta_rad": "beta",
    "phi_rad": "phi",
    "rho": "rho",
    "nu": "nu",
    "pfa_target": "pfa_target",
    "rng_seed": "rng_seed",
    "alpha_phase_rad": "alpha_phase",
}
_INT_FIELDS = {"N", "K", "rng_seed"}


@dataclass(frozen=True)
class ScenarioConfig:
    N: int = 8
    K: int = 32
    theta: float = math.pi / 3
    beta: float = math.pi / 6
    phi: float = math.pi / 3
    rho: float = 0.4
    nu: float = 3.0
    pfa_target: float = 1e-2
    rng_seed: int = 0
    # None draws arg(alpha) uniformly on [0, 2 pi) per trial
    alpha_phase: float | None = None

    def __post_init__(self):
        if self.N < 1:
            raise ConfigError(f"n_antennas must be >= 1, got {self.N}")
        if self.K < self.N:
            raise ConfigError(f"k_secondary ({self.K}) must be >= n_antennas ({self.N})")
        if not (0.0 <= self.rho < 1.0):
            raise ConfigError(f"rho must lie in [0, 1), got {self.rho}")
        if not (0.0 <= self.beta < math.pi):
            raise ConfigError(f"beta_rad must lie in [0, pi), got {self.beta}")
        if self.nu < 1:
            raise ConfigError(f"nu must be >= 1, got {self.nu}")
        if not (0.0 < self.pfa_target < 1.0):
            raise ConfigError(f"pfa_target must lie in (0, 1), got {self.pfa_target}")
        if not (0 <= self.rng_seed < 2**64):
            raise ConfigError(f"rng_seed must be a 64-bit unsigned integer, got {self.rng_seed}")

    @property
    def interval(self) -> MismatchInterval:
        return MismatchInterval(self.theta, self.beta)

    def with_(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)

    def to_flat(self) -> dict:
        """Config-key view; a random target phase is spelled ``"random"``."""
        d = asdict(self)
        out = {key: d[name] for key, name in CONFIG_KEYS.items()}
        if out["alpha_phase_rad"] is None:
            out["alpha_phase_rad"] = "random"
        return out

    @classmethod
    def from_flat(cls, values: dict, lines: dict | None = None, path: str | None = None) -> "ScenarioConfig":
        lines = lines or {}
        kwargs = {}
        for key, val in values.items():
            if key not in CONFIG_KEYS:
                raise ConfigError(f"unknown key {key!r}", lines.get(key), path)
            name = CONFIG_KEYS[key]
            try:
                kwargs[name] = _coerce(name, val)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key!r}: {exc}", lines.get(key), path) from None
        try:
            return cls(**kwargs)
        except ConfigError as exc:
            # attribute the failure to the first offending key we can find
            msg = str(exc)
            for key in values:
                if msg.startswith(key):
                    raise ConfigError(msg, lines.get(key), path) from None
            raise ConfigError(msg, None, path) from None


def _coerce(name: str, val):
    if name == "alpha_phase" and (val is None or (isinstance(val, str) and val.strip().lower() == "random")):
        return None
    if isinstance(val, str):
        val = parse_number(val)
    if name in _INT_FIELDS:
        if isinstance(val, float):
            if not val.is_integer():
                raise ValueError(f"expected an integer, got {val!r}")
            val = int(val)
        return int(val)
    return float(val)


_PI_EXPR = re.compile(
    r"^\s*(?:(?P<num>[-+]?\d+(?:\.\d*)?)\s*\*\s*)?(?P<sign>-)?pi\s*(?:/\s*(?P<den>\d+(?:\.\d*)?))?\s*$"
)


def parse_number(text: str):
    """Parse an int, a float, or a multiple of pi such as ``pi/3`` or ``5*pi/24``."""
    s = text.strip()
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        pass
    m = _PI_EXPR.match(s)
    if m is None:
        raise ValueError(f"not a number: {text!r}")
    val = math.pi
    if m.group("num"):
        val *= float(m.group("num"))
    if m.group("sign"):
        val = -val
    if m.group("den"):
        val /= float(m.group("den"))
    return val


def read_flat_config(path: str | Path) -> tuple[dict, dict]:
    """Read ``key = value`` lines (``#`` comments, blank lines ignored).

    Returns (values, line_numbers) with values left as raw strings.
    """
    values: dict[str, str] = {}
    lines: dict[str, int] = {}
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", path=str(path)) from None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line or (line.startswith("[") and line.endswith("]")):
            continue
        if "=" in line:
            key, _, val = line.partition("=")
        elif ":" in line:
            key, _, val = line.partition(":")
        else:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno, str(path))
        key = key.strip().strip('"')
        val = val.strip().strip('"').strip("'")
        if not key:
            raise ConfigError("missing key", lineno, str(path))
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", lineno, str(path))
        values[key] = val
        lines[key] = lineno
    return values, lines


def load_scenario(path: str | Path, base: ScenarioConfig | None = None) -> ScenarioConfig:
    values, lines = read_flat_config(path)
    base_flat = (base or ScenarioConfig()).to_flat()
    base_flat.update(values)
    return ScenarioConfig.from_flat(base_flat, lines, str(path))


def dump_scenario(cfg: ScenarioConfig, path: str | Path) -> None:
    out = []
    for key, val in cfg.to_flat().items():
        out.append(f"{key} = {val if isinstance(val, str) else repr(val)}")
    Path(path).write_text("\n".join(out) + "\n")


def scenario_field_names() -> list[str]:
    return [f.name for f in fields(ScenarioConfig)]
