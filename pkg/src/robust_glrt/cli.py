"""Command-line entry point: ``robust-glrt <subcommand> [options]``.

Settings resolve as flag > config file > default. A config file is either a
flat ``key = value`` file or a manifest JSON written by a previous run, whose
``config`` object is reused verbatim so the run can be reproduced.
"""
from __future__ import annotations

import argparse
import json
import math
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import harness as H
from .clutter import load_batch
from .covariance import ConvergenceError, DegenerateDataError
from .detectors import DETECTORS, ENGINES, SolverError, adaptive_detect
from .numerics import FactorizationError
from .signal_model import CONFIG_KEYS, ConfigError, ScenarioConfig, parse_number, read_flat_config
from .svg import line_plot
from .trigpoly import CoefficientError, build_arc_cone

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
SUBCOMMANDS = ("calibrate", "pd-curve", "cfar-sweep", "mismatch-study", "k-sweep", "detect", "oracle-check")

PAPER_RHOS = (0.1, 0.4, 0.8, 0.9, 0.99, 0.999)
PAPER_MISMATCHES = (-math.pi / 10, 0.0, math.pi / 15, math.pi / 6, 5 * math.pi / 24)

# harness-level config keys: key -> (kind, flag)
RUN_KEYS = {
    "trials": ("count", "--trials"),
    "calibration_trials": ("count", "--calibration-trials"),
    "snr_db": ("list", "--snr-db"),
    "detector": ("detector", "--detector"),
    "mismatch": ("list", "--mismatch"),
    "rho_list": ("list", "--rho-list"),
    "k_list": ("intlist", "--k-list"),
    "engine": ("engine", "--engine"),
    "threshold": ("real", "--threshold"),
    "grid_points": ("count", "--grid-points"),
    "instances": ("count", "--instances"),
    "input": ("text", "--input"),
}
SCENARIO_FLAGS = {
    "n_antennas": "--n-antennas",
    "k_secondary": "--k-secondary",
    "theta_rad": "--theta",
    "beta_rad": "--beta",
    "phi_rad": "--phi",
    "rho": "--rho",
    "nu": "--nu",
    "pfa_target": "--pfa",
    "rng_seed": "--seed",
    "alpha_phase_rad": "--alpha-phase",
}
# which run keys each subcommand accepts
ACCEPTS = {
    "calibrate": {"trials", "detector", "engine", "grid_points"},
    "pd-curve": {"trials", "calibration_trials", "snr_db", "detector", "mismatch", "engine", "threshold",
                 "grid_points"},
    "cfar-sweep": {"trials", "detector", "rho_list", "engine", "grid_points"},
    "mismatch-study": {"trials", "calibration_trials", "snr_db", "detector", "mismatch", "engine", "grid_points"},
    "k-sweep": {"trials", "calibration_trials", "snr_db", "detector", "k_list", "engine", "grid_points"},
    "detect": {"calibration_trials", "detector", "engine", "threshold", "input", "grid_points"},
    "oracle-check": {"instances"},
}


def parse_list(text) -> list[float]:
    """``a:b:step`` (inclusive), comma/space separated numbers, or a JSON list."""
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    if isinstance(text, (int, float)):
        return [float(text)]
    s = str(text).strip().strip("[]")
    if s.count(":") == 2 and "," not in s:
        a, b, step = (float(parse_number(p)) for p in s.split(":"))
        if step <= 0 or b < a:
            raise ValueError(f"bad range {text!r}")
        n = int(math.floor((b - a) / step + 1e-9)) + 1
        return [a + i * step for i in range(n)]
    items = [p for p in s.replace(",", " ").split() if p]
    if not items:
        raise ValueError("empty list")
    return [float(parse_number(p)) for p in items]


def _coerce_run(key: str, val):
    kind = RUN_KEYS[key][0]
    if kind == "count":
        v = parse_number(val) if isinstance(val, str) else val
        if float(v) != int(float(v)) or int(float(v)) < 1:
            raise ValueError(f"expected a positive integer, got {val!r}")
        return int(float(v))
    if kind == "real":
        return float(parse_number(val) if isinstance(val, str) else val)
    if kind == "list":
        return parse_list(val)
    if kind == "intlist":
        out = parse_list(val)
        if any(v != int(v) for v in out):
            raise ValueError(f"expected integers, got {val!r}")
        return [int(v) for v in out]
    if kind == "detector":
        v = str(val)
        if v not in DETECTORS + ("both",):
            raise ValueError(f"expected one of {DETECTORS + ('both',)}, got {v!r}")
        return v
    if kind == "engine":
        v = str(val)
        if v not in ENGINES:
            raise ValueError(f"expected one of {ENGINES}, got {v!r}")
        return v
    return str(val)


@dataclass
class CommandSpec:
    subcommand: str
    scenario: ScenarioConfig
    run: dict
    out: Path
    threads: int
    svg: bool = False
    config_path: str | None = None
    sources: dict = field(default_factory=dict)

    @property
    def options(self) -> H.RunOptions:
        return H.RunOptions(engine=self.run["engine"], threads=self.threads,
                            grid_points=self.run["grid_points"])

    @property
    def detectors(self) -> tuple:
        d = self.run["detector"]
        return DETECTORS if d == "both" else (d,)

    def resolved_config(self) -> dict:
        cfg = dict(self.scenario.to_flat())
        cfg.update({k: v for k, v in self.run.items() if v is not None})
        return cfg


def _defaults(sub: str, paper_scale: bool) -> dict:
    pfa = 1e-3 if paper_scale else 1e-2
    trials = {"calibrate": 100_000, "cfar-sweep": 50_000}.get(sub, 10_000)
    return {
        "pfa_target": pfa,
        "trials": trials,
        "calibration_trials": max(100_000, math.ceil(100 / pfa)),
        "snr_db": [float(s) for s in range(0, 26)],
        "detector": "theta-mle" if sub in ("cfar-sweep", "k-sweep", "detect") else "both",
        "mismatch": list(PAPER_MISMATCHES) if sub == "mismatch-study" else None,
        "rho_list": list(PAPER_RHOS),
        "k_list": [16, 32, 64],
        "engine": "grid",
        "threshold": None,
        "grid_points": H.DEFAULT_GRID_POINTS,
        "instances": 1000,
        "input": None,
    }


def _load_config(path: str) -> tuple[dict, dict]:
    text = Path(path).read_text() if Path(path).is_file() else None
    if text is not None and text.lstrip().startswith("{"):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc.msg}", exc.lineno, path) from None
        cfg = doc.get("config", doc)
        if not isinstance(cfg, dict):
            raise ConfigError("manifest 'config' must be an object", None, path)
        return dict(cfg), {}
    return read_flat_config(path)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robust-glrt",
                                     description="Robust GLRT detection experiments in compound-Gaussian clutter.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subs = parser.add_subparsers(dest="subcommand", required=True)
    for sub in SUBCOMMANDS:
        p = subs.add_parser(sub)
        p.add_argument("--config", help="flat key=value file or a previous run's manifest.json")
        p.add_argument("--out", default=".", help="output directory (default: current)")
        p.add_argument("--threads", type=int, default=0, help="worker threads (default: all cores)")
        p.add_argument("--paper-scale", action="store_true", help="Pfa 1e-3 defaults instead of 1e-2")
        for key, flag in SCENARIO_FLAGS.items():
            p.add_argument(flag, dest=f"s_{key}", default=None, metavar=key.upper())
        for key in sorted(ACCEPTS[sub]):
            p.add_argument(RUN_KEYS[key][1], dest=f"r_{key}", default=None, metavar=key.upper())
        if sub in ("pd-curve", "mismatch-study", "k-sweep", "cfar-sweep"):
            p.add_argument("--svg", action="store_true", help="also write an SVG plot")
    return parser


def resolve(args: argparse.Namespace) -> CommandSpec:
    sub = args.subcommand
    vals = _defaults(sub, args.paper_scale)
    sources = {k: "default" for k in vals}
    lines: dict = {}
    path = args.config
    file_vals: dict = {}
    if path:
        file_vals, lines = _load_config(path)
    scen_raw = ScenarioConfig().to_flat()
    scen_raw["pfa_target"] = vals.pop("pfa_target")
    for key, val in file_vals.items():
        if key in CONFIG_KEYS:
            scen_raw[key] = val
        elif key in RUN_KEYS:
            # keys meant for other subcommands (e.g. in a manifest) are ignored
            if key not in ACCEPTS[sub]:
                continue
            try:
                vals[key] = _coerce_run(key, val)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key!r}: {exc}", lines.get(key), path) from None
        else:
            raise ConfigError(f"unknown key {key!r}", lines.get(key), path)
        sources[key] = "file"
    for key in CONFIG_KEYS:
        v = getattr(args, f"s_{key}")
        if v is not None:
            scen_raw[key] = v
            sources[key] = "flag"
            lines.pop(key, None)
    for key in ACCEPTS[sub]:
        v = getattr(args, f"r_{key}")
        if v is not None:
            try:
                vals[key] = _coerce_run(key, v)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{RUN_KEYS[key][1]}: {exc}") from None
            sources[key] = "flag"
    scenario = ScenarioConfig.from_flat(scen_raw, lines, path)
    run = {k: v for k, v in vals.items() if k in ACCEPTS[sub]}
    if sub in ("pd-curve",) and run.get("mismatch") is not None and len(run["mismatch"]) != 1:
        raise ConfigError("--mismatch takes a single value for pd-curve")
    if args.threads < 0:
        raise ConfigError("--threads must be >= 0")
    return CommandSpec(sub, scenario, run, Path(args.out), args.threads, getattr(args, "svg", False),
                       path, sources)


# --------------------------------------------------------------------------
# subcommand bodies; each returns (outputs, extra manifest fields)
# --------------------------------------------------------------------------

def _calibrations(spec: CommandSpec, scenario: ScenarioConfig, trials: int) -> dict:
    return H.calibrate_thresholds(scenario, spec.detectors, trials, spec.options)


def _cmd_calibrate(spec: CommandSpec):
    cal = _calibrations(spec, spec.scenario, spec.run["trials"])
    out = spec.out / "calibration.csv"
    H.write_calibration_csv(out, cal.values())
    for c in cal.values():
        print(f"{c.detector}: threshold={c.threshold!r} achieved_pfa={c.achieved_pfa:.4g} "
              f"ci=[{c.achieved_pfa_ci[0]:.4g}, {c.achieved_pfa_ci[1]:.4g}]")
    return [out], {"thresholds": {d: c.threshold for d, c in cal.items()}}


def _thresholds(spec: CommandSpec, scenario: ScenarioConfig, outputs: list, name="calibration.csv") -> dict:
    if spec.run.get("threshold") is not None:
        if len(spec.detectors) != 1:
            raise ConfigError("--threshold requires a single --detector")
        return {spec.detectors[0]: spec.run["threshold"]}
    cal = _calibrations(spec, scenario, spec.run["calibration_trials"])
    path = spec.out / name
    H.write_calibration_csv(path, cal.values())
    outputs.append(path)
    return {d: c.threshold for d, c in cal.items()}


def _emit_curves(spec: CommandSpec, curves: list, outputs: list, title: str) -> None:
    path = spec.out / "curves.csv"
    H.write_curves_csv(path, curves)
    outputs.append(path)
    if spec.svg:
        svg = spec.out / "curves.svg"
        series = [((c.label + " " if c.label else "") + c.detector, list(c.snr_db_grid), list(c.pd)) for c in curves]
        line_plot(series, svg, title=title, xlabel="SNR (dB)", ylabel="Pd", ylim=(0, 1))
        outputs.append(svg)
    for c in curves:
        print(f"{c.label + ' ' if c.label else ''}{c.detector}: Pd=0.9 at {c.crossing(0.9):.3f} dB "
              f"(flagged {c.flagged})")


def _cmd_pd_curve(spec: CommandSpec):
    sc = spec.scenario
    if spec.run.get("mismatch"):
        sc = sc.with_(phi=sc.theta - spec.run["mismatch"][0])
    outputs: list = []
    thr = _thresholds(spec, spec.scenario, outputs)
    curves = H.pd_curves(sc, thr, spec.run["snr_db"], spec.run["trials"], spec.options)
    _emit_curves(spec, list(curves.values()), outputs, "Pd vs SNR")
    return outputs, {"thresholds": thr}


def _cmd_mismatch(spec: CommandSpec):
    outputs: list = []
    thr = _thresholds(spec, spec.scenario, outputs)
    fam = H.mismatch_study(spec.scenario, thr, spec.run["mismatch"], spec.run["snr_db"], spec.run["trials"],
                           spec.options)
    curves = [c for cv in fam.values() for c in cv.values()]
    _emit_curves(spec, curves, outputs, "Pd vs SNR, mismatch study")
    return outputs, {"thresholds": thr}


def _cmd_k_sweep(spec: CommandSpec):
    outputs: list = []
    res = H.k_sensitivity(spec.scenario, spec.detectors, spec.run["k_list"], "recalibrate", spec.run["snr_db"],
                          spec.run["trials"], spec.run["calibration_trials"], spec.options)
    cals = [c for cal, _ in res.values() for c in cal.values()]
    path = spec.out / "calibration.csv"
    H.write_calibration_csv(path, cals)
    outputs.append(path)
    curves = [c for _, cv in res.values() for c in cv.values()]
    _emit_curves(spec, curves, outputs, "Pd vs SNR, varied K")
    return outputs, {"thresholds": {f"{c.detector}@K={c.scenario.K}": c.threshold for c in cals}}


def _cmd_cfar(spec: CommandSpec):
    tables = H.cfar_sweep(spec.scenario, spec.detectors, spec.run["rho_list"], spec.run["trials"],
                          options=spec.options)
    path = spec.out / "cfar.csv"
    H.write_cfar_csv(path, tables, spec.scenario, spec.run["engine"])
    outputs = [path]
    if spec.svg:
        svg = spec.out / "cfar.svg"
        line_plot([(f"{t.detector} rho={t.rho:g}", list(t.thresholds), list(t.pfa)) for t in tables], svg,
                  title="Pfa vs threshold", xlabel="threshold", ylabel="Pfa", logy=True)
        outputs.append(svg)
    return outputs, {}


def _cmd_detect(spec: CommandSpec):
    if not spec.run.get("input"):
        raise ConfigError("detect needs --input <clutter replay file>")
    try:
        batch, seed = load_batch(spec.run["input"])
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot load {spec.run['input']}: {exc}") from None
    sc = spec.scenario.with_(N=batch.N, K=batch.K)
    outputs: list = []
    thr = _thresholds(spec, sc, outputs)
    results = {}
    for d in spec.detectors:
        o = adaptive_detect(batch.cut, batch.secondary, sc, thr[d], d, spec.run["engine"])
        results[d] = {"statistic": o.statistic, "threshold": o.threshold, "decision": o.decision.value,
                      "phi_hat": o.phi_hat, "engine": o.engine, "diagnostics": o.diagnostics}
        print(f"{d}: statistic={o.statistic!r} threshold={o.threshold!r} -> {o.decision.value}")
    path = spec.out / "detection.json"
    path.write_text(json.dumps({"input": spec.run["input"], "file_seed": seed, "results": results}, indent=2))
    outputs.append(path)
    return outputs, {}


def _cmd_oracle(spec: CommandSpec):
    recs = H.oracle_sweep(spec.run["instances"], spec.scenario.rng_seed, spec.scenario.N, keep_payload=True)
    worst = max(recs, key=lambda r: r.rel_gap)
    cone = build_arc_cone(spec.scenario.N, 2 * spec.scenario.N, worst.theta, worst.beta)
    sol = worst.solution
    doc = {
        "instances": len(recs),
        "max_rel_gap": worst.rel_gap,
        "non_optimal": sum(r.status != "optimal" for r in recs),
        "worst": {
            "index": worst.index, "theta": worst.theta, "beta": worst.beta, "cond": worst.cond,
            "x": [[c.real, c.imag] for c in worst.coeffs.x], "y": [[c.real, c.imag] for c in worst.coeffs.y],
            "cone": {"N": cone.N, "M_dft": cone.M_dft, "W": list(cone.W.shape), "W1": list(cone.W1.shape)},
            "t_grid": worst.t_grid, "phi_grid": worst.phi_grid, "t_sdp": worst.t_sdp,
            "status": sol.status, "gap": sol.gap, "primal_res": sol.primal_res, "dual_res": sol.dual_res,
            "iterations": sol.iterations,
            "X1_min_eig": float(np.linalg.eigvalsh(sol.X1)[0]), "X2_min_eig": float(np.linalg.eigvalsh(sol.X2)[0]),
        },
        "records": [{"index": r.index, "rel_gap": r.rel_gap, "status": r.status, "iterations": r.iterations}
                    for r in recs],
    }
    path = spec.out / "oracle.json"
    path.write_text(json.dumps(doc, indent=1))
    print(f"max relative SDP/grid gap over {len(recs)} instances: {worst.rel_gap:.3e}")
    extra = {"max_rel_gap": worst.rel_gap}
    if worst.rel_gap > 1e-6 or doc["non_optimal"]:
        extra["failed"] = True
    return [path], extra


COMMANDS = {
    "calibrate": _cmd_calibrate,
    "pd-curve": _cmd_pd_curve,
    "cfar-sweep": _cmd_cfar,
    "mismatch-study": _cmd_mismatch,
    "k-sweep": _cmd_k_sweep,
    "detect": _cmd_detect,
    "oracle-check": _cmd_oracle,
}


def run(spec: CommandSpec) -> int:
    spec.out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    outputs, extra = COMMANDS[spec.subcommand](spec)
    manifest = {
        "subcommand": spec.subcommand,
        "config": spec.resolved_config(),
        "sources": spec.sources,
        "config_path": spec.config_path,
        "engine": spec.run.get("engine", "grid"),
        "threads": spec.options.workers if "engine" in spec.run else 1,
        "versions": {"robust_glrt": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "wall_time_s": time.perf_counter() - t0,
        "outputs": [str(p) for p in outputs],
        **extra,
    }
    (spec.out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return EXIT_NUMERIC if extra.get("failed") else EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = resolve(args)
        if "engine" in spec.run:
            spec.options  # validate early
        return run(spec)
    except (ConfigError, H.InsufficientTrialsError) as exc:
        print(f"robust-glrt: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, ConvergenceError, DegenerateDataError, FactorizationError, CoefficientError,
            np.linalg.LinAlgError) as exc:
        print(f"robust-glrt: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
