"""Command-line harness: ``heatlab green-check | simulate | converge <check>``.

Every run resolves a single JSON config (built-in defaults, then ``--config``,
then flags), writes its data files, and finishes by writing ``manifest.json``
into the output directory.  Exit statuses are the machine contract:

    0 pass, 1 fail, 2 usage / IO / precondition error, 3 capacity guard,
    4 inconclusive.
"""
from __future__ import annotations

import argparse
import copy
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import __version__
from .errors import CapacityError, ConvergenceError
from .green import LEMMA_B1_TARGETS, green_image, green_spectral, lemma_b1_fits
from .grid import GridSpec
from .lab import (
    FAIL,
    INCONCLUSIVE,
    PASS,
    ConvergenceReport,
    GreenSection,
    IndicatorRectangle,
    RectangleSpec,
    SmoothSine,
    ZeroFunction,
    donsker_moment_check,
    fdd_convergence,
    hypothesis2_check,
    hypothesis3_check,
    increment_moments,
    manthey_conditions_report,
    manthey_report,
)
from .mild import DEFAULT_WHITE_MODES, DriftSpec, InitialData, solve_quasilinear
from .noise import MAX_EXPECTED_POINTS, NoiseSpec, SeedPolicy, ZLaw

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_CAPACITY, EXIT_INCONCLUSIVE = 0, 1, 2, 3, 4
STATUS_EXIT = {PASS: EXIT_PASS, FAIL: EXIT_FAIL, INCONCLUSIVE: EXIT_INCONCLUSIVE}
MANIFEST = "manifest.json"
CHECKS = ("fdd", "hyp2", "hyp3", "donsker", "increments", "manthey", "conditions")

_DOMAIN = {"variant": "IndicatorRectangle", "s0": 0.0, "s1": 1.0, "x0": 0.0, "x1": 1.0}

DEFAULTS = {
    "green-check": {
        "tol": 1e-9,
        "times": [1e-3, 1e-2, 1e-1, 1.0],
        "lattice": 33,
        "alpha": 2.0,
        "anchor": [0.5, 0.5],
        "scales": [1e-4, 3.1622776601683795e-4, 1e-3, 3.1622776601683795e-3, 1e-2,
                   3.1622776601683795e-2, 1e-1],
        "slope_window": 0.05,
    },
    "simulate": {
        "grid": {"t_max": 0.5, "nt": 64, "nx": 64},
        "noise": {"model": "white"},
        "drift": {"name": "zero"},
        "u0": {"name": "zero"},
        "replicas": 2,
        "modes": None,
        "white_modes": DEFAULT_WHITE_MODES,
    },
    "fdd": {
        "noise": {"model": "kac_stroock"},
        "n_list": [4, 16, 64, 256],
        "eval_points": [[0.5, 0.5]],
        "replicas": 2000,
        "threshold": 0.05,
    },
    "hyp2": {
        "noise": {"model": "kac_stroock"},
        "p": 1.25,
        "n_list": [4, 16, 64, 256],
        "functions": [{"variant": "IndicatorRectangle", "s0": 0.25, "s1": 0.5, "x0": 0.25, "x1": 0.5}],
        "replicas": 2000,
        "t_max": 0.5,
        "growth_factor": 4.0,
    },
    "hyp3": {
        "noise": {"model": "kac_stroock"},
        "m": 2,
        "rect": {"s0": 0.3, "s1": 0.5, "x0": 0.3, "x1": 0.5, "k": 2.0},
        "f": _DOMAIN,
        "n_list": [4, 16, 64],
        "replicas": 10000,
        "stability": 5.0,
    },
    "donsker": {
        "m": 4,
        "z_law": "rademacher",
        "n_list": [4, 16, 64],
        "functions": [{"variant": "SmoothSine", "j": 1, "k": 1, "t_max": 1.0}],
        "replicas": 4000,
        "t_max": 1.0,
        "stability": 3.0,
    },
    "increments": {
        "noise": {"model": "white"},
        "m": 2,
        "axis": "space",
        "anchor": [0.5, 0.5],
        "separations": [1 / 256, 1 / 128, 1 / 64, 1 / 32, 1 / 16],
        "replicas": 4000,
        "target_slope": None,
        "window": 0.1,
    },
    "manthey": {
        "n_list": [8, 32, 128, 512],
        "T": 1.0,
        "ratio_target": None,
    },
    "conditions": {
        "noise": {"model": "donsker"},
        "n_list": [4, 16, 64],
        "replicas": 500,
        "T": 1.0,
    },
}

DRIFTS = {
    "zero": lambda p: DriftSpec.zero(),
    "linear": lambda p: DriftSpec.linear(float(p.get("c", -1.0))),
}
INITIAL_DATA = {
    "zero": lambda p: InitialData.zero(),
    "sine": lambda p: InitialData.sine(int(p.get("k", 1)), float(p.get("amplitude", 1.0))),
    "parabola": lambda p: InitialData.parabola(),
}
TEST_FUNCTIONS = {
    "IndicatorRectangle": IndicatorRectangle,
    "SmoothSine": SmoothSine,
    "GreenSection": GreenSection,
    "ZeroFunction": ZeroFunction,
}


class UsageError(Exception):
    """Bad or missing configuration; maps to exit status 2."""


# --------------------------------------------------------------------------
# Configuration
# --------------------------------------------------------------------------

@dataclass
class RunConfig:
    command: str
    params: dict
    seed: int
    output_dir: str
    threads: int = 1

    def __post_init__(self):
        if not 0 <= self.seed < 2 ** 64:
            raise UsageError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if self.threads < 1:
            raise UsageError("--threads must be >= 1")
        reps = self.params.get("replicas")
        if reps is not None and (int(reps) != reps or reps < 1):
            raise UsageError(f"replicas must be an integer >= 1, got {reps}")
        nl = self.params.get("n_list")
        if nl is not None:
            if not nl or any(int(v) != v for v in nl) or any(b <= a for a, b in zip(nl, nl[1:])):
                raise UsageError(f"n_list must be strictly increasing integers, got {nl}")

    def echo(self) -> dict:
        """Resolved config for the manifest (thread count excluded: it never changes results)."""
        return {"command": self.command, "seed": self.seed, "params": self.params}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if k not in out:
            raise UsageError(f"unknown config key {k!r}; expected one of {sorted(out)}")
        out[k] = v
    return out


def load_config(command: str, path: str | None, seed: int | None, output: str | None,
                threads: int | None) -> RunConfig:
    raw: dict = {}
    if path is not None:
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise UsageError("config must be a JSON object")
    raw = dict(raw)
    file_seed = raw.pop("seed", 0)
    file_out = raw.pop("output_dir", "heatlab-out")
    file_threads = raw.pop("threads", 1)
    params = _merge(DEFAULTS[command], raw)
    missing = [k for k, v in params.items() if v is None and k not in ("modes", "ratio_target", "target_slope")]
    if missing:
        raise UsageError(f"missing parameters for {command}: {', '.join(missing)}")
    return RunConfig(command, params, int(seed if seed is not None else file_seed),
                     output if output is not None else file_out,
                     int(threads if threads is not None else file_threads))


def parse_noise(d) -> NoiseSpec:
    if not isinstance(d, dict) or "model" not in d:
        raise UsageError("noise must be an object with a 'model' key")
    return NoiseSpec.from_dict(d)


def parse_function(d):
    d = dict(d)
    variant = d.pop("variant", None)
    if variant not in TEST_FUNCTIONS:
        raise UsageError(f"unknown test function {variant!r}; expected one of {sorted(TEST_FUNCTIONS)}")
    return TEST_FUNCTIONS[variant](**d)


def _family(noise: dict, n_list) -> list:
    return [NoiseSpec.from_dict({**noise, "n": n}) for n in n_list]


# --------------------------------------------------------------------------
# Output
# --------------------------------------------------------------------------

def prepare_output(path: str):
    try:
        os.makedirs(path, exist_ok=True)
        probe = os.path.join(path, ".write-probe")
        with open(probe, "w") as fh:
            fh.write("")
        os.remove(probe)
        stale = os.path.join(path, MANIFEST)
        if os.path.exists(stale):
            os.remove(stale)
    except OSError as exc:
        raise UsageError(f"output directory {path!r} is not writable: {exc}") from exc


def write_text(path: str, text: str):
    with open(path, "w", newline="") as fh:
        fh.write(text)


def write_manifest(cfg: RunConfig, files: list, status: dict, started: float):
    manifest = {
        "artifact": "heatlab",
        "version": __version__,
        "config": cfg.echo(),
        "files": sorted(files),
        "status": status,
        "wall_clock_seconds": round(time.perf_counter() - started, 3),
    }
    tmp = os.path.join(cfg.output_dir, MANIFEST + ".tmp")
    write_text(tmp, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, os.path.join(cfg.output_dir, MANIFEST))


def _log(msg: str):
    print(msg, file=sys.stderr)


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def cmd_green_check(cfg: RunConfig) -> int:
    p = cfg.params
    started = time.perf_counter()
    tol = float(p["tol"])
    if not tol > 0:
        raise UsageError("tol must be positive")
    L = int(p["lattice"])
    pts = np.arange(1, L + 1) / (L + 1)
    X, Y = np.meshgrid(pts, pts, indexing="ij")
    worst = 0.0
    for t in p["times"]:
        worst = max(worst, float(np.max(np.abs(green_spectral(t, X, Y) - green_image(t, X, Y)))))
    rows = [("series_max_abs_diff", worst, 0.0, tol, PASS if worst <= tol else FAIL)]
    t0, x0 = p["anchor"]
    fits = lemma_b1_fits(float(p["alpha"]), t=float(t0), x=float(x0), scales=p["scales"])
    win = float(p["slope_window"])
    for kind, target in LEMMA_B1_TARGETS.items():
        target = target if p["alpha"] == 2.0 else (3 - p["alpha"]) / (1 if kind == "space_incr" else 2)
        slope = fits[kind].slope
        rows.append((f"slope_{kind}", slope, target, win, PASS if abs(slope - target) <= win else FAIL))
    lines = ["quantity,value,reference,tolerance,status"]
    lines += [f"{q},{v!r},{r!r},{tl!r},{s}" for q, v, r, tl, s in rows]
    write_text(os.path.join(cfg.output_dir, "green_check.csv"), "\n".join(lines) + "\n")
    status = PASS if all(r[4] == PASS for r in rows) else FAIL
    write_manifest(cfg, ["green_check.csv"], {"green-check": status}, started)
    for q, v, r, tl, s in rows:
        _log(f"{s:4s} {q} = {v:.6g} (reference {r:g}, tolerance {tl:g})")
    return STATUS_EXIT[status]


def cmd_simulate(cfg: RunConfig) -> int:
    p = cfg.params
    started = time.perf_counter()
    grid = GridSpec(**p["grid"])
    noise = parse_noise(p["noise"])
    if noise.model == "kac_stroock" and noise.n * grid.t_max > MAX_EXPECTED_POINTS:
        raise CapacityError(f"n*T = {noise.n * grid.t_max:.3g} exceeds the Poisson point guard")
    drift_d, u0_d = dict(p["drift"]), dict(p["u0"])
    try:
        b = DRIFTS[drift_d.pop("name")](drift_d)
        u0 = INITIAL_DATA[u0_d.pop("name")](u0_d)
    except KeyError as exc:
        raise UsageError(f"unknown drift or initial datum {exc}; drifts {sorted(DRIFTS)}, "
                         f"initial data {sorted(INITIAL_DATA)}") from exc
    policy = SeedPolicy(cfg.seed)
    M = int(p["replicas"])

    def one(r):
        return solve_quasilinear(noise, u0, b, grid, policy.stream(r, 7), modes=p["modes"],
                                 white_modes=int(p["white_modes"]))

    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as ex:
            fields = list(ex.map(one, range(M)))
    else:
        fields = [one(r) for r in range(M)]
    width = max(4, len(str(M - 1)))
    files = []
    for r, fld in enumerate(fields):
        name = f"field_r{r:0{width}d}.csv"
        fld.to_csv(os.path.join(cfg.output_dir, name))
        files.append(name)
    write_manifest(cfg, files, {"simulate": PASS}, started)
    _log(f"wrote {M} field(s) on {grid.nt}x{grid.nx} to {cfg.output_dir}")
    return EXIT_PASS


def _run_check(check: str, p: dict, seed: int, threads: int) -> ConvergenceReport:
    M = int(p.get("replicas", 1))
    if check == "fdd":
        return fdd_convergence(_family(p["noise"], p["n_list"]), p["eval_points"], M=M, seed=seed,
                               threads=threads, threshold=float(p["threshold"]))
    if check == "hyp2":
        noise = parse_noise({**p["noise"], "n": p["n_list"][0]} if p["noise"]["model"] != "white" else p["noise"])
        fs = [parse_function(f) for f in p["functions"]]
        return hypothesis2_check(noise, fs, float(p["p"]), p["n_list"], M=M, seed=seed, threads=threads,
                                 t_max=float(p["t_max"]), growth_factor=float(p["growth_factor"]))
    if check == "hyp3":
        noise = parse_noise({**p["noise"], "n": p["n_list"][0]})
        r = p["rect"]
        rect = RectangleSpec(r["s0"], r["s1"], r["x0"], r["x1"], k=float(r.get("k", 2.0)))
        return hypothesis3_check(noise, parse_function(p["f"]), rect, int(p["m"]), p["n_list"], M=M,
                                 seed=seed, threads=threads, stability=float(p["stability"]))
    if check == "donsker":
        fs = [parse_function(f) for f in p["functions"]]
        return donsker_moment_check(p["n_list"], int(p["m"]), fs, M=M, z_law=ZLaw(p["z_law"]), seed=seed,
                                    threads=threads, t_max=float(p["t_max"]), stability=float(p["stability"]))
    if check == "increments":
        noise = parse_noise(p["noise"])
        res = increment_moments(noise, int(p["m"]), p["axis"], p["anchor"], p["separations"], M=M,
                                seed=seed, threads=threads)
        rep = ConvergenceReport("increments", metadata={"noise": noise.to_dict(), "m": p["m"], "axis": p["axis"],
                                                        "anchor": p["anchor"], "r_squared": res.fit.r_squared})
        n = noise.n or 0
        for h, v, se in zip(res.separations, res.moments, res.stderr):
            rep.add(n, f"moment(h={h:.6g})", v, se, M)
        slope_se = _slope_stderr(res.separations, res.moments, res.stderr)
        rep.add(n, "slope", res.fit.slope, slope_se, M)
        target = p["target_slope"]
        if target is None:
            # E|dX|^2 ~ |dx| in space and |dt|^{1/2} in time; Gaussian m-th moments scale as its m/2 power
            target = (1.0 if p["axis"] == "space" else 0.5) * int(p["m"]) / 2
        rep.metadata["target_slope"] = target
        ok = abs(res.fit.slope - float(target)) <= float(p["window"])
        return rep.finalize(PASS if ok else FAIL)
    if check == "manthey":
        return manthey_report(p["n_list"], float(p["T"]), p["ratio_target"])
    if check == "conditions":
        noise = parse_noise(p["noise"] if p["noise"]["model"] == "white" else {**p["noise"], "n": p["n_list"][0]})
        return manthey_conditions_report(noise, p["n_list"], M=M, seed=seed, threads=threads, T=float(p["T"]))
    raise UsageError(f"unknown check {check!r}; expected one of {CHECKS}")


def _slope_stderr(h, v, se) -> float:
    """Delta-method standard error of the log-log slope from per-point standard errors."""
    lx = np.log(h)
    w = lx - lx.mean()
    sd_log = np.asarray(se) / np.asarray(v)
    return float(math.sqrt(np.sum((w / np.sum(w * w)) ** 2 * sd_log ** 2)))


def cmd_converge(cfg: RunConfig, check: str) -> int:
    started = time.perf_counter()
    rep = _run_check(check, cfg.params, cfg.seed, cfg.threads)
    rep.to_csv(os.path.join(cfg.output_dir, f"{check}.csv"))
    rep.to_json(os.path.join(cfg.output_dir, f"{check}.json"),
                manifest={"artifact": "heatlab", "version": __version__, "config": cfg.echo()})
    write_manifest(cfg, [f"{check}.csv", f"{check}.json"], {check: rep.status}, started)
    _log(f"{rep.status} converge {check} ({len(rep.rows)} rows) -> {cfg.output_dir}")
    return STATUS_EXIT[rep.status]


# --------------------------------------------------------------------------
# Entry point
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (defaults are built in)")
    common.add_argument("--seed", type=int, help="master seed, unsigned 64-bit")
    common.add_argument("--threads", type=int, help="replica worker threads (results do not depend on it)")
    common.add_argument("--output", help="output directory")
    ap = argparse.ArgumentParser(prog="heatlab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"heatlab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("green-check", parents=[common], help="kernel series agreement and integral exponents")
    sub.add_parser("simulate", parents=[common], help="sample solution fields to CSV")
    conv = sub.add_parser("converge", parents=[common], help="run one convergence check")
    conv.add_argument("check", choices=CHECKS)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PASS if exc.code == 0 else EXIT_USAGE
    key = args.check if args.command == "converge" else args.command
    try:
        cfg = load_config(key, args.config, args.seed, args.output, args.threads)
        prepare_output(cfg.output_dir)
        if args.command == "green-check":
            return cmd_green_check(cfg)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        return cmd_converge(cfg, args.check)
    except CapacityError as exc:
        _log(f"capacity: {exc}")
        return EXIT_CAPACITY
    except (UsageError, ValueError, TypeError, KeyError) as exc:
        _log(f"error: {exc}")
        if args.command == "converge":
            _log(ap.format_usage().strip())
        return EXIT_USAGE
    except ConvergenceError as exc:
        _log(f"picard: {exc}")
        return EXIT_FAIL
    except OSError as exc:
        _log(f"io: {exc}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
