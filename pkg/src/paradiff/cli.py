"""Command-line front end: ``paradiff solve|probe|diagnose|version``.

Artifacts are rendered in memory first and only written once the whole
command has succeeded, so a failing run never leaves partial output.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from . import nonlinearity as nl
from .diagnostics import PROBE_TAGS, mizohata_integral, probe_estimate
from .errors import (AdmissionError, ConvergenceError, GridMismatchError, NonlinearityError, ParadiffError,
                     ResolutionError, ScenarioError, ThresholdError, UnknownTagError)
from .iteration import SolverConfig, solve, substitution_residual
from .norms import l2hs_norm, norm_report
from .serialization import canonical_json, read_field_csv, space_time_csv
from .spectral_core import Grid, SpectralField

logger = logging.getLogger(__name__)

__all__ = ["Scenario", "load_scenario", "initial_data", "main", "EXIT_CODES"]

EXIT_CODES = {
    "OK": 0,
    "ERROR": 1,
    "USAGE": 2,
    "IO": 3,
    "PARSE": 4,
    "NONLINEARITY": 5,
    "THRESHOLD": 6,
    "ADMISSION": 7,
    "CONVERGENCE": 8,
    "UNKNOWN_TAG": 9,
    "RESOLUTION": 10,
}

_ERROR_KINDS = [
    (ScenarioError, "PARSE"),
    (NonlinearityError, "NONLINEARITY"),
    (ThresholdError, "THRESHOLD"),
    (AdmissionError, "ADMISSION"),
    (ConvergenceError, "CONVERGENCE"),
    (UnknownTagError, "UNKNOWN_TAG"),
    (ResolutionError, "RESOLUTION"),
    (GridMismatchError, "RESOLUTION"),
]

PROFILES = ("sech2", "sech", "gaussian", "random", "zero", "file")

_SOLVER_KEYS = {"s", "theta", "k", "k_max", "delta", "outer_tol", "outer_max", "inner_tol",
                "inner_max", "n_cap", "seed", "battery_random", "check_admission", "use_reference"}
_DATA_KEYS = {"profile", "amplitude", "width", "center", "seed", "decay", "path"}
_OUTPUT_KEYS = {"snapshots", "trace", "norms", "summary", "every", "norms_with_y"}
_TOP_KEYS = {"nonlinearity", "initial_data", "grid", "n_times", "solver", "output", "name"}


@dataclass
class Scenario:
    name: str
    F: nl.PolynomialNonlinearity
    data: dict
    grid: Grid | None
    n_times: int
    solver: dict
    output: dict = field(default_factory=dict)
    base_dir: Path = Path(".")

    def config(self, threads: int = 1, seed: int | None = None) -> SolverConfig:
        kw = dict(self.solver)
        if seed is not None:
            kw["seed"] = seed
        return SolverConfig(n_times=self.n_times, threads=threads, **kw)


def _require_mapping(obj, where):
    if not isinstance(obj, dict):
        raise ScenarioError(f"{where} must be a mapping")
    return obj


def _check_keys(obj, allowed, where):
    extra = set(obj) - allowed
    if extra:
        raise ScenarioError(f"unknown keys in {where}: {sorted(extra)}")


def _positive(obj, key, where, kind=float, allow_none=False):
    val = obj.get(key)
    if val is None and allow_none:
        return None
    try:
        if isinstance(val, bool):
            raise TypeError
        num = kind(val)
    except (TypeError, ValueError):
        raise ScenarioError(f"{where}.{key} must be a number") from None
    if kind is int and num != val:
        raise ScenarioError(f"{where}.{key} must be an integer")
    if not num > 0:
        raise ScenarioError(f"{where}.{key} must be positive")
    return num


def load_scenario(path) -> Scenario:
    """Parse and validate a YAML scenario file (see README for the grammar)."""
    path = Path(path)
    try:
        text = path.read_text()
    except UnicodeDecodeError as exc:
        raise ScenarioError(f"{path}: not a text file") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc
    raw = _require_mapping(raw, "scenario")
    _check_keys(raw, _TOP_KEYS, "scenario")
    for key in ("nonlinearity", "initial_data"):
        if key not in raw:
            raise ScenarioError(f"missing required key {key!r}")

    mons = raw["nonlinearity"]
    if not isinstance(mons, list):
        raise ScenarioError("nonlinearity must be a list of {c, a0, a1, a2} records")
    records = []
    for i, m in enumerate(mons):
        m = _require_mapping(m, f"nonlinearity[{i}]")
        _check_keys(m, {"c", "a0", "a1", "a2"}, f"nonlinearity[{i}]")
        if "c" not in m:
            raise ScenarioError(f"nonlinearity[{i}] needs a coefficient c")
        c = m["c"]
        if isinstance(c, list) and len(c) == 2:
            c = complex(float(c[0]), float(c[1]))
        elif isinstance(c, (int, float)) and not isinstance(c, bool):
            c = float(c)
        else:
            raise ScenarioError(f"nonlinearity[{i}].c must be a number or [re, im]")
        alpha = []
        for key in ("a0", "a1", "a2"):
            a = m.get(key, 0)
            if isinstance(a, bool) or not isinstance(a, int) or a < 0:
                raise ScenarioError(f"nonlinearity[{i}].{key} must be a nonnegative integer")
            alpha.append(a)
        records.append(nl.Monomial(c, tuple(alpha)))
    F = nl.validate(records)

    data = dict(_require_mapping(raw["initial_data"], "initial_data"))
    _check_keys(data, _DATA_KEYS, "initial_data")
    profile = data.get("profile")
    if profile not in PROFILES:
        raise ScenarioError(f"initial_data.profile must be one of {PROFILES}")
    if profile == "file":
        if not isinstance(data.get("path"), str):
            raise ScenarioError("initial_data.path is required for the file profile")
    elif profile != "zero":
        data["amplitude"] = float(data.get("amplitude", 1.0))
        data["width"] = _positive({"width": data.get("width", 1.0)}, "width", "initial_data")
        data["center"] = float(data.get("center", 0.0))

    grid = None
    if "grid" in raw:
        g = _require_mapping(raw["grid"], "grid")
        _check_keys(g, {"n_points", "length"}, "grid")
        n = _positive(g, "n_points", "grid", int)
        length = _positive(g, "length", "grid")
        try:
            grid = Grid(n, length)
        except ValueError as exc:
            raise ScenarioError(f"grid: {exc}") from exc
    elif profile != "file":
        raise ScenarioError("missing required key 'grid'")

    n_times = _positive(raw, "n_times", "scenario", int) if "n_times" in raw else 64

    solver = dict(_require_mapping(raw.get("solver", {}) or {}, "solver"))
    _check_keys(solver, _SOLVER_KEYS, "solver")
    for key in ("s", "theta", "delta", "outer_tol", "inner_tol"):
        if key in solver:
            solver[key] = _positive(solver, key, "solver", allow_none=(key == "theta"))
    for key in ("k_max", "outer_max", "inner_max", "n_cap", "battery_random"):
        if key in solver:
            solver[key] = _positive(solver, key, "solver", int, allow_none=(key == "n_cap"))
    if "k" in solver and solver["k"] is not None:
        if isinstance(solver["k"], bool) or not isinstance(solver["k"], int) or solver["k"] < 0:
            raise ScenarioError("solver.k must be a nonnegative integer")
    s = solver.get("s", SolverConfig.s)
    if not s > float(F.s0):
        raise ThresholdError(f"s = {s} must exceed s0 = {F.s0}", code="S_BELOW_THRESHOLD")
    nl.gamma_exponent(s, F.lam)
    nl.sigma_exponent(s, F)

    output = dict(_require_mapping(raw.get("output", {}) or {}, "output"))
    _check_keys(output, _OUTPUT_KEYS, "output")
    for key in ("snapshots", "trace", "norms", "summary"):
        if key in output and not isinstance(output[key], str):
            raise ScenarioError(f"output.{key} must be a file name")
    if "every" in output:
        output["every"] = _positive(output, "every", "output", int)
    name = str(raw.get("name", path.stem))
    return Scenario(name, F, data, grid, n_times, solver, output, path.parent)


def initial_data(sc: Scenario) -> SpectralField:
    d = sc.data
    profile = d["profile"]
    if profile == "file":
        p = Path(d["path"])
        u = read_field_csv(p if p.is_absolute() else sc.base_dir / p)
        if sc.grid is not None:
            sc.grid.check_same(u.grid)
        return u
    grid = sc.grid
    if profile == "zero":
        return SpectralField.zeros(grid)
    y = (grid.x - d["center"]) / d["width"]
    amp = d["amplitude"]
    if profile == "sech2":
        vals = amp / np.cosh(y) ** 2
    elif profile == "sech":
        vals = amp / np.cosh(y)
    elif profile == "gaussian":
        vals = amp * np.exp(-y ** 2)
    else:
        rng = np.random.default_rng(int(d.get("seed", 0)))
        hat = np.fft.fft(rng.standard_normal(grid.n_points))
        hat *= (1.0 + np.abs(grid.xi)) ** (-float(d.get("decay", 3.0)))
        noise = np.real(np.fft.ifft(hat))
        noise /= max(np.max(np.abs(noise)), 1e-300)
        vals = amp * np.exp(-y ** 2) * noise
    return SpectralField.from_values(grid, vals)


def _write_artifacts(out_dir: Path, files: dict):
    """Write all rendered files; on failure remove whatever was written."""
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    try:
        for name, text in files.items():
            tmp = out_dir / (name + ".tmp")
            tmp.write_text(text)
            written.append(tmp)
        for tmp in written:
            tmp.replace(tmp.with_suffix(""))
    except OSError:
        for tmp in written:
            tmp.unlink(missing_ok=True)
        raise


def run_solve(args) -> int:
    sc = load_scenario(args.scenario)
    u0 = initial_data(sc)
    config = sc.config(threads=args.threads, seed=args.seed)
    result = solve(u0, sc.F, config)
    out = sc.output
    res = substitution_residual(result)
    summary = {
        "scenario": sc.name,
        "k": result.k,
        "lambda": str(sc.F.lam),
        "s0": str(sc.F.s0),
        "s": config.s,
        "converged": result.trace.converged,
        "outer_iterations": len(result.trace.records),
        "time_span": result.context.time_span,
        "rescaled_grid": {"n_points": result.rescaled.grid.n_points,
                          "length": result.rescaled.grid.length},
        "initial_l2hs": l2hs_norm(u0, config.s),
        "residual": res,
        "nonlinearity": [{"c": m.coeff, "alpha": list(m.alpha)} for m in sc.F.monomials],
    }
    if config.use_reference:
        from .reference import split_step

        ref = split_step(result.rescaled.initial, sc.F, result.rescaled.times, result.k)
        summary["reference_difference"] = (ref - result.rescaled).sup_l2()
    rep = norm_report(result.rescaled, config.s, with_y=bool(out.get("norms_with_y", False)))
    files = {
        out.get("snapshots", "solution.csv"): space_time_csv(result.solution, out.get("every", 1)),
        out.get("trace", "trace.jsonl"): result.trace.to_jsonl(),
        out.get("norms", "norms.json"): canonical_json(rep.to_dict()) + "\n",
        out.get("summary", "summary.json"): canonical_json(summary) + "\n",
    }
    _write_artifacts(Path(args.out), files)
    if not result.trace.converged:
        print("error: OUTER_MAX_ITERATIONS: outer iteration did not reach its tolerance", file=sys.stderr)
        return EXIT_CODES["CONVERGENCE"]
    print(canonical_json({"converged": True, "k": result.k, "residual": res["relative"]}))
    return 0


def run_probe(args) -> int:
    if args.tag is None:
        raise UnknownTagError("--tag is required; known tags: " + ", ".join(PROBE_TAGS))
    result = probe_estimate(args.tag, trials=args.trials, seed=args.seed or 0, threads=args.threads)
    text = canonical_json(result.to_dict()) + "\n"
    if args.out:
        _write_artifacts(Path(args.out), {"probe.json": text})
    else:
        sys.stdout.write(text)
    return 0


def diagnose_report(u: SpectralField, s: float) -> dict:
    rep = norm_report(u, s).to_dict()
    rep["mizohata"] = mizohata_integral(u)
    rep["sup"] = u.sup()
    rep["l2"] = u.norm()
    return rep


def run_diagnose(args) -> int:
    if args.field is None:
        raise ScenarioError("--field is required for diagnose")
    u = read_field_csv(args.field)
    text = canonical_json(diagnose_report(u, args.s)) + "\n"
    if args.out:
        _write_artifacts(Path(args.out), {"diagnose.json": text})
    else:
        sys.stdout.write(text)
    return 0


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="paradiff", description="Paradifferential solver for dispersive equations.")
    p.add_argument("--verbose", "-v", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="worker threads (1 gives the bit-reproducible baseline)")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default=None, help="output directory")

    sp = sub.add_parser("solve", help="run a scenario file")
    sp.add_argument("--scenario", required=True)
    common(sp)
    sp = sub.add_parser("probe", help="empirical constant of one estimate")
    sp.add_argument("--tag", default=None, help="estimate tag, e.g. est:bil")
    sp.add_argument("--trials", type=int, default=100)
    common(sp)
    sp = sub.add_parser("diagnose", help="Mizohata integral and norms of a field file")
    sp.add_argument("--field", default=None, help="CSV with header x,re,im")
    sp.add_argument("--s", type=float, default=4.0)
    common(sp)
    sub.add_parser("version", help="print the package version")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "version":
        print(__version__)
        return 0
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CODES["USAGE"]
    if args.command == "solve" and args.out is None:
        args.out = "."
    try:
        if args.command == "solve":
            return run_solve(args)
        if args.command == "probe":
            if args.trials < 1:
                print("error: --trials must be >= 1", file=sys.stderr)
                return EXIT_CODES["USAGE"]
            return run_probe(args)
        return run_diagnose(args)
    except OSError as exc:
        print(f"error: IO: {exc}", file=sys.stderr)
        return EXIT_CODES["IO"]
    except ParadiffError as exc:
        kind = next((k for cls, k in _ERROR_KINDS if isinstance(exc, cls)), "ERROR")
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CODES[kind]


if __name__ == "__main__":
    sys.exit(main())
