"""Command-line front end.

    seaqt run      --config FILE | --preset NAME   integrate, write trajectory + summary.json
    seaqt check    --config FILE | --preset NAME   conformance criteria 1-8
    seaqt onsager  --config FILE | --preset NAME   affinities and conductivities
    seaqt sweep    ... --param KEY --values a,b,c  independent runs in worker threads
    seaqt presets list | show NAME

Exit codes: 0 success, 1 runtime invariant breach, 2 configuration error.
Errors are printed to stderr as a single JSON object.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from . import config as cfgmod
from . import onsager
from .composite import CompositeSystem
from .config import ConfigError
from .criteria import run_criteria
from .integrator import IntegrationError, attractor_summary, integrate, trace_distance
from .opspace import InvalidStateError
from .single import UnsupportedStateError, equilibrium_target

OUT_ENV = "SEAQT_OUT"
DEFAULT_OUT = "seaqt-out"

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("seaqt")


def fmt(x) -> str:
    """Float with 17 significant digits; empty for missing values."""
    if x is None:
        return ""
    return f"{float(x):.17g}"


def _complex_matrix(M) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(M)]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return _complex_matrix(obj) if obj.ndim == 2 else [[float(z.real), float(z.imag)] for z in obj]
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        obj = obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None if np.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def write_json(path: Path, data) -> None:
    path.write_text(json.dumps(_jsonable(data), indent=2, allow_nan=False) + "\n", encoding="utf-8")


# ----------------------------------------------------------------------
# trajectory serialization
# ----------------------------------------------------------------------

def _local_energy_ops(sc):
    system = sc.system
    if not isinstance(system, CompositeSystem):
        return []
    comp = system.comp
    return [(f"energy_{comp.labels[J]}", comp.embed(h, J)) for J, h in enumerate(system.gens.local_hamiltonians)]


def _attractor(sc):
    """Maximum-entropy comparison state for single systems; None where none is defined."""
    if isinstance(sc.system, CompositeSystem) or sc.dynamics == "unitary":
        return None, "no unique attractor is defined for this dynamics"
    try:
        return equilibrium_target(sc.initial, sc.generators, sc.tol), ""
    except UnsupportedStateError as exc:
        return None, str(exc)


def trajectory_columns(sc) -> list[str]:
    gen = sc.generators
    cols = ["t", "entropy", "energy"]
    cols += [f"mean_G{i + 1}" for i in range(len(gen.extras))]
    cols += [f"eig_{k + 1}" for k in range(gen.dim)]
    cols += ["entropy_rate", "d_norm_sq"]
    n_tau = sc.system.comp.M if isinstance(sc.system, CompositeSystem) else 1
    cols += ["tau"] if n_tau == 1 else [f"tau_{sc.system.comp.labels[J]}" for J in range(n_tau)]
    cols += ["trace_distance_to_attractor"]
    if isinstance(sc.system, CompositeSystem):
        cols += ["sigma_AB"] + [name for name, _ in _local_energy_ops(sc)]
    return cols


def trajectory_rows(sc, traj, target) -> list[list]:
    local = _local_energy_ops(sc)
    rows = []
    for s in traj.samples:
        row = [s.t, s.entropy, s.energy, *s.means, *s.eigenvalues, s.entropy_rate, s.d_norm_sq, *s.taus]
        row.append(trace_distance(s.rho, target.rho) if target is not None else None)
        if isinstance(sc.system, CompositeSystem):
            row.append(s.sigma)
            row += [float(np.real(np.trace(s.rho @ op))) for _, op in local]
        rows.append(row)
    return rows


def write_trajectory(path: Path, columns, rows, fmt_kind: str) -> Path:
    if fmt_kind == "csv":
        out = path.with_suffix(".csv")
        with open(out, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for r in rows:
                w.writerow([fmt(x) for x in r])
    else:
        out = path.with_suffix(".json")
        write_json(out, {"columns": columns, "rows": [[None if x is None else float(x) for x in r] for r in rows]})
    return out


def read_trajectory_csv(path) -> tuple[list[str], np.ndarray]:
    """Parse a trajectory CSV back into (columns, float array); blanks become NaN."""
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        cols = next(r)
        data = [[float(x) if x else np.nan for x in row] for row in r]
    return cols, np.array(data, dtype=float)


# ----------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------

def _scenario(args, overrides=None):
    over = dict(overrides or {})
    if getattr(args, "seed", None) is not None:
        over = cfgmod._merge(over, {"analysis": {"seed": args.seed}})
    if getattr(args, "format", None):
        over = cfgmod._merge(over, {"output": {"format": args.format}})
    return cfgmod.load(args.config, args.preset, over)


def _out_dir(args, sc=None) -> Path:
    d = args.out or (sc.output.get("dir") if sc is not None else None) or os.environ.get(OUT_ENV) or DEFAULT_OUT
    p = Path(d)
    p.mkdir(parents=True, exist_ok=True)
    return p


def execute_run(sc, out: Path) -> dict:
    """Integrate one scenario and write its files; returns the summary."""
    prefix = sc.output.get("prefix", "trajectory")
    summary_name = "summary.json" if prefix == "trajectory" else f"{prefix}_summary.json"
    traj = integrate(sc.initial, sc.system, sc.run, sc.units, sc.tol)
    target, note = _attractor(sc)
    cols = trajectory_columns(sc)
    rows = trajectory_rows(sc, traj, target)
    path = write_trajectory(out / prefix, cols, rows, sc.output.get("format", "csv"))
    report = None
    if target is not None:
        report = attractor_summary(traj, sc.generators, sc.units, sc.tol).as_dict()
    final = traj.final
    summary = {
        "status": "ok",
        "scenario": sc.raw,
        "trajectory_file": path.name,
        "summary_file": summary_name,
        "columns": cols,
        "steps": traj.steps,
        "rejected_steps": traj.rejected_steps,
        "samples": len(traj.samples),
        "t_final": final.t,
        "terminal_state": {
            "rho": _complex_matrix(final.rho),
            "eigenvalues": final.eigenvalues,
            "entropy": final.entropy,
            "energy": final.energy,
            "means": list(final.means),
            "d_norm_sq": final.d_norm_sq,
            "sigma_AB": final.sigma,
        },
        "events": [{"t": e.t, "kind": e.kind, "detail": e.detail, "value": e.value} for e in traj.events],
        "max_drift": traj.max_drift,
        "attractor": report,
        "attractor_note": note,
    }
    write_json(out / summary_name, summary)
    return summary


def cmd_run(args) -> int:
    sc = _scenario(args)
    out = _out_dir(args, sc)
    summary = execute_run(sc, out)
    print(json.dumps({"status": "ok", "out": str(out), "files": [summary["trajectory_file"], summary["summary_file"]],
                      "t_final": summary["t_final"], "steps": summary["steps"]}))
    return EXIT_OK


def cmd_check(args) -> int:
    sc = _scenario(args)
    rng = np.random.default_rng(int(sc.analysis.get("seed", 0)))
    part = sc.system.partition if isinstance(sc.system, CompositeSystem) else None
    rep = run_criteria(sc.system, sc.initial, rng, int(sc.analysis.get("n_random", 12)), sc.units, sc.tol, part)
    data = rep.as_dict()
    data["scenario"] = sc.raw
    if args.out or os.environ.get(OUT_ENV):
        write_json(_out_dir(args, sc) / "check.json", data)
    for r in rep.results:
        margin = "" if r.margin is None else f"{r.margin:.3e}"
        print(f"criterion {r.number} [{r.status:>14}] {margin:>11}  {r.name}", file=sys.stderr)
    print(json.dumps(_jsonable({"variant": rep.variant, "flagged": rep.flagged,
                                "criteria": {str(r.number): r.status for r in rep.results}})))
    return EXIT_RUNTIME if (args.strict and rep.flagged) else EXIT_OK


def cmd_onsager(args) -> int:
    sc = _scenario(args)
    basis_kind = args.basis or sc.analysis.get("basis", "gell-mann")
    if basis_kind == "orthogonal-extension":
        if isinstance(sc.system, CompositeSystem):
            raise ConfigError("analysis.basis", "the orthogonal-extension basis is defined for single systems only")
        try:
            basis = onsager.ObservableBasis.orthogonal_extension(sc.initial, sc.generators, sc.tol)
        except UnsupportedStateError as exc:
            raise ConfigError("initial_state", str(exc)) from exc
    elif basis_kind == "gell-mann":
        basis = onsager.default_basis(sc.initial.dim)
    else:
        raise ConfigError("analysis.basis", f"unknown basis {basis_kind!r}")
    rep = onsager.onsager_report(sc.initial, sc.system, basis, sc.units, sc.tol)
    rep["scenario"] = sc.raw
    out = _out_dir(args, sc) if (args.out or os.environ.get(OUT_ENV)) else None
    if out is not None:
        write_json(out / "onsager.json", rep)
    print(json.dumps(_jsonable(rep)))
    return EXIT_OK


def cmd_sweep(args) -> int:
    base = cfgmod.load_file(args.config) if args.config else {}
    if args.preset:
        base = {**base, "preset": args.preset}
    sweep = base.pop("sweep", None) or {}
    param = args.param or sweep.get("param")
    values = [yaml.safe_load(v) for v in args.values.split(",")] if args.values else sweep.get("values")
    if not param or not values:
        raise ConfigError("sweep", "need a parameter (--param or sweep.param) and values (--values or sweep.values)")
    over = {}
    if args.seed is not None:
        over["analysis"] = {"seed": args.seed}
    if args.format:
        over["output"] = {"format": args.format}
    scenarios = [cfgmod.build(cfgmod._merge(cfgmod.set_path(base, param, v), over)) for v in values]
    root = _out_dir(args)

    def one(k):
        d = root / f"run_{k:03d}"
        d.mkdir(parents=True, exist_ok=True)
        try:
            s = execute_run(scenarios[k], d)
            return {"index": k, "value": values[k], "status": "ok", "dir": d.name, "t_final": s["t_final"],
                    "final_entropy": s["terminal_state"]["entropy"]}
        except IntegrationError as exc:
            err = {"index": k, "value": values[k], "status": "error", "dir": d.name, "error": "runtime",
                   "message": str(exc), "diagnostic": exc.diagnostic}
            write_json(d / "error.json", err)
            return err

    with ThreadPoolExecutor(max_workers=args.workers) as pool:
        results = list(pool.map(one, range(len(scenarios))))
    write_json(root / "sweep.json", {"param": param, "values": values, "runs": results})
    print(json.dumps(_jsonable({"param": param, "runs": [{k: r[k] for k in ("value", "status", "dir")}
                                                          for r in results]})))
    return EXIT_RUNTIME if any(r["status"] != "ok" for r in results) else EXIT_OK


def cmd_presets(args) -> int:
    if args.action == "list":
        for name in cfgmod.preset_names():
            print(f"{name:22s} {cfgmod.PRESETS[name].get('description', '')}")
        return EXIT_OK
    if not args.name:
        raise ConfigError("presets", "show needs a preset name")
    print(cfgmod.dump(cfgmod.preset_dict(args.name)), end="")
    return EXIT_OK


# ----------------------------------------------------------------------
# entry point
# ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="seaqt", description="Steepest-entropy-ascent quantum thermodynamics engine")
    p.add_argument("-v", "--verbose", action="store_true", help="log diagnostics to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, fmt_flag=True):
        sp.add_argument("--config", metavar="PATH", help="YAML scenario file")
        sp.add_argument("--preset", metavar="NAME", help="bundled scenario (see 'presets list')")
        sp.add_argument("--out", metavar="DIR", help=f"output directory (default: ${OUT_ENV} or ./{DEFAULT_OUT})")
        sp.add_argument("--seed", type=int, metavar="N", help="seed for randomized checks")
        if fmt_flag:
            sp.add_argument("--format", choices=("csv", "json"), help="trajectory format")

    sp = sub.add_parser("run", help="integrate a scenario")
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("check", help="run the conformance criteria")
    common(sp, fmt_flag=False)
    sp.add_argument("--strict", action="store_true", help="exit 1 when any criterion fails")
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("onsager", help="affinities, conductivities and reciprocity checks")
    common(sp, fmt_flag=False)
    sp.add_argument("--basis", choices=("gell-mann", "orthogonal-extension"))
    sp.set_defaults(func=cmd_onsager)

    sp = sub.add_parser("sweep", help="run a parameter sweep in worker threads")
    common(sp)
    sp.add_argument("--param", metavar="KEY", help="dotted config key, e.g. tau.value")
    sp.add_argument("--values", metavar="V1,V2,...", help="comma-separated values")
    sp.add_argument("--workers", type=int, default=4)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("presets", help="list or show bundled presets")
    sp.add_argument("action", choices=("list", "show"))
    sp.add_argument("name", nargs="?")
    sp.set_defaults(func=cmd_presets)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(json.dumps(exc.as_dict()), file=sys.stderr)
        return EXIT_CONFIG
    except (IntegrationError, InvalidStateError) as exc:
        diag = getattr(exc, "diagnostic", {})
        print(json.dumps(_jsonable({"error": "runtime", "message": str(exc), "diagnostic": diag})), file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
