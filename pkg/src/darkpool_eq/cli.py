"""Command-line front end.

Exit codes: 0 success, 1 usage or configuration error, 2 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import analysis
from .benchmark import BenchmarkEquilibrium, solve_benchmark
from .dualvenue import equilibrium_from_json, equilibrium_to_json, solve_dual
from .metrics import compute_metrics
from .model import ConfigError, DomainError, NumericError, load_config, paper_params
from .simulator import SimulationConfig, simulate, validate

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2
JOBS_ENV = "DARKPOOL_EQ_JOBS"


class UsageError(Exception):
    pass


def _default_jobs() -> int:
    raw = os.environ.get(JOBS_ENV, "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"{JOBS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise UsageError(f"{JOBS_ENV} must be a positive integer, got {raw!r}")
    return n


def _params(path):
    if path is None:
        return paper_params()
    try:
        return load_config(path)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None


def _clean(obj):
    # strict JSON: NaN and infinities become null
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def _dumps(doc) -> str:
    return json.dumps(_clean(doc), indent=2, sort_keys=True, allow_nan=False)


def _document(eq, params) -> dict:
    doc = json.loads(equilibrium_to_json(eq, params))
    doc["metrics"] = compute_metrics(eq, params).to_dict()
    return doc


def _write(text: str, out):
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


# --------------------------------------------------------------------------
# Commands


def cmd_solve(args) -> int:
    params = _params(args.config)
    models = analysis.MODELS if args.model == "both" else (args.model,)
    if args.format == "csv":
        # same row layout as a one-point sweep over log sigma_e
        spec = analysis.SweepSpec("sigma_e_log", (math.log(params.sigma_e),), params, models)
        res = analysis.SweepResult(spec, [analysis.solve_at(params, spec.grid[0], models)])
        for pt in res.points:
            if pt.errors:
                for m, e in pt.errors.items():
                    print(f"error: {m}: {e}", file=sys.stderr)
                return EXIT_NUMERIC
        _write(res.to_csv(), args.out)
        return EXIT_OK
    solvers = {"benchmark": solve_benchmark, "dual": solve_dual}
    docs = [_document(solvers[m](params), params) for m in models]
    _write(_dumps(docs if len(docs) > 1 else docs[0]) + "\n", args.out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    params = _params(args.config)
    if args.points < 1:
        raise UsageError("--points must be at least 1")
    grid = np.linspace(args.start, args.stop, args.points) if args.points > 1 else [args.start]
    models = analysis.MODELS if args.model == "both" else (args.model,)
    try:
        spec = analysis.SweepSpec(args.axis, tuple(grid), params, models)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    res = analysis.sweep(spec, jobs=args.jobs)
    _write(res.to_csv(), args.out)
    if res.failures:
        print(f"warning: {res.failures} failed grid points (see flags column)", file=sys.stderr)
    return EXIT_OK


def cmd_threshold(args) -> int:
    params = _params(args.config)
    sigma_e = params.sigma_e if args.sigma_e is None else args.sigma_e
    if not (sigma_e > 0 and math.isfinite(sigma_e)):
        raise DomainError("--sigma-e must be positive and finite")
    r = analysis.threshold_sigma_bar(sigma_e, params, jobs=args.jobs)
    print(f"sigma_bar_v = {r.sigma_bar_v!r}")
    print(f"sigma_bar = {r.sigma_bar!r}")
    if r.open_interval:
        print(f"note: no crossing on the scanned range {r.scanned}", file=sys.stderr)
    if args.out:
        _write(_dumps(r.to_dict()) + "\n", args.out)
    return EXIT_OK


def _load_equilibrium(path):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    doc = json.loads(text)
    if isinstance(doc, list):
        doc = next((d for d in doc if d.get("model") == "dual"), doc[0])
        text = json.dumps(doc)
    if doc.get("model") == "benchmark":
        names = BenchmarkEquilibrium.__dataclass_fields__
        return BenchmarkEquilibrium(**{k: (math.nan if doc[k] is None else doc[k])
                                       for k in names})
    return equilibrium_from_json(text)


def cmd_simulate(args) -> int:
    params = _params(args.config)
    if args.eq:
        try:
            eq = _load_equilibrium(args.eq)
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"cannot load equilibrium {args.eq}: {exc}") from None
    else:
        eq = solve_dual(params) if args.model == "dual" else solve_benchmark(params)
    try:
        cfg = SimulationConfig(args.agents, args.reps, args.seed, args.antithetic, args.jobs)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = simulate(eq, params, cfg)
    rep = validate(out, eq, params)
    print(rep.summary())
    if args.out:
        doc = json.loads(out.to_json())
        doc["validation"] = rep.to_dict()
        _write(_dumps(doc) + "\n", args.out)
    if args.records:
        _write(out.records_csv(), args.records)
    if args.strict and not rep.passed:
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_figure(args) -> int:
    if args.name not in analysis.FIGURES:
        raise UsageError(f"unknown figure {args.name!r}; choose from {', '.join(analysis.FIGURES)}")
    params = _params(args.config)
    res = analysis.run_figure(args.name, params, jobs=args.jobs)
    _write(res.to_csv(), args.out)
    if args.gnuplot:
        if analysis.FIGURES[args.name].kind != "sweep":
            raise UsageError("gnuplot scripts are available for sweep presets only")
        _write(analysis.gnuplot_script(args.name, args.out or "figure.csv"), args.gnuplot)
    return EXIT_OK


# --------------------------------------------------------------------------
# Parser


def build_parser(default_jobs: int = 1) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="darkpool-eq", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        if config_required:
            sp.add_argument("config", help="flat key = value configuration file")
        else:
            sp.add_argument("--config", help="configuration file (default: reference parameters)")
        sp.add_argument("--jobs", type=int, default=default_jobs,
                        help=f"worker processes (default from {JOBS_ENV}, else 1)")

    sp = sub.add_parser("solve", help="solve equilibria and print documents")
    common(sp)
    sp.add_argument("--model", choices=("benchmark", "dual", "both"), default="both")
    sp.add_argument("--format", choices=("json", "csv"), default="json")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("sweep", help="comparative statics along one axis")
    common(sp)
    sp.add_argument("--axis", choices=analysis.AXES, required=True)
    sp.add_argument("--from", dest="start", type=float, required=True)
    sp.add_argument("--to", dest="stop", type=float, required=True)
    sp.add_argument("--points", type=int, required=True)
    sp.add_argument("--model", choices=("benchmark", "dual", "both"), default="both")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("threshold", help="sigma_v threshold for price discovery")
    common(sp)
    sp.add_argument("--sigma-e", type=float)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_threshold)

    sp = sub.add_parser("simulate", help="agent-based cross-validation")
    common(sp)
    sp.add_argument("--eq", help="equilibrium JSON document (default: solve)")
    sp.add_argument("--model", choices=("benchmark", "dual"), default="dual")
    sp.add_argument("--reps", type=int, default=200)
    sp.add_argument("--agents", type=int, default=1000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--antithetic", action="store_true")
    sp.add_argument("--strict", action="store_true", help="exit 2 when validation fails")
    sp.add_argument("--out", help="outcome and validation JSON")
    sp.add_argument("--records", help="per-replication CSV")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("figure", help="run a named figure preset")
    sp.add_argument("name")
    common(sp, config_required=False)
    sp.add_argument("--out")
    sp.add_argument("--gnuplot", help="also write a gnuplot script here")
    sp.set_defaults(func=cmd_figure)
    return p


def main(argv=None) -> int:
    try:
        parser = build_parser(_default_jobs())
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (UsageError, ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericError, ArithmeticError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        trace = getattr(exc, "trace", None)
        if trace:
            print(f"trace: {trace!r}"[:2000], file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
