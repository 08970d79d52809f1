"""Command-line front end.

``goafem run`` performs one adaptive solve and writes its history CSV;
``goafem study FILE`` runs a batch described by a small key = value file
and writes one CSV per run plus a summary.

Exit codes: 0 success, 2 configuration error, 3 solver failure.
"""
import argparse
import csv
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from .driver import AdaptiveRunError, RunConfig, adaptive_solve, mean_rate
from .marking import normalize_strategy
from .problem import PROBLEMS

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3

SUMMARY_COLUMNS = ("name", "problem", "degree", "strategy", "theta", "status", "levels",
                   "n_elements", "n_dofs", "product", "goal_value", "goal_error",
                   "rate_product", "rate_goal_error")

log = logging.getLogger("goafem")


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------- run


def _add_run_arguments(p):
    p.add_argument("--problem", required=True, choices=sorted(PROBLEMS))
    p.add_argument("--degree", type=int, default=1)
    p.add_argument("--theta", type=float, default=0.5)
    p.add_argument("--strategy", default="goafem", choices=("goafem", "afem", "afem-plus"))
    stop = p.add_mutually_exclusive_group()
    stop.add_argument("--max-dofs", type=int, help="stop once the space has this many DOFs "
                      "(default 100000 when no stop rule is given)")
    stop.add_argument("--max-levels", type=int, help="stop after this many levels")
    stop.add_argument("--product-tol", type=float, help="stop once the estimator product "
                      "drops to this value")
    p.add_argument("--out", type=Path, help="history CSV path (default: standard output)")
    p.add_argument("--vtk-every", type=int, default=0, metavar="K",
                   help="write the mesh with indicators every K levels (0: never)")
    p.add_argument("--no-timing", action="store_true",
                   help="write wall_ms = 0 so that repeated runs give identical files")


def cmd_run(args):
    vtk_prefix = None
    if args.vtk_every:
        if args.out is None:
            stem = f"{args.problem}_m{args.degree}"
        else:
            stem = str(args.out.with_suffix("") if args.out.suffix == ".csv" else args.out)
        vtk_prefix = str(stem)
    try:
        config = RunConfig(problem=args.problem, degree=args.degree, theta=args.theta,
                           strategy=args.strategy, max_dofs=args.max_dofs,
                           max_levels=args.max_levels, product_tol=args.product_tol,
                           vtk_prefix=vtk_prefix, vtk_every=args.vtk_every,
                           record_timing=not args.no_timing)
    except ValueError as exc:
        print(f"goafem run: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    status = EXIT_OK
    try:
        history = adaptive_solve(config)
    except AdaptiveRunError as exc:
        print(f"goafem run: solver failure: {exc}", file=sys.stderr)
        history, status = exc.history, EXIT_SOLVER
    if args.out is None:
        sys.stdout.write(history.to_csv())
    else:
        history.to_csv(args.out)
        if history.records:
            last = history.records[-1]
            print(f"{len(history)} levels, {last.n_elements} elements, {last.n_dofs} dofs, "
                  f"goal {last.goal_value:.15g}, product {last.product:.3e} -> {args.out}")
    return status


# ------------------------------------------------------------------------- study

RUN_KEYS = {
    "name": str, "problem": str, "degree": int, "theta": float, "strategy": str,
    "max_dofs": int, "max_levels": int, "product_tol": float, "vtk_every": int,
}
STOP_KEYS = {"max_dofs", "max_levels", "product_tol"}
STUDY_KEYS = {"output": str, "emit_vtk": "bool", "emit_summary": "bool", "timing": "bool"}


@dataclass
class StudySpec:
    """A batch of runs sharing an output directory."""

    runs: list
    output: Path = Path("study")
    emit_vtk: bool = False
    emit_summary: bool = True
    timing: bool = True
    names: list = field(default_factory=list)

    def __post_init__(self):
        if not self.runs:
            raise ConfigError("the study has no [run] sections")
        seen = set()
        for name in self.names:
            if name in seen:
                raise ConfigError(f"duplicate run name {name!r} (output files must be unique)")
            seen.add(name)


def _parse_bool(text, lineno):
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"line {lineno}: expected a boolean, got {text!r}")


def _convert(key, text, kind, lineno):
    if kind == "bool":
        return _parse_bool(text, lineno)
    try:
        return kind(text)
    except ValueError:
        raise ConfigError(f"line {lineno}: {key} expects {kind.__name__}, got {text!r}") from None


def parse_study(text):
    """Parse a study file.

    Lines are ``key = value``; ``#`` starts a comment; each ``[run]`` header
    opens a run.  Keys before the first header are study options
    (``output``, ``emit_vtk``, ``emit_summary``, ``timing``) or defaults for
    every run.
    """
    options, defaults, runs = {}, {}, []
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if line != "[run]":
                raise ConfigError(f"line {lineno}: unknown section {line!r}")
            current = {"_line": lineno}
            runs.append(current)
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key or not value:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        if key in RUN_KEYS:
            target = defaults if current is None else current
            target[key] = _convert(key, value, RUN_KEYS[key], lineno)
        elif key in STUDY_KEYS and current is None:
            options[key] = _convert(key, value, STUDY_KEYS[key], lineno)
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")

    configs, names = [], []
    timing = options.get("timing", True)
    for run in runs:
        lineno = run.pop("_line")
        # a stop rule given in the run replaces any default stop rule
        override = bool(STOP_KEYS & run.keys())
        merged = {k: v for k, v in defaults.items() if not (override and k in STOP_KEYS)}
        merged.update(run)
        if "problem" not in merged:
            raise ConfigError(f"line {lineno}: run has no problem")
        if "strategy" in merged:
            try:
                merged["strategy"] = normalize_strategy(merged["strategy"])
            except ValueError as exc:
                raise ConfigError(f"line {lineno}: {exc}") from None
        name = merged.pop("name", None) or _default_name(merged)
        if os.sep in name or name in ("", ".", "..", "summary"):
            raise ConfigError(f"line {lineno}: run name {name!r} is not usable as a file name")
        try:
            configs.append(RunConfig(name=name, record_timing=timing, **merged))
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
        names.append(name)
    return StudySpec(configs, Path(options.get("output", "study")),
                     options.get("emit_vtk", False), options.get("emit_summary", True),
                     timing, names)


def _default_name(values):
    strategy = values.get("strategy", "goafem")
    degree, theta = values.get("degree", 1), values.get("theta", 0.5)
    return f"{values['problem']}_m{degree}_{strategy}_theta{theta}"


def _execute(config):
    """Worker body: returns (name, history, error message or None)."""
    try:
        return config.name, adaptive_solve(config), None
    except AdaptiveRunError as exc:
        if config.csv_path:
            exc.history.to_csv(config.csv_path)
        return config.name, exc.history, str(exc)


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else format(v, ".17g")
    return str(v)


def _summary_row(config, history, error):
    row = {"name": config.name, "problem": config.problem, "degree": config.degree,
           "strategy": config.mark_config.strategy, "theta": config.theta,
           "status": "ok" if error is None else "failed", "levels": len(history)}
    last = history.records[-1] if history.records else None
    for key in ("n_elements", "n_dofs", "product", "goal_value", "goal_error"):
        row[key] = getattr(last, key) if last else float("nan")
    for key, column in (("rate_product", "product"), ("rate_goal_error", "goal_error")):
        row[key] = mean_rate(history, column) if len(history) >= 2 else float("nan")
    return row


def run_study(spec, workers=None):
    """Execute all runs; returns the summary rows and the list of failures."""
    spec.output.mkdir(parents=True, exist_ok=True)
    configs = []
    for config in spec.runs:
        stem = spec.output / config.name
        configs.append(replace(config, csv_path=f"{stem}.csv",
                               vtk_prefix=str(stem) if spec.emit_vtk else None,
                               vtk_every=(config.vtk_every or 1) if spec.emit_vtk else 0))
    workers = workers or os.cpu_count() or 1
    if workers == 1 or len(configs) == 1:
        results = [_execute(c) for c in configs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(configs))) as pool:
            results = list(pool.map(_execute, configs))
    rows, failures = [], []
    for config, (name, history, error) in zip(configs, results):
        rows.append(_summary_row(config, history, error))
        if error is not None:
            failures.append(f"{name}: {error}")
    if spec.emit_summary:
        with open(spec.output / "summary.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(SUMMARY_COLUMNS)
            for row in rows:
                writer.writerow([_fmt(row[c]) for c in SUMMARY_COLUMNS])
    return rows, failures


def cmd_study(args):
    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        print(f"goafem study: cannot read {args.config}: {exc.strerror}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        spec = parse_study(text)
    except ConfigError as exc:
        print(f"goafem study: {args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.output is not None:
        spec.output = args.output
    if args.workers is not None and args.workers < 1:
        print("goafem study: --workers must be positive", file=sys.stderr)
        return EXIT_CONFIG
    rows, failures = run_study(spec, args.workers)
    for row in rows:
        print(f"{row['name']}: {row['status']}, {row['levels']} levels, "
              f"goal error {row['goal_error']:.3e}, product rate {row['rate_product']:.2f}")
    for msg in failures:
        print(f"goafem study: solver failure in {msg}", file=sys.stderr)
    return EXIT_SOLVER if failures else EXIT_OK


# -------------------------------------------------------------------------- main


def build_parser():
    parser = argparse.ArgumentParser(prog="goafem", description=(
        "Goal-oriented adaptive FEM for semilinear elliptic problems."))
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="log level progress (-vv for Newton steps)")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="one adaptive solve")
    _add_run_arguments(run)
    run.set_defaults(func=cmd_run)
    study = sub.add_parser("study", help="a batch of runs from a config file")
    study.add_argument("config", help="study file (key = value lines, [run] sections)")
    study.add_argument("--workers", type=int, help="parallel runs (default: CPU count)")
    study.add_argument("--output", type=Path, help="override the output directory")
    study.set_defaults(func=cmd_study)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
