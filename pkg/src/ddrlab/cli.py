"""Command-line front end: ``ddrlab run | examples | schema``."""

from __future__ import annotations

import argparse
import json
import sys
import time
from importlib import resources
from pathlib import Path

from . import __version__
from .report import build_report, dumps, exit_code, load_schema, validate_report
from .scenario import ScenarioError, load_scenario, parse_scenario, run_tasks

__all__ = ["main", "emit_examples", "bundled_scenarios", "CONFIG_ERROR"]

CONFIG_ERROR = 3


def bundled_scenarios() -> dict:
    """name -> TOML text of every scenario shipped with the package."""
    root = resources.files("ddrlab").joinpath("scenarios")
    return {p.name[:-5]: p.read_text() for p in sorted(root.iterdir(), key=lambda p: p.name)
            if p.name.endswith(".toml")}


def emit_examples(directory) -> list:
    """Write the bundled scenario library into ``directory``; returns the paths."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, text in bundled_scenarios().items():
        parse_scenario(text, name)  # never ship a scenario that does not parse
        p = out / f"{name}.toml"
        p.write_text(text)
        paths.append(p)
    return paths


def _summary_line(r) -> str:
    shown = ", ".join(f"{k}={v:.3g}" for k, v in sorted(r.residuals.items())
                      if isinstance(v, float))
    msg = f"  [{r.message}]" if r.message else ""
    return f"{r.status.upper():15s} {r.id:28s} {shown}{msg}"


def _run(args) -> int:
    t0 = time.perf_counter()
    sc = load_scenario(args.scenario)
    tasks = [t.strip() for t in args.tasks.split(",") if t.strip()] if args.tasks else None
    results = run_tasks(sc, tasks=tasks, tol=args.tol, seed=args.seed, cutoff=args.cutoff,
                        workers=args.workers)
    seed = sc.sampling["seed"] if args.seed is None else args.seed
    report = build_report(sc, results, seed, args.cutoff, time.perf_counter() - t0)
    validate_report(report)
    if args.report:
        Path(args.report).write_text(dumps(report))
    print(f"scenario {sc.name} ({sc.sha256[:12]}), seed {seed}")
    for r in results:
        print(_summary_line(r))
    code = exit_code(results)
    s = report["summary"]
    print(f"{s['pass']} pass, {s['fail']} fail, {s['inconclusive']} inconclusive, "
          f"{s['not-applicable']} not applicable -> exit {code}")
    return code


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ddrlab", description=__doc__)
    ap.add_argument("--version", action="version", version=f"ddrlab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the tasks of a scenario file")
    run.add_argument("scenario")
    run.add_argument("--report", metavar="OUT.json", help="write the JSON report here")
    run.add_argument("--cutoff", type=int, metavar="K", help="Fourier mode cutoff |k|_inf <= K")
    run.add_argument("--tol", type=float, metavar="T", help="override every residual tolerance")
    run.add_argument("--seed", type=int, metavar="N", help="override the sampling seed")
    run.add_argument("--tasks", metavar="A,B,C", help="only these task ids or kinds")
    run.add_argument("--workers", type=int, default=None, help="thread count for task dispatch")
    ex = sub.add_parser("examples", help="write the bundled scenarios into a directory")
    ex.add_argument("directory")
    sub.add_parser("schema", help="print the report JSON schema")
    return ap


def main(argv=None) -> int:
    ap = _build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:  # argparse usage errors are configuration errors
        return CONFIG_ERROR if exc.code else 0
    try:
        if args.command == "schema":
            print(json.dumps(load_schema(), indent=2))
            return 0
        if args.command == "examples":
            for p in emit_examples(args.directory):
                print(p)
            return 0
        if args.cutoff is not None and args.cutoff < 0:
            raise ScenarioError("cutoff must be nonnegative", "--cutoff")
        return _run(args)
    except ScenarioError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return CONFIG_ERROR
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return CONFIG_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
