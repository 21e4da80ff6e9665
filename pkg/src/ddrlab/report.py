"""Report assembly, schema validation and exit codes."""

from __future__ import annotations

import datetime as _dt
import json
from importlib import resources

import jsonschema

from . import __version__
from .scenario import STATUSES, Scenario

__all__ = ["SCHEMA_VERSION", "load_schema", "build_report", "validate_report", "exit_code",
           "dumps", "strip_volatile", "VOLATILE_KEYS"]

SCHEMA_VERSION = "1.0"
VOLATILE_KEYS = ("generated_at", "wall_time")


def load_schema() -> dict:
    text = resources.files("ddrlab").joinpath("data/report.schema.json").read_text()
    return json.loads(text)


def exit_code(results) -> int:
    """0 all pass (or not applicable), 1 any fail, 2 any inconclusive and none failed."""
    statuses = {r.status for r in results}
    if "fail" in statuses:
        return 1
    if "inconclusive" in statuses:
        return 2
    return 0


def build_report(scenario: Scenario, results, seed: int, cutoff: int | None,
                 wall_time: float) -> dict:
    tb = scenario.torus
    return {
        "schema_version": SCHEMA_VERSION,
        "tool": {"name": "ddrlab", "version": __version__},
        "scenario": {"name": scenario.name, "path": scenario.path, "sha256": scenario.sha256},
        "seed": int(seed),
        "cutoff": cutoff if cutoff is not None else (tb.cutoff if tb is not None else None),
        "tasks": [r.to_dict() for r in results],
        "summary": {s: sum(r.status == s for r in results) for s in STATUSES},
        "exit_code": exit_code(results),
        "generated_at": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "wall_time": wall_time,
    }


def validate_report(report: dict) -> None:
    jsonschema.validate(report, load_schema())


def strip_volatile(report: dict) -> dict:
    """Copy without timestamps and wall times, for determinism comparisons."""
    out = {k: v for k, v in report.items() if k not in VOLATILE_KEYS}
    out["tasks"] = [{k: v for k, v in t.items() if k != "wall_time"} for t in report["tasks"]]
    return out


def dumps(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n"
