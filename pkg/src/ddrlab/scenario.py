"""Scenario files and the check suites they drive.

A scenario is a TOML document::

    name = "kahler_t4_standard"
    [chart]        dim, periodic, optional names
    [fields.<id>]  type = scalar | vector | form | endo | metric, with
                   expr / components / matrix (expression strings)
    [sampling]     lattice, random, seed, box
    [tolerances]   overrides of DEFAULT_TOLERANCES
    [torus]        constant g, kappa, optional R, cutoff
    [[tasks]]      kind = one of TASK_KINDS, plus task parameters

``form`` and ``metric`` fields may instead give a constant matrix under
``pullback_of`` together with ``frame`` (an endo field F): the field is then
F^T M F, i.e. the constant structure M pulled back along a map with
Jacobian F.
"""

from __future__ import annotations

import hashlib
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

from . import exterior as ext
from . import kahler, nijenhuis as nij, torus
from .expr import ParseError, as_expr, evaluate, parse_expr
from .fields import (Chart, EndoField, FormField, NonPeriodicError, ScalarField,
                     VectorField, lint_periodic, sample_points)

__all__ = [
    "Scenario", "TaskSpec", "TorusBlock", "TaskResult", "ScenarioError", "TASK_KINDS",
    "STATUSES", "DEFAULT_TOLERANCES", "parse_scenario", "load_scenario", "run_tasks",
]

TASK_KINDS = (
    "nijenhuis", "twist-decomposition", "commutator-criterion", "recover-derivation",
    "reconstruct-kahler", "calibration", "ddr-lemma", "corollary-conditions",
    "sympl-relations",
)
STATUSES = ("pass", "fail", "inconclusive", "not-applicable")

DEFAULT_TOLERANCES = {
    "identity": 1e-9,        # pointwise operator identities
    "nonzero": 1e-3,         # below this a quantity is not counted as nonzero
    "recover": 1e-12,
    "calibration": 1e-9,
    "kahler": 1e-9,
    "nijenhuis_J": 1e-8,
    "polar": 1e-8,
    "cluster": 1e-7,
    "corollary": 1e-11,
    "sympl": 1e-10,
    "rank_threshold": torus.RANK_THRESHOLD,
}
# tolerances that --tol replaces; thresholds that define "nonzero" or ranks stay put
RESIDUAL_TOLERANCES = ("identity", "recover", "calibration", "kahler", "nijenhuis_J",
                       "polar", "corollary", "sympl")


class ScenarioError(ValueError):
    """Configuration problem; ``location`` names the offending key or line."""

    def __init__(self, message: str, location: str | None = None):
        super().__init__(f"{location}: {message}" if location else message)
        self.location = location


@dataclass(frozen=True)
class TaskSpec:
    id: str
    kind: str
    params: dict


@dataclass(frozen=True)
class TorusBlock:
    g: np.ndarray
    kappa: np.ndarray | None
    R: np.ndarray | None
    cutoff: int

    @property
    def dim(self) -> int:
        return len(self.g)

    def twisting_endo(self) -> np.ndarray:
        """R if given, else the compatible R with g = kappa(R., .)."""
        if self.R is not None:
            return self.R
        if self.kappa is None:
            raise ScenarioError("torus block needs R or kappa", "torus")
        return kahler.compatibility_endo(self.kappa, self.g)


@dataclass(frozen=True)
class Scenario:
    name: str
    description: str
    chart: Chart | None
    fields: dict
    sampling: dict
    tolerances: dict
    torus: TorusBlock | None
    tasks: tuple
    sha256: str
    path: str = "<string>"

    def points(self, seed: int | None = None) -> list:
        if self.chart is None:
            return []
        s = self.sampling
        return sample_points(self.chart, s["lattice"], s["random"],
                             s["seed"] if seed is None else seed, s["box"])


# -- parsing ---------------------------------------------------------------------------------

def _expr_source(v, where: str) -> str:
    if isinstance(v, bool) or not isinstance(v, (int, float, str)):
        raise ScenarioError(f"expected an expression string or number, got {v!r}", where)
    return repr(v) if isinstance(v, float) else str(v)


def _parse_in_chart(chart: Chart, v, where: str):
    src = _expr_source(v, where)
    try:
        return chart.parse(src)
    except ParseError as exc:
        raise ScenarioError(f"{exc} in {src!r}", where) from exc


def _constant(v, where: str) -> float:
    src = _expr_source(v, where)
    try:
        return float(evaluate(parse_expr(src, names=()), {}))
    except ParseError as exc:
        raise ScenarioError(f"{exc} in {src!r}", where) from exc


def _constant_matrix(rows, n: int | None, where: str) -> np.ndarray:
    if not isinstance(rows, list) or not rows or not all(isinstance(r, list) for r in rows):
        raise ScenarioError("expected a matrix (list of rows)", where)
    M = np.array([[_constant(v, f"{where}[{i}][{j}]") for j, v in enumerate(r)]
                  for i, r in enumerate(rows)])
    if M.ndim != 2 or M.shape[0] != M.shape[1] or (n is not None and M.shape[0] != n):
        raise ScenarioError(f"expected a {n or 'square'} matrix, got shape {M.shape}", where)
    return M


def _exact_constant_matrix(rows, n: int, where: str) -> np.ndarray:
    if not isinstance(rows, list) or len(rows) != n or any(
            not isinstance(r, list) or len(r) != n for r in rows):
        raise ScenarioError(f"expected a {n}x{n} matrix", where)
    out = np.empty((n, n), dtype=object)
    for i, r in enumerate(rows):
        for j, v in enumerate(r):
            e = _parse_in_chart_free(v, f"{where}[{i}][{j}]")
            out[i, j] = e
    return out


def _parse_in_chart_free(v, where: str):
    src = _expr_source(v, where)
    try:
        return parse_expr(src, names=())
    except ParseError as exc:
        raise ScenarioError(f"{exc} in {src!r}", where) from exc


def _matrix_field(chart: Chart, rows, where: str) -> EndoField:
    n = chart.dim
    if not isinstance(rows, list) or len(rows) != n or any(
            not isinstance(r, list) or len(r) != n for r in rows):
        raise ScenarioError(f"expected a {n}x{n} matrix of expressions", where)
    return EndoField(chart, tuple(tuple(_parse_in_chart(chart, v, f"{where}[{i}][{j}]")
                                        for j, v in enumerate(r)) for i, r in enumerate(rows)))


def _framed(chart: Chart, spec: dict, fields: dict, where: str) -> EndoField:
    frame = spec.get("frame")
    if frame not in fields or not isinstance(fields[frame], EndoField):
        raise ScenarioError(f"frame {frame!r} is not a previously defined endo field", where)
    F = fields[frame]
    M = EndoField(chart, tuple(tuple(e for e in r) for r in
                               _exact_constant_matrix(spec["pullback_of"], chart.dim,
                                                      where + ".pullback_of")))
    return F.transpose() @ M @ F


def _symmetrized(g: EndoField, where: str) -> EndoField:
    """Check symmetry at probe points, then mirror the upper triangle."""
    n = g.chart.dim
    if any(g.matrix[i][j] is not g.matrix[j][i] for i in range(n) for j in range(i)):
        probes = sample_points(g.chart, random=3, seed=12345)
        for pt in probes:
            G = g(pt)
            if np.abs(G - G.T).max() > 1e-12 * max(1.0, np.abs(G).max()):
                raise ScenarioError("metric matrix is not symmetric", where)
    return EndoField(g.chart, tuple(tuple(g.matrix[min(i, j)][max(i, j)] for j in range(n))
                                    for i in range(n)))


def _parse_field(chart: Chart, fid: str, spec: dict, fields: dict):
    where = f"fields.{fid}"
    if not isinstance(spec, dict) or "type" not in spec:
        raise ScenarioError("field needs a 'type'", where)
    kind = spec["type"]
    if kind == "scalar":
        return ScalarField(chart, _parse_in_chart(chart, spec.get("expr"), where + ".expr"))
    if kind == "vector":
        comps = spec.get("components")
        if not isinstance(comps, list) or len(comps) != chart.dim:
            raise ScenarioError(f"vector needs {chart.dim} components", where)
        return VectorField(chart, tuple(_parse_in_chart(chart, c, f"{where}.components[{i}]")
                                        for i, c in enumerate(comps)))
    if kind == "endo":
        return _matrix_field(chart, spec.get("matrix"), where + ".matrix")
    if kind == "metric":
        if "pullback_of" in spec:
            g = _framed(chart, spec, fields, where)
        else:
            g = _matrix_field(chart, spec.get("matrix"), where + ".matrix")
        return _symmetrized(g, where)
    if kind == "form":
        degree = spec.get("degree")
        if not isinstance(degree, int) or not 0 <= degree <= chart.dim:
            raise ScenarioError("form needs an integer degree in [0, dim]", where)
        if "pullback_of" in spec:
            if degree != 2:
                raise ScenarioError("pullback_of is only supported for 2-forms", where)
            return kahler.two_form_of_matrix(_framed(chart, spec, fields, where))
        comps = spec.get("components", {})
        if not isinstance(comps, dict):
            raise ScenarioError("form components must be a table", where)
        try:
            return FormField.parse(chart, degree, {k: _expr_source(v, f"{where}.{k}")
                                                   for k, v in comps.items()})
        except ParseError as exc:
            raise ScenarioError(str(exc), where) from exc
        except ValueError as exc:
            raise ScenarioError(str(exc), where) from None
    raise ScenarioError(f"unknown field type {kind!r}", where)


def _parse_chart(spec) -> Chart:
    if not isinstance(spec, dict):
        raise ScenarioError("chart must be a table", "chart")
    dim = spec.get("dim")
    if not isinstance(dim, int):
        raise ScenarioError("chart.dim must be an integer", "chart.dim")
    names = spec.get("names", [f"x{i + 1}" for i in range(dim if dim > 0 else 0)])
    periodic = spec.get("periodic", False)
    try:
        return Chart(dim, tuple(names), periodic if isinstance(periodic, bool) else tuple(periodic))
    except ValueError as exc:
        raise ScenarioError(str(exc), "chart") from None


def _parse_torus(spec, chart: Chart | None) -> TorusBlock:
    if not isinstance(spec, dict) or "g" not in spec:
        raise ScenarioError("torus block needs a constant metric g", "torus")
    g = _constant_matrix(spec["g"], None, "torus.g")
    n = len(g)
    if chart is not None and chart.dim != n:
        raise ScenarioError(f"torus dimension {n} differs from chart dimension {chart.dim}", "torus")
    try:
        ext.as_metric(g)
    except ValueError as exc:
        raise ScenarioError(str(exc), "torus.g") from None
    kappa = R = None
    if "kappa" in spec:
        kappa = _constant_matrix(spec["kappa"], n, "torus.kappa")
        try:
            ext.as_symplectic(kappa)
        except ValueError as exc:
            raise ScenarioError(str(exc), "torus.kappa") from None
    if "R" in spec:
        R = _constant_matrix(spec["R"], n, "torus.R")
        if abs(np.linalg.det(R)) < 1e-12:
            raise ScenarioError("torus.R is singular", "torus.R")
    cutoff = spec.get("cutoff", 3)
    if not isinstance(cutoff, int) or cutoff < 0:
        raise ScenarioError("cutoff must be a nonnegative integer", "torus.cutoff")
    block = TorusBlock(g, kappa, R, cutoff)
    block.twisting_endo()
    return block


_TASK_FIELD_KEYS = {"endo": (EndoField,), "metric": (EndoField,), "kappa": (FormField,)}


def _parse_tasks(raw, fields: dict, torus_block: TorusBlock | None) -> tuple:
    if not isinstance(raw, list) or not raw:
        raise ScenarioError("scenario needs a non-empty [[tasks]] array", "tasks")
    out, seen = [], set()
    for i, t in enumerate(raw):
        where = f"tasks[{i}]"
        if isinstance(t, str):
            t = {"kind": t}
        if not isinstance(t, dict) or "kind" not in t:
            raise ScenarioError("task needs a 'kind'", where)
        kind = t["kind"]
        if kind not in TASK_KINDS:
            raise ScenarioError(f"unknown task {kind!r}; expected one of {', '.join(TASK_KINDS)}",
                                where)
        tid = str(t.get("id", kind))
        if tid in seen:
            raise ScenarioError(f"duplicate task id {tid!r}", where)
        seen.add(tid)
        params = {k: v for k, v in t.items() if k not in ("kind", "id")}
        for key, default in (("endo", "R"), ("metric", "g"), ("kappa", "kappa")):
            if kind in _FIELD_NEEDS and key in _FIELD_NEEDS[kind]:
                name = params.setdefault(key, default)
                if name not in fields:
                    raise ScenarioError(f"references undefined field {name!r}", f"{where}.{key}")
                if not isinstance(fields[name], _TASK_FIELD_KEYS[key]) or (
                        key == "kappa" and fields[name].degree != 2):
                    raise ScenarioError(f"field {name!r} has the wrong type for {key!r}",
                                        f"{where}.{key}")
        for key in ("forms", "functions"):
            for name in params.get(key, []):
                if name not in fields:
                    raise ScenarioError(f"references undefined field {name!r}", f"{where}.{key}")
        if kind in ("ddr-lemma", "corollary-conditions", "sympl-relations") and torus_block is None:
            raise ScenarioError(f"task {kind!r} needs a [torus] block", where)
        if kind == "sympl-relations" and torus_block.kappa is None:
            raise ScenarioError("sympl-relations needs torus.kappa", where)
        out.append(TaskSpec(tid, kind, params))
    return tuple(out)


_FIELD_NEEDS = {
    "nijenhuis": ("endo",), "twist-decomposition": ("endo",),
    "commutator-criterion": ("endo",), "reconstruct-kahler": ("metric", "kappa"),
    "calibration": ("metric", "kappa"),
}


def parse_scenario(text: str, path: str = "<string>") -> Scenario:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"TOML syntax error: {exc}", path) from None
    sha = hashlib.sha256(text.encode()).hexdigest()
    name = doc.get("name", Path(path).stem)
    chart = _parse_chart(doc["chart"]) if "chart" in doc else None
    fields: dict = {}
    raw_fields = doc.get("fields", {})
    if raw_fields and chart is None:
        raise ScenarioError("fields need a [chart] block", "fields")
    for fid, spec in raw_fields.items():
        fields[fid] = _parse_field(chart, fid, spec, fields)
        if any(chart.periodic):
            try:
                lint_periodic(fields[fid])
            except NonPeriodicError as exc:
                raise ScenarioError(str(exc), f"fields.{fid}") from None
    s = doc.get("sampling", {})
    sampling = {"lattice": int(s.get("lattice", 0)), "random": int(s.get("random", 8)),
                "seed": int(s.get("seed", 0)), "box": float(s.get("box", 1.0))}
    if sampling["lattice"] < 0 or sampling["random"] < 0:
        raise ScenarioError("sample counts must be nonnegative", "sampling")
    tol = dict(DEFAULT_TOLERANCES)
    for k, v in doc.get("tolerances", {}).items():
        if k not in tol:
            raise ScenarioError(f"unknown tolerance {k!r}", "tolerances")
        tol[k] = float(v)
    torus_block = _parse_torus(doc["torus"], chart) if "torus" in doc else None
    tasks = _parse_tasks(doc.get("tasks"), fields, torus_block)
    return Scenario(name, doc.get("description", ""), chart, fields, sampling, tol,
                    torus_block, tasks, sha, path)


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc.strerror}", str(path)) from None
    return parse_scenario(text, str(path))


# -- tasks -----------------------------------------------------------------------------------

@dataclass
class TaskResult:
    id: str
    kind: str
    status: str
    residuals: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    message: str | None = None
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        return {"id": self.id, "kind": self.kind, "status": self.status,
                "residuals": _clean(self.residuals), "tolerances": _clean(self.tolerances),
                "counts": dict(self.counts), "details": _clean(self.details),
                "message": self.message, "wall_time": self.wall_time}


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


@dataclass(frozen=True)
class _Context:
    scenario: Scenario
    points: list
    tol: dict
    cutoff: int | None


def _status(ok: bool) -> str:
    return "pass" if ok else "fail"


def _expect_status(magnitude: float, expect: str, tol: float, nonzero: float) -> str:
    if expect == "zero":
        return _status(magnitude <= tol)
    if expect == "nonzero":
        return _status(magnitude >= nonzero)
    if expect == "any":
        return "pass"
    raise ScenarioError(f"unknown expectation {expect!r}")


def _task_nijenhuis(ctx: _Context, p: dict) -> TaskResult:
    R = ctx.scenario.fields[p["endo"]]
    chart = R.chart
    tol = ctx.tol["identity"]
    shifted = R + EndoField.identity(chart)
    f = ScalarField(chart, as_expr(1) + chart.parse(chart.names[0]) ** 2)
    X, Y = VectorField.coordinate(chart, 0), VectorField.coordinate(chart, 1)
    n_max = anti = inv = shift = tens = 0.0
    for pt in ctx.points:
        N = nij.nijenhuis(R, pt)
        n_max = max(n_max, N.max_abs())
        anti = max(anti, N.antisymmetry_defect())
        inv = max(inv, nij.nijenhuis_inverse_identity(R, pt))
        shift = max(shift, float(np.abs(nij.nijenhuis(shifted, pt).components - N.components).max()))
        lhs = nij.nijenhuis_on(R, X.scaled(f.expr), Y, pt)
        tens = max(tens, float(np.abs(lhs - f(pt) * N(X(pt), Y(pt))).max()))
    expect = p.get("expect", "any")
    ok = max(anti, inv, shift, tens) <= tol
    st = _expect_status(n_max, expect, tol, ctx.tol["nonzero"])
    return TaskResult("", "", "pass" if ok and st == "pass" else "fail",
                      {"nijenhuis_max": n_max, "antisymmetry": anti, "inverse_identity": inv,
                       "shift_identity": shift, "tensoriality": tens},
                      {"identity": tol, "nonzero": ctx.tol["nonzero"]},
                      details={"expect": expect})


def _default_forms(chart: Chart) -> list:
    n = chart.dim
    x = [chart.parse(nm) for nm in chart.names]
    forms = [ScalarField(chart, x[0] * x[1 % n] + x[-1]).as_form()]
    forms.append(FormField(chart, 1, {(j,): x[(j + 1) % n] * x[j] + 1 for j in range(n)}))
    forms.append(FormField(chart, 2, {(0, 1): x[-1], (0, n - 1): x[1] * x[0]}))
    return forms


def _as_form(obj) -> FormField:
    return obj.as_form() if isinstance(obj, ScalarField) else obj


def _task_twist(ctx: _Context, p: dict) -> TaskResult:
    R = ctx.scenario.fields[p["endo"]]
    names = p.get("forms")
    forms = ([_as_form(ctx.scenario.fields[nm]) for nm in names] if names
             else _default_forms(R.chart))
    tol = ctx.tol["identity"]
    dec = sq = mc_gap = 0.0
    by_degree: dict = {}
    for a in forms:
        dRa = nij.d_twisted_field(R, a)
        dR2 = nij.d_twisted_field(R, dRa)
        for pt in ctx.points:
            r = nij.decomposition_residual(R, a, pt)
            dec = max(dec, r)
            by_degree[a.degree] = max(by_degree.get(a.degree, 0.0), r)
            sq = max(sq, dR2(pt).max_abs())
            mc, comm = nij.maurer_cartan_norms(R, a, pt)
            mc_gap = max(mc_gap, abs(mc - comm))
    return TaskResult("", "", _status(max(dec, sq, mc_gap) <= tol),
                      {"decomposition": dec, "d_R_squared": sq, "maurer_cartan_gap": mc_gap},
                      {"identity": tol},
                      details={"decomposition_by_degree": {str(k): v for k, v in
                                                           sorted(by_degree.items())},
                               "forms": len(forms)})


def _task_commutator(ctx: _Context, p: dict) -> TaskResult:
    R = ctx.scenario.fields[p["endo"]]
    chart = R.chart
    names = p.get("functions")
    funcs = ([ctx.scenario.fields[nm] for nm in names] if names
             else [chart.coordinate(j) for j in range(chart.dim)])
    tol, nz = ctx.tol["identity"], ctx.tol["nonzero"]
    n_max = c_max = ident = stated = 0.0
    for pt in ctx.points:
        n_max = max(n_max, nij.nijenhuis(R, pt).max_abs())
        for f in funcs:
            c_max = max(c_max, nij.commutator_d_dR(R, f, pt).max_abs())
            ident = max(ident, nij.commutator_identity_residual(R, f, pt, sign=-1))
            stated = max(stated, nij.commutator_identity_residual(R, f, pt, sign=+1))
    grey = [q for q, v in (("nijenhuis", n_max), ("commutator", c_max)) if tol < v < nz]
    if grey:
        status, msg = "inconclusive", f"{', '.join(grey)} between {tol:g} and {nz:g}"
    else:
        consistent = (n_max <= tol) == (c_max <= tol)
        status = _status(consistent and ident <= tol)
        msg = None if consistent else "N_R and [d, d_R] disagree on integrability"
    return TaskResult("", "", status,
                      {"nijenhuis_max": n_max, "commutator_max": c_max, "identity": ident},
                      {"identity": tol, "nonzero": nz},
                      details={"integrable": n_max <= tol, "functions": len(funcs),
                               "identity_sign": -1,
                               "identity_residual_with_opposite_sign": stated},
                      message=msg)


def _random_invertible(rng, n: int, min_sv: float = 0.2) -> np.ndarray:
    while True:
        M = np.round(rng.normal(size=(n, n)) * 8) / 8
        if np.linalg.svd(M, compute_uv=False).min() > min_sv:
            return M


def _roundtrip_residual(R: EndoField, points) -> float:
    chart = R.chart
    deltas = [nij.d_twisted_field(R, chart.coordinate(j).as_form()) for j in range(chart.dim)]
    rec = nij.recover_endomorphism(deltas, points)
    return max((float(np.abs(rec(pt) - R(pt)).max()) for pt in points), default=0.0)


def _task_recover(ctx: _Context, p: dict) -> TaskResult:
    sc = ctx.scenario
    tol = ctx.tol["recover"]
    res: dict = {}
    counts = {}
    if "endo" in p or "R" in sc.fields:
        R = sc.fields[p.get("endo", "R")]
        res["field_roundtrip"] = _roundtrip_residual(R, ctx.points)
    n_random = int(p.get("random", 0))
    if n_random:
        chart = sc.chart or Chart.standard(sc.torus.dim)
        rng = np.random.default_rng(int(p.get("seed", sc.sampling["seed"])))
        worst = 0.0
        origin = [np.zeros(chart.dim)]
        for _ in range(n_random):
            R = EndoField.constant(chart, _random_invertible(rng, chart.dim))
            worst = max(worst, _roundtrip_residual(R, origin))
        res["random_constant_roundtrip"] = worst
        counts["random_cases"] = n_random
    if not res:
        return TaskResult("", "", "not-applicable", message="no endomorphism field and random = 0")
    return TaskResult("", "", _status(max(res.values()) <= tol), res, {"recover": tol},
                      counts=counts)


def _kahler_tolerances(tol: dict) -> dict:
    k = tol["kahler"]
    out = {name: k for name in ("j_squared", "skew", "orthogonal", "s_symmetric", "closed",
                                "off_block", "calibration")}
    out.update({"nijenhuis_J": tol["nijenhuis_J"], "nijenhuis_R2": tol["nijenhuis_J"],
                "polar": tol["polar"], "cluster": tol["cluster"], "commute": min(k, 1e-10)})
    return out


def _task_reconstruct(ctx: _Context, p: dict) -> TaskResult:
    sc = ctx.scenario
    g, kap = sc.fields[p["metric"]], sc.fields[p["kappa"]]
    rep = kahler.reconstruct(g, kap, ctx.points, _kahler_tolerances(ctx.tol))
    d = rep.to_dict()
    expect_fail = set(p.get("expect_fail", []))
    if rep.error is not None:
        ok = bool(p.get("expect_error", False))
        return TaskResult("", "", _status(ok), {}, d["tolerances"], details=d, message=rep.error)
    unknown = expect_fail - set(rep.verdicts)
    if unknown:
        raise ScenarioError(f"expect_fail names unknown checks: {sorted(unknown)}")
    mismatched = sorted(k for k, ok in rep.verdicts.items() if ok == (k in expect_fail))
    res = dict(d["max_residuals"])
    res["polar"] = d["polar_deviation"]
    return TaskResult("", "", _status(not mismatched and not p.get("expect_error", False)), res,
                      {k: v for k, v in d["tolerances"].items() if k in res},
                      details=d,
                      message=("unexpected verdicts: " + ", ".join(mismatched)) if mismatched else None)


def _task_calibration(ctx: _Context, p: dict) -> TaskResult:
    sc = ctx.scenario
    tol = ctx.tol["calibration"]
    ok, vol, det = kahler.check_calibrated(sc.fields[p["metric"]], sc.fields[p["kappa"]],
                                           ctx.points, tol)
    expect = bool(p.get("expect", True))
    return TaskResult("", "", _status(bool(ok) == expect),
                      {"volume_ratio": vol, "det_R": det}, {"calibration": tol},
                      details={"calibrated": bool(ok), "expect": expect})


def _modes(ctx: _Context) -> list:
    tb = ctx.scenario.torus
    K = tb.cutoff if ctx.cutoff is None else ctx.cutoff
    return torus.enumerate_modes(tb.dim, K), K


def _task_ddr(ctx: _Context, p: dict) -> TaskResult:
    tb = ctx.scenario.torus
    R = tb.twisting_endo()
    modes, K = _modes(ctx)
    thr = ctx.tol["rank_threshold"]
    reports = torus.scan_modes(lambda k: torus.ddr_lemma_check(k, tb.g, R, threshold=thr), modes)
    by_mode = {r.mode: r for r in reports}
    for r in reports:  # conjugate modes must agree
        torus.assert_conjugate_symmetry(r.mode, R)
        other = by_mode[tuple(-x for x in r.mode)]
        if other.status != r.status:
            raise AssertionError(f"modes {r.mode} and its conjugate disagree")
    tally = {s: sum(r.status == s for r in reports) for s in STATUSES}
    expect = p.get("expect", "holds")
    if expect not in ("holds", "fails"):
        raise ScenarioError(f"ddr-lemma expect must be 'holds' or 'fails', got {expect!r}")
    if tally["not-applicable"] == len(reports):
        status = "not-applicable"
    elif tally["inconclusive"]:
        status = "inconclusive"
    else:
        holds = tally["fail"] == 0 and tally["not-applicable"] == 0
        status = _status(holds == (expect == "holds"))
    kept = [r.margins.get("min_kept_ratio") for r in reports if r.margins.get("min_kept_ratio")]
    dropped = [r.margins.get("max_dropped_ratio", 0.0) for r in reports if r.margins]
    res = {"max_angle": max((r.max_angle for r in reports if r.verdict is not None), default=0.0),
           "lemma_max_angle": max((r.lemma_max_angle for r in reports if r.verdict is not None),
                                  default=0.0),
           "commutator_max": max(r.commutator_norm for r in reports)}
    table = [{"k": list(r.mode), "status": r.status,
              "dim_A": r.dims.get("A"), "dim_im_ddR": r.dims.get("im_ddR"),
              "lemma": r.lemma_verdict} for r in reports]
    return TaskResult("", "", status, res, {"rank_threshold": thr,
                                            "inconclusive_factor": torus.INCONCLUSIVE_FACTOR,
                                            "angle": torus.ANGLE_TOL},
                      counts={"modes": len(reports), "cutoff": K},
                      details={"tally": tally, "expect": expect,
                               "lemma_holds_all": all(r.lemma_verdict for r in reports
                                                      if r.verdict is not None),
                               "min_kept_ratio": min(kept) if kept else None,
                               "max_dropped_ratio": max(dropped) if dropped else 0.0,
                               "coverage": f"modes with |k|_inf <= {K}", "modes": table})


def _task_corollary(ctx: _Context, p: dict) -> TaskResult:
    tb = ctx.scenario.torus
    R = tb.twisting_endo()
    modes, K = _modes(ctx)
    tol = ctx.tol["corollary"]
    per = torus.scan_modes(lambda k: torus.corollary_conditions(k, tb.g, R), modes)
    res = {q: max(c[q] for c in per) for q in "abcd"}
    hodge = torus.scan_modes(lambda k: torus.hodge_decomposition(k, tb.g, R).residuals,
                             modes[:: max(1, len(modes) // 50)])
    hodge_max = {key: max(h[key] for h in hodge) for key in hodge[0]}
    expect = p.get("expect", "zero")
    st = _expect_status(max(res.values()), expect, tol, ctx.tol["nonzero"])
    return TaskResult("", "", st, res, {"corollary": tol}, counts={"modes": len(modes),
                                                                   "cutoff": K},
                      details={"expect": expect, "hodge_residuals": hodge_max,
                               "hodge_modes": len(hodge)})


def _task_sympl(ctx: _Context, p: dict) -> TaskResult:
    tb = ctx.scenario.torus
    modes, K = _modes(ctx)
    tol = ctx.tol["sympl"]
    try:
        out = torus.sympl_relations_check(tb.g, tb.kappa, tb.R if p.get("use_R") else None,
                                          modes, calibration_tol=ctx.tol["calibration"])
    except torus.CalibrationError as exc:
        return TaskResult("", "", "fail", message=f"precondition violated: {exc}")
    keys = ("star_Rinv", "hodge_R", "Rinv_hodge", "adjoint_twisted", "d_dstar_commutator")
    res = {k: max(out[k]) for k in keys}
    return TaskResult("", "", _status(max(res.values()) <= tol), res, {"sympl": tol},
                      counts={"modes": len(modes), "cutoff": K},
                      details={"per_degree": {k: out[k] for k in keys},
                               "star_squared_minus_identity": max(out["star_squared"]),
                               "lemma_hypothesis_R": max(out["lemma_hypothesis_R"]),
                               "lemma_hypothesis_Rinv": max(out["lemma_hypothesis_Rinv"])})


_RUNNERS: dict = {
    "nijenhuis": _task_nijenhuis,
    "twist-decomposition": _task_twist,
    "commutator-criterion": _task_commutator,
    "recover-derivation": _task_recover,
    "reconstruct-kahler": _task_reconstruct,
    "calibration": _task_calibration,
    "ddr-lemma": _task_ddr,
    "corollary-conditions": _task_corollary,
    "sympl-relations": _task_sympl,
}

# errors a task may raise from the mathematics itself; anything else is a bug
_MATH_ERRORS = (nij.SingularEndomorphismError, np.linalg.LinAlgError, kahler.SpectrumError,
                kahler.IllConditionedError, kahler.JConstructionError, ZeroDivisionError)


def _run_one(ctx: _Context, spec: TaskSpec) -> TaskResult:
    t0 = time.perf_counter()
    try:
        r = _RUNNERS[spec.kind](ctx, spec.params)
    except _MATH_ERRORS as exc:
        r = TaskResult("", "", "fail", message=f"{type(exc).__name__}: {exc}")
    r.id, r.kind = spec.id, spec.kind
    r.counts.setdefault("points", len(ctx.points)
                        if spec.kind not in ("ddr-lemma", "corollary-conditions",
                                             "sympl-relations") else 0)
    r.wall_time = time.perf_counter() - t0
    return r


def run_tasks(scenario: Scenario, *, tasks: list | None = None, tol: float | None = None,
              seed: int | None = None, cutoff: int | None = None,
              workers: int | None = None) -> list:
    """Run the selected tasks (by id or kind), concurrently; results in file order."""
    from concurrent.futures import ThreadPoolExecutor

    specs = list(scenario.tasks)
    if tasks:
        wanted = set(tasks)
        unknown = wanted - {s.id for s in specs} - {s.kind for s in specs}
        if unknown:
            raise ScenarioError(f"unknown task(s) {sorted(unknown)}; scenario has "
                                f"{[s.id for s in specs]}", "--tasks")
        specs = [s for s in specs if s.id in wanted or s.kind in wanted]
    tols = dict(scenario.tolerances)
    if tol is not None:
        for k in RESIDUAL_TOLERANCES:
            tols[k] = float(tol)
    ctx = _Context(scenario, scenario.points(seed), tols, cutoff)
    if workers == 1 or len(specs) < 2:
        return [_run_one(ctx, s) for s in specs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda s: _run_one(ctx, s), specs))
