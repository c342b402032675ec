"""Experiment recipes: JSON descriptions of a run plus pass/fail criteria.

A recipe names an operation, its parameters and a list of criteria of the
form ``{"key": ..., "min": ..., "max": ...}`` evaluated against the scalar
results of the run.  Module errors are captured in the report; the caller
decides the exit code from ``RunReport.passed``.
"""

from __future__ import annotations

import csv
import json
import math
import time
import traceback
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import arithmetic, counting, fourier, geometry
from .core import DigitSystem, PowerBaseSystem, hausdorff_dim, system_from_json


class RecipeError(ValueError):
    pass


@dataclass
class ExperimentRecipe:
    name: str
    operation: str
    params: dict = field(default_factory=dict)
    criteria: list = field(default_factory=list)
    outputs: dict = field(default_factory=dict)

    @classmethod
    def from_json(cls, obj: dict) -> "ExperimentRecipe":
        if not isinstance(obj, dict):
            raise RecipeError("recipe must be a JSON object")
        for key in ("name", "operation"):
            if key not in obj:
                raise RecipeError(f"recipe is missing {key!r}")
        if obj["operation"] not in OPERATIONS:
            raise RecipeError(f"unknown operation {obj['operation']!r}")
        crit = obj.get("criteria", [])
        for c in crit:
            if "key" not in c or not ("min" in c or "max" in c):
                raise RecipeError(f"criterion {c!r} needs a key and a min or max")
        return cls(obj["name"], obj["operation"], obj.get("params", {}), crit,
                   obj.get("outputs", {}))


@dataclass
class CriterionResult:
    key: str
    value: Any
    min: float | None
    max: float | None
    passed: bool


@dataclass
class RunReport:
    recipe: str
    passed: bool
    criteria: list[CriterionResult]
    results: dict
    artifacts: list[str]
    wall_clock: float
    nodes: int
    seed: int | None
    error: str | None = None

    def to_json(self) -> dict:
        return asdict(self)


# -- operations ----------------------------------------------------------------
# each takes (params, ctx) and returns (scalar results, csv rows or None)


def _system(obj):
    try:
        return system_from_json(obj)
    except (KeyError, TypeError) as exc:
        raise RecipeError(f"malformed system JSON: {exc}") from exc


def _op_dim(prm, ctx):
    s = _system(prm["system"])
    d = hausdorff_dim(s)
    out = {"dim": float(d)}
    if isinstance(d, Fraction):
        out["dim_exact"] = str(d)
    return out, None


def _op_l1bound(prm, ctx):
    s = _system(prm["system"])
    method = prm.get("method", "algorithm")
    if method == "algorithm":
        rep = fourier.l1_lower_bound_algorithm(s, float(prm.get("tol", ctx["tol"])))
    elif method == "crude":
        rep = fourier.l1_lower_bound_crude(s)
    elif method == "rectangle":
        rep = fourier.l1_lower_bound_rectangle(s)
    else:
        raise RecipeError(f"unknown bound method {method!r}")
    out = {"lower_bound": rep.lower_bound, "clamped": rep.clamped, "converged": rep.converged}
    if rep.sup_f_enclosure:
        out["sup_lo"], out["sup_hi"] = rep.sup_f_enclosure
        out["nodes"] = rep.grid_cells_explored
    if "exact" in rep.details:
        out["exact"] = rep.details["exact"]
    for key in ("reference",):
        if key in prm:
            out["above_reference"] = rep.lower_bound - float(Fraction(str(prm[key])))
    return out, None


def _op_box_count(prm, ctx):
    s = _system(prm["system"])
    fit = counting.box_count_fit(s, range(prm["ks"][0], prm["ks"][1] + 1))
    rows = [{"delta": d, "value": v} for d, v in fit.points]
    return {"slope": fit.exponent, "r2": fit.r2}, rows


def _ks(prm, ctx):
    lad = prm.get("ladder", ctx.get("ladder", [2, 6]))
    return list(range(int(lad[0]), int(lad[1]) + 1))


def _op_scaling(prm, ctx):
    s = _system(prm["system"])
    m = geometry.manifold_from_json(prm["manifold"])
    sc = counting.neighborhood_measure_scaling(s, m, _ks(prm, ctx),
                                               depth_offset=int(prm.get("depth_offset", 0)),
                                               max_nodes=ctx.get("max_nodes"))
    rows = [c.row() | {"ratio": r} for c, r in zip(sc.counts, sc.ratios)]
    out = {"nodes": sum(c.nodes for c in sc.counts), "degenerate": sc.degenerate}
    if sc.degenerate is None:
        out |= {"exponent": sc.exponent, "target": sc.target,
                "exponent_error": abs(sc.exponent - sc.target),
                "ratio_spread": sc.ratio_spread}
    return out, rows


def _op_sharpness(prm, ctx):
    rows, fit, target = counting.sharpness_slope(
        int(prm["p"]), prm["D1"], prm["D2"], int(prm["k"]), tuple(prm.get("ls", (1, 2, 3))))
    out = {"slope": fit.exponent, "target": target, "slope_shortfall": target - fit.exponent,
           "min_ratio": min(r.ratio for r in rows)}
    return out, [r.to_json() for r in rows]


def _op_lsearch(prm, ctx):
    s = _system(prm["system"])
    m = geometry.manifold_from_json(prm["manifold"])
    res = counting.l_search(s, m, _ks(prm, ctx), float(prm.get("c", ctx.get("c_threshold", 0.1))),
                            int(prm.get("l_max", ctx.get("l_max", 4))),
                            depth_offset=int(prm.get("depth_offset", 0)),
                            max_nodes=ctx.get("max_nodes"))
    out = {"applicable": res.applicable, "found": res.found,
           "l": -1 if res.l is None else res.l}
    return out, res.table


def _transforms(prm, n):
    grid = prm["grid"]
    if "radii" in grid:
        eye = [[float(i == j) for j in range(n)] for i in range(n)]
        return ([geometry.SimilarityTransform.from_json(
            {"t": r, "v": grid.get("center", [0.0] * n), "g": eye}) for r in grid["radii"]],
                [f"r={r:g}" for r in grid["radii"]])
    Ts = [geometry.SimilarityTransform.from_json(t) for t in grid["transforms"]]
    return Ts, [str(i) for i in range(len(Ts))]


def _op_sweep(prm, ctx):
    s = _system(prm["system"])
    m = geometry.manifold_from_json(prm["manifold"])
    Ts, labels = _transforms(prm, s.n)
    ks = _ks(prm, ctx)
    table = counting.transform_sweep(s, m, Ts, ks, depth_offset=int(prm.get("depth_offset", 0)),
                                     labels=labels, max_nodes=ctx.get("max_nodes"))
    deltas = [float(max(s.bases)) ** -k for k in ks]
    rows = [{"label": r.label, "delta": d, "ratio": v}
            for r in table for d, v in zip(deltas, r.ratios)]
    last = [r.ratio_last for r in table]
    return {"min_ratio": min(last), "max_ratio": max(last),
            "bounded_away": sum(r.bounded_away for r in table)}, rows


def _cover_out(rep):
    runs = arithmetic.interval_detect(rep)
    out = {"hit_fraction": rep.hit_fraction, "longest_run": max((r.bins for r in runs), default=0),
           "empty": rep.statuses().count("empty"), "unknown": rep.statuses().count("unknown"),
           "nodes": rep.cells_visited}
    rows = [{"bin_lo": lo, "bin_hi": hi, "status": st} for lo, hi, st in rep.csv_rows()]
    return out, rows


def _interval(v):
    return tuple(Fraction(str(x)) for x in v)


def _op_distset(prm, ctx):
    rep = arithmetic.pinned_distance_cover(
        _system(prm["system"]), _interval(prm["pin"]), _interval(prm["target"]),
        Fraction(str(prm["delta"])), int(prm.get("depth", ctx.get("depth", 4))))
    return _cover_out(rep)


def _binary(kind):
    def op(prm, ctx):
        rep = arithmetic.binary_map_cover(
            _system(prm["a"]), _system(prm["b"]), prm.get("map", kind), _interval(prm["target"]),
            Fraction(str(prm["delta"])), int(prm.get("depth", ctx.get("depth", 4))))
        return _cover_out(rep)
    return op


def _op_master(prm, ctx):
    """``S_k(theta) <= (sup f)^k`` over sampled offsets for several systems."""
    rng = np.random.default_rng(ctx["seed"])
    tol = float(prm.get("tol", 1e-6))
    rows = []
    violations = 0
    for sj in prm["systems"]:
        s = _system(sj)
        hi = fourier.sup_f(s, tol).hi
        for k in range(1, int(prm.get("k_max", 4)) + 1):
            if (s.p ** k) ** s.n > prm.get("max_terms", 10 ** 6):
                continue
            for theta in rng.random((int(prm.get("thetas", 100)), s.n)):
                ps = fourier.partial_sum_l1(s, k, theta)
                bad = ps.value - ps.errbar > fourier.partial_sum_bound(hi, k, s.n)
                violations += bool(bad)
            rows.append({"p": s.p, "n": s.n, "digits": s.size, "k": k, "bound": hi ** k})
    return {"violations": violations, "checks": len(rows)}, rows


def _op_l2(prm, ctx):
    s = _system(prm["system"])
    ks = _ks(prm, ctx)
    pts = [(float(s.p) ** -k, fourier.partial_sum_l2(s, k).value) for k in ks]
    fit = counting.fit_exponent(pts)
    target = s.n - hausdorff_dim(s)
    return ({"exponent": fit.exponent, "target": target,
             "exponent_error": abs(fit.exponent - target)},
            [{"delta": d, "value": v} for d, v in pts])


OPERATIONS: dict[str, Callable] = {
    "dim": _op_dim, "l1bound": _op_l1bound, "box_count": _op_box_count,
    "scaling": _op_scaling, "sharpness": _op_sharpness, "lsearch": _op_lsearch,
    "sweep": _op_sweep, "distset": _op_distset, "sumset": _binary("sum"),
    "prodset": _binary("product"), "master_inequality": _op_master, "l2_scaling": _op_l2,
}


# -- running -------------------------------------------------------------------


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path: Path, rows: list[dict]):
    keys = list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        for r in rows:
            w.writerow([_fmt(r.get(k)) for k in keys])


def _check(criteria, results):
    out = []
    for c in criteria:
        v = results.get(c["key"])
        ok = isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)
        if isinstance(v, bool):
            ok, v = True, float(v)
        if ok and "min" in c:
            ok = v >= c["min"]
        if ok and "max" in c:
            ok = v <= c["max"]
        out.append(CriterionResult(c["key"], v, c.get("min"), c.get("max"), bool(ok)))
    return out


def run_recipe(recipe: ExperimentRecipe | dict, out_dir: str | Path | None = None,
               config: dict | None = None) -> RunReport:
    ctx = {"tol": 1e-6, "seed": 0, "ladder": [2, 6], "c_threshold": 0.1, "l_max": 4}
    ctx.update(config or {})
    t0 = time.perf_counter()
    name = recipe.get("name", "?") if isinstance(recipe, dict) else recipe.name
    try:
        if isinstance(recipe, dict):
            recipe = ExperimentRecipe.from_json(recipe)
        results, rows = OPERATIONS[recipe.operation](recipe.params, ctx)
    except Exception as exc:  # captured, never raised
        err = f"{type(exc).__name__}: {exc}"
        if ctx.get("traceback"):
            err += "\n" + traceback.format_exc()
        return RunReport(name, False, [], {}, [], time.perf_counter() - t0, 0,
                         ctx["seed"], err)
    artifacts = []
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if rows:
            path = out / f"{recipe.name}.csv"
            write_csv(path, rows)
            artifacts.append(str(path))
        path = out / f"{recipe.name}.results.json"
        path.write_text(json.dumps(results, indent=2, sort_keys=True, default=str) + "\n")
        artifacts.append(str(path))
    crit = _check(recipe.criteria, results)
    return RunReport(recipe.name, all(c.passed for c in crit), crit, results, artifacts,
                     time.perf_counter() - t0, int(results.get("nodes", 0) or 0), ctx["seed"])


def load_recipes(path: str | Path) -> list[dict]:
    """A recipe file holds one recipe object or a list of them."""
    obj = json.loads(Path(path).read_text())
    items = obj if isinstance(obj, list) else [obj]
    names = [r.get("name") for r in items if isinstance(r, dict)]
    if len(names) != len(set(names)):
        raise RecipeError("recipe names must be unique within a run")
    return items


def shipped_recipe_dir() -> Path:
    return Path(str(resources.files("digitlens") / "recipes"))


# -- plot data -----------------------------------------------------------------


def emit_plotdata(csv_in: str | Path, style: str = "scaling", out_dir: str | Path | None = None,
                  x: str = "delta", y: str | None = None) -> list[Path]:
    """Gnuplot-ready text files from a scaling or sweep CSV.

    ``scaling``: ``(log 1/delta, log value)`` pairs plus a fit-line overlay.
    ``sweep``: one ``(log 1/delta, ratio)`` file per transform label.
    """
    src = Path(csv_in)
    with open(src, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{src} has no data rows")
    out = Path(out_dir) if out_dir else src.parent
    out.mkdir(parents=True, exist_ok=True)
    cols = rows[0].keys()
    if style == "scaling":
        y = y or next((c for c in ("mhigh", "value", "count") if c in cols), None)
        if x not in cols or y is None or y not in cols:
            raise ValueError(f"need columns {x!r} and a value column; found {list(cols)}")
        pts = [(math.log(1 / float(r[x])), math.log(float(r[y]))) for r in rows
               if float(r[y]) > 0]
        if len(pts) < 2:
            raise ValueError("need at least two positive rows")
        data = out / f"{src.stem}.loglog.dat"
        data.write_text("".join(f"{a!r} {b!r}\n" for a, b in pts))
        slope, icpt = np.polyfit([a for a, _ in pts], [b for _, b in pts], 1)
        fit = out / f"{src.stem}.fit.dat"
        xs = [pts[0][0], pts[-1][0]]
        fit.write_text(f"# slope {float(slope)!r}\n" +
                       "".join(f"{a!r} {float(slope * a + icpt)!r}\n" for a in xs))
        return [data, fit]
    if style == "sweep":
        need = {"label", x, "ratio"}
        if not need <= set(cols):
            raise ValueError(f"sweep CSV needs columns {sorted(need)}; found {list(cols)}")
        files = []
        by = {}
        for r in rows:
            by.setdefault(r["label"], []).append(r)
        for label, rs in by.items():
            safe = "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in label)
            path = out / f"{src.stem}.{safe}.dat"
            path.write_text("".join(f"{math.log(1 / float(r[x]))!r} {float(r['ratio'])!r}\n"
                                    for r in rs))
            files.append(path)
        return files
    raise ValueError(f"unknown plot style {style!r}")
