"""Command-line front end: ``digitlens <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from pathlib import Path

from . import arithmetic, counting, fourier, geometry
from .core import hausdorff_dim, system_from_json
from .recipes import emit_plotdata, load_recipes, run_recipe, shipped_recipe_dir, write_csv


def _json_arg(text: str):
    """Inline JSON, or a path to a JSON file (optionally prefixed with @)."""
    if text.startswith("@"):
        text = text[1:]
    p = Path(text)
    if not text.lstrip().startswith(("{", "[")) and p.exists():
        return json.loads(p.read_text())
    return json.loads(text)


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _fracs(text: str) -> tuple[Fraction, ...]:
    return tuple(Fraction(v.strip()) for v in text.split(",") if v.strip())


def _ladder(text: str) -> list[int]:
    if ".." in text:
        a, b = text.split("..")
        return list(range(int(a), int(b) + 1))
    return [int(v) for v in text.split(",")]


def _emit(args, obj=None, rows=None, stem="out"):
    if obj is not None:
        print(json.dumps(obj, indent=2, default=str))
    if rows:
        if args.out:
            Path(args.out).mkdir(parents=True, exist_ok=True)
            write_csv(Path(args.out) / f"{stem}.csv", rows)
        if obj is None:
            keys = list(rows[0])
            print(",".join(keys))
            for r in rows:
                print(",".join(repr(r[k]) if isinstance(r[k], float) else str(r[k]) for k in keys))
    if obj is not None and args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / f"{stem}.json").write_text(json.dumps(obj, indent=2, default=str) + "\n")


def _config(args) -> dict:
    cfg = {}
    if args.config:
        cfg.update(json.loads(Path(args.config).read_text()))
    if args.tol is not None:
        cfg["tol"] = args.tol
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.depth is not None:
        cfg["depth"] = args.depth
    return cfg


# -- subcommands -------------------------------------------------------------


def cmd_dim(args, cfg):
    s = system_from_json(_json_arg(args.system))
    d = hausdorff_dim(s)
    _emit(args, {"dim": float(d), "exact": str(d) if isinstance(d, Fraction) else None}, stem="dim")


def cmd_l1bound(args, cfg):
    s = system_from_json(_json_arg(args.system))
    tol = cfg.get("tol", 1e-6)
    if args.method == "algorithm":
        rep = fourier.l1_lower_bound_algorithm(s, tol)
    elif args.method == "crude":
        rep = fourier.l1_lower_bound_crude(s)
    else:
        rep = fourier.l1_lower_bound_rectangle(s)
    _emit(args, rep.to_json(), stem="l1bound")


def cmd_fourier(args, cfg):
    s = system_from_json(_json_arg(args.system))
    v = fourier.fourier_transform(s, _floats(args.xi), cfg.get("tol", 1e-12))
    _emit(args, {"re": v.value.real, "im": v.value.imag, "abs": abs(v.value),
                 "error_bound": v.error_bound, "terms": v.terms}, stem="fourier")


def cmd_partialsum(args, cfg):
    s = system_from_json(_json_arg(args.system))
    theta = _floats(args.theta) if args.theta else [0.0] * s.n
    rows = []
    for k in _ladder(args.k):
        ps = (fourier.partial_sum_l2(s, k, window=args.window) if args.squared else
              fourier.partial_sum_l1(s, k, theta, window=args.window))
        rows.append({"k": k, "theta": " ".join(repr(t) for t in ps.theta),
                     "value": ps.value, "errbar": ps.errbar})
    _emit(args, rows=rows, stem="partialsum")


def _count_args(args, cfg):
    s = system_from_json(_json_arg(args.system))
    m = geometry.manifold_from_json(_json_arg(args.manifold))
    return s, m


def cmd_count(args, cfg):
    s, m = _count_args(args, cfg)
    depth = args.depth if args.depth is not None else cfg.get("depth")
    if depth is None:
        raise SystemExit("count needs --depth")
    region = None
    if args.region:
        v = _fracs(args.region)
        region = tuple(zip(v[0::2], v[1::2]))
    r = counting.count_cells_near(s, m, args.delta, depth, region=region,
                                 max_nodes=cfg.get("max_nodes"))
    _emit(args, rows=[r.row()], stem="count")


def cmd_scaling(args, cfg):
    s, m = _count_args(args, cfg)
    sc = counting.neighborhood_measure_scaling(s, m, _ladder(args.ladder),
                                               depth_offset=args.depth_offset,
                                               max_nodes=cfg.get("max_nodes"))
    rows = [c.row() | {"ratio": r} for c, r in zip(sc.counts, sc.ratios)]
    _emit(args, rows=rows, stem="scaling")
    if args.out:
        (Path(args.out) / "scaling.fit.json").write_text(json.dumps(sc.to_json(), indent=2) + "\n")


def cmd_sweep(args, cfg):
    from .recipes import _op_sweep
    prm = {"system": _json_arg(args.system), "manifold": _json_arg(args.manifold),
           "grid": _json_arg(args.grid), "depth_offset": args.depth_offset,
           "ladder": [min(_ladder(args.ladder)), max(_ladder(args.ladder))]}
    _, rows = _op_sweep(prm, cfg)
    _emit(args, rows=rows, stem="sweep")


def cmd_lsearch(args, cfg):
    s, m = _count_args(args, cfg)
    res = counting.l_search(s, m, _ladder(args.ladder), args.c, args.lmax,
                            depth_offset=args.depth_offset, max_nodes=cfg.get("max_nodes"))
    _emit(args, res.to_json(), stem="lsearch")
    return 0 if (res.found or not res.applicable) else 1


def cmd_sharpness(args, cfg):
    ls = _ladder(args.l)
    D1, D2 = [int(v) for v in args.d1.split(",")], [int(v) for v in args.d2.split(",")]
    rows = [counting.sharpness_first_row(args.p, D1, D2, args.k, l,
                                         max_nodes=cfg.get("max_nodes")) for l in ls]
    _emit(args, rows=[r.to_json() for r in rows], stem="sharpness")
    if len(ls) >= 3:
        fit = counting.fit_exponent([(r.delta, r.count) for r in rows])
        s1 = math.log(len(D1)) / math.log(args.p)
        print(json.dumps({"slope": fit.exponent, "target": (args.k - 1) * s1 / args.k}))


def _cover_emit(args, rep, stem):
    out = rep.to_json()
    out["runs"] = [{"lo": str(r.lo), "hi": str(r.hi), "bins": r.bins}
                   for r in arithmetic.interval_detect(rep)]
    if not args.bins:
        out.pop("bins")
    rows = [{"bin_lo": lo, "bin_hi": hi, "status": st} for lo, hi, st in rep.csv_rows()]
    print(json.dumps(out, indent=2, default=str))
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        write_csv(Path(args.out) / f"{stem}.csv", rows)
        (Path(args.out) / f"{stem}.json").write_text(
            json.dumps(rep.to_json(), indent=2) + "\n")


def cmd_distset(args, cfg):
    s = system_from_json(_json_arg(args.system))
    depth = args.depth if args.depth is not None else cfg.get("depth", 4)
    rep = arithmetic.pinned_distance_cover(s, _fracs(args.pin), _fracs(args.target),
                                           Fraction(args.delta), depth)
    _cover_emit(args, rep, "distset")


def _binary_cmd(kind):
    def run(args, cfg):
        a = system_from_json(_json_arg(args.a))
        b = system_from_json(_json_arg(args.b))
        depth = args.depth if args.depth is not None else cfg.get("depth", 4)
        rep = arithmetic.binary_map_cover(a, b, args.map or kind, _fracs(args.target),
                                          Fraction(args.delta), depth)
        _cover_emit(args, rep, args.map or kind)
    return run


def _run_one(item):
    recipe, out, cfg = item
    return run_recipe(recipe, out, cfg).to_json()


def cmd_run(args, cfg):
    recipes = []
    broken = []
    for path in args.recipes:
        p = Path(path)
        if not p.exists() and (shipped_recipe_dir() / f"{path}.json").exists():
            p = shipped_recipe_dir() / f"{path}.json"
        try:
            recipes.extend(load_recipes(p))
        except Exception as exc:
            broken.append({"recipe": str(path), "passed": False, "criteria": [], "results": {},
                           "artifacts": [], "wall_clock": 0.0, "nodes": 0,
                           "seed": cfg.get("seed"), "error": f"{type(exc).__name__}: {exc}"})
    names = [r.get("name") if isinstance(r, dict) else None for r in recipes]
    if len(names) != len(set(names)):
        raise ValueError("recipe names must be unique within a run")
    items = [(r, args.out, cfg) for r in recipes]
    if args.jobs and args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as ex:
            reports = list(ex.map(_run_one, items))
    else:
        reports = [_run_one(it) for it in items]
    reports = broken + reports
    for rep in reports:
        flag = "PASS" if rep["passed"] else "FAIL"
        print(f"{flag} {rep['recipe']} ({rep['wall_clock']:.2f}s)"
              + (f" error: {rep['error']}" if rep["error"] else ""))
        for c in rep["criteria"]:
            print(f"    {'ok ' if c['passed'] else 'BAD'} {c['key']} = {c['value']} "
                  f"[{c['min']}, {c['max']}]")
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "run_report.json").write_text(json.dumps(reports, indent=2, default=str)
                                                        + "\n")
    return 0 if all(r["passed"] for r in reports) else 1


def cmd_plot(args, cfg):
    files = emit_plotdata(args.csv, args.style, args.out)
    for f in files:
        print(f)


# -- parser ------------------------------------------------------------------


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    # subcommands repeat the global flags; SUPPRESS keeps them from resetting
    # values given before the subcommand name
    def d(v):
        return argparse.SUPPRESS if suppress else v

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", type=float, default=d(None), help="numerical tolerance")
    common.add_argument("--depth", type=int, default=d(None), help="tree depth")
    common.add_argument("--jobs", type=int, default=d(1), help="parallel recipes")
    common.add_argument("--seed", type=int, default=d(None), help="random seed")
    common.add_argument("--out", default=d(None), help="output directory for artifacts")
    common.add_argument("--config", default=d(None), help="JSON config file")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags(True)
    ap = argparse.ArgumentParser(prog="digitlens", parents=[_global_flags(False)],
                                 description="Missing-digit sets: Fourier bounds, counting "
                                             "near manifolds, arithmetic coverage.")
    sub = ap.add_subparsers(dest="cmd", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.set_defaults(fn=fn)
        return p

    p = add("dim", cmd_dim, "Hausdorff dimension of a digit system")
    p.add_argument("--system", required=True)
    p = add("l1bound", cmd_l1bound, "lower bound for the Fourier l1 dimension")
    p.add_argument("--system", required=True)
    p.add_argument("--method", choices=["algorithm", "crude", "rectangle"], default="algorithm")
    p = add("fourier", cmd_fourier, "Fourier transform at one frequency")
    p.add_argument("--system", required=True)
    p.add_argument("--xi", required=True, help="comma-separated frequency vector")
    p = add("partialsum", cmd_partialsum, "l1 (or l2) partial sums")
    p.add_argument("--system", required=True)
    p.add_argument("--k", required=True, help="k, list a,b or range a..b")
    p.add_argument("--theta", default=None)
    p.add_argument("--window", choices=["block", "symmetric"], default="block")
    p.add_argument("--squared", action="store_true", help="l2 sums at theta = 0")

    for name, fn, help_ in (("count", cmd_count, "count cells near a manifold"),
                            ("scaling", cmd_scaling, "neighbourhood measure over a ladder"),
                            ("lsearch", cmd_lsearch, "search for the free prefix l")):
        p = add(name, fn, help_)
        p.add_argument("--system", required=True)
        p.add_argument("--manifold", required=True)
        if name == "count":
            p.add_argument("--delta", type=float, required=True)
            p.add_argument("--region", default=None, help="lo1,hi1,lo2,hi2,...")
        else:
            p.add_argument("--ladder", default="2..6")
            p.add_argument("--depth-offset", type=int, default=0)
        if name == "lsearch":
            p.add_argument("--lmax", type=int, default=4)
            p.add_argument("--c", type=float, default=0.1)
    p = add("sweep", cmd_sweep, "ratios over a grid of similarity transforms")
    p.add_argument("--system", required=True)
    p.add_argument("--manifold", required=True)
    p.add_argument("--grid", required=True, help='{"radii": [...], "center": [...]} or '
                                                 '{"transforms": [...]}')
    p.add_argument("--ladder", default="2..4")
    p.add_argument("--depth-offset", type=int, default=0)
    p = add("sharpness", cmd_sharpness, "first-row counts under an order-k contact")
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--d1", required=True, help="comma-separated digits")
    p.add_argument("--d2", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--l", default="1..3")
    p = add("distset", cmd_distset, "pinned distance set coverage")
    p.add_argument("--system", required=True)
    p.add_argument("--pin", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--delta", required=True)
    p.add_argument("--bins", action="store_true", help="print every bin")
    for name, kind in (("sumset", "sum"), ("prodset", "product")):
        p = add(name, _binary_cmd(kind), f"{kind} set coverage")
        p.add_argument("--a", required=True)
        p.add_argument("--b", required=True)
        p.add_argument("--target", required=True)
        p.add_argument("--delta", required=True)
        p.add_argument("--map", choices=sorted(arithmetic.MAPS), default=None)
        p.add_argument("--bins", action="store_true")
    p = add("run", cmd_run, "run recipe files (or shipped recipe names)")
    p.add_argument("recipes", nargs="+")
    p = add("emit-plotdata", cmd_plot, "gnuplot files from a CSV")
    p.add_argument("--csv", required=True)
    p.add_argument("--style", choices=["scaling", "sweep"], default="scaling")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = _config(args)
    try:
        rc = args.fn(args, cfg)
    except (ValueError, KeyError, TypeError, RuntimeError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return int(rc or 0)


if __name__ == "__main__":
    sys.exit(main())
