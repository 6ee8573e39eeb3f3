"""Command line front end: ``foamck solve | verify | check-ideal | example-one | report``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import expr as E
from .atomic import write_atomic
from .config import RunConfig, load_config
from .errors import BudgetViolation, FoamError, ParseError, PreconditionError
from .gck import GlobalSolution, construct_global_solution, grid_points, parse_pde, verify_residual
from .nets import (INCONCLUSIVE, REFUTED, VERIFIED, IdealSpec, Net, check_membership,
                   diagonal_embed, example_one_net)
from .parser import parse_expr, to_text
from .posets import NaturalPoset
from .sets import (SingPrimitive, SingularitySet, constant_family, dump_sigma, dyadic_set,
                   load_sigma, measure_bound, rational_set)

EXIT_OK = 0
EXIT_FAILED = 1          # refuted membership, or residual above tolerance
EXIT_BUDGET = 2
EXIT_PARSE = 3
EXIT_INCONCLUSIVE = 4
EXIT_MISSING = 5
EXIT_ERROR = 6           # any other precondition or construction failure
EXIT_USAGE = 64

FROZEN_STAMP = "1970-01-01T00:00:00+00:00"
VERDICT_EXIT = {VERIFIED: EXIT_OK, REFUTED: EXIT_FAILED, INCONCLUSIVE: EXIT_INCONCLUSIVE}


class _Parser(argparse.ArgumentParser):
    # keep usage errors apart from the budget-violation status
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _say(msg):
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------------------
# output helpers

def dump_json(obj):
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _stamp(frozen):
    if frozen:
        return FROZEN_STAMP
    return datetime.now(timezone.utc).replace(microsecond=0).isoformat()


def _num(v):
    """JSON-safe float (infinities become strings)."""
    v = float(v)
    return v if math.isfinite(v) else repr(v)


def _axis_names(dim):
    return ["t"] + [f"y{i}" for i in range(1, dim)]


# ---------------------------------------------------------------------------
# configuration

def _build_config(args, pde=None, base=None):
    """Defaults, then problem-file ``config`` lines, then ``--config``, ``--set`` and flags."""
    cfg = base or RunConfig()
    if pde is not None and pde.config:
        cfg = cfg.updated(pde.config)
    if getattr(args, "config", None):
        cfg = load_config(args.config, cfg)
    changes = {}
    for item in getattr(args, "set", None) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise PreconditionError(f"--set expects key=value, got {item!r}")
        changes[key.strip()] = value.strip()
    for name in ("workers", "tol", "samples", "grid", "seed", "tail_budget", "max_order"):
        value = getattr(args, name, None)
        if value is not None:
            changes[name] = value
    if getattr(args, "margin", None) is not None:
        changes["verify_margin"] = args.margin
    return cfg.updated(changes)


def _public_config(cfg):
    out = cfg.to_dict()
    out.pop("workers")   # results must not depend on it
    return out


# ---------------------------------------------------------------------------
# solve

def _seeded(sol, x):
    """True when the segment from the initial surface to ``x`` crosses no recorded pole."""
    hit = sol.locate(x)
    if hit is None:
        return False
    col = sol.columns[hit[0]]
    t0 = sol.pde.t0
    a, b = sorted((t0, x[0]))
    return not any(a <= p <= b for p in col.poles) and not any(
        s_lo <= b and s_hi >= a for s_lo, s_hi in col.slabs)


def _oracle_value(oracle, x):
    if oracle is None:
        return math.nan
    try:
        return float(E.evaluate(oracle, x))
    except (ZeroDivisionError, OverflowError, ValueError):
        return math.nan   # the closed form itself is singular here


def _sample_rows(sol, points):
    V = len(sol.deltas)
    oracle = sol.pde.oracle
    rows = []
    for x in points:
        lvl = sol.compacts.level(x)
        dist = sol.compacts.distance(x)
        val = sol.value(x, V - 1)
        ref = _oracle_value(oracle, x)
        rows.append((x, lvl, dist, val, ref, _seeded(sol, x)))
    return rows


def _oracle_summary(rows, margin):
    errs = [abs(val - ref) for x, lvl, dist, val, ref, seeded in rows
            if lvl == 0 and dist >= margin and seeded and math.isfinite(ref)]
    return {"max_abs_error": max(errs) if errs else None, "points": len(errs),
            "margin": margin, "region": "seeded, level 0, distance >= margin"}


def _solution_report(sol, pde, problem_name, rows, frozen, elapsed):
    prims = sol.sigma.all_primitives()
    bound = measure_bound(sol.sigma)
    report = {
        "tool": "foamck",
        "version": __version__,
        "generated": _stamp(frozen),
        "problem": {
            "file": problem_name,
            "sha256": hashlib.sha256(pde.text.encode()).hexdigest(),
            "dim": pde.dim,
            "domain": [list(p) for p in pde.domain.as_pairs()],
            "order": pde.order,
            "t0": pde.t0,
            "rhs": [to_text(g) for g in pde.rhs_list],
            "oracle": to_text(pde.oracle) if pde.oracle is not None else None,
        },
        "config": _public_config(sol.cfg),
        "columns": len(sol.columns),
        "tiles": sum(len(c.tiles) for c in sol.columns),
        "steps": sum(c.steps for c in sol.columns),
        "sigma": {
            "empty": not prims,
            "tag": sol.sigma.tag.value,
            "primitives": len(prims),
            "measure_bound": bound.value,
            "poles": sum(len(c.poles) for c in sol.columns),
            "slabs": sum(len(c.slabs) for c in sol.columns),
        },
        "cutoff_deltas": list(sol.deltas),
        "stabilization": sol.stabilization_table(),
        "samples": {"file": "samples.csv", "count": len(rows)},
        "notes": list(sol.notes),
    }
    if pde.oracle is not None:
        report["oracle"] = _oracle_summary(rows, sol.cfg.verify_margin)
    if not frozen:
        report["elapsed_seconds"] = round(elapsed, 3)
    return report


def cmd_solve(args):
    path = Path(args.problem)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        _say(f"cannot read problem: {exc}")
        return EXIT_MISSING
    try:
        pde, data = parse_pde(text)
    except ParseError as exc:
        _say(f"{path}:{exc.line or 0}: parse error: {exc.message}")
        return EXIT_PARSE
    cfg = _build_config(args, pde)
    start = time.perf_counter()
    try:
        sol = construct_global_solution(pde, data, cfg)
    except BudgetViolation as exc:
        _say(f"budget violation: {exc}")
        return EXIT_BUDGET
    rows = _sample_rows(sol, grid_points(pde.domain, cfg.grid))
    elapsed = time.perf_counter() - start
    out = Path(args.out)
    report = _solution_report(sol, pde, path.name, rows, args.frozen_clock, elapsed)
    names = _axis_names(pde.dim)
    csv_rows = [[*map(repr, x), "" if lvl is None else lvl, repr(dist), repr(val), repr(ref),
                 int(seeded)] for x, lvl, dist, val, ref, seeded in rows]
    write_atomic(out / "problem.pde", text)
    write_atomic(out / "solution.json", json.dumps(sol.to_dict(), sort_keys=True) + "\n")
    write_atomic(out / "sigma.txt", dump_sigma(sol.sigma))
    write_atomic(out / "samples.csv",
                 _csv_text(names + ["level", "distance", "psi", "oracle", "seeded"], csv_rows))
    write_atomic(out / "report.json", dump_json(report))
    s = report["sigma"]
    _say(f"solved: {report['columns']} columns, {report['tiles']} tiles, "
         f"{s['primitives']} singular primitives, measure bound {s['measure_bound']:.3g}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify

def _load_run(directory):
    d = Path(directory)
    needed = [d / "problem.pde", d / "solution.json"]
    missing = [p.name for p in needed if not p.is_file()]
    if missing:
        raise FileNotFoundError(f"missing {', '.join(missing)} in {d}")
    pde, data = parse_pde(needed[0].read_text(encoding="utf-8"))
    payload = json.loads(needed[1].read_text(encoding="utf-8"))
    return GlobalSolution.from_dict(pde, data, payload)


def cmd_verify(args):
    try:
        sol = _load_run(args.run)
    except (FileNotFoundError, json.JSONDecodeError, KeyError) as exc:
        _say(f"cannot load run: {exc}")
        return EXIT_MISSING
    cfg = sol.cfg = _build_config(args, base=sol.cfg)
    points = grid_points(sol.pde.domain, cfg.grid)
    if args.points:
        points = [tuple(float(v) for v in ln.replace(",", " ").split())
                  for ln in Path(args.points).read_text().splitlines() if ln.strip()]
    rep = verify_residual(sol, points=points, tol=cfg.tol, margin=cfg.verify_margin)
    failing = []
    for x, lvl, dist, res, in_region in rep["rows"]:
        if in_region and not abs(res) <= rep["tol"]:
            where = sol.locate(x)
            failing.append({"x": list(x), "residual": res,
                            "column": list(sol.columns[where[0]].index) if where else None,
                            "tile": where[1] if where else None,
                            "t_range": list(where[2]) if where else None})
    tiles = sorted({(tuple(f["column"]), f["tile"]) for f in failing if f["column"] is not None})
    out = {
        "passed": rep["passed"],
        "tol": rep["tol"],
        "margin": rep["margin"],
        "region_sup": rep["region_sup"],
        "region_points": rep["region_points"],
        "skipped_points": rep["skipped_points"],
        "eventually_constant": rep["eventually_constant"],
        "stabilization": rep["stabilization"],
        "sup_residual": [[_num(v) for v in row] for row in rep["sup_residual"]],
        "failing_tiles": [{"column": list(c), "tile": j} for c, j in tiles],
        "failing_points": len(failing),
    }
    run = Path(args.run)
    names = _axis_names(sol.pde.dim)
    rows = [[*map(repr, x), lvl, repr(dist), repr(res), int(reg)]
            for x, lvl, dist, res, reg in rep["rows"]]
    write_atomic(run / "residuals.csv",
                 _csv_text(names + ["level", "distance", "residual", "in_region"], rows))
    write_atomic(run / "verify.json", dump_json(out))
    if rep["skipped_points"]:
        _say(f"notice: skipped {rep['skipped_points']} grid points on or next to the singular set")
    if rep["region_points"] == 0:
        _say("no grid point lies in the verification region")
    if not rep["eventually_constant"]:
        _say("terms do not stabilize on some compact")
    for c, j in tiles[:20]:
        _say(f"failing tile: column {list(c)} tile {j}")
    _say(f"verify: sup residual {rep['region_sup']:.3g} (tol {rep['tol']:.3g}) over "
         f"{rep['region_points']} points -> {'pass' if rep['passed'] else 'FAIL'}")
    return EXIT_OK if rep["passed"] else EXIT_FAILED


# ---------------------------------------------------------------------------
# ideal membership

def _parse_domain(text):
    vals = [float(E.evaluate(parse_expr(v), ())) for v in text.split()]
    if not vals or len(vals) % 2:
        raise ParseError("domain needs lower/upper pairs")
    return E.DomainBox(tuple(vals[0::2]), tuple(vals[1::2]))


def load_sigma_spec(spec, domain):
    """``dyadic:<budget>``, ``rational:<max den>``, ``points:<x>,<x>,...`` (first axis) or a file."""
    kind, sep, arg = spec.partition(":")
    if sep and kind in ("dyadic", "rational", "points"):
        try:
            if kind == "dyadic":
                return dyadic_set(domain, int(arg))
            if kind == "rational":
                return rational_set(domain, int(arg))
            coords = [tuple(float(v) for v in p.split("/")) for p in arg.split(",") if p]
        except ValueError as exc:
            raise ParseError(f"bad singular set {spec!r}: {exc}") from exc
        return SingularitySet.finite(domain, [SingPrimitive.point(c) for c in coords])
    return load_sigma(Path(spec).read_text(encoding="utf-8"))


def _net_from_lines(lines, dim):
    """Piecewise-constant-in-index net: the term at ``n`` is the last expression starting at or before ``n``."""
    pieces = []
    for no, line in lines:
        start, _, src = line.partition(" ")
        try:
            k = int(start)
        except ValueError as exc:
            raise ParseError(f"expected '<start_index> <expr>', got {line!r}", line=no) from exc
        try:
            pieces.append((k, parse_expr(src.strip(), dim=dim)))
        except ParseError as exc:
            raise ParseError(exc.message, pos=exc.pos, line=no) from exc
    pieces.sort(key=lambda p: p[0])
    if not pieces or pieces[0][0] != 0:
        raise ParseError("the first piece must start at index 0")
    starts = [k for k, _ in pieces]
    if len(set(starts)) != len(starts):
        raise ParseError("duplicate start index")
    poset = NaturalPoset()
    if len(pieces) == 1:
        return diagonal_embed(pieces[0][1], poset), None

    def term(n):
        e = pieces[0][1]
        for k, expr in pieces:
            if k > n:
                break
            e = expr
        return e
    return Net(poset, term, name="pieces"), None


def load_net_spec(spec, sigma):
    """Returns ``(net, family or None)``."""
    dim = sigma.domain.dim
    if spec == "example-one":
        _, net, family = example_one_net(sigma)
        return net, family
    if spec.startswith("diagonal:"):
        return diagonal_embed(parse_expr(spec[len("diagonal:"):], dim=dim), NaturalPoset()), None
    text = Path(spec).read_text(encoding="utf-8")
    lines = [(i + 1, ln.split("#", 1)[0].strip()) for i, ln in enumerate(text.splitlines())]
    return _net_from_lines([(no, ln) for no, ln in lines if ln], dim)


def draw_samples(sigma, count, seed):
    """``count`` uniform points of the domain outside ``sigma`` (deterministic in ``seed``)."""
    rng = np.random.default_rng(seed)
    lo = np.array(sigma.domain.lower)
    hi = np.array(sigma.domain.upper)
    out = []
    tries = 0
    while len(out) < count:
        tries += 1
        if tries > 100 * count + 1000:
            raise FoamError("could not draw samples outside the singular set")
        x = tuple(float(v) for v in lo + (hi - lo) * rng.random(len(lo)))
        if sigma.contains(x) is not True and sigma.linf_distance(x) > 0:
            out.append(x)
    return out


def _run_membership(net, family, sigma, ideal, cfg):
    samples = draw_samples(sigma, cfg.samples, cfg.seed)
    poset = net.poset
    if ideal == "I":
        spec = IdealSpec.I(sigma, family or constant_family(sigma, poset))
    else:
        spec = IdealSpec.J(sigma, poset)
    return check_membership(net, spec, samples, cfg.max_order, cfg.tail_budget)


def _emit_verdict(verdict, args, frozen):
    payload = verdict.to_dict()
    payload["generated"] = _stamp(frozen)
    text = dump_json(payload)
    if args.out:
        write_atomic(Path(args.out) / "verdict.json", text)
    sys.stdout.write(text)
    _say(f"membership: {verdict.outcome}")
    return VERDICT_EXIT[verdict.outcome]


def cmd_check_ideal(args):
    try:
        domain = _parse_domain(args.domain)
        sigma = load_sigma_spec(args.sigma, domain)
        net, family = load_net_spec(args.net, sigma)
    except ParseError as exc:
        where = f" (line {exc.line})" if exc.line else ""
        _say(f"parse error{where}: {exc.message}")
        return EXIT_PARSE
    except OSError as exc:
        _say(f"cannot read input: {exc}")
        return EXIT_MISSING
    cfg = _build_config(args)
    ideal = args.ideal or ("I" if args.net == "example-one" else "J")
    verdict = _run_membership(net, family, sigma, ideal, cfg)
    return _emit_verdict(verdict, args, args.frozen_clock)


def cmd_example_one(args):
    try:
        domain = _parse_domain(args.domain)
        sigma = load_sigma_spec(args.sigma, domain)
    except ParseError as exc:
        _say(f"parse error: {exc.message}")
        return EXIT_PARSE
    except OSError as exc:
        _say(f"cannot read input: {exc}")
        return EXIT_MISSING
    cfg = _build_config(args)
    _, net, family = example_one_net(sigma)
    verdict = _run_membership(net, family, sigma, "I", cfg)
    if verdict.outcome == VERIFIED and verdict.numeric_used:
        verdict.notes.append("numeric zeros were used")
    return _emit_verdict(verdict, args, args.frozen_clock)


# ---------------------------------------------------------------------------
# report

def cmd_report(args):
    from .plotting import render_run
    try:
        written = render_run(Path(args.run))
    except FileNotFoundError as exc:
        _say(f"cannot load run: {exc}")
        return EXIT_MISSING
    for p in written:
        print(p)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing

def build_parser():
    p = _Parser(prog="foamck", description="Generalized solutions of analytic PDEs off "
                "nowhere dense singular sets, and vanishing-ideal membership checks.")
    p.add_argument("--version", action="version", version=f"foamck {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="JSON, YAML or 'key value' config file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one config value (repeatable)")
        sp.add_argument("--frozen-clock", action="store_true",
                        help="write a fixed timestamp so reports are byte-reproducible")
        sp.add_argument("--workers", type=int)

    sp = sub.add_parser("solve", help="construct a global solution")
    sp.add_argument("problem")
    sp.add_argument("--out", default="foamck-run")
    sp.add_argument("--grid", type=int, help="sample grid points per axis")
    sp.add_argument("--margin", type=float, help="oracle comparison distance from the singular set")
    common(sp)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("verify", help="residual check of a solved run")
    sp.add_argument("run", help="directory written by solve")
    sp.add_argument("--tol", type=float)
    sp.add_argument("--grid", type=int)
    sp.add_argument("--margin", type=float)
    sp.add_argument("--points", help="file of sample points, one per line")
    common(sp)
    sp.set_defaults(func=cmd_verify)

    for name, func, helptext in (("check-ideal", cmd_check_ideal, "membership of a net"),
                                 ("example-one", cmd_example_one, "bump-sum net over a set")):
        sp = sub.add_parser(name, help=helptext)
        if name == "check-ideal":
            sp.add_argument("net", help="diagonal:<expr>, example-one, or a file of "
                                        "'<start_index> <expr>' lines")
        sp.add_argument("sigma", help="dyadic:<budget>, rational:<max den>, "
                                      "points:<x>,<x>,... or a singular-set file")
        if name == "check-ideal":
            sp.add_argument("--ideal", choices=("J", "I"))
        sp.add_argument("--domain", default="0 1", help="lower/upper pairs, e.g. '0 1'")
        sp.add_argument("--samples", type=int)
        sp.add_argument("--tail-budget", dest="tail_budget", type=int)
        sp.add_argument("--max-order", dest="max_order", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out")
        common(sp)
        sp.set_defaults(func=func)

    sp = sub.add_parser("report", help="render plots for a solved run")
    sp.add_argument("run")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        _say(f"parse error: {exc}")
        return EXIT_PARSE
    except BudgetViolation as exc:
        _say(f"budget violation: {exc}")
        return EXIT_BUDGET
    except FoamError as exc:
        _say(f"error: {exc}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
