"""``lifted-mln`` command line front end."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import learner, numerics, oracle, polytope, wfomc
from .logic import ModelSpec, ParseError, load_database, load_model, stat_vector, variables

log = logging.getLogger("liftedmln")

EXIT_OK, EXIT_ERROR, EXIT_PARSE, EXIT_THETA, EXIT_BUDGET, EXIT_CAP = 0, 1, 2, 3, 4, 5


# ---------------------------------------------------------------------------
# report serialization
# ---------------------------------------------------------------------------

def fraction_text(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


def float_text(x: float) -> str:
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    return format(x, ".17g")


def to_json(obj, indent: int = 2, _level: int = 0) -> str:
    """Deterministic JSON: fractions as ``"p/q"`` strings, floats at 17 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, Fraction):
        return json.dumps(fraction_text(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return float_text(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {to_json(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, set, frozenset)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(not isinstance(v, (list, tuple, dict, np.ndarray)) for v in seq):
            return "[" + ", ".join(to_json(v, indent, _level + 1) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + to_json(v, indent, _level + 1) for v in seq) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _vectors(points):
    return [[fraction_text(v) for v in p] for p in points]


def _facet(f: polytope.Facet | None):
    if f is None:
        return None
    return {"normal": list(f.normal), "offset": f.offset}


# ---------------------------------------------------------------------------
# inputs
# ---------------------------------------------------------------------------

def parse_theta(text: str) -> tuple[Fraction, ...]:
    try:
        return tuple(Fraction(v.strip()) for v in text.split(","))
    except (ValueError, ZeroDivisionError) as exc:
        raise ParseError(f"bad theta {text!r}: {exc}") from exc


def _inputs(args):
    model = load_model(args.model)
    db = load_database(args.db, model.vocabulary) if args.db else None
    n = args.n if args.n is not None else (len(db.domain) if db else None)
    return model, db, n


def _require_n(n, model: ModelSpec):
    if n is None:
        raise ValueError("a domain size is needed: pass --n or --db")
    k = max((len(variables(f)) for f in model.formulas), default=1)
    if n < k:
        raise ValueError(f"domain size {n} is below the number of variables ({k})")
    return n


def _lam(model: ModelSpec) -> np.ndarray:
    return np.array([float(w) for w in model.weights], dtype=float)


# ---------------------------------------------------------------------------
# commands: each returns (exit code, report, summary lines)
# ---------------------------------------------------------------------------

def cmd_wfomc(args):
    model, _, n = _inputs(args)
    n = _require_n(n, model)
    lam = np.zeros(len(model.soft)) if args.counting else _lam(model)
    start = time.perf_counter()
    lifted = wfomc.LiftedModel(model, n, args.threads)
    log_z, _ = lifted.log_partition(lam)
    count = None
    if not np.any(lam):
        count = wfomc.exact_sum(lifted.tables, n)
    elapsed = time.perf_counter() - start
    report = {"command": "wfomc", "n": n, "lambda": lam.tolist(), "log_z": log_z,
              "count": None if count is None else str(count), "seconds": elapsed}
    lines = [f"log Z = {float_text(log_z)}"]
    if count is not None:
        lines.append(f"count = {count}")
    lines.append(f"time  = {elapsed:.3f}s")
    return EXIT_OK, report, lines


def cmd_stats(args):
    model, db, _ = _inputs(args)
    if db is None:
        raise ValueError("stats needs --db")
    theta = stat_vector(model, db)
    rows = [{"formula": str(i + 1), "fraction": t, "float": float(t)} for i, t in enumerate(theta)]
    report = {"command": "stats", "n": len(db.domain), "theta": list(theta),
              "theta_float": [float(t) for t in theta], "formulas": rows}
    lines = [f"Q[{i + 1}] = {fraction_text(t)} ({float(t):.6g})" for i, t in enumerate(theta)]
    return EXIT_OK, report, lines


def _theta_from(args, model, db):
    if args.theta:
        return parse_theta(args.theta)
    if db is not None:
        return stat_vector(model, db)
    return None


def cmd_polytope(args):
    model, db, n = _inputs(args)
    n = _require_n(n, model)
    poly = polytope.build_polytope(model, n, args.facets)
    report = {"command": "polytope", "n": n, "dim": poly.dim,
              "num_points": len(poly.points), "points": _vectors(poly.points),
              "vertices": _vectors(poly.vertices),
              "a_eq": _vectors(poly.a_eq), "c_eq": [fraction_text(c) for c in poly.c_eq],
              "facets": None if poly.facets is None else [_facet(f) for f in poly.facets]}
    lines = [f"{len(poly.points)} points, {len(poly.vertices)} vertices, affine dimension {poly.dim}"]
    theta = _theta_from(args, model, db)
    if theta is not None:
        member = polytope.membership(theta, poly)
        inter = polytope.interiority(theta, poly) if member.status == "inside" else None
        report["theta"] = {
            "value": list(theta),
            "status": member.status,
            "eta": None if inter is None else inter.eta,
            "eta_squared": None if inter is None or inter.eta_squared is None else inter.eta_squared,
            "certificate": None if member.certificate is None else
            {"normal": list(member.certificate[0]), "offset": member.certificate[1]},
            "facet": _facet(member.facet if inter is None else inter.facet),
        }
        eta = 0.0 if inter is None else inter.eta
        lines.append(f"theta is {member.status}" + (f", eta = {eta:.6g}" if eta is not None else ""))
    return EXIT_OK, report, lines


def cmd_learn(args):
    model, db, n = _inputs(args)
    theta = parse_theta(args.theta) if args.theta else None
    if theta is not None:
        db = None
    try:
        problem, _ = learner.make_problem(model, theta=theta, database=db, n=n, epsilon=args.epsilon,
                                          eta=args.eta, facets=args.facets, threads=args.threads)
    except learner.InfeasibleStatistics as exc:
        a, b = exc.certificate
        report = {"command": "learn", "status": "infeasible",
                  "certificate": {"normal": list(a), "offset": b}}
        return EXIT_THETA, report, [str(exc)]
    except learner.ZeroInteriority as exc:
        report = {"command": "learn", "status": "boundary", "eta": 0.0, "facet": _facet(exc.facet)}
        return EXIT_THETA, report, [str(exc)]
    result = learner.solve(problem, args.optimizer)
    report = {"command": "learn", "status": result.status, "optimizer": result.optimizer,
              "n": problem.n, "theta": list(result.theta), "lambda": result.lam,
              "weights": result.weights, "dual_value": result.value, "expected": result.expected,
              "moment_gap": result.moment_gap, "gap_bound": result.gap_bound,
              "eta": result.eta, "radius": result.radius, "log_world_count": result.log_count,
              "iterations": result.iterations, "oracle_calls": result.oracle_calls}
    lines = [f"status      {result.status} ({result.optimizer}, {result.iterations} iterations, "
             f"{result.oracle_calls} oracle calls)"]
    for i, (l, w) in enumerate(zip(result.lam, result.weights)):
        lines.append(f"formula {i + 1}: lambda = {l:.6g}, weight = {w:.6g}")
    lines.append(f"moment gap  {result.moment_gap:.3g}")
    return (EXIT_OK if result.ok else EXIT_BUDGET), report, lines


def _compare(name, lifted, brute, tol):
    if name in ("points", "vertices"):
        ok = set(lifted) == set(brute)
        diff = sorted(set(lifted) ^ set(brute))
        return {"quantity": name, "pass": ok, "lifted": len(lifted), "brute": len(brute),
                "mismatched": _vectors(diff)}
    if isinstance(lifted, (int, Fraction)) and not isinstance(lifted, bool):
        return {"quantity": name, "pass": lifted == brute, "lifted": str(lifted), "brute": str(brute)}
    a, b = np.atleast_1d(np.asarray(lifted, float)), np.atleast_1d(np.asarray(brute, float))
    both_inf = (a == b)
    err = np.where(both_inf, 0.0, np.abs(a - b) / np.maximum(1.0, np.abs(b)))
    worst = float(err.max(initial=0.0))
    return {"quantity": name, "pass": bool(worst <= tol), "lifted": a.tolist(), "brute": b.tolist(),
            "max_rel_diff": worst}


def cmd_check(args):
    model, _, n = _inputs(args)
    n = _require_n(n if n is not None else 3, model)
    tables = wfomc.build_tables(model.vocabulary, tuple(model.hard), model.formulas)
    if args.corrupt_tables:
        tables = wfomc.corrupt(tables)
    lifted = wfomc.LiftedModel(model, n, args.threads, tables=tables)
    rng = np.random.default_rng(args.seed)
    lams = [("model", _lam(model))] + [(f"random{k}", rng.uniform(-2, 2, len(model.soft))) for k in range(3)]
    lifted_side = {}
    for tag, lam in lams:
        lifted_side[tag] = lifted.log_partition(lam)
    count = wfomc.exact_sum(tables, n)
    points = polytope.enumerate_points(model, n) if model.soft else None
    report = {"command": "check", "n": n, "seed": args.seed}
    lines = []
    domain = oracle.as_domain(n)
    try:
        oracle.model_table(model, domain, args.brute_cap)
    except oracle.CapExceeded as exc:
        report["status"] = "brute_refused"
        report["reason"] = str(exc)
        report["lifted"] = {"log_z": {t: v[0] for t, v in lifted_side.items()}, "count": str(count)}
        return EXIT_CAP, report, [f"brute force refused: {exc}; lifted results only",
                                  f"count = {count}"]
    rows = []
    for tag, lam in lams:
        b_logz, b_exp = oracle.brute_log_partition(model, domain, lam, args.brute_cap)
        l_logz, l_exp = lifted_side[tag]
        rows.append(_compare(f"log_z[{tag}]", l_logz, b_logz, 1e-9))
        if model.soft and b_logz != numerics.NEG_INF:
            rows.append(_compare(f"expectations[{tag}]", l_exp, b_exp, 1e-9))
    rows.append(_compare("count", count, oracle.brute_world_count(model.vocabulary, model.hard, domain,
                                                                 args.brute_cap), 0))
    if points is not None:
        brute_points = oracle.brute_polytope_points(model, domain, args.brute_cap)
        rows.append(_compare("points", sorted(points), sorted(brute_points), 0))
        if points:
            rows.append(_compare("vertices", polytope.extract_vertices(points),
                                 polytope.extract_vertices(brute_points), 0))
    ok = all(r["pass"] for r in rows)
    report["status"] = "pass" if ok else "fail"
    report["quantities"] = rows
    for r in rows:
        lines.append(f"{'ok  ' if r['pass'] else 'FAIL'} {r['quantity']}")
    lines.append("check " + report["status"])
    return (EXIT_OK if ok else EXIT_ERROR), report, lines


COMMANDS = {"wfomc": cmd_wfomc, "stats": cmd_stats, "polytope": cmd_polytope,
            "learn": cmd_learn, "check": cmd_check}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lifted-mln",
                                description="Lifted counting, marginal polytopes and weight learning "
                                            "for two-variable Markov logic networks.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--model", required=True, help="model file (.mln)")
    p.add_argument("--db", help="training database")
    p.add_argument("--n", type=int, help="domain size (defaults to the database's)")
    p.add_argument("--theta", help="comma-separated target statistics, e.g. 1/2,1/3")
    p.add_argument("--epsilon", type=float, default=1e-3)
    p.add_argument("--eta", type=float, help="interiority override")
    p.add_argument("--optimizer", choices=learner.OPTIMIZERS, default="pgd")
    p.add_argument("--facets", choices=("auto", "full", "off"), default="auto")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", help="write the JSON report here")
    p.add_argument("--json", action="store_true", help="print the JSON report instead of the summary")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--brute-cap", type=int, default=oracle.DEFAULT_CAP, help="ground-atom cap for brute force")
    p.add_argument("--counting", action="store_true", help="wfomc: ignore soft weights and count models")
    p.add_argument("--corrupt-tables", action="store_true", help=argparse.SUPPRESS)
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
    if args.epsilon <= 0:
        parser.error("--epsilon must be positive")
    if args.eta is not None and args.eta <= 0:
        parser.error("--eta must be positive")
    if args.threads < 1:
        parser.error("--threads must be at least 1")
    try:
        code, report, lines = COMMANDS[args.command](args)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except oracle.CapExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    text = to_json(report) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    if args.json:
        sys.stdout.write(text)
    else:
        print("\n".join(lines))
    return code


if __name__ == "__main__":
    sys.exit(main())
