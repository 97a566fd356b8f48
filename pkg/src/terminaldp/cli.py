"""Command-line surface.

Problem documents are JSON (finite transition tables or linear-grid
builders), value and policy files are two-column CSV, and solve traces are
CSV with round-trip-exact floats.  Exit codes: 0 success, 1 usage, 2 invalid
input, 3 non-convergence, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys

from . import assumptions, fixtures, grid, minimax, model, pi, vi
from .model import (INF, OpiSeedError, Problem, ProblemValidationError,
                    SolverError)
from .vi import SolveTrace, TraceRow

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_NO_CONVERGENCE = 3
EXIT_IO = 4


class ProblemFileError(SolverError):
    """A problem/value/policy document failed to parse."""


class _UsageError(Exception):
    pass


def _fmt(v) -> str:
    if math.isinf(v):
        return "inf"
    return f"{float(v):.17g}"


def _parse_cost(raw, where):
    if raw == "inf":
        return INF
    try:
        return float(raw)
    except (TypeError, ValueError):
        raise ProblemFileError(f"{where}: cost {raw!r} is not a number "
                               "or 'inf'") from None


# ---------------------------------------------------------------------------
# Problem documents
# ---------------------------------------------------------------------------

def parse_problem_file(path) -> Problem:
    """Read and validate a problem document; raises with file locations on
    parse failure and with the full validation report on semantic failure."""
    try:
        with open(path) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ProblemFileError(
                    f"{path}: line {exc.lineno} column {exc.colno}: "
                    f"{exc.msg}") from None
    except OSError:
        raise
    kind = doc.get("kind")
    if kind == "finite":
        problem = _parse_finite(doc, path)
    elif kind == "linear_grid":
        problem = _parse_linear_grid(doc, path)
    else:
        raise ProblemFileError(
            f"{path}: kind must be 'finite' or 'linear_grid', got {kind!r}")
    report = model.validate(problem)
    if not report.ok:
        raise ProblemValidationError(report)
    return problem


def _parse_finite(doc, path) -> Problem:
    for key in ("states", "terminal", "actions"):
        if key not in doc:
            raise ProblemFileError(f"{path}: missing field {key!r}")
    states = list(doc["states"])
    by_token = {str(s): s for s in states}
    def resolve(token, where):
        if token in by_token.values():
            return token
        if str(token) in by_token:
            return by_token[str(token)]
        raise ProblemFileError(f"{path}: {where}: unknown state {token!r}")
    terminal = [resolve(t, "terminal") for t in doc["terminal"]]
    disturbances = doc.get("disturbances")
    controls = {}
    arcs = {}
    for token, actions in doc["actions"].items():
        x = resolve(token, "actions")
        ids = []
        for i, action in enumerate(actions):
            where = f"actions[{token}][{i}]"
            if "id" not in action:
                raise ProblemFileError(f"{path}: {where}: missing control id")
            u = action["id"]
            ids.append(u)
            if disturbances is None:
                if "next" not in action or "cost" not in action:
                    raise ProblemFileError(
                        f"{path}: {where}: need 'next' and 'cost'")
                arcs[(x, u)] = (resolve(action["next"], where),
                                _parse_cost(action["cost"], f"{path}: {where}"))
            else:
                outcomes = action.get("outcomes")
                if not isinstance(outcomes, dict):
                    raise ProblemFileError(
                        f"{path}: {where}: adversarial problems need an "
                        "'outcomes' map keyed by disturbance")
                for w in disturbances:
                    if str(w) not in outcomes:
                        raise ProblemFileError(
                            f"{path}: {where}: missing outcome for "
                            f"disturbance {w!r}")
                    out = outcomes[str(w)]
                    arcs[(x, u, w)] = (
                        resolve(out["next"], where),
                        _parse_cost(out["cost"], f"{path}: {where}"))
        controls[x] = tuple(ids)
    missing = [s for s in states if s not in controls]
    if missing:
        raise ProblemFileError(
            f"{path}: no actions listed for states {missing!r}")
    return Problem(states, terminal, controls, arcs,
                   disturbances=disturbances, name=str(path))


def _parse_linear_grid(doc, path) -> grid.GridProblem:
    for key in ("A", "B", "cost", "grid", "controls"):
        if key not in doc:
            raise ProblemFileError(f"{path}: missing field {key!r}")
    cost = doc["cost"]
    try:
        system = grid.LinearSystemSpec(
            a=tuple(tuple(float(v) for v in row) for row in doc["A"]),
            b=tuple(tuple(float(v) for v in row) for row in doc["B"]),
            q=float(cost.get("q", 0.0)), r=float(cost.get("r", 0.0)),
            p=float(cost.get("p", 2.0)))
        spec = grid.GridSpec(
            bounds=tuple((float(lo), float(hi))
                         for lo, hi in doc["grid"]["bounds"]),
            points=tuple(int(k) for k in doc["grid"]["points"]),
            control_bounds=tuple((float(lo), float(hi))
                                 for lo, hi in doc["controls"]["bounds"]),
            control_points=tuple(int(k) for k in doc["controls"]["points"]))
    except (TypeError, ValueError, KeyError) as exc:
        raise ProblemFileError(f"{path}: bad linear_grid document: {exc}") \
            from None
    return grid.build_linear_problem(system, spec)


def emit_problem_file(p, path) -> None:
    """Write a problem back out as a document ``parse_problem_file`` accepts."""
    if isinstance(p, grid.GridProblem):
        doc = {"kind": "linear_grid",
               "A": [list(row) for row in p.system.a_matrix],
               "B": [list(row) for row in p.system.b_matrix],
               "cost": {"q": p.system.q, "r": p.system.r, "p": p.system.p},
               "grid": {"bounds": [list(b) for b in p.grid.bounds],
                        "points": list(p.grid.points)},
               "controls": {"bounds": [list(b) for b in p.grid.control_bounds],
                            "points": list(p.grid.control_points)}}
    else:
        actions = {}
        for x in p.states:
            entries = []
            for u in p.controls(x):
                if p.is_minimax:
                    outcomes = {}
                    for w in p.disturbances:
                        nxt, c = p.arc(x, u, w)
                        outcomes[str(w)] = {
                            "next": nxt,
                            "cost": "inf" if math.isinf(c) else c}
                    entries.append({"id": u, "outcomes": outcomes})
                else:
                    nxt, c = p.arc(x, u)
                    entries.append({"id": u, "next": nxt,
                                    "cost": "inf" if math.isinf(c) else c})
            actions[str(x)] = entries
        doc = {"kind": "finite", "states": list(p.states),
               "terminal": sorted(p.terminal, key=repr), "actions": actions}
        if p.is_minimax:
            doc["disturbances"] = list(p.disturbances)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Value / policy / trace files
# ---------------------------------------------------------------------------

def load_value_file(path, p) -> dict:
    values = {}
    by_token = {str(s): s for s in p.states}
    with open(path) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["state", "value"]:
            raise ProblemFileError(f"{path}: expected header state,value")
        for row in reader:
            if len(row) != 2:
                raise ProblemFileError(f"{path}: bad row {row!r}")
            token, raw = row
            if token not in by_token:
                raise ProblemFileError(f"{path}: unknown state {token!r}")
            v = _parse_cost(raw, f"{path}: state {token}")
            values[by_token[token]] = v
    missing = [s for s in p.states if s not in values]
    if missing:
        raise ProblemFileError(f"{path}: no value for states {missing!r}")
    return values


def save_value_file(values, p, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["state", "value"])
        for s in p.states:
            writer.writerow([str(s), _fmt(values[s])])


def load_policy_file(path, p) -> dict:
    policy = {}
    by_token = {str(s): s for s in p.states}
    with open(path) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["state", "control"]:
            raise ProblemFileError(f"{path}: expected header state,control")
        for row in reader:
            if len(row) != 2:
                raise ProblemFileError(f"{path}: bad row {row!r}")
            token, ctrl = row
            if token not in by_token:
                raise ProblemFileError(f"{path}: unknown state {token!r}")
            x = by_token[token]
            match = [u for u in p.controls(x) if str(u) == ctrl]
            if not match:
                raise ProblemFileError(
                    f"{path}: state {token}: control {ctrl!r} is not "
                    "admissible")
            policy[x] = match[0]
    missing = [s for s in p.states if s not in policy]
    if missing:
        raise ProblemFileError(f"{path}: no control for states {missing!r}")
    return policy


def save_policy_file(policy, p, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["state", "control"])
        for s in p.states:
            writer.writerow([str(s), str(policy[s])])


def emit_trace_csv(trace: SolveTrace, path, states=None) -> None:
    """Write per-iteration rows; floats carry 17 significant digits so a
    re-parse is bit-exact, infinities as the token ``inf``."""
    with_values = states is not None and any(
        row.values is not None for row in trace.rows)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["iter", "sup_change", "residual", "num_infinite"]
        if with_values:
            header += [f"state_{s}" for s in states]
        writer.writerow(header)
        for row in trace.rows:
            out = [str(row.iteration), _fmt(row.sup_change),
                   _fmt(row.residual if row.residual is not None else INF),
                   str(row.num_infinite)]
            if with_values:
                out += [_fmt(row.values[s]) for s in states]
            writer.writerow(out)


def parse_trace_csv(path) -> SolveTrace:
    """Read a trace back; value columns keyed by their id token."""
    rows = []
    with open(path) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:4] != ["iter", "sup_change", "residual",
                                            "num_infinite"]:
            raise ProblemFileError(f"{path}: not a trace file")
        ids = [h[len("state_"):] for h in header[4:]]
        for row in reader:
            values = None
            if ids:
                values = {s: _parse_cost(v, path)
                          for s, v in zip(ids, row[4:])}
            rows.append(TraceRow(iteration=int(row[0]),
                                 sup_change=_parse_cost(row[1], path),
                                 residual=_parse_cost(row[2], path),
                                 num_infinite=int(row[3]),
                                 values=values))
    return SolveTrace(rows)


def _trace_from_values(p, value_sequence) -> SolveTrace:
    rows = []
    for i in range(1, len(value_sequence)):
        prev, cur = value_sequence[i - 1], value_sequence[i]
        rows.append(TraceRow(
            iteration=i,
            sup_change=model.sup_diff(prev, cur),
            residual=vi.residual(p, cur),
            num_infinite=sum(1 for v in cur.values() if math.isinf(v)),
            values=dict(cur)))
    return SolveTrace(rows)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _initial_values(p, spec_text):
    if spec_text == "zero":
        return model.zero_values(p)
    if spec_text == "inf-outside":
        return model.inf_outside_values(p)
    if spec_text.startswith("value:"):
        return load_value_file(spec_text[len("value:"):], p)
    if spec_text.startswith("policy:"):
        from .finite import evaluate_policy
        return evaluate_policy(p, load_policy_file(spec_text[len("policy:"):], p))
    raise _UsageError(f"bad --init {spec_text!r}: use zero, inf-outside, "
                      "value:<file> or policy:<file>")


def _print_values(p, values, limit=40):
    if len(p.states) > limit:
        finite = [v for v in values.values() if not math.isinf(v)]
        print(f"  {len(p.states)} states "
              f"({len(p.states) - len(finite)} at inf); "
              f"max finite value {max(finite) if finite else 0:.9g} "
              "(use --values-out for the full table)")
        return
    for s in p.states:
        print(f"  J({s}) = {_fmt(values[s])}")


def _cmd_solve(args):
    p = parse_problem_file(args.problem)
    if args.algo == "mm-vi" and not p.is_minimax:
        raise _UsageError("mm-vi needs a problem with a disturbance set")
    tie = {"keep": "keep_current", "least": "least_index"}[args.tie]
    trace = None
    converged = True
    policy = None

    if args.algo in ("vi", "mm-vi"):
        j0 = _initial_values(p, args.init or "zero")
        result = vi.run_vi(p, j0, tol=args.tol, max_iters=args.max_iters,
                           record_values=args.trace_values)
        values = result.final_value
        converged = result.converged
        trace = result.trace
        _, policy = vi.bellman_operator(p, values)
        print(f"{args.algo}: {result.iterations} iterations, "
              f"converged={result.converged}, "
              f"final change={_fmt(result.final_sup_change)}, "
              f"residual={_fmt(result.final_residual)}")
    elif args.algo == "pi":
        if args.init and not args.init.startswith("policy:"):
            raise _UsageError("pi takes --init policy:<file>")
        if args.init:
            mu0 = load_policy_file(args.init[len("policy:"):], p)
        else:
            mu0 = {x: p.controls(x)[0] for x in p.states}
        result = pi.run_pi(p, mu0, tie=tie, max_iters=args.max_iters)
        values = result.final_value
        policy = result.final_policy
        converged = result.stopped_reason != "max_iters"
        trace = _trace_from_values(p, result.value_sequence)
        print(f"pi: {result.rounds} rounds, stopped on "
              f"{result.stopped_reason}")
    elif args.algo == "opi":
        j0 = _initial_values(p, args.init or "inf-outside")
        m = [int(tok) for tok in str(args.m).split(",")]
        result = pi.run_opi(p, j0, m if len(m) > 1 else m[0],
                            tol=args.tol, max_iters=args.max_iters)
        values = result.final_value
        policy = result.final_policy
        converged = result.stopped_reason == "value_converged"
        trace = _trace_from_values(p, result.value_sequence)
        print(f"opi: {result.rounds} rounds (m={args.m}), stopped on "
              f"{result.stopped_reason}")
    else:
        raise _UsageError(f"unknown algorithm {args.algo!r}")

    _print_values(p, values)
    if args.values_out:
        save_value_file(values, p, args.values_out)
    if args.policy_out and policy is not None:
        save_policy_file(policy, p, args.policy_out)
    if args.trace and trace is not None:
        emit_trace_csv(trace, args.trace,
                       states=p.states if args.trace_values else None)
    if not converged:
        print("did not converge within the iteration budget", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    return EXIT_OK


def _cmd_analyze(args):
    p = parse_problem_file(args.problem)
    if args.what == "residual":
        if not args.value:
            raise _UsageError("analyze residual needs --value <file>")
        values = load_value_file(args.value, p)
        res_map = vi.residual_map(p, values)
        worst = max(res_map.values())
        print(f"sup residual: {_fmt(worst)}")
        offenders = sorted(res_map, key=lambda s: -res_map[s])[:5]
        for s in offenders:
            if res_map[s] > 0:
                print(f"  state {s}: residual {_fmt(res_map[s])}")
        return EXIT_OK
    scan = vi.multiplicity_scan(p, tol=args.tol)
    print(f"distinct certified fixed points: {len(scan.fixed_points)}")
    for i, fp in enumerate(scan.fixed_points):
        print(f"fixed point {i}: residual {_fmt(fp.residual)}, vanishes on "
              f"terminal: {fp.in_J_class}, seeds: {', '.join(fp.seeds)}")
        _print_values(p, fp.values, limit=20)
    for label, why in scan.skipped:
        print(f"seed {label} skipped: {why}")
    return EXIT_OK


def _cmd_check(args):
    p = parse_problem_file(args.problem)
    report = assumptions.check_assumption1(p)
    print(report.to_text())
    return EXIT_OK


def _cmd_fixture(args):
    print(fixtures.run_fixture(args.name))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser / entry point
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="terminaldp",
                     description="Solvers and analysis for optimal control "
                                 "to a terminal set")
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="run a solver on a problem file")
    solve.add_argument("--problem", required=True)
    solve.add_argument("--algo", required=True,
                       choices=["vi", "pi", "opi", "mm-vi"])
    solve.add_argument("--init", default=None,
                       help="zero | inf-outside | value:<file> | policy:<file>")
    solve.add_argument("--tol", type=float, default=None)
    solve.add_argument("--max-iters", type=int, default=10_000)
    solve.add_argument("--tie", choices=["keep", "least"], default="keep")
    solve.add_argument("--m", default="1",
                       help="sweep count per round for opi; int or comma list")
    solve.add_argument("--trace", default=None, help="write trace CSV here")
    solve.add_argument("--trace-values", action="store_true",
                       help="include per-state value columns in the trace")
    solve.add_argument("--values-out", default=None)
    solve.add_argument("--policy-out", default=None)
    solve.set_defaults(run=_cmd_solve)

    analyze = sub.add_parser("analyze",
                             help="residual certification or fixed-point scan")
    analyze.add_argument("what", choices=["residual", "multiplicity"])
    analyze.add_argument("--problem", required=True)
    analyze.add_argument("--value", default=None)
    analyze.add_argument("--tol", type=float, default=None)
    analyze.set_defaults(run=_cmd_analyze)

    check = sub.add_parser("check", help="assumption checks")
    check.add_argument("what", choices=["assumptions"])
    check.add_argument("--problem", required=True)
    check.set_defaults(run=_cmd_check)

    fixture = sub.add_parser("fixture", help="run a built-in fixture")
    fixture.add_argument("action", choices=["run"])
    fixture.add_argument("name", choices=sorted(fixtures.FIXTURE_REPORTS))
    fixture.set_defaults(run=_cmd_fixture)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.run(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ProblemFileError, ProblemValidationError, OpiSeedError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
