"""Worst-case (adversarial) problems: reachability in minimum guaranteed
time and containment in a target tube.

Both are thin constructions over the same optimal backup used everywhere
else: the backup already takes the worst case over the disturbance set, so
value and policy iteration apply unchanged to adversarial problems.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import INF, Problem, SolverError, require_valid
from .vi import ViResult, bellman_operator, run_vi
from .model import inf_outside_values


@dataclass
class TubeResult:
    set_sequence: list        # distinct sets, largest first
    fixed_set: frozenset
    iterations_to_fix: int    # map applications until the first repeat


def minimax_bellman(p, values):
    """One worst-case backup sweep; requires an adversarial problem.

    With a single disturbance this coincides exactly with the deterministic
    backup on the induced problem.
    """
    if not p.is_minimax:
        raise SolverError("minimax backup needs a problem with a disturbance set")
    return bellman_operator(p, values)


def _overridden_costs(p, zero_states):
    """Same transition structure, stage cost 1 outside ``zero_states``."""
    arcs = {}
    for x, u, w, nxt, c in p.iter_transitions():
        key = (x, u) if p.disturbances is None else (x, u, w)
        arcs[key] = (nxt, 0.0 if x in zero_states else 1.0)
    return arcs


def min_time_reachability(p) -> ViResult:
    """Minimum guaranteed number of steps to reach the terminal set.

    Overrides the stage cost to 1 outside the terminal set (entry stops the
    clock because terminal states are absorbing and cost-free) and runs the
    worst-case value iteration from the 0-on-terminal / inf-elsewhere seed.
    The k-th iterate is finite exactly on the states guaranteed to reach the
    terminal set within k steps; the limit is inf outside the guaranteed-
    reachable set.
    """
    require_valid(p)
    derived = Problem(p.states, p.terminal,
                      {x: p.controls(x) for x in p.states},
                      _overridden_costs(p, p.terminal),
                      disturbances=p.disturbances,
                      name=(p.name + ":min-time") if p.name else "min-time")
    # integer-valued iterates stabilize exactly within |X| sweeps
    return run_vi(derived, inf_outside_values(derived), tol=1e-9,
                  max_iters=len(p.states) + 4)


def guaranteed_predecessors(p, target: frozenset) -> frozenset:
    """States with a control whose every disturbance outcome lands in
    ``target``."""
    kept = set()
    for x in target:
        for u in p.controls(x):
            if all(p.next(x, u, w) in target for w in p.disturbance_choices()):
                kept.add(x)
                break
    return frozenset(kept)


def target_tube(p, hat_x) -> TubeResult:
    """Initial states from which all future states can be kept in ``hat_x``.

    Iterates the guaranteed-predecessor map inside ``hat_x`` until the set
    repeats; the fixed set is exactly the set of states from which
    containment can be guaranteed forever.
    """
    require_valid(p)
    if not getattr(p, "has_explicit_successors", False):
        raise SolverError("target tube needs explicit successor states")
    current = frozenset(hat_x)
    unknown = current - set(p.states)
    if unknown:
        raise SolverError(f"tube set contains non-states {sorted(map(repr, unknown))}")
    sequence = [current]
    applications = 0
    while True:
        nxt = guaranteed_predecessors(p, current)
        applications += 1
        if nxt == current:
            return TubeResult(set_sequence=sequence, fixed_set=current,
                              iterations_to_fix=applications)
        sequence.append(nxt)
        current = nxt


def tube_cost_problem(p, hat_x) -> Problem:
    """The tube formulated as a cost problem: stage cost 1 outside ``hat_x``,
    no terminal set.

    Solving it by worst-case value iteration from the 0-on-``hat_x`` /
    inf-elsewhere seed makes the zero set of the limit equal the tube fixed
    set.
    """
    require_valid(p)
    return Problem(p.states, frozenset(),
                   {x: p.controls(x) for x in p.states},
                   _overridden_costs(p, frozenset(hat_x)),
                   disturbances=p.disturbances,
                   name=(p.name + ":tube-cost") if p.name else "tube-cost")


def tube_zero_set(p, hat_x) -> frozenset:
    """Zero set of the tube-cost value iteration limit (cross-check for
    ``target_tube``)."""
    derived = tube_cost_problem(p, hat_x)
    seed = {x: 0.0 if x in frozenset(hat_x) else INF for x in derived.states}
    result = run_vi(derived, seed, tol=1e-9, max_iters=len(p.states) + 4)
    return frozenset(x for x, v in result.final_value.items() if v == 0.0)
