"""Built-in problems: the canonical counterexamples plus desk-scale helpers.

The four named fixtures exercise, in order: Bellman-equation multiplicity
under a free non-terminating loop, value-iteration failure at a boundary
state under a non-attained infimum, policy-iteration stalling under
tie-keeping improvement, and the two-solution degeneracy of the
zero-state-cost linear-quadratic problem.  The module also provides chains,
gridworlds, and adversarial fixtures used by tests and the CLI.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

from .grid import (GridProblem, GridSpec, LinearSystemSpec,
                   build_linear_problem, riccati_oracle)
from .model import (INF, Problem, SolverError, ext_add, inf_outside_values,
                    sup_diff, zero_values)
from .pi import PiResult, run_pi
from .vi import multiplicity_scan, residual_map, run_vi


# ---------------------------------------------------------------------------
# Two-state fixture (multiplicity / PI stall)
# ---------------------------------------------------------------------------

def build_example1() -> Problem:
    """Two states; the non-terminal state can loop at no cost or pay 1 to
    terminate, so the optimal cost is 0 there but only non-terminatingly."""
    return Problem(
        states=(0, 1),
        terminal=(0,),
        controls={0: ("stay",), 1: ("stay", "move")},
        arcs={(0, "stay"): (0, 0.0),
              (1, "stay"): (1, 0.0),
              (1, "move"): (0, 1.0)},
        name="example1")


def build_example3_run() -> PiResult:
    """Policy iteration on the two-state fixture from the pay-to-terminate
    policy.

    With tie-keeping improvement the run stalls at cost 1 even though the
    optimal cost is 0; with least-index improvement (the free loop is listed
    first) it escapes to 0.  Raises if either outcome deviates; returns the
    stalled run.
    """
    p = build_example1()
    mu0 = {0: "stay", 1: "move"}
    stall = run_pi(p, mu0, tie="keep_current")
    if (stall.stopped_reason != "policy_repeat"
            or stall.final_policy[1] != "move"
            or stall.final_value[1] != 1.0):
        raise SolverError("tie-keeping run did not stall at cost 1")
    escape = run_pi(p, mu0, tie="least_index")
    if escape.final_value[1] != 0.0 or escape.final_policy[1] != "stay":
        raise SolverError("least-index run did not reach cost 0")
    return stall


# ---------------------------------------------------------------------------
# Analytic fixture (VI failure at the boundary state)
# ---------------------------------------------------------------------------

class Example2Fixture:
    """Closed-form iterates for the stop-or-drift ray problem.

    State space [0, inf) plus a terminal state; drifting from x costs x per
    stage and moves right by any positive amount, stopping costs 1.  Value
    iteration from zero has the closed form min(1, k*x), so the origin sits
    at 0 forever while its optimal cost is 1.  The infimum over the open
    control set is resolved analytically (the closed form is monotone, so
    the infimum equals the right limit); a finite control grid would
    spuriously attain it and destroy the example.
    """

    optimal_ray_value = 1.0

    def iterate(self, k: int, x: float) -> float:
        if x < 0:
            raise ValueError("ray states are nonnegative")
        return min(1.0, k * x)

    def iterate_terminal(self, k: int) -> float:
        return 0.0

    def optimal(self, x: float) -> float:
        if x < 0:
            raise ValueError("ray states are nonnegative")
        return 1.0

    def reduced_recursion(self, k: int, x: float) -> float:
        """One backup applied to the k-th closed-form iterate.

        The infimum over drift controls of the successor value equals the
        value at x itself by monotonicity and right-continuity, so the
        backup reduces to min(stop cost, x + J_k(x)).
        """
        return min(1.0, x + self.iterate(k, x))


@dataclass
class Example2Report:
    samples_checked: int
    max_recursion_error: float
    origin_ks_checked: list
    origin_stuck_at_zero: bool
    origin_optimal_value: float
    tol: float

    @property
    def ok(self) -> bool:
        return (self.max_recursion_error <= self.tol
                and self.origin_stuck_at_zero
                and self.origin_optimal_value == 1.0)


def verify_example2(k_max: int = 10 ** 6, sample_xs=None,
                    n_samples: int = 10 ** 4, seed: int = 20240,
                    tol: float = 1e-12) -> Example2Report:
    """Check the closed form against the reduced recursion on sampled (k, x).

    Samples x in [0, 2] (half of them scaled so k*x stays in the unsaturated
    regime) and verifies min(1, (k+1)x) equals the backup applied to
    min(1, kx) within ``tol``; also probes that the iterates at the origin
    stay at 0 for k up to ``k_max`` while the optimal value there is 1.
    """
    fx = Example2Fixture()
    rng = random.Random(seed)
    pairs = []
    if sample_xs is not None:
        pairs = [(rng.randrange(1, k_max + 1), float(x)) for x in sample_xs]
    else:
        for i in range(n_samples):
            k = int(math.exp(rng.uniform(0.0, math.log(k_max)))) or 1
            x = rng.uniform(0.0, 2.0) if i % 2 == 0 else rng.uniform(0.0, 2.0 / k)
            pairs.append((k, x))
    worst = 0.0
    for k, x in pairs:
        err = abs(fx.iterate(k + 1, x) - fx.reduced_recursion(k, x))
        if err > worst:
            worst = err
    origin_ks = [1]
    while origin_ks[-1] < k_max:
        origin_ks.append(min(origin_ks[-1] * 10, k_max))
    stuck = all(fx.iterate(k, 0.0) == 0.0 for k in origin_ks)
    return Example2Report(samples_checked=len(pairs),
                          max_recursion_error=worst,
                          origin_ks_checked=origin_ks,
                          origin_stuck_at_zero=stuck,
                          origin_optimal_value=fx.optimal(0.0),
                          tol=tol)


# ---------------------------------------------------------------------------
# Linear-quadratic grids
# ---------------------------------------------------------------------------

def build_example4_grid() -> GridProblem:
    """Unstable scalar doubling dynamics with control-energy cost only
    (q = 0): the zero function and 3*x^2 both satisfy the backup equation."""
    system = LinearSystemSpec(a=((2.0,),), b=((1.0,),), q=0.0, r=1.0)
    grid = GridSpec(bounds=((-1.0, 1.0),), points=(201,),
                    control_bounds=((-4.0, 4.0),), control_points=(41,))
    return build_linear_problem(system, grid)


def build_lq_grid() -> GridProblem:
    """Same dynamics with unit state cost (q = 1): unique fixed point with
    value (2 + sqrt 5) x^2.

    The control spacing is twice the node spacing so that the exact
    jump-to-origin control -2x is representable from every node; coarser
    control grids leave most nodes unable to reach the terminal node except
    through the clamped boundary, a discretization artifact.
    """
    system = LinearSystemSpec(a=((2.0,),), b=((1.0,),), q=1.0, r=1.0)
    grid = GridSpec(bounds=((-1.0, 1.0),), points=(201,),
                    control_bounds=((-4.0, 4.0),), control_points=(401,))
    return build_linear_problem(system, grid)


def quadratic_on_grid(p: GridProblem, coeff: float) -> dict:
    """coeff * ||x||^2 sampled at the grid nodes."""
    return {s: coeff * float(p.points[s] @ p.points[s]) for s in p.states}


# ---------------------------------------------------------------------------
# Auxiliary problems
# ---------------------------------------------------------------------------

def build_chain(n: int, cost: float = 1.0) -> Problem:
    """A line of states stepping down to the terminal state 0 at fixed cost."""
    if n < 2:
        raise ValueError("chain needs at least 2 states")
    controls = {0: ("stay",)}
    arcs = {(0, "stay"): (0, 0.0)}
    for i in range(1, n):
        controls[i] = ("fwd",)
        arcs[(i, "fwd")] = (i - 1, cost)
    return Problem(tuple(range(n)), (0,), controls, arcs, name=f"chain{n}")


def build_gridworld(rows: int, cols: int, goal=(0, 0), walls=()) -> Problem:
    """Unit-cost four-neighbor world; bumping an edge or wall stays in place."""
    walls = set(walls)
    states = [(r, c) for r in range(rows) for c in range(cols)
              if (r, c) not in walls]
    if goal in walls:
        raise ValueError("goal cannot be a wall")
    moves = {"up": (-1, 0), "down": (1, 0), "left": (0, -1), "right": (0, 1)}
    controls = {}
    arcs = {}
    state_set = set(states)
    for s in states:
        if s == goal:
            controls[s] = ("stay",)
            arcs[(s, "stay")] = (s, 0.0)
            continue
        controls[s] = tuple(moves)
        for name, (dr, dc) in moves.items():
            nxt = (s[0] + dr, s[1] + dc)
            if nxt not in state_set:
                nxt = s
            arcs[(s, name)] = (nxt, 1.0)
    return Problem(tuple(states), (goal,), controls, arcs,
                   name=f"gridworld{rows}x{cols}")


def build_adversarial_line() -> Problem:
    """Four states on a line; controls step left by 1 or 2, the adversary may
    push right by 1.  Guaranteed times to the target are 0, 1, 2, 3."""
    states = (0, 1, 2, 3)
    disturbances = ("calm", "push")
    controls = {0: ("stay",), 1: ("step1", "step2"),
                2: ("step1", "step2"), 3: ("step1", "step2")}
    arcs = {}
    for w in disturbances:
        arcs[(0, "stay", w)] = (0, 0.0)
    for x in (1, 2, 3):
        for u, step in (("step1", 1), ("step2", 2)):
            for w, push in (("calm", 0), ("push", 1)):
                nxt = min(3, max(0, x - step + push))
                arcs[(x, u, w)] = (nxt, 1.0)
    return Problem(states, (0,), controls, arcs, disturbances=disturbances,
                   name="adversarial-line")


TUBE_FIXTURE_SET = frozenset({0, 1, 2, 3})


def build_tube_fixture() -> Problem:
    """Five states with upward drift the adversary controls; only state 0 has
    an anchoring control strong enough to stay put forever."""
    states = (0, 1, 2, 3, 4)
    disturbances = ("w0", "w2")
    push = {"w0": 0, "w2": 2}
    controls = {0: ("hold", "drift")}
    for x in (1, 2, 3, 4):
        controls[x] = ("back", "drift")
    move = {"hold": -2, "back": -1, "drift": 0}
    arcs = {}
    for x in states:
        for u in controls[x]:
            for w in disturbances:
                nxt = min(4, max(0, x + move[u] + push[w]))
                arcs[(x, u, w)] = (nxt, 1.0)
    return Problem(states, frozenset(), controls, arcs,
                   disturbances=disturbances, name="tube-line")


# ---------------------------------------------------------------------------
# Optimal-trajectory descent diagnostic
# ---------------------------------------------------------------------------

@dataclass
class DescentStep:
    step: int
    state: object
    control: object
    stage_cost: float
    value: float
    telescoping_error: float


@dataclass
class DescentReport:
    steps: list = field(default_factory=list)
    monotone_ok: bool = True
    reached_zero: bool = False
    max_telescoping_error: float = 0.0

    @property
    def ok(self) -> bool:
        return self.monotone_ok and self.reached_zero


def trajectory_descent_check(p, policy, x0, horizon, jstar,
                             tol=1e-12) -> DescentReport:
    """Follow the policy from x0 and check the optimal values descend to 0.

    Along an optimal trajectory the certified values are nonincreasing and
    the telescope start value = costs so far + value at the current state
    holds to ``tol`` at every step.  A monotonicity breach means the policy
    is not greedy for the supplied values or the values are miscertified.
    """
    if not getattr(p, "has_explicit_successors", False):
        raise SolverError("descent check needs explicit successor states")
    if p.is_minimax:
        raise SolverError("descent check is for deterministic problems")
    if math.isinf(jstar[x0]):
        raise SolverError("descent check needs a finite start value")
    report = DescentReport()
    x = x0
    accumulated = 0.0
    for k in range(horizon + 1):
        value = jstar[x]
        tel_err = abs(jstar[x0] - ext_add(accumulated, value)) \
            if not math.isinf(value) else INF
        u = policy[x]
        nxt, c = p.arc(x, u)
        report.steps.append(DescentStep(k, x, u, c, value, tel_err))
        report.max_telescoping_error = max(report.max_telescoping_error,
                                           tel_err)
        if value == 0.0:
            report.reached_zero = True
        if jstar[nxt] > value:
            report.monotone_ok = False
        if x in p.terminal:
            break
        accumulated = ext_add(accumulated, c)
        x = nxt
    return report


# ---------------------------------------------------------------------------
# Named fixture reports for the CLI
# ---------------------------------------------------------------------------

def _fmt(v):
    return "inf" if math.isinf(v) else f"{v:.9g}"


def _report_example1():
    from .finite import oracle_policy_enum, positive_cycle_check
    p = build_example1()
    jstar = oracle_policy_enum(p)
    cycles = positive_cycle_check(p)
    scan = multiplicity_scan(p)
    lines = [f"{p!r}",
             "optimal values: " + ", ".join(f"J({x})={_fmt(jstar[x])}"
                                            for x in p.states),
             f"zero-cost cycles: {cycles.zero_cost_cycles!r}",
             f"distinct certified fixed points: {len(scan.fixed_points)}"]
    for fp in scan.fixed_points:
        vals = ", ".join(f"J({x})={_fmt(fp.values[x])}" for x in p.states)
        lines.append(f"  {vals}  (vanishes on terminal: {fp.in_J_class}; "
                     f"seeds {fp.seeds})")
    return "\n".join(lines)


def _report_example2():
    report = verify_example2()
    return "\n".join([
        "stop-or-drift ray: value iteration from zero never lifts the origin",
        f"recursion samples checked: {report.samples_checked}",
        f"max closed-form vs backup error: {report.max_recursion_error:.3g} "
        f"(tol {report.tol:g})",
        f"iterate at origin stays 0 for k in {report.origin_ks_checked}: "
        f"{report.origin_stuck_at_zero}",
        f"optimal value at origin: {report.origin_optimal_value}",
        f"ok: {report.ok}"])


def _report_example3():
    stall = build_example3_run()
    return "\n".join([
        "policy iteration from the pay-to-terminate policy:",
        f"  tie-keeping improvement stalls: policy {stall.final_policy}, "
        f"cost at state 1 = {_fmt(stall.final_value[1])} (optimal is 0)",
        "  least-index improvement escapes to the free loop and reaches 0",
        f"  rounds: {stall.rounds}, stop reason: {stall.stopped_reason}"])


def _report_example4():
    p = build_example4_grid()
    interior = p.region_states(0.5)
    zero = zero_values(p)
    quad = quadratic_on_grid(p, 3.0)
    res_zero = residual_map(p, zero)
    res_quad = residual_map(p, quad)
    scan = multiplicity_scan(p, seeds=[zero, quad], tol=0.1)
    return "\n".join([
        f"{p!r}",
        f"reported grid tolerance: {p.grid_tolerance:.6g}",
        f"zero function residual on inner half: "
        f"{max(res_zero[s] for s in interior):.3g}",
        f"3x^2 residual on inner half: "
        f"{max(res_quad[s] for s in interior):.3g}",
        f"distinct certified fixed points from these seeds: "
        f"{len(scan.fixed_points)}"])


def _report_lq():
    p = build_lq_grid()
    k = riccati_oracle(p.system)
    below = run_vi(p, zero_values(p))
    above = run_vi(p, inf_outside_values(p))
    gap = sup_diff(below.final_value, above.final_value)
    interior = p.region_states(0.5)
    quad = quadratic_on_grid(p, k)
    err = max(abs(below.final_value[s] - quad[s]) for s in interior)
    scale = max(quad[s] for s in interior)
    return "\n".join([
        f"{p!r}",
        f"Riccati cost coefficient: {k:.9g}",
        f"VI from zero: {below.iterations} iterations, converged "
        f"{below.converged}",
        f"VI from inf-outside: {above.iterations} iterations, converged "
        f"{above.converged}",
        f"sup distance between the two limits: {gap:.3g} "
        f"(2x grid tolerance: {2 * p.grid_tolerance:.3g})",
        f"relative sup-norm error vs K x^2 on inner half: "
        f"{err / scale:.4%}"])


def _report_min_time():
    from .minimax import min_time_reachability
    p = build_adversarial_line()
    result = min_time_reachability(p)
    vals = ", ".join(f"T({x})={_fmt(result.final_value[x])}"
                     for x in p.states)
    return "\n".join([
        f"{p!r}",
        f"guaranteed steps to target: {vals}",
        f"converged: {result.converged} in {result.iterations} sweeps"])


def _report_tube():
    from .minimax import target_tube, tube_zero_set
    p = build_tube_fixture()
    tube = target_tube(p, TUBE_FIXTURE_SET)
    zero_set = tube_zero_set(p, TUBE_FIXTURE_SET)
    seq = " > ".join("{" + ", ".join(map(str, sorted(s))) + "}"
                     for s in tube.set_sequence)
    return "\n".join([
        f"{p!r}",
        f"containment target: {sorted(TUBE_FIXTURE_SET)}",
        f"shrinking sets: {seq}",
        f"fixed set: {sorted(tube.fixed_set)} "
        f"(after {tube.iterations_to_fix} applications)",
        f"zero set of the tube-cost solution: {sorted(zero_set)} "
        f"(match: {zero_set == tube.fixed_set})"])


FIXTURE_REPORTS = {
    "example1": _report_example1,
    "example2": _report_example2,
    "example3": _report_example3,
    "example4": _report_example4,
    "lq": _report_lq,
    "min-time": _report_min_time,
    "tube": _report_tube,
}


def run_fixture(name: str) -> str:
    """Produce the named fixture's text report (CLI surface)."""
    try:
        builder = FIXTURE_REPORTS[name]
    except KeyError:
        raise SolverError(
            f"unknown fixture {name!r}; choose from "
            f"{', '.join(sorted(FIXTURE_REPORTS))}") from None
    return builder()
