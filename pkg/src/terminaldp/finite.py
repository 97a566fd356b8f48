"""Finite transition-graph engine.

Exact policy evaluation by trajectory following, structural checks for
zero-cost cycles and reachability of the terminal set, and two independent
optimal-value oracles (multi-source Dijkstra and exhaustive policy
enumeration) used to certify the iterative solvers.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field

from .model import (INF, SolverError, ext_add, require_admissible,
                    require_valid)


@dataclass
class CycleReport:
    zero_cost_cycles: list = field(default_factory=list)

    @property
    def has_positive_cycles_only(self) -> bool:
        return not self.zero_cost_cycles


@dataclass
class ReachabilityReport:
    can_terminate: frozenset
    cannot_terminate: frozenset


def _require_tabular(p):
    if not getattr(p, "has_explicit_successors", False):
        raise SolverError(
            "operation needs explicit successor states; interpolated grid "
            "problems are not supported here")


# ---------------------------------------------------------------------------
# Policy evaluation
# ---------------------------------------------------------------------------

def evaluate_policy(p, policy: dict) -> dict:
    """Exact cost of a stationary policy at every state.

    Deterministic problems are evaluated by following the unique trajectory
    from each state until it reaches the terminal set, an already-evaluated
    state, or revisits a state.  A revisited cycle with positive total cost
    puts every state on and feeding into it at inf; a zero-cost cycle
    contributes nothing, so those states keep the finite cost accumulated
    before entry.  The result satisfies the policy fixed-point identity
    J(x) = cost(x, u) + J(next(x, u)) exactly at every state.

    Adversarial problems are evaluated structurally: states from which the
    adversary can force a cycle through a positive-cost arc (or an inf-cost
    arc) are at inf, and the rest follow from exact backward induction of the
    policy-restricted worst-case backup.
    """
    require_valid(p)
    require_admissible(p, policy)
    if p.is_minimax:
        return _evaluate_policy_minimax(p, policy)
    _require_tabular(p)

    values: dict = {}
    for start in p.states:
        if start in values:
            continue
        path = []
        on_path = {}
        x = start
        while True:
            if x in p.terminal:
                tail = 0.0
                break
            if x in values:
                tail = values[x]
                break
            if x in on_path:
                cyc_start = on_path[x]
                cyc_cost = 0.0
                for _, c in path[cyc_start:]:
                    cyc_cost = ext_add(cyc_cost, c)
                if cyc_cost > 0:
                    tail = INF
                else:
                    # all cycle arcs are zero-cost, so the infinite tail is free
                    for node, _ in path[cyc_start:]:
                        values[node] = 0.0
                    path = path[:cyc_start]
                    tail = 0.0
                break
            on_path[x] = len(path)
            u = policy[x]
            nxt, c = p.arc(x, u)
            path.append((x, c))
            x = nxt
        # back-propagate so J(x) = c + J(next) holds exactly, arc by arc
        for node, c in reversed(path):
            tail = ext_add(c, tail)
            values[node] = tail
    for t in p.terminal:
        values[t] = 0.0
    return values


def _evaluate_policy_minimax(p, policy):
    # Worst-case cost of a fixed policy. A state is at inf exactly when the
    # adversary can steer the play to an inf-cost arc or to a cycle through a
    # positive-cost arc; everywhere else each positive arc is crossed at most
    # once, so backward induction stabilizes within |X|^2 sweeps.
    nonterm = [x for x in p.states if x not in p.terminal]
    succ = {}
    for x in nonterm:
        u = policy[x]
        succ[x] = [p.arc(x, u, w) for w in p.disturbance_choices()]

    adj = {x: {nxt for nxt, _ in succ[x] if nxt not in p.terminal}
           for x in nonterm}
    bad = set()
    for comp in _tarjan_sccs(adj):
        cyclic = len(comp) > 1 or next(iter(comp)) in adj[next(iter(comp))]
        if cyclic and any(nxt in comp and c > 0
                          for x in comp for nxt, c in succ[x]):
            bad.update(comp)
    for x in nonterm:
        if any(c == INF for _, c in succ[x]):
            bad.add(x)
    infinite = set(bad)
    changed = True
    while changed:
        changed = False
        for x in nonterm:
            if x not in infinite and any(nxt in infinite for nxt, _ in succ[x]):
                infinite.add(x)
                changed = True

    values = {x: INF if x in infinite else 0.0 for x in nonterm}
    for t in p.terminal:
        values[t] = 0.0
    # plays cross at most one positive arc per state, so (n+1)^2 sweeps suffice
    for _ in range((len(p.states) + 1) ** 2 + 2):
        new = dict(values)
        for x in nonterm:
            if x in infinite:
                continue
            new[x] = max(ext_add(c, values[nxt]) for nxt, c in succ[x])
        if new == values:
            return values
        values = new
    raise AssertionError("policy evaluation failed to stabilize")


# ---------------------------------------------------------------------------
# Structural checks
# ---------------------------------------------------------------------------

def _zero_arc_graph(p):
    """Adjacency of zero-cost arcs among non-terminal states.

    For adversarial problems an arc counts as zero-cost when some control
    has a zero-cost outcome under every disturbance into the same successor;
    in practice the check is per (control, disturbance) arc, which is the
    conservative superset.
    """
    adj = {x: set() for x in p.states if x not in p.terminal}
    for x, u, w, nxt, c in p.iter_transitions():
        if x in p.terminal or nxt is None or nxt in p.terminal:
            continue
        if c == 0:
            adj[x].add(nxt)
    return adj


def positive_cycle_check(p) -> CycleReport:
    """Find zero-cost cycles outside the terminal set.

    Runs Tarjan's SCC algorithm on the subgraph of zero-cost arcs among
    non-terminal states and extracts one witness elementary cycle from every
    strongly connected component that contains a cycle.
    """
    require_valid(p)
    _require_tabular(p)
    adj = _zero_arc_graph(p)
    witnesses = []
    for comp in _tarjan_sccs(adj):
        if len(comp) == 1:
            x = next(iter(comp))
            if x in adj[x]:
                witnesses.append([x])
            continue
        witnesses.append(_witness_cycle(adj, comp))
    return CycleReport(zero_cost_cycles=witnesses)


def _tarjan_sccs(adj):
    index = {}
    low = {}
    stack = []
    on_stack = set()
    counter = itertools.count()
    sccs = []

    for root in adj:
        if root in index:
            continue
        work = [(root, iter(sorted(adj[root], key=repr)))]
        index[root] = low[root] = next(counter)
        stack.append(root)
        on_stack.add(root)
        while work:
            node, it = work[-1]
            advanced = False
            for nxt in it:
                if nxt not in index:
                    index[nxt] = low[nxt] = next(counter)
                    stack.append(nxt)
                    on_stack.add(nxt)
                    work.append((nxt, iter(sorted(adj[nxt], key=repr))))
                    advanced = True
                    break
                if nxt in on_stack:
                    low[node] = min(low[node], index[nxt])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
            if low[node] == index[node]:
                comp = set()
                while True:
                    y = stack.pop()
                    on_stack.discard(y)
                    comp.add(y)
                    if y == node:
                        break
                sccs.append(comp)
    return sccs


def _witness_cycle(adj, comp):
    """One elementary cycle inside a strongly connected component."""
    start = min(comp, key=repr)
    # BFS back to start restricted to the component
    parent = {start: None}
    frontier = [start]
    while frontier:
        nxt_frontier = []
        for x in frontier:
            for y in sorted(adj[x] & comp, key=repr):
                if y == start:
                    cycle = [x]
                    while parent[cycle[-1]] is not None:
                        cycle.append(parent[cycle[-1]])
                    cycle.reverse()
                    return cycle
                if y not in parent:
                    parent[y] = x
                    nxt_frontier.append(y)
        frontier = nxt_frontier
    raise AssertionError("component reported cyclic but no cycle found")


def terminating_reachability(p) -> ReachabilityReport:
    """States from which some action sequence reaches the terminal set.

    Backward breadth-first closure over the action graph: disturbances are
    resolved optimistically here (any outcome counts), since the question is
    existence of *some* terminating path.
    """
    require_valid(p)
    _require_tabular(p)
    incoming = {x: set() for x in p.states}
    for x, u, w, nxt, c in p.iter_transitions():
        if nxt is not None:
            incoming[nxt].add(x)
    seen = set(p.terminal)
    frontier = list(p.terminal)
    while frontier:
        nxt_frontier = []
        for y in frontier:
            for x in incoming[y]:
                if x not in seen:
                    seen.add(x)
                    nxt_frontier.append(x)
        frontier = nxt_frontier
    return ReachabilityReport(
        can_terminate=frozenset(seen),
        cannot_terminate=frozenset(set(p.states) - seen))


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------

def shortest_path_distances(p) -> dict:
    """Multi-source Dijkstra: min path cost from every state into the
    terminal set, inf where unreachable.  Zero-cost arcs are fine here; this
    is a path quantity, not an optimal-control certificate."""
    require_valid(p)
    _require_tabular(p)
    if p.is_minimax:
        raise SolverError("shortest-path distances are for deterministic problems")
    incoming = {x: [] for x in p.states}
    for x, u, _, nxt, c in p.iter_transitions():
        incoming[nxt].append((x, c))
    dist = {x: INF for x in p.states}
    heap = []
    for i, t in enumerate(sorted(p.terminal, key=repr)):
        dist[t] = 0.0
        heap.append((0.0, i, t))
    heapq.heapify(heap)
    tiebreak = itertools.count(len(heap))
    done = set()
    while heap:
        d, _, y = heapq.heappop(heap)
        if y in done:
            continue
        done.add(y)
        for x, c in incoming[y]:
            nd = ext_add(c, d)
            if nd < dist[x]:
                dist[x] = nd
                heapq.heappush(heap, (nd, next(tiebreak), x))
    return dist


def oracle_dijkstra(p) -> dict:
    """Shortest-path distances as an optimal-value oracle.

    Valid only when the zero-cost-cycle check is clean, so that
    non-terminating behavior always costs inf and the optimal cost equals
    the shortest-path distance; refuses to run otherwise.  Unreachable
    states map to inf.
    """
    cycles = positive_cycle_check(p)
    if not cycles.has_positive_cycles_only:
        raise SolverError(
            "shortest-path oracle refused: zero-cost cycles present "
            f"(witness {cycles.zero_cost_cycles[0]!r})")
    return shortest_path_distances(p)


def oracle_policy_enum(p, budget: int = 10 ** 6) -> dict:
    """Optimal values by exhaustive enumeration of stationary policies.

    Minimizing over stationary policies only is enough because finite control
    sets guarantee an optimal stationary policy exists.  Desk-scale only: the
    product of control-set sizes over non-terminal states must not exceed the
    budget.
    """
    require_valid(p)
    _require_tabular(p)
    free_states = [x for x in p.states if x not in p.terminal]
    count = 1
    for x in free_states:
        count *= len(p.controls(x))
        if count > budget:
            raise SolverError(
                f"policy enumeration budget exceeded ({count} > {budget})")
    best = {x: INF for x in p.states}
    terminal_choice = {t: p.controls(t)[0] for t in p.terminal}
    for combo in itertools.product(*(p.controls(x) for x in free_states)):
        policy = dict(zip(free_states, combo))
        policy.update(terminal_choice)
        j = evaluate_policy(p, policy)
        for x in p.states:
            if j[x] < best[x]:
                best[x] = j[x]
    return best
