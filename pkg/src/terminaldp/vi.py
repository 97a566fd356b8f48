"""Bellman operator and value iteration.

The operator takes the pointwise minimum over controls of stage cost plus
successor value (worst case over disturbances for adversarial problems).
The driver tracks per-iteration sup-norm changes, counts of infinite states,
and Bellman residuals, and certifies convergence with a residual gate rather
than a bare change threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .model import (INF, SolverError, ext_abs_diff, ext_add, membership_in_J,
                    require_valid, require_value_domain, sup_diff,
                    zero_values, inf_outside_values)


@dataclass
class TraceRow:
    iteration: int
    sup_change: float
    residual: float | None
    num_infinite: int
    values: dict | None = None


@dataclass
class SolveTrace:
    rows: list = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def snapshots(self):
        return [r.values for r in self.rows if r.values is not None]


@dataclass
class ViResult:
    final_value: dict
    iterations: int
    final_sup_change: float
    final_residual: float
    converged: bool
    trace: SolveTrace
    monotone: str = "constant"   # observed direction, not an assumption


def arc_value(p, values, x, u):
    """Stage cost plus continuation value for one control, worst case over
    disturbances when the problem is adversarial."""
    worst = None
    for w in p.disturbance_choices():
        v = ext_add(p.cost(x, u, w), p.continuation(values, x, u, w))
        if worst is None or v > worst:
            worst = v
    return worst


def greedy_choice(p, values, x, tie="least_index", current=None):
    """Minimizing control at one state plus the attained value.

    least_index picks the first control attaining the minimum in control-set
    order; keep_current retains ``current`` whenever it attains the minimum
    exactly.
    """
    best_u = None
    best_v = None
    for u in p.controls(x):
        v = arc_value(p, values, x, u)
        if best_v is None or v < best_v:
            best_v = v
            best_u = u
    if tie == "keep_current" and current is not None:
        if arc_value(p, values, x, current) == best_v:
            best_u = current
    return best_u, best_v


def bellman_operator(p, values, tie="least_index", current=None):
    """One sweep of the optimal backup; returns (new values, greedy policy)."""
    require_valid(p)
    require_value_domain(p, values)
    if tie == "least_index" and current is None and hasattr(p, "bellman_sweep"):
        return p.bellman_sweep(values)
    new = {}
    policy = {}
    for x in p.states:
        u, v = greedy_choice(p, values, x, tie,
                             current[x] if current is not None else None)
        new[x] = v
        policy[x] = u
    return new, policy


def residual(p, values) -> float:
    """Sup-norm distance between a value function and its one-sweep image."""
    new, _ = bellman_operator(p, values)
    return sup_diff(values, new)


def residual_map(p, values) -> dict:
    """Per-state distance to the one-sweep image (inf minus inf counts 0)."""
    new, _ = bellman_operator(p, values)
    return {x: ext_abs_diff(values[x], new[x]) for x in p.states}


def _count_inf(values):
    return sum(1 for v in values.values() if math.isinf(v))


def run_vi(p, j0, tol=None, max_iters=10_000, record_values=False) -> ViResult:
    """Iterate the optimal backup from ``j0``.

    Stops once the sup-norm change is within ``tol`` *and* the new iterate's
    Bellman residual is within ``tol`` (the residual gate guards against
    stopping on a slow plateau); a state flipping between inf and finite
    counts as an infinite change.  Non-convergence at ``max_iters`` is
    reported in the result, not raised.
    """
    require_valid(p)
    require_value_domain(p, j0)
    if tol is None:
        tol = p.default_tol
    if tol <= 0:
        raise SolverError("tol must be positive")
    values = dict(j0)
    rows = []
    converged = False
    went_up = went_down = False
    for it in range(1, max_iters + 1):
        new, _ = bellman_operator(p, values)
        change = sup_diff(values, new)
        for x in p.states:
            if new[x] > values[x]:
                went_up = True
            elif new[x] < values[x]:
                went_down = True
        if rows:
            rows[-1].residual = change
        rows.append(TraceRow(it, change, None, _count_inf(new),
                             dict(new) if record_values else None))
        values = new
        if change <= tol:
            probe, _ = bellman_operator(p, values)
            res = sup_diff(values, probe)
            rows[-1].residual = res
            if res <= tol:
                converged = True
                break
    if rows and rows[-1].residual is None:
        rows[-1].residual = residual(p, values)
    if went_up and went_down:
        direction = "mixed"
    elif went_up:
        direction = "nondecreasing"
    elif went_down:
        direction = "nonincreasing"
    else:
        direction = "constant"
    final_change = rows[-1].sup_change if rows else 0.0
    final_res = rows[-1].residual if rows else residual(p, values)
    return ViResult(final_value=values, iterations=len(rows),
                    final_sup_change=final_change, final_residual=final_res,
                    converged=converged, trace=SolveTrace(rows),
                    monotone=direction)


# ---------------------------------------------------------------------------
# Fixed-point multiplicity
# ---------------------------------------------------------------------------

@dataclass
class FixedPoint:
    values: dict
    in_J_class: bool
    residual: float
    seeds: list


@dataclass
class ScanResult:
    fixed_points: list
    skipped: list    # (seed label, diagnostic)


def default_scan_seeds(p):
    """Labelled seed value functions for a multiplicity scan.

    Zero approaches the least fixed point from below, the inf-outside seed
    approaches the largest fixed point in the vanishing-on-terminal class
    from above, and policy costs add intermediate starting points when the
    problem supports trajectory evaluation.
    """
    seeds = [("zero", zero_values(p)), ("inf_outside", inf_outside_values(p))]
    if getattr(p, "has_explicit_successors", False):
        from .finite import evaluate_policy
        picked = []
        for j in range(3):
            policy = {x: p.controls(x)[min(j, len(p.controls(x)) - 1)]
                      for x in p.states}
            if policy not in picked:
                picked.append(policy)
                seeds.append((f"policy_rr{j}", evaluate_policy(p, policy)))
    return seeds


def multiplicity_scan(p, seeds=None, tol=None, max_iters=10_000) -> ScanResult:
    """Hunt for distinct Bellman fixed points from several starting points.

    Runs value iteration from every seed, keeps limits whose residual is
    within ``tol``, and clusters limits whose sup-distance is within 10 tol.
    More than one cluster certifies fixed-point multiplicity; seeds that do
    not converge are reported as skipped with a diagnostic.
    """
    require_valid(p)
    if tol is None:
        tol = p.default_tol
    if seeds is None:
        labelled = default_scan_seeds(p)
    else:
        labelled = [(f"seed{i}", s) for i, s in enumerate(seeds)]
    if not labelled:
        raise SolverError("multiplicity scan needs at least one seed")
    points = []
    skipped = []
    for label, seed in labelled:
        result = run_vi(p, seed, tol=tol, max_iters=max_iters)
        if not result.converged:
            skipped.append((label, f"no convergence in {result.iterations} "
                                   f"iterations (last change "
                                   f"{result.final_sup_change:g})"))
            continue
        res = result.final_residual
        if res > tol:
            skipped.append((label, f"limit residual {res:g} exceeds tol"))
            continue
        limit = result.final_value
        for fp in points:
            if sup_diff(fp.values, limit) <= 10 * tol:
                fp.seeds.append(label)
                break
        else:
            points.append(FixedPoint(values=limit,
                                     in_J_class=membership_in_J(limit, p),
                                     residual=res, seeds=[label]))
    return ScanResult(fixed_points=points, skipped=skipped)
