"""Automated and semi-automated checks of the termination assumption.

The assumption behind uniqueness and solver convergence is that from every
finite-cost state the optimal cost can be approached by policies that
actually reach the terminal set, on top of the structural stopping-set
conditions (terminal states cost-free and absorbing, optimal cost strictly
positive elsewhere).  On finite graphs this reduces to checkable structure:
zero-cost cycles or zero-cost paths into the terminal set are concrete
violations, while positive cycles plus full reachability establish it.  On
grids the checker samples the strict-positivity condition at a ladder of
distances and spot-checks cheap near-terminal termination; honesty over
false proof: anything short of a witness or a verified sample set is
reported inconclusive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .finite import (positive_cycle_check, shortest_path_distances,
                     terminating_reachability)
from .model import INF, validate

VERDICT_ESTABLISHED = "assumption1_established"
VERDICT_VIOLATED = "assumption1_violated_with_witness"
VERDICT_INCONCLUSIVE = "inconclusive"

COMPACTNESS_NOTE = (
    "control sets are finite, so every backup minimizes over finitely many "
    "candidates; attainment and the level-set compactness needed for "
    "convergence from the zero seed hold automatically")


@dataclass
class CheckerConfig:
    delta_fractions: tuple = (0.5, 0.25, 0.1)
    spot_eps_ladder: tuple = (0.1, 0.01)
    spot_delta_floor_cells: float = 2.0
    user_asserted_controllability: bool = False


@dataclass
class AssumptionReport:
    terminal_valid: bool
    positive_cycles_only: bool | None = None
    all_states_can_terminate: bool | None = None
    strict_positivity_outside: str = "not_applicable"
    strict_positivity_witnesses: list = field(default_factory=list)
    local_controllability: str = "not_applicable"
    compactness_note: str = COMPACTNESS_NOTE
    verdict: str = VERDICT_INCONCLUSIVE
    witnesses: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def to_text(self) -> str:
        lines = ["assumption check:"]
        lines.append(f"  terminal set valid:        {self.terminal_valid}")
        if self.positive_cycles_only is not None:
            lines.append(f"  positive cycles only:      "
                         f"{self.positive_cycles_only}")
        if self.all_states_can_terminate is not None:
            lines.append(f"  all states can terminate:  "
                         f"{self.all_states_can_terminate}")
        lines.append(f"  strict positivity outside: "
                     f"{self.strict_positivity_outside}")
        if self.strict_positivity_witnesses:
            lines.append(f"    witnesses: {self.strict_positivity_witnesses!r}")
        lines.append(f"  local controllability:     "
                     f"{self.local_controllability}")
        lines.append(f"  compactness: {self.compactness_note}")
        if self.witnesses:
            lines.append(f"  witnesses: {self.witnesses!r}")
        for note in self.notes:
            lines.append(f"  note: {note}")
        lines.append(f"  verdict: {self.verdict}")
        return "\n".join(lines)


def check_assumption1(p, config: CheckerConfig | None = None) -> AssumptionReport:
    """Structured verdict on the termination assumption for one problem.

    Finite graphs get the exact checks (cycle positivity, zero-cost paths,
    reachability); grid problems get sampled strict positivity, a
    near-terminal termination spot check, and the same structural checks on
    their nearest-node shadow graph.
    """
    config = config or CheckerConfig()
    report = AssumptionReport(terminal_valid=validate(p).ok)
    if not report.terminal_valid:
        report.notes.append("structural validation failed; fix the problem "
                            "before interpreting this verdict")
        return report
    if getattr(p, "has_explicit_successors", False):
        return _check_finite(p, report)
    return _check_grid(p, config, report)


def _cap(items, k=8):
    items = list(items)
    return items[:k] + (["..."] if len(items) > k else [])


def _check_finite(p, report):
    cycles = positive_cycle_check(p)
    reach = terminating_reachability(p)
    report.positive_cycles_only = cycles.has_positive_cycles_only
    report.all_states_can_terminate = not reach.cannot_terminate

    zero_arcs = [(x, u) for x, u, w, nxt, c in p.iter_transitions()
                 if x not in p.terminal and c == 0]
    if zero_arcs:
        report.strict_positivity_outside = "violated_at"
        report.strict_positivity_witnesses = _cap(zero_arcs)
    else:
        report.strict_positivity_outside = "verified_on_samples"

    if not cycles.has_positive_cycles_only:
        report.verdict = VERDICT_VIOLATED
        report.witnesses = cycles.zero_cost_cycles
        report.notes.append(
            "states on a zero-cost cycle outside the terminal set have "
            "optimal cost 0 achieved only by looping forever, so the "
            "stopping-set conditions fail")
        return report

    if not p.is_minimax:
        dist = shortest_path_distances(p)
        free_riders = [x for x in p.states
                       if x not in p.terminal and dist[x] == 0.0]
        if free_riders:
            report.verdict = VERDICT_VIOLATED
            report.witnesses = _cap(free_riders)
            report.notes.append(
                "zero-cost paths reach the terminal set from these states, "
                "so they have optimal cost 0 without being terminal")
            return report

    if report.all_states_can_terminate:
        report.verdict = VERDICT_ESTABLISHED
        return report
    report.verdict = VERDICT_INCONCLUSIVE
    report.witnesses = _cap(sorted(reach.cannot_terminate, key=repr))
    report.notes.append(
        "some states cannot reach the terminal set at all; their optimal "
        "cost is inf so the termination assumption is vacuous there, but "
        "the checker only declares it established under full reachability")
    return report


def _check_grid(p, config, report):
    snapped = p.snapped_problem()
    cycles = positive_cycle_check(snapped)
    reach = terminating_reachability(snapped)
    report.positive_cycles_only = cycles.has_positive_cycles_only
    report.all_states_can_terminate = not reach.cannot_terminate

    radius = max(max(abs(lo), abs(hi)) for lo, hi in p.grid.bounds)
    norms = np.linalg.norm(p.points, axis=1)
    ladder_ok = True
    witnesses = []
    for frac in config.delta_fractions:
        delta = frac * radius
        ids = [s for s in p.states if norms[s] >= delta]
        if not ids:
            continue
        eps_obs = min(min(p.cost(s, u) for u in p.controls(s)) for s in ids)
        report.notes.append(f"min stage cost at distance >= {delta:g}: "
                            f"{eps_obs:g}")
        if eps_obs <= 0.0:
            ladder_ok = False
            witnesses.extend(
                s for s in ids
                if min(p.cost(s, u) for u in p.controls(s)) <= 0.0)
    report.strict_positivity_outside = ("verified_on_samples" if ladder_ok
                                        else "violated_at")
    report.strict_positivity_witnesses = _cap(witnesses)

    if config.user_asserted_controllability:
        report.local_controllability = "user_asserted"
    else:
        report.local_controllability = _spot_check(p, snapped, norms,
                                                   radius, config, report)

    if not cycles.has_positive_cycles_only:
        report.verdict = VERDICT_VIOLATED
        report.witnesses = cycles.zero_cost_cycles
        report.notes.append(
            "the nearest-node shadow graph contains a zero-cost cycle: the "
            "discretization of a cost-free non-terminating behavior")
        return report
    if (ladder_ok
            and report.local_controllability in ("spot_checked_ok",
                                                 "user_asserted")
            and report.all_states_can_terminate):
        report.verdict = VERDICT_ESTABLISHED
        return report
    report.verdict = VERDICT_INCONCLUSIVE
    if not ladder_ok:
        report.notes.append(
            "strict positivity failed at sampled distances; this defeats "
            "the sufficient condition but is not by itself a violation")
    if not report.all_states_can_terminate:
        report.notes.append("shadow graph has states that cannot reach the "
                            "terminal node")
    return report


def _spot_check(p, snapped, norms, radius, config, report):
    """Near-terminal cheap termination: for every budget eps, find a distance
    delta under which every sampled state terminates with cost <= eps."""
    dist_cost = shortest_path_distances(snapped)
    h = max(float(ax[1] - ax[0]) for ax in p._axes)
    floor = config.spot_delta_floor_cells * h
    for eps in config.spot_eps_ladder:
        delta = min(config.delta_fractions) * radius
        found = None
        while delta >= floor:
            ids = [s for s in p.states
                   if s not in p.terminal and norms[s] <= delta]
            if ids and max(dist_cost[s] for s in ids) <= eps:
                found = delta
                break
            delta /= 2.0
        if found is None:
            report.notes.append(
                f"no distance above {floor:g} keeps termination cost within "
                f"{eps:g} for all sampled states")
            return "spot_check_failed"
        report.notes.append(f"termination cost <= {eps:g} verified within "
                            f"distance {found:g}")
    return "spot_checked_ok"
