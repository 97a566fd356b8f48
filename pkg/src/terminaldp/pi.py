"""Exact and optimistic policy iteration.

Exact PI alternates trajectory-exact policy evaluation with one-step greedy
improvement and stops on exact policy repetition.  Tie-breaking is
configurable because it decides whether improvement can escape a policy that
already attains its own backup: keeping the incumbent on ties can stall on a
suboptimal policy when the termination assumption fails, while least-index
selection can escape it.

Optimistic PI replaces each exact evaluation with a finite number of
policy-restricted value sweeps; its seed must dominate its own backup.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .finite import evaluate_policy
from .model import (OpiSeedError, SolverError, ext_add, membership_in_J,
                    require_admissible, require_valid, require_value_domain,
                    sup_diff)
from .vi import arc_value, bellman_operator, greedy_choice

TIE_MODES = ("keep_current", "least_index")

# slack for pointwise-monotonicity assertions: exact descent holds in real
# arithmetic, but two float path sums for the same value may differ in the
# last bits
_DESCENT_SLACK = 1e-12


@dataclass
class PiResult:
    policy_sequence: list
    value_sequence: list
    stopped_reason: str          # policy_repeat | value_converged | max_iters
    final_policy: dict
    final_value: dict
    rounds: int = 0
    m_used: list = field(default_factory=list)


def _check_tie(tie):
    if tie not in TIE_MODES:
        raise SolverError(f"tie mode must be one of {TIE_MODES}, got {tie!r}")


def improve_policy(p, values, current, tie="keep_current") -> dict:
    """Greedy policy with respect to ``values``; ties resolved per ``tie``."""
    require_valid(p)
    require_value_domain(p, values)
    require_admissible(p, current)
    _check_tie(tie)
    return {x: greedy_choice(p, values, x, tie, current[x])[0]
            for x in p.states}


def _assert_pointwise_descent(older, newer, what):
    for x, v in newer.items():
        if v > older[x] + _DESCENT_SLACK:
            raise SolverError(
                f"{what} increased at state {x!r}: {older[x]!r} -> {v!r} "
                "(implementation bug)")


def run_pi(p, mu0, tie="keep_current", max_iters=1000,
           check_rounds=True) -> PiResult:
    """Alternate policy evaluation and improvement until the policy repeats.

    Asserts the evaluated cost sequence is pointwise nonincreasing, and (when
    ``check_rounds``) the per-round sandwich: each policy cost dominates its
    own backup, which dominates the next policy cost.
    """
    require_valid(p)
    require_admissible(p, mu0)
    _check_tie(tie)
    mu = dict(mu0)
    policies = [dict(mu)]
    values_seq = []
    prev_backup = None
    reason = "max_iters"
    for _ in range(max_iters):
        j_mu = evaluate_policy(p, mu)
        if values_seq:
            _assert_pointwise_descent(values_seq[-1], j_mu, "PI policy cost")
        if prev_backup is not None:
            _assert_pointwise_descent(prev_backup, j_mu, "PI backup bound")
        values_seq.append(j_mu)
        if check_rounds:
            backup, _ = bellman_operator(p, j_mu)
            _assert_pointwise_descent(j_mu, backup, "PI one-sweep backup")
            prev_backup = backup
        nxt = improve_policy(p, j_mu, mu, tie)
        if nxt == mu:
            reason = "policy_repeat"
            break
        mu = nxt
        policies.append(dict(mu))
    else:
        values_seq.append(evaluate_policy(p, mu))
    return PiResult(policy_sequence=policies, value_sequence=values_seq,
                    stopped_reason=reason, final_policy=mu,
                    final_value=values_seq[-1], rounds=len(values_seq))


# ---------------------------------------------------------------------------
# Optimistic PI
# ---------------------------------------------------------------------------

def check_opi_seed(p, j0) -> bool:
    """True iff the seed vanishes on the terminal set and dominates its own
    one-sweep backup pointwise."""
    require_valid(p)
    require_value_domain(p, j0)
    if not membership_in_J(j0, p):
        return False
    backup, _ = bellman_operator(p, j0)
    return all(backup[x] <= j0[x] for x in p.states)


def _seed_diagnostic(p, j0):
    if not membership_in_J(j0, p):
        bad = [x for x in p.terminal if j0[x] != 0.0]
        return f"seed is nonzero on terminal states {bad!r}"
    backup, _ = bellman_operator(p, j0)
    bad = [x for x in p.states if backup[x] > j0[x]]
    return (f"seed is below its own backup at states {bad!r}; "
            "start from a policy cost or from the inf-outside seed")


def policy_sweep(p, policy, values) -> dict:
    """One policy-restricted value update (worst case over disturbances)."""
    return {x: arc_value(p, values, x, policy[x]) for x in p.states}


def _schedule(m_schedule):
    if isinstance(m_schedule, int):
        entries = [m_schedule]
    else:
        entries = list(m_schedule)
    if not entries or any((not isinstance(m, int)) or m < 1 for m in entries):
        raise SolverError("m schedule entries must be integers >= 1")
    def pick(k):
        return entries[k] if k < len(entries) else entries[-1]
    return pick


def run_opi(p, j0, m_schedule, tol=None, max_iters=10_000) -> PiResult:
    """Optimistic PI: greedy policy from the current values, then m_k
    policy-restricted sweeps.

    Refuses seeds that fail the dominance condition.  With m constantly 1 the
    iterates coincide with value iteration from the same seed, sweep by
    sweep.  Stops when a full round changes the values by at most ``tol``.
    """
    require_valid(p)
    require_value_domain(p, j0)
    if tol is None:
        tol = p.default_tol
    pick_m = _schedule(m_schedule)
    if not check_opi_seed(p, j0):
        raise OpiSeedError("optimistic PI refused: " + _seed_diagnostic(p, j0))
    values = dict(j0)
    values_seq = [dict(values)]
    policies = []
    m_used = []
    reason = "max_iters"
    for k in range(max_iters):
        _, mu = bellman_operator(p, values)
        policies.append(mu)
        m = pick_m(k)
        m_used.append(m)
        for _ in range(m):
            new = policy_sweep(p, mu, values)
            _assert_pointwise_descent(values, new, "optimistic PI sweep")
            values = new
        values_seq.append(dict(values))
        change = sup_diff(values_seq[-2], values)
        if change <= tol:
            reason = "value_converged"
            break
    return PiResult(policy_sequence=policies, value_sequence=values_seq,
                    stopped_reason=reason,
                    final_policy=policies[-1] if policies else {},
                    final_value=values, rounds=len(policies), m_used=m_used)
