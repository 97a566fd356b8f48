"""Core problem model.

States, per-state control sets, deterministic (or adversarial) transitions,
stage costs in [0, inf], and the cost-free absorbing terminal set.  All value
arithmetic lives on the extended half-line [0, inf] with an absorbing
infinity, which keeps comparisons total and never produces a NaN.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

INF = math.inf


class SolverError(Exception):
    """Base class for solver failures."""


class ProblemValidationError(SolverError):
    """Raised when an operation requires a valid problem and gets one that is not."""

    def __init__(self, report):
        self.report = report
        super().__init__("invalid problem:\n" + report.to_text())


class OpiSeedError(SolverError):
    """Raised when an optimistic-PI run is refused because its seed is unusable."""


# ---------------------------------------------------------------------------
# Extended-cost arithmetic
# ---------------------------------------------------------------------------

def as_cost(value) -> float:
    """Coerce to an extended cost: a float in [0, inf]. Rejects NaN and negatives."""
    v = float(value)
    if math.isnan(v):
        raise ValueError("cost cannot be NaN")
    if v < 0:
        raise ValueError(f"cost must be nonnegative, got {v!r}")
    return v


def ext_add(a: float, b: float) -> float:
    """Sum of two extended costs. Infinity absorbs; never NaN for inputs >= 0."""
    return a + b


def ext_abs_diff(a: float, b: float) -> float:
    """|a - b| on [0, inf], with inf - inf = 0 and |inf - finite| = inf."""
    if a == b:          # covers inf == inf
        return 0.0
    if math.isinf(a) or math.isinf(b):
        return INF
    return abs(a - b)


def sup_diff(j1: dict, j2: dict) -> float:
    """Sup over states of ext_abs_diff; 0 for empty maps."""
    best = 0.0
    for x, v in j1.items():
        d = ext_abs_diff(v, j2[x])
        if d > best:
            best = d
            if math.isinf(best):
                break
    return best


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

@dataclass
class ValidationIssue:
    kind: str
    state: object = None
    control: object = None
    disturbance: object = None
    message: str = ""

    def to_text(self):
        loc = f"state={self.state!r}"
        if self.control is not None:
            loc += f" control={self.control!r}"
        if self.disturbance is not None:
            loc += f" disturbance={self.disturbance!r}"
        return f"[{self.kind}] {loc}: {self.message}"


@dataclass
class ValidationReport:
    issues: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues

    def add(self, kind, state=None, control=None, disturbance=None, message=""):
        self.issues.append(ValidationIssue(kind, state, control, disturbance, message))

    def to_text(self):
        if self.ok:
            return "valid (no issues)"
        return "\n".join(i.to_text() for i in self.issues)


# ---------------------------------------------------------------------------
# Problem
# ---------------------------------------------------------------------------

class Problem:
    """A control problem on a finite state set.

    Deterministic problems map (state, control) to a (successor, cost) pair.
    When a finite disturbance set is supplied the problem is adversarial and
    the map is keyed by (state, control, disturbance); the adversary picks
    the disturbance to maximize total cost.

    Instances are immutable after construction and safe to share across
    concurrent readers.
    """

    has_explicit_successors = True
    default_tol = 1e-9

    def __init__(self, states, terminal, controls, arcs, disturbances=None, name=""):
        self.states = tuple(states)
        self.terminal = frozenset(terminal)
        self.disturbances = tuple(disturbances) if disturbances is not None else None
        self.name = name
        self._controls = {x: tuple(us) for x, us in controls.items()}
        self._arcs = dict(arcs)
        self._validation = None

    @property
    def is_minimax(self) -> bool:
        return self.disturbances is not None

    def controls(self, x):
        return self._controls[x]

    def disturbance_choices(self):
        return self.disturbances if self.is_minimax else (None,)

    def arc(self, x, u, w=None):
        key = (x, u) if self.disturbances is None else (x, u, w)
        return self._arcs[key]

    def next(self, x, u, w=None):
        return self.arc(x, u, w)[0]

    def cost(self, x, u, w=None):
        return self.arc(x, u, w)[1]

    def continuation(self, values, x, u, w=None):
        """Value of the successor of (x, u[, w]) under the value map."""
        return values[self.next(x, u, w)]

    # -- validation hooks ---------------------------------------------------

    def iter_transitions(self):
        """Yield (state, control, disturbance, successor, cost) for every arc."""
        for x in self.states:
            for u in self._controls.get(x, ()):
                for w in self.disturbance_choices():
                    key = (x, u) if self.disturbances is None else (x, u, w)
                    if key in self._arcs:
                        nxt, c = self._arcs[key]
                        yield x, u, w, nxt, c
                    else:
                        yield x, u, w, None, None

    def structurally_equal(self, other) -> bool:
        """State-by-state, arc-by-arc equality (names and caches ignored)."""
        if self.states != other.states or self.terminal != other.terminal:
            return False
        if self.disturbances != other.disturbances:
            return False
        if self._controls != other._controls:
            return False
        return self._arcs == other._arcs

    def __repr__(self):
        tag = "minimax" if self.is_minimax else "deterministic"
        label = f" {self.name!r}" if self.name else ""
        return (f"<Problem{label} {tag}, {len(self.states)} states, "
                f"{len(self.terminal)} terminal>")


def validate(p) -> ValidationReport:
    """Check structural soundness; returns a report listing every violation.

    An empty report means the problem is valid: every state has a nonempty
    control set, every arc has a known successor and a cost in [0, inf], and
    every terminal state is cost-free and absorbing under every control (and
    every disturbance).
    """
    report = ValidationReport()
    state_set = set(p.states)
    for x in p.states:
        try:
            us = p.controls(x)
        except KeyError:
            report.add("admissibility", x, message="state has no control set")
            continue
        if not us:
            report.add("admissibility", x, message="empty control set")
    for x, u, w, nxt, c in p.iter_transitions():
        if nxt is None and c is None:
            report.add("structure", x, u, w, "missing transition entry")
            continue
        if c is None or (isinstance(c, float) and math.isnan(c)) or c < 0:
            report.add("nonnegativity", x, u, w, f"cost {c!r} outside [0, inf]")
        if nxt not in state_set:
            report.add("structure", x, u, w, f"successor {nxt!r} is not a state")
            continue
        if x in p.terminal:
            if c != 0:
                report.add("terminal-cost-free", x, u, w,
                           f"terminal state has stage cost {c!r}")
            if nxt != x:
                report.add("terminal-absorbing", x, u, w,
                           f"terminal state moves to {nxt!r}")
    return report


def require_valid(p):
    """Validate once per problem instance; raise on any violation."""
    if p._validation is None:
        p._validation = validate(p)
    if not p._validation.ok:
        raise ProblemValidationError(p._validation)


def require_admissible(p, policy: dict):
    """Check the policy chooses an admissible control at every state."""
    for x in p.states:
        if x not in policy:
            raise SolverError(f"policy undefined at state {x!r}")
        if policy[x] not in p.controls(x):
            raise SolverError(
                f"policy chooses {policy[x]!r} at state {x!r}, not in control set")


def require_value_domain(p, values: dict):
    if set(values) != set(p.states):
        missing = set(p.states) - set(values)
        extra = set(values) - set(p.states)
        raise SolverError(
            f"value function domain mismatch (missing {sorted(map(repr, missing))}, "
            f"extra {sorted(map(repr, extra))})")


# ---------------------------------------------------------------------------
# Value functions
# ---------------------------------------------------------------------------

def zero_values(p) -> dict:
    """The identically-zero value function."""
    return {x: 0.0 for x in p.states}


def inf_outside_values(p) -> dict:
    """0 on the terminal set, inf everywhere else."""
    return {x: 0.0 if x in p.terminal else INF for x in p.states}


def membership_in_J(values: dict, p) -> bool:
    """True iff the value function vanishes on the terminal set."""
    require_value_domain(p, values)
    return all(values[x] == 0.0 for x in p.terminal)
