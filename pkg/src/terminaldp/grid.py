"""Discretized continuous-state problems.

Linear dynamics on a rectangular node grid with a finite control grid.  The
successor of a node is a point, not a node, so continuation values are read
by multilinear interpolation; successors leaving the grid are clamped to the
boundary and flagged.  The terminal set is the origin node, made absorbing
by a dedicated stop control.  A discrete-Riccati fixed-point oracle provides
the closed-form quadratic value for acceptance checks.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .model import INF, SolverError

_SNAP_EPS = 1e-9
_CORNER_WEIGHT_EPS = 1e-12


@dataclass(frozen=True)
class GridSpec:
    """Rectangular state grid plus a finite control grid, per dimension."""
    bounds: tuple            # ((lo, hi), ...) per state dimension
    points: tuple            # nodes per state dimension, each >= 2
    control_bounds: tuple    # ((lo, hi), ...) per control dimension
    control_points: tuple    # controls per control dimension, each >= 1

    def __post_init__(self):
        for (lo, hi) in self.bounds + self.control_bounds:
            if not lo < hi:
                raise ValueError(f"bounds must be strictly ordered, got ({lo}, {hi})")
        if any(k < 2 for k in self.points):
            raise ValueError("need at least 2 nodes per state dimension")
        if any(k < 1 for k in self.control_points):
            raise ValueError("need at least 1 control per control dimension")


@dataclass(frozen=True)
class LinearSystemSpec:
    """x' = A x + B u with stage cost q*||x||^p + r*||u||^p."""
    a: tuple
    b: tuple
    q: float
    r: float
    p: float = 2.0

    def __post_init__(self):
        if self.q < 0 or self.r < 0:
            raise ValueError("cost weights q and r must be nonnegative")
        if self.p <= 0:
            raise ValueError("cost exponent must be positive")

    @property
    def a_matrix(self):
        return np.atleast_2d(np.asarray(self.a, dtype=float))

    @property
    def b_matrix(self):
        b = np.asarray(self.b, dtype=float)
        if b.ndim < 2:
            b = b.reshape(self.a_matrix.shape[0], -1)
        return b


def _axis(lo, hi, k, force_origin):
    axis = np.linspace(lo, hi, k)
    if force_origin:
        i = int(np.argmin(np.abs(axis)))
        if abs(axis[i]) > _SNAP_EPS * max(1.0, hi - lo):
            raise SolverError(
                f"grid too coarse to contain the origin cell on [{lo}, {hi}] "
                f"with {k} points")
        axis[i] = 0.0
    return axis


class GridProblem:
    """Finite problem over grid nodes with interpolated continuation values.

    Implements the same interface the solvers use on tabular problems, minus
    explicit successor states (the successor of an arc is a point).  A
    vectorized full-sweep backup is provided for the value-iteration fast
    path, and ``snapped_problem`` exposes the nearest-node shadow used by the
    structural checks.
    """

    has_explicit_successors = False
    default_tol = 1e-6
    is_minimax = False
    disturbances = None

    def __init__(self, system: LinearSystemSpec, grid: GridSpec):
        self.system = system
        self.grid = grid
        a = system.a_matrix
        b = system.b_matrix
        n = a.shape[0]
        if len(grid.bounds) != n:
            raise SolverError("grid dimension does not match the system")
        if len(grid.control_bounds) != b.shape[1]:
            raise SolverError("control grid dimension does not match the system")

        self._axes = [_axis(lo, hi, k, force_origin=True)
                      for (lo, hi), k in zip(grid.bounds, grid.points)]
        control_axes = [np.linspace(lo, hi, k)
                        for (lo, hi), k in zip(grid.control_bounds,
                                               grid.control_points)]
        self._shape = tuple(len(ax) for ax in self._axes)
        mesh = np.meshgrid(*self._axes, indexing="ij")
        self.points = np.stack([m.ravel() for m in mesh], axis=1)   # [N, n]
        cmesh = np.meshgrid(*control_axes, indexing="ij")
        self.control_vectors = np.stack([m.ravel() for m in cmesh], axis=1)

        origin_idx = tuple(int(np.argmin(np.abs(ax))) for ax in self._axes)
        self._terminal_id = int(np.ravel_multi_index(origin_idx, self._shape))

        num_states = self.points.shape[0]
        num_controls = self.control_vectors.shape[0]
        self.states = tuple(range(num_states))
        self.terminal = frozenset({self._terminal_id})
        self._control_ids = tuple(range(num_controls))

        succ = (self.points @ a.T)[:, None, :] + \
               (self.control_vectors @ b.T)[None, :, :]        # [N, M, n]
        self._build_corners(succ)

        xnorm = np.linalg.norm(self.points, axis=1)
        unorm = np.linalg.norm(self.control_vectors, axis=1)
        self._costs = (system.q * xnorm ** system.p)[:, None] + \
                      (system.r * unorm ** system.p)[None, :]   # [N, M]

        self.grid_tolerance = self._grid_tolerance(control_axes)
        self._validation = None

    def _build_corners(self, succ):
        n_dims = len(self._axes)
        num_states, num_controls = succ.shape[0], succ.shape[1]
        lo_idx, frac = [], []
        clamped = np.zeros((num_states, num_controls), dtype=bool)
        for d, ax in enumerate(self._axes):
            z = succ[:, :, d]
            clamped |= (z < ax[0]) | (z > ax[-1])
            z = np.clip(z, ax[0], ax[-1])
            hi = np.clip(np.searchsorted(ax, z, side="right"), 1, len(ax) - 1)
            lo = hi - 1
            t = (z - ax[lo]) / (ax[hi] - ax[lo])
            eps = _SNAP_EPS * max(1.0, ax[-1] - ax[0])
            t = np.where(np.abs(z - ax[lo]) <= eps, 0.0, t)
            t = np.where(np.abs(ax[hi] - z) <= eps, 1.0, t)
            lo_idx.append(lo)
            frac.append(t)
        self._clamped = clamped
        corners = 2 ** n_dims
        idx = np.zeros((num_states, num_controls, corners), dtype=np.int64)
        wgt = np.ones((num_states, num_controls, corners))
        for c, offsets in enumerate(itertools.product((0, 1), repeat=n_dims)):
            multi = []
            for d, off in enumerate(offsets):
                multi.append(lo_idx[d] + off)
                wgt[:, :, c] *= frac[d] if off else (1.0 - frac[d])
            idx[:, :, c] = np.ravel_multi_index(multi, self._shape)
        self._corner_idx = idx
        self._corner_w = wgt

    def _grid_tolerance(self, control_axes):
        # first-order discretization scale: 10 x (stage-cost Lipschitz
        # estimate) x (coarsest state spacing); the Lipschitz constant is
        # estimated from 1-D cost profiles through the worst corner
        sys = self.system
        slope = 0.0
        far = np.array([max(abs(lo), abs(hi)) for lo, hi in self.grid.bounds])
        for d, ax in enumerate(self._axes):
            other = np.delete(far, d)
            base = math.hypot(*other) if other.size else 0.0
            prof = sys.q * np.hypot(np.abs(ax), base) ** sys.p \
                if sys.p != 2 else sys.q * (ax ** 2 + base ** 2)
            diffs = np.abs(np.diff(prof)) / np.diff(ax)
            if diffs.size:
                slope = max(slope, float(diffs.max()))
        cfar = np.array([max(abs(lo), abs(hi)) for lo, hi in
                         self.grid.control_bounds])
        for d, ax in enumerate(control_axes):
            other = np.delete(cfar, d)
            base = math.hypot(*other) if other.size else 0.0
            prof = sys.r * np.hypot(np.abs(ax), base) ** sys.p \
                if sys.p != 2 else sys.r * (ax ** 2 + base ** 2)
            if len(ax) > 1:
                diffs = np.abs(np.diff(prof)) / np.diff(ax)
                slope = max(slope, float(diffs.max()))
        h = max(float(ax[1] - ax[0]) for ax in self._axes)
        return 10.0 * slope * h

    # -- engine interface ---------------------------------------------------

    def controls(self, x):
        return ("stop",) if x == self._terminal_id else self._control_ids

    def disturbance_choices(self):
        return (None,)

    def cost(self, x, u, w=None):
        if x == self._terminal_id:
            return 0.0
        return float(self._costs[x, u])

    def continuation(self, values, x, u, w=None):
        if x == self._terminal_id:
            return values[x]
        total = 0.0
        for i, wi in zip(self._corner_idx[x, u], self._corner_w[x, u]):
            v = values[int(i)]
            if math.isinf(v):
                if wi > _CORNER_WEIGHT_EPS:
                    return INF
                continue
            total += wi * v
        return total

    def bellman_sweep(self, values):
        """Vectorized full sweep of the optimal backup (least-index ties)."""
        v = np.array([values[s] for s in self.states])
        cv = v[self._corner_idx]                       # [N, M, C]
        w = self._corner_w
        infmask = np.isinf(cv)
        contaminated = (infmask & (w > _CORNER_WEIGHT_EPS)).any(axis=2)
        cont = (np.where(infmask, 0.0, cv) * w).sum(axis=2)
        cont[contaminated] = np.inf
        cand = self._costs + cont
        tj = cand.min(axis=1)
        best = cand.argmin(axis=1)
        new = {}
        policy = {}
        for s in self.states:
            new[s] = float(tj[s])
            policy[s] = int(best[s])
        t = self._terminal_id
        new[t] = values[t]
        policy[t] = "stop"
        return new, policy

    # -- geometry helpers ---------------------------------------------------

    def state_point(self, x):
        return self.points[x].copy()

    def nearest_state(self, point):
        point = np.atleast_1d(np.asarray(point, dtype=float))
        multi = tuple(int(np.argmin(np.abs(ax - point[d])))
                      for d, ax in enumerate(self._axes))
        return int(np.ravel_multi_index(multi, self._shape))

    def clamped(self, x, u) -> bool:
        if x == self._terminal_id:
            return False
        return bool(self._clamped[x, u])

    @property
    def clamp_count(self) -> int:
        return int(self._clamped.sum())

    def snapped_successor(self, x, u):
        """Nearest-node successor (the shadow graph used by structural checks)."""
        if x == self._terminal_id:
            return x
        corners = self._corner_idx[x, u]
        weights = self._corner_w[x, u]
        return int(corners[int(np.argmax(weights))])

    def snapped_problem(self):
        """Tabular problem with nearest-node dynamics and the same costs."""
        from .model import Problem
        arcs = {}
        controls = {}
        for x in self.states:
            controls[x] = self.controls(x)
            for u in controls[x]:
                if x == self._terminal_id:
                    arcs[(x, u)] = (x, 0.0)
                else:
                    arcs[(x, u)] = (self.snapped_successor(x, u),
                                    self.cost(x, u))
        return Problem(self.states, self.terminal, controls, arcs,
                       name="snapped-grid")

    def iter_transitions(self):
        for x in self.states:
            for u in self.controls(x):
                if x == self._terminal_id:
                    yield x, u, None, x, 0.0
                else:
                    yield x, u, None, self.snapped_successor(x, u), \
                        self.cost(x, u)

    def interpolate(self, values, point):
        """Multilinear read of a node value map at an arbitrary point.

        Points are clamped into the grid box first.  Reads exactly on a node
        return the stored value; any interpolation corner at inf with real
        weight makes the result inf (conservative).
        """
        point = np.atleast_1d(np.asarray(point, dtype=float))
        total = 0.0
        corner_data = []
        for d, ax in enumerate(self._axes):
            z = min(max(point[d], ax[0]), ax[-1])
            hi = int(np.clip(np.searchsorted(ax, z, side="right"),
                             1, len(ax) - 1))
            lo = hi - 1
            t = (z - ax[lo]) / (ax[hi] - ax[lo])
            eps = _SNAP_EPS * max(1.0, ax[-1] - ax[0])
            if abs(z - ax[lo]) <= eps:
                t = 0.0
            elif abs(ax[hi] - z) <= eps:
                t = 1.0
            corner_data.append((lo, hi, t))
        for offsets in itertools.product((0, 1), repeat=len(self._axes)):
            widx = 1.0
            multi = []
            for (lo, hi, t), off in zip(corner_data, offsets):
                multi.append(hi if off else lo)
                widx *= t if off else (1.0 - t)
            v = values[int(np.ravel_multi_index(tuple(multi), self._shape))]
            if math.isinf(v):
                if widx > _CORNER_WEIGHT_EPS:
                    return INF
                continue
            total += widx * v
        return total

    def region_states(self, radius_fraction=0.5):
        """State ids within the given fraction of the largest bound radius."""
        far = np.array([max(abs(lo), abs(hi)) for lo, hi in self.grid.bounds])
        keep = np.all(np.abs(self.points) <= radius_fraction * far, axis=1)
        return [s for s in self.states if keep[s]]

    def structurally_equal(self, other) -> bool:
        return (isinstance(other, GridProblem)
                and self.system == other.system and self.grid == other.grid)

    def __repr__(self):
        return (f"<GridProblem {len(self.states)} nodes x "
                f"{len(self._control_ids)} controls, "
                f"tolerance {self.grid_tolerance:g}>")


def build_linear_problem(system: LinearSystemSpec, grid: GridSpec) -> GridProblem:
    """Discretize the linear problem onto the node/control grids."""
    return GridProblem(system, grid)


def interpolate_value(problem: GridProblem, values, point):
    """Module-level alias for ``GridProblem.interpolate``."""
    return problem.interpolate(values, point)


def riccati_oracle(system: LinearSystemSpec, tol=1e-12, max_iters=200_000):
    """Fixed point of the discrete Riccati map for the quadratic-cost case.

    Requires q > 0 and r > 0 (the standard observability-type condition for a
    unique stabilizing solution; with q = 0 the equation has two nonnegative
    solutions and the iteration target is ambiguous).  Returns the cost
    matrix K with optimal value x'Kx, as a plain float for scalar systems.
    """
    if system.p != 2:
        raise ValueError("Riccati oracle applies to quadratic costs only")
    if system.q <= 0 or system.r <= 0:
        raise ValueError(
            "Riccati oracle needs q > 0 and r > 0: with zero state cost the "
            "equation has two nonnegative solutions and no unique target")
    a = system.a_matrix
    b = system.b_matrix
    n = a.shape[0]
    q_mat = system.q * np.eye(n)
    r_mat = system.r * np.eye(b.shape[1])
    k = q_mat.copy()
    for _ in range(max_iters):
        gain = np.linalg.solve(r_mat + b.T @ k @ b, b.T @ k @ a)
        nxt = q_mat + a.T @ k @ a - a.T @ k @ b @ gain
        if np.max(np.abs(nxt - k)) <= tol:
            k = nxt
            return float(k[0, 0]) if n == 1 else k
        k = nxt
    raise SolverError(
        "Riccati fixed-point iteration did not converge; the stabilizability/"
        "observability preconditions are likely violated")
