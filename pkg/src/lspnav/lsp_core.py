"""Expected-cost planning over frontier actions and the low-level policy.

The ordering optimizer evaluates, for a sequence (s1..sk),

    Q = sum_i [prod_{j<i} (1 - P_j)] * (d_i + P_i * R_S_i + (1 - P_i) * F_i)

with d_1 the robot-to-subgoal distance, d_i the inter-subgoal distance,
and F the failure term: R_E for plain expected-cost planning, R_E - V_I
for the information-seeking variant. The continuation after the last
subgoal is zero.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra as _csgraph_dijkstra

from .errors import (
    DeadRobotError,
    IncompleteInputError,
    InvalidPoseError,
    NoActionError,
    StaleDecisionError,
    UnsupportedEnvironmentError,
)
from .navgraph import Frontier, extract_frontiers
from .worldsim import (
    MOVES,
    CellState,
    MotionPrimitive,
    PartialMap,
    Pose,
    SemanticClass,
    grid_graph_edges,
)

DEFAULT_EXACT_LIMIT = 8


@dataclass(frozen=True)
class SubgoalProperties:
    """Per-action quantities consumed by the expected-cost objective."""

    frontier_id: int
    d: float
    p_s: float
    r_s: float
    r_e: float
    v_i: float = 0.0


@dataclass(frozen=True)
class PlanDecision:
    """Outcome of one high-level planning query.

    ``chosen`` is None for a goal-direct decision, otherwise the first
    frontier id of ``ordering``. ``target`` is the cell the low-level
    policy steers to.
    """

    chosen: Optional[int]
    ordering: tuple
    q_value: float
    target: Optional[Pose] = None
    frontiers: tuple = ()

    @property
    def goal_direct(self) -> bool:
        return self.chosen is None

    @property
    def chosen_frontier(self) -> Optional[Frontier]:
        if self.chosen is None:
            return None
        return self.frontiers[self.chosen]


# ---------------------------------------------------------------------------
# Ordering optimization


def _ordering_search(subgoals, robot_dist, pairwise_dist, exact_limit, use_vi):
    ids = [s.frontier_id for s in subgoals]
    props = {s.frontier_id: s for s in subgoals}
    try:
        d_first = {i: float(robot_dist[i]) for i in ids}
    except KeyError as exc:
        raise IncompleteInputError(f"missing robot distance for {exc}") from exc
    for d in d_first.values():
        if not math.isfinite(d):
            raise IncompleteInputError("non-finite robot distance")

    def fail_term(s: SubgoalProperties) -> float:
        return s.r_e - s.v_i if use_vi else s.r_e

    def pair(a: int, b: int) -> float:
        try:
            d = float(pairwise_dist[(a, b)])
        except KeyError as exc:
            raise IncompleteInputError(f"missing pairwise distance {a}->{b}") from exc
        if not math.isfinite(d):
            raise IncompleteInputError("non-finite pairwise distance")
        return d

    def solve_exact(sub_ids):
        order = sorted(sub_ids)
        index = {sid: k for k, sid in enumerate(order)}
        memo = {}

        def go(last, mask):
            if mask == 0:
                return 0.0, ()
            key = (last, mask)
            hit = memo.get(key)
            if hit is not None:
                return hit
            best_q = math.inf
            best_order = ()
            for sid in order:
                bit = 1 << index[sid]
                if not mask & bit:
                    continue
                s = props[sid]
                d = d_first[sid] if last is None else pair(last, sid)
                head = d + s.p_s * s.r_s
                if s.p_s >= 1.0:
                    q = head
                    ordering = (sid,)
                else:
                    tail_q, tail_order = go(sid, mask & ~bit)
                    q = head + (1.0 - s.p_s) * (fail_term(s) + tail_q)
                    ordering = (sid,) + tail_order
                if q < best_q:
                    best_q = q
                    best_order = ordering
            memo[key] = (best_q, best_order)
            return best_q, best_order

        return go(None, (1 << len(order)) - 1)

    if len(ids) <= exact_limit:
        return solve_exact(ids)

    # exact over the exact_limit closest subgoals, greedy tail for the rest
    head_ids = sorted(ids, key=lambda i: (d_first[i], i))[:exact_limit]
    _, ordering = solve_exact(head_ids)
    order = list(ordering)
    remaining = sorted(set(ids) - set(order))
    while remaining:
        last = order[-1]
        best = min(
            remaining,
            key=lambda sid: (
                pair(last, sid)
                + props[sid].p_s * props[sid].r_s
                + (1.0 - props[sid].p_s) * fail_term(props[sid]),
                sid,
            ),
        )
        order.append(best)
        remaining.remove(best)
    q = _evaluate_ordering(order, props, d_first, pair, use_vi)
    return q, _truncate_certain(order, props)


def _truncate_certain(order, props):
    out = []
    for sid in order:
        out.append(sid)
        if props[sid].p_s >= 1.0:
            break
    return tuple(out)


def _evaluate_ordering(order, props, d_first, pair, use_vi):
    total = 0.0
    weight = 1.0
    prev = None
    for sid in order:
        s = props[sid]
        d = d_first[sid] if prev is None else pair(prev, sid)
        fail = s.r_e - s.v_i if use_vi else s.r_e
        total += weight * (d + s.p_s * s.r_s + (1.0 - s.p_s) * fail)
        weight *= 1.0 - s.p_s
        if weight == 0.0:
            break
        prev = sid
    return total


def _expected_cost(subgoals, robot_dist, pairwise_dist, exact_limit, use_vi):
    if not subgoals:
        raise NoActionError("no subgoals to plan over")
    q, ordering = _ordering_search(
        subgoals, robot_dist, pairwise_dist, exact_limit, use_vi
    )
    return PlanDecision(chosen=ordering[0], ordering=ordering, q_value=q)


def expected_cost_lsp(
    subgoals: Sequence[SubgoalProperties],
    robot_dist,
    pairwise_dist,
    exact_limit: int = DEFAULT_EXACT_LIMIT,
) -> PlanDecision:
    """Minimum expected cost over subgoal orderings, failure term R_E."""
    return _expected_cost(subgoals, robot_dist, pairwise_dist, exact_limit, False)


def expected_cost_aig(
    subgoals: Sequence[SubgoalProperties],
    robot_dist,
    pairwise_dist,
    exact_limit: int = DEFAULT_EXACT_LIMIT,
) -> PlanDecision:
    """As expected_cost_lsp but the failure term is R_E - V_I; negative
    effective exploration cost is the information-seeking incentive and is
    deliberately not clamped."""
    return _expected_cost(subgoals, robot_dist, pairwise_dist, exact_limit, True)


# ---------------------------------------------------------------------------
# Cached shortest-path machinery for closed-loop planning


class PlannerContext:
    """Per-trial cache of graphs and distance fields keyed by map version.

    Purely an efficiency device: all results are identical to calling the
    pure operations directly.
    """

    def __init__(self, max_fields: int = 96):
        self._edges = OrderedDict()  # (version, kind) -> COO arrays
        self._fields = OrderedDict()  # (version, kind, cell) -> (W,H) dist
        self._frontiers = OrderedDict()  # (version, min_size) -> list
        self._max_fields = max_fields

    @staticmethod
    def _mask(partial: PartialMap, kind: str) -> np.ndarray:
        if kind == "known":
            return partial.known_free_mask()
        if kind == "optimistic":
            return partial.optimistic_mask()
        raise ValueError(kind)

    def frontiers(self, partial: PartialMap, min_size: int = 1) -> list:
        key = (partial.version, min_size)
        hit = self._frontiers.get(key)
        if hit is None:
            hit = extract_frontiers(partial, min_size)
            self._frontiers[key] = hit
            self._trim(self._frontiers, 32)
        return hit

    def _grid_edges(self, partial: PartialMap, kind: str):
        key = (partial.version, kind)
        hit = self._edges.get(key)
        if hit is None:
            hit = grid_graph_edges(self._mask(partial, kind))
            self._edges[key] = hit
            self._trim(self._edges, 8)
        return hit

    def fields_to(self, partial: PartialMap, kind: str, cells) -> list:
        """Distance fields to each target cell over the chosen mask.

        Targets outside the mask attach to their traversable 8-neighbors;
        one graph build and one multi-source run serve all misses.
        """
        cells = [tuple(c) for c in cells]
        missing = [
            c for c in cells if (partial.version, kind, c) not in self._fields
        ]
        if missing:
            self._compute_fields(partial, kind, missing)
        out = []
        for c in cells:
            key = (partial.version, kind, c)
            self._fields.move_to_end(key)
            out.append(self._fields[key])
        return out

    def field_to(self, partial: PartialMap, kind: str, cell) -> np.ndarray:
        return self.fields_to(partial, kind, [cell])[0]

    def _compute_fields(self, partial, kind, targets):
        mask = self._mask(partial, kind)
        w, h = mask.shape
        n = w * h
        rows, cols, data = self._grid_edges(partial, kind)
        er, ec, ed = [], [], []
        for k, (x, y) in enumerate(targets):
            vid = n + k
            if mask[x, y]:
                er.append(vid)
                ec.append(x * h + y)
                ed.append(0.0)
                continue
            for dx, dy, cost in MOVES:
                nx, ny = x + dx, y + dy
                if 0 <= nx < w and 0 <= ny < h and mask[nx, ny]:
                    er.append(vid)
                    ec.append(nx * h + ny)
                    ed.append(cost)
        graph = csr_matrix(
            (
                np.concatenate([data, np.asarray(ed)]),
                (
                    np.concatenate([rows, np.asarray(er, dtype=np.int64)]),
                    np.concatenate([cols, np.asarray(ec, dtype=np.int64)]),
                ),
            ),
            shape=(n + len(targets), n + len(targets)),
        )
        indices = list(range(n, n + len(targets)))
        dists = _csgraph_dijkstra(graph, directed=True, indices=indices)
        dists = np.atleast_2d(dists)
        for k, (x, y) in enumerate(targets):
            fld = dists[k, :n].reshape(w, h).copy()
            if mask[x, y]:
                fld[x, y] = 0.0
            self._fields[(partial.version, kind, (x, y))] = fld
        self._trim(self._fields, self._max_fields)

    @staticmethod
    def _trim(cache: OrderedDict, cap: int):
        while len(cache) > cap:
            cache.popitem(last=False)

    def eval_at(self, fld: np.ndarray, cell, mask: np.ndarray) -> float:
        """Field value at a cell, attaching through traversable neighbors
        when the cell itself is outside the mask."""
        x, y = cell
        if mask[x, y]:
            return float(fld[x, y])
        w, h = mask.shape
        best = math.inf
        for dx, dy, cost in MOVES:
            nx, ny = x + dx, y + dy
            if 0 <= nx < w and 0 <= ny < h and mask[nx, ny]:
                best = min(best, fld[nx, ny] + cost)
        return best


# ---------------------------------------------------------------------------
# High-level action selection


def select_action(
    partial: PartialMap,
    pose: Pose,
    goal: Pose,
    estimator,
    mode: str = "lsp",
    ctx: Optional[PlannerContext] = None,
    exact_limit: int = DEFAULT_EXACT_LIMIT,
    min_frontier_size: int = 1,
) -> PlanDecision:
    """Choose goal-direct travel or the best frontier ordering.

    The estimator supplies (P_S, R_S, R_E, V_I) per frontier via
    ``subgoal_properties(partial, pose, goal, frontiers)``; V_I only
    matters in mode ``aig``.
    """
    if mode not in ("lsp", "aig"):
        raise ValueError(f"unknown mode {mode!r}")
    ctx = ctx if ctx is not None else PlannerContext()
    known = partial.known_free_mask()
    if not known[pose.x, pose.y]:
        raise InvalidPoseError(f"pose {pose} is not on a known free cell")

    goal_known_free = known[goal.x, goal.y]
    if goal_known_free:
        goal_field = ctx.field_to(partial, "known", (goal.x, goal.y))
        d_goal = float(goal_field[pose.x, pose.y])
        if math.isfinite(d_goal):
            return PlanDecision(
                chosen=None, ordering=(), q_value=d_goal, target=goal
            )

    frontiers = ctx.frontiers(partial, min_frontier_size)
    if frontiers:
        targets = [(f.subgoal.x, f.subgoal.y) for f in frontiers]
        fields = ctx.fields_to(partial, "known", targets)
        reach = [
            (f, fld)
            for f, fld in zip(frontiers, fields)
            if math.isfinite(fld[pose.x, pose.y])
        ]
    else:
        reach = []
    if not reach:
        raise DeadRobotError("no reachable frontier and goal not reachable")

    reach_fronts = [f for f, _ in reach]
    estimates = estimator.subgoal_properties(partial, pose, goal, reach_fronts)
    robot_dist = {}
    pairwise = {}
    subgoals = []
    for i, ((f, fld), (p_s, r_s, r_e, v_i)) in enumerate(zip(reach, estimates)):
        robot_dist[i] = float(fld[pose.x, pose.y])
        for j, (g, _) in enumerate(reach):
            if i != j:
                pairwise[(i, j)] = ctx.eval_at(fld, (g.subgoal.x, g.subgoal.y), known)
        subgoals.append(
            SubgoalProperties(
                frontier_id=i,
                d=robot_dist[i],
                p_s=float(p_s),
                r_s=float(r_s),
                r_e=float(r_e),
                v_i=float(v_i),
            )
        )

    compute = expected_cost_aig if mode == "aig" else expected_cost_lsp
    decision = compute(subgoals, robot_dist, pairwise, exact_limit)
    chosen = reach_fronts[decision.chosen]
    return PlanDecision(
        chosen=decision.chosen,
        ordering=decision.ordering,
        q_value=decision.q_value,
        target=chosen.subgoal,
        frontiers=tuple(reach_fronts),
    )


def _descend_field(partial, pose, fld, mask) -> MotionPrimitive:
    w, h = mask.shape
    best = None
    best_score = math.inf
    for dx, dy, cost in MOVES:
        nx, ny = pose.x + dx, pose.y + dy
        if not (0 <= nx < w and 0 <= ny < h) or not mask[nx, ny]:
            continue
        if dx != 0 and dy != 0 and not (mask[nx, pose.y] and mask[pose.x, ny]):
            continue
        score = cost + fld[nx, ny]
        if score < best_score - 1e-12:
            best_score = score
            best = MotionPrimitive(dx, dy, cost)
    if best is None or not math.isfinite(best_score):
        raise StaleDecisionError("target unreachable from pose; replan")
    return best


def next_primitive(
    partial: PartialMap,
    pose: Pose,
    decision: PlanDecision,
    goal: Pose,
    ctx: Optional[PlannerContext] = None,
) -> MotionPrimitive:
    """First step of the known-space shortest path to the decision target.

    Ties between equal-cost first steps break in the fixed move order
    E, NE, N, NW, W, SW, S, SE.
    """
    ctx = ctx if ctx is not None else PlannerContext()
    target = decision.target if decision.target is not None else goal
    known = partial.known_free_mask()
    fld = ctx.field_to(partial, "known", (target.x, target.y))
    return _descend_field(partial, pose, fld, known)


def optimistic_plan(
    partial: PartialMap,
    pose: Pose,
    goal: Pose,
    ctx: Optional[PlannerContext] = None,
) -> MotionPrimitive:
    """Non-learned baseline step: unseen space is assumed free and the
    shortest path to the goal is replanned from scratch."""
    ctx = ctx if ctx is not None else PlannerContext()
    mask = partial.optimistic_mask()
    if not mask[pose.x, pose.y]:
        raise InvalidPoseError(f"pose {pose} is on an occupied cell")
    fld = ctx.field_to(partial, "optimistic", (goal.x, goal.y))
    if not math.isfinite(fld[pose.x, pose.y]):
        raise DeadRobotError("goal unreachable even optimistically")
    try:
        return _descend_field(partial, pose, fld, mask)
    except StaleDecisionError as exc:
        raise DeadRobotError(str(exc)) from exc


@dataclass
class MapSeekerState:
    """Mutable per-trial state for the scripted map-seeking baseline."""

    near_end: Optional[Pose] = None
    far_end: Optional[Pose] = None
    near_visited: bool = False
    far_visited: bool = False


def map_seeker_policy(
    partial: PartialMap,
    pose: Pose,
    goal: Pose,
    env_metadata: dict,
    state: MapSeekerState,
    ctx: Optional[PlannerContext] = None,
) -> MotionPrimitive:
    """Scripted baseline: sweep the closer end of the start hallway, then
    the other, entering any revealed map-class room on the way; once the
    goal is reachable through known space, head straight to it."""
    endpoints = env_metadata.get("hallway_endpoints")
    if not endpoints:
        raise UnsupportedEnvironmentError(
            "map-seeker needs hallway_endpoints metadata"
        )
    ctx = ctx if ctx is not None else PlannerContext()
    known = partial.known_free_mask()

    if state.near_end is None:
        a, b = (Pose(*endpoints[0]), Pose(*endpoints[1]))
        da = math.hypot(a.x - pose.x, a.y - pose.y)
        db = math.hypot(b.x - pose.x, b.y - pose.y)
        state.near_end, state.far_end = (a, b) if da <= db else (b, a)

    if pose == state.near_end:
        state.near_visited = True
    if pose == state.far_end:
        state.far_visited = True

    if known[goal.x, goal.y]:
        fld = ctx.field_to(partial, "known", (goal.x, goal.y))
        if math.isfinite(fld[pose.x, pose.y]):
            return _descend_field(partial, pose, fld, known)

    # detour into any revealed blue (map) cell not yet visited
    blue = (partial.semantic == SemanticClass.BLUE) & known
    if blue.any():
        cells = np.argwhere(blue)
        dists = np.hypot(cells[:, 0] - pose.x, cells[:, 1] - pose.y)
        order = np.lexsort((cells[:, 0], cells[:, 1], dists))
        target = Pose(int(cells[order[0]][0]), int(cells[order[0]][1]))
        mask = partial.optimistic_mask()
        fld = ctx.field_to(partial, "optimistic", (target.x, target.y))
        return _descend_field(partial, pose, fld, mask)

    if not state.near_visited:
        waypoint = state.near_end
    elif not state.far_visited:
        waypoint = state.far_end
    else:
        waypoint = goal  # both ends swept, fall back to optimistic pursuit
    mask = partial.optimistic_mask()
    fld = ctx.field_to(partial, "optimistic", (waypoint.x, waypoint.y))
    return _descend_field(partial, pose, fld, mask)
