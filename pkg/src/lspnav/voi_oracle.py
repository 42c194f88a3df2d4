"""Training-time label generation: subgoal outcome labels and the value
of information computed as a reverse sum of one-step contributions.

The one-step value compares the low-level policy's next primitive on the
current belief against the same policy on a belief where a region has
been revealed; progress is measured as cost-to-go on the ground-truth
map. Revealing a region that touches the map room cascades into a full
map reveal, mirroring what executing that action would trigger.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .errors import DeadRobotError, MalformedEnvironmentError, StaleFrontierError
from .lsp_core import PlannerContext, next_primitive, select_action
from .navgraph import (
    Frontier,
    NavGraph,
    build_nav_graph,
    extract_frontiers,
    match_frontier,
)
from .worldsim import (
    CellState,
    MotionPrimitive,
    PartialMap,
    Pose,
    SemanticOccupancyGrid,
    masked_dijkstra,
    reveal_region,
    simulate_sensor,
    update_partial_map,
)

log = logging.getLogger(__name__)

_EIGHT = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class SubgoalLabels:
    frontier_id: int
    node_id: int
    label_ps: int
    label_rs: float
    label_re: float
    label_vi: float


@dataclass(frozen=True)
class DatasetRecord:
    env_seed: int
    timestep: int
    nav_graph: NavGraph
    labels: tuple


@dataclass(frozen=True)
class VoiTrace:
    """One tracked region's per-step values and their reverse sums."""

    timesteps: tuple
    frontier_chain: tuple
    v_i: tuple
    accumulated: tuple


# ---------------------------------------------------------------------------
# Outcome labels


def _check_fresh(partial: PartialMap, frontier: Frontier):
    for x, y in frontier.cells:
        if partial.state[x, y] != CellState.UNSEEN:
            raise StaleFrontierError(f"frontier cell ({x},{y}) no longer unseen")


def label_ps_rs(
    known: SemanticOccupancyGrid,
    partial: PartialMap,
    frontier: Frontier,
    goal: Pose,
):
    """Whether the goal is reachable from the subgoal through space that is
    unseen right now, and the geodesic length of that path.

    Traversal may not re-enter currently-known free space; the goal cell
    itself is allowed even if already seen.
    """
    _check_fresh(partial, frontier)
    allowed = (partial.state == CellState.UNSEEN) & ~known.occupied
    allowed[goal.x, goal.y] = not known.occupied[goal.x, goal.y]
    dist = masked_dijkstra(allowed, [((frontier.subgoal.x, frontier.subgoal.y), 0.0)])
    d = dist[goal.x, goal.y]
    if math.isfinite(d):
        return 1, float(d)
    return 0, 0.0


def label_re(
    known: SemanticOccupancyGrid, partial: PartialMap, frontier: Frontier
) -> float:
    """Round trip to the farthest reachable free cell in the region."""
    _check_fresh(partial, frontier)
    region_mask = np.zeros_like(known.occupied)
    for x, y in frontier.region:
        region_mask[x, y] = True
    allowed = region_mask & ~known.occupied
    if not allowed.any():
        return 0.0
    dist = masked_dijkstra(allowed, [((frontier.subgoal.x, frontier.subgoal.y), 0.0)])
    finite = dist[np.isfinite(dist) & allowed]
    if len(finite) == 0:
        return 0.0
    return float(2.0 * finite.max())


def observable_region(
    known: SemanticOccupancyGrid, partial: PartialMap, frontier: Frontier
) -> frozenset:
    """Unseen cells the robot would come to observe by exploring beyond the
    frontier: the traversable continuation plus its wall skin.

    Unlike ``Frontier.region`` (a flood fill of all unseen cells, which
    merges functionally distinct areas through unseen wall mass), this
    truth-restricted set is what counterfactual reveals and label-time
    region tracking operate on.
    """
    unseen = partial.state == CellState.UNSEEN
    interior_mask = unseen & ~known.occupied
    seeds = np.zeros_like(interior_mask)
    for x, y in frontier.cells:
        seeds[x, y] = True
    labels, n = ndimage.label(interior_mask, structure=_EIGHT)
    touched = np.unique(labels[seeds & interior_mask])
    touched = touched[touched != 0]
    region = np.isin(labels, touched)
    skin = ndimage.binary_dilation(region, structure=_EIGHT) & unseen & known.occupied
    out = region | skin | seeds
    return frozenset((int(x), int(y)) for x, y in np.argwhere(out))


def effective_reveal_mask(
    known: SemanticOccupancyGrid, partial: PartialMap, region
) -> np.ndarray:
    """Region as a mask, cascading to the full map when it touches the map
    room (entering the map room reveals the entire environment)."""
    mask = np.zeros((partial.width, partial.height), dtype=bool)
    for x, y in region:
        mask[x, y] = True
    if known.map_room and any(c in known.map_room for c in region):
        mask[:, :] = True
    return mask


# ---------------------------------------------------------------------------
# One-step value of information


class LspPolicy:
    """The low-level policy: one primitive of expected-cost planning with a
    fixed estimator. Falls back to goal-direct when planning is moot."""

    def __init__(self, estimator, mode: str = "lsp", ctx: Optional[PlannerContext] = None):
        self.estimator = estimator
        self.mode = mode
        self.ctx = ctx if ctx is not None else PlannerContext()

    def primitive(self, partial: PartialMap, pose: Pose, goal: Pose) -> MotionPrimitive:
        decision = select_action(
            partial, pose, goal, self.estimator, mode=self.mode, ctx=self.ctx
        )
        return next_primitive(partial, pose, decision, goal, ctx=self.ctx)


def one_step_voi(
    known: SemanticOccupancyGrid,
    partial: PartialMap,
    pose: Pose,
    goal: Pose,
    region,
    policy: LspPolicy,
    goal_field: Optional[np.ndarray] = None,
    base_primitive: Optional[MotionPrimitive] = None,
) -> float:
    """Difference in known-map cost-to-go between the policy's next step on
    the current belief and on the belief with ``region`` revealed."""
    if goal_field is None:
        goal_field = masked_dijkstra(~known.occupied, [((goal.x, goal.y), 0.0)])
    if not math.isfinite(goal_field[pose.x, pose.y]):
        raise MalformedEnvironmentError("goal unreachable in the known map")

    revealed = reveal_region(
        partial, known, effective_reveal_mask(known, partial, region)
    )
    if revealed is partial:
        return 0.0

    prim1 = base_primitive
    if prim1 is None:
        prim1 = policy.primitive(partial, pose, goal)
    prim2 = policy.primitive(revealed, pose, goal)
    if prim1 == prim2:
        return 0.0
    p1 = (pose.x + prim1.dx, pose.y + prim1.dy)
    p2 = (pose.x + prim2.dx, pose.y + prim2.dy)
    c1 = prim1.cost + goal_field[p1]
    c2 = prim2.cost + goal_field[p2]
    if not (math.isfinite(c1) and math.isfinite(c2)):
        raise MalformedEnvironmentError("policy stepped into a sealed cell")
    return float(c1 - c2)


def accumulate_voi(trace: Sequence[float]) -> list:
    """Reverse cumulative sum: V(t) = v(t) + V(t+1), V(last) = v(last)."""
    out = np.cumsum(np.asarray(trace, dtype=float)[::-1])[::-1]
    return [float(v) for v in out]


# ---------------------------------------------------------------------------
# Dataset generation


def _known_path_driver(known, goal_field):
    """Primitive chooser that walks the ground-truth shortest path."""
    from .lsp_core import _descend_field

    mask = ~known.occupied

    def step(partial, pose, goal):
        return _descend_field(partial, pose, goal_field, mask)

    return step


def _optimistic_driver(ctx):
    from .lsp_core import optimistic_plan

    def step(partial, pose, goal):
        return optimistic_plan(partial, pose, goal, ctx=ctx)

    return step


def _rollout(known, driver, sensor_range, step_cap):
    """Closed-loop trial under a driver; returns per-step state snapshots."""
    partial = PartialMap.unseen_like(known)
    pose = known.start
    goal = known.goal
    steps = []
    revealed_all = False
    for _ in range(step_cap):
        if pose == goal:
            break
        obs = simulate_sensor(known, pose, sensor_range)
        partial = update_partial_map(partial, obs)
        if (
            known.map_room
            and not revealed_all
            and (pose.x, pose.y) in known.map_room
        ):
            partial = reveal_region(
                partial, known, np.ones((known.width, known.height), dtype=bool)
            )
            revealed_all = True
        steps.append((partial, pose))
        prim = driver(partial, pose, goal)
        pose = Pose(pose.x + prim.dx, pose.y + prim.dy)
    return steps, pose == goal


def generate_dataset(
    env_params,
    env_seeds: Sequence[int],
    voi_estimator_factory,
    planner_schedule: str = "alternating",
    sensor_range: float = 20.0,
    step_cap_factor: float = 20.0,
    min_frontier_size: int = 1,
) -> list:
    """Roll out trials and emit one labeled record per timestep.

    Even seeds are driven by the ground-truth shortest-path driver, odd
    seeds by the optimistic driver (``planner_schedule='alternating'``).
    ``voi_estimator_factory(known)`` builds the estimator behind the
    low-level policy used inside the one-step value computation.
    """
    from dataclasses import replace

    from .envgen import generate

    records = []
    for seed in env_seeds:
        known = generate(replace(env_params, seed=int(seed)))
        goal_field = masked_dijkstra(
            ~known.occupied, [((known.goal.x, known.goal.y), 0.0)]
        )
        d0 = goal_field[known.start.x, known.start.y]
        if not math.isfinite(d0):
            raise MalformedEnvironmentError(f"seed {seed}: goal unreachable")
        step_cap = int(step_cap_factor * max(d0, 1.0))

        ctx = PlannerContext()
        if planner_schedule == "alternating" and seed % 2 == 1:
            driver = _optimistic_driver(ctx)
        else:
            driver = _known_path_driver(known, goal_field)
        try:
            steps, reached = _rollout(known, driver, sensor_range, step_cap)
        except DeadRobotError:
            log.warning("seed %s: driver died, trial excluded", seed)
            continue
        if not reached:
            log.warning("seed %s: step cap exceeded, trial excluded", seed)
            continue

        records.extend(
            _label_trial(
                known,
                steps,
                seed,
                voi_estimator_factory,
                min_frontier_size,
                goal_field,
            )
        )
    return records


def _label_trial(known, steps, seed, voi_estimator_factory, min_size, goal_field):
    goal = known.goal
    frontiers_t = [extract_frontiers(p, min_size) for p, _ in steps]
    obs_regions = [
        [observable_region(known, p, f) for f in fronts]
        for (p, _), fronts in zip(steps, frontiers_t)
    ]

    policy = LspPolicy(voi_estimator_factory(known), mode="lsp")
    n = len(steps)

    # per-step one-step values for every frontier whose region does not
    # contain the goal (goal-leading actions are labeled zero)
    v_values = [dict() for _ in range(n)]
    base_prims = {}
    for t in range(n):
        partial, pose = steps[t]
        for i, frontier in enumerate(frontiers_t[t]):
            region = obs_regions[t][i]
            if (goal.x, goal.y) in region:
                continue
            if t not in base_prims:
                try:
                    base_prims[t] = policy.primitive(partial, pose, goal)
                except DeadRobotError:
                    base_prims[t] = None
            if base_prims[t] is None:
                continue
            try:
                v_values[t][i] = one_step_voi(
                    known,
                    partial,
                    pose,
                    goal,
                    region,
                    policy,
                    goal_field=goal_field,
                    base_primitive=base_prims[t],
                )
            except DeadRobotError:
                v_values[t][i] = 0.0

    # chain regions forward and reverse-accumulate
    vi_totals = [dict() for _ in range(n)]
    for t in range(n - 1, -1, -1):
        for i, frontier in enumerate(frontiers_t[t]):
            if i not in v_values[t]:
                vi_totals[t][i] = 0.0
                continue
            total = v_values[t][i]
            if t + 1 < n:
                succ = match_frontier(
                    obs_regions[t][i],
                    frontiers_t[t + 1],
                    regions=obs_regions[t + 1],
                )
                if succ is not None:
                    j = frontiers_t[t + 1].index(succ)
                    total += vi_totals[t + 1].get(j, 0.0)
            vi_totals[t][i] = total

    out = []
    for t in range(n):
        partial, pose = steps[t]
        fronts = frontiers_t[t]
        graph = build_nav_graph(partial, fronts, goal)
        labels = []
        for i, frontier in enumerate(fronts):
            ps, rs = label_ps_rs(known, partial, frontier, goal)
            re = label_re(known, partial, frontier)
            labels.append(
                SubgoalLabels(
                    frontier_id=i,
                    node_id=graph.subgoal_nodes[frontier],
                    label_ps=ps,
                    label_rs=rs,
                    label_re=re,
                    label_vi=float(vi_totals[t].get(i, 0.0)),
                )
            )
        out.append(
            DatasetRecord(
                env_seed=seed, timestep=t, nav_graph=graph, labels=tuple(labels)
            )
        )
    return out


# ---------------------------------------------------------------------------
# JSON Lines serialization


def record_to_json(rec: DatasetRecord) -> str:
    g = rec.nav_graph
    obj = {
        "env_seed": rec.env_seed,
        "t": rec.timestep,
        "nodes": [
            {
                "id": i,
                "x": int(p.x),
                "y": int(p.y),
                "feat": [float(v) for v in g.features[i]],
            }
            for i, p in enumerate(g.positions)
        ],
        "edges": [
            {"u": int(u), "v": int(v), "d": float(d)} for u, v, d in g.edges
        ],
        "goal_node": int(g.goal_node),
        "subgoals": [
            {
                "node": lb.node_id,
                "frontier_id": lb.frontier_id,
                "ps": lb.label_ps,
                "rs": lb.label_rs,
                "re": lb.label_re,
                "vi": lb.label_vi,
            }
            for lb in rec.labels
        ],
    }
    return json.dumps(obj, separators=(",", ":"))


def record_from_json(line: str) -> DatasetRecord:
    obj = json.loads(line)
    n = len(obj["nodes"])
    features = np.zeros((n, 7))
    positions = []
    for node in obj["nodes"]:
        features[node["id"]] = node["feat"]
        positions.append(Pose(node["x"], node["y"]))
    edges = tuple((e["u"], e["v"], e["d"]) for e in obj["edges"])
    subgoal_nodes = {
        sg["frontier_id"]: sg["node"] for sg in obj["subgoals"]
    }
    graph = NavGraph(
        positions=tuple(positions),
        features=features,
        edges=edges,
        subgoal_nodes=subgoal_nodes,
        goal_node=obj["goal_node"],
    )
    labels = tuple(
        SubgoalLabels(
            frontier_id=sg["frontier_id"],
            node_id=sg["node"],
            label_ps=int(sg["ps"]),
            label_rs=float(sg["rs"]),
            label_re=float(sg["re"]),
            label_vi=float(sg["vi"]),
        )
        for sg in obj["subgoals"]
    )
    return DatasetRecord(
        env_seed=obj["env_seed"],
        timestep=obj["t"],
        nav_graph=graph,
        labels=labels,
    )


def save_dataset(records, path) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(record_to_json(rec) + "\n")


def load_dataset(path) -> list:
    with open(path) as fh:
        return [record_from_json(line) for line in fh if line.strip()]
