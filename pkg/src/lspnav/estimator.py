"""Subgoal-property estimation: oracle, heuristic, and a trainable model.

The trainable model aggregates node features over the graph (``rounds``
weighted mean-over-neighbors passes, weights 1/(1+edge distance)),
appends an elementwise product of the node's own features with the final
aggregate (color agreement between a subgoal and distant context, e.g.
the revealed center marker, is not linearly separable without it), and
applies independent linear heads:

    P_S = logistic(w . x)   R_S = softplus(w . x)
    R_E = softplus(w . x)   V_I = w . x

The oracle estimator computes outcome labels on the fly against one or
more ground-truth worlds consistent with the current belief; with several
worlds it returns posterior-averaged properties, which is what an ideal
trained estimator would converge to. Its rollout mode prices information
as the drop in expected simulated travel cost after a counterfactual
reveal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from .errors import (
    DeadRobotError,
    ModelGraphMismatchError,
    NoDataError,
    StaleDecisionError,
)
from .lsp_core import PlannerContext, next_primitive, select_action
from .navgraph import FEATURE_SIZE, NavGraph, build_nav_graph
from .voi_oracle import (
    effective_reveal_mask,
    label_ps_rs,
    label_re,
    observable_region,
)
from .worldsim import (
    CellState,
    PartialMap,
    Pose,
    SemanticOccupancyGrid,
    reveal_region,
    simulate_sensor,
    update_partial_map,
)

HEAD_NAMES = ("head_ps", "head_rs", "head_re", "head_vi")


def feature_width(rounds: int) -> int:
    # own + per-round aggregates + own*final interaction block
    return FEATURE_SIZE * (rounds + 1) + FEATURE_SIZE


@dataclass(frozen=True)
class EstimatorModel:
    rounds: int
    heads: dict  # name -> (D+1,) weights, bias last
    norm_scale: np.ndarray  # (D,)
    norm_offset: np.ndarray  # (D,)

    @property
    def width(self) -> int:
        return len(self.norm_scale)


@dataclass(frozen=True)
class TrainConfig:
    rounds: int = 2
    learning_rate: float = 0.05
    epochs: int = 40
    batch_size: int = 256
    rng_seed: int = 0
    w_ps: float = 1.0
    w_rs: float = 0.02
    w_re: float = 0.02
    w_vi: float = 0.02


def zero_model(rounds: int = 2) -> EstimatorModel:
    d = feature_width(rounds)
    return EstimatorModel(
        rounds=rounds,
        heads={name: np.zeros(d + 1) for name in HEAD_NAMES},
        norm_scale=np.ones(d),
        norm_offset=np.zeros(d),
    )


def aggregate_features(graph: NavGraph, rounds: int) -> np.ndarray:
    """Per-node aggregated feature matrix, shape (N, feature_width)."""
    feats = graph.features
    if feats.shape[1] != FEATURE_SIZE:
        raise ModelGraphMismatchError(
            f"graph features have width {feats.shape[1]}, expected {FEATURE_SIZE}"
        )
    n = len(feats)
    weights = np.zeros((n, n))
    for u, v, d in graph.edges:
        w = 1.0 / (1.0 + d)
        weights[u, v] += w
        weights[v, u] += w
    rowsum = weights.sum(axis=1, keepdims=True)
    rowsum[rowsum == 0.0] = 1.0
    mean_op = weights / rowsum
    blocks = [feats]
    h = feats
    for _ in range(rounds):
        h = mean_op @ h
        blocks.append(h)
    blocks.append(feats * blocks[-1])
    return np.concatenate(blocks, axis=1)


def _softplus(z):
    return np.logaddexp(0.0, z)


def predict(model: EstimatorModel, graph: NavGraph) -> dict:
    """Per-subgoal (P_S, R_S, R_E, V_I), keyed like graph.subgoal_nodes."""
    agg = aggregate_features(graph, model.rounds)
    if agg.shape[1] != model.width:
        raise ModelGraphMismatchError(
            f"aggregated width {agg.shape[1]} vs model width {model.width}"
        )
    out = {}
    for key, node in graph.subgoal_nodes.items():
        x = (agg[node] - model.norm_offset) / model.norm_scale
        z = {
            name: float(x @ w[:-1] + w[-1]) for name, w in model.heads.items()
        }
        out[key] = (
            float(expit(z["head_ps"])),
            float(_softplus(z["head_rs"])),
            float(_softplus(z["head_re"])),
            z["head_vi"],
        )
    return out


# ---------------------------------------------------------------------------
# Training


def featurize_dataset(records: Sequence, rounds: int):
    """Stack subgoal rows across records: features and label arrays."""
    xs, ps, rs, re, vi = [], [], [], [], []
    for rec in records:
        if not rec.labels:
            continue
        agg = aggregate_features(rec.nav_graph, rounds)
        for lb in rec.labels:
            xs.append(agg[lb.node_id])
            ps.append(lb.label_ps)
            rs.append(lb.label_rs)
            re.append(lb.label_re)
            vi.append(lb.label_vi)
    if not xs:
        raise NoDataError("dataset contains no subgoal labels")
    return (
        np.asarray(xs),
        np.asarray(ps, dtype=float),
        np.asarray(rs, dtype=float),
        np.asarray(re, dtype=float),
        np.asarray(vi, dtype=float),
    )


def loss_and_gradients(heads: dict, x: np.ndarray, targets: dict, cfg: TrainConfig):
    """Weighted loss and analytic gradients for one normalized batch.

    Cross-entropy on the success head; L1 on the cost heads, with the
    success-cost term restricted to successful samples.
    """
    b = len(x)
    xb = np.concatenate([x, np.ones((b, 1))], axis=1)
    loss = 0.0
    grads = {}

    z = xb @ heads["head_ps"]
    p = expit(z)
    y = targets["ps"]
    eps = 1e-12
    loss += cfg.w_ps * float(
        -np.mean(y * np.log(p + eps) + (1 - y) * np.log(1 - p + eps))
    )
    grads["head_ps"] = cfg.w_ps * (xb.T @ (p - y)) / b

    mask = targets["ps"] == 1.0
    z = xb @ heads["head_rs"]
    pred = _softplus(z)
    denom = max(int(mask.sum()), 1)
    loss += cfg.w_rs * float(np.abs(pred - targets["rs"])[mask].sum()) / denom
    g = np.where(mask, np.sign(pred - targets["rs"]) * expit(z), 0.0)
    grads["head_rs"] = cfg.w_rs * (xb.T @ g) / denom

    z = xb @ heads["head_re"]
    pred = _softplus(z)
    loss += cfg.w_re * float(np.mean(np.abs(pred - targets["re"])))
    grads["head_re"] = cfg.w_re * (xb.T @ (np.sign(pred - targets["re"]) * expit(z))) / b

    z = xb @ heads["head_vi"]
    loss += cfg.w_vi * float(np.mean(np.abs(z - targets["vi"])))
    grads["head_vi"] = cfg.w_vi * (xb.T @ np.sign(z - targets["vi"])) / b

    return loss, grads


def train(records: Sequence, config: TrainConfig = TrainConfig()) -> EstimatorModel:
    """Mini-batch gradient descent; deterministic for fixed inputs."""
    x_raw, ps, rs, re, vi = featurize_dataset(records, config.rounds)
    offset = x_raw.mean(axis=0)
    scale = x_raw.std(axis=0)
    scale[scale < 1e-9] = 1.0
    x = (x_raw - offset) / scale

    d = x.shape[1]
    heads = {name: np.zeros(d + 1) for name in HEAD_NAMES}
    rng = np.random.default_rng(config.rng_seed)
    m = len(x)
    for _ in range(config.epochs):
        perm = rng.permutation(m)
        for lo in range(0, m, config.batch_size):
            idx = perm[lo : lo + config.batch_size]
            targets = {"ps": ps[idx], "rs": rs[idx], "re": re[idx], "vi": vi[idx]}
            _, grads = loss_and_gradients(heads, x[idx], targets, config)
            for name in HEAD_NAMES:
                heads[name] = heads[name] - config.learning_rate * grads[name]
    return EstimatorModel(
        rounds=config.rounds,
        heads=heads,
        norm_scale=scale,
        norm_offset=offset,
    )


def evaluate_model(model: EstimatorModel, records: Sequence) -> dict:
    """Held-out metrics: success-head accuracy and cost-head correlation."""
    x_raw, ps, rs, re, vi = featurize_dataset(records, model.rounds)
    x = (x_raw - model.norm_offset) / model.norm_scale
    xb = np.concatenate([x, np.ones((len(x), 1))], axis=1)
    p = expit(xb @ model.heads["head_ps"])
    vi_pred = xb @ model.heads["head_vi"]
    acc = float(np.mean((p >= 0.5) == (ps == 1.0)))
    if np.std(vi_pred) < 1e-12 or np.std(vi) < 1e-12:
        pearson = 0.0
    else:
        pearson = float(np.corrcoef(vi_pred, vi)[0, 1])
    return {
        "ps_accuracy": acc,
        "ps_base_rate": float(max(np.mean(ps), 1 - np.mean(ps))),
        "vi_pearson": pearson,
        "n": len(ps),
    }


# ---------------------------------------------------------------------------
# Model file format


def dumps_model(model: EstimatorModel) -> str:
    lines = [f"lspaig-model v1 rounds={model.rounds}"]
    for name in HEAD_NAMES:
        vals = " ".join(repr(float(v)) for v in model.heads[name])
        lines.append(f"{name} {vals}")
    lines.append("scale " + " ".join(repr(float(v)) for v in model.norm_scale))
    lines.append("offset " + " ".join(repr(float(v)) for v in model.norm_offset))
    return "\n".join(lines) + "\n"


def loads_model(text: str) -> EstimatorModel:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    header = lines[0].split()
    if header[:2] != ["lspaig-model", "v1"]:
        raise ValueError(f"unrecognized model header: {lines[0]!r}")
    rounds = int(header[2].split("=")[1])
    fields = {}
    for ln in lines[1:]:
        name, _, rest = ln.partition(" ")
        fields[name] = np.array([float(v) for v in rest.split()])
    heads = {name: fields[name] for name in HEAD_NAMES}
    return EstimatorModel(
        rounds=rounds,
        heads=heads,
        norm_scale=fields["scale"],
        norm_offset=fields["offset"],
    )


def save_model(model: EstimatorModel, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_model(model))


def load_model(path) -> EstimatorModel:
    with open(path) as fh:
        return loads_model(fh.read())


# ---------------------------------------------------------------------------
# Estimators consumed by select_action


class HeuristicEstimator:
    """Diagnostic baseline: uninformed success odds, straight-line success
    cost, region size as exploration cost."""

    def subgoal_properties(self, partial, pose, goal, frontiers):
        out = []
        for f in frontiers:
            r_s = math.hypot(f.subgoal.x - goal.x, f.subgoal.y - goal.y)
            out.append((0.5, r_s, float(len(f.region)), 0.0))
        return out


class ModelEstimator:
    """Trained-model estimator; builds the planning graph on the fly."""

    def __init__(self, model: EstimatorModel):
        self.model = model
        self._cache = {}

    def subgoal_properties(self, partial, pose, goal, frontiers):
        key = (partial.version, tuple(f.subgoal for f in frontiers), goal)
        hit = self._cache.get(key)
        if hit is None:
            graph = build_nav_graph(partial, frontiers, goal)
            preds = predict(self.model, graph)
            hit = [preds[f] for f in frontiers]
            if len(self._cache) > 64:
                self._cache.clear()
            self._cache[key] = hit
        return hit


class OracleEstimator:
    """Ground-truth outcome labels, optionally averaged over several
    worlds consistent with the current belief (the posterior an ideal
    estimator would report), with zero or rollout-priced information
    value."""

    def __init__(
        self,
        known: SemanticOccupancyGrid,
        voi_mode: str = "zero",
        worlds: Optional[Sequence[SemanticOccupancyGrid]] = None,
        sensor_range: float = 20.0,
        rollout_cap: Optional[int] = None,
        exact_limit: int = 8,
    ):
        if voi_mode not in ("zero", "rollout"):
            raise ValueError(f"unknown voi_mode {voi_mode!r}")
        self.known = known
        self.voi_mode = voi_mode
        self.worlds = list(worlds) if worlds is not None else [known]
        self.sensor_range = sensor_range
        self.rollout_cap = rollout_cap or int(6 * (known.width + known.height))
        self.exact_limit = exact_limit
        self._consistency = {}
        self._labels = {}
        self._rollouts = {}
        self._goal_fields = {}
        self._vi_cache = {}
        # cells on which any two worlds disagree: reveals that miss every
        # one of them (and the map room) cannot move the posterior
        base = self.worlds[0]
        disagree = np.zeros((base.width, base.height), dtype=bool)
        for w in self.worlds[1:]:
            disagree |= base.occupied != w.occupied
            disagree |= base.semantic != w.semantic
        self._disagreement = disagree
        self._zero_self = self if voi_mode == "zero" else OracleEstimator(
            known,
            voi_mode="zero",
            worlds=self.worlds,
            sensor_range=sensor_range,
            rollout_cap=self.rollout_cap,
            exact_limit=exact_limit,
        )

    @classmethod
    def for_environment(cls, known, voi_mode="zero", **kw):
        """Use the generator-provided alternate world when present, so the
        posterior reflects what the belief genuinely cannot distinguish."""
        worlds = [known]
        mirror = known.extras.get("mirror")
        if mirror is not None:
            worlds.append(mirror)
        return cls(known, voi_mode=voi_mode, worlds=worlds, **kw)

    def _consistent_worlds(self, partial: PartialMap):
        out = []
        for i, w in enumerate(self.worlds):
            key = (i, partial.version)
            hit = self._consistency.get(key)
            if hit is None:
                known_mask = partial.state != CellState.UNSEEN
                occ_ok = (
                    (partial.state[known_mask] == CellState.OCCUPIED)
                    == w.occupied[known_mask]
                ).all()
                cls_ok = (
                    partial.semantic[known_mask] == w.semantic[known_mask]
                ).all()
                hit = bool(occ_ok and cls_ok)
                if len(self._consistency) > 512:
                    self._consistency.clear()
                self._consistency[key] = hit
            if hit:
                out.append((i, w))
        return out

    def _world_labels(self, idx, world, partial, frontier, goal):
        key = (idx, partial.version, frontier)
        hit = self._labels.get(key)
        if hit is None:
            ps, rs = label_ps_rs(world, partial, frontier, goal)
            re = label_re(world, partial, frontier)
            hit = (ps, rs, re)
            if len(self._labels) > 4096:
                self._labels.clear()
            self._labels[key] = hit
        return hit

    def subgoal_properties(self, partial, pose, goal, frontiers):
        worlds = self._consistent_worlds(partial)
        if not worlds:  # belief always matches the true world
            worlds = [(0, self.worlds[0])]
        props = []
        for f in frontiers:
            labels = [self._world_labels(i, w, partial, f, goal) for i, w in worlds]
            ps = float(np.mean([lb[0] for lb in labels]))
            success_rs = [lb[1] for lb in labels if lb[0] == 1]
            rs = float(np.mean(success_rs)) if success_rs else 0.0
            re = float(np.mean([lb[2] for lb in labels]))
            props.append([ps, rs, re, 0.0])
        if self.voi_mode == "rollout" and len(frontiers) > 1:
            self._fill_rollout_vi(partial, pose, goal, frontiers, props, worlds)
        return [tuple(p) for p in props]

    def _fill_rollout_vi(self, partial, pose, goal, frontiers, props, worlds):
        """Expected simulated-cost difference per informative reveal.

        A reveal that cannot touch a world-disagreement cell or the map
        room leaves the posterior (and thus expected planning cost)
        unchanged, so its value is zero without simulation. Between
        posterior changes, a frontier inherits the value priced for its
        predecessor (matched by region overlap); fresh simulations run
        only when the belief state genuinely moves.
        """
        worlds_key = tuple(i for i, _ in worlds)
        regions0 = [observable_region(worlds[0][1], partial, f) for f in frontiers]
        prev_key, prev_entries = self._vi_cache.get("prev", (None, []))
        todo = []
        for idx, (f, reg) in enumerate(zip(frontiers, regions0)):
            inherited = None
            if prev_key == (worlds_key, goal):
                best_overlap = 0
                for preg, pvi in prev_entries:
                    overlap = len(reg & preg)
                    if overlap > best_overlap and 2 * overlap >= min(
                        len(reg), len(preg)
                    ):
                        best_overlap = overlap
                        inherited = pvi
            if inherited is not None:
                props[idx][3] = inherited
            else:
                todo.append(idx)

        base = None
        for idx in todo:
            f = frontiers[idx]
            regions = [(i, w, observable_region(w, partial, f)) for i, w in worlds]
            informative = any(
                any(self._disagreement[x, y] for x, y in reg)
                or (w.map_room and any(c in w.map_room for c in reg))
                for _, w, reg in regions
            )
            if not informative:
                props[idx][3] = 0.0
                continue
            if base is None:
                base = float(
                    np.mean(
                        [
                            self._rollout_cost(w, i, partial, pose, goal)
                            for i, w in worlds
                        ]
                    )
                )
            costs = []
            for i, w, reg in regions:
                revealed = reveal_region(
                    partial, w, effective_reveal_mask(w, partial, reg)
                )
                costs.append(self._rollout_cost(w, i, revealed, pose, goal))
            props[idx][3] = base - float(np.mean(costs))
        self._vi_cache["prev"] = (
            (worlds_key, goal),
            [(reg, props[i][3]) for i, reg in enumerate(regions0)],
        )

    def _rollout_cost(self, world, world_idx, partial, pose, goal) -> float:
        """Travel cost of a closed-loop expected-cost rollout in ``world``
        from the given belief; capped rollouts are completed with the
        true remaining distance."""
        key = (world_idx, partial.version, pose)
        hit = self._rollouts.get(key)
        if hit is not None:
            return hit
        # rollouts replan only when the belief or frontier set changes,
        # which leaves the decisions unchanged at every point where the
        # inputs differ, at a fraction of the per-step replanning cost
        ctx = PlannerContext()
        est = self._zero_self
        cost = 0.0
        cur = partial
        p = pose
        revealed_all = not (cur.state == CellState.UNSEEN).any()
        decision = None
        sig = None
        finished = False
        for _ in range(self.rollout_cap):
            if p == goal:
                finished = True
                break
            obs = simulate_sensor(world, p, self.sensor_range)
            cur = update_partial_map(cur, obs)
            if (
                world.map_room
                and not revealed_all
                and (p.x, p.y) in world.map_room
            ):
                cur = reveal_region(
                    cur, world, np.ones((world.width, world.height), dtype=bool)
                )
                revealed_all = True
            known = cur.known_free_mask()
            if known[goal.x, goal.y]:
                fld = ctx.field_to(cur, "known", (goal.x, goal.y))
                remaining = fld[p.x, p.y]
                if math.isfinite(remaining):
                    # the rest of the rollout walks known space; its cost
                    # is the current known geodesic distance
                    cost += float(remaining)
                    finished = True
                    break
            fronts = ctx.frontiers(cur)
            new_sig = tuple(f.subgoal for f in fronts)
            try:
                if decision is None or sig != new_sig or p == decision.target:
                    decision = select_action(
                        cur, p, goal, est, mode="lsp", ctx=ctx,
                        exact_limit=self.exact_limit,
                    )
                    sig = new_sig
                try:
                    prim = next_primitive(cur, p, decision, goal, ctx=ctx)
                except StaleDecisionError:
                    decision = select_action(
                        cur, p, goal, est, mode="lsp", ctx=ctx,
                        exact_limit=self.exact_limit,
                    )
                    sig = new_sig
                    prim = next_primitive(cur, p, decision, goal, ctx=ctx)
            except DeadRobotError:
                break
            p = Pose(p.x + prim.dx, p.y + prim.dy)
            cost += prim.cost
        if not finished:
            # cap hit or planner fault: complete with the true remaining cost
            cost += float(self._world_goal_field(world_idx, world, goal)[p.x, p.y])
        if len(self._rollouts) > 2048:
            self._rollouts.clear()
        self._rollouts[key] = cost
        return cost

    def _world_goal_field(self, idx, world, goal):
        key = (idx, goal)
        hit = self._goal_fields.get(key)
        if hit is None:
            from .worldsim import masked_dijkstra

            hit = masked_dijkstra(~world.occupied, [((goal.x, goal.y), 0.0)])
            self._goal_fields[key] = hit
        return hit
