"""Closed-loop trial runner, batch benchmark, renders, and the CLI."""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from .envgen import KINDS, EnvParams, check_environment, generate
from .errors import DeadRobotError, MalformedEnvironmentError
from .estimator import (
    HeuristicEstimator,
    ModelEstimator,
    OracleEstimator,
    TrainConfig,
    load_model,
    save_model,
    train,
)
from .lsp_core import (
    MapSeekerState,
    PlannerContext,
    map_seeker_policy,
    next_primitive,
    optimistic_plan,
    select_action,
)
from .voi_oracle import generate_dataset, load_dataset, save_dataset
from .worldsim import (
    PartialMap,
    Pose,
    SemanticClass,
    full_reveal,
    masked_dijkstra,
    reveal_region,
    simulate_sensor,
    update_partial_map,
)

PLANNERS = ("naive", "lsp", "lsp_aig", "map_seeker")


@dataclass(frozen=True)
class RunConfig:
    env: EnvParams
    planner: str = "naive"
    estimator_spec: str = "oracle"
    sensor_range: float = 20.0
    step_cap_factor: float = 20.0
    exact_limit: int = 8
    pre_revealed: bool = False

    def __post_init__(self):
        if self.planner not in PLANNERS:
            raise ValueError(f"unknown planner {self.planner!r}")
        if self.planner == "map_seeker" and self.env.kind != "parallel_hallway":
            raise ValueError("map_seeker only runs in parallel_hallway")


@dataclass(frozen=True)
class TrialResult:
    env_kind: str
    env_seed: int
    planner: str
    total_cost: float
    steps: int
    reached_goal: bool
    trajectory: tuple
    reveal_events: tuple = ()
    aborted: bool = False


def build_estimator(spec: str, known):
    """Estimator factory from a CLI-style spec string."""
    if spec in ("oracle", "oracle:zero"):
        return OracleEstimator.for_environment(known, voi_mode="zero")
    if spec == "oracle:rollout":
        return OracleEstimator.for_environment(known, voi_mode="rollout")
    if spec == "heuristic":
        return HeuristicEstimator()
    return ModelEstimator(load_model(spec))


def run_trial(config: RunConfig, seed: int) -> TrialResult:
    """One closed-loop navigation trial: sense, update, plan, step."""
    known = generate(replace(config.env, seed=int(seed)))
    start_dist = masked_dijkstra(
        ~known.occupied, [((known.goal.x, known.goal.y), 0.0)]
    )[known.start.x, known.start.y]
    if not math.isfinite(start_dist):
        raise MalformedEnvironmentError(f"seed {seed}: goal unreachable")
    step_cap = max(int(config.step_cap_factor * max(start_dist, 1.0)), 8)

    partial = PartialMap.unseen_like(known)
    if config.pre_revealed:
        partial = full_reveal(partial, known)
    pose = known.start
    goal = known.goal
    ctx = PlannerContext()
    estimator = (
        build_estimator(config.estimator_spec, known)
        if config.planner in ("lsp", "lsp_aig")
        else None
    )
    seeker_state = MapSeekerState()

    trajectory = [pose]
    reveal_events = []
    cost = 0.0
    revealed_all = config.pre_revealed
    aborted = False

    for step_i in range(step_cap):
        if pose == goal:
            break
        obs = simulate_sensor(known, pose, config.sensor_range)
        partial = update_partial_map(partial, obs)
        if (
            known.map_room
            and not revealed_all
            and (pose.x, pose.y) in known.map_room
        ):
            partial = full_reveal(partial, known)
            revealed_all = True
            reveal_events.append(step_i)
        try:
            if config.planner == "naive":
                prim = optimistic_plan(partial, pose, goal, ctx=ctx)
            elif config.planner == "map_seeker":
                prim = map_seeker_policy(
                    partial, pose, goal, known.extras, seeker_state, ctx=ctx
                )
            else:
                mode = "aig" if config.planner == "lsp_aig" else "lsp"
                decision = select_action(
                    partial,
                    pose,
                    goal,
                    estimator,
                    mode=mode,
                    ctx=ctx,
                    exact_limit=config.exact_limit,
                )
                prim = next_primitive(partial, pose, decision, goal, ctx=ctx)
        except DeadRobotError:
            aborted = True
            break
        pose = Pose(pose.x + prim.dx, pose.y + prim.dy)
        cost += prim.cost
        trajectory.append(pose)

    return TrialResult(
        env_kind=config.env.kind,
        env_seed=int(seed),
        planner=config.planner,
        total_cost=cost,
        steps=len(trajectory) - 1,
        reached_goal=pose == goal,
        trajectory=tuple(trajectory),
        reveal_events=tuple(reveal_events),
        aborted=aborted,
    )


def run_benchmark(
    configs: Sequence[RunConfig], seeds: Sequence[int], jobs: int = 1
) -> list:
    """All (config x seed) trials, sorted by (env, seed, planner)."""
    if not configs:
        raise ValueError("at least one config required")
    tasks = [(cfg, seed) for cfg in configs for seed in seeds]
    if jobs == 1:
        results = [run_trial(cfg, seed) for cfg, seed in tasks]
    else:
        results = Parallel(n_jobs=jobs)(
            delayed(run_trial)(cfg, seed) for cfg, seed in tasks
        )
    results.sort(key=lambda r: (r.env_kind, r.env_seed, r.planner))
    return results


def results_csv(results: Sequence[TrialResult]) -> str:
    lines = ["env,seed,planner,cost,steps,reached_goal"]
    for r in results:
        lines.append(
            f"{r.env_kind},{r.env_seed},{r.planner},"
            f"{r.total_cost:.6f},{r.steps},{str(r.reached_goal).lower()}"
        )
    return "\n".join(lines) + "\n"


def scatter_csv(results: Sequence[TrialResult]) -> str:
    """Per-seed costs side by side, one column per planner."""
    planners = sorted({r.planner for r in results})
    by_key = {}
    for r in results:
        by_key.setdefault((r.env_kind, r.env_seed), {})[r.planner] = r.total_cost
    lines = ["env,seed," + ",".join(f"cost_{p}" for p in planners)]
    for (env, seed), costs in sorted(by_key.items()):
        vals = ",".join(
            f"{costs[p]:.6f}" if p in costs else "" for p in planners
        )
        lines.append(f"{env},{seed},{vals}")
    return "\n".join(lines) + "\n"


def mean_costs(results: Sequence[TrialResult]) -> dict:
    """(env, planner) -> mean cost over trials."""
    acc = {}
    for r in results:
        acc.setdefault((r.env_kind, r.planner), []).append(r.total_cost)
    return {k: float(np.mean(v)) for k, v in sorted(acc.items())}


# ---------------------------------------------------------------------------
# Rendering

_CLASS_FILL = {
    int(SemanticClass.NEUTRAL): "#f4f4f4",
    int(SemanticClass.RED): "#f0a0a0",
    int(SemanticClass.BLUE): "#a0b8f0",
    int(SemanticClass.RESERVED): "#f0e0a0",
}


def _timestep_color(frac: float) -> str:
    r = int(40 + 180 * frac)
    g = int(180 - 140 * frac)
    b = int(90 + 120 * frac)
    return f"#{r:02x}{g:02x}{b:02x}"


def render_trial_svg(result: TrialResult, known, cell: int = 8) -> str:
    """Static SVG: semantic map, trajectory colored by timestep, markers.

    The trajectory polyline has exactly one point per pose.
    """
    if not result.trajectory:
        raise ValueError("trajectory is empty")
    w, h = known.width, known.height
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w * cell}" '
        f'height="{h * cell}" viewBox="0 0 {w * cell} {h * cell}">'
    ]
    parts.append(f'<rect width="{w * cell}" height="{h * cell}" fill="#303030"/>')
    for x in range(w):
        for y in range(h):
            if known.occupied[x, y]:
                continue
            fill = _CLASS_FILL[int(known.semantic[x, y])]
            parts.append(
                f'<rect x="{x * cell}" y="{y * cell}" width="{cell}" '
                f'height="{cell}" fill="{fill}"/>'
            )
    pts = " ".join(
        f"{p.x * cell + cell // 2},{p.y * cell + cell // 2}"
        for p in result.trajectory
    )
    parts.append(
        f'<polyline points="{pts}" fill="none" stroke="#404040" stroke-width="1"/>'
    )
    n = max(len(result.trajectory) - 1, 1)
    for i, p in enumerate(result.trajectory):
        parts.append(
            f'<circle cx="{p.x * cell + cell // 2}" cy="{p.y * cell + cell // 2}" '
            f'r="{cell // 4}" fill="{_timestep_color(i / n)}"/>'
        )
    sx, sy = result.trajectory[0]
    parts.append(
        f'<rect x="{sx * cell}" y="{sy * cell}" width="{cell}" height="{cell}" '
        f'fill="none" stroke="#00a000" stroke-width="2"/>'
    )
    gx, gy = known.goal
    parts.append(
        f'<rect x="{gx * cell}" y="{gy * cell}" width="{cell}" height="{cell}" '
        f'fill="none" stroke="#d00000" stroke-width="2"/>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_trial_pgm(result: TrialResult, known) -> str:
    """Plain-text PGM fallback: occupancy in grays, trajectory dark."""
    w, h = known.width, known.height
    shade = {0: 250, 1: 210, 2: 180, 3: 150}
    img = np.zeros((h, w), dtype=int)
    for x in range(w):
        for y in range(h):
            img[y, x] = 30 if known.occupied[x, y] else shade[int(known.semantic[x, y])]
    for p in result.trajectory:
        img[p.y, p.x] = 90
    img[known.start.y, known.start.x] = 120
    img[known.goal.y, known.goal.x] = 0
    lines = ["P2", f"{w} {h}", "255"]
    for y in range(h):
        lines.append(" ".join(str(v) for v in img[y]))
    return "\n".join(lines) + "\n"


def render_trial(result: TrialResult, known, path) -> None:
    path = str(path)
    if path.endswith(".pgm"):
        text = render_trial_pgm(result, known)
    else:
        text = render_trial_svg(result, known)
    with open(path, "w") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# CLI


def parse_seed_range(text: str) -> list:
    """'a..b' (inclusive) or comma-separated integers."""
    if ".." in text:
        a, _, b = text.partition("..")
        return list(range(int(a), int(b) + 1))
    return [int(v) for v in text.split(",") if v.strip()]


def _env_params(args) -> EnvParams:
    return EnvParams(
        kind=args.env,
        seed=0,
        near_goal=getattr(args, "near_goal", False),
    )


def _cmd_generate_data(args) -> int:
    params = _env_params(args)
    seeds = parse_seed_range(args.seeds)

    if args.voi_estimator == "heuristic":
        factory = lambda known: HeuristicEstimator()  # noqa: E731
    elif args.voi_estimator == "oracle":
        factory = lambda known: OracleEstimator.for_environment(known)  # noqa: E731
    else:
        model = load_model(args.voi_estimator)
        factory = lambda known: ModelEstimator(model)  # noqa: E731

    records = generate_dataset(
        params,
        seeds,
        factory,
        planner_schedule=args.schedule,
        sensor_range=args.sensor_range,
    )
    save_dataset(records, args.out)
    print(f"wrote {len(records)} records to {args.out}")
    return 0


def _cmd_train(args) -> int:
    records = load_dataset(args.data)
    cfg = TrainConfig(
        rounds=args.rounds,
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        rng_seed=args.seed,
    )
    model = train(records, cfg)
    save_model(model, args.out)
    print(f"trained on {len(records)} records -> {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    params = _env_params(args)
    seeds = parse_seed_range(args.seeds)
    planners = [p.strip() for p in args.planners.split(",") if p.strip()]
    configs = [
        RunConfig(
            env=params,
            planner=p,
            estimator_spec=args.estimator,
            sensor_range=args.sensor_range,
        )
        for p in planners
    ]
    results = run_benchmark(configs, seeds, jobs=args.jobs)
    with open(args.out, "w") as fh:
        fh.write(results_csv(results))
    if args.scatter:
        with open(args.scatter, "w") as fh:
            fh.write(scatter_csv(results))
    for (env, planner), mean in mean_costs(results).items():
        done = sum(
            1 for r in results if r.planner == planner and r.reached_goal
        )
        print(f"{env} {planner}: mean cost {mean:.2f} ({done}/{len(seeds)} reached)")
    aborted = [r for r in results if r.aborted or not r.reached_goal]
    return 1 if aborted else 0


def _cmd_run_trial(args) -> int:
    params = _env_params(args)
    config = RunConfig(
        env=params,
        planner=args.planner,
        estimator_spec=args.estimator,
        sensor_range=args.sensor_range,
    )
    result = run_trial(config, args.seed)
    print(
        f"{args.env} seed={args.seed} planner={args.planner}: "
        f"cost {result.total_cost:.2f}, steps {result.steps}, "
        f"reached_goal={result.reached_goal}"
    )
    if args.render:
        known = generate(replace(params, seed=args.seed))
        render_trial(result, known, args.render)
        print(f"render written to {args.render}")
    return 0 if result.reached_goal else 1


def _cmd_check_env(args) -> int:
    params = _env_params(args)
    failures = 0
    for seed in parse_seed_range(args.seeds):
        grid = generate(replace(params, seed=seed))
        report = check_environment(grid, args.env, sensor_range=args.sensor_range)
        if not report.passed:
            failures += 1
            print(f"seed {seed}: FAIL {report.violations}")
    print(f"check-env {args.env}: {failures} failing seeds")
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lspnav",
        description="Navigation-under-uncertainty workbench benchmark CLI",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, planner=False):
        p.add_argument("--env", required=True, choices=KINDS)
        p.add_argument("--sensor-range", type=float, default=20.0)
        p.add_argument("--near-goal", action="store_true")

    p = sub.add_parser("generate-data", help="roll out trials and emit labels")
    common(p)
    p.add_argument("--seeds", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--schedule", default="alternating")
    p.add_argument(
        "--voi-estimator",
        default="heuristic",
        help="policy estimator behind the one-step value: heuristic, oracle, "
        "or a trained model path (two-pass training)",
    )
    p.set_defaults(func=_cmd_generate_data)

    p = sub.add_parser("train", help="fit the subgoal-property model")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rounds", type=int, default=2)
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="benchmark planners over seeds")
    common(p)
    p.add_argument("--seeds", required=True)
    p.add_argument("--planners", required=True)
    p.add_argument("--estimator", default="oracle")
    p.add_argument("--out", required=True)
    p.add_argument("--scatter", default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("run-trial", help="run and optionally render one trial")
    common(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--planner", required=True, choices=PLANNERS)
    p.add_argument("--estimator", default="oracle")
    p.add_argument("--render", default=None)
    p.set_defaults(func=_cmd_run_trial)

    p = sub.add_parser("check-env", help="validate generated environments")
    common(p)
    p.add_argument("--seeds", required=True)
    p.set_defaults(func=_cmd_check_env)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
