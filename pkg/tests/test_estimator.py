import math

import numpy as np
import pytest

from lspnav.envgen import EnvParams, generate
from lspnav.estimator import (
    HEAD_NAMES,
    HeuristicEstimator,
    ModelEstimator,
    OracleEstimator,
    TrainConfig,
    aggregate_features,
    dumps_model,
    evaluate_model,
    feature_width,
    featurize_dataset,
    loads_model,
    loss_and_gradients,
    predict,
    train,
    zero_model,
)
from lspnav.navgraph import NavGraph, build_nav_graph, extract_frontiers
from lspnav.voi_oracle import (
    DatasetRecord,
    SubgoalLabels,
    label_ps_rs,
    label_re,
)
from lspnav.worldsim import (
    PartialMap,
    Pose,
    make_grid,
    reveal_region,
    simulate_sensor,
    update_partial_map,
)


def corridor_graph():
    occ = np.ones((14, 5), dtype=bool)
    occ[1:13, 1:4] = False
    grid = make_grid(occ, start=Pose(1, 2), goal=Pose(12, 2))
    known = occ.copy()
    known[1:7, 1:4] = True
    partial = reveal_region(PartialMap.unseen_like(grid), grid, known)
    fronts = extract_frontiers(partial)
    return grid, partial, fronts, build_nav_graph(partial, fronts, grid.goal)


def mini_record(red: bool, vi: float, seed: int = 0) -> DatasetRecord:
    feats = np.zeros((3, 7))
    feats[0, 0] = 1.0  # structure node, neutral
    feats[0, 4] = 2.0
    feats[1, 1 if red else 2] = 1.0  # subgoal node: red or blue
    feats[1, 4] = 2.0
    feats[1, 5] = 1.0
    feats[2, 0] = 1.0  # goal node
    feats[2, 4] = 2.0
    feats[2, 6] = 1.0
    graph = NavGraph(
        positions=(Pose(1, 1), Pose(4, 1), Pose(8, 8)),
        features=feats,
        edges=((0, 1, 3.0), (0, 2, 8.0), (1, 2, 6.0)),
        subgoal_nodes={0: 1},
        goal_node=2,
    )
    labels = (
        SubgoalLabels(
            frontier_id=0,
            node_id=1,
            label_ps=1 if red else 0,
            label_rs=10.0 if red else 0.0,
            label_re=4.0,
            label_vi=vi,
        ),
    )
    return DatasetRecord(env_seed=seed, timestep=0, nav_graph=graph, labels=labels)


class TestPredict:
    def test_zero_model_outputs(self):
        _, _, fronts, graph = corridor_graph()
        preds = predict(zero_model(2), graph)
        for f in fronts:
            p_s, r_s, r_e, v_i = preds[f]
            assert p_s == pytest.approx(0.5)
            assert r_s == pytest.approx(math.log(2.0))
            assert r_e == pytest.approx(math.log(2.0))
            assert v_i == 0.0

    def test_output_ranges(self, rng):
        _, _, fronts, graph = corridor_graph()
        d = feature_width(2)
        heads = {name: rng.normal(size=d + 1) for name in HEAD_NAMES}
        model = zero_model(2)
        model = type(model)(
            rounds=2,
            heads=heads,
            norm_scale=model.norm_scale,
            norm_offset=model.norm_offset,
        )
        for p_s, r_s, r_e, v_i in predict(model, graph).values():
            assert 0.0 < p_s < 1.0
            assert r_s >= 0.0 and r_e >= 0.0

    def test_isomorphism_equivariance(self, rng):
        rec = mini_record(True, 3.0)
        g = rec.nav_graph
        perm = [2, 0, 1]  # new id of old node i
        feats = np.zeros_like(g.features)
        for old, new in enumerate(perm):
            feats[new] = g.features[old]
        g2 = NavGraph(
            positions=tuple(g.positions[perm.index(i)] for i in range(3)),
            features=feats,
            edges=tuple((perm[u], perm[v], d) for u, v, d in g.edges),
            subgoal_nodes={0: perm[1]},
            goal_node=perm[2],
        )
        d = feature_width(1)
        heads = {name: rng.normal(size=d + 1) for name in HEAD_NAMES}
        model = zero_model(1)
        model = type(model)(1, heads, model.norm_scale, model.norm_offset)
        assert predict(model, g)[0] == pytest.approx(predict(model, g2)[0])


class TestModelIO:
    def test_roundtrip_bit_exact(self, rng):
        d = feature_width(3)
        model = zero_model(3)
        model = type(model)(
            rounds=3,
            heads={name: rng.normal(size=d + 1) for name in HEAD_NAMES},
            norm_scale=np.abs(rng.normal(size=d)) + 0.5,
            norm_offset=rng.normal(size=d),
        )
        back = loads_model(dumps_model(model))
        assert back.rounds == model.rounds
        for name in HEAD_NAMES:
            assert np.array_equal(back.heads[name], model.heads[name])
        assert np.array_equal(back.norm_scale, model.norm_scale)
        assert np.array_equal(back.norm_offset, model.norm_offset)

    def test_header_validation(self):
        with pytest.raises(ValueError):
            loads_model("something-else v9 rounds=2\n")


class TestTraining:
    def test_gradient_matches_finite_differences(self, rng):
        cfg = TrainConfig(w_ps=1.0, w_rs=0.1, w_re=0.1, w_vi=0.1)
        for _ in range(20):
            b, d = 12, 9
            x = rng.normal(size=(b, d))
            targets = {
                "ps": (rng.random(b) < 0.5).astype(float),
                "rs": np.abs(rng.normal(size=b)) * 3 + 0.1,
                "re": np.abs(rng.normal(size=b)) * 3 + 0.1,
                "vi": rng.normal(size=b) * 2,
            }
            heads = {name: rng.normal(size=d + 1) * 0.5 for name in HEAD_NAMES}
            _, grads = loss_and_gradients(heads, x, targets, cfg)
            flat_a = np.concatenate([grads[n] for n in HEAD_NAMES])
            flat_fd = []
            h = 1e-6
            for name in HEAD_NAMES:
                g = np.zeros(d + 1)
                for i in range(d + 1):
                    hp = {k: v.copy() for k, v in heads.items()}
                    hm = {k: v.copy() for k, v in heads.items()}
                    hp[name][i] += h
                    hm[name][i] -= h
                    lp, _ = loss_and_gradients(hp, x, targets, cfg)
                    lm, _ = loss_and_gradients(hm, x, targets, cfg)
                    g[i] = (lp - lm) / (2 * h)
                flat_fd.append(g)
            flat_fd = np.concatenate(flat_fd)
            rel = np.linalg.norm(flat_a - flat_fd) / max(
                np.linalg.norm(flat_fd), 1e-12
            )
            assert rel < 1e-4

    def test_descent_on_separable_toy(self):
        records = [mini_record(red=i % 2 == 0, vi=0.0, seed=i) for i in range(40)]
        cfg = TrainConfig(rounds=1, epochs=30, learning_rate=0.5, rng_seed=1)
        x, ps, rs, re, vi = featurize_dataset(records, cfg.rounds)
        model0 = zero_model(cfg.rounds)
        xn = (x - model0.norm_offset) / model0.norm_scale
        t = {"ps": ps, "rs": rs, "re": re, "vi": vi}
        loss0, _ = loss_and_gradients(model0.heads, xn, t, cfg)
        model = train(records, cfg)
        xn = (x - model.norm_offset) / model.norm_scale
        loss1, _ = loss_and_gradients(model.heads, xn, t, cfg)
        assert loss1 < loss0
        metrics = evaluate_model(model, records)
        assert metrics["ps_accuracy"] == 1.0

    def test_training_determinism(self):
        records = [mini_record(red=i % 3 == 0, vi=float(i % 5)) for i in range(30)]
        cfg = TrainConfig(rounds=2, epochs=5, rng_seed=7)
        a = train(records, cfg)
        b = train(records, cfg)
        assert dumps_model(a) == dumps_model(b)
        for name in HEAD_NAMES:
            assert np.array_equal(a.heads[name], b.heads[name])

    def test_empty_dataset_rejected(self):
        from lspnav.errors import NoDataError

        with pytest.raises(NoDataError):
            train([], TrainConfig())


class TestEstimators:
    def test_heuristic_values(self):
        _, partial, fronts, _ = corridor_graph()
        est = HeuristicEstimator()
        goal = Pose(12, 2)
        props = est.subgoal_properties(partial, Pose(1, 2), goal, fronts)
        for f, (p_s, r_s, r_e, v_i) in zip(fronts, props):
            assert p_s == 0.5
            assert r_s == pytest.approx(
                math.hypot(f.subgoal.x - goal.x, f.subgoal.y - goal.y)
            )
            assert r_e == float(len(f.region))
            assert v_i == 0.0

    def test_oracle_matches_label_functions(self):
        grid, partial, fronts, _ = corridor_graph()
        est = OracleEstimator(grid, voi_mode="zero")
        props = est.subgoal_properties(partial, grid.start, grid.goal, fronts)
        for f, (p_s, r_s, r_e, v_i) in zip(fronts, props):
            ps, rs = label_ps_rs(grid, partial, f, grid.goal)
            re = label_re(grid, partial, f)
            assert p_s == float(ps)
            assert r_s == pytest.approx(rs)
            assert r_e == pytest.approx(re)
            assert v_i == 0.0

    def test_oracle_rollout_corridor(self):
        grid, partial, fronts, _ = corridor_graph()
        est = OracleEstimator(grid, voi_mode="rollout", sensor_range=6.0)
        props = est.subgoal_properties(partial, grid.start, grid.goal, fronts)
        goal_fronts = [
            (f, p)
            for f, p in zip(fronts, props)
            if (grid.goal.x, grid.goal.y) in f.region
        ]
        assert goal_fronts
        for f, (p_s, r_s, r_e, v_i) in zip(fronts, props):
            if (f, (p_s, r_s, r_e, v_i)) in goal_fronts:
                assert p_s == 1.0
            else:
                assert v_i >= -1e-9

    def test_model_estimator_roundtrip(self):
        grid, partial, fronts, graph = corridor_graph()
        model = zero_model(2)
        est = ModelEstimator(model)
        props = est.subgoal_properties(partial, grid.start, grid.goal, fronts)
        assert len(props) == len(fronts)
        assert props[0][0] == pytest.approx(0.5)

    def test_zero_vi_oracle_makes_aig_equal_lsp(self):
        from lspnav.lsp_core import select_action

        grid, partial, fronts, _ = corridor_graph()
        est = OracleEstimator(grid, voi_mode="zero")
        a = select_action(partial, grid.start, grid.goal, est, mode="lsp")
        b = select_action(partial, grid.start, grid.goal, est, mode="aig")
        assert a.q_value == b.q_value
        assert a.ordering == b.ordering
