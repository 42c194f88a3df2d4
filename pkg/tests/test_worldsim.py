import math

import numpy as np
import pytest

from lspnav.errors import (
    CorruptedObservationError,
    InvalidPoseError,
    InvalidSourceError,
)
from lspnav.worldsim import (
    CellState,
    Pose,
    SemanticClass,
    distance_field,
    dumps_map,
    full_reveal,
    loads_map,
    make_grid,
    PartialMap,
    reveal_region,
    simulate_sensor,
    update_partial_map,
)

from conftest import (
    oracle_dijkstra,
    oracle_visible_free_space,
    open_grid,
    random_small_world,
)


def revealed_set(obs):
    return {(int(x), int(y)) for x, y in obs.cells}


class TestSensor:
    def test_enclosed_center_sees_exactly_the_ring(self):
        occ = np.ones((5, 5), dtype=bool)
        occ[2, 2] = False
        grid = make_grid(occ)
        obs = simulate_sensor(grid, Pose(2, 2), 5)
        expected = {(x, y) for x in (1, 2, 3) for y in (1, 2, 3)}
        assert revealed_set(obs) == expected

    def test_free_space_matches_line_of_sight_oracle(self):
        grid = make_grid(np.zeros((30, 30), dtype=bool))
        pose = Pose(15, 15)
        obs = simulate_sensor(grid, pose, 5)
        assert revealed_set(obs) == oracle_visible_free_space(
            grid.occupied, pose, 5
        )

    def test_wall_occludes_far_cell_but_is_itself_revealed(self):
        occ = np.zeros((11, 5), dtype=bool)
        occ[5, :] = True  # one-cell-thick vertical wall
        grid = make_grid(occ)
        obs = simulate_sensor(grid, Pose(2, 2), 20)
        seen = revealed_set(obs)
        assert (5, 2) in seen
        assert (8, 2) not in seen

    def test_determinism(self):
        grid = random_small_world(np.random.default_rng(3))
        a = simulate_sensor(grid, grid.start, 7)
        b = simulate_sensor(grid, grid.start, 7)
        assert np.array_equal(a.cells, b.cells)
        assert np.array_equal(a.occupied, b.occupied)

    def test_invalid_pose_rejected(self):
        occ = np.zeros((4, 4), dtype=bool)
        occ[1, 1] = True
        grid = make_grid(occ)
        with pytest.raises(InvalidPoseError):
            simulate_sensor(grid, Pose(1, 1), 5)
        with pytest.raises(InvalidPoseError):
            simulate_sensor(grid, Pose(9, 9), 5)


class TestBeliefUpdate:
    def test_empty_observation_is_identity(self):
        grid = make_grid(open_grid(4, 4))
        partial = PartialMap.unseen_like(grid)
        obs = simulate_sensor(grid, Pose(2, 2), 3)
        empty = type(obs)(
            cells=obs.cells[:0], occupied=obs.occupied[:0], semantic=obs.semantic[:0]
        )
        assert update_partial_map(partial, empty) is partial

    def test_idempotent_on_known_cells(self):
        grid = make_grid(open_grid(4, 4))
        partial = PartialMap.unseen_like(grid)
        obs = simulate_sensor(grid, Pose(2, 2), 3)
        once = update_partial_map(partial, obs)
        twice = update_partial_map(once, obs)
        assert twice is once
        assert twice.version == once.version

    def test_fresh_cells_grow_by_observation_size(self):
        grid = make_grid(open_grid(6, 6))
        partial = PartialMap.unseen_like(grid)
        obs = simulate_sensor(grid, Pose(3, 3), 2)
        seen_union = revealed_set(obs)
        updated = update_partial_map(partial, obs)
        assert int((updated.state != CellState.UNSEEN).sum()) == len(seen_union)

    def test_conflicting_observation_rejected(self):
        grid = make_grid(open_grid(4, 4))
        partial = PartialMap.unseen_like(grid)
        obs = simulate_sensor(grid, Pose(2, 2), 3)
        partial = update_partial_map(partial, obs)
        bad = type(obs)(
            cells=obs.cells[:1],
            occupied=~obs.occupied[:1],
            semantic=obs.semantic[:1],
        )
        with pytest.raises(CorruptedObservationError):
            update_partial_map(partial, bad)

    def test_consistency_and_monotonicity_over_a_walk(self, rng):
        grid = random_small_world(rng, 10, 10)
        partial = PartialMap.unseen_like(grid)
        free = np.argwhere(~grid.occupied)
        prev_known = 0
        for i in range(12):
            x, y = free[rng.integers(len(free))]
            obs = simulate_sensor(grid, Pose(int(x), int(y)), 4)
            partial = update_partial_map(partial, obs)
            known = partial.state != CellState.UNSEEN
            assert int(known.sum()) >= prev_known
            prev_known = int(known.sum())
            occ_match = (partial.state == CellState.OCCUPIED) == (
                grid.occupied & known
            )
            assert occ_match.all()
            assert (partial.semantic[known] == grid.semantic[known]).all()


class TestRevealRegion:
    def test_empty_region_identity(self):
        grid = make_grid(open_grid(4, 4))
        partial = PartialMap.unseen_like(grid)
        assert reveal_region(partial, grid, []) is partial

    def test_full_reveal_matches_known_everywhere(self):
        grid = random_small_world(np.random.default_rng(5))
        partial = full_reveal(PartialMap.unseen_like(grid), grid)
        assert (partial.state != CellState.UNSEEN).all()
        assert (
            (partial.state == CellState.OCCUPIED) == grid.occupied
        ).all()
        assert (partial.semantic == grid.semantic).all()

    def test_partial_region_transitions_exactly_those_cells(self):
        grid = make_grid(open_grid(8, 8))
        partial = PartialMap.unseen_like(grid)
        region = [(2, 2), (2, 3), (3, 2)]
        out = reveal_region(partial, grid, region)
        changed = {
            (int(x), int(y))
            for x, y in np.argwhere(out.state != partial.state)
        }
        assert changed == set(region)


class TestDistanceField:
    def test_straight_corridor(self):
        occ = np.zeros((10, 3), dtype=bool)
        occ[:, 0] = occ[:, 2] = True
        field = distance_field(None, Pose(1, 1), ~occ)
        assert field[(6, 1)] == pytest.approx(5.0)

    def test_diagonal(self):
        field = distance_field(None, Pose(2, 2), ~open_grid(8, 8))
        assert field[(5, 5)] == pytest.approx(3 * math.sqrt(2))

    def test_sealed_pocket_unreachable(self):
        occ = open_grid(9, 9)
        occ[4:7, 4:7] = True
        occ[5, 5] = False
        field = distance_field(None, Pose(1, 1), ~occ)
        assert math.isinf(field[(5, 5)])

    def test_invalid_source(self):
        occ = open_grid(4, 4)
        with pytest.raises(InvalidSourceError):
            distance_field(None, Pose(0, 0), ~occ)

    def test_no_corner_cutting(self):
        occ = np.zeros((3, 3), dtype=bool)
        occ[1, 0] = occ[0, 1] = True
        field = distance_field(None, Pose(0, 0), ~occ)
        # the diagonal move is blocked; (1,1) must be unreachable
        assert math.isinf(field[(1, 1)])

    def test_matches_heapq_oracle_on_random_worlds(self, rng):
        for _ in range(25):
            grid = random_small_world(rng)
            mask = ~grid.occupied
            src = grid.start
            field = distance_field(None, src, mask)
            oracle = oracle_dijkstra(mask, (src.x, src.y))
            assert np.allclose(field.dist, oracle, equal_nan=False, atol=1e-9)


class TestMapIO:
    def test_roundtrip(self):
        grid = make_grid(
            open_grid(5, 4),
            start=Pose(1, 1),
            goal=Pose(5, 4),
            map_room=[(2, 2), (3, 2)],
        )
        sem = np.array(grid.semantic)
        sem[2, 2] = SemanticClass.BLUE
        sem[3, 2] = SemanticClass.BLUE
        sem[4, 1] = SemanticClass.RED
        grid = make_grid(
            grid.occupied, sem, grid.start, grid.goal, map_room=grid.map_room
        )
        back = loads_map(dumps_map(grid))
        assert np.array_equal(back.occupied, grid.occupied)
        assert np.array_equal(back.semantic, grid.semantic)
        assert back.start == grid.start and back.goal == grid.goal
        assert back.map_room == grid.map_room

    def test_dumps_stable(self):
        grid = make_grid(open_grid(3, 3), start=Pose(1, 1), goal=Pose(2, 2))
        assert dumps_map(grid) == dumps_map(grid)
