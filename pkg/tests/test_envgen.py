import numpy as np
import pytest

from lspnav.envgen import EnvParams, check_environment, generate
from lspnav.worldsim import SemanticClass, dumps_map, make_grid

KINDS = ["j_intersection", "ring_office", "parallel_hallway"]


@pytest.mark.parametrize("kind", KINDS)
def test_seed_determinism(kind):
    a = generate(EnvParams(kind=kind, seed=7))
    b = generate(EnvParams(kind=kind, seed=7))
    assert dumps_map(a) == dumps_map(b)
    assert a.extras.keys() == b.extras.keys()


@pytest.mark.parametrize("kind", KINDS)
def test_distinct_layouts_across_seeds(kind):
    seen = {dumps_map(generate(EnvParams(kind=kind, seed=s))) for s in range(100)}
    assert len(seen) >= 95


@pytest.mark.parametrize("kind", KINDS)
def test_checker_passes_on_generated_maps(kind):
    for seed in range(30):
        grid = generate(EnvParams(kind=kind, seed=seed))
        report = check_environment(grid, kind)
        assert report.passed, f"seed {seed}: {report.violations}"


def test_jint_both_center_colors_occur():
    colors = set()
    for seed in range(50):
        grid = generate(EnvParams(kind="j_intersection", seed=seed))
        info = next(iter(grid.extras["info_cells"]))
        colors.add(int(grid.semantic[info[0], info[1]]))
    assert colors == {int(SemanticClass.RED), int(SemanticClass.BLUE)}


def test_jint_mirror_world_flips_branch_and_color():
    grid = generate(EnvParams(kind="j_intersection", seed=3))
    mirror = grid.extras["mirror"]
    assert mirror.extras["correct_branch"] != grid.extras["correct_branch"]
    assert mirror.goal == grid.goal
    info = sorted(grid.extras["info_cells"])[4]
    assert grid.semantic[info[0], info[1]] != mirror.semantic[info[0], info[1]]
    # occupancy differs only at the chamber seal columns
    diff = np.argwhere(grid.occupied != mirror.occupied)
    assert len(diff) > 0
    gx = grid.goal.x
    assert all(abs(int(x) - gx) == 2 for x, y in diff)


def test_sealed_goal_is_caught():
    grid = generate(EnvParams(kind="j_intersection", seed=1))
    occ = np.array(grid.occupied)
    gx, gy = grid.goal
    occ[gx - 1 : gx + 2, gy - 1] = True
    occ[gx - 1 : gx + 2, gy + 1] = True
    occ[gx - 1, gy] = True
    occ[gx + 1, gy] = True
    broken = make_grid(
        occ, grid.semantic, grid.start, grid.goal, extras=dict(grid.extras)
    )
    report = check_environment(broken, "j_intersection")
    assert not report.passed
    assert any("unreachable-goal" in v for v in report.violations)


def test_two_map_rooms_are_caught():
    grid = generate(EnvParams(kind="parallel_hallway", seed=1))
    sem = np.array(grid.semantic)
    red_free = (sem == SemanticClass.RED) & ~grid.occupied
    cells = np.argwhere(red_free)
    # recolor one red room face blue far from the existing map room
    x, y = cells[-1]
    sem[x, y] = SemanticClass.BLUE
    broken = make_grid(
        grid.occupied,
        sem,
        grid.start,
        grid.goal,
        map_room=grid.map_room,
        extras=dict(grid.extras),
    )
    report = check_environment(broken, "parallel_hallway")
    assert not report.passed
    assert any("map-room-count" in v for v in report.violations)


def test_parallel_hallway_near_goal_variant():
    far = generate(EnvParams(kind="parallel_hallway", seed=5))
    near = generate(EnvParams(kind="parallel_hallway", seed=5, near_goal=True))
    rows = near.extras["hallway_rows"]
    assert near.start.y == near.goal.y == rows[0] + 1
    assert far.goal.y == far.extras["hallway_rows"][-1] + 1


def test_parallel_hallway_map_room_on_start_hallway():
    for seed in range(10):
        grid = generate(EnvParams(kind="parallel_hallway", seed=seed))
        assert grid.map_room
        rows = grid.extras["hallway_rows"]
        ys = {y for _, y in grid.map_room}
        # interior of the first room band, adjacent to the start hallway
        assert min(ys) == rows[0] + 4


def test_undersized_dimensions_rejected():
    from lspnav.errors import GenerationError

    with pytest.raises(GenerationError):
        generate(EnvParams(kind="j_intersection", width=20, height=20))
    with pytest.raises(GenerationError):
        generate(EnvParams(kind="parallel_hallway", height=20, hallways=5))
