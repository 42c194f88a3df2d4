"""Seeded procedural generators for the three benchmark environments.

All three share one latent-information motif: somewhere out of the way
sits a region whose contents determine the cheap route to the goal.

* j_intersection — a stem descends through an intersection whose left and
  right branches both converge on a shared goal chamber at the bottom;
  exactly one branch connects (the one whose painted color matches the
  hidden center square down the hook below the intersection).
* ring_office — a ring corridor with the goal chamber at the top, one arc
  sealed next to it, dead-end rooms flanking both arcs, and a bent stub
  at the bottom leading to the color marker that names the open arc.
* parallel_hallway — parallel hallways joined only through rooms; one red
  passage room per hallway pair among red dead-end rooms, plus a single
  blue map room off the start hallway that reveals the whole map when
  entered.

Layout quantities (dimensions, widths, room sizes, counts) are artifact
defaults exposed through EnvParams, not constants.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import GenerationError
from .worldsim import (
    Pose,
    SemanticClass,
    SemanticOccupancyGrid,
    make_grid,
    masked_dijkstra,
    simulate_sensor,
)

KINDS = ("j_intersection", "ring_office", "parallel_hallway")


@dataclass(frozen=True)
class EnvParams:
    kind: str = "j_intersection"
    width: int = 0  # 0 = kind default
    height: int = 0
    hallway_width: int = 3
    room_size: tuple = (4, 7)  # interior side range, inclusive
    rooms_per_pair: tuple = (4, 8)  # dead-end rooms per hallway pair / arc
    hallways: int = 4  # parallel_hallway only
    near_goal: bool = False  # parallel_hallway start-next-to-goal variant
    seed: int = 0

    def sized(self) -> "EnvParams":
        defaults = {
            "j_intersection": (37, 44),
            "ring_office": (76, 56),
            "parallel_hallway": (56, 38),
        }
        w, h = defaults[self.kind]
        return replace(
            self,
            width=self.width or w,
            height=self.height or h,
        )


def generate(params: EnvParams) -> SemanticOccupancyGrid:
    params = params.sized()
    if params.kind == "j_intersection":
        return gen_j_intersection(params)
    if params.kind == "ring_office":
        return gen_ring_office(params)
    if params.kind == "parallel_hallway":
        return gen_parallel_hallway(params)
    raise GenerationError(f"unknown environment kind {params.kind!r}")


def _cells(x0, x1, y0, y1):
    """Inclusive rectangle as a frozenset of cells."""
    return frozenset((x, y) for x in range(x0, x1 + 1) for y in range(y0, y1 + 1))


def _carve(occ, x0, x1, y0, y1):
    occ[x0 : x1 + 1, y0 : y1 + 1] = False


def _paint(sem, occ, x0, x1, y0, y1, color):
    box = np.zeros(occ.shape, dtype=bool)
    box[x0 : x1 + 1, y0 : y1 + 1] = True
    sem[box & ~occ] = color


# ---------------------------------------------------------------------------
# J-Intersection


def _jint_layout(params: EnvParams) -> dict:
    rng = np.random.default_rng(params.seed)
    w, h = params.width, params.height
    if w < 31 or h < 36:
        raise GenerationError("j_intersection needs at least 31x36 cells")
    cx = w // 2 + int(rng.integers(-2, 3))
    int_y = 6 + int(rng.integers(0, 3))
    hook_y = int_y + 5 + int(rng.integers(0, 3))
    bot_y = h - 5 - int(rng.integers(0, 2))
    hook_dir = 1 if rng.random() < 0.5 else -1
    hook_len = 5 + int(rng.integers(0, 3))  # corridor before the square
    left_color, right_color = (
        (SemanticClass.RED, SemanticClass.BLUE)
        if rng.random() < 0.5
        else (SemanticClass.BLUE, SemanticClass.RED)
    )
    correct = "left" if rng.random() < 0.5 else "right"
    return {
        "w": w,
        "h": h,
        "cx": cx,
        "int_y": int_y,
        "hook_y": hook_y,
        "bot_y": bot_y,
        "hook_dir": hook_dir,
        "hook_len": hook_len,
        "left_color": left_color,
        "right_color": right_color,
        "correct": correct,
        "ax_l": 2,
        "ax_r": w - 3,
    }


def _jint_build(layout: dict, correct: str, with_mirror: bool) -> SemanticOccupancyGrid:
    w, h = layout["w"], layout["h"]
    cx = layout["cx"]
    int_y, hook_y, bot_y = layout["int_y"], layout["hook_y"], layout["bot_y"]
    ax_l, ax_r = layout["ax_l"], layout["ax_r"]

    occ = np.ones((w, h), dtype=bool)
    sem = np.zeros((w, h), dtype=np.uint8)

    _carve(occ, cx - 1, cx + 1, 2, hook_y + 2)  # stem incl. lower run
    _carve(occ, ax_l, ax_r, int_y, int_y + 2)  # intersection band / arms
    _carve(occ, ax_l, ax_l + 2, int_y, bot_y + 2)  # left shaft
    _carve(occ, ax_r - 2, ax_r, int_y, bot_y + 2)  # right shaft
    _carve(occ, ax_l, cx - 3, bot_y, bot_y + 2)  # left bottom corridor
    _carve(occ, cx + 3, ax_r, bot_y, bot_y + 2)  # right bottom corridor
    _carve(occ, cx - 1, cx + 1, bot_y, bot_y + 2)  # goal chamber

    # open exactly one side of the chamber
    if correct == "left":
        _carve(occ, cx - 2, cx - 2, bot_y, bot_y + 2)
    else:
        _carve(occ, cx + 2, cx + 2, bot_y, bot_y + 2)

    # hook corridor below the intersection, ending in the colored square;
    # clamped one wall short of the shafts so it stays a dead end
    total = layout["hook_len"] + 3
    if layout["hook_dir"] > 0:
        hx0, hx1 = cx + 2, min(cx + 1 + total, ax_r - 4)
        sq_x0, sq_x1 = hx1 - 2, hx1
    else:
        hx0, hx1 = max(cx - 1 - total, ax_l + 4), cx - 2
        sq_x0, sq_x1 = hx0, hx0 + 2
    if hx1 - hx0 + 1 < 5:
        raise GenerationError("j_intersection hook does not fit")
    _carve(occ, hx0, hx1, hook_y, hook_y + 2)

    center_color = (
        layout["left_color"] if correct == "left" else layout["right_color"]
    )
    _paint(sem, occ, sq_x0, sq_x1, hook_y, hook_y + 2, center_color)
    # branch paint: arms beyond the stem plus shafts plus bottom corridors
    _paint(sem, occ, ax_l, cx - 2, int_y, int_y + 2, layout["left_color"])
    _paint(sem, occ, ax_l, ax_l + 2, int_y, bot_y + 2, layout["left_color"])
    _paint(sem, occ, ax_l, cx - 2, bot_y, bot_y + 2, layout["left_color"])
    _paint(sem, occ, cx + 2, ax_r, int_y, int_y + 2, layout["right_color"])
    _paint(sem, occ, ax_r - 2, ax_r, int_y, bot_y + 2, layout["right_color"])
    _paint(sem, occ, cx + 2, ax_r, bot_y, bot_y + 2, layout["right_color"])
    # keep the chamber and the stem neutral
    _paint(sem, occ, cx - 1, cx + 1, bot_y, bot_y + 2, SemanticClass.NEUTRAL)
    _paint(sem, occ, cx - 1, cx + 1, 2, hook_y + 2, SemanticClass.NEUTRAL)

    start = Pose(cx, 2)
    goal = Pose(cx, bot_y + 1)

    square = _cells(sq_x0, sq_x1, hook_y, hook_y + 2)
    hook_cells = _cells(hx0, hx1, hook_y, hook_y + 2) | _cells(
        cx - 1, cx + 1, int_y + 3, hook_y + 2
    )
    branch_left = (
        _cells(ax_l, cx - 2, int_y, int_y + 2)
        | _cells(ax_l, ax_l + 2, int_y, bot_y + 2)
        | _cells(ax_l, cx - 2, bot_y, bot_y + 2)
    )
    branch_right = (
        _cells(cx + 2, ax_r, int_y, int_y + 2)
        | _cells(ax_r - 2, ax_r, int_y, bot_y + 2)
        | _cells(cx + 2, ax_r, bot_y, bot_y + 2)
    )
    extras = {
        "info_cells": square,
        "center_region": square | hook_cells,
        "branch_cells": {"left": branch_left, "right": branch_right},
        "correct_branch": correct,
        "intersection_cells": _cells(cx - 1, cx + 1, int_y, int_y + 2),
        "candidate_goals": (goal,),
    }
    if with_mirror:
        other = "right" if correct == "left" else "left"
        extras["mirror"] = _jint_build(layout, other, with_mirror=False)
    return make_grid(occ, sem, start, goal, extras=extras)


def gen_j_intersection(params: EnvParams) -> SemanticOccupancyGrid:
    layout = _jint_layout(params.sized())
    return _jint_build(layout, layout["correct"], with_mirror=True)


# ---------------------------------------------------------------------------
# Ring-Office


def _ring_layout(params: EnvParams) -> dict:
    rng = np.random.default_rng(params.seed)
    w, h = params.width, params.height
    if w < 48 or h < 40:
        raise GenerationError("ring_office needs at least 48x40 cells")
    cx = w // 2 + int(rng.integers(-2, 3))
    ty = 9 + int(rng.integers(0, 2))  # top band: leave space for outer rooms
    by = h - 14 + int(rng.integers(0, 2))  # bottom band
    lx = 9 + int(rng.integers(0, 2))
    rx = w - 12 + int(rng.integers(0, 2))
    stub_drop = 6 + int(rng.integers(0, 3))  # deep enough to bend out of sight
    stub_dir = 1 if rng.random() < 0.5 else -1
    stub_jog = 4 + int(rng.integers(0, 3))
    left_color, right_color = (
        (SemanticClass.RED, SemanticClass.BLUE)
        if rng.random() < 0.5
        else (SemanticClass.BLUE, SemanticClass.RED)
    )
    correct = "left" if rng.random() < 0.5 else "right"
    n_rooms = int(
        rng.integers(params.rooms_per_pair[0], params.rooms_per_pair[1] + 1)
    )
    room_seed = int(rng.integers(0, 2**31))
    jy0 = by + stub_drop
    jog_total = stub_jog + 3
    if stub_dir > 0:
        jog_x0, jog_x1 = cx + 2, cx + 1 + jog_total
        mk_x0, mk_x1 = jog_x1 - 2, jog_x1
    else:
        jog_x0, jog_x1 = cx - 1 - jog_total, cx - 2
        mk_x0, mk_x1 = jog_x0, jog_x0 + 2
    return {
        "w": w,
        "h": h,
        "cx": cx,
        "ty": ty,
        "by": by,
        "lx": lx,
        "rx": rx,
        "stub_drop": stub_drop,
        "stub_dir": stub_dir,
        "stub_jog": stub_jog,
        "jy0": jy0,
        "jog_x0": jog_x0,
        "jog_x1": jog_x1,
        "mk_x0": mk_x0,
        "mk_x1": mk_x1,
        "left_color": left_color,
        "right_color": right_color,
        "correct": correct,
        "n_rooms": n_rooms,
        "room_seed": room_seed,
        "room_size": params.room_size,
    }


def _ring_rooms(layout):
    """Deterministic dead-end room boxes attached to the ring corridors.

    Rooms hang off both sides of the top and bottom bands and off the
    outer side of the left and right columns. Slots are spaced so rooms
    never overlap; seeded keep-probabilities set the density. Rooms stay
    clear of the goal chamber, the start zone and the marker stub.
    """
    rng = np.random.default_rng(layout["room_seed"])
    w, h = layout["w"], layout["h"]
    cx = layout["cx"]
    ty, by, lx, rx = layout["ty"], layout["by"], layout["lx"], layout["rx"]
    lo, hi = layout["room_size"]
    stub_x0 = min(layout["jog_x0"], cx - 1) - 2
    stub_x1 = max(layout["jog_x1"], cx + 1) + 2
    rooms = []

    def add(door_cells, rect, arc):
        rooms.append({"door": door_cells, "rect": rect, "arc": arc})

    # horizontal bands: rooms above and below
    for band_y, exclude in ((ty, 5), (by, 6)):
        for y_door, grow in ((band_y - 1, -1), (band_y + 3, +1)):
            x = lx + 4
            while x + hi + 2 < rx - 1:
                span = int(rng.integers(lo, hi + 1))
                depth = int(rng.integers(lo, hi + 1))
                if grow < 0:
                    y0 = max(2 if band_y == ty else ty + 4, band_y - 1 - depth)
                    y1 = band_y - 2
                else:
                    y0 = band_y + 4
                    y1 = min(h - 2, band_y + 3 + depth)
                keep = rng.random()
                door_off = int(rng.integers(0, max(1, span - 1)))
                if y1 - y0 < lo - 1:
                    x += hi + 3
                    continue
                clear = x + span - 1 < cx - exclude or x > cx + exclude
                if band_y == by and grow > 0:
                    # below the bottom band: avoid the marker stub
                    clear = clear and (x + span - 1 < stub_x0 or x > stub_x1)
                    y1 = min(y1, h - 2)
                if clear and keep < 0.7:
                    door_x = x + door_off
                    add(
                        ((door_x, y_door), (door_x + 1, y_door)),
                        (x, x + span - 1, y0, y1),
                        "left" if x + span // 2 < cx else "right",
                    )
                x += hi + 3

    # vertical columns: rooms on the outer side only
    for col_x, arc in ((lx, "left"), (rx, "right")):
        x_door = col_x - 1 if arc == "left" else col_x + 3
        y = ty + 5
        while y + hi + 2 < by - 1:
            span = int(rng.integers(lo, hi + 1))
            depth = int(rng.integers(lo, hi + 1))
            if arc == "left":
                x0 = max(1, col_x - 1 - depth)
                x1 = col_x - 2
            else:
                x0 = col_x + 4
                x1 = min(w - 2, col_x + 3 + depth)
            keep = rng.random()
            door_off = int(rng.integers(0, max(1, span - 1)))
            if x1 - x0 < lo - 1:
                y += hi + 3
                continue
            if keep < 0.7:
                door_y = y + door_off
                add(
                    ((x_door, door_y), (x_door, door_y + 1)),
                    (x0, x1, y, y + span - 1),
                    arc,
                )
            y += hi + 3
    return rooms


def _ring_build(layout, correct, with_mirror) -> SemanticOccupancyGrid:
    w, h = layout["w"], layout["h"]
    cx = layout["cx"]
    ty, by, lx, rx = layout["ty"], layout["by"], layout["lx"], layout["rx"]

    occ = np.ones((w, h), dtype=bool)
    sem = np.zeros((w, h), dtype=np.uint8)

    _carve(occ, lx, rx, ty, ty + 2)  # top band
    _carve(occ, lx, rx, by, by + 2)  # bottom band
    _carve(occ, lx, lx + 2, ty, by + 2)  # left column
    _carve(occ, rx - 2, rx, ty, by + 2)  # right column

    # seal one side of the top-center goal chamber
    if correct == "left":
        occ[cx + 2, ty : ty + 3] = True
    else:
        occ[cx - 2, ty : ty + 3] = True

    # stub: drop from the bottom band, then a seeded horizontal jog to the
    # marker room (the bend keeps the marker out of sight from the start)
    sd = layout["stub_drop"]
    _carve(occ, cx - 1, cx + 1, by + 3, by + 2 + sd)
    jy0 = layout["jy0"]
    mk_x0, mk_x1 = layout["mk_x0"], layout["mk_x1"]
    _carve(occ, layout["jog_x0"], layout["jog_x1"], jy0, jy0 + 2)
    marker = _cells(mk_x0, mk_x1, jy0, jy0 + 2)
    marker_color = layout["left_color"] if correct == "left" else layout["right_color"]
    for x, y in marker:
        if not occ[x, y]:
            sem[x, y] = marker_color

    # arc paint: left half vs right half, stem/chamber kept neutral
    left_mask = np.zeros((w, h), dtype=bool)
    left_mask[: cx - 1, :] = True
    right_mask = np.zeros((w, h), dtype=bool)
    right_mask[cx + 2 :, :] = True
    ring = np.zeros((w, h), dtype=bool)
    ring[lx : rx + 1, ty : ty + 3] = True
    ring[lx : rx + 1, by : by + 3] = True
    ring[lx : lx + 3, ty : by + 3] = True
    ring[rx - 2 : rx + 1, ty : by + 3] = True
    sem[ring & left_mask & ~occ] = layout["left_color"]
    sem[ring & right_mask & ~occ] = layout["right_color"]

    rooms = _ring_rooms(layout)
    for room in rooms:
        x0, x1, y0, y1 = room["rect"]
        _carve(occ, x0, x1, y0, y1)
        color = layout["left_color"] if room["arc"] == "left" else layout["right_color"]
        _paint(sem, occ, x0, x1, y0, y1, color)
        for dx, dy in room["door"]:
            occ[dx, dy] = False
            sem[dx, dy] = color

    start = Pose(cx, by + 1)
    goal = Pose(cx, ty + 1)

    branch_left = frozenset(
        (int(x), int(y)) for x, y in np.argwhere(ring & left_mask & ~occ)
    )
    branch_right = frozenset(
        (int(x), int(y)) for x, y in np.argwhere(ring & right_mask & ~occ)
    )
    stub_cells = _cells(cx - 1, cx + 1, by + 3, by + 2 + sd) | _cells(
        min(mk_x0, cx - 1), max(mk_x1, cx + 1), jy0, jy0 + 2
    )
    extras = {
        "info_cells": marker,
        "center_region": marker | stub_cells,
        "branch_cells": {"left": branch_left, "right": branch_right},
        "correct_branch": correct,
        "intersection_cells": _cells(cx - 1, cx + 1, by, by + 2),
        "rooms": tuple(tuple(r["rect"]) for r in rooms),
        "candidate_goals": (goal,),
    }
    if with_mirror:
        other = "right" if correct == "left" else "left"
        extras["mirror"] = _ring_build(layout, other, with_mirror=False)
    return make_grid(occ, sem, start, goal, extras=extras)


def gen_ring_office(params: EnvParams) -> SemanticOccupancyGrid:
    layout = _ring_layout(params.sized())
    return _ring_build(layout, layout["correct"], with_mirror=True)


# ---------------------------------------------------------------------------
# Parallel Hallway


def gen_parallel_hallway(params: EnvParams) -> SemanticOccupancyGrid:
    params = params.sized()
    rng = np.random.default_rng(params.seed)
    w, h = params.width, params.height
    nh = params.hallways
    if nh < 2:
        raise GenerationError("parallel_hallway needs at least 2 hallways")
    lo, hi = params.room_size
    rh = min(5, hi)  # room interior height; widths take the full range
    band = rh + 2  # wall + interior + wall between adjacent hallways
    need_h = 2 + nh * 3 + (nh - 1) * band
    if need_h > h:
        raise GenerationError(
            f"parallel_hallway needs height >= {need_h} for {nh} hallways"
        )
    y_pad = (h - need_h) // 2
    hall_y = [1 + y_pad + i * (3 + band) for i in range(nh)]

    occ = np.ones((w, h), dtype=bool)
    sem = np.zeros((w, h), dtype=np.uint8)
    for hy in hall_y:
        _carve(occ, 1, w - 2, hy, hy + 2)

    map_room_cells = None
    passage_of_band = []
    rooms_of_band = []
    for b in range(nh - 1):
        top_y = hall_y[b] + 3  # wall row adjoining hallway b
        bot_y = hall_y[b + 1] - 1  # wall row adjoining hallway b+1
        iy0, iy1 = top_y + 1, bot_y - 1
        # split the x range into rooms
        boxes = []
        x = 2
        while x + lo <= w - 3:
            span = int(rng.integers(lo, hi + 1))
            if x + span > w - 3:
                span = w - 3 - x + 1
                if span < lo:
                    break
            boxes.append((x, x + span - 1))
            x += span + 1
        n_dead = int(
            rng.integers(params.rooms_per_pair[0], params.rooms_per_pair[1] + 1)
        )
        # choose which boxes become rooms: one passage + up to n_dead dead ends
        idx = list(range(len(boxes)))
        rng.shuffle(idx)
        passage_i = idx[0]
        dead_is = idx[1 : 1 + n_dead]
        map_i = None
        if b == 0:
            # the single map room adjoins the start (top) hallway
            remaining = idx[1 + n_dead :] or dead_is
            map_i = remaining[0]
            if map_i in dead_is:
                dead_is = [i for i in dead_is if i != map_i]
        used = []
        for i in sorted(set([passage_i] + dead_is + ([map_i] if map_i is not None else []))):
            x0, x1 = boxes[i]
            _carve(occ, x0, x1, iy0, iy1)
            is_passage = i == passage_i
            is_map = map_i is not None and i == map_i
            color = SemanticClass.BLUE if is_map else SemanticClass.RED
            _paint(sem, occ, x0, x1, iy0, iy1, color)
            door_span = max(1, x1 - x0 - 1)
            if is_passage:
                dx_top = x0 + 1 + int(rng.integers(0, door_span))
                dx_bot = x0 + 1 + int(rng.integers(0, door_span))
                for dx, dy in ((dx_top, top_y), (min(dx_top + 1, x1), top_y)):
                    occ[dx, dy] = False
                    sem[dx, dy] = color
                for dx, dy in ((dx_bot, bot_y), (min(dx_bot + 1, x1), bot_y)):
                    occ[dx, dy] = False
                    sem[dx, dy] = color
            else:
                side = top_y if (is_map or rng.random() < 0.5) else bot_y
                dx0 = x0 + 1 + int(rng.integers(0, door_span))
                for dx, dy in ((dx0, side), (min(dx0 + 1, x1), side)):
                    occ[dx, dy] = False
                    sem[dx, dy] = color
            used.append((x0, x1, iy0, iy1, is_passage, is_map))
            if is_map:
                map_room_cells = _cells(x0, x1, iy0, iy1)
        passage_of_band.append(boxes[passage_i])
        rooms_of_band.append(used)

    sx = w // 2 + int(rng.integers(-8, 9))
    start = Pose(sx, hall_y[0] + 1)
    if params.near_goal:
        gx = 3 if sx > w // 2 else w - 4
        goal = Pose(gx, hall_y[0] + 1)
    else:
        gx = int(rng.integers(3, w - 3))
        goal = Pose(gx, hall_y[-1] + 1)

    extras = {
        "hallway_endpoints": ((2, hall_y[0] + 1), (w - 3, hall_y[0] + 1)),
        "hallway_rows": tuple(hall_y),
        "passages": tuple(passage_of_band),
        "rooms": tuple(tuple(r) for r in rooms_of_band),
    }
    return make_grid(
        occ, sem, start, goal, map_room=map_room_cells, extras=extras
    )


# ---------------------------------------------------------------------------
# Validity checking


@dataclass
class CheckReport:
    passed: bool
    violations: list = field(default_factory=list)

    def fail(self, msg: str):
        self.passed = False
        self.violations.append(msg)


def _reachable(grid: SemanticOccupancyGrid, a: Pose, b: Pose) -> bool:
    mask = grid.free_mask()
    if not (mask[a.x, a.y] and mask[b.x, b.y]):
        return False
    dist = masked_dijkstra(mask, [((a.x, a.y), 0.0)])
    return np.isfinite(dist[b.x, b.y])


def check_environment(
    grid: SemanticOccupancyGrid, kind: str, sensor_range: float = 20.0
) -> CheckReport:
    """Structural assertions per environment kind."""
    report = CheckReport(passed=True)
    free = grid.free_mask()

    if grid.occupied[grid.start.x, grid.start.y]:
        report.fail("start-not-free")
    if grid.occupied[grid.goal.x, grid.goal.y]:
        report.fail("goal-not-free")
    border = (
        grid.occupied[0, :].all()
        and grid.occupied[-1, :].all()
        and grid.occupied[:, 0].all()
        and grid.occupied[:, -1].all()
    )
    if not border:
        report.fail("open-border")
    if report.passed and not _reachable(grid, grid.start, grid.goal):
        report.fail("unreachable-goal")

    if kind in ("j_intersection", "ring_office"):
        info = grid.extras.get("info_cells", frozenset())
        correct = grid.extras.get("correct_branch")
        branches = grid.extras.get("branch_cells", {})
        if not info:
            report.fail("missing-info-region")
        if correct not in ("left", "right"):
            report.fail("missing-correct-branch")
        # the info color must match the painted color of the open branch
        info_colors = {
            int(grid.semantic[x, y]) for x, y in info if not grid.occupied[x, y]
        }
        if len(info_colors) != 1 or SemanticClass.NEUTRAL in info_colors:
            report.fail("info-region-not-single-colored")
        elif correct in branches:
            branch_colors = {
                int(grid.semantic[x, y])
                for x, y in branches[correct]
                if not grid.occupied[x, y]
            } - {int(SemanticClass.NEUTRAL)}
            other = branches["right" if correct == "left" else "left"]
            other_colors = {
                int(grid.semantic[x, y]) for x, y in other if not grid.occupied[x, y]
            } - {int(SemanticClass.NEUTRAL)}
            if info_colors != branch_colors:
                report.fail("correct-branch-color-mismatch")
            if info_colors == other_colors:
                report.fail("both-branches-match-info-color")
        # occlusion: the info region must be invisible from the intersection
        for cell in sorted(grid.extras.get("intersection_cells", ())):
            if grid.occupied[cell[0], cell[1]]:
                continue
            obs = simulate_sensor(grid, Pose(*cell), sensor_range)
            seen = {(int(x), int(y)) for x, y in obs.cells}
            if seen & set(info):
                report.fail(f"info-region-visible-from-{cell}")
                break
        # exactly one branch connects to the goal chamber: the goal must be
        # reachable without the wrong branch and unreachable without the
        # correct one
        open_sides = []
        for side in ("left", "right"):
            other_cells = branches.get("right" if side == "left" else "left", ())
            mask = free.copy()
            for x, y in other_cells:
                mask[x, y] = False
            dist = masked_dijkstra(mask, [((grid.start.x, grid.start.y), 0.0)])
            if np.isfinite(dist[grid.goal.x, grid.goal.y]):
                open_sides.append(side)
        if open_sides != [correct]:
            report.fail(f"open-branches-{open_sides}-expected-{correct}")

    if kind == "ring_office":
        # dead-end rooms must disconnect from the goal without the ring
        branches = grid.extras.get("branch_cells", {})
        ring_cells = set().union(*branches.values()) if branches else set()
        mask = free.copy()
        for x, y in ring_cells:
            mask[x, y] = False
        for x0, x1, y0, y1 in grid.extras.get("rooms", ()):
            cxr = (x0 + x1) // 2
            cyr = (y0 + y1) // 2
            dist = masked_dijkstra(mask, [((cxr, cyr), 0.0)])
            if np.isfinite(dist[grid.goal.x, grid.goal.y]):
                report.fail(f"room-{(x0, y0)}-has-through-passage")
                break

    if kind == "parallel_hallway":
        blue_free = (grid.semantic == SemanticClass.BLUE) & free
        if grid.map_room is None:
            report.fail("missing-map-room")
        else:
            blue_rooms = set(grid.map_room)
            if not blue_rooms <= {
                (int(x), int(y)) for x, y in np.argwhere(blue_free)
            }:
                report.fail("map-room-cells-not-blue-free")
        # exactly one blue room: blue free cells form one connected box
        from scipy import ndimage

        _, n_blue = ndimage.label(blue_free, structure=np.ones((3, 3), dtype=int))
        if n_blue != 1:
            report.fail(f"map-room-count-{n_blue}")
        # per hallway pair exactly one room with doors on both hallways
        rows = grid.extras.get("hallway_rows", ())
        for b, rooms in enumerate(grid.extras.get("rooms", ())):
            n_pass = sum(1 for r in rooms if r[4])
            if n_pass != 1:
                report.fail(f"band-{b}-passage-count-{n_pass}")
            # dead-end rooms: removing hallway cells disconnects them
            mask = free.copy()
            for hy in rows:
                mask[:, hy : hy + 3] = False
            for x0, x1, y0, y1, is_passage, is_map in rooms:
                if is_passage:
                    continue
                dist = masked_dijkstra(
                    mask, [(((x0 + x1) // 2, (y0 + y1) // 2), 0.0)]
                )
                if np.isfinite(dist[grid.goal.x, grid.goal.y]):
                    report.fail(f"band-{b}-room-{x0}-has-through-passage")
    return report
