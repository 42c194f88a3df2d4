"""Deterministic 2-D semantic-occupancy-grid world.

Grids are numpy arrays of shape (W, H) indexed ``arr[x, y]`` with x growing
right and y growing down. All operations are pure: they never mutate their
inputs and return new objects (or the same object when nothing changed).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import IntEnum
from functools import lru_cache
from typing import NamedTuple, Optional

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra as _csgraph_dijkstra

from .errors import (
    CorruptedObservationError,
    InvalidPoseError,
    InvalidSourceError,
)

SQRT2 = math.sqrt(2.0)


class CellState(IntEnum):
    UNSEEN = 0
    FREE = 1
    OCCUPIED = 2


class SemanticClass(IntEnum):
    NEUTRAL = 0
    RED = 1
    BLUE = 2
    RESERVED = 3


CLASS_CHARS = {
    SemanticClass.NEUTRAL: "n",
    SemanticClass.RED: "r",
    SemanticClass.BLUE: "b",
    SemanticClass.RESERVED: "v",
}
CHAR_CLASSES = {v: k for k, v in CLASS_CHARS.items()}

# Unit king-moves in tie-break order: E, NE, N, NW, W, SW, S, SE (y grows down).
MOVES = (
    (1, 0, 1.0),
    (1, -1, SQRT2),
    (0, -1, 1.0),
    (-1, -1, SQRT2),
    (-1, 0, 1.0),
    (-1, 1, SQRT2),
    (0, 1, 1.0),
    (1, 1, SQRT2),
)


class Pose(NamedTuple):
    x: int
    y: int


class MotionPrimitive(NamedTuple):
    dx: int
    dy: int
    cost: float


def primitive_for(dx: int, dy: int) -> MotionPrimitive:
    if not (-1 <= dx <= 1 and -1 <= dy <= 1) or (dx == 0 and dy == 0):
        raise ValueError(f"not a unit king move: ({dx}, {dy})")
    return MotionPrimitive(dx, dy, SQRT2 if dx != 0 and dy != 0 else 1.0)


@dataclass(frozen=True)
class SemanticOccupancyGrid:
    """Ground-truth world: occupancy plus per-cell semantic class.

    ``extras`` carries generator-specific metadata (information regions,
    branch cells, hallway endpoints, consistent alternate worlds); only
    ``map_room`` is part of the persisted file format.
    """

    occupied: np.ndarray  # (W, H) bool
    semantic: np.ndarray  # (W, H) uint8
    start: Pose
    goal: Pose
    map_room: Optional[frozenset] = None
    extras: dict = field(default_factory=dict)

    @property
    def width(self) -> int:
        return self.occupied.shape[0]

    @property
    def height(self) -> int:
        return self.occupied.shape[1]

    def in_bounds(self, x: int, y: int) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height

    def free_mask(self) -> np.ndarray:
        return ~self.occupied


_VERSION_COUNTER = itertools.count(1)


@dataclass(frozen=True)
class PartialMap:
    """The robot's belief map: unseen / free / occupied plus class.

    ``version`` is a process-unique content tag: any freshly-revealed map
    gets a new version, and an unchanged update returns the same object.
    Downstream planners use it as a cache key, including across
    counterfactual reveal branches.
    """

    state: np.ndarray  # (W, H) uint8 of CellState
    semantic: np.ndarray  # (W, H) uint8, valid where state != UNSEEN
    version: int = 0

    @classmethod
    def unseen_like(cls, grid: SemanticOccupancyGrid) -> "PartialMap":
        shape = grid.occupied.shape
        return cls(
            state=_frozen(np.zeros(shape, dtype=np.uint8)),
            semantic=_frozen(np.zeros(shape, dtype=np.uint8)),
            version=next(_VERSION_COUNTER),
        )

    @property
    def width(self) -> int:
        return self.state.shape[0]

    @property
    def height(self) -> int:
        return self.state.shape[1]

    def known_free_mask(self) -> np.ndarray:
        return self.state == CellState.FREE

    def optimistic_mask(self) -> np.ndarray:
        """Traversable under optimism: known free or unseen."""
        return self.state != CellState.OCCUPIED

    def unseen_mask(self) -> np.ndarray:
        return self.state == CellState.UNSEEN


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Observation:
    """Cells revealed by one sensor sweep."""

    cells: np.ndarray  # (N, 2) int
    occupied: np.ndarray  # (N,) bool
    semantic: np.ndarray  # (N,) uint8

    @property
    def revealed(self):
        """List of (cell, occupancy, semantic_class) tuples."""
        return [
            ((int(x), int(y)), bool(o), SemanticClass(int(s)))
            for (x, y), o, s in zip(self.cells, self.occupied, self.semantic)
        ]

    def __len__(self) -> int:
        return len(self.cells)


# ---------------------------------------------------------------------------
# Sensor


class _RayTable(NamedTuple):
    offsets: np.ndarray  # (360, T, 2) int32
    valid: np.ndarray  # (360, T) bool
    blocks: np.ndarray  # (360, T) bool
    in_range: np.ndarray  # (360, T) bool


@lru_cache(maxsize=8)
def _ray_table(sensor_range: float) -> _RayTable:
    """Supercover traversal offsets for 360 one-per-degree rays.

    Cells the segment passes through with positive length block when
    occupied; cells touched exactly at a grid corner are revealed but never
    block. A cell is only marked revealed when its center lies within
    ``sensor_range`` of the pose center.
    """
    rays = []
    for deg in range(360):
        theta = math.radians(deg)
        dx, dy = math.cos(theta), math.sin(theta)
        entries = [(0, 0, True)]
        x = y = 0
        sx = 1 if dx > 0 else -1
        sy = 1 if dy > 0 else -1
        tdx = math.inf if dx == 0 else 1.0 / abs(dx)
        tdy = math.inf if dy == 0 else 1.0 / abs(dy)
        tmx = 0.5 * tdx
        tmy = 0.5 * tdy
        while True:
            if abs(tmx - tmy) < 1e-9:
                t = tmx
                if t >= sensor_range:
                    break
                entries.append((x + sx, y, False))
                entries.append((x, y + sy, False))
                x += sx
                y += sy
                tmx += tdx
                tmy += tdy
                entries.append((x, y, True))
            elif tmx < tmy:
                t = tmx
                if t >= sensor_range:
                    break
                x += sx
                tmx += tdx
                entries.append((x, y, True))
            else:
                t = tmy
                if t >= sensor_range:
                    break
                y += sy
                tmy += tdy
                entries.append((x, y, True))
        rays.append(entries)

    t_max = max(len(r) for r in rays)
    offsets = np.zeros((360, t_max, 2), dtype=np.int32)
    valid = np.zeros((360, t_max), dtype=bool)
    blocks = np.zeros((360, t_max), dtype=bool)
    for i, entries in enumerate(rays):
        n = len(entries)
        offsets[i, :n, 0] = [e[0] for e in entries]
        offsets[i, :n, 1] = [e[1] for e in entries]
        valid[i, :n] = True
        blocks[i, :n] = [e[2] for e in entries]
    dist = np.hypot(offsets[..., 0], offsets[..., 1])
    in_range = dist <= sensor_range + 1e-9
    return _RayTable(offsets, valid, blocks, in_range)


def simulate_sensor(
    known: SemanticOccupancyGrid, pose: Pose, sensor_range: float
) -> Observation:
    """Ray-cast a 360-degree sweep; occlusion at the first occupied cell.

    Deterministic for fixed inputs. The first occupied cell along a ray is
    itself revealed; cells beyond it are not.
    """
    if sensor_range <= 0:
        raise ValueError("sensor range must be positive")
    if not known.in_bounds(pose.x, pose.y) or known.occupied[pose.x, pose.y]:
        raise InvalidPoseError(f"pose {pose} is not on a free known cell")

    table = _ray_table(float(sensor_range))
    ax = table.offsets[..., 0] + pose.x
    ay = table.offsets[..., 1] + pose.y
    inb = (ax >= 0) & (ax < known.width) & (ay >= 0) & (ay < known.height)
    occ = np.zeros(ax.shape, dtype=bool)
    sel = inb & table.valid
    occ[sel] = known.occupied[ax[sel], ay[sel]]

    # Rays stop at occupied traversal cells and at the map boundary.
    blocker = (occ | ~inb) & table.blocks & table.valid
    t_len = ax.shape[1]
    first = np.where(blocker.any(axis=1), blocker.argmax(axis=1), t_len)
    idx = np.arange(t_len)[None, :]
    revealed = sel & table.in_range & (idx <= first[:, None])

    xs = ax[revealed]
    ys = ay[revealed]
    flat = xs.astype(np.int64) * known.height + ys
    uniq = np.unique(flat)
    cx = (uniq // known.height).astype(np.int32)
    cy = (uniq % known.height).astype(np.int32)
    cells = np.stack([cx, cy], axis=1)
    return Observation(
        cells=_frozen(cells),
        occupied=_frozen(known.occupied[cx, cy].copy()),
        semantic=_frozen(known.semantic[cx, cy].copy()),
    )


# ---------------------------------------------------------------------------
# Belief updates


def update_partial_map(partial: PartialMap, obs: Observation) -> PartialMap:
    """Union the observation into the belief; known cells must agree."""
    if len(obs) == 0:
        return partial
    xs, ys = obs.cells[:, 0], obs.cells[:, 1]
    new_state = np.where(obs.occupied, CellState.OCCUPIED, CellState.FREE).astype(
        np.uint8
    )
    cur_state = partial.state[xs, ys]
    known = cur_state != CellState.UNSEEN
    if known.any():
        conflict = (cur_state[known] != new_state[known]) | (
            partial.semantic[xs[known], ys[known]] != obs.semantic[known]
        )
        if conflict.any():
            raise CorruptedObservationError(
                "observation conflicts with an already-known cell"
            )
    fresh = ~known
    if not fresh.any():
        return partial
    state = partial.state.copy()
    semantic = partial.semantic.copy()
    state[xs[fresh], ys[fresh]] = new_state[fresh]
    semantic[xs[fresh], ys[fresh]] = obs.semantic[fresh]
    return PartialMap(_frozen(state), _frozen(semantic), next(_VERSION_COUNTER))


def _region_mask(partial: PartialMap, region) -> np.ndarray:
    if isinstance(region, np.ndarray) and region.dtype == bool:
        return region
    mask = np.zeros((partial.width, partial.height), dtype=bool)
    for x, y in region:
        mask[x, y] = True
    return mask


def reveal_region(
    partial: PartialMap, known: SemanticOccupancyGrid, region
) -> PartialMap:
    """Copy the region's cells from the known map into the belief.

    ``region`` may be a boolean (W, H) mask or an iterable of cells.
    Implements the counterfactual map union used by value-of-information
    computation; passing all cells realizes the full map reveal.
    """
    mask = _region_mask(partial, region)
    if mask.shape != partial.state.shape:
        raise ValueError("region mask shape mismatch")
    fresh = mask & (partial.state == CellState.UNSEEN)
    if not fresh.any():
        return partial
    state = partial.state.copy()
    semantic = partial.semantic.copy()
    state[fresh] = np.where(
        known.occupied[fresh], CellState.OCCUPIED, CellState.FREE
    ).astype(np.uint8)
    semantic[fresh] = known.semantic[fresh]
    return PartialMap(_frozen(state), _frozen(semantic), next(_VERSION_COUNTER))


def full_reveal(partial: PartialMap, known: SemanticOccupancyGrid) -> PartialMap:
    return reveal_region(partial, known, np.ones(partial.state.shape, dtype=bool))


# ---------------------------------------------------------------------------
# Shortest-path substrate


@dataclass(frozen=True)
class DistanceField:
    """Per-cell geodesic distance; unreachable cells carry +inf."""

    dist: np.ndarray  # (W, H) float64

    def __getitem__(self, cell) -> float:
        return float(self.dist[cell[0], cell[1]])


def grid_graph_edges(mask: np.ndarray):
    """COO edge arrays for 8-connected moves over a traversability mask.

    Diagonal moves that would cut a corner between two non-traversable
    cells are omitted, so planned costs match executable motion exactly.
    Node ids are ``x * H + y``.
    """
    w, h = mask.shape
    ids = np.arange(w * h, dtype=np.int64).reshape(w, h)
    rows, cols, data = [], [], []
    for dx, dy, cost in MOVES:
        sx = slice(max(0, -dx), w - max(0, dx))
        sy = slice(max(0, -dy), h - max(0, dy))
        tx = slice(max(0, dx), w + min(0, dx))
        ty = slice(max(0, dy), h + min(0, dy))
        ok = mask[sx, sy] & mask[tx, ty]
        if dx != 0 and dy != 0:
            # corner rule: both orthogonal side cells must be traversable
            ok = ok & mask[tx, sy] & mask[sx, ty]
        if not ok.any():
            continue
        rows.append(ids[sx, sy][ok])
        cols.append(ids[tx, ty][ok])
        data.append(np.full(int(ok.sum()), cost))
    if rows:
        return (
            np.concatenate(rows),
            np.concatenate(cols),
            np.concatenate(data),
        )
    empty = np.zeros(0, dtype=np.int64)
    return empty, empty, np.zeros(0)


def masked_dijkstra(mask: np.ndarray, seeds) -> np.ndarray:
    """Distances over the mask from seed cells with per-seed start costs.

    ``seeds`` is a list of ((x, y), start_cost). Seed cells need not be in
    the mask themselves; their outgoing edges attach to traversable
    8-neighbors. Returns a (W, H) float array.
    """
    w, h = mask.shape
    n = w * h
    rows, cols, data = grid_graph_edges(mask)
    extra_r, extra_c, extra_d = [], [], []
    virtual = n  # single super-source
    for (x, y), c0 in seeds:
        if mask[x, y]:
            extra_r.append(virtual)
            extra_c.append(x * h + y)
            extra_d.append(c0)
            continue
        for dx, dy, cost in MOVES:
            nx, ny = x + dx, y + dy
            if 0 <= nx < w and 0 <= ny < h and mask[nx, ny]:
                extra_r.append(virtual)
                extra_c.append(nx * h + ny)
                extra_d.append(c0 + cost)
    graph = csr_matrix(
        (
            np.concatenate([data, np.asarray(extra_d, dtype=float)]),
            (
                np.concatenate([rows, np.asarray(extra_r, dtype=np.int64)]),
                np.concatenate([cols, np.asarray(extra_c, dtype=np.int64)]),
            ),
        ),
        shape=(n + 1, n + 1),
    )
    dist = _csgraph_dijkstra(graph, directed=True, indices=virtual)
    out = dist[:n].reshape(w, h)
    for (x, y), c0 in seeds:
        if mask[x, y]:
            out[x, y] = min(out[x, y], c0)
    return out


def distance_field(map_or_grid, source: Pose, traversable: np.ndarray) -> DistanceField:
    """Geodesic distances from ``source`` over 8-connected moves.

    Axis moves cost 1, diagonals sqrt(2); corner-cutting between two
    non-traversable cells is forbidden.
    """
    if not traversable[source.x, source.y]:
        raise InvalidSourceError(f"source {source} is not traversable")
    dist = masked_dijkstra(traversable, [((source.x, source.y), 0.0)])
    return DistanceField(_frozen(dist))


# ---------------------------------------------------------------------------
# Map file format


def dumps_map(grid: SemanticOccupancyGrid) -> str:
    """Serialize to the plain-text map format.

    Header ``W H start_x start_y goal_x goal_y``, then H rows of W
    two-character codes (occupancy in {., #}, class in {n, r, b, v}), then
    an optional ``maproom:`` line. Generator extras are not persisted.
    """
    w, h = grid.width, grid.height
    lines = [f"{w} {h} {grid.start.x} {grid.start.y} {grid.goal.x} {grid.goal.y}"]
    for y in range(h):
        row = []
        for x in range(w):
            occ = "#" if grid.occupied[x, y] else "."
            cls = CLASS_CHARS[SemanticClass(int(grid.semantic[x, y]))]
            row.append(occ + cls)
        lines.append("".join(row))
    if grid.map_room:
        cells = " ".join(f"{x},{y}" for x, y in sorted(grid.map_room))
        lines.append(f"maproom: {cells}")
    return "\n".join(lines) + "\n"


def loads_map(text: str) -> SemanticOccupancyGrid:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    w, h, sx, sy, gx, gy = (int(v) for v in lines[0].split())
    occupied = np.zeros((w, h), dtype=bool)
    semantic = np.zeros((w, h), dtype=np.uint8)
    for y in range(h):
        row = lines[1 + y]
        if len(row) != 2 * w:
            raise ValueError(f"row {y} has wrong width")
        for x in range(w):
            occ_c, cls_c = row[2 * x], row[2 * x + 1]
            if occ_c not in ".#" or cls_c not in CHAR_CLASSES:
                raise ValueError(f"bad cell code {occ_c}{cls_c} at ({x},{y})")
            occupied[x, y] = occ_c == "#"
            semantic[x, y] = CHAR_CLASSES[cls_c]
    map_room = None
    if len(lines) > 1 + h:
        tag, _, rest = lines[1 + h].partition(":")
        if tag.strip() != "maproom":
            raise ValueError(f"unexpected trailer line: {lines[1 + h]!r}")
        map_room = frozenset(
            (int(a), int(b))
            for a, b in (tok.split(",") for tok in rest.split())
        )
    return SemanticOccupancyGrid(
        occupied=_frozen(occupied),
        semantic=_frozen(semantic),
        start=Pose(sx, sy),
        goal=Pose(gx, gy),
        map_room=map_room,
    )


def store_map(grid: SemanticOccupancyGrid, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_map(grid))


def load_map(path) -> SemanticOccupancyGrid:
    with open(path) as fh:
        return loads_map(fh.read())


def make_grid(
    occupied: np.ndarray,
    semantic: Optional[np.ndarray] = None,
    start: Pose = Pose(0, 0),
    goal: Pose = Pose(0, 0),
    map_room=None,
    extras: Optional[dict] = None,
) -> SemanticOccupancyGrid:
    """Convenience constructor that freezes arrays and fills defaults."""
    occupied = np.asarray(occupied, dtype=bool)
    if semantic is None:
        semantic = np.zeros(occupied.shape, dtype=np.uint8)
    return SemanticOccupancyGrid(
        occupied=_frozen(occupied.copy()),
        semantic=_frozen(np.asarray(semantic, dtype=np.uint8).copy()),
        start=start,
        goal=goal,
        map_room=frozenset(map_room) if map_room else None,
        extras=extras or {},
    )
