"""Shared independent oracles used against the library implementations.

Everything here is deliberately written with different algorithms than the
package (heapq Dijkstra instead of csgraph, explicit flood fills, brute
force enumeration) so tests cross-check rather than mirror the code.
"""

import heapq
import itertools
import math

import numpy as np
import pytest

from lspnav.worldsim import MOVES, Pose, make_grid

SQRT2 = math.sqrt(2.0)


def oracle_dijkstra(mask, source):
    """heapq-based 8-connected Dijkstra with the corner-cut rule."""
    w, h = mask.shape
    dist = np.full((w, h), np.inf)
    if not mask[source]:
        return dist
    dist[source] = 0.0
    heap = [(0.0, source)]
    while heap:
        d, (x, y) = heapq.heappop(heap)
        if d > dist[x, y]:
            continue
        for dx, dy, c in MOVES:
            nx, ny = x + dx, y + dy
            if not (0 <= nx < w and 0 <= ny < h) or not mask[nx, ny]:
                continue
            if dx != 0 and dy != 0 and not (mask[nx, y] and mask[x, ny]):
                continue
            nd = d + c
            if nd < dist[nx, ny] - 1e-12:
                dist[nx, ny] = nd
                heapq.heappush(heap, (nd, (nx, ny)))
    return dist


def oracle_all_pairs(mask):
    """All-pairs shortest paths by running the heapq oracle from every cell."""
    w, h = mask.shape
    cells = [(x, y) for x in range(w) for y in range(h) if mask[x, y]]
    return {c: oracle_dijkstra(mask, c) for c in cells}


def oracle_flood_fill(seed_cells, member_mask, connectivity=8):
    """Connected region of ``member_mask`` cells reachable from the seeds."""
    w, h = member_mask.shape
    seen = set()
    stack = [c for c in seed_cells if member_mask[c]]
    seen.update(stack)
    if connectivity == 8:
        deltas = [(dx, dy) for dx in (-1, 0, 1) for dy in (-1, 0, 1) if dx or dy]
    else:
        deltas = [(1, 0), (-1, 0), (0, 1), (0, -1)]
    while stack:
        x, y = stack.pop()
        for dx, dy in deltas:
            nx, ny = x + dx, y + dy
            if 0 <= nx < w and 0 <= ny < h and member_mask[nx, ny]:
                if (nx, ny) not in seen:
                    seen.add((nx, ny))
                    stack.append((nx, ny))
    return seen


def oracle_visible_free_space(occupied, pose, sensor_range):
    """Per-cell line-of-sight oracle, valid in obstacle-free space only:
    every cell whose center lies within the range is visible."""
    w, h = occupied.shape
    out = set()
    for x in range(w):
        for y in range(h):
            if math.hypot(x - pose.x, y - pose.y) <= sensor_range + 1e-9:
                out.add((x, y))
    return out


def oracle_expected_cost(order, d_first, pairwise, props, use_vi):
    """Unrolled expected-cost sum for one explicit ordering.

    props maps id -> (p, rs, re, vi); d_first maps id -> robot distance;
    pairwise maps (a, b) -> distance.
    """
    total = 0.0
    weight = 1.0
    prev = None
    for sid in order:
        p, rs, re, vi = props[sid]
        d = d_first[sid] if prev is None else pairwise[(prev, sid)]
        fail = re - vi if use_vi else re
        total += weight * (d + p * rs + (1.0 - p) * fail)
        weight *= 1.0 - p
        prev = sid
    return total


def oracle_best_ordering(ids, d_first, pairwise, props, use_vi):
    """Brute-force minimum over all permutations."""
    best = math.inf
    best_order = None
    for perm in itertools.permutations(ids):
        q = oracle_expected_cost(perm, d_first, pairwise, props, use_vi)
        if q < best - 1e-15:
            best = q
            best_order = perm
    return best, best_order


def corridor_grid(length, width=1, horizontal=True):
    """Free corridor enclosed by occupied border walls."""
    if horizontal:
        w, h = length + 2, width + 2
    else:
        w, h = width + 2, length + 2
    occ = np.ones((w, h), dtype=bool)
    occ[1 : w - 1, 1 : h - 1] = False
    return occ


def open_grid(w, h):
    """Fully free w x h interior with an occupied one-cell border."""
    occ = np.ones((w + 2, h + 2), dtype=bool)
    occ[1 : w + 1, 1 : h + 1] = False
    return occ


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_small_world(rng, w=None, h=None, p_occ=0.25):
    """Random bordered grid with at least one free interior cell."""
    w = w or int(rng.integers(5, 12))
    h = h or int(rng.integers(5, 12))
    occ = np.ones((w, h), dtype=bool)
    occ[1 : w - 1, 1 : h - 1] = rng.random((w - 2, h - 2)) < p_occ
    free = np.argwhere(~occ)
    if len(free) == 0:
        occ[w // 2, h // 2] = False
        free = np.argwhere(~occ)
    sx, sy = free[rng.integers(len(free))]
    return make_grid(occ, start=Pose(int(sx), int(sy)), goal=Pose(int(sx), int(sy)))
