"""Frontier extraction and the sparse graph view of the partial map.

Frontiers are the high-level exploratory actions: connected sets of unseen
cells bordering known free space. The graph couples skeleton junction
nodes, one subgoal node per frontier, and a goal node star-connected to
everything, with 7-element node features.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage
from skimage.morphology import skeletonize

from .errors import EmptyMapError, StaleFrontierError
from .worldsim import (
    MOVES,
    CellState,
    PartialMap,
    Pose,
    SemanticClass,
    masked_dijkstra,
)

_EIGHT = np.ones((3, 3), dtype=int)

FEATURE_SIZE = 7  # one-hot class (4) + neighbor_count + is_subgoal + is_goal


@dataclass(frozen=True)
class Frontier:
    """One exploratory action: boundary cells, a subgoal point, and the
    unseen region behind it."""

    cells: frozenset
    subgoal: Pose
    region: frozenset

    def __post_init__(self):
        assert self.subgoal in self.cells


@dataclass(frozen=True)
class NavGraph:
    positions: tuple  # Pose per node
    features: np.ndarray  # (N, 7) float64
    edges: tuple  # (u, v, distance) triples
    subgoal_nodes: dict  # Frontier -> node id, insertion order = input order
    goal_node: int

    @property
    def n_nodes(self) -> int:
        return len(self.positions)


def extract_frontiers(partial: PartialMap, min_size: int = 1) -> list:
    """Connected components of unseen cells 8-adjacent to known free space.

    Each frontier's subgoal point is the cell minimizing summed Euclidean
    distance to the other frontier cells (ties by lowest (y, x)); its
    region is the unseen connected component containing the cells.
    Output is sorted by subgoal (y, x).
    """
    known_free = partial.known_free_mask()
    unseen = partial.unseen_mask()
    adj_free = ndimage.binary_dilation(known_free, structure=_EIGHT.astype(bool))
    boundary = unseen & adj_free
    if not boundary.any():
        return []

    b_labels, n_b = ndimage.label(boundary, structure=_EIGHT)
    u_labels, _ = ndimage.label(unseen, structure=_EIGHT)
    region_cache: dict[int, frozenset] = {}

    frontiers = []
    for lbl in range(1, n_b + 1):
        cells = np.argwhere(b_labels == lbl)
        if len(cells) < min_size:
            continue
        subgoal = _medoid(cells)
        rid = int(u_labels[subgoal])
        if rid not in region_cache:
            rcells = np.argwhere(u_labels == rid)
            region_cache[rid] = frozenset((int(x), int(y)) for x, y in rcells)
        frontiers.append(
            Frontier(
                cells=frozenset((int(x), int(y)) for x, y in cells),
                subgoal=Pose(int(subgoal[0]), int(subgoal[1])),
                region=region_cache[rid],
            )
        )
    frontiers.sort(key=lambda f: (f.subgoal.y, f.subgoal.x))
    return frontiers


def _medoid(cells: np.ndarray) -> tuple:
    diffs = cells[:, None, :] - cells[None, :, :]
    sums = np.hypot(diffs[..., 0], diffs[..., 1]).sum(axis=1)
    order = np.lexsort((cells[:, 0], cells[:, 1]))  # (y, x) ascending
    best = min(order, key=lambda i: (sums[i],))
    # min() keeps the first of equal sums in (y, x) order
    return tuple(int(v) for v in cells[best])


def unseen_region(partial: PartialMap, frontier: Frontier) -> frozenset:
    """The frontier's unseen region; stale frontiers are rejected."""
    for x, y in frontier.cells:
        if partial.state[x, y] != CellState.UNSEEN:
            raise StaleFrontierError(f"frontier cell ({x},{y}) is no longer unseen")
    return frontier.region


def match_frontier(
    region_t,
    frontiers_t2: Sequence[Frontier],
    regions: Optional[Sequence] = None,
) -> Optional[Frontier]:
    """The later frontier whose region best overlaps ``region_t``.

    Overlap must cover at least half of the smaller set. ``regions``
    optionally substitutes the sets matched against (parallel to
    ``frontiers_t2``); the default is each frontier's own region.
    """
    if regions is None:
        regions = [f.region for f in frontiers_t2]
    region_t = frozenset(region_t)
    best = None
    best_overlap = 0
    for frontier, reg in zip(frontiers_t2, regions):
        overlap = len(region_t & frozenset(reg))
        if overlap > best_overlap:
            smaller = min(len(region_t), len(reg))
            if overlap * 2 >= smaller:
                best = frontier
                best_overlap = overlap
    return best


# ---------------------------------------------------------------------------
# Graph construction


def build_nav_graph(
    partial: PartialMap, frontiers: Sequence[Frontier], goal: Pose
) -> NavGraph:
    """Skeletonize known free space and assemble the planning graph.

    Structure nodes are skeleton pixels of degree != 2 (8-adjacent ones
    merged at their centroid cell); arcs between them become edges with
    arc length as distance. Each frontier adds a subgoal node linked to
    its nearest structure node by known-space geodesic distance, and a
    goal node links to every node with straight-line distance (the goal
    usually lies in unseen space, where geodesics are undefined).
    """
    known_free = partial.known_free_mask()
    if not known_free.any():
        raise EmptyMapError("no known free space")

    skel = skeletonize(known_free)
    positions, arc_edges = _skeleton_structure(skel)

    n_struct = len(positions)
    nodes = list(positions)
    edges = [(u, v, d) for u, v, d in arc_edges]

    subgoal_nodes = {}
    for frontier in frontiers:
        nid = len(nodes)
        nodes.append(frontier.subgoal)
        subgoal_nodes[frontier] = nid
        if n_struct:
            dist = masked_dijkstra(
                known_free, [((frontier.subgoal.x, frontier.subgoal.y), 0.0)]
            )
            cand = [(dist[p.x, p.y], i) for i, p in enumerate(positions)]
            best_d, best_i = min(cand)
            if math.isfinite(best_d):
                edges.append((best_i, nid, float(best_d)))

    goal_node = len(nodes)
    nodes.append(Pose(goal.x, goal.y))
    for i in range(goal_node):
        p = nodes[i]
        edges.append((i, goal_node, math.hypot(p.x - goal.x, p.y - goal.y)))

    features = _node_features(partial, nodes, edges, subgoal_nodes, goal_node)
    return NavGraph(
        positions=tuple(nodes),
        features=features,
        edges=tuple(edges),
        subgoal_nodes=subgoal_nodes,
        goal_node=goal_node,
    )


def _skeleton_structure(skel: np.ndarray):
    """Structure node positions (sorted by (y, x)) and arc edges."""
    w, h = skel.shape
    pix = {(int(x), int(y)) for x, y in np.argwhere(skel)}
    if not pix:
        return [], []

    def nbrs(p):
        x, y = p
        out = []
        for dx, dy, _ in MOVES:
            q = (x + dx, y + dy)
            if q in pix:
                out.append(q)
        return out

    degree = {p: len(nbrs(p)) for p in pix}
    structure = {p for p in pix if degree[p] != 2}

    # components made only of degree-2 pixels (closed loops) get one anchor
    skel_labels, n_comp = ndimage.label(skel, structure=_EIGHT)
    for comp in range(1, n_comp + 1):
        comp_pix = [
            (int(x), int(y)) for x, y in np.argwhere(skel_labels == comp)
        ]
        if not any(p in structure for p in comp_pix):
            structure.add(min(comp_pix, key=lambda p: (p[1], p[0])))

    # merge 8-adjacent structure pixels into clusters
    smask = np.zeros((w, h), dtype=bool)
    for x, y in structure:
        smask[x, y] = True
    s_labels, n_clusters = ndimage.label(smask, structure=_EIGHT)

    cluster_pix = {c: [] for c in range(1, n_clusters + 1)}
    for p in structure:
        cluster_pix[int(s_labels[p])].append(p)
    cluster_pos = {}
    for c, pxs in cluster_pix.items():
        cx = sum(p[0] for p in pxs) / len(pxs)
        cy = sum(p[1] for p in pxs) / len(pxs)
        cluster_pos[c] = min(
            pxs, key=lambda p: (math.hypot(p[0] - cx, p[1] - cy), p[1], p[0])
        )

    order = sorted(cluster_pos, key=lambda c: (cluster_pos[c][1], cluster_pos[c][0]))
    node_of_cluster = {c: i for i, c in enumerate(order)}
    positions = [Pose(*cluster_pos[c]) for c in order]

    def step_cost(a, b):
        return math.sqrt(2.0) if a[0] != b[0] and a[1] != b[1] else 1.0

    edges = []
    seen_arcs = set()
    for p in sorted(structure, key=lambda q: (q[1], q[0])):
        cp = node_of_cluster[int(s_labels[p])]
        for n in nbrs(p):
            if n in structure:
                cn = node_of_cluster[int(s_labels[n])]
                if cn != cp:
                    key = (min(cp, cn), max(cp, cn), min(p, n), max(p, n))
                    if key not in seen_arcs:
                        seen_arcs.add(key)
                        edges.append((min(cp, cn), max(cp, cn), step_cost(p, n)))
                continue
            # walk the degree-2 chain starting at n
            length = step_cost(p, n)
            prev, cur = p, n
            guard = 0
            while cur not in structure and guard <= len(pix):
                nxt = [q for q in nbrs(cur) if q != prev]
                if not nxt:
                    break  # dangling chain end (should not occur)
                nxt = nxt[0]
                length += step_cost(cur, nxt)
                prev, cur = cur, nxt
                guard += 1
            if cur in structure:
                cq = node_of_cluster[int(s_labels[cur])]
                if cq == cp:
                    continue  # self-loop arc, dropped
                key = (min(cp, cq), max(cp, cq), min(n, prev), max(n, prev))
                if key not in seen_arcs:
                    seen_arcs.add(key)
                    edges.append((min(cp, cq), max(cp, cq), length))
    edges.sort(key=lambda e: (e[0], e[1], e[2]))
    return positions, edges


def _cell_class(partial: PartialMap, pose: Pose) -> int:
    """Class of a node's cell; unseen cells take the majority class of
    their known 8-neighbors (ties to the lowest class index)."""
    if partial.state[pose.x, pose.y] != CellState.UNSEEN:
        return int(partial.semantic[pose.x, pose.y])
    counts = [0, 0, 0, 0]
    for dx, dy, _ in MOVES:
        x, y = pose.x + dx, pose.y + dy
        if 0 <= x < partial.width and 0 <= y < partial.height:
            if partial.state[x, y] == CellState.FREE:
                counts[int(partial.semantic[x, y])] += 1
    if max(counts) == 0:
        return int(SemanticClass.NEUTRAL)
    return int(np.argmax(counts))


def _node_features(partial, nodes, edges, subgoal_nodes, goal_node):
    n = len(nodes)
    feats = np.zeros((n, FEATURE_SIZE))
    neighbor_sets = [set() for _ in range(n)]
    for u, v, _ in edges:
        neighbor_sets[u].add(v)
        neighbor_sets[v].add(u)
    subgoal_ids = set(subgoal_nodes.values())
    for i, pose in enumerate(nodes):
        if i == goal_node and partial.state[pose.x, pose.y] == CellState.UNSEEN:
            cls = int(SemanticClass.NEUTRAL)
        else:
            cls = _cell_class(partial, pose)
        feats[i, cls] = 1.0
        feats[i, 4] = len(neighbor_sets[i])
        feats[i, 5] = 1.0 if i in subgoal_ids else 0.0
        feats[i, 6] = 1.0 if i == goal_node else 0.0
    return feats
