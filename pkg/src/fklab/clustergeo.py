"""Cluster coarse-graining and the cone-point decomposition machinery.

Implements the renormalization toolkit for connected clusters of a planar
subcritical random-cluster configuration: ball-chain skeleton trees with a
trunk/branch split, cone and marked points of trunks, trees and whole
clusters, the irreducible decomposition into a chain of cone-confined
pieces, the induced effective random walk of displacements, and the
polyline proximity (Hausdorff) diagnostic.

Conventions: the dual direction t points from the source toward the
target; ``b`` markers sit at the forward end of a piece and ``f`` markers
at the rear, so displacements b - f point forward and concatenation chains
through b(piece) = f(next piece).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product
from typing import Optional

import numpy as np

from . import _kernels
from .geometry import DirectionalNorm, cone_sector, in_forward_cone, surcharge


class CoveringViolation(Exception):
    """Skeleton balls fail to cover the cluster (scale K or padding r too small)."""


class TargetNotCovered(Exception):
    """No skeleton vertex has the target inside its double-scale ball."""


class PartitionViolation(Exception):
    """Cone-point slab assignment is ambiguous; cone detection is broken."""


@dataclass
class Cluster:
    """A finite connected open subgraph with two distinguished endpoints."""

    vertices: np.ndarray          # (n, 2) int64
    edges: np.ndarray             # (ne, 2) indices into vertices
    source: int = 0               # index of the vertex representing 0
    target: int = 0               # index of the vertex representing x

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.int64).reshape(-1, 2)
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)

    @property
    def n(self) -> int:
        return len(self.vertices)

    def vertex_set(self) -> set:
        return {tuple(v) for v in self.vertices}

    def source_point(self):
        return tuple(self.vertices[self.source])

    def target_point(self):
        return tuple(self.vertices[self.target])

    def displacement(self):
        return self.vertices[self.target] - self.vertices[self.source]


def cluster_from_points(points, edges, source, target) -> Cluster:
    """Build a Cluster from coordinate tuples and coordinate-pair edges."""
    pts = [tuple(p) for p in points]
    index = {p: i for i, p in enumerate(pts)}
    e = np.array([[index[tuple(a)], index[tuple(b)]] for a, b in edges],
                 dtype=np.int64).reshape(-1, 2)
    return Cluster(np.array(pts, dtype=np.int64), e,
                   index[tuple(source)], index[tuple(target)])


def line_cluster(L: int) -> Cluster:
    """Straight open segment 0 -- (L, 0); the standard synthetic fixture."""
    pts = [(i, 0) for i in range(L + 1)]
    edges = [((i, 0), (i + 1, 0)) for i in range(L)]
    return cluster_from_points(pts, edges, (0, 0), (L, 0))


# ---------------------------------------------------------------------------
# skeletons
# ---------------------------------------------------------------------------

_ball_cache: dict = {}


def _ball_offsets(norm: DirectionalNorm, radius: float) -> list:
    """Lattice offsets o with xi(o) <= radius (boundary included)."""
    key = (id(norm), round(radius, 12))
    if key not in _ball_cache:
        # xi is a norm: xi(o) >= c |o| with c = min unit-profile value
        c = min(norm((1.0, 0.0)), norm((0.0, 1.0)),
                norm((math.sqrt(0.5), math.sqrt(0.5))),
                norm((math.sqrt(0.5), -math.sqrt(0.5)))) * 0.5
        reach = int(math.ceil(radius / c)) + 1
        offs = []
        for o in product(range(-reach, reach + 1), repeat=2):
            if norm(o) <= radius + 1e-9:
                offs.append(o)
        _ball_cache[key] = offs
    return _ball_cache[key]


def ball_points(center, norm: DirectionalNorm, radius: float) -> set:
    """B_radius(center) = (center + radius * U_xi) intersected with Z^2."""
    cx, cy = center
    return {(cx + ox, cy + oy) for ox, oy in _ball_offsets(norm, radius)}


@dataclass
class SkeletonTree:
    """Ball-chain tree of a cluster: vertices, parent links, trunk, branches."""

    vertices: list                 # ordered list of coordinate tuples, x0 first
    parent: list                   # parent index per vertex, -1 at the root
    K: float
    r: float
    trunk: Optional[list] = None   # indices into vertices, root -> x_F
    branches: Optional[list] = None  # (trunk vertex index, [vertex indices])

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)


def _r_offsets(R: float) -> list:
    reach = int(math.floor(R + 1e-9))
    offs = []
    for o in product(range(-reach, reach + 1), repeat=2):
        if o != (0, 0) and o[0] * o[0] + o[1] * o[1] <= R * R + 1e-9:
            offs.append(o)
    return offs


def skeleton(C: Cluster, K: float, r: float, norm: DirectionalNorm,
             R: float = 1.0) -> SkeletonTree:
    """Ball-chain coarse-graining of a cluster containing the origin.

    Grows a tree of centers x_i by repeatedly picking the lexicographically
    minimal vertex y on the R-outer boundary of the covered region that
    still escapes its own K-ball through uncovered cluster vertices, then
    covering y's padded ball.  Asserts the double-scale covering property
    on every call.
    """
    src = C.source_point()
    if src != (0, 0):
        raise ValueError("cluster must be presented with source at the origin")
    pad = K + r * math.log(K)
    pad2 = 2 * K + r * math.log(2 * K)
    adj = {}
    vset = C.vertex_set()
    for a, b in C.edges:
        ta, tb = tuple(C.vertices[a]), tuple(C.vertices[b])
        adj.setdefault(ta, []).append(tb)
        adj.setdefault(tb, []).append(ta)
    roffs = _r_offsets(R)

    centers = [src]
    covered = set(ball_points(src, norm, pad))

    def escapes(y) -> bool:
        # open path from y through uncovered cluster vertices reaching the
        # R-outer boundary of B_K(y) outside the covered region
        ball = ball_points(y, norm, K)
        seen = {y}
        stack = [y]
        while stack:
            w = stack.pop()
            for o in adj.get(w, ()):
                if o in covered or o in seen:
                    continue
                if o not in ball:
                    # outside the ball: escape needs d(o, ball) <= R
                    near = any((o[0] + dx, o[1] + dy) in ball
                               for dx, dy in roffs)
                    if near:
                        return True
                    continue  # beyond the ball but not adjacent: not a path vertex
                seen.add(o)
                stack.append(o)
        return False

    while True:
        candidates = []
        for v in vset:
            if v in covered:
                continue
            if any((v[0] + dx, v[1] + dy) in covered for dx, dy in roffs):
                candidates.append(v)
        candidates.sort()
        chosen = None
        for y in candidates:
            if escapes(y):
                chosen = y
                break
        if chosen is None:
            break
        centers.append(chosen)
        covered |= ball_points(chosen, norm, pad)

    parent = [-1]
    for i in range(1, len(centers)):
        xi = centers[i]
        p = -1
        for j in range(i):
            bj = ball_points(centers[j], norm, pad)
            if xi in bj:
                continue
            if any((xi[0] + dx, xi[1] + dy) in bj for dx, dy in roffs):
                p = j
                break
        if p < 0:
            raise CoveringViolation(
                f"skeleton vertex {xi} has no parent ball within range")
        parent.append(p)

    for v in vset:
        if not any(norm((v[0] - cx, v[1] - cy)) <= pad2 + 1e-9
                   for cx, cy in centers):
            raise CoveringViolation(
                f"cluster vertex {v} not covered by double-scale balls; "
                f"increase K or r")
    tree = SkeletonTree(centers, parent, K, r)
    tree._norm = norm
    return tree


def split_trunk_branches(tree: SkeletonTree, x, K: float = None) -> tuple:
    """Trunk = tree path root -> x_F, branches = remaining hanging subtrees.

    x_F is the smallest-index vertex whose double-scale padded ball contains
    the target x.  Results are also stored on the tree.
    """
    K = tree.K if K is None else K
    pad2 = 2 * K + tree.r * math.log(2 * K)
    norm = getattr(tree, "_norm", None)
    if norm is None:
        raise ValueError("tree is missing its norm; build it with skeleton()")
    xf = None
    for i, c in enumerate(tree.vertices):
        if norm((x[0] - c[0], x[1] - c[1])) <= pad2 + 1e-9:
            xf = i
            break
    if xf is None:
        raise TargetNotCovered(f"target {x} not inside any double-scale ball")
    trunk = [xf]
    while tree.parent[trunk[-1]] >= 0:
        trunk.append(tree.parent[trunk[-1]])
    trunk.reverse()
    on_trunk = set(trunk)
    children = {i: [] for i in range(tree.n_vertices)}
    for i, p in enumerate(tree.parent):
        if p >= 0:
            children[p].append(i)
    branches = []
    for tj in trunk:
        for c in children[tj]:
            if c in on_trunk:
                continue
            sub = []
            stack = [c]
            while stack:
                w = stack.pop()
                sub.append(w)
                stack.extend(ch for ch in children[w] if ch not in on_trunk)
            branches.append((tj, sorted(sub)))
    # vertices hanging off non-trunk parents are inside those branches already
    tree.trunk = trunk
    tree.branches = branches
    n_branch = sum(len(b) for _, b in branches)
    assert tree.n_vertices == len(trunk) + n_branch
    return trunk, branches


# ---------------------------------------------------------------------------
# cone and marked points
# ---------------------------------------------------------------------------


def trunk_cone_points(trunk_positions, t, delta: float,
                      norm: DirectionalNorm) -> tuple:
    """(cone point indices, marked point indices) of an ordered trunk.

    An index is a cone point when every later vertex lies in its forward
    cone and every earlier one in its backward cone.  Marked points follow
    the alternating min/max scans over runs of non-cone indices.
    """
    pos = np.asarray(trunk_positions, dtype=float)
    n = len(pos)
    t = np.asarray(t, dtype=float)

    def fwd(k, l) -> bool:
        return in_forward_cone(pos[l] - pos[k], t, delta, norm)

    fwd_cone = np.ones(n, dtype=bool)
    bwd_cone = np.ones(n, dtype=bool)
    for k in range(n):
        for l in range(k + 1, n):
            if not fwd(k, l):
                fwd_cone[k] = False
                break
        for l in range(k):
            if not in_forward_cone(pos[k] - pos[l], t, delta, norm):
                bwd_cone[k] = False
                break
    cone = [k for k in range(n) if fwd_cone[k] and bwd_cone[k]]

    marked = set()
    start = 0
    while True:
        l = next((j for j in range(start, n) if not fwd_cone[j]), None)
        if l is None:
            break
        r = next((j for j in range(l + 1, n) if not fwd(l, j)), None)
        if r is None:
            break  # cannot happen if fwd_cone[l] is genuinely false
        marked.update(range(l, r))
        start = r
    start = n - 1
    while True:
        l = next((j for j in range(start, -1, -1) if not bwd_cone[j]), None)
        if l is None:
            break
        r = next((j for j in range(l - 1, -1, -1)
                  if not in_forward_cone(pos[l] - pos[j], t, delta, norm)),
                 None)
        if r is None:
            break
        marked.update(range(r + 1, l + 1))
        start = r
    return cone, sorted(marked)


def tree_cone_points(tree: SkeletonTree, t, delta: float,
                     norm: DirectionalNorm) -> list:
    """Trunk cone points (at doubled opening) not blocked by any branch.

    A trunk cone point is blocked when some branch vertex escapes the union
    of its forward and backward double-opening cones.
    """
    if tree.trunk is None:
        raise ValueError("split_trunk_branches must run first")
    pos = [np.asarray(tree.vertices[i], dtype=float) for i in tree.trunk]
    cone, _ = trunk_cone_points(pos, t, 2 * delta, norm)
    branch_vertices = [np.asarray(tree.vertices[i], dtype=float)
                       for _, sub in (tree.branches or []) for i in sub]
    out = []
    for k in cone:
        ok = True
        for w in branch_vertices:
            d = w - pos[k]
            if not (in_forward_cone(d, t, 2 * delta, norm)
                    or in_forward_cone(-d, t, 2 * delta, norm)):
                ok = False
                break
        if ok:
            out.append(k)
    return out


def cluster_cone_points(C: Cluster, t, delta: float, norm: DirectionalNorm,
                        method: str = "auto") -> np.ndarray:
    """Vertices y with the whole cluster inside y +- the triple-opening cone.

    Returns the cone points ordered by increasing (t, y).  ``method`` is
    "brute" (quadratic, the defining check), "scan" (sorted sector sweep) or
    "auto" (scan above 64 vertices, cross-checked against brute on small
    inputs elsewhere in the test suite).
    """
    t = np.asarray(t, dtype=float)
    pts = C.vertices.astype(float)
    proj = pts @ t
    order = np.argsort(proj, kind="stable")
    if method == "auto":
        method = "scan" if len(pts) > 64 else "brute"
    if method == "brute":
        flags = np.zeros(len(pts), dtype=bool)
        for i in range(len(pts)):
            ok = True
            for j in range(len(pts)):
                if i == j:
                    continue
                d = pts[j] - pts[i]
                if not (in_forward_cone(d, t, 3 * delta, norm)
                        or in_forward_cone(-d, t, 3 * delta, norm)):
                    ok = False
                    break
            flags[i] = ok
        sel = [i for i in order if flags[i]]
    elif method == "scan":
        ulo, uhi = cone_sector(t, 3 * delta, norm)
        px = np.ascontiguousarray(pts[order, 0])
        py = np.ascontiguousarray(pts[order, 1])
        ok = _kernels.cone_point_scan(px, py, ulo[0], ulo[1], uhi[0], uhi[1])
        sel = [order[k] for k in range(len(order)) if ok[k]]
    else:
        raise ValueError(f"unknown method {method!r}")
    return C.vertices[sel]


# ---------------------------------------------------------------------------
# irreducible decomposition
# ---------------------------------------------------------------------------


@dataclass
class Piece:
    """One chunk of the decomposition with its marker cone points."""

    vertices: np.ndarray
    edges: np.ndarray             # (k, 2) coordinate pairs, not indices
    f: Optional[tuple]            # rear marker (absent on the backward piece)
    b: Optional[tuple]            # front marker (absent on the forward piece)


@dataclass
class IrreducibleDecomposition:
    backward: Piece
    pieces: list
    forward: Piece
    t: np.ndarray
    delta: float

    @property
    def n_pieces(self) -> int:
        return len(self.pieces)

    def cone_points(self) -> list:
        out = [self.backward.b]
        out.extend(p.b for p in self.pieces)
        return out


@dataclass
class Undecomposable:
    """Returned when the cluster has fewer than two cone points."""

    count: int


@dataclass
class EffectiveWalk:
    steps: np.ndarray             # (n, 2) displacements
    start: np.ndarray             # first cone point
    end: np.ndarray               # last cone point


def decompose(C: Cluster, t, delta: float, norm: DirectionalNorm,
              method: str = "auto", verify: bool = True):
    """Split a two-endpoint cluster at its cone points.

    Returns an :class:`IrreducibleDecomposition` or :class:`Undecomposable`.
    The slab between consecutive cone points (projections inclusive) forms
    one piece; the ends become the backward/forward boundary pieces.  All
    structural invariants are verified before returning unless ``verify``
    is disabled.
    """
    t = np.asarray(t, dtype=float)
    cones = cluster_cone_points(C, t, delta, norm, method=method)
    m = len(cones)
    if m < 2:
        return Undecomposable(m)
    cproj = cones.astype(float) @ t
    if np.any(np.diff(cproj) <= 1e-9):
        raise PartitionViolation("cone points with equal projection")
    pts = C.vertices
    proj = pts.astype(float) @ t
    edges_xy = [(tuple(pts[a]), tuple(pts[b])) for a, b in C.edges]

    def in_slab(lo, hi):
        sel = (proj >= lo - 1e-9) & (proj <= hi + 1e-9)
        return pts[sel]

    def slab_edges(lo, hi):
        out = []
        for (pa, pb) in edges_xy:
            qa = float(np.dot(pa, t))
            qb = float(np.dot(pb, t))
            if min(qa, qb) >= lo - 1e-9 and max(qa, qb) <= hi + 1e-9:
                out.append((pa, pb))
        return out

    backward = Piece(in_slab(-math.inf, cproj[0]),
                     np.array(slab_edges(-math.inf, cproj[0])).reshape(-1, 2, 2),
                     f=None, b=tuple(cones[0]))
    pieces = []
    for i in range(m - 1):
        pieces.append(Piece(in_slab(cproj[i], cproj[i + 1]),
                            np.array(slab_edges(cproj[i], cproj[i + 1])).reshape(-1, 2, 2),
                            f=tuple(cones[i]), b=tuple(cones[i + 1])))
    forward = Piece(in_slab(cproj[-1], math.inf),
                    np.array(slab_edges(cproj[-1], math.inf)).reshape(-1, 2, 2),
                    f=tuple(cones[-1]), b=None)
    decomp = IrreducibleDecomposition(backward, pieces, forward, t, delta)
    if verify:
        _verify_decomposition(C, decomp, norm)
    return decomp


def _verify_decomposition(C: Cluster, decomp: IrreducibleDecomposition,
                          norm: DirectionalNorm) -> None:
    t = decomp.t
    delta = decomp.delta
    all_pieces = [decomp.backward] + decomp.pieces + [decomp.forward]

    # vertex cover and pairwise overlaps only at shared markers
    total = sum(len(p.vertices) for p in all_pieces)
    if total != C.n + len(all_pieces) - 1:
        raise PartitionViolation(
            f"piece vertex counts {total} != cluster {C.n} plus "
            f"{len(all_pieces) - 1} shared markers")
    cover = set()
    for p in all_pieces:
        cover.update(map(tuple, p.vertices))
    if cover != C.vertex_set():
        raise PartitionViolation("piece union differs from the cluster")

    # edge partition
    edge_count = sum(len(p.edges) for p in all_pieces)
    if edge_count != len(C.edges):
        raise PartitionViolation(
            f"piece edges {edge_count} != cluster edges {len(C.edges)}; "
            f"an open bond straddles a cone-point level")

    # cone confinement of every piece
    for p in all_pieces:
        for v in p.vertices:
            tv = tuple(v)
            if p.b is not None and tv != p.b:
                d = np.asarray(p.b, dtype=float) - v
                if not in_forward_cone(d, t, 3 * delta, norm):
                    raise PartitionViolation(
                        f"vertex {tv} escapes the backward cone of {p.b}")
            if p.f is not None and tv != p.f:
                d = v - np.asarray(p.f, dtype=float)
                if not in_forward_cone(d, t, 3 * delta, norm):
                    raise PartitionViolation(
                        f"vertex {tv} escapes the forward cone of {p.f}")

    # markers are the only cone points of their pieces
    for p in all_pieces:
        sub = Cluster(p.vertices.copy(),
                      np.empty((0, 2), dtype=np.int64), 0, 0)
        own = {tuple(v) for v in
               cluster_cone_points(sub, t, decomp.delta, norm)}
        expected = {x for x in (p.f, p.b) if x is not None}
        if own != expected:
            raise PartitionViolation(
                f"piece cone points {own} differ from markers {expected}")


def effective_walk(decomp: IrreducibleDecomposition) -> EffectiveWalk:
    """Displacements b - f along the inner pieces; anchors at both ends."""
    steps = np.array([np.asarray(p.b) - np.asarray(p.f)
                      for p in decomp.pieces], dtype=np.int64).reshape(-1, 2)
    start = np.asarray(decomp.backward.b, dtype=np.int64)
    end = np.asarray(decomp.forward.f, dtype=np.int64)
    assert np.array_equal(steps.sum(axis=0), end - start)
    return EffectiveWalk(steps, start, end)


def polyline_and_hausdorff(C: Cluster, anchors=None,
                           samples_per_seg: int = 16) -> tuple:
    """Linear interpolation through the anchors and its Hausdorff distance
    from the cluster (brute force over cluster vertices and a densely
    sampled polyline; the cluster carries its open edges as segments)."""
    if anchors is None:
        raise ValueError("anchors required (source, cone points, target)")
    anchors = np.asarray(anchors, dtype=float).reshape(-1, 2)
    px = np.ascontiguousarray(C.vertices[:, 0], dtype=np.float64)
    py = np.ascontiguousarray(C.vertices[:, 1], dtype=np.float64)
    a = C.vertices[C.edges[:, 0]] if len(C.edges) else np.empty((0, 2))
    b = C.vertices[C.edges[:, 1]] if len(C.edges) else np.empty((0, 2))
    d = _kernels.hausdorff_cluster_polyline(
        px, py,
        np.ascontiguousarray(a[:, 0], dtype=np.float64),
        np.ascontiguousarray(a[:, 1], dtype=np.float64),
        np.ascontiguousarray(b[:, 0], dtype=np.float64),
        np.ascontiguousarray(b[:, 1], dtype=np.float64),
        np.ascontiguousarray(anchors[:, 0]),
        np.ascontiguousarray(anchors[:, 1]), samples_per_seg)
    return anchors, float(d)


def decomposition_anchors(C: Cluster, decomp: IrreducibleDecomposition) -> np.ndarray:
    """Source, cone points in order, target; the interpolation nodes."""
    pts = [C.source_point()]
    pts.extend(decomp.cone_points())
    pts.append(C.target_point())
    # dedupe consecutive repeats (source may itself be a cone point)
    out = [pts[0]]
    for p in pts[1:]:
        if tuple(p) != tuple(out[-1]):
            out.append(p)
    return np.asarray(out, dtype=float)


def export_decomposition(decomp: IrreducibleDecomposition) -> dict:
    """JSON-ready structure with piece vertex lists, markers and steps."""
    def piece_dict(p: Piece):
        return {
            "f": list(p.f) if p.f is not None else None,
            "b": list(p.b) if p.b is not None else None,
            "vertices": [list(map(int, v)) for v in p.vertices],
            "edges": [[list(map(int, a)), list(map(int, b))]
                      for a, b in p.edges],
        }

    walk = effective_walk(decomp)
    return {
        "t": [float(c) for c in decomp.t],
        "delta": decomp.delta,
        "backward": piece_dict(decomp.backward),
        "pieces": [piece_dict(p) for p in decomp.pieces],
        "forward": piece_dict(decomp.forward),
        "steps": [list(map(int, s)) for s in walk.steps],
    }
