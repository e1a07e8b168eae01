import math

import numpy as np
import pytest

from fklab import clustergeo as cg
from fklab import geometry as geo
from fklab.analysis import conditioned_cluster_sampler
from fklab.fkmodel import ModelParams
from fklab.lattice import nearest_neighbor

EU = geo.EuclideanNorm()
T_E1 = np.array([1.0, 0.0])


def t_cluster(L=40, spur=12, at=20):
    """Horizontal segment with a vertical spur; branch fixture for K = 4."""
    pts = [(i, 0) for i in range(L + 1)] + [(at, j) for j in range(1, spur + 1)]
    edges = [((i, 0), (i + 1, 0)) for i in range(L)] + \
            [((at, j), (at, j + 1)) for j in range(spur)]
    return cg.cluster_from_points(pts, edges, (0, 0), (L, 0))


class TestSkeleton:
    def test_small_cluster_single_vertex_tree(self):
        C = cg.cluster_from_points([(0, 0), (1, 0)], [((0, 0), (1, 0))],
                                   (0, 0), (1, 0))
        tree = cg.skeleton(C, K=8.0, r=1.0, norm=EU)
        assert tree.vertices == [(0, 0)]
        assert tree.parent == [-1]

    def test_line_cluster_collinear_trunk(self):
        L = 60
        C = cg.line_cluster(L)
        tree = cg.skeleton(C, K=8.0, r=1.0, norm=EU)
        pad = 8.0 + math.log(8.0)
        expected = math.ceil(L / (pad + 1.5))
        assert all(y == 0 for _, y in tree.vertices)
        assert abs(len(tree.vertices) - expected) <= 1
        trunk, branches = cg.split_trunk_branches(tree, (L, 0))
        assert trunk == list(range(len(tree.vertices)))
        assert branches == []

    def test_t_cluster_spur_becomes_branch(self):
        C = t_cluster()
        tree = cg.skeleton(C, K=4.0, r=1.0, norm=EU)
        trunk, branches = cg.split_trunk_branches(tree, (40, 0))
        trunk_pos = [tree.vertices[i] for i in trunk]
        assert all(y == 0 for _, y in trunk_pos)
        assert len(branches) == 1
        root, sub = branches[0]
        assert tree.vertices[root][1] == 0
        assert all(tree.vertices[i][0] == 20 for i in sub)

    def test_covering_property_asserted(self):
        C = cg.line_cluster(60)
        tree = cg.skeleton(C, K=8.0, r=1.0, norm=EU)
        pad2 = 16.0 + math.log(16.0)
        for v in C.vertex_set():
            assert any(EU((v[0] - cx, v[1] - cy)) <= pad2 + 1e-9
                       for cx, cy in tree.vertices)

    def test_target_not_covered(self):
        C = cg.line_cluster(10)
        tree = cg.skeleton(C, K=4.0, r=1.0, norm=EU)
        with pytest.raises(cg.TargetNotCovered):
            cg.split_trunk_branches(tree, (500, 0))

    def test_requires_origin_source(self):
        C = cg.cluster_from_points([(3, 0), (4, 0)], [((3, 0), (4, 0))],
                                   (3, 0), (4, 0))
        with pytest.raises(ValueError):
            cg.skeleton(C, K=4.0, r=1.0, norm=EU)

    def test_counts_split(self):
        C = t_cluster()
        tree = cg.skeleton(C, K=4.0, r=1.0, norm=EU)
        trunk, branches = cg.split_trunk_branches(tree, (40, 0))
        assert tree.n_vertices == len(trunk) + sum(len(s) for _, s in branches)


class TestTrunkConePoints:
    def test_collinear_all_cone_no_marked(self):
        trunk = [(i, 0) for i in range(0, 24, 4)]
        cone, marked = cg.trunk_cone_points(trunk, T_E1, 0.25, EU)
        assert cone == list(range(6))
        assert marked == []

    def test_two_vertex_trunk(self):
        cone, marked = cg.trunk_cone_points([(0, 0), (4, 0)], T_E1, 0.25, EU)
        assert cone == [0, 1]
        cone2, _ = cg.trunk_cone_points([(0, 0), (0, 4)], T_E1, 0.25, EU)
        assert 0 not in cone2

    def test_zigzag_marks_middle(self):
        trunk = [(0, 0), (4, 0), (8, 0), (10, 6), (12, 0), (16, 0), (20, 0)]
        cone, marked = cg.trunk_cone_points(trunk, T_E1, 0.25, EU)
        assert cone == [0, 6]
        assert marked == [1, 2, 3, 4, 5]
        assert set(cone).isdisjoint(marked)


class TestTreeConePoints:
    def test_branchless_equals_trunk_at_double_opening(self):
        C = cg.line_cluster(60)
        tree = cg.skeleton(C, K=8.0, r=1.0, norm=EU)
        cg.split_trunk_branches(tree, (60, 0))
        out = cg.tree_cone_points(tree, T_E1, 0.12, EU)
        pos = [tree.vertices[i] for i in tree.trunk]
        cone2, _ = cg.trunk_cone_points(pos, T_E1, 0.24, EU)
        assert out == cone2

    def test_long_spur_blocks_nearby_cone_points(self):
        C = t_cluster()
        tree = cg.skeleton(C, K=4.0, r=1.0, norm=EU)
        cg.split_trunk_branches(tree, (40, 0))
        delta = 0.15
        out = cg.tree_cone_points(tree, T_E1, delta, EU)
        pos = [tree.vertices[i] for i in tree.trunk]
        cone_plain, _ = cg.trunk_cone_points(pos, T_E1, 2 * delta, EU)
        blocked = set(cone_plain) - set(out)
        # the spur blocks the trunk vertices adjacent to its root but not
        # the far-away ones
        assert blocked
        branch_root_x = 20
        for j in blocked:
            assert abs(pos[j][0] - branch_root_x) < 20
        far = [j for j in cone_plain if abs(pos[j][0] - branch_root_x) >= 25]
        assert all(j in out for j in far)


class TestClusterConePoints:
    def test_line_all_cone_points(self):
        C = cg.line_cluster(30)
        pts = cg.cluster_cone_points(C, T_E1, 0.2, EU, method="brute")
        assert len(pts) == 31

    def test_single_vertex(self):
        C = cg.Cluster(np.array([[0, 0]]), np.empty((0, 2), dtype=np.int64), 0, 0)
        pts = cg.cluster_cone_points(C, T_E1, 0.2, EU)
        assert len(pts) == 1

    def test_violating_site_excluded(self):
        # a site directly above y kills y's cone property (zero projection
        # gap lands in neither open cone); the end vertices keep theirs
        C = cg.cluster_from_points(
            [(0, 0), (1, 0), (2, 0), (1, 3)],
            [((0, 0), (1, 0)), ((1, 0), (2, 0)), ((1, 0), (1, 3))],
            (0, 0), (2, 0))
        pts = {tuple(p) for p in
               cg.cluster_cone_points(C, T_E1, 0.25, EU, method="brute")}
        assert (1, 0) not in pts and (1, 3) not in pts
        assert (0, 0) in pts and (2, 0) in pts

    def test_scan_equals_brute_random_clusters(self):
        params = ModelParams(beta=-0.5 * math.log1p(-0.45), q=1.0,
                             couplings=nearest_neighbor(2))
        n = 0
        for C in conditioned_cluster_sampler(params, (10, 0), 10 ** 6,
                                             seed=21, n_samples=25):
            t = np.array([EU((1.0, 0.0)), 0.0])
            brute = cg.cluster_cone_points(C, t, 0.22, EU, method="brute")
            scan = cg.cluster_cone_points(C, t, 0.22, EU, method="scan")
            assert np.array_equal(brute, scan)
            n += 1
        assert n == 25

    def test_delta_monotone(self):
        params = ModelParams(beta=-0.5 * math.log1p(-0.45), q=1.0,
                             couplings=nearest_neighbor(2))
        for C in conditioned_cluster_sampler(params, (8, 0), 10 ** 6,
                                             seed=22, n_samples=10):
            small = {tuple(p) for p in
                     cg.cluster_cone_points(C, T_E1, 0.15, EU)}
            large = {tuple(p) for p in
                     cg.cluster_cone_points(C, T_E1, 0.3, EU)}
            assert small <= large

    def test_ordered_by_projection(self):
        C = cg.line_cluster(12)
        pts = cg.cluster_cone_points(C, T_E1, 0.2, EU)
        proj = pts.astype(float) @ T_E1
        assert np.all(np.diff(proj) > 0)


class TestDecompose:
    def test_undecomposable_zero_cone_points(self):
        # two vertically separated rows joined at both ends: no cone points
        pts = [(i, 0) for i in range(5)] + [(i, 3) for i in range(5)]
        edges = [((i, 0), (i + 1, 0)) for i in range(4)] + \
                [((i, 3), (i + 1, 3)) for i in range(4)] + \
                [((0, 0), (0, 1)), ((0, 1), (0, 2)), ((0, 2), (0, 3)),
                 ((4, 0), (4, 1)), ((4, 1), (4, 2)), ((4, 2), (4, 3))]
        pts += [(0, 1), (0, 2), (4, 1), (4, 2)]
        C = cg.cluster_from_points(pts, edges, (0, 0), (4, 0))
        out = cg.decompose(C, T_E1, 0.2, EU)
        assert isinstance(out, cg.Undecomposable)

    def test_line_decomposition_unit_pieces(self):
        L = 20
        C = cg.line_cluster(L)
        d = cg.decompose(C, T_E1, 0.2, EU)
        assert d.n_pieces == L
        assert d.backward.b == (0, 0)
        assert d.forward.f == (L, 0)
        w = cg.effective_walk(d)
        assert np.all(w.steps == [1, 0])
        assert np.array_equal(w.steps.sum(axis=0), [L, 0])

    def test_two_lobe_single_piece(self):
        # two blobs joined by a bridge; exactly the bridge ends are cone points
        pts = [(0, 0), (0, 1), (1, 0), (1, 1), (2, 0), (3, 0),
               (4, 0), (4, 1), (5, 0), (5, 1)]
        edges = [((0, 0), (0, 1)), ((0, 0), (1, 0)), ((0, 1), (1, 1)),
                 ((1, 0), (1, 1)), ((1, 0), (2, 0)), ((2, 0), (3, 0)),
                 ((3, 0), (4, 0)), ((4, 0), (4, 1)), ((4, 1), (5, 1)),
                 ((4, 0), (5, 0)), ((5, 0), (5, 1))]
        C = cg.cluster_from_points(pts, edges, (0, 0), (5, 0))
        d = cg.decompose(C, T_E1, 0.3, EU)
        assert not isinstance(d, cg.Undecomposable)
        cones = d.cone_points() + [d.forward.f]
        assert (2, 0) in cones and (3, 0) in cones
        w = cg.effective_walk(d)
        assert np.array_equal(w.steps.sum(axis=0),
                              np.asarray(d.forward.f) - np.asarray(d.backward.b))

    def test_reassembly_on_sampled_clusters(self):
        params = ModelParams(beta=-0.5 * math.log1p(-0.45), q=1.0,
                             couplings=nearest_neighbor(2))
        t = np.array([EU((1.0, 0.0)), 0.0])
        n_dec = 0
        for C in conditioned_cluster_sampler(params, (12, 0), 10 ** 6,
                                             seed=23, n_samples=60):
            d = cg.decompose(C, t, 0.25, EU, method="scan")
            if isinstance(d, cg.Undecomposable):
                continue
            n_dec += 1
            pieces = [d.backward] + d.pieces + [d.forward]
            cover = set()
            for p in pieces:
                cover.update(map(tuple, p.vertices))
            assert cover == C.vertex_set()
            assert sum(len(p.vertices) for p in pieces) == C.n + len(pieces) - 1
            assert sum(len(p.edges) for p in pieces) == len(C.edges)
            # consecutive pieces overlap exactly at the shared marker
            for a, b in zip(pieces, pieces[1:]):
                inter = {tuple(v) for v in a.vertices} & \
                        {tuple(v) for v in b.vertices}
                assert inter == {a.b}
        assert n_dec > 30

    def test_telescoping_identity(self):
        params = ModelParams(beta=-0.5 * math.log1p(-0.45), q=1.0,
                             couplings=nearest_neighbor(2))
        t = np.array([EU((1.0, 0.0)), 0.0])
        for C in conditioned_cluster_sampler(params, (10, 0), 10 ** 6,
                                             seed=24, n_samples=20):
            d = cg.decompose(C, t, 0.25, EU, method="scan", verify=False)
            if isinstance(d, cg.Undecomposable):
                continue
            w = cg.effective_walk(d)
            c1 = np.asarray(d.backward.b)
            cm = np.asarray(d.forward.f)
            x = np.asarray(C.target_point())
            total = w.steps.sum(axis=0) + (c1 - 0) + (x - cm)
            assert np.array_equal(total, x)


class TestHausdorff:
    def test_line_zero(self):
        C = cg.line_cluster(15)
        d = cg.decompose(C, T_E1, 0.2, EU)
        anchors = cg.decomposition_anchors(C, d)
        _, dh = cg.polyline_and_hausdorff(C, anchors)
        assert dh == pytest.approx(0.0, abs=1e-12)

    def test_single_offline_vertex(self):
        pts = [(i, 0) for i in range(9)] + [(4, 5)]
        edges = [((i, 0), (i + 1, 0)) for i in range(8)] + [((4, 0), (4, 5))]
        C = cg.cluster_from_points(pts, edges, (0, 0), (8, 0))
        _, dh = cg.polyline_and_hausdorff(
            C, np.array([[0.0, 0.0], [8.0, 0.0]]))
        assert dh == pytest.approx(5.0)
