import math

import pytest

from fklab import lattice
from fklab.lattice import Box, CouplingField, Rect, edge_set, nearest_neighbor, outer_boundary


def brute_force_edges(region, couplings):
    verts = region.vertices()
    out = set()
    for v in verts:
        for w in verts:
            if v < w and couplings.weight(tuple(b - a for a, b in zip(v, w))) > 0:
                out.add((v, w))
    return sorted(out)


class TestCouplingField:
    def test_symmetry_enforced(self):
        with pytest.raises(ValueError):
            CouplingField(2, {(1, 0): 1.0, (-1, 0): 0.5,
                              (0, 1): 1.0, (0, -1): 1.0})

    def test_nearest_neighbor_positivity(self):
        with pytest.raises(ValueError):
            CouplingField(2, {(1, 1): 1.0, (-1, -1): 1.0})

    def test_range(self):
        c = CouplingField(1, {(1,): 1.0, (-1,): 1.0, (2,): 0.3, (-2,): 0.3})
        assert c.range == pytest.approx(2.0)
        assert nearest_neighbor(3).range == pytest.approx(1.0)


class TestEdgeSet:
    def test_single_vertex_no_bonds(self):
        assert edge_set(Box(0, 2), nearest_neighbor(2)) == []

    def test_3x3_has_12_bonds(self):
        assert len(edge_set(Box(1, 2), nearest_neighbor(2))) == 12

    def test_next_nearest_1d(self):
        c = CouplingField(1, {(1,): 1.0, (-1,): 1.0, (2,): 0.3, (-2,): 0.3})
        bonds = edge_set(Box(1, 1), c)
        assert len(bonds) == 3  # 2 nearest + 1 next-nearest within {-1,0,1}
        c2 = nearest_neighbor(1)
        assert len(edge_set(Box(1, 1), c2)) == 2

    def test_deterministic_order(self):
        a = edge_set(Box(2, 2), nearest_neighbor(2))
        b = edge_set(Box(2, 2), nearest_neighbor(2))
        assert a == b
        assert a == sorted(a)

    @pytest.mark.parametrize("d", [1, 2, 3])
    @pytest.mark.parametrize("N", [1, 2, 3])
    def test_count_formula_vs_brute_force(self, d, N):
        box = Box(N, d)
        nn = nearest_neighbor(d)
        bonds = edge_set(box, nn)
        assert len(bonds) == d * (2 * N + 1) ** (d - 1) * 2 * N
        assert bonds == brute_force_edges(box, nn)

    def test_rect_counts(self):
        nn = nearest_neighbor(2)
        assert len(edge_set(Rect((2, 2)), nn)) == 4
        assert len(edge_set(Rect((2, 3)), nn)) == 7
        assert len(edge_set(Rect((2, 1)), nn)) == 1


class TestOuterBoundary:
    def test_empty(self):
        assert outer_boundary(set(), 3.0) == set()

    def test_box_axis_neighbors(self):
        ring = outer_boundary(set(Box(1, 2).vertices()), 1.0)
        assert len(ring) == 12
        assert all(v not in Box(1, 2) for v in ring)

    def test_moore_neighborhood(self):
        ring = outer_boundary({(0, 0)}, math.sqrt(2))
        assert len(ring) == 8

    def test_disjoint_from_input(self):
        A = {(0, 0), (1, 0), (5, 5)}
        assert outer_boundary(A, 2.0) & A == set()

    def test_tie_at_exact_distance_included(self):
        ring = outer_boundary({(0, 0)}, 2.0)
        assert (2, 0) in ring and (1, 1) in ring and (2, 1) not in ring


class TestBoundaryRing:
    def test_all_vertices_on_small_grids(self):
        nn = nearest_neighbor(2)
        assert len(lattice.boundary_ring(Rect((2, 2)), nn)) == 4
        ring = lattice.boundary_ring(Box(1, 2), nn)
        assert len(ring) == 8  # shell of the 3x3 box; origin excluded
        assert (0, 0) not in ring
