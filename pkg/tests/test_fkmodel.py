import math

import numpy as np
import pytest

from fklab import _kernels, _rng, fkmodel
from fklab.fkmodel import (BondConfiguration, ModelParams, bond_probability,
                           cluster_labeling, config_weight, connected,
                           empty_configuration, exact_distribution,
                           restricted_connected, sample_chain, tv_distance)
from fklab.lattice import Box, Rect, nearest_neighbor

NN2 = nearest_neighbor(2)


def params(p=0.5, q=2.0):
    return ModelParams(beta=-0.5 * math.log1p(-p), q=q, couplings=NN2)


SINGLE_BOND = Rect((2, 1))


class TestBondProbability:
    def test_zero_beta(self):
        assert bond_probability(1.0, 0.0) == 0.0

    def test_zero_coupling(self):
        assert bond_probability(0.0, 5.0) == 0.0

    def test_half(self):
        assert bond_probability(1.0, math.log(2) / 2) == pytest.approx(0.5)

    def test_range(self):
        assert 0 <= bond_probability(3.0, 2.0) < 1


class TestConfigWeight:
    def test_single_bond_open_free(self):
        pr = params(p=0.5, q=3.0)
        cfg = empty_configuration(SINGLE_BOND, pr, "free")
        cfg.states[0] = 1
        assert config_weight(cfg, pr) == pytest.approx(0.5 * 3.0)

    def test_single_bond_closed_free(self):
        pr = params(p=0.5, q=3.0)
        cfg = empty_configuration(SINGLE_BOND, pr, "free")
        assert config_weight(cfg, pr) == pytest.approx(0.5 * 9.0)

    def test_all_closed_wired_box(self):
        pr = params(p=0.5, q=2.0)
        cfg = empty_configuration(Box(1, 2), pr, "wired")
        # exterior-merged ring + isolated origin = 2 clusters
        assert config_weight(cfg, pr) == pytest.approx(0.5 ** 12 * 4.0)


class TestClusterLabeling:
    def test_all_closed_free(self):
        cfg = empty_configuration(Box(1, 2), params(), "free")
        assert cluster_labeling(cfg).count == 9

    def test_all_open_free(self):
        cfg = empty_configuration(Box(1, 2), params(), "free")
        cfg.states[:] = 1
        assert cluster_labeling(cfg).count == 1

    def test_all_closed_wired(self):
        cfg = empty_configuration(Box(1, 2), params(), "wired")
        assert cluster_labeling(cfg).count == 2

    def test_matches_flood_fill(self):
        rng = np.random.default_rng(42)
        pr = params()
        for _ in range(25):
            cfg = empty_configuration(Box(2, 2), pr, "free")
            cfg.states[:] = rng.integers(0, 2, size=len(cfg.states))
            lab = cluster_labeling(cfg)
            # flood fill over open bonds
            adj = {}
            for b, s in zip(cfg.graph.bonds, cfg.states):
                if s:
                    adj.setdefault(b[0], []).append(b[1])
                    adj.setdefault(b[1], []).append(b[0])
            seen = set()
            count = 0
            for v in cfg.graph.vertices:
                if v in seen:
                    continue
                count += 1
                stack = [v]
                seen.add(v)
                while stack:
                    w = stack.pop()
                    for o in adj.get(w, ()):
                        if o not in seen:
                            seen.add(o)
                            stack.append(o)
            assert lab.count == count


class TestExactDistribution:
    def test_single_bond_q2(self):
        dist = exact_distribution(SINGLE_BOND, params(p=0.5, q=2.0), "free")
        assert dist.marginal_open(0) == pytest.approx(1.0 / 3.0)

    def test_single_bond_q1_bernoulli(self):
        dist = exact_distribution(SINGLE_BOND, params(p=0.37, q=1.0), "free")
        assert dist.marginal_open(0) == pytest.approx(0.37)

    def test_two_disjoint_bonds_product(self):
        region = Rect((2, 3))
        pr = params(p=0.43, q=1.0)
        dist = exact_distribution(region, pr, "free")
        m = dist.graph.n_bonds
        # q = 1: all bonds independent
        assert dist.all_open_probability(range(m)) == pytest.approx(0.43 ** m)

    def test_normalized(self):
        dist = exact_distribution(Rect((2, 3)), params(q=1.7), "wired")
        assert abs(dist.probs.sum() - 1.0) < 1e-12

    def test_bond_cap(self):
        with pytest.raises(fkmodel.TooManyBonds):
            exact_distribution(Box(3, 2), params(), "free")


class TestDetailedBalance:
    def test_heat_bath_kernel_preserves_exact_distribution(self):
        """pi P = pi for every single-bond conditional update."""
        region = Rect((2, 2))
        pr = params(p=0.6, q=2.5)
        dist = exact_distribution(region, pr, "free")
        g = dist.graph
        m = g.n_bonds
        probs = dist.probs
        for e in range(m):
            post = np.zeros_like(probs)
            for mask in range(1 << m):
                # resampling bond e from its conditional law
                others = mask & ~(1 << e)
                w_open = probs[others | (1 << e)]
                w_closed = probs[others]
                z = w_open + w_closed
                post[others | (1 << e)] += probs[mask] * (w_open / z)
                post[others] += probs[mask] * (w_closed / z)
            assert np.abs(post - probs).max() < 1e-10


class TestFKGOrdering:
    @pytest.mark.parametrize("region", [Rect((2, 2)), Box(1, 2)])
    def test_wired_dominates_free(self, region):
        pr = params(p=0.45, q=2.0)
        dw = exact_distribution(region, pr, "wired")
        df = exact_distribution(region, pr, "free")
        m = dw.graph.n_bonds
        masks = np.arange(1 << m)
        for _ in range(40):
            subset = np.random.default_rng(_).integers(0, 2, m)
            S = int((subset * (1 << np.arange(m))).sum())
            pw = dw.probs[(masks & S) == S].sum()
            pf = df.probs[(masks & S) == S].sum()
            assert pw >= pf - 1e-12


class TestConnectivity:
    def test_self(self):
        cfg = empty_configuration(Box(1, 2), params(), "free")
        assert connected(cfg, (0, 0), (0, 0))

    def test_all_closed(self):
        cfg = empty_configuration(Box(1, 2), params(), "free")
        assert not connected(cfg, (0, 0), (1, 0))

    def test_restricted_path_through_excluded_vertex(self):
        region = Box(1, 1)
        pr = ModelParams(beta=1.0, q=1.0, couplings=nearest_neighbor(1))
        cfg = empty_configuration(region, pr, "free")
        cfg.states[:] = 1  # open line -1 -- 0 -- 1
        assert restricted_connected(cfg, {(-1,), (0,)}, (-1,), (1,))
        assert not restricted_connected(cfg, {(-1,)}, (-1,), (1,))

    def test_restricted_requires_start_in_A(self):
        cfg = empty_configuration(Box(1, 2), params(), "free")
        with pytest.raises(ValueError):
            restricted_connected(cfg, {(1, 0)}, (0, 0), (1, 0))


class TestHeatBathConditionals:
    def test_q1_always_pe(self):
        """At q = 1 the conditional law is Bernoulli(p) regardless of context."""
        pr = params(p=0.37, q=1.0)
        chain = sample_chain(pr, SINGLE_BOND, "free", "heat_bath", 0, 4000, 1, 5)
        vals = np.array([c.states[0] for c in chain])
        assert abs(vals.mean() - 0.37) < 0.03

    def test_single_bond_conditional_third(self):
        pr = params(p=0.5, q=2.0)
        chain = sample_chain(pr, SINGLE_BOND, "free", "heat_bath", 10, 20000, 1, 6)
        vals = np.array([c.states[0] for c in chain])
        assert abs(vals.mean() - 1.0 / 3.0) < 0.02

    def test_connected_off_e_gives_pe(self):
        """On a triangle-like 2x2 box with all other bonds open, the
        conditional for one bond is plain p."""
        region = Rect((2, 2))
        pr = params(p=0.55, q=3.0)
        dist = exact_distribution(region, pr, "free")
        m = dist.graph.n_bonds
        full = (1 << m) - 1
        for e in range(m):
            others = full & ~(1 << e)
            w_open = dist.probs[full]
            w_closed = dist.probs[others]
            assert w_open / (w_open + w_closed) == pytest.approx(0.55)


class TestSamplerAgreement:
    def test_heat_bath_tv_small(self):
        region = Rect((2, 3))
        pr = params(p=0.6, q=2.0)
        dist = exact_distribution(region, pr, "free")
        g = dist.graph
        counts = np.zeros(1 << g.n_bonds, dtype=np.int64)
        cfg = empty_configuration(region, pr, "free")
        indptr, adj_edge, adj_other, lptr, lother = g.adjacency()
        rng = _rng.xoshiro_state(17, 1)
        _kernels.heat_bath_histogram(cfg.states, g.edges[:, 0].copy(),
                                     g.edges[:, 1].copy(), g.p_open, 2.0,
                                     indptr, adj_edge, adj_other, lptr, lother,
                                     100, 150000, 2, rng, counts)
        assert tv_distance(counts / counts.sum(), dist.probs) < 0.02

    def test_sw_tv_small_and_matches_heat_bath(self):
        region = Rect((2, 3))
        pr = params(p=0.6, q=2.0)
        dist = exact_distribution(region, pr, "wired")
        g = dist.graph
        counts = np.zeros(1 << g.n_bonds, dtype=np.int64)
        spins = np.ones(g.n_v, dtype=np.int32)
        fixed = np.zeros(g.n_v, dtype=np.int32)
        fixed[g.n_core] = 1
        rng = _rng.xoshiro_state(18, 2)
        err = _kernels.sw_bond_histogram(spins, fixed, g.edges[:, 0].copy(),
                                         g.edges[:, 1].copy(), g.p_open,
                                         g.links[:, 0].copy(),
                                         g.links[:, 1].copy(), 2,
                                         100, 150000, 2, rng, counts)
        assert err == 0
        assert tv_distance(counts / counts.sum(), dist.probs) < 0.02

    def test_sw_rejects_non_integer_q(self):
        pr = params(p=0.5, q=1.5)
        with pytest.raises(fkmodel.NonIntegerQ):
            list(sample_chain(pr, SINGLE_BOND, "free", "swendsen_wang",
                              0, 1, 1, 0))

    def test_sw_beta_zero_all_closed(self):
        pr = ModelParams(beta=0.0, q=2.0, couplings=NN2)
        chain = sample_chain(pr, Rect((2, 2)), "free", "swendsen_wang",
                             5, 50, 1, 3)
        for c in chain:
            assert not c.states.any()


class TestSampleChain:
    def test_deterministic_streams(self):
        pr = params(p=0.6, q=2.0)
        a = [c.states.tobytes() for c in sample_chain(
            pr, Rect((2, 3)), "wired", "heat_bath", 7, 40, 3, seed=123)]
        b = [c.states.tobytes() for c in sample_chain(
            pr, Rect((2, 3)), "wired", "heat_bath", 7, 40, 3, seed=123)]
        assert a == b

    def test_distinct_streams_differ(self):
        pr = params(p=0.6, q=2.0)
        a = [c.states.tobytes() for c in sample_chain(
            pr, Rect((2, 3)), "free", "heat_bath", 7, 40, 3, seed=123)]
        b = [c.states.tobytes() for c in sample_chain(
            pr, Rect((2, 3)), "free", "heat_bath", 7, 40, 3, seed=124)]
        assert a != b


class TestDumpFormat:
    def test_roundtrip(self):
        pr = params(p=0.6, q=2.0)
        region = Box(2, 2)
        chain = sample_chain(pr, region, "wired", "heat_bath", 5, 3, 2, seed=9)
        for cfg in chain:
            text = fkmodel.dump_configuration(cfg, pr, 9)
            assert text.startswith("fk d=2 N=2 q=2 ")
            back = fkmodel.load_configuration(text, region, pr)
            assert np.array_equal(back.states, cfg.states)
            assert back.bc == "wired"
