"""Finite-volume random-cluster measures and samplers.

The measure on a finite region with bond set E is

    P(omega) ~ prod_e p_e^omega(e) (1-p_e)^(1-omega(e)) * q^(#clusters)

with p_e = 1 - exp(-2 beta J_e) and clusters counted among those
intersecting the region.  Wired boundary conditions are realized by a
virtual exterior vertex pre-linked (always-open) to every vertex having a
coupling offset that leaves the region; this merges all boundary-touching
clusters into one, matching the eta == 1 convention.

Three routes to samples are provided and cross-validated: exact enumeration
(the correctness oracle, <= 24 bonds), single-bond heat-bath dynamics (any
real q >= 1) and Swendsen-Wang through the spin coupling (integer q).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from . import _kernels, _rng
from .lattice import Box, CouplingField, boundary_ring, edge_set

WIRED = "wired"
FREE = "free"

# stream tags for the documented seed splitting
STREAM_CHAIN = 0x11
STREAM_GROWTH = 0x22
STREAM_POTTS = 0x33


class TooManyBonds(Exception):
    """Exact enumeration requested beyond the 2^24 configuration cap."""


class NonIntegerQ(Exception):
    """Swendsen-Wang requires integer cluster weight."""


@dataclass(frozen=True)
class ModelParams:
    """Inverse temperature, cluster weight and coupling field."""

    beta: float
    q: float
    couplings: CouplingField

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.q < 1:
            raise ValueError("q must be >= 1 (FKG regime)")

    def bond_probability(self, J: float) -> float:
        return bond_probability(J, self.beta)


def bond_probability(J: float, beta: float) -> float:
    """Opening probability p_e = 1 - exp(-2 beta J_e)."""
    if J < 0 or beta < 0:
        raise ValueError("J and beta must be >= 0")
    return -np.expm1(-2.0 * beta * J)


@dataclass
class BondGraph:
    """Flattened sampling graph: indexed bonds, probabilities, wiring links."""

    vertices: list
    bonds: list
    edges: np.ndarray       # (m, 2) int32
    p_open: np.ndarray      # (m,) float64
    links: np.ndarray       # (k, 2) int32 always-open edges
    n_core: int             # vertices whose clusters are counted
    n_v: int                # total vertices incl. virtual exterior
    index: dict = field(repr=False, default_factory=dict)

    @property
    def n_bonds(self) -> int:
        return len(self.bonds)

    def adjacency(self):
        """CSR adjacency (incident bond, other endpoint) plus link CSR."""
        if not hasattr(self, "_adj"):
            m = len(self.edges)
            deg = np.zeros(self.n_v + 1, dtype=np.int64)
            for u, v in self.edges:
                deg[u + 1] += 1
                deg[v + 1] += 1
            indptr = np.cumsum(deg)
            adj_edge = np.empty(2 * m, dtype=np.int32)
            adj_other = np.empty(2 * m, dtype=np.int32)
            fill = indptr[:-1].copy()
            for e, (u, v) in enumerate(self.edges):
                adj_edge[fill[u]] = e
                adj_other[fill[u]] = v
                fill[u] += 1
                adj_edge[fill[v]] = e
                adj_other[fill[v]] = u
                fill[v] += 1
            ldeg = np.zeros(self.n_v + 1, dtype=np.int64)
            for u, v in self.links:
                ldeg[u + 1] += 1
                ldeg[v + 1] += 1
            lptr = np.cumsum(ldeg)
            lother = np.empty(2 * len(self.links), dtype=np.int32)
            lfill = lptr[:-1].copy()
            for u, v in self.links:
                lother[lfill[u]] = v
                lfill[u] += 1
                lother[lfill[v]] = u
                lfill[v] += 1
            self._adj = (indptr, adj_edge, adj_other, lptr, lother)
        return self._adj


def build_graph(region, params: ModelParams, bc: str) -> BondGraph:
    """Assemble the sampling graph of a region under the given bc."""
    if bc not in (WIRED, FREE):
        raise ValueError(f"unknown boundary condition {bc!r}")
    verts = region.vertices()
    index = {v: i for i, v in enumerate(verts)}
    bonds = edge_set(region, params.couplings)
    edges = np.empty((len(bonds), 2), dtype=np.int32)
    p_open = np.empty(len(bonds), dtype=np.float64)
    for e, (x, y) in enumerate(bonds):
        edges[e, 0] = index[x]
        edges[e, 1] = index[y]
        off = tuple(b - a for a, b in zip(x, y))
        p_open[e] = bond_probability(params.couplings.weight(off), params.beta)
    n_core = len(verts)
    if bc == WIRED:
        ext = n_core
        ring = boundary_ring(region, params.couplings)
        links = np.array([[index[v], ext] for v in ring], dtype=np.int32)
        links = links.reshape(-1, 2)
        n_v = n_core + 1
    else:
        links = np.empty((0, 2), dtype=np.int32)
        n_v = n_core
    return BondGraph(verts, bonds, edges, p_open, links, n_core, n_v, index)


@dataclass
class BondConfiguration:
    """Open/closed state of every bond of a region, in canonical bond order."""

    box: object
    states: np.ndarray
    bc: str
    graph: BondGraph = field(repr=False, default=None)

    def __post_init__(self):
        self.states = np.ascontiguousarray(self.states, dtype=np.uint8)
        if self.graph is not None and len(self.states) != self.graph.n_bonds:
            raise ValueError("bit-vector length != number of bonds")

    def copy(self) -> "BondConfiguration":
        return BondConfiguration(self.box, self.states.copy(), self.bc, self.graph)

    def open_bonds(self) -> list:
        return [b for b, s in zip(self.graph.bonds, self.states) if s]


def empty_configuration(region, params: ModelParams, bc: str) -> BondConfiguration:
    graph = build_graph(region, params, bc)
    return BondConfiguration(region, np.zeros(graph.n_bonds, dtype=np.uint8), bc, graph)


@dataclass
class ClusterLabeling:
    """Cluster identifier per vertex; count = clusters intersecting the region."""

    labels: dict
    count: int
    exterior_label: Optional[int] = None

    def same_cluster(self, x, y) -> bool:
        return self.labels[x] == self.labels[y]


def cluster_labeling(config: BondConfiguration) -> ClusterLabeling:
    """Union-find labeling; wired bc links the boundary ring to the exterior."""
    g = config.graph
    labels = _kernels.label_clusters(
        g.n_v, g.edges[:, 0].copy(), g.edges[:, 1].copy(), config.states,
        g.links[:, 0].copy(), g.links[:, 1].copy())
    count = len({int(labels[i]) for i in range(g.n_core)})
    ext = int(labels[g.n_core]) if g.n_v > g.n_core else None
    return ClusterLabeling({v: int(labels[i]) for i, v in enumerate(g.vertices)},
                           count, ext)


def config_weight(config: BondConfiguration, params: ModelParams) -> float:
    """Unnormalized measure weight of one configuration."""
    g = config.graph
    w = 1.0
    for e in range(g.n_bonds):
        p = g.p_open[e]
        w *= p if config.states[e] else 1.0 - p
    return w * params.q ** cluster_labeling(config).count


@dataclass
class ExactDistribution:
    """Normalized probability table over all 2^m bond configurations."""

    graph: BondGraph
    probs: np.ndarray

    def probability(self, states) -> float:
        mask = 0
        for e, s in enumerate(states):
            if s:
                mask |= 1 << e
        return float(self.probs[mask])

    def marginal_open(self, e: int) -> float:
        masks = np.arange(len(self.probs))
        return float(self.probs[(masks >> e) & 1 == 1].sum())

    def all_open_probability(self, bond_subset) -> float:
        mask = 0
        for e in bond_subset:
            mask |= 1 << e
        masks = np.arange(len(self.probs))
        return float(self.probs[(masks & mask) == mask].sum())


def exact_distribution(region, params: ModelParams, bc: str) -> ExactDistribution:
    """Brute-force oracle for the finite-volume measure (<= 24 bonds)."""
    graph = build_graph(region, params, bc)
    return exact_distribution_graph(graph, params.q)


def exact_distribution_graph(graph: BondGraph, q: float) -> ExactDistribution:
    if graph.n_bonds > 24:
        raise TooManyBonds(f"{graph.n_bonds} bonds exceeds the 2^24 cap")
    w = _kernels.enumerate_weights(
        graph.n_core, graph.n_v,
        graph.edges[:, 0].copy(), graph.edges[:, 1].copy(),
        graph.p_open, float(q),
        graph.links[:, 0].copy(), graph.links[:, 1].copy())
    total = w.sum()
    return ExactDistribution(graph, w / total)


def tv_distance(p: np.ndarray, q: np.ndarray) -> float:
    """Total-variation distance between two probability tables."""
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


# ---------------------------------------------------------------------------
# connectivity
# ---------------------------------------------------------------------------


def _open_adjacency(config: BondConfiguration) -> dict:
    adj = {v: [] for v in config.graph.vertices}
    for b, s in zip(config.graph.bonds, config.states):
        if s:
            adj[b[0]].append(b[1])
            adj[b[1]].append(b[0])
    return adj


def connected(config: BondConfiguration, x, y) -> bool:
    """Open connectivity x <-> y inside the region (bc links not used)."""
    if x == y:
        return True
    adj = _open_adjacency(config)
    seen = {x}
    stack = [x]
    while stack:
        w = stack.pop()
        for o in adj[w]:
            if o == y:
                return True
            if o not in seen:
                seen.add(o)
                stack.append(o)
    return False


def restricted_connected(config: BondConfiguration, A, x, y) -> bool:
    """Open path x -> y whose vertices, except possibly y, all lie in A."""
    A = set(A)
    if x not in A:
        raise ValueError("x must belong to A")
    if x == y:
        return True
    adj = _open_adjacency(config)
    seen = {x}
    stack = [x]
    while stack:
        w = stack.pop()
        for o in adj[w]:
            if o == y:
                return True
            if o in A and o not in seen:
                seen.add(o)
                stack.append(o)
    return False


# ---------------------------------------------------------------------------
# samplers
# ---------------------------------------------------------------------------


def heat_bath_sweep(config: BondConfiguration, params: ModelParams,
                    rng_state: np.ndarray) -> BondConfiguration:
    """One deterministic-order sweep of exact single-bond conditional updates.

    ``rng_state`` is a xoshiro256** state (mutated in place), e.g. from
    :func:`fklab._rng.xoshiro_state`.
    """
    out = config.copy()
    g = config.graph
    indptr, adj_edge, adj_other, lptr, lother = g.adjacency()
    _kernels.heat_bath_run(out.states, g.edges[:, 0].copy(), g.edges[:, 1].copy(),
                           g.p_open, float(params.q),
                           indptr, adj_edge, adj_other, lptr, lother,
                           1, rng_state)
    return out


@dataclass
class SWState:
    """Joint spin/bond state of the Swendsen-Wang chain."""

    spins: np.ndarray
    config: BondConfiguration


def swendsen_wang_step(state: SWState, params: ModelParams,
                       rng_state: np.ndarray) -> SWState:
    """One bonds-given-spins / spins-given-bonds alternation (integer q)."""
    q = params.q
    if q != int(q):
        raise NonIntegerQ(f"q = {q} is not an integer")
    g = state.config.graph
    spins = state.spins.copy()
    bond = np.zeros(g.n_bonds, dtype=np.uint8)
    fixed = np.zeros(g.n_v, dtype=np.int32)
    if g.n_v > g.n_core:
        fixed[g.n_core] = 1  # wired exterior carries color 1
    parent = np.empty(g.n_v, dtype=np.int32)
    root_color = np.empty(g.n_v, dtype=np.int32)
    err = _kernels.sw_step(spins, fixed,
                           g.edges[:, 0].copy(), g.edges[:, 1].copy(),
                           g.p_open, bond,
                           g.links[:, 0].copy(), g.links[:, 1].copy(),
                           int(q), parent, root_color, rng_state)
    if err:
        raise RuntimeError("cluster touched two distinct fixed colors")
    return SWState(spins, BondConfiguration(state.config.box, bond,
                                            state.config.bc, g))


def initial_sw_state(region, params: ModelParams, bc: str) -> SWState:
    g = build_graph(region, params, bc)
    spins = np.ones(g.n_v, dtype=np.int32)
    return SWState(spins, BondConfiguration(region, np.zeros(g.n_bonds, np.uint8), bc, g))


def sample_chain(params: ModelParams, region, bc: str, sampler: str,
                 burn_in: int, n_samples: int, thinning: int,
                 seed: int, stream: int = 0) -> Iterator[BondConfiguration]:
    """Deterministic sample stream; one xoshiro stream per (seed, stream).

    Emits ``n_samples`` configurations after ``burn_in`` sweeps, one every
    ``thinning`` sweeps (thinning 0 re-emits the current state).
    """
    if burn_in < 0 or thinning < 0:
        raise ValueError("burn_in and thinning must be >= 0")
    rng = _rng.xoshiro_state(seed, (STREAM_CHAIN << 32) | stream)
    if sampler == "heat_bath":
        config = empty_configuration(region, params, bc)
        g = config.graph
        indptr, adj_edge, adj_other, lptr, lother = g.adjacency()
        eu = g.edges[:, 0].copy()
        ev = g.edges[:, 1].copy()

        def advance(n):
            _kernels.heat_bath_run(config.states, eu, ev, g.p_open,
                                   float(params.q), indptr, adj_edge,
                                   adj_other, lptr, lother, n, rng)

        advance(burn_in)
        for _ in range(n_samples):
            advance(thinning)
            yield config.copy()
    elif sampler == "swendsen_wang":
        if params.q != int(params.q):
            raise NonIntegerQ(f"q = {params.q} is not an integer")
        state = initial_sw_state(region, params, bc)
        g = state.config.graph
        fixed = np.zeros(g.n_v, dtype=np.int32)
        if g.n_v > g.n_core:
            fixed[g.n_core] = 1
        bond = np.zeros(g.n_bonds, dtype=np.uint8)
        parent = np.empty(g.n_v, dtype=np.int32)
        root_color = np.empty(g.n_v, dtype=np.int32)
        eu = g.edges[:, 0].copy()
        ev = g.edges[:, 1].copy()
        lu = g.links[:, 0].copy()
        lv = g.links[:, 1].copy()

        def advance(n):
            err = _kernels.sw_run(state.spins, fixed, eu, ev, g.p_open, bond,
                                  lu, lv, int(params.q), parent, root_color,
                                  n, rng)
            if err:
                raise RuntimeError("cluster touched two distinct fixed colors")

        advance(burn_in)
        for _ in range(n_samples):
            advance(thinning)
            yield BondConfiguration(region, bond.copy(), bc, g)
    else:
        raise ValueError(f"unknown sampler {sampler!r}")


# ---------------------------------------------------------------------------
# configuration dumps
# ---------------------------------------------------------------------------


def dump_configuration(config: BondConfiguration, params: ModelParams,
                       seed: int) -> str:
    """Header line plus the bond bit-vector as hex text.

    Bits are packed LSB-first into bytes (bit i of the vector = bond i of
    the canonical edge set = bit i%8 of byte i//8), bytes hex-encoded.
    """
    box = config.box
    N = getattr(box, "N", None)
    d = getattr(box, "d", 2)
    hexbits = np.packbits(config.states, bitorder="little").tobytes().hex()
    header = (f"fk d={d} N={N} q={params.q:g} beta={params.beta:.17g} "
              f"bc={config.bc} seed={seed}")
    return header + "\n" + hexbits + "\n"


def load_configuration(text: str, region, params: ModelParams) -> BondConfiguration:
    """Parse a dump produced by :func:`dump_configuration`."""
    lines = text.strip().split("\n")
    fields = dict(kv.split("=", 1) for kv in lines[0].split()[1:])
    bc = fields["bc"]
    graph = build_graph(region, params, bc)
    raw = np.frombuffer(bytes.fromhex(lines[1]), dtype=np.uint8)
    bits = np.unpackbits(raw, bitorder="little")[:graph.n_bonds]
    return BondConfiguration(region, bits, bc, graph)
