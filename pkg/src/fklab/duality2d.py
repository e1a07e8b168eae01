"""Planar nearest-neighbor duality: configuration map, parameter map, self-dual point.

The dual of a finite primal box under free boundary conditions is the
random-cluster measure on the collapsed dual graph: interior dual sites
(x + 1/2, y + 1/2) plus a single exterior vertex standing for the entire
identified outer face, with one dual bond crossing each primal bond and
cluster counting merging everything attached to the exterior.  This is the
standard free <-> wired correspondence; the exterior collapse realizes the
wired side exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fkmodel
from .fkmodel import BondConfiguration, BondGraph, ModelParams


class UnsupportedModel(Exception):
    """Duality implemented for d = 2 nearest-neighbor models only."""


class DegenerateP(Exception):
    """Dual parameter undefined at p = 0 or p = 1."""


EXT = ("ext",)


def _require_nn2d(couplings) -> None:
    if couplings.dimension != 2:
        raise UnsupportedModel("duality requires d = 2")
    offs = set(couplings.offsets())
    if offs != {(1, 0), (-1, 0), (0, 1), (0, -1)}:
        raise UnsupportedModel("duality requires nearest-neighbor couplings")


def dual_parameter(p: float, q: float) -> float:
    """Solve p*/(1-p*) = q(1-p)/p."""
    if not 0.0 < p < 1.0:
        raise DegenerateP(f"p = {p}")
    return q * (1.0 - p) / (p + q * (1.0 - p))


def dual_beta(beta: float, q: float) -> float:
    """beta* with 1 - exp(-2 beta*) equal to the dual of 1 - exp(-2 beta)."""
    p = -np.expm1(-2.0 * beta)
    ps = dual_parameter(p, q)
    return -0.5 * np.log1p(-ps)


def self_dual_point(q: float, tol: float = 1e-12) -> float:
    """The unique fixed point of the dual-parameter map, by bisection.

    Closed form sqrt(q) / (1 + sqrt(q)) serves as an independent check.
    """
    lo, hi = 1e-15, 1.0 - 1e-15
    # f is decreasing in p minus increasing p: g(p) = dual(p) - p decreasing
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if dual_parameter(mid, q) - mid > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


@dataclass
class DualMap:
    """Primal bond index -> dual bond index, plus the dual sampling graph."""

    primal_graph: BondGraph
    dual_graph: BondGraph
    perm: np.ndarray  # perm[e] = index of the dual bond crossing primal bond e


def _dual_site(x: float, y: float):
    # store half-integer coordinates exactly
    return (x + 0.5, y + 0.5)


def dual_map(region, params: ModelParams) -> DualMap:
    """Build the collapsed dual graph of a primal region under free bc."""
    _require_nn2d(params.couplings)
    pgraph = fkmodel.build_graph(region, params, fkmodel.FREE)
    p = fkmodel.bond_probability(1.0, params.beta) if False else None
    dual_bonds = []
    for (a, b) in pgraph.bonds:
        (x0, y0), (x1, y1) = a, b
        if x1 == x0 + 1 and y1 == y0:      # horizontal primal bond
            s0 = _dual_site(x0, y0 - 1)
            s1 = _dual_site(x0, y0)
        elif x1 == x0 and y1 == y0 + 1:    # vertical primal bond
            s0 = _dual_site(x0 - 1, y0)
            s1 = _dual_site(x0, y0)
        else:
            raise UnsupportedModel(f"non-nearest-neighbor bond {a}-{b}")
        s0 = s0 if _interior_dual_site(s0, region) else EXT
        s1 = s1 if _interior_dual_site(s1, region) else EXT
        dual_bonds.append((s0, s1))
    def site_key(s):
        return (1,) if s == EXT else (0,) + s

    sites = sorted({s for bond in dual_bonds for s in bond if s != EXT})
    verts = sites + [EXT]
    index = {v: i for i, v in enumerate(verts)}
    m = len(dual_bonds)
    edges = np.empty((m, 2), dtype=np.int32)
    # dual bonds in primal-bond order; the canonical dual order is obtained
    # by sorting, recorded through perm
    def bond_key(e):
        return tuple(sorted((site_key(dual_bonds[e][0]),
                             site_key(dual_bonds[e][1]))))

    order = sorted(range(m), key=bond_key)
    perm = np.empty(m, dtype=np.int64)
    for rank, e in enumerate(order):
        perm[e] = rank
    p_open = np.empty(m, dtype=np.float64)
    bonds_sorted = []
    for rank, e in enumerate(order):
        s0, s1 = dual_bonds[e]
        i0, i1 = index[s0], index[s1]
        edges[rank, 0] = min(i0, i1)
        edges[rank, 1] = max(i0, i1)
        p_open[rank] = dual_parameter(float(pgraph.p_open[e]), params.q)
        bonds_sorted.append(tuple(sorted((s0, s1), key=site_key)))
    links = np.empty((0, 2), dtype=np.int32)
    dgraph = BondGraph(verts, bonds_sorted, edges, p_open, links,
                       n_core=len(verts), n_v=len(verts), index=index)
    return DualMap(pgraph, dgraph, perm)


def _interior_dual_site(s, region) -> bool:
    x, y = s
    corners = [(int(np.floor(x)), int(np.floor(y))),
               (int(np.ceil(x)), int(np.floor(y))),
               (int(np.floor(x)), int(np.ceil(y))),
               (int(np.ceil(x)), int(np.ceil(y)))]
    return all(c in region for c in corners)


def dual_config(config: BondConfiguration, params: ModelParams,
                dmap: DualMap = None) -> BondConfiguration:
    """Map omega -> omega*: dual bond open iff the crossed primal bond closed."""
    if config.bc != fkmodel.FREE:
        raise UnsupportedModel("dual_config maps free-bc configurations")
    if dmap is None:
        dmap = dual_map(config.box, params)
    states = np.empty(dmap.dual_graph.n_bonds, dtype=np.uint8)
    for e in range(len(states)):
        states[dmap.perm[e]] = 1 - config.states[e]
    return BondConfiguration(None, states, fkmodel.WIRED, dmap.dual_graph)


def primal_config(dual: BondConfiguration, region, params: ModelParams,
                  dmap: DualMap = None) -> BondConfiguration:
    """Inverse of :func:`dual_config`; the two compose to the identity."""
    if dmap is None:
        dmap = dual_map(region, params)
    states = np.empty(dmap.primal_graph.n_bonds, dtype=np.uint8)
    for e in range(len(states)):
        states[e] = 1 - dual.states[dmap.perm[e]]
    return BondConfiguration(region, states, fkmodel.FREE, dmap.primal_graph)


def dual_pushforward_table(region, params: ModelParams):
    """Exact primal free table pushed through the dual map, and the exact
    dual table at the dual parameter, for measure-level comparison.

    Returns (pushforward, dual_exact) as probability arrays over dual
    configuration bitmasks.
    """
    dmap = dual_map(region, params)
    primal = fkmodel.exact_distribution_graph(dmap.primal_graph, params.q)
    m = dmap.primal_graph.n_bonds
    push = np.zeros(1 << m, dtype=np.float64)
    full = (1 << m) - 1
    for mask in range(1 << m):
        dual_mask = 0
        inv = (~mask) & full
        for e in range(m):
            if (inv >> e) & 1:
                dual_mask |= 1 << int(dmap.perm[e])
        push[dual_mask] += primal.probs[mask]
    dual_exact = fkmodel.exact_distribution_graph(dmap.dual_graph, params.q)
    return push, dual_exact.probs
