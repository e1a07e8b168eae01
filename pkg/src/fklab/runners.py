"""Experiment drivers shared by the command-line interface and the
verification suite.

Each runner wires sampling kernels to estimators: two-point decay studies
(translation-averaged pair counting on boxes, with per-scale source strides
set from a short pilot so the information profile stays balanced across
scales), escape-probability studies, conditioned-cluster decomposition
studies and Dobrushin-interface profile studies.  Every runner is a
deterministic function of its seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels, _rng, analysis, geometry, potts
from .analysis import DecaySeries, EstimateWithCI, series_from_counts
from .clustergeo import (Cluster, decompose, decomposition_anchors,
                         effective_walk, polyline_and_hausdorff,
                         IrreducibleDecomposition, Undecomposable)
from .geometry import TabulatedNorm

# directions covering the first octant; the rest follow by lattice symmetry
OCTANT_DIRECTIONS = ((1, 0), (4, 1), (3, 1), (2, 1), (3, 2), (1, 1))

# per-scale hit targets for decay studies (balanced information profile)
HIT_TARGETS = (5000, 3200, 2200, 1400, 900, 600, 400, 250, 150)


@dataclass
class PairStudy:
    """Two-point study output: one decay series per displacement family."""

    series: dict                      # label -> DecaySeries
    n_sweeps: int
    params: dict = field(default_factory=dict)


def _displacements(axis_scales, ray_radii):
    """Displacement table: on-axis scales plus octant rays.

    Returns (disp array, labels, scale values) where label 'axis' collects
    the on-axis entries and 'ray_a_b' the multiples of each base direction.
    """
    disp = []
    labels = []
    scales = []
    for k in axis_scales:
        disp.append((int(k), 0))
        labels.append("axis")
        scales.append(float(k))
    for (a, b) in OCTANT_DIRECTIONS[1:]:
        base = math.hypot(a, b)
        for m in ray_radii.get((a, b), ()):
            disp.append((a * m, b * m))
            labels.append(f"ray_{a}_{b}")
            scales.append(m * base)
    return (np.array(disp, dtype=np.int64), labels,
            np.array(scales, dtype=float))


def _stride_plan(disp, labels, pilot_hits, pilot_draws, n_pilot, n_configs,
                 axis_targets, ray_target: int = 2000) -> np.ndarray:
    """Per-displacement source strides from pilot frequencies.

    On-axis scales get the tiered hit targets; ray scales share a flat
    target (they feed per-direction rate fits, not free-exponent fits).
    """
    stride = np.ones(len(disp), dtype=np.int64)
    axis_rank = 0
    for j in range(len(disp)):
        if labels[j] == "axis":
            target = axis_targets[min(axis_rank, len(axis_targets) - 1)]
            axis_rank += 1
        else:
            target = ray_target
        if pilot_hits[j] <= 0 or pilot_draws[j] <= 0:
            continue
        g = pilot_hits[j] / pilot_draws[j]
        draws_per_config = pilot_draws[j] / n_pilot
        expected_full = g * draws_per_config * n_configs
        stride[j] = max(1, int(expected_full / target))
    return stride


def run_q1_pair_study(p: float, axis_scales, ray_radii, n_configs: int,
                      seed: int, L1: int = 192, L2: int = 64,
                      margin: int = 8, pilot_fraction: float = 0.02,
                      axis_targets=HIT_TARGETS) -> PairStudy:
    """Independent-bond two-point study; one config = one lattice sweep."""
    disp, labels, scales = _displacements(axis_scales, ray_radii)
    n_pilot = max(2000, int(n_configs * pilot_fraction))
    hits_p = np.zeros(len(disp), dtype=np.int64)
    draws_p = np.zeros(len(disp), dtype=np.int64)
    rng = _rng.xoshiro_state(seed, 0xA1)
    _kernels.q1_pair_study(L1, L2, p, disp, np.ones(len(disp), np.int64),
                           margin, n_pilot, rng, hits_p, draws_p)
    stride = _stride_plan(disp, labels, hits_p, draws_p, n_pilot, n_configs,
                          axis_targets)
    hits = np.zeros(len(disp), dtype=np.int64)
    draws = np.zeros(len(disp), dtype=np.int64)
    rng = _rng.xoshiro_state(seed, 0xA2)
    _kernels.q1_pair_study(L1, L2, p, disp, stride, margin, n_configs, rng,
                           hits, draws)
    return PairStudy(_collect_series(disp, labels, scales, hits, draws),
                     n_configs + n_pilot,
                     {"p": p, "q": 1.0, "L1": L1, "L2": L2, "margin": margin,
                      "stride": stride.tolist()})


def run_sw_pair_study(beta: float, q: int, axis_scales, ray_radii,
                      n_kept: int, seed: int, L1: int = 192, L2: int = 64,
                      margin: int = 8, thinning: int = 2, burn_in: int = 2000,
                      pilot_fraction: float = 0.02,
                      axis_targets=HIT_TARGETS) -> PairStudy:
    """Swendsen-Wang two-point study at integer q."""
    p = -np.expm1(-2.0 * beta)
    disp, labels, scales = _displacements(axis_scales, ray_radii)
    n_pilot = max(2000, int(n_kept * pilot_fraction))
    hits_p = np.zeros(len(disp), dtype=np.int64)
    draws_p = np.zeros(len(disp), dtype=np.int64)
    rng = _rng.xoshiro_state(seed, 0xB1)
    _kernels.sw_pair_study(L1, L2, p, int(q), disp,
                           np.ones(len(disp), np.int64), margin,
                           500, n_pilot, thinning, rng, hits_p, draws_p)
    stride = _stride_plan(disp, labels, hits_p, draws_p, n_pilot, n_kept,
                          axis_targets)
    hits = np.zeros(len(disp), dtype=np.int64)
    draws = np.zeros(len(disp), dtype=np.int64)
    rng = _rng.xoshiro_state(seed, 0xB2)
    _kernels.sw_pair_study(L1, L2, p, int(q), disp, stride, margin,
                           burn_in, n_kept, thinning, rng, hits, draws)
    sweeps = burn_in + n_kept * thinning + 500 + n_pilot * thinning
    return PairStudy(_collect_series(disp, labels, scales, hits, draws),
                     sweeps,
                     {"p": p, "q": q, "beta": beta, "L1": L1, "L2": L2,
                      "margin": margin, "thinning": thinning,
                      "stride": stride.tolist()})


def _collect_series(disp, labels, scales, hits, draws) -> dict:
    series = {}
    for lab in sorted(set(labels)):
        idx = [j for j, L in enumerate(labels) if L == lab]
        idx.sort(key=lambda j: scales[j])
        sc = [scales[j] for j in idx]
        hh = [int(hits[j]) for j in idx]
        nn = [max(int(draws[j]), 1) for j in idx]
        series[lab] = series_from_counts(sc, hh, nn, label=lab)
    return series


def merge_studies(studies) -> PairStudy:
    """Pool several pair studies (independent chains) by summing counts."""
    studies = list(studies)
    merged = {}
    for lab in studies[0].series:
        scales = studies[0].series[lab].scales
        hits = np.zeros(len(scales), dtype=np.int64)
        draws = np.zeros(len(scales), dtype=np.int64)
        for st in studies:
            s = st.series[lab]
            if len(s.scales) != len(scales) or np.any(s.scales != scales):
                raise ValueError("chains measured different scales")
            for i, e in enumerate(s.estimates):
                hits[i] += round(e.value * e.n)
                draws[i] += e.n
        merged[lab] = series_from_counts(scales, hits, draws, label=lab)
    return PairStudy(merged, sum(st.n_sweeps for st in studies),
                     dict(studies[0].params))


# ---------------------------------------------------------------------------
# directional norms and curvature
# ---------------------------------------------------------------------------


def directional_norm_from_study(study: PairStudy, d: int = 2,
                                sigma_floor: float = 0.0):
    """Tabulated norm from per-direction decay fits, extended by the square
    lattice symmetries; returns (norm, {direction: EstimateWithCI}).
    """
    estimates = {}
    for (a, b) in OCTANT_DIRECTIONS:
        lab = "axis" if (a, b) == (1, 0) else f"ray_{a}_{b}"
        if lab not in study.series:
            continue
        xi, _ = analysis.fit_inverse_correlation_length(
            study.series[lab], d, sigma_floor=sigma_floor)
        estimates[(a, b)] = xi
    dirs = []
    vals = []
    for (a, b), e in estimates.items():
        base = math.hypot(a, b)
        images = {(a, b), (-a, -b), (a, -b), (-a, b),
                  (b, a), (-b, -a), (b, -a), (-b, a)}
        for (ia, ib) in images:
            dirs.append((ia / base, ib / base))
            vals.append((e.value, e.lo, e.hi))
    rel = max((hi - lo) / (2 * v) for v, lo, hi in vals)
    angles = [math.atan2(uy, ux) for ux, uy in dirs]
    norm = TabulatedNorm(angles, [v for v, _, _ in vals], rel_tolerance=rel)
    return norm, estimates


def wulff_curvature_at_axis(norm: TabulatedNorm, resolution: int = 1024):
    """Curvature of the estimated Wulff shape at the point dual to e1."""
    K = geometry.wulff_shape(norm, resolution)
    t = geometry.dual_vector(np.array([1.0, 0.0]), norm, K)
    chi, positive = geometry.boundary_curvature(K, t)
    return K, t, chi, positive


# ---------------------------------------------------------------------------
# escape studies
# ---------------------------------------------------------------------------


def run_exit_study(p: float, box_sizes, n_samples: int, seed: int,
                   window_half: int = None) -> tuple:
    """Free-growth exit counts and wired-ring counts per box size.

    Returns (free_entries, wired_entries) as (N, hits, n) triples feeding
    :func:`fklab.analysis.exit_decay`.
    """
    if window_half is None:
        window_half = max(box_sizes) + 40
    free = []
    wired = []
    for i, N in enumerate(sorted(box_sizes)):
        rng = _rng.xoshiro_state(seed, (0xE0 << 32) | i)
        h = _kernels.exit_hits(p, n_samples, int(N), window_half, rng)
        free.append((int(N), int(h), n_samples))
        rng = _rng.xoshiro_state(seed, (0xE1 << 32) | i)
        hw = _kernels.wired_ring_hits(p, n_samples, int(N), rng)
        wired.append((int(N), int(hw), n_samples))
    return free, wired


# ---------------------------------------------------------------------------
# conditioned-cluster decomposition studies
# ---------------------------------------------------------------------------


@dataclass
class DecompositionStudy:
    """Aggregates over conditioned clusters at several target distances."""

    targets: list                      # (x, y) per family
    cone_records: list                 # (|x|, cone point count)
    steps: np.ndarray                  # pooled effective-walk displacements
    hausdorff: dict                    # |x| -> array of d_H values
    n_decomposable: int = 0
    n_undecomposable: int = 0
    reassembly_failures: int = 0
    acceptance: dict = field(default_factory=dict)


def run_conditioned_study(p: float, targets, n_per_target: int, delta: float,
                          norm, seed: int, max_rejects: int = 10 ** 7,
                          samples_per_seg: int = 8) -> DecompositionStudy:
    """Sample clusters conditioned on 0 <-> x and decompose every one."""
    from .fkmodel import ModelParams
    from .lattice import nearest_neighbor

    params = ModelParams(beta=-0.5 * math.log1p(-p), q=1.0,
                         couplings=nearest_neighbor(2))
    study = DecompositionStudy(list(targets), [], None, {})
    steps = []
    for fam, x in enumerate(targets):
        dist = math.hypot(*x)
        t = np.array([norm((1.0, 0.0)), 0.0]) if x[1] == 0 else None
        if t is None:
            t = np.asarray(geometry.dual_vector(np.asarray(x, float), norm),
                           dtype=float)
        dh = []
        for C in analysis.conditioned_cluster_sampler(
                params, x, max_rejects, seed, n_per_target, stream=fam):
            dec = decompose(C, t, delta, norm, method="scan", verify=False)
            if isinstance(dec, Undecomposable):
                study.n_undecomposable += 1
                study.cone_records.append((dist, dec.count))
                continue
            try:
                _verify_light(C, dec)
            except Exception:
                study.reassembly_failures += 1
                continue
            study.n_decomposable += 1
            study.cone_records.append((dist, dec.n_pieces + 1))
            w = effective_walk(dec)
            steps.append(w.steps)
            anchors = decomposition_anchors(C, dec)
            _, d = polyline_and_hausdorff(C, anchors,
                                          samples_per_seg=samples_per_seg)
            dh.append(d)
        study.hausdorff[dist] = np.array(dh)
    study.steps = np.vstack(steps) if steps else np.empty((0, 2))
    return study


def _verify_light(C: Cluster, dec: IrreducibleDecomposition) -> None:
    """Reassembly check: piece vertices and edges tile the cluster exactly."""
    all_pieces = [dec.backward] + dec.pieces + [dec.forward]
    total = sum(len(p.vertices) for p in all_pieces)
    if total != C.n + len(all_pieces) - 1:
        raise ValueError("vertex reassembly failed")
    cover = set()
    for p in all_pieces:
        cover.update(map(tuple, p.vertices))
    if len(cover) != C.n:
        raise ValueError("vertex cover failed")
    edge_count = sum(len(p.edges) for p in all_pieces)
    if edge_count != len(C.edges):
        raise ValueError("edge reassembly failed")


# ---------------------------------------------------------------------------
# Dobrushin interface studies
# ---------------------------------------------------------------------------


@dataclass
class InterfaceStudy:
    N: int
    profiles: list                    # InterfaceProfile per sample
    edge_counts: np.ndarray
    n_sweeps: int


def run_interface_study(N: int, beta: float, q: int, n_profiles: int,
                        m: int, seed: int, norm=None, t=None,
                        delta: float = 0.25, thinning: int = 5,
                        burn_in: int = 500, stream: int = 0) -> InterfaceStudy:
    """Sample Dobrushin-boundary Potts interfaces and profile them."""
    bc = potts.DobrushinBC((0.0, 1.0))
    profiles = []
    counts = []
    chain = potts.es_sample(N, beta, int(q), bc, n_profiles, seed,
                            burn_in=burn_in, thinning=thinning,
                            stream=(0x1F << 16) | (stream << 8) | N % 256)
    for sigma in chain:
        sites = potts.extract_interface(sigma)
        prof = potts.interface_profile(sites, N, m, norm=norm, t=t,
                                       delta=delta)
        profiles.append(prof)
        counts.append(len(sites))
    return InterfaceStudy(N, profiles, np.array(counts),
                          burn_in + n_profiles * thinning)
