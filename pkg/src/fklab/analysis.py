"""Statistical estimators turning samples into decay rates, exponents and
bridge statistics.

Estimators are deterministic functions of their input samples; confidence
intervals are 95% throughout (Wilson for frequencies, normal-theory for
regression coefficients and means).  Weighted fits take their per-point
errors from the frequency intervals; an optional per-point systematic
floor can be added in quadrature where an asymptotic model is being fit at
moderate distances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from . import _kernels, _rng
from .clustergeo import Cluster
from .fkmodel import ModelParams, cluster_labeling, sample_chain

Z95 = 1.959963984540054


class InsufficientDecades(Exception):
    """Too few usable scales for a decay fit."""


class IllConditioned(Exception):
    """Scales span too small a factor for a free-exponent fit."""


class TooFewSteps(Exception):
    """Step-tail fit needs at least 1000 pooled steps."""


class GridMismatch(Exception):
    """Interface profiles disagree on their parameter grid."""


class AcceptanceTooLow(Exception):
    """Rejection sampler exhausted its attempt budget."""


@dataclass
class EstimateWithCI:
    value: float
    lo: float
    hi: float
    n: int = 0
    method: str = ""

    def __post_init__(self):
        if not (self.lo <= self.value <= self.hi):
            raise ValueError("CI must bracket the estimate")

    @property
    def half_width(self) -> float:
        return 0.5 * (self.hi - self.lo)

    def covers(self, x: float) -> bool:
        return self.lo <= x <= self.hi

    def overlaps(self, other: "EstimateWithCI") -> bool:
        """Joint 95% consistency via the difference z-test."""
        se_a = self.half_width / Z95
        se_b = other.half_width / Z95
        se = math.hypot(se_a, se_b)
        if se == 0:
            return self.value == other.value
        return abs(self.value - other.value) <= Z95 * se


def wilson_interval(hits: int, n: int) -> EstimateWithCI:
    """Wilson 95% interval for a binomial frequency."""
    if n <= 0:
        raise ValueError("need at least one trial")
    phat = hits / n
    z2 = Z95 * Z95
    denom = 1 + z2 / n
    center = (phat + z2 / (2 * n)) / denom
    half = Z95 * math.sqrt(phat * (1 - phat) / n + z2 / (4 * n * n)) / denom
    return EstimateWithCI(phat, max(center - half, 0.0),
                          min(center + half, 1.0), n, "wilson")


@dataclass
class DecaySeries:
    """(scale, estimate) pairs for one direction or box family."""

    scales: np.ndarray
    estimates: list                      # EstimateWithCI per scale
    label: str = ""

    def __post_init__(self):
        self.scales = np.asarray(self.scales, dtype=float)
        if np.any(np.diff(self.scales) <= 0):
            raise ValueError("scales must be strictly increasing")

    def usable(self, min_hits: float = 1.0):
        """Scales with a positive estimate resolvable on the log scale."""
        keep = [i for i, e in enumerate(self.estimates)
                if e.value > 0 and e.lo > 0 and e.value * e.n >= min_hits]
        return keep

    def to_csv(self, quantity: str = "decay") -> str:
        lines = ["quantity,scale,estimate,lo,hi,n"]
        for s, e in zip(self.scales, self.estimates):
            lines.append(f"{quantity},{s:.17g},{e.value:.17g},"
                         f"{e.lo:.17g},{e.hi:.17g},{e.n}")
        return "\n".join(lines) + "\n"


def series_from_counts(scales, hits, totals, label: str = "") -> DecaySeries:
    ests = [wilson_interval(int(h), int(n)) for h, n in zip(hits, totals)]
    return DecaySeries(np.asarray(scales, float), ests, label)


def _log_sigma(e: EstimateWithCI) -> float:
    """Symmetrized standard error of log(estimate) from the Wilson CI."""
    if e.value <= 0 or e.lo <= 0:
        return math.inf
    return (math.log(e.hi) - math.log(e.lo)) / (2 * Z95)


def _wls(X: np.ndarray, y: np.ndarray, sigma: np.ndarray):
    W = 1.0 / sigma ** 2
    A = X * W[:, None]
    cov = np.linalg.inv(X.T @ A)
    coef = cov @ (A.T @ y)
    resid = y - X @ coef
    chi2 = float(np.sum(W * resid ** 2))
    return coef, cov, chi2


def fit_inverse_correlation_length(series: DecaySeries, d: int,
                                   sigma_floor: float = 0.0):
    """Decay-rate fit log p = c - xi*s - ((d-1)/2) log s, weighted.

    Returns (xi_hat: EstimateWithCI, naive: np.ndarray) where naive is the
    uncorrected -log p / s sequence kept for diagnostics.
    """
    keep = series.usable()
    if len(keep) < 4:
        raise InsufficientDecades(f"only {len(keep)} usable scales")
    s = series.scales[keep]
    p = np.array([series.estimates[i].value for i in keep])
    sig = np.array([math.hypot(_log_sigma(series.estimates[i]), sigma_floor)
                    for i in keep])
    y = np.log(p) + 0.5 * (d - 1) * np.log(s)
    X = np.column_stack([np.ones_like(s), -s])
    coef, cov, chi2 = _wls(X, y, sig)
    xi = coef[1]
    se = math.sqrt(cov[1, 1])
    naive = -np.log(p) / s
    n_tot = sum(series.estimates[i].n for i in keep)
    return (EstimateWithCI(xi, xi - Z95 * se, xi + Z95 * se, n_tot,
                           "wls-oz-corrected"), naive)


@dataclass
class OZFit:
    xi: EstimateWithCI
    alpha: EstimateWithCI
    log_psi: EstimateWithCI
    chi2_dof: float
    scales_used: np.ndarray
    alpha_covers_expected: bool = False


def oz_exponent_fit(series: DecaySeries, d: int,
                    sigma_floor: float = 0.0) -> OZFit:
    """Three-parameter fit log p = log Psi - xi*s - alpha*log s.

    Requires at least six usable scales spanning a factor of four; reports
    whether (d-1)/2 lies in the free exponent's confidence interval.
    """
    keep = series.usable()
    if len(keep) < 6:
        raise IllConditioned(f"only {len(keep)} usable scales (need 6)")
    s = series.scales[keep]
    if s.max() / s.min() < 4.0 - 1e-9:
        raise IllConditioned(
            f"scales span factor {s.max() / s.min():.2f} < 4")
    p = np.array([series.estimates[i].value for i in keep])
    sig = np.array([math.hypot(_log_sigma(series.estimates[i]), sigma_floor)
                    for i in keep])
    y = np.log(p)
    X = np.column_stack([np.ones_like(s), -s, -np.log(s)])
    coef, cov, chi2 = _wls(X, y, sig)
    dof = max(len(s) - 3, 1)
    n_tot = sum(series.estimates[i].n for i in keep)

    def est(i, name):
        se = math.sqrt(cov[i, i])
        return EstimateWithCI(coef[i], coef[i] - Z95 * se,
                              coef[i] + Z95 * se, n_tot, name)

    fit = OZFit(est(1, "oz-xi"), est(2, "oz-alpha"), est(0, "oz-logpsi"),
                chi2 / dof, s)
    fit.alpha_covers_expected = fit.alpha.covers(0.5 * (d - 1))
    return fit


# ---------------------------------------------------------------------------
# connectivity and exit estimators
# ---------------------------------------------------------------------------


def estimate_connectivity(samples, pairs) -> dict:
    """Empirical connection frequency with Wilson CI per vertex pair."""
    counts = {pair: 0 for pair in pairs}
    n = 0
    for config in samples:
        n += 1
        lab = cluster_labeling(config)
        for (x, y) in pairs:
            if lab.labels[x] == lab.labels[y]:
                counts[(x, y)] += 1
    if n < 100:
        raise ValueError("need at least 100 samples")
    return {pair: wilson_interval(c, n) for pair, c in counts.items()}


def exact_exit_probability_1d(p: float, N: int) -> float:
    """P(0 <-> Z \\ Lambda_N) for d = 1 independent bonds: the origin
    escapes through the left or right arm of N+1 consecutive open bonds."""
    a = p ** (N + 1)
    return 2 * a - a * a


@dataclass
class ExitDecay:
    series: DecaySeries
    rates: np.ndarray                  # successive-ratio rates per gap
    final_rate: EstimateWithCI
    loglinear_slope: float
    loglinear_r2: float


def exit_decay(entries) -> ExitDecay:
    """Escape-probability decay over boxes; entries are (N, hits, total).

    The rate sequence holds -log(p_{i+1}/p_i)/(N_{i+1}-N_i); the final rate
    carries a propagated CI for cross-checks against decay-rate fits.  The
    log-linear fit over all boxes backs the straight-line (pure exponential)
    check.
    """
    entries = sorted(entries)
    Ns = np.array([e[0] for e in entries], dtype=float)
    ests = [wilson_interval(int(h), int(n)) for _, h, n in entries]
    series = DecaySeries(Ns, ests, "exit")
    logp = np.array([math.log(e.value) if e.value > 0 else -math.inf
                     for e in ests])
    sig = np.array([_log_sigma(e) for e in ests])
    rates = -(np.diff(logp) / np.diff(Ns))
    se_fin = math.hypot(sig[-1], sig[-2]) / (Ns[-1] - Ns[-2])
    fin = rates[-1]
    final = EstimateWithCI(fin, fin - Z95 * se_fin, fin + Z95 * se_fin,
                           ests[-1].n, "exit-rate")
    # unweighted log-linear fit for the straight-line check
    A = np.column_stack([np.ones_like(Ns), Ns])
    coef, *_ = np.linalg.lstsq(A, logp, rcond=None)
    pred = A @ coef
    ss_res = float(np.sum((logp - pred) ** 2))
    ss_tot = float(np.sum((logp - logp.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return ExitDecay(series, rates, final, float(coef[1]), r2)


# ---------------------------------------------------------------------------
# step tails and cone density
# ---------------------------------------------------------------------------


@dataclass
class TailFit:
    kappa: EstimateWithCI
    degenerate: bool = False

    @property
    def positive(self) -> bool:
        return self.degenerate or self.kappa.lo > 0


def step_tail_fit(steps) -> TailFit:
    """Exponential tail rate of pooled step lengths.

    ``steps`` is an (n, 2) array of displacement vectors or a list of
    EffectiveWalk objects; fits log P(|V| >= s) against -kappa * s over the
    tail above the median.  All-equal steps are flagged degenerate
    (kappa = +inf).
    """
    if hasattr(steps, "__iter__") and not isinstance(steps, np.ndarray):
        parts = [np.asarray(getattr(w, "steps", w), dtype=float).reshape(-1, 2)
                 for w in steps]
        arr = np.vstack(parts) if parts else np.empty((0, 2))
    else:
        arr = np.asarray(steps, dtype=float).reshape(-1, 2)
    n = len(arr)
    if n < 1000:
        raise TooFewSteps(f"{n} steps pooled; need >= 1000")
    lengths = np.sqrt((arr * arr).sum(axis=1))
    if np.ptp(lengths) == 0:
        inf = math.inf
        return TailFit(EstimateWithCI(inf, inf, inf, n, "degenerate"), True)
    smin = np.quantile(lengths, 0.5)
    grid = np.unique(np.ceil(np.sort(lengths[lengths >= smin])))
    svals = []
    tail = []
    for s in grid:
        c = int(np.sum(lengths >= s))
        if c >= 5:
            svals.append(s)
            tail.append(c)
    if len(svals) < 3:
        # not enough distinct tail levels: treat as near-degenerate
        inf = math.inf
        return TailFit(EstimateWithCI(inf, inf, inf, n, "degenerate"), True)
    svals = np.array(svals)
    tail = np.array(tail, dtype=float)
    y = np.log(tail / n)
    sig = 1.0 / np.sqrt(tail)
    X = np.column_stack([np.ones_like(svals), -svals])
    coef, cov, _ = _wls(X, y, sig)
    k = coef[1]
    # nested tail counts are strongly correlated; the regression variance
    # understates the error, so use the exponential-rate asymptotic
    # se ~ kappa * sqrt(2 / n_tail) (conservative) if it is wider
    se = max(math.sqrt(cov[1, 1]), abs(k) * math.sqrt(2.0 / tail[0]))
    return TailFit(EstimateWithCI(k, k - Z95 * se, k + Z95 * se, n,
                                  "tail-wls"))


@dataclass
class ConeDensity:
    by_scale: list                     # (|x|, mean count, EstimateWithCI)
    slope: EstimateWithCI              # linear-fit slope of count vs |x|

    @property
    def positive(self) -> bool:
        return self.slope.lo > 0


def cone_density(records) -> ConeDensity:
    """Cone-point counts per conditioned cluster, grouped by |x|.

    ``records`` is an iterable of (x_distance, cone_count).  Returns
    per-scale densities (count / |x|) with normal CIs and the slope of an
    unweighted-by-scale linear fit of mean counts against |x|.
    """
    groups = {}
    for dist, count in records:
        groups.setdefault(float(dist), []).append(count)
    by_scale = []
    xs = []
    means = []
    ses = []
    for dist in sorted(groups):
        c = np.asarray(groups[dist], dtype=float)
        m = c.mean()
        se = c.std(ddof=1) / math.sqrt(len(c)) if len(c) > 1 else 0.0
        dens = m / dist
        by_scale.append((dist, m,
                         EstimateWithCI(dens, dens - Z95 * se / dist,
                                        dens + Z95 * se / dist, len(c),
                                        "cone-density")))
        xs.append(dist)
        means.append(m)
        ses.append(max(se, 1e-12))
    xs = np.array(xs)
    means = np.array(means)
    ses = np.array(ses)
    X = np.column_stack([np.ones_like(xs), xs])
    coef, cov, _ = _wls(X, means, ses)
    b = coef[1]
    se_b = math.sqrt(cov[1, 1])
    n_tot = sum(len(v) for v in groups.values())
    return ConeDensity(by_scale,
                       EstimateWithCI(b, b - Z95 * se_b, b + Z95 * se_b,
                                      n_tot, "cone-slope"))


# ---------------------------------------------------------------------------
# bridge statistics
# ---------------------------------------------------------------------------


@dataclass
class BridgeReport:
    chi: EstimateWithCI                # fitted Var phi(r) = chi r(1-r)
    r2: float
    kurtosis_mid: float
    max_cov_deviation: float           # vs chi (r ^ r' - r r'), sup norm
    chi_vs_reference: Optional[float] = None   # ratio chi_hat / reference
    verdict: bool = True


def bridge_covariance_test(profiles, curvature_ref: float = None,
                           span_scale: float = 1.0) -> BridgeReport:
    """Brownian-bridge consistency of rescaled interface profiles.

    Fits Var phi(r) = chi * r(1-r) by least squares over the interior grid,
    checks the two-point covariance against chi*(min(r,r') - r r'), and
    reports the midpoint kurtosis.  ``span_scale`` rescales the fitted chi
    before comparison with a curvature reference (profiles normalized by
    sqrt(N) over a span of 2N carry twice the per-unit-length variance).
    """
    mats = []
    grid = None
    for prof in profiles:
        r = np.asarray(prof.r if hasattr(prof, "r") else prof[0], dtype=float)
        v = np.asarray(prof.rescaled if hasattr(prof, "rescaled") else prof[1],
                       dtype=float)
        if grid is None:
            grid = r
        elif len(r) != len(grid) or np.any(np.abs(r - grid) > 1e-12):
            raise GridMismatch("profiles on different parameter grids")
        mats.append(v)
    Z = np.vstack(mats)
    n = len(Z)
    Z = Z - Z.mean(axis=0, keepdims=True)
    g = grid * (1 - grid)
    interior = g > 1e-12
    gi = g[interior]
    Zi = Z[:, interior]
    # per-sample statistic whose mean is the LS chi; t-interval over samples
    denom = float(np.sum(gi * gi))
    u = (Zi ** 2 @ gi) / denom
    chi_hat = float(u.mean())
    se = float(u.std(ddof=1) / math.sqrt(n))
    chi = EstimateWithCI(chi_hat, chi_hat - Z95 * se, chi_hat + Z95 * se,
                         n, "bridge-var-fit")
    var_emp = (Zi ** 2).mean(axis=0)
    pred = chi_hat * gi
    ss_res = float(np.sum((var_emp - pred) ** 2))
    ss_tot = float(np.sum((var_emp - var_emp.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    # midpoint kurtosis
    mid = int(np.argmin(np.abs(grid - 0.5)))
    zm = Z[:, mid]
    kurt = float(np.mean(zm ** 4) / np.mean(zm ** 2) ** 2)
    # covariance field check
    cov_emp = (Zi.T @ Zi) / n
    rr = gi  # placeholder length; build full min(r,r') - r r' on interior
    ri = grid[interior]
    cov_pred = chi_hat * (np.minimum.outer(ri, ri) - np.outer(ri, ri))
    max_dev = float(np.max(np.abs(cov_emp - cov_pred)))
    ratio = None
    verdict = True
    if curvature_ref is not None and curvature_ref > 0:
        ratio = chi_hat * span_scale / curvature_ref
        verdict = abs(ratio - 1.0) <= 0.25
    return BridgeReport(chi, r2, kurt, max_dev, ratio, verdict)


def simulate_brownian_bridges(n_samples: int, m: int, seed: int) -> list:
    """Exact standard Brownian bridges on the (m+1)-point grid (chi = 1)."""
    rng = _rng.generator(seed, 0xB1)
    r = np.arange(m + 1) / m
    out = []
    for _ in range(n_samples):
        inc = rng.normal(0.0, math.sqrt(1.0 / m), size=m)
        w = np.concatenate([[0.0], np.cumsum(inc)])
        b = w - r * w[-1]
        out.append((r, b))

    class _P:
        def __init__(self, r, v):
            self.r = r
            self.rescaled = v

    return [_P(r, b) for r, b in out]


# ---------------------------------------------------------------------------
# conditioned cluster sampling
# ---------------------------------------------------------------------------


def conditioned_cluster_sampler(params: ModelParams, x, max_rejects: int,
                                seed: int, n_samples: int,
                                window_half: int = None,
                                stream: int = 0) -> Iterator[Cluster]:
    """Rejection sampler for the common cluster of the origin and x.

    Keeps configurations with 0 <-> x and emits the common cluster with its
    open edges.  Raises :class:`AcceptanceTooLow` when ``max_rejects``
    consecutive attempts fail.  q = 1 runs on the infinite lattice through
    direct cluster growth; q > 1 is not implemented here (the interface
    route provides the conditioning-free path at integer q).
    """
    if params.q != 1.0:
        raise NotImplementedError("conditioned sampling is q = 1 only")
    tx, ty = int(x[0]), int(x[1])
    p = params.bond_probability(1.0)
    if window_half is None:
        window_half = max(8 * (abs(tx) + abs(ty)), 200)
    W = 2 * window_half + 1
    rng = _rng.xoshiro_state(seed, (0x60 << 32) | stream)
    out_x = np.empty(W * W, dtype=np.int32)
    out_y = np.empty(W * W, dtype=np.int32)
    edge_a = np.empty(4 * W * W, dtype=np.int32)
    edge_b = np.empty(4 * W * W, dtype=np.int32)
    for _ in range(n_samples):
        n, ne, attempts = _kernels.grow_conditioned(
            p, tx, ty, window_half, max_rejects, rng, out_x, out_y,
            edge_a, edge_b)
        if n < 0:
            raise AcceptanceTooLow(
                f"no accepted cluster in {max_rejects} attempts")
        verts = np.column_stack([out_x[:n].astype(np.int64),
                                 out_y[:n].astype(np.int64)])
        cell_to_idx = {}
        for i in range(n):
            cell = (int(out_x[i]) + window_half) * W + (int(out_y[i]) + window_half)
            cell_to_idx[cell] = i
        edges = np.empty((ne, 2), dtype=np.int64)
        for k in range(ne):
            edges[k, 0] = cell_to_idx[int(edge_a[k])]
            edges[k, 1] = cell_to_idx[int(edge_b[k])]
        src = cell_to_idx[window_half * W + window_half]
        tgt = cell_to_idx[(tx + window_half) * W + (ty + window_half)]
        yield Cluster(verts, edges, src, tgt)
