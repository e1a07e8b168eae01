"""2D q-state Potts model with Dobrushin boundary conditions.

The spin measure on a box carries weight exp(beta * #agreeing pairs) over
all nearest-neighbor pairs meeting the box (boundary pairs included).
Sampling runs through the spin/bond coupling: agreeing pairs open with
p = 1 - exp(-2 beta), clusters recolor uniformly except those attached to
fixed boundary sites.  With that bond convention the stationary spin law
equals the Potts measure at pair coupling 2*beta; the exact enumeration
oracle takes the pair coupling directly, so chains at beta compare against
the oracle at 2*beta.

Under a two-colored (Dobrushin) boundary the disagreement dual edges form
a unique component spanning the box between the lateral sign-change
locations; its geometry, cone-point polyline and diffusively rescaled
profile are what the interface analysis consumes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from . import _kernels, _rng
from .clustergeo import Cluster, cluster_cone_points
from .geometry import DirectionalNorm, EuclideanNorm


class TooLarge(Exception):
    """Potts enumeration requested beyond the 1e7 state cap."""


class InconsistentBC(Exception):
    """A percolation cluster touched both boundary colors (internal assertion)."""


class NoSpanningComponent(Exception):
    """No disagreement component joins the two sign-change locations."""


class MultipleCrossings(Exception):
    """Cone-point polyline crossed a sampling line more than once."""


@dataclass(frozen=True)
class DobrushinBC:
    """Two-colored boundary: color 1 where (n, i) >= 0, color 2 below."""

    n: tuple = (0.0, 1.0)

    def __post_init__(self):
        nx, ny = self.n
        r = math.hypot(nx, ny)
        if r == 0:
            raise ValueError("n must be a unit vector")
        object.__setattr__(self, "n", (nx / r, ny / r))
        if self.n[1] < 1 / math.sqrt(2) - 1e-12:
            raise ValueError("(n, e2) >= 1/sqrt(2) required")

    def color(self, site) -> int:
        return 1 if site[0] * self.n[0] + site[1] * self.n[1] >= 0 else 2


@dataclass(frozen=True)
class ConstantBC:
    """All boundary spins fixed to one color."""

    color: int = 1


UNIFORM = "uniform"


@dataclass
class SpinConfiguration:
    """Spins on the box plus its fixed range-1 shell, as a flat grid.

    ``grid`` has side 2N+3; cell (a, b) is lattice site (a-N-1, b-N-1).
    """

    N: int
    grid: np.ndarray
    bc: object = UNIFORM

    @property
    def side(self) -> int:
        return 2 * self.N + 3

    def spin(self, site) -> int:
        a = site[0] + self.N + 1
        b = site[1] + self.N + 1
        return int(self.grid[a * self.side + b])

    def interior_spins(self) -> np.ndarray:
        L = self.side
        g = self.grid.reshape(L, L)
        return g[1:L - 1, 1:L - 1].copy()


@dataclass
class InterfaceProfile:
    """Sampled crossing heights of the interface polyline.

    ``r`` is the parameter grid, ``phi`` the raw heights Phi_N(r), and
    ``rescaled`` the pinned profile (Phi - chord)/sqrt(N) with exact zeros
    at both ends.  ``column_mean`` carries the diagnostic fallback profile.
    """

    N: int
    r: np.ndarray
    phi: np.ndarray
    rescaled: np.ndarray
    column_mean: np.ndarray = None
    attach_left: tuple = None
    attach_right: tuple = None


def _shell_and_edges(N: int):
    """Edge arrays over pairs meeting the box, plus the cell geometry."""
    eu, ev = _kernels.potts_grid_arrays(N)
    return eu, ev


def _fixed_colors(N: int, bc) -> np.ndarray:
    L = 2 * N + 3
    fixed = np.zeros(L * L, dtype=np.int32)
    if bc == UNIFORM:
        return fixed
    for a in range(L):
        for b in range(L):
            if 1 <= a <= L - 2 and 1 <= b <= L - 2:
                continue
            site = (a - N - 1, b - N - 1)
            if isinstance(bc, DobrushinBC):
                fixed[a * L + b] = bc.color(site)
            elif isinstance(bc, ConstantBC):
                fixed[a * L + b] = bc.color
            else:
                raise ValueError(f"unknown boundary condition {bc!r}")
    return fixed


def potts_weight(sigma: SpinConfiguration, beta: float) -> float:
    """Unnormalized weight exp(beta * #agreeing pairs meeting the box)."""
    N = sigma.N
    eu, ev = _shell_and_edges(N)
    if sigma.bc == UNIFORM:
        L = sigma.side
        keep = []
        for k in range(len(eu)):
            au, bu = divmod(int(eu[k]), L)
            av, bv = divmod(int(ev[k]), L)
            if (1 <= au <= L - 2 and 1 <= bu <= L - 2
                    and 1 <= av <= L - 2 and 1 <= bv <= L - 2):
                keep.append(k)
        eu = eu[keep]
        ev = ev[keep]
    agree = int(np.sum(sigma.grid[eu] == sigma.grid[ev]))
    return math.exp(beta * agree)


@dataclass
class PottsDistribution:
    """Exhaustive normalized table over interior spin states (mixed radix)."""

    N: int
    q: int
    probs: np.ndarray

    def state_index(self, interior: np.ndarray) -> int:
        code = 0
        mult = 1
        for s in interior.ravel(order="C"):
            code += (int(s) - 1) * mult
            mult *= self.q
        return code


def exact_potts_distribution(N: int, beta: float, q: int, bc) -> PottsDistribution:
    """Brute-force oracle over all q^(2N+1)^2 interior states."""
    q = int(q)
    n_interior = (2 * N + 1) ** 2
    n_states = q ** n_interior
    if n_states > 10 ** 7:
        raise TooLarge(f"{n_states} states exceed the 1e7 cap")
    L = 2 * N + 3
    eu, ev = _shell_and_edges(N)
    fixed = _fixed_colors(N, bc)
    if bc == UNIFORM:
        keep = []
        for k in range(len(eu)):
            au, bu = divmod(int(eu[k]), L)
            av, bv = divmod(int(ev[k]), L)
            if (1 <= au <= L - 2 and 1 <= bu <= L - 2
                    and 1 <= av <= L - 2 and 1 <= bv <= L - 2):
                keep.append(k)
        eu = eu[keep]
        ev = ev[keep]
    # remap cells so interior cells come first in row-major interior order
    interior_cells = [a * L + b for a in range(1, L - 1) for b in range(1, L - 1)]
    shell_cells = [c for c in range(L * L) if c not in set(interior_cells)]
    remap = {c: i for i, c in enumerate(interior_cells + shell_cells)}
    eu2 = np.array([remap[int(c)] for c in eu], dtype=np.int32)
    ev2 = np.array([remap[int(c)] for c in ev], dtype=np.int32)
    fixed2 = np.zeros(L * L, dtype=np.int32)
    for c in shell_cells:
        fixed2[remap[c]] = fixed[c]
    w = _kernels.enumerate_potts_weights(n_states, n_interior, L * L, q,
                                         float(beta), eu2, ev2, fixed2)
    return PottsDistribution(N, q, w / w.sum())


def es_sample(N: int, beta: float, q: int, bc, sweeps: int, seed: int,
              burn_in: int = 100, thinning: int = 1,
              stream: int = 0) -> Iterator[SpinConfiguration]:
    """Spin/bond coupled chain; deterministic given the seed.

    Agreeing pairs open with p = 1 - exp(-2 beta); clusters touching a fixed
    boundary arc adopt its color, free clusters recolor uniformly.  Emits
    ``sweeps`` configurations after ``burn_in`` alternations, one every
    ``thinning``.
    """
    if int(q) != q or q < 2:
        raise ValueError("q must be an integer >= 2")
    q = int(q)
    L = 2 * N + 3
    eu, ev = _shell_and_edges(N)
    fixed = _fixed_colors(N, bc)
    p = -np.expm1(-2.0 * beta)
    p_open = np.full(len(eu), p)
    spins = np.where(fixed > 0, fixed, 1).astype(np.int32)
    bond = np.zeros(len(eu), dtype=np.uint8)
    parent = np.empty(L * L, dtype=np.int32)
    root_color = np.empty(L * L, dtype=np.int32)
    link = np.empty(0, dtype=np.int32)
    rng = _rng.xoshiro_state(seed, (0x50 << 32) | stream)

    def advance(n):
        err = _kernels.sw_run(spins, fixed, eu, ev, p_open, bond, link, link,
                              q, parent, root_color, n, rng)
        if err:
            raise InconsistentBC("cluster touched both boundary colors")

    advance(burn_in)
    for _ in range(sweeps):
        advance(thinning)
        yield SpinConfiguration(N, spins.copy(), bc)


# ---------------------------------------------------------------------------
# interface extraction and profiles
# ---------------------------------------------------------------------------


def _interface_arrays(N: int):
    L = 2 * N + 3
    Ld = L - 1
    seeds = np.array([0 * Ld + N, 0 * Ld + (N + 1)], dtype=np.int64)
    goals = np.array([(2 * N + 1) * Ld + (N + 1), (2 * N + 1) * Ld + N],
                     dtype=np.int64)
    return L, Ld, seeds, goals


def extract_interface(sigma: SpinConfiguration) -> np.ndarray:
    """Dual sites of the disagreement component attached to the pinning
    locations; raises when the component fails to span the box.

    Returns an (n, 2) array of dual coordinates (half-integer lattice
    positions of the component's dual sites).
    """
    if not isinstance(sigma.bc, DobrushinBC):
        raise ValueError("interface extraction requires a Dobrushin bc")
    N = sigma.N
    L, Ld, seeds, goals = _interface_arrays(N)
    comp_mark = np.zeros(Ld * Ld, dtype=np.int64)
    queue = np.empty(Ld * Ld, dtype=np.int64)
    out_i = np.empty(Ld * Ld, dtype=np.int64)
    out_j = np.empty(Ld * Ld, dtype=np.int64)
    n, reached = _kernels.interface_component(sigma.grid, L, seeds, goals,
                                              comp_mark, 1, queue, out_i, out_j)
    if not reached:
        raise NoSpanningComponent("disagreement component does not span")
    sites = np.column_stack([out_i[:n] - N - 0.5, out_j[:n] - N - 0.5])
    return sites


def interface_edge_count(sigma: SpinConfiguration) -> int:
    """Dual edges inside the spanning component (diagnostic)."""
    N = sigma.N
    L, Ld, seeds, goals = _interface_arrays(N)
    comp_mark = np.zeros(Ld * Ld, dtype=np.int64)
    queue = np.empty(Ld * Ld, dtype=np.int64)
    out_i = np.empty(Ld * Ld, dtype=np.int64)
    out_j = np.empty(Ld * Ld, dtype=np.int64)
    n, reached = _kernels.interface_component(sigma.grid, L, seeds, goals,
                                              comp_mark, 1, queue, out_i, out_j)
    if not reached:
        raise NoSpanningComponent("disagreement component does not span")
    return int(_kernels.count_disagreement_edges(sigma.grid, L, comp_mark, 1))


def interface_profile(sites: np.ndarray, N: int, m: int,
                      norm: DirectionalNorm = None, t=None,
                      delta: float = 0.25) -> InterfaceProfile:
    """Crossing-height profile of the interface's cone-point polyline.

    The polyline runs through the pinning sites and the cone points of the
    dual cluster (direction e1, dual vector t); heights are read at the
    vertical lines r*(2N) - N for r on the (m+1)-point grid, the chord
    through the pinned endpoints is subtracted and the result rescaled by
    1/sqrt(N).  A column-mean profile is attached for diagnostics.
    """
    if norm is None:
        norm = EuclideanNorm()
    if t is None:
        tvec = np.array([norm((1.0, 0.0)), 0.0])
    else:
        tvec = np.asarray(t, dtype=float)
    # left/right attachment: the component contains one or both candidate
    # pinning sites per side; record the ones used
    left_candidates = [(-N - 0.5, -0.5), (-N - 0.5, 0.5)]
    right_candidates = [(N + 0.5, 0.5), (N + 0.5, -0.5)]
    site_set = {(float(x), float(y)) for x, y in sites}
    attach_left = next((c for c in left_candidates if c in site_set), None)
    attach_right = next((c for c in right_candidates if c in site_set), None)
    if attach_left is None or attach_right is None:
        raise NoSpanningComponent("pinning sites not in the component")

    # cone points of the dual cluster (integer shifted coordinates)
    shifted = np.round(sites + 0.5).astype(np.int64)
    cl = Cluster(shifted, np.empty((0, 2), dtype=np.int64), 0, 0)
    cones = cluster_cone_points(cl, tvec, delta, norm, method="scan") - 0.5

    anchors = [attach_left]
    for c in cones:
        anchors.append((float(c[0]), float(c[1])))
    anchors.append(attach_right)
    anchors = [a for i, a in enumerate(anchors)
               if i == 0 or a[0] > anchors[i - 1][0] - 1e-12]
    ax = np.array([a[0] for a in anchors])
    ay = np.array([a[1] for a in anchors])
    if np.any(np.diff(ax) < -1e-12):
        raise MultipleCrossings("anchor abscissae not monotone")
    # strictly dedupe equal abscissae (pinning site may coincide with a cone point)
    keep = np.concatenate([[True], np.diff(ax) > 1e-12])
    ax = ax[keep]
    ay = ay[keep]

    r = np.arange(m + 1) / m
    h = r * (2 * N) - N
    phi = np.interp(h, ax, ay)
    chord = phi[0] + (phi[-1] - phi[0]) * r
    rescaled = (phi - chord) / math.sqrt(N)

    cols = np.round(sites[:, 0] + 0.5)
    col_height = {}
    for c, y in zip(cols, sites[:, 1]):
        col_height.setdefault(c, []).append(y)
    col_mean = np.array([
        np.mean(col_height.get(round(hx + 0.5), [np.nan])) for hx in h])
    return InterfaceProfile(N, r, phi, rescaled, col_mean,
                            attach_left, attach_right)


def profiles_to_csv(profiles) -> str:
    """CSV export: sample_id, r, phi rows."""
    lines = ["sample_id,r,phi"]
    for i, prof in enumerate(profiles):
        for r, ph in zip(prof.r, prof.phi):
            lines.append(f"{i},{r:.17g},{ph:.17g}")
    return "\n".join(lines) + "\n"
