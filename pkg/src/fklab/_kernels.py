"""Numba kernels behind the samplers and cluster analysis.

Graphs are passed as flat arrays: sampled bonds as endpoint index pairs
(parallel bonds allowed), plus an optional set of always-open links
(the virtual-exterior attachments realizing wired boundary conditions).
All randomness comes from xoshiro256** states handed in by the caller;
kernels never touch global RNG state.
"""

from __future__ import annotations

import numpy as np
from numba import njit

U64 = np.uint64
_INV53 = 1.0 / 9007199254740992.0  # 2^-53


@njit(cache=True, inline="always")
def _rotl(x, k):
    return U64((x << k) | (x >> (U64(64) - k)))


@njit(cache=True, inline="always")
def xo_next(state):
    res = _rotl(state[1] * U64(5), U64(7)) * U64(9)
    t = state[1] << U64(17)
    state[2] ^= state[0]
    state[3] ^= state[1]
    state[1] ^= state[2]
    state[0] ^= state[3]
    state[2] ^= t
    state[3] = _rotl(state[3], U64(45))
    return res


@njit(cache=True, inline="always")
def xo_u01(state):
    return float(xo_next(state) >> U64(11)) * _INV53


@njit(cache=True, inline="always")
def uf_find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


# ---------------------------------------------------------------------------
# exact enumeration
# ---------------------------------------------------------------------------


@njit(cache=True)
def enumerate_weights(n_core, n_v, edges_u, edges_v, p_open, q,
                      link_u, link_v):
    """Unnormalized weight of every bond configuration (index = bitmask).

    The first ``n_core`` vertices are the ones whose clusters are counted;
    indices >= n_core are auxiliary (virtual exterior).  Links are
    always-open edges applied before counting.
    """
    m = len(edges_u)
    weights = np.empty(1 << m, dtype=np.float64)
    parent = np.empty(n_v, dtype=np.int32)
    seen = np.zeros(n_v, dtype=np.int64)
    ratio = np.empty(m, dtype=np.float64)
    base = 1.0
    for e in range(m):
        base *= 1.0 - p_open[e]
        ratio[e] = p_open[e] / (1.0 - p_open[e])
    token = 0
    for mask in range(1 << m):
        for v in range(n_v):
            parent[v] = v
        w = base
        for e in range(m):
            if (mask >> e) & 1:
                w *= ratio[e]
                ru = uf_find(parent, edges_u[e])
                rv = uf_find(parent, edges_v[e])
                if ru != rv:
                    parent[ru] = rv
        for k in range(len(link_u)):
            ru = uf_find(parent, link_u[k])
            rv = uf_find(parent, link_v[k])
            if ru != rv:
                parent[ru] = rv
        token += 1
        count = 0
        for v in range(n_core):
            r = uf_find(parent, v)
            if seen[r] != token:
                seen[r] = token
                count += 1
        weights[mask] = w * q ** count
    return weights


@njit(cache=True)
def enumerate_potts_weights(n_states, n_interior, n_all, q, beta,
                            edges_u, edges_v, fixed_color):
    """Unnormalized Potts weight exp(beta * #agreeing pairs) per spin state.

    States are mixed-radix integers over the first ``n_interior`` vertices
    (digit i = spin of vertex i, values 0..q-1); the remaining vertices carry
    the fixed boundary colors.
    """
    weights = np.empty(n_states, dtype=np.float64)
    spins = np.empty(n_all, dtype=np.int32)
    for i in range(n_interior, n_all):
        spins[i] = fixed_color[i]
    for s in range(n_states):
        code = s
        for i in range(n_interior):
            spins[i] = code % q + 1
            code //= q
        agree = 0
        for e in range(len(edges_u)):
            if spins[edges_u[e]] == spins[edges_v[e]]:
                agree += 1
        weights[s] = np.exp(beta * agree)
    return weights


# ---------------------------------------------------------------------------
# cluster labeling
# ---------------------------------------------------------------------------


@njit(cache=True)
def label_clusters(n_v, edges_u, edges_v, states, link_u, link_v):
    """Root label per vertex from open bonds plus always-open links."""
    parent = np.empty(n_v, dtype=np.int32)
    for v in range(n_v):
        parent[v] = v
    for e in range(len(edges_u)):
        if states[e]:
            ru = uf_find(parent, edges_u[e])
            rv = uf_find(parent, edges_v[e])
            if ru != rv:
                parent[ru] = rv
    for k in range(len(link_u)):
        ru = uf_find(parent, link_u[k])
        rv = uf_find(parent, link_v[k])
        if ru != rv:
            parent[ru] = rv
    labels = np.empty(n_v, dtype=np.int32)
    for v in range(n_v):
        labels[v] = uf_find(parent, v)
    return labels


# ---------------------------------------------------------------------------
# heat-bath chain
# ---------------------------------------------------------------------------


@njit(cache=True)
def _connected_off_edge(e, u, v, states, adj_indptr, adj_edge, adj_other,
                        link_indptr, link_other, visited, queue, token):
    """Open connectivity u <-> v in the graph minus bond e (BFS)."""
    if u == v:
        return True
    visited[u] = token
    queue[0] = u
    head = 0
    tail = 1
    while head < tail:
        w = queue[head]
        head += 1
        for k in range(adj_indptr[w], adj_indptr[w + 1]):
            ee = adj_edge[k]
            if ee == e or states[ee] == 0:
                continue
            o = adj_other[k]
            if o == v:
                return True
            if visited[o] != token:
                visited[o] = token
                queue[tail] = o
                tail += 1
        for k in range(link_indptr[w], link_indptr[w + 1]):
            o = link_other[k]
            if o == v:
                return True
            if visited[o] != token:
                visited[o] = token
                queue[tail] = o
                tail += 1
    return False


@njit(cache=True)
def _hb_sweep(states, edges_u, edges_v, p_open, q,
              adj_indptr, adj_edge, adj_other,
              link_indptr, link_other, visited, queue, token, rng_state):
    """One full sweep in canonical bond order; returns the updated token."""
    for e in range(len(edges_u)):
        token += 1
        conn = _connected_off_edge(e, edges_u[e], edges_v[e], states,
                                   adj_indptr, adj_edge, adj_other,
                                   link_indptr, link_other,
                                   visited, queue, token)
        pe = p_open[e]
        prob = pe if conn else pe / (pe + q * (1.0 - pe))
        states[e] = 1 if xo_u01(rng_state) < prob else 0
    return token


@njit(cache=True)
def heat_bath_run(states, edges_u, edges_v, p_open, q,
                  adj_indptr, adj_edge, adj_other,
                  link_indptr, link_other,
                  n_sweeps, rng_state):
    """Advance the single-bond heat-bath chain by n_sweeps full sweeps."""
    n_v = len(adj_indptr) - 1
    visited = np.zeros(n_v, dtype=np.int64)
    queue = np.empty(n_v, dtype=np.int32)
    token = 0
    for _ in range(n_sweeps):
        token = _hb_sweep(states, edges_u, edges_v, p_open, q,
                          adj_indptr, adj_edge, adj_other,
                          link_indptr, link_other, visited, queue, token,
                          rng_state)


@njit(cache=True)
def heat_bath_histogram(states, edges_u, edges_v, p_open, q,
                        adj_indptr, adj_edge, adj_other,
                        link_indptr, link_other,
                        burn_in, n_samples, thinning, rng_state, counts):
    """Run the chain and histogram visited configurations by bitmask."""
    n_v = len(adj_indptr) - 1
    visited = np.zeros(n_v, dtype=np.int64)
    queue = np.empty(n_v, dtype=np.int32)
    token = 0
    m = len(edges_u)
    for _ in range(burn_in):
        token = _hb_sweep(states, edges_u, edges_v, p_open, q,
                          adj_indptr, adj_edge, adj_other,
                          link_indptr, link_other, visited, queue, token,
                          rng_state)
    for _ in range(n_samples):
        for _ in range(thinning):
            token = _hb_sweep(states, edges_u, edges_v, p_open, q,
                              adj_indptr, adj_edge, adj_other,
                              link_indptr, link_other, visited, queue, token,
                              rng_state)
        mask = 0
        for e in range(m):
            if states[e]:
                mask |= 1 << e
        counts[mask] += 1


# ---------------------------------------------------------------------------
# Swendsen-Wang / Edwards-Sokal
# ---------------------------------------------------------------------------


@njit(cache=True)
def sw_step(spins, fixed_color, edges_u, edges_v, p_open, bond_out,
            link_u, link_v, q_int, parent, root_color, rng_state):
    """One bonds-given-spins / spins-given-bonds alternation.

    Returns 0 on success, 1 if a cluster touched two distinct fixed colors.
    """
    n_v = len(spins)
    m = len(edges_u)
    for e in range(m):
        if spins[edges_u[e]] == spins[edges_v[e]] and xo_u01(rng_state) < p_open[e]:
            bond_out[e] = 1
        else:
            bond_out[e] = 0
    for v in range(n_v):
        parent[v] = v
        root_color[v] = 0
    for e in range(m):
        if bond_out[e]:
            ru = uf_find(parent, edges_u[e])
            rv = uf_find(parent, edges_v[e])
            if ru != rv:
                parent[ru] = rv
    for k in range(len(link_u)):
        ru = uf_find(parent, link_u[k])
        rv = uf_find(parent, link_v[k])
        if ru != rv:
            parent[ru] = rv
    for v in range(n_v):
        if fixed_color[v] > 0:
            r = uf_find(parent, v)
            if root_color[r] == 0:
                root_color[r] = fixed_color[v]
            elif root_color[r] != fixed_color[v]:
                return 1
    for v in range(n_v):
        r = uf_find(parent, v)
        if root_color[r] == 0:
            c = 1 + np.int32(xo_u01(rng_state) * q_int)
            if c > q_int:
                c = q_int
            root_color[r] = c
        spins[v] = root_color[r]
    return 0


@njit(cache=True)
def sw_run(spins, fixed_color, edges_u, edges_v, p_open, bond_out,
           link_u, link_v, q_int, parent, root_color, n_steps, rng_state):
    """Advance the SW chain by n_steps alternations; returns the error flag."""
    for _ in range(n_steps):
        err = sw_step(spins, fixed_color, edges_u, edges_v, p_open, bond_out,
                      link_u, link_v, q_int, parent, root_color, rng_state)
        if err:
            return 1
    return 0


@njit(cache=True)
def sw_bond_histogram(spins, fixed_color, edges_u, edges_v, p_open,
                      link_u, link_v, q_int,
                      burn_in, n_samples, thinning, rng_state, counts):
    """SW chain histogramming the bond configuration after each bond pass."""
    n_v = len(spins)
    m = len(edges_u)
    bond = np.zeros(m, dtype=np.uint8)
    parent = np.empty(n_v, dtype=np.int32)
    root_color = np.empty(n_v, dtype=np.int32)
    err = sw_run(spins, fixed_color, edges_u, edges_v, p_open, bond,
                 link_u, link_v, q_int, parent, root_color, burn_in, rng_state)
    if err:
        return 1
    for _ in range(n_samples):
        err = sw_run(spins, fixed_color, edges_u, edges_v, p_open, bond,
                     link_u, link_v, q_int, parent, root_color, thinning,
                     rng_state)
        if err:
            return 1
        mask = 0
        for e in range(m):
            if bond[e]:
                mask |= 1 << e
        counts[mask] += 1
    return 0


@njit(cache=True)
def sw_spin_histogram(spins, fixed_color, edges_u, edges_v, p_open,
                      link_u, link_v, q_int, n_interior,
                      burn_in, n_samples, thinning, rng_state, counts):
    """SW chain histogramming the first n_interior spins (mixed radix)."""
    n_v = len(spins)
    m = len(edges_u)
    bond = np.zeros(m, dtype=np.uint8)
    parent = np.empty(n_v, dtype=np.int32)
    root_color = np.empty(n_v, dtype=np.int32)
    err = sw_run(spins, fixed_color, edges_u, edges_v, p_open, bond,
                 link_u, link_v, q_int, parent, root_color, burn_in, rng_state)
    if err:
        return 1
    for _ in range(n_samples):
        err = sw_run(spins, fixed_color, edges_u, edges_v, p_open, bond,
                     link_u, link_v, q_int, parent, root_color, thinning,
                     rng_state)
        if err:
            return 1
        code = 0
        mult = 1
        for v in range(n_interior):
            code += (spins[v] - 1) * mult
            mult *= q_int
        counts[code] += 1
    return 0


@njit(cache=True)
def sw_pair_accumulate(L1, L2, p, q_int, disp, margin,
                       burn_in, n_samples, thinning, rng_state, hits):
    """Free-bc SW chain on an L1 x L2 grid accumulating two-point hits.

    ``disp`` is an (n, 2) array of displacement vectors; hits[j] counts label
    coincidences over all sources u with u and u+disp[j] at least ``margin``
    from every side.  Returns the per-sample number of pair draws per
    displacement.
    """
    n_v = L1 * L2
    m = 2 * L1 * L2 - L1 - L2
    edges_u = np.empty(m, dtype=np.int32)
    edges_v = np.empty(m, dtype=np.int32)
    k = 0
    for x in range(L1):
        for y in range(L2):
            v = x * L2 + y
            if x + 1 < L1:
                edges_u[k] = v
                edges_v[k] = v + L2
                k += 1
            if y + 1 < L2:
                edges_u[k] = v
                edges_v[k] = v + 1
                k += 1
    p_open = np.full(m, p)
    spins = np.ones(n_v, dtype=np.int32)
    fixed = np.zeros(n_v, dtype=np.int32)
    bond = np.zeros(m, dtype=np.uint8)
    parent = np.empty(n_v, dtype=np.int32)
    root_color = np.empty(n_v, dtype=np.int32)
    link = np.empty(0, dtype=np.int32)
    sw_run(spins, fixed, edges_u, edges_v, p_open, bond,
           link, link, q_int, parent, root_color, burn_in, rng_state)
    n_disp = disp.shape[0]
    draws = np.zeros(n_disp, dtype=np.int64)
    for s in range(n_samples):
        sw_run(spins, fixed, edges_u, edges_v, p_open, bond,
               link, link, q_int, parent, root_color, thinning, rng_state)
        for v in range(n_v):
            parent[v] = v
        for e in range(m):
            if bond[e]:
                ru = uf_find(parent, edges_u[e])
                rv = uf_find(parent, edges_v[e])
                if ru != rv:
                    parent[ru] = rv
        for j in range(n_disp):
            dx = disp[j, 0]
            dy = disp[j, 1]
            x0 = margin + max(0, -dx)
            x1 = L1 - margin - max(0, dx)
            y0 = margin + max(0, -dy)
            y1 = L2 - margin - max(0, dy)
            cnt = 0
            for x in range(x0, x1):
                for y in range(y0, y1):
                    u = x * L2 + y
                    w = (x + dx) * L2 + (y + dy)
                    if uf_find(parent, u) == uf_find(parent, w):
                        hits[j] += 1
                    cnt += 1
            if s == 0:
                draws[j] = cnt
    return draws


@njit(cache=True, inline="always")
def _grid_edges(L1, L2):
    m = 2 * L1 * L2 - L1 - L2
    edges_u = np.empty(m, dtype=np.int32)
    edges_v = np.empty(m, dtype=np.int32)
    k = 0
    for x in range(L1):
        for y in range(L2):
            v = x * L2 + y
            if x + 1 < L1:
                edges_u[k] = v
                edges_v[k] = v + L2
                k += 1
            if y + 1 < L2:
                edges_u[k] = v
                edges_v[k] = v + 1
                k += 1
    return edges_u, edges_v


@njit(cache=True, inline="always")
def _flatten_labels(parent, lab):
    for v in range(len(parent)):
        lab[v] = uf_find(parent, v)


@njit(cache=True, inline="always")
def _strided_pair_pass(lab, L1, L2, disp, stride, margin, hits, draws, count_draws):
    for j in range(disp.shape[0]):
        dx = disp[j, 0]
        dy = disp[j, 1]
        x0 = margin + max(0, -dx)
        x1 = L1 - margin - max(0, dx)
        y0 = margin + max(0, -dy)
        y1 = L2 - margin - max(0, dy)
        nx = x1 - x0
        ny = y1 - y0
        if nx <= 0 or ny <= 0:
            continue
        st = stride[j]
        n_src = nx * ny
        cnt = 0
        f = 0
        while f < n_src:
            x = x0 + f // ny
            y = y0 + f % ny
            u = x * L2 + y
            w = (x + dx) * L2 + (y + dy)
            if lab[u] == lab[w]:
                hits[j] += 1
            cnt += 1
            f += st
        if count_draws:
            draws[j] += cnt


@njit(cache=True)
def q1_pair_study(L1, L2, p, disp, stride, margin, n_configs, rng_state,
                  hits, draws):
    """Independent-bond two-point study with per-displacement source strides.

    Each configuration is one full-lattice refresh (a q = 1 heat-bath
    sweep); displacement j counts source positions on a stride[j]-subsampled
    flat grid, giving per-scale sample budgets that balance the information
    profile across scales.  hits[j] and draws[j] accumulate over all
    configurations.
    """
    n_v = L1 * L2
    edges_u, edges_v = _grid_edges(L1, L2)
    m = len(edges_u)
    parent = np.empty(n_v, dtype=np.int32)
    lab = np.empty(n_v, dtype=np.int32)
    for s in range(n_configs):
        for v in range(n_v):
            parent[v] = v
        for e in range(m):
            if xo_u01(rng_state) < p:
                ru = uf_find(parent, edges_u[e])
                rv = uf_find(parent, edges_v[e])
                if ru != rv:
                    parent[ru] = rv
        _flatten_labels(parent, lab)
        _strided_pair_pass(lab, L1, L2, disp, stride, margin, hits, draws, True)


@njit(cache=True)
def sw_pair_study(L1, L2, p, q_int, disp, stride, margin,
                  burn_in, n_kept, thinning, rng_state, hits, draws):
    """Swendsen-Wang two-point study with per-displacement source strides.

    Runs a free-bc SW chain on the L1 x L2 grid; every ``thinning`` sweeps
    the bond configuration is labeled and strided pair hits accumulate as in
    :func:`q1_pair_study`.
    """
    n_v = L1 * L2
    edges_u, edges_v = _grid_edges(L1, L2)
    m = len(edges_u)
    p_open = np.full(m, p)
    spins = np.ones(n_v, dtype=np.int32)
    fixed = np.zeros(n_v, dtype=np.int32)
    bond = np.zeros(m, dtype=np.uint8)
    parent = np.empty(n_v, dtype=np.int32)
    root_color = np.empty(n_v, dtype=np.int32)
    lab = np.empty(n_v, dtype=np.int32)
    link = np.empty(0, dtype=np.int32)
    sw_run(spins, fixed, edges_u, edges_v, p_open, bond,
           link, link, q_int, parent, root_color, burn_in, rng_state)
    for s in range(n_kept):
        sw_run(spins, fixed, edges_u, edges_v, p_open, bond,
               link, link, q_int, parent, root_color, thinning, rng_state)
        for v in range(n_v):
            parent[v] = v
        for e in range(m):
            if bond[e]:
                ru = uf_find(parent, edges_u[e])
                rv = uf_find(parent, edges_v[e])
                if ru != rv:
                    parent[ru] = rv
        _flatten_labels(parent, lab)
        _strided_pair_pass(lab, L1, L2, disp, stride, margin, hits, draws, True)


@njit(cache=True)
def q1_pair_accumulate(L1, L2, p, disp, margin, n_configs, rng_state, hits):
    """Independent-bond configurations on an L1 x L2 grid, two-point hits.

    Same contract as :func:`sw_pair_accumulate` with q = 1 (no dynamics,
    every configuration drawn fresh).
    """
    n_v = L1 * L2
    m = 2 * L1 * L2 - L1 - L2
    edges_u = np.empty(m, dtype=np.int32)
    edges_v = np.empty(m, dtype=np.int32)
    k = 0
    for x in range(L1):
        for y in range(L2):
            v = x * L2 + y
            if x + 1 < L1:
                edges_u[k] = v
                edges_v[k] = v + L2
                k += 1
            if y + 1 < L2:
                edges_u[k] = v
                edges_v[k] = v + 1
                k += 1
    parent = np.empty(n_v, dtype=np.int32)
    n_disp = disp.shape[0]
    draws = np.zeros(n_disp, dtype=np.int64)
    for s in range(n_configs):
        for v in range(n_v):
            parent[v] = v
        for e in range(m):
            if xo_u01(rng_state) < p:
                ru = uf_find(parent, edges_u[e])
                rv = uf_find(parent, edges_v[e])
                if ru != rv:
                    parent[ru] = rv
        for j in range(n_disp):
            dx = disp[j, 0]
            dy = disp[j, 1]
            x0 = margin + max(0, -dx)
            x1 = L1 - margin - max(0, dx)
            y0 = margin + max(0, -dy)
            y1 = L2 - margin - max(0, dy)
            cnt = 0
            for x in range(x0, x1):
                for y in range(y0, y1):
                    u = x * L2 + y
                    w = (x + dx) * L2 + (y + dy)
                    if uf_find(parent, u) == uf_find(parent, w):
                        hits[j] += 1
                    cnt += 1
            if s == 0:
                draws[j] = cnt
    return draws


# ---------------------------------------------------------------------------
# q = 1 cluster growth on the (effectively) infinite lattice
# ---------------------------------------------------------------------------


@njit(cache=True)
def grow_cluster(p, half, stamp, bond_stamp, token, queue_x, queue_y,
                 out_x, out_y, edge_a, edge_b, rng_state, record_edges):
    """Grow the open cluster of the origin with i.i.d. Bernoulli(p) bonds.

    Works on a (2*half+1)^2 window centered at the origin; the growth aborts
    with count -1 if it reaches the window edge (astronomically rare at the
    subcritical parameters used).  Returns (n_vertices, n_edges).  Vertices
    are written as origin-relative coordinates; when ``record_edges`` the
    open bonds internal to the cluster are written as flat window cell ids.
    """
    W = 2 * half + 1
    head = 0
    tail = 1
    queue_x[0] = half
    queue_y[0] = half
    stamp[half * W + half] = token
    n = 0
    ne = 0
    while head < tail:
        x = queue_x[head]
        y = queue_y[head]
        head += 1
        out_x[n] = x - half
        out_y[n] = y - half
        n += 1
        if x == 0 or y == 0 or x == W - 1 or y == W - 1:
            return -1, 0
        for dirn in range(4):
            if dirn == 0:
                nx, ny = x + 1, y
                bidx = (x * W + y) * 2
            elif dirn == 1:
                nx, ny = x, y + 1
                bidx = (x * W + y) * 2 + 1
            elif dirn == 2:
                nx, ny = x - 1, y
                bidx = ((x - 1) * W + y) * 2
            else:
                nx, ny = x, y - 1
                bidx = (x * W + y - 1) * 2 + 1
            if bond_stamp[bidx] == token:
                continue
            bond_stamp[bidx] = token
            if xo_u01(rng_state) < p:
                if record_edges:
                    edge_a[ne] = x * W + y
                    edge_b[ne] = nx * W + ny
                    ne += 1
                cell = nx * W + ny
                if stamp[cell] != token:
                    stamp[cell] = token
                    queue_x[tail] = nx
                    queue_y[tail] = ny
                    tail += 1
    return n, ne


@njit(cache=True)
def connectivity_hits(p, n_samples, half, target_grid, n_targets,
                      rng_state, hits):
    """Count, per target cell, samples whose origin cluster contains it.

    ``target_grid`` holds 1 + target-index at target cells, 0 elsewhere.
    hits[n_targets] counts window overflows (kept for diagnostics).
    """
    W = 2 * half + 1
    stamp = np.zeros(W * W, dtype=np.int64)
    bond_stamp = np.zeros(W * W * 2, dtype=np.int64)
    qx = np.empty(W * W, dtype=np.int32)
    qy = np.empty(W * W, dtype=np.int32)
    ox = np.empty(W * W, dtype=np.int32)
    oy = np.empty(W * W, dtype=np.int32)
    ea = np.empty(0, dtype=np.int32)
    token = 0
    for _ in range(n_samples):
        token += 1
        n, _ = grow_cluster(p, half, stamp, bond_stamp, token, qx, qy,
                            ox, oy, ea, ea, rng_state, False)
        if n < 0:
            hits[n_targets] += 1
            continue
        for i in range(n):
            cell = (ox[i] + half) * W + (oy[i] + half)
            t = target_grid[cell]
            if t > 0:
                hits[t - 1] += 1


@njit(cache=True)
def exit_hits(p, n_samples, box_n, half, rng_state):
    """Samples whose origin cluster leaves Lambda_box_n (free growth).

    Growth stops as soon as a vertex outside the box is reached, so crossing
    bonds are sampled like every other bond.
    """
    W = 2 * half + 1
    stamp = np.zeros(W * W, dtype=np.int64)
    bond_stamp = np.zeros(W * W * 2, dtype=np.int64)
    qx = np.empty(W * W, dtype=np.int32)
    qy = np.empty(W * W, dtype=np.int32)
    token = 0
    hits = 0
    for _ in range(n_samples):
        token += 1
        head = 0
        tail = 1
        qx[0] = half
        qy[0] = half
        stamp[half * W + half] = token
        escaped = False
        while head < tail:
            x = qx[head]
            y = qy[head]
            head += 1
            if abs(x - half) > box_n or abs(y - half) > box_n:
                escaped = True
                break
            for dirn in range(4):
                if dirn == 0:
                    nx, ny = x + 1, y
                    bidx = (x * W + y) * 2
                elif dirn == 1:
                    nx, ny = x, y + 1
                    bidx = (x * W + y) * 2 + 1
                elif dirn == 2:
                    nx, ny = x - 1, y
                    bidx = ((x - 1) * W + y) * 2
                else:
                    nx, ny = x, y - 1
                    bidx = (x * W + y - 1) * 2 + 1
                if bond_stamp[bidx] == token:
                    continue
                bond_stamp[bidx] = token
                if xo_u01(rng_state) < p:
                    cell = nx * W + ny
                    if stamp[cell] != token:
                        stamp[cell] = token
                        qx[tail] = nx
                        qy[tail] = ny
                        tail += 1
        if escaped:
            hits += 1
    return hits


@njit(cache=True)
def wired_ring_hits(p, n_samples, box_n, rng_state):
    """Samples connecting the origin to the boundary ring inside Lambda_box_n.

    This is the wired finite-volume escape event: exterior bonds are all
    open, so escape happens exactly when the origin reaches a vertex with a
    neighbor outside the box; only internal bonds are sampled.
    """
    W = 2 * box_n + 1
    stamp = np.zeros(W * W, dtype=np.int64)
    bond_stamp = np.zeros(W * W * 2, dtype=np.int64)
    qx = np.empty(W * W, dtype=np.int32)
    qy = np.empty(W * W, dtype=np.int32)
    token = 0
    hits = 0
    for _ in range(n_samples):
        token += 1
        head = 0
        tail = 1
        qx[0] = box_n
        qy[0] = box_n
        stamp[box_n * W + box_n] = token
        reached = box_n == 0
        while head < tail and not reached:
            x = qx[head]
            y = qy[head]
            head += 1
            if x == 0 or y == 0 or x == W - 1 or y == W - 1:
                reached = True
                break
            for dirn in range(4):
                if dirn == 0:
                    nx, ny = x + 1, y
                    bidx = (x * W + y) * 2
                elif dirn == 1:
                    nx, ny = x, y + 1
                    bidx = (x * W + y) * 2 + 1
                elif dirn == 2:
                    nx, ny = x - 1, y
                    bidx = ((x - 1) * W + y) * 2
                else:
                    nx, ny = x, y - 1
                    bidx = (x * W + y - 1) * 2 + 1
                if nx < 0 or ny < 0 or nx >= W or ny >= W:
                    continue
                if bond_stamp[bidx] == token:
                    continue
                bond_stamp[bidx] = token
                if xo_u01(rng_state) < p:
                    cell = nx * W + ny
                    if stamp[cell] != token:
                        stamp[cell] = token
                        qx[tail] = nx
                        qy[tail] = ny
                        tail += 1
        if reached:
            hits += 1
    return hits


@njit(cache=True)
def grow_conditioned(p, tx, ty, half, max_attempts, rng_state,
                     out_x, out_y, edge_a, edge_b):
    """Grow clusters until one contains the target (tx, ty).

    Returns (n_vertices, n_edges, attempts); n_vertices = -1 when the budget
    is exhausted.  Edge endpoints are flat window cell ids.
    """
    W = 2 * half + 1
    stamp = np.zeros(W * W, dtype=np.int64)
    bond_stamp = np.zeros(W * W * 2, dtype=np.int64)
    qx = np.empty(W * W, dtype=np.int32)
    qy = np.empty(W * W, dtype=np.int32)
    token = 0
    for attempt in range(1, max_attempts + 1):
        token += 1
        n, ne = grow_cluster(p, half, stamp, bond_stamp, token, qx, qy,
                             out_x, out_y, edge_a, edge_b, rng_state, True)
        if n <= 0:
            continue
        for i in range(n):
            if out_x[i] == tx and out_y[i] == ty:
                return n, ne, attempt
    return -1, 0, max_attempts


# ---------------------------------------------------------------------------
# cone geometry scans
# ---------------------------------------------------------------------------


@njit(cache=True)
def cone_point_scan(px, py, ulo_x, ulo_y, uhi_x, uhi_y):
    """Flags points y with every other point in (y + sector) or (y - sector).

    The open sector is bounded by the rays ulo, uhi (counterclockwise from
    ulo to uhi, less than a half turn); membership of a vector w is
    cross(ulo, w) > 0 and cross(uhi, w) < 0.  Points must be sorted so that
    the sector-projection is nondecreasing (any order with all "earlier"
    points outside the forward sector works; sorting by inner product with
    the dual direction does).
    """
    n = len(px)
    ok = np.ones(n, dtype=np.uint8)
    # backward containment: every earlier w must lie in y - sector,
    # i.e. cross(ulo, y) > cross(ulo, w) and cross(uhi, y) < cross(uhi, w).
    lo_max = -1.0e300
    hi_min = 1.0e300
    for j in range(n):
        clo = ulo_x * py[j] - ulo_y * px[j]
        chi = uhi_x * py[j] - uhi_y * px[j]
        if j > 0 and not (clo > lo_max and chi < hi_min):
            ok[j] = 0
        if clo > lo_max:
            lo_max = clo
        if chi < hi_min:
            hi_min = chi
    # forward containment: every later w must lie in y + sector,
    # i.e. cross(ulo, w) > cross(ulo, y) and cross(uhi, w) < cross(uhi, y).
    lo_min = 1.0e300
    hi_max = -1.0e300
    for j in range(n - 1, -1, -1):
        clo = ulo_x * py[j] - ulo_y * px[j]
        chi = uhi_x * py[j] - uhi_y * px[j]
        if j < n - 1 and not (clo < lo_min and chi > hi_max):
            ok[j] = 0
        if clo < lo_min:
            lo_min = clo
        if chi > hi_max:
            hi_max = chi
    return ok


@njit(cache=True, inline="always")
def _point_seg_d2(qx, qy, x0, y0, x1, y1):
    dx = x1 - x0
    dy = y1 - y0
    L2 = dx * dx + dy * dy
    if L2 == 0.0:
        t = 0.0
    else:
        t = ((qx - x0) * dx + (qy - y0) * dy) / L2
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
    ddx = qx - (x0 + t * dx)
    ddy = qy - (y0 + t * dy)
    return ddx * ddx + ddy * ddy


@njit(cache=True)
def hausdorff_cluster_polyline(px, py, ex0, ey0, ex1, ey1, ax, ay,
                               samples_per_seg):
    """Hausdorff distance between a cluster (vertices plus unit-edge
    segments) and a polyline.

    Cluster-to-line direction brute-forces cluster vertices against exact
    point-segment distances.  Line-to-cluster uses ``samples_per_seg``
    evenly spaced points per polyline segment against the cluster's edge
    segments (or its vertices when the cluster has no edges).
    """
    n = len(px)
    ne = len(ex0)
    na = len(ax)
    dmax = 0.0
    for i in range(n):
        best = 1.0e300
        for s in range(na - 1):
            d2 = _point_seg_d2(px[i], py[i], ax[s], ay[s], ax[s + 1], ay[s + 1])
            if d2 < best:
                best = d2
        if best > dmax:
            dmax = best
    for s in range(na - 1):
        x0 = ax[s]
        y0 = ay[s]
        dx = ax[s + 1] - x0
        dy = ay[s + 1] - y0
        for k in range(samples_per_seg + 1):
            t = k / samples_per_seg
            sx = x0 + t * dx
            sy = y0 + t * dy
            best = 1.0e300
            if ne > 0:
                for e in range(ne):
                    d2 = _point_seg_d2(sx, sy, ex0[e], ey0[e], ex1[e], ey1[e])
                    if d2 < best:
                        best = d2
            else:
                for i in range(n):
                    ddx = px[i] - sx
                    ddy = py[i] - sy
                    d2 = ddx * ddx + ddy * ddy
                    if d2 < best:
                        best = d2
            if best > dmax:
                dmax = best
    return np.sqrt(dmax)


# ---------------------------------------------------------------------------
# Dobrushin interface extraction
# ---------------------------------------------------------------------------


@njit(cache=True)
def potts_grid_arrays(N):
    """Edge arrays for the Potts box Lambda_N plus its range-1 shell.

    Vertices are cells of an L x L grid with L = 2N+3 (cell (a, b) is the
    lattice site (a-N-1, b-N-1)); edges are the nearest-neighbor pairs with
    at least one endpoint inside Lambda_N.
    """
    L = 2 * N + 3
    m_max = 2 * L * L
    eu = np.empty(m_max, dtype=np.int32)
    ev = np.empty(m_max, dtype=np.int32)
    k = 0
    for x in range(L):
        for y in range(L):
            for dirn in range(2):
                if dirn == 0:
                    nx, ny = x + 1, y
                else:
                    nx, ny = x, y + 1
                if nx >= L or ny >= L:
                    continue
                v_in = 1 <= x <= L - 2 and 1 <= y <= L - 2
                w_in = 1 <= nx <= L - 2 and 1 <= ny <= L - 2
                if v_in or w_in:
                    eu[k] = x * L + y
                    ev[k] = nx * L + ny
                    k += 1
    return eu[:k].copy(), ev[:k].copy()


@njit(cache=True)
def interface_component(spins, L, seeds, goals, comp_mark, token,
                        queue, out_i, out_j):
    """Connected component of disagreement dual edges attached to the seeds.

    ``spins`` is a flat L x L primal grid (box plus one shell layer).  Dual
    sites are indexed on an (L-1) x (L-1) grid; dual flat index d = i*(L-1)+j
    is the dual site at primal position (i + 1/2, j + 1/2) in grid
    coordinates.  A dual bond between neighboring dual sites is present when
    the primal bond it crosses joins disagreeing spins.  Seeds with no
    incident disagreement bond are skipped.  Returns (n_sites, reached_goal);
    component dual sites are written to out_i/out_j.
    """
    Ld = L - 1
    head = 0
    tail = 0
    reached = 0
    n = 0
    for si in range(len(seeds)):
        s0 = seeds[si]
        di = s0 // Ld
        dj = s0 % Ld
        has_edge = False
        for dirn in range(4):
            if dirn == 0:
                ni, nj = di + 1, dj
                ax, ay, bx, by = di + 1, dj, di + 1, dj + 1
            elif dirn == 1:
                ni, nj = di - 1, dj
                ax, ay, bx, by = di, dj, di, dj + 1
            elif dirn == 2:
                ni, nj = di, dj + 1
                ax, ay, bx, by = di, dj + 1, di + 1, dj + 1
            else:
                ni, nj = di, dj - 1
                ax, ay, bx, by = di, dj, di + 1, dj
            if ni < 0 or nj < 0 or ni >= Ld or nj >= Ld:
                continue
            if spins[ax * L + ay] != spins[bx * L + by]:
                has_edge = True
                break
        if has_edge and comp_mark[s0] != token:
            comp_mark[s0] = token
            queue[tail] = s0
            tail += 1
    while head < tail:
        d = queue[head]
        head += 1
        out_i[n] = d // Ld
        out_j[n] = d % Ld
        n += 1
        for g in range(len(goals)):
            if d == goals[g]:
                reached = 1
        di = d // Ld
        dj = d % Ld
        for dirn in range(4):
            if dirn == 0:
                ni, nj = di + 1, dj
                ax, ay, bx, by = di + 1, dj, di + 1, dj + 1
            elif dirn == 1:
                ni, nj = di - 1, dj
                ax, ay, bx, by = di, dj, di, dj + 1
            elif dirn == 2:
                ni, nj = di, dj + 1
                ax, ay, bx, by = di, dj + 1, di + 1, dj + 1
            else:
                ni, nj = di, dj - 1
                ax, ay, bx, by = di, dj, di + 1, dj
            if ni < 0 or nj < 0 or ni >= Ld or nj >= Ld:
                continue
            if spins[ax * L + ay] == spins[bx * L + by]:
                continue
            nd = ni * Ld + nj
            if comp_mark[nd] != token:
                comp_mark[nd] = token
                queue[tail] = nd
                tail += 1
    return n, reached


@njit(cache=True)
def count_disagreement_edges(spins, L, comp_mark, token):
    """Dual edges inside the marked component (both endpoints marked)."""
    Ld = L - 1
    cnt = 0
    for di in range(Ld):
        for dj in range(Ld):
            d = di * Ld + dj
            if comp_mark[d] != token:
                continue
            # count each dual bond once: directions +i and +j
            if di + 1 < Ld and comp_mark[(di + 1) * Ld + dj] == token:
                if spins[(di + 1) * L + dj] != spins[(di + 1) * L + dj + 1]:
                    cnt += 1
            if dj + 1 < Ld and comp_mark[di * Ld + dj + 1] == token:
                if spins[di * L + dj + 1] != spins[(di + 1) * L + dj + 1]:
                    cnt += 1
    return cnt
