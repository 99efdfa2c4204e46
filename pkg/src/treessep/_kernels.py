"""Compiled inner loops for the stirring dynamics and trajectory replays."""

import numpy as np
from numba import njit

RECOMPUTE_EVERY = 100_000


@njit(cache=True, nogil=True)
def _grow(times, edges, n):
    new_t = np.empty(2 * len(times) + 16, dtype=times.dtype)
    new_e = np.empty(2 * len(edges) + 16, dtype=edges.dtype)
    new_t[:n] = times[:n]
    new_e[:n] = edges[:n]
    return new_t, new_e


@njit(cache=True, nogil=True)
def run_plain(occ, e0, e1, t, slot, n_targets, seed, record, capacity, max_events):
    """Stirring: each edge swaps its endpoints at rate 1.

    ``occ`` is modified in place.  Returns (occupation times, n_effective_swaps,
    n_rings, event times, event edges); the event arrays are only filled when
    ``record`` is set and hold state-changing swaps only.
    """
    np.random.seed(seed)
    E = len(e0)
    X = np.zeros(n_targets)
    last = np.zeros(n_targets)
    times = np.empty(capacity if record else 0)
    evs = np.empty(capacity if record else 0, dtype=np.int64)
    n_rec = 0
    n_rings = 0
    now = 0.0
    if E == 0 or t <= 0:
        for v in range(len(occ)):
            s = slot[v]
            if s >= 0:
                X[s] = occ[v] * t
        return X, 0, 0, times[:0], evs[:0]
    rate = float(E)
    while True:
        now += -np.log(1.0 - np.random.random()) / rate
        if now > t:
            break
        n_rings += 1
        if n_rings > max_events:
            raise RuntimeError("event cap exceeded")
        e = np.random.randint(0, E)
        a = e0[e]
        b = e1[e]
        if occ[a] == occ[b]:
            continue
        sa = slot[a]
        if sa >= 0:
            X[sa] += occ[a] * (now - last[sa])
            last[sa] = now
        sb = slot[b]
        if sb >= 0:
            X[sb] += occ[b] * (now - last[sb])
            last[sb] = now
        tmp = occ[a]
        occ[a] = occ[b]
        occ[b] = tmp
        if record:
            if n_rec == len(times):
                times, evs = _grow(times, evs, n_rec)
            times[n_rec] = now
            evs[n_rec] = e
        n_rec += 1
    for v in range(len(occ)):
        s = slot[v]
        if s >= 0:
            X[s] += occ[v] * (t - last[s])
    n_keep = n_rec if record else 0
    return X, n_rec, n_rings, times[:n_keep], evs[:n_keep]


@njit(cache=True, nogil=True)
def _edge_excess(occ, e0, e1, kappa, f):
    return np.exp((occ[e1[f]] - occ[e0[f]]) * kappa[f]) - 1.0


@njit(cache=True, nogil=True)
def _total_excess(occ, e0, e1, kappa):
    s = 0.0
    for f in range(len(e0)):
        s += _edge_excess(occ, e0, e1, kappa, f)
    return s


@njit(cache=True, nogil=True)
def run_tilted(occ, e0, e1, kappa, inc_ptr, inc_edges, t, slot, n_targets, seed,
               record, capacity, max_events):
    """Stirring with edge (a, b) swap rate exp((occ[b] - occ[a]) * kappa[e]).

    Exact thinning against the bound exp(max |kappa|).  Also returns the time
    integral of sum_e (rate_e - 1), the compensator of the exponential
    martingale.
    """
    np.random.seed(seed)
    E = len(e0)
    X = np.zeros(n_targets)
    last = np.zeros(n_targets)
    times = np.empty(capacity if record else 0)
    evs = np.empty(capacity if record else 0, dtype=np.int64)
    n_rec = 0
    n_rings = 0
    now = 0.0
    comp = 0.0
    if E == 0 or t <= 0:
        for v in range(len(occ)):
            s = slot[v]
            if s >= 0:
                X[s] = occ[v] * t
        return X, comp, 0, 0, times[:0], evs[:0]
    kmax = 0.0
    for f in range(E):
        if abs(kappa[f]) > kmax:
            kmax = abs(kappa[f])
    bound = np.exp(kmax)
    rate = E * bound
    excess = _total_excess(occ, e0, e1, kappa)
    prev = 0.0
    since = 0
    while True:
        now += -np.log(1.0 - np.random.random()) / rate
        if now > t:
            break
        n_rings += 1
        if n_rings > max_events:
            raise RuntimeError("event cap exceeded")
        e = np.random.randint(0, E)
        u = np.random.random()
        a = e0[e]
        b = e1[e]
        if occ[a] == occ[b]:
            continue
        r = np.exp((occ[b] - occ[a]) * kappa[e])
        if u * bound >= r:
            continue
        comp += excess * (now - prev)
        prev = now
        sa = slot[a]
        if sa >= 0:
            X[sa] += occ[a] * (now - last[sa])
            last[sa] = now
        sb = slot[b]
        if sb >= 0:
            X[sb] += occ[b] * (now - last[sb])
            last[sb] = now
        for j in range(inc_ptr[a], inc_ptr[a + 1]):
            excess -= _edge_excess(occ, e0, e1, kappa, inc_edges[j])
        for j in range(inc_ptr[b], inc_ptr[b + 1]):
            f = inc_edges[j]
            if f != e:
                excess -= _edge_excess(occ, e0, e1, kappa, f)
        tmp = occ[a]
        occ[a] = occ[b]
        occ[b] = tmp
        for j in range(inc_ptr[a], inc_ptr[a + 1]):
            excess += _edge_excess(occ, e0, e1, kappa, inc_edges[j])
        for j in range(inc_ptr[b], inc_ptr[b + 1]):
            f = inc_edges[j]
            if f != e:
                excess += _edge_excess(occ, e0, e1, kappa, f)
        since += 1
        if since >= RECOMPUTE_EVERY:
            excess = _total_excess(occ, e0, e1, kappa)
            since = 0
        if record:
            if n_rec == len(times):
                times, evs = _grow(times, evs, n_rec)
            times[n_rec] = now
            evs[n_rec] = e
        n_rec += 1
    comp += excess * (t - prev)
    for v in range(len(occ)):
        s = slot[v]
        if s >= 0:
            X[s] += occ[v] * (t - last[s])
    n_keep = n_rec if record else 0
    return X, comp, n_rec, n_rings, times[:n_keep], evs[:n_keep]


@njit(cache=True, nogil=True)
def replay(occ, e0, e1, events):
    """Apply swaps in order; returns, per event, the occupancy of edge end 0 before it."""
    before = np.empty(len(events), dtype=np.int8)
    for i in range(len(events)):
        e = events[i]
        a = e0[e]
        b = e1[e]
        before[i] = occ[a]
        tmp = occ[a]
        occ[a] = occ[b]
        occ[b] = tmp
    return before


@njit(cache=True, nogil=True)
def phi_integral(occ, e0, e1, inc_ptr, inc_edges, weight, q, times, events, t):
    """int_0^t sum_e [(occ(a) - occ(b))^2 - q] * weight[e] du, updated per swap."""
    s = 0.0
    for f in range(len(e0)):
        s += ((occ[e0[f]] - occ[e1[f]]) ** 2 - q) * weight[f]
    total = 0.0
    prev = 0.0
    for i in range(len(events)):
        now = times[i]
        total += s * (now - prev)
        prev = now
        e = events[i]
        a = e0[e]
        b = e1[e]
        for j in range(inc_ptr[a], inc_ptr[a + 1]):
            f = inc_edges[j]
            if f != e:
                s -= ((occ[e0[f]] - occ[e1[f]]) ** 2) * weight[f]
        for j in range(inc_ptr[b], inc_ptr[b + 1]):
            f = inc_edges[j]
            if f != e:
                s -= ((occ[e0[f]] - occ[e1[f]]) ** 2) * weight[f]
        tmp = occ[a]
        occ[a] = occ[b]
        occ[b] = tmp
        for j in range(inc_ptr[a], inc_ptr[a + 1]):
            f = inc_edges[j]
            if f != e:
                s += ((occ[e0[f]] - occ[e1[f]]) ** 2) * weight[f]
        for j in range(inc_ptr[b], inc_ptr[b + 1]):
            f = inc_edges[j]
            if f != e:
                s += ((occ[e0[f]] - occ[e1[f]]) ** 2) * weight[f]
    total += s * (t - prev)
    return total
