"""Backward influence sets, collision statistics and pathwise duality.

The influence set of (x, t) is grown backward in time: every member carries
the same two clocks as in the forward process, and when one rings it adds
the J (or K) neighbours whose states the flip decision would read. Adding a
site that is already a member is a collision.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import stats

from .lattice import build_neighborhood
from .rates import BernsteinRate

DEFAULT_CAP = 1_000_000


@njit(cache=True)
def _key(x, y):
    return (x + 1073741824) * 2147483648 + (y + 1073741824)


@njit(cache=True)
def _grow(ax, ay, owner, anchors_x, anchors_y, offs, J, K, rG, rH, n, t_end, cap, record, rng):
    """Backward growth from one or more anchors on Z^2 (n <= 0) or an n-torus.

    ``rG``/``rH`` are scalar clock rates per member. Returns the member count,
    event count, self/cross collision counts, first-collision time, the
    truncation flag and (when ``record``) the event log.
    """
    members = set()
    size = 0
    for a in range(anchors_x.size):
        k = _key(anchors_x[a], anchors_y[a])
        if k not in members:
            members.add(k)
            ax[size] = anchors_x[a]
            ay[size] = anchors_y[a]
            owner[size] = a
            size += 1
    nn = offs.shape[0]
    perm = np.arange(nn)
    rate_one = rG + rH
    t = 0.0
    events = 0
    coll = 0
    cross = 0
    first = -1.0
    owners = {}
    for i in range(size):
        owners[_key(ax[i], ay[i])] = owner[i]
    ev_t = np.empty(0)
    ev_parent = np.empty(0, np.int64)
    ev_kind = np.empty(0, np.int8)
    ev_new = np.empty(0, np.int64)
    if record:
        ev_t = np.empty(1024)
        ev_parent = np.empty(1024, np.int64)
        ev_kind = np.empty(1024, np.int8)
        ev_new = np.empty(1024, np.int64)
    if rate_one <= 0:
        return size, 0, 0, 0, first, False, ev_t[:0], ev_parent[:0], ev_kind[:0], ev_new[:0]
    while True:
        t += rng.standard_exponential() / (rate_one * size)
        if t > t_end:
            break
        p = rng.integers(0, size)
        birth = rng.random() * rate_one < rG
        d = J if birth else K
        added = 0
        for i in range(d):
            r = i + rng.integers(0, nn - i)
            tmp = perm[i]
            perm[i] = perm[r]
            perm[r] = tmp
            x = ax[p] + offs[perm[i], 0]
            y = ay[p] + offs[perm[i], 1]
            if n > 0:
                x %= n
                y %= n
            k = _key(x, y)
            if k in members:
                coll += 1
                if first < 0:
                    first = t
                if owners[k] != owner[p]:
                    cross += 1
            else:
                if size >= cap:
                    return size, events, coll, cross, first, True, ev_t, ev_parent, ev_kind, ev_new
                members.add(k)
                owners[k] = owner[p]
                ax[size] = x
                ay[size] = y
                owner[size] = owner[p]
                size += 1
                added += 1
        if record:
            if events >= ev_t.size:
                ev_t = np.concatenate((ev_t, np.empty(ev_t.size)))
                ev_parent = np.concatenate((ev_parent, np.empty(ev_parent.size, np.int64)))
                ev_kind = np.concatenate((ev_kind, np.empty(ev_kind.size, np.int8)))
                ev_new = np.concatenate((ev_new, np.empty(ev_new.size, np.int64)))
            ev_t[events] = t
            ev_parent[events] = p
            ev_kind[events] = 0 if birth else 1
            ev_new[events] = added
        events += 1
    return size, events, coll, cross, first, False, ev_t[:events], ev_parent[:events], ev_kind[:events], ev_new[:events]


@dataclass
class InfluenceSet:
    """Backward influence set from one or more anchors.

    ``sites`` lists members in order of addition; ``owner`` gives the
    anchor whose lineage added each one. Event kinds: 0 = birth (J sites),
    1 = death (K sites).
    """

    anchors: np.ndarray
    t: float
    sites: np.ndarray
    owner: np.ndarray
    event_times: np.ndarray
    event_parent: np.ndarray
    event_kind: np.ndarray
    event_added: np.ndarray
    collisions: int
    cross_collisions: int
    first_collision: float | None
    truncated: bool
    n_events: int

    @property
    def collided(self) -> bool:
        return self.collisions > 0

    @property
    def size(self) -> int:
        return self.sites.shape[0]


def _clock_rates(G, H, A, B):
    return G.lam * float(A), H.lam * float(B)


def _run(anchors, t, L, G, H, A, B, M, cap, record, rng):
    anchors = np.atleast_2d(np.asarray(anchors, dtype=np.int64))
    offs = build_neighborhood(L)
    rG, rH = _clock_rates(G, H, A, B)
    n = int(L * M) if M is not None else 0
    buf = min(cap, 1 << 16)
    while True:
        ax = np.empty(buf + max(G.degree, H.degree) + anchors.shape[0], np.int64)
        ay = np.empty_like(ax)
        ow = np.empty_like(ax)
        # rerun with a larger buffer if needed; the cap check inside uses buf
        state = rng.bit_generator.state
        out = _grow(ax, ay, ow, anchors[:, 0].copy(), anchors[:, 1].copy(), offs, G.degree, H.degree,
                    rG, rH, n, float(t), buf, record, rng)
        if out[5] and buf < cap:
            rng.bit_generator.state = state
            buf = min(cap, buf * 8)
            continue
        return ax, ay, ow, out


def simulate_influence_set(x, t: float, L: int, G: BernsteinRate, H: BernsteinRate, A: float = 1.0,
                           B: float = 1.0, *, M: int | None = None, seed=0,
                           cap: int = DEFAULT_CAP) -> InfluenceSet:
    """Grow the influence set of anchor(s) ``x`` (site coordinates) for dual time ``t``.

    ``M=None`` runs on the infinite lattice; otherwise on the (LM)-torus.
    Clock rates are lam_G*A and lam_H*B per member; use the field maxima
    for a heterogeneous bound.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    ax, ay, ow, out = _run(x, t, L, G, H, A, B, M, cap, True, rng)
    size, events, coll, cross, first, trunc, et, ep, ek, en = out
    return InfluenceSet(np.atleast_2d(np.asarray(x)), float(t), np.stack([ax[:size], ay[:size]], 1),
                        ow[:size].copy(), et.copy(), ep.copy(), ek.copy(), en.copy(), int(coll), int(cross),
                        None if first < 0 else float(first), bool(trunc), int(events))


def mean_bound(G: BernsteinRate, H: BernsteinRate, A: float, B: float, t: float, start: int = 1) -> float:
    """Branching upper bound start * exp((lam_G A J + lam_H B K) t) on E|I_t|."""
    return start * float(np.exp((G.lam * A * G.degree + H.lam * B * H.degree) * t))


@dataclass
class SizeStats:
    mean: float
    sem: float
    upper99: float
    lower99: float
    bound: float
    reps: int
    truncated: int

    @property
    def within_bound(self) -> bool:
        """The bound is not exceeded at 99% one-sided confidence."""
        return self.lower99 <= self.bound


def dual_size_stats(t: float, L: int, G, H, A=1.0, B=1.0, reps: int = 2000, seed=0,
                    cap: int = DEFAULT_CAP) -> SizeStats:
    rng = np.random.default_rng(seed)
    sizes, trunc = [], 0
    for _ in range(reps):
        _, _, _, out = _run((0, 0), t, L, G, H, A, B, None, cap, False, rng)
        if out[5]:
            trunc += 1
            continue
        sizes.append(out[0])
    s = np.asarray(sizes, float)
    m = float(s.mean())
    se = float(s.std(ddof=1) / np.sqrt(s.size))
    z = stats.norm.ppf(0.99)
    return SizeStats(m, se, m + z * se, m - z * se, mean_bound(G, H, A, B, t), s.size, trunc)


@dataclass
class CollisionRow:
    L: int
    t: float
    reps: int
    hits: int
    ci_lo: float
    ci_hi: float
    mean_size: float
    pair_hits: int = 0
    pair_cross_hits: int = 0

    @property
    def p(self) -> float:
        return self.hits / self.reps

    @property
    def p_pair(self) -> float:
        return self.pair_hits / self.reps

    @property
    def p_pair_cross(self) -> float:
        return self.pair_cross_hits / self.reps


@dataclass
class CollisionTable:
    rows: list[CollisionRow]
    slope: float
    slope_se: float
    intercept: float


def _wilson(k, n, conf=0.95):
    lo, hi = stats.binomtest(k, n).proportion_ci(conf, method="wilson")
    return float(lo), float(hi)


def collision_probability(L_list, t: float, reps: int, G: BernsteinRate, H: BernsteinRate,
                          A: float = 1.0, B: float = 1.0, *, pair_distance: float | None = None,
                          seed=0, cap: int = DEFAULT_CAP) -> CollisionTable:
    """Monte Carlo collision probabilities and a log-log fit against L.

    Single anchors run on the infinite lattice. With ``pair_distance`` (in
    interaction radii) a second anchor is placed that far away and both the
    union collision (any added site already in the union) and the cross
    collision (one lineage landing on the other's set) are counted.
    """
    if reps < 1000:
        raise ValueError("reps must be at least 1000")
    rng = np.random.default_rng(seed)
    rows = []
    for L in L_list:
        hits, size_sum, ph, pc = 0, 0, 0, 0
        for _ in range(reps):
            _, _, _, out = _run((0, 0), t, L, G, H, A, B, None, cap, False, rng)
            hits += out[2] > 0
            size_sum += out[0]
            if pair_distance is not None:
                d = int(round(pair_distance * L))
                _, _, _, o2 = _run([(0, 0), (d, 0)], t, L, G, H, A, B, None, cap, False, rng)
                ph += o2[2] > 0
                pc += o2[3] > 0
        lo, hi = _wilson(hits, reps)
        rows.append(CollisionRow(int(L), float(t), reps, int(hits), lo, hi, size_sum / reps, int(ph), int(pc)))
    ok = [r for r in rows if r.hits > 0]
    if len(ok) >= 2:
        fit = stats.linregress(np.log([r.L for r in ok]), np.log([r.p for r in ok]))
        slope, se, icpt = float(fit.slope), float(fit.stderr), float(fit.intercept)
    else:
        slope = se = icpt = float("nan")
    return CollisionTable(rows, slope, se, icpt)


# ---------------------------------------------------------------- continuum envelope

@njit(cache=True)
def _brw(rG, J, rH, K, t_end, box, cap, rng):
    xs = np.empty(cap)
    ys = np.empty(cap)
    xs[0] = 0.0
    ys[0] = 0.0
    size = 1
    rate_one = rG + rH
    t = 0.0
    while True:
        t += rng.standard_exponential() / (rate_one * size)
        if t > t_end:
            return True, size, False
        p = rng.integers(0, size)
        d = J if rng.random() * rate_one < rG else K
        for _ in range(d):
            if size >= cap:
                return True, size, True
            # uniform point on the unit disk
            r = np.sqrt(rng.random())
            a = 2.0 * np.pi * rng.random()
            x = xs[p] + r * np.cos(a)
            y = ys[p] + r * np.sin(a)
            if abs(x) > box or abs(y) > box:
                return False, size, False
            xs[size] = x
            ys[size] = y
            size += 1


@dataclass
class EnvelopeResult:
    t: float
    kappa: float
    reps: int
    contained: int
    capped: int

    @property
    def fraction(self) -> float:
        return self.contained / self.reps

    @property
    def rate(self) -> float:
        """-log(1 - containment) / t; inf when no run escaped."""
        miss = 1.0 - self.fraction
        return float("inf") if miss <= 0 else -np.log(miss) / self.t


def brw_envelope(t: float, kappa: float, reps: int, G: BernsteinRate, H: BernsteinRate,
                 A: float = 1.0, B: float = 1.0, seed=0, cap: int = 200_000) -> EnvelopeResult:
    """Fraction of continuum branching-random-walk runs staying inside [-kappa t, kappa t]^2.

    Positions never move once placed, so containment up to time t is the
    same as containment of every particle ever born.
    """
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    rng = np.random.default_rng(seed)
    rG, rH = _clock_rates(G, H, A, B)
    inside = capped = 0
    for _ in range(reps):
        ok, _, hit_cap = _brw(rG, G.degree, rH, H.degree, float(t), kappa * t, cap, rng)
        if hit_cap:
            capped += 1
        elif ok:
            inside += 1
    return EnvelopeResult(float(t), float(kappa), reps - capped, inside, capped)


# ---------------------------------------------------------------- pathwise duality

@dataclass
class GraphicalRep:
    """Per-site Poisson event streams with neighbour draws and uniform marks,
    sorted by time. ``nbr[e, :d]`` are neighbour offset indices."""

    n: int
    times: np.ndarray
    site: np.ndarray
    kind: np.ndarray
    mark: np.ndarray
    nbr: np.ndarray
    site_ptr: np.ndarray
    site_events: np.ndarray
    prev: np.ndarray


@njit(cache=True)
def _draw_neighbours(counts_d, nn, dmax, rng):
    E = counts_d.size
    out = np.full((E, dmax), -1, np.int64)
    perm = np.arange(nn)
    for e in range(E):
        for i in range(counts_d[e]):
            r = i + rng.integers(0, nn - i)
            tmp = perm[i]
            perm[i] = perm[r]
            perm[r] = tmp
            out[e, i] = perm[i]
    return out


def graphical_representation(L: int, M: int, G, H, A, B, t: float, seed) -> GraphicalRep:
    rng = np.random.default_rng(seed)
    n = L * M
    A = np.broadcast_to(np.asarray(A, float), (n, n)).ravel()
    B = np.broadcast_to(np.asarray(B, float), (n, n)).ravel()
    cb = rng.poisson(G.lam * A * t)
    cd = rng.poisson(H.lam * B * t)
    site = np.concatenate([np.repeat(np.arange(n * n), cb), np.repeat(np.arange(n * n), cd)])
    kind = np.concatenate([np.zeros(cb.sum(), np.int8), np.ones(cd.sum(), np.int8)])
    times = rng.random(site.size) * t
    order = np.argsort(times, kind="stable")
    site, kind, times = site[order], kind[order], times[order]
    mark = rng.random(site.size)
    nbh = build_neighborhood(L)
    d = np.where(kind == 0, G.degree, H.degree).astype(np.int64)
    nbr = _draw_neighbours(d, nbh.shape[0], max(G.degree, H.degree), rng)
    by_site = np.argsort(site, kind="stable")  # stays time-ordered within a site
    ptr = np.zeros(n * n + 1, np.int64)
    np.add.at(ptr, site + 1, 1)
    ptr = np.cumsum(ptr)
    prev = np.full(site.size, -1, np.int64)
    for s in range(n * n):
        ev = by_site[ptr[s]:ptr[s + 1]]
        prev[ev[1:]] = ev[:-1]
    return GraphicalRep(n, times, site, kind, mark, nbr, ptr, by_site, prev)


@njit(cache=True)
def _forward(occ, n, offs, site, kind, mark, nbr, accG, accH):
    J = accG.size - 1
    K = accH.size - 1
    for e in range(site.size):
        k = site[e]
        x = k // n
        y = k - x * n
        birth = kind[e] == 0
        if birth != (occ[k] == 0):
            continue
        d = J if birth else K
        target = 1 if birth else 0
        c = 0
        for i in range(d):
            o = nbr[e, i]
            xx = (x + offs[o, 0]) % n
            yy = (y + offs[o, 1]) % n
            if occ[xx * n + yy] == target:
                c += 1
        acc = accG[c] if birth else accH[c]
        if mark[e] < acc:
            occ[k] = 1 - occ[k]
    return occ


@njit(cache=True)
def _last_before(times, site_events, lo, hi, tq):
    """Index (into events) of the last event in site_events[lo:hi] with time < tq, or -1."""
    a, b = lo, hi
    while a < b:
        mid = (a + b) // 2
        if times[site_events[mid]] < tq:
            a = mid + 1
        else:
            b = mid
    return site_events[a - 1] if a > lo else -1


@njit(cache=True)
def _backward(x0, t, init, n, offs, times, site, kind, mark, nbr, ptr, site_events, prev, accG, accH):
    """Evaluate the state of site x0 at time t from the event streams alone.

    Returns (value, number of events evaluated)."""
    J = accG.size - 1
    K = accH.size - 1
    val = np.full(site.size, -1, np.int8)
    top = _last_before(times, site_events, ptr[x0], ptr[x0 + 1], t + 1e-300)
    if top < 0:
        return init[x0], 0
    # an event can be pushed once per dependant, so size for the worst case
    stack = np.empty(site.size * (max(J, K) + 1) + 1, np.int64)
    sp = 0
    stack[sp] = top
    sp += 1
    evaluated = 0
    while sp > 0:
        e = stack[sp - 1]
        if val[e] >= 0:
            sp -= 1
            continue
        k = site[e]
        p = prev[e]
        if p >= 0 and val[p] < 0:
            stack[sp] = p
            sp += 1
            continue
        before = init[k] if p < 0 else val[p]
        birth = kind[e] == 0
        if birth != (before == 0):
            val[e] = before
            evaluated += 1
            sp -= 1
            continue
        x = k // n
        y = k - x * n
        d = J if birth else K
        target = 1 if birth else 0
        c = 0
        pending = False
        for i in range(d):
            o = nbr[e, i]
            xx = (x + offs[o, 0]) % n
            yy = (y + offs[o, 1]) % n
            z = xx * n + yy
            q = _last_before(times, site_events, ptr[z], ptr[z + 1], times[e])
            if q < 0:
                v = init[z]
            elif val[q] < 0:
                stack[sp] = q
                sp += 1
                pending = True
                continue
            else:
                v = val[q]
            if v == target:
                c += 1
        if pending:
            continue
        acc = accG[c] if birth else accH[c]
        val[e] = (1 - before) if mark[e] < acc else before
        evaluated += 1
        sp -= 1
    return val[top], evaluated


@dataclass
class DualityTrial:
    agree: bool
    forward: int
    backward: int
    events_evaluated: int
    events_total: int


def dual_forward_trial(x, t: float, L: int, G, H, A=1.0, B=1.0, *, M: int = 2, seed=0,
                       init=None, density: float = 0.5) -> DualityTrial:
    if L > 10 or M > 2 or t > 3:
        raise ValueError("duality check is limited to L <= 10, M <= 2, t <= 3")
    n = L * M
    gr = graphical_representation(L, M, G, H, A, B, t, seed)
    if init is None:
        init = (np.random.default_rng([seed, 1]).random(n * n) < density).astype(np.int8)
    init = np.asarray(init, np.int8).ravel()
    offs = build_neighborhood(L)
    occ = _forward(init.copy(), n, offs, gr.site, gr.kind, gr.mark, gr.nbr, G.acceptance, H.acceptance)
    k = int(x[0]) % n * n + int(x[1]) % n
    bval, used = _backward(k, float(t), init, n, offs, gr.times, gr.site, gr.kind, gr.mark, gr.nbr,
                           gr.site_ptr, gr.site_events, gr.prev, G.acceptance, H.acceptance)
    return DualityTrial(bool(occ[k] == bval), int(occ[k]), int(bval), int(used), int(gr.site.size))


def dual_forward_agreement(x, t: float, L: int, seed, G, H, A=1.0, B=1.0, **kw) -> bool:
    """Forward simulation and backward computation agree on xi_t(x) for one
    shared graphical representation."""
    return dual_forward_trial(x, t, L, G, H, A, B, seed=seed, **kw).agree
