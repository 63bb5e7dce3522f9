"""Exact event-driven simulation of the two-type lattice model.

The torus (Z^2/L mod M)^2 is stored as an (L*M) x (L*M) array; site (i, j)
sits at continuum position (i/L, j/L). Every site carries two Poisson clocks
with constant rates lam_G*A(x) and lam_H*B(x). When the birth clock of a
vacant site rings, J distinct neighbours are drawn from x + N and the site
becomes occupied with probability p_j, j = number of occupied neighbours.
Deaths are symmetric with K neighbours and vacant counts.

Because clock rates never change, the site of the next event is drawn from
a static alias table and no neighbourhood densities are ever maintained.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .rates import BernsteinRate, HeterogeneityField, field_at

log = logging.getLogger(__name__)

MAX_SITES = 64_000_000


def build_neighborhood(L: int) -> np.ndarray:
    """Integer offsets d with 0 < |d| <= L, i.e. (Z^2/L) cap D(0,1) minus the origin."""
    if L < 1 or int(L) != L:
        raise ValueError("L must be a positive integer")
    L = int(L)
    r = np.arange(-L, L + 1)
    dx, dy = np.meshgrid(r, r, indexing="ij")
    d2 = dx * dx + dy * dy
    keep = (d2 > 0) & (d2 <= L * L)
    return np.stack([dx[keep], dy[keep]], axis=1).astype(np.int64)


@njit(cache=True)
def _vose(weights):
    n = weights.size
    total = weights.sum()
    scaled = weights * n / total
    prob = np.ones(n)
    alias = np.arange(n)
    small = np.empty(n, np.int64)
    large = np.empty(n, np.int64)
    ns = 0
    nl = 0
    for i in range(n):
        if scaled[i] < 1.0:
            small[ns] = i
            ns += 1
        else:
            large[nl] = i
            nl += 1
    while ns > 0 and nl > 0:
        ns -= 1
        s = small[ns]
        g = large[nl - 1]
        prob[s] = scaled[s]
        alias[s] = g
        scaled[g] = (scaled[g] + scaled[s]) - 1.0
        if scaled[g] < 1.0:
            nl -= 1
            small[ns] = g
            ns += 1
    return prob, alias


@njit(cache=True)
def _wrap(v, n, mask):
    if mask >= 0:
        return v & mask
    return v % n


@njit(cache=True)
def _sample_count(occ, n, mask, x, y, offs, perm, draws, target, rng):
    """Draw ``draws`` distinct offsets (partial Fisher-Yates) and count sites
    equal to ``target``. ``perm`` stays a permutation, so it is never reset."""
    nn = perm.size
    cnt = 0
    for i in range(draws):
        r = i + rng.integers(0, nn - i)
        tmp = perm[i]
        perm[i] = perm[r]
        perm[r] = tmp
        o = perm[i]
        xx = _wrap(x + offs[o, 0], n, mask)
        yy = _wrap(y + offs[o, 1], n, mask)
        if occ[xx * n + yy] == target:
            cnt += 1
    return cnt


@njit(cache=True)
def _advance(occ, n, mask, offs, perm, a_prob, a_idx, bfrac, accG, accH,
             total, t, t_next, t_end, max_events, rng):
    # t_next < 0 means no event time has been drawn yet; keeping it pending
    # across calls makes the path independent of where the caller stops.
    J = accG.size - 1
    K = accH.size - 1
    N = n * n
    events = 0
    flips = 0
    if t_next < 0:
        t_next = t + rng.standard_exponential() / total
    while events < max_events:
        if t_next > t_end:
            return t_end, t_next, events, flips
        t = t_next
        t_next = t + rng.standard_exponential() / total
        events += 1
        k = rng.integers(0, N)
        if rng.random() >= a_prob[k]:
            k = a_idx[k]
        x = k // n
        y = k - x * n
        if rng.random() < bfrac[k]:
            if occ[k] == 0:
                j = _sample_count(occ, n, mask, x, y, offs, perm, J, 1, rng)
                if rng.random() < accG[j]:
                    occ[k] = 1
                    flips += 1
        else:
            if occ[k] == 1:
                j = _sample_count(occ, n, mask, x, y, offs, perm, K, 0, rng)
                if rng.random() < accH[j]:
                    occ[k] = 0
                    flips += 1
    return t, t_next, events, flips


@njit(cache=True)
def _acceptance_trials(occ, n, mask, x, y, offs, perm, draws, target, acc, trials, rng):
    hits = 0
    for _ in range(trials):
        j = _sample_count(occ, n, mask, x, y, offs, perm, draws, target, rng)
        if rng.random() < acc[j]:
            hits += 1
    return hits


@dataclass(eq=False)
class LatticeState:
    """Occupancy of the fine torus plus the constant per-site clock rates."""

    L: int
    M: int
    occ: np.ndarray
    birth_rate: np.ndarray
    death_rate: np.ndarray
    seed: int
    rng: np.random.Generator
    t: float = 0.0
    t_next: float = -1.0
    events: int = 0
    flips: int = 0
    _alias: tuple = field(default=None, repr=False)
    _nbh: np.ndarray = field(default=None, repr=False)
    _perm: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        n = self.n
        if self.occ.shape != (n, n):
            raise ValueError(f"occupancy must be {n}x{n}")
        self.occ = np.ascontiguousarray(self.occ, dtype=np.uint8)
        if np.any(self.occ > 1):
            raise ValueError("occupancy must be 0/1")
        rates = (self.birth_rate + self.death_rate).ravel()
        if np.any(rates <= 0):
            raise ValueError("clock rates must be positive")
        prob, alias = _vose(rates.astype(float))
        bfrac = (self.birth_rate / (self.birth_rate + self.death_rate)).ravel()
        self._alias = (prob, alias, bfrac)
        self.total_rate = float(rates.sum())

    @property
    def n(self) -> int:
        return self.L * self.M

    @property
    def density(self) -> float:
        return float(self.occ.mean())

    def positions(self) -> np.ndarray:
        return np.arange(self.n) / self.L

    def recompute_total_rate(self) -> float:
        return float((self.birth_rate + self.death_rate).sum())

    def copy_occ(self) -> np.ndarray:
        return self.occ.copy()


def _coefficients(L, M, A, B):
    n = L * M
    if isinstance(A, HeterogeneityField):
        c = np.arange(n) / n
        Y = np.stack(np.meshgrid(c, c, indexing="ij"), axis=-1)
        return field_at(A, Y)
    A = np.broadcast_to(np.asarray(A, float), (n, n))
    B = np.broadcast_to(np.asarray(B, float), (n, n))
    return A, B


def new_state(L: int, M: int, G: BernsteinRate, H: BernsteinRate, A, B=None, init=0.0,
              seed: int = 0) -> LatticeState:
    """Build a lattice state.

    ``A``/``B`` are constants, (n, n) arrays, or ``A`` is a HeterogeneityField
    (then ``B`` is ignored). ``init`` is anything ``initial_configuration``
    accepts.
    """
    if L < 1 or M < 1 or int(L) != L or int(M) != M:
        raise ValueError("L and M must be positive integers")
    n = int(L) * int(M)
    if n * n > MAX_SITES:
        raise MemoryError(f"{n}x{n} sites exceeds the {MAX_SITES:,} site limit; "
                          f"reduce L*M below {int(np.sqrt(MAX_SITES))}")
    nbh = build_neighborhood(L)
    if max(G.degree, H.degree) > nbh.shape[0]:
        raise ValueError(f"neighbourhood of {nbh.shape[0]} sites is smaller than J={G.degree} "
                         f"or K={H.degree}; increase L")
    rng = np.random.default_rng(seed)
    Af, Bf = _coefficients(int(L), int(M), A, B)
    occ = initial_configuration(int(L), int(M), init, rng)
    return LatticeState(int(L), int(M), occ, G.lam * np.asarray(Af, float),
                        H.lam * np.asarray(Bf, float), seed, rng)


def initial_configuration(L: int, M: int, init, rng: np.random.Generator) -> np.ndarray:
    """Occupancy from a spec.

    Accepts a 0/1 array, a constant density, a callable p(x, y) on continuum
    coordinates (product Bernoulli), or a dict with ``kind`` in
    {bernoulli, plateau, bitmap}.
    """
    n = L * M
    if isinstance(init, np.ndarray) and init.dtype != float:
        return np.ascontiguousarray(init, dtype=np.uint8)
    if isinstance(init, dict):
        kind = init.get("kind", "bernoulli")
        if kind == "bitmap":
            return read_pbm(init["file"])
        if kind == "plateau":
            cx, cy = init.get("center", (M / 2, M / 2))
            N = float(init["half_width"])
            inside_p = float(init.get("density", 1.0))
            bg = float(init.get("background", 0.0))

            def prof(x, y):
                dx = np.abs((x - cx + M / 2) % M - M / 2)
                dy = np.abs((y - cy + M / 2) % M - M / 2)
                return np.where((dx <= N) & (dy <= N), inside_p, bg)
            init = prof
        elif kind == "bernoulli":
            init = float(init.get("density", 0.0))
        else:
            raise ValueError(f"unknown initial condition kind {kind!r}")
    if callable(init):
        x = np.arange(n) / L
        X, Y = np.meshgrid(x, x, indexing="ij")
        p = np.asarray(init(X, Y), dtype=float) * np.ones((n, n))
    else:
        p = np.broadcast_to(np.asarray(init, dtype=float), (n, n))
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError("densities must lie in [0, 1]")
    return (rng.random((n, n)) < p).astype(np.uint8)


def _mask(n):
    return n - 1 if n & (n - 1) == 0 else -1


def _kernel_args(state: LatticeState):
    if state._nbh is None:
        state._nbh = build_neighborhood(state.L)
        state._perm = np.arange(state._nbh.shape[0], dtype=np.int64)
    return state._nbh, state._perm


def advance(state: LatticeState, G: BernsteinRate, H: BernsteinRate, t_end: float = np.inf,
            max_events: int = np.iinfo(np.int64).max) -> LatticeState:
    """Run events until the clock passes ``t_end`` or ``max_events`` fire."""
    nbh, perm = _kernel_args(state)
    prob, alias, bfrac = state._alias
    flat = state.occ.reshape(-1)
    t, tn, ev, fl = _advance(flat, state.n, _mask(state.n), nbh, perm, prob, alias, bfrac,
                             G.acceptance, H.acceptance, state.total_rate, state.t, state.t_next,
                             float(t_end), int(max_events), state.rng)
    state.t = t
    state.t_next = tn
    state.events += ev
    state.flips += fl
    return state


def step_exact(state: LatticeState, G: BernsteinRate, H: BernsteinRate) -> LatticeState:
    """Fire exactly one event (which may or may not flip the chosen site)."""
    return advance(state, G, H, np.inf, 1)


@dataclass
class RunResult:
    times: list[float]
    snapshots: list[np.ndarray]
    densities: list[float]
    log: list[tuple[float, int, int]]


def run(state: LatticeState, G: BernsteinRate, H: BernsteinRate, t_end: float,
        snapshot_times=(), keep_snapshots: bool = True) -> RunResult:
    """Advance to ``t_end`` recording snapshots at the requested times.

    Global densities and the (t, events, flips) log are recorded at every
    snapshot time; a final record at ``t_end`` is always added.
    """
    if t_end < state.t:
        raise ValueError("t_end is in the past")
    stops = sorted({float(s) for s in snapshot_times if state.t <= s <= t_end} | {float(t_end)})
    res = RunResult([], [], [], [])
    for s in stops:
        if s > state.t:
            advance(state, G, H, s)
        res.times.append(s)
        res.densities.append(state.density)
        res.log.append((s, state.events, state.flips))
        if keep_snapshots:
            res.snapshots.append(state.occ.copy())
    return res


def acceptance_frequency(state: LatticeState, G: BernsteinRate, H: BernsteinRate, site, kind: str,
                         trials: int, seed: int = 0) -> float:
    """Fraction of clock rings at ``site`` that would flip it, surroundings frozen."""
    nbh = build_neighborhood(state.L)
    perm = np.arange(nbh.shape[0], dtype=np.int64)
    x, y = site
    rng = np.random.default_rng(seed)
    if kind == "birth":
        hits = _acceptance_trials(state.occ.reshape(-1), state.n, _mask(state.n), x, y, nbh, perm,
                                  G.degree, 1, G.acceptance, trials, rng)
    elif kind == "death":
        hits = _acceptance_trials(state.occ.reshape(-1), state.n, _mask(state.n), x, y, nbh, perm,
                                  H.degree, 0, H.acceptance, trials, rng)
    else:
        raise ValueError(kind)
    return hits / trials


def local_density(state: LatticeState, site) -> float:
    """f_1(x): occupied fraction of x + N."""
    nbh = build_neighborhood(state.L)
    x, y = site
    xs = (x + nbh[:, 0]) % state.n
    ys = (y + nbh[:, 1]) % state.n
    return float(state.occ[xs, ys].mean())


# ---------------------------------------------------------------- coarse graining

@dataclass
class CoarseDensity:
    gamma: float
    side: int  # tile side in sites
    values: np.ndarray  # (nt, nt) occupied fractions
    L: int

    def corners(self) -> np.ndarray:
        """Continuum coordinate of each tile's lower-left corner (per axis)."""
        return np.arange(self.values.shape[0]) * self.side / self.L

    def site_means(self) -> np.ndarray:
        """Mean continuum position of the sites in each tile (per axis)."""
        return (np.arange(self.values.shape[0]) * self.side + (self.side - 1) / 2) / self.L


def tile_side(L: int, gamma: float) -> int:
    if not 0 < gamma <= 0.25:
        raise ValueError("gamma must lie in (0, 1/4]")
    exact = L ** (1 - gamma)
    side = max(1, int(round(exact)))
    if abs(exact - side) > 1e-9:
        warnings.warn(f"L^(1-gamma) = {exact:.3f} is not an integer; using tiles of {side} sites",
                      stacklevel=3)
    return side


def coarse_density(occ, L: int, gamma: float = 0.25) -> CoarseDensity:
    """Occupied fraction on tiles of side ~L^(1-gamma) sites anchored at the origin.

    Incomplete tiles at the far edge of the torus are dropped.
    """
    occ = occ.occ if isinstance(occ, LatticeState) else np.asarray(occ)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        s = tile_side(L, gamma)
    n = occ.shape[0]
    nt = n // s
    if nt == 0:
        raise ValueError("tile larger than the torus")
    vals = occ[: nt * s, : nt * s].reshape(nt, s, nt, s).mean(axis=(1, 3))
    return CoarseDensity(gamma, s, vals, L)


# ---------------------------------------------------------------- wet blocks

def block_grid(M: float, N: float) -> int:
    k = M / (2 * N)
    if abs(k - round(k)) > 1e-9 or round(k) < 1:
        raise ValueError(f"torus side {M} is not a multiple of the block period {2 * N}")
    return int(round(k))


def wet_sites(occ, L: int, M: int, N: float, v2: float, delta: float, origin=(0.0, 0.0),
              gamma: float = 0.25) -> np.ndarray:
    """Boolean (k, k) array: block I_ij = origin + (2Ni, 2Nj) + [-N, N]^2 is wet
    iff every coarse tile inside it has density >= v2 - 2 delta."""
    cd = coarse_density(occ, L, gamma)
    k = block_grid(M, N)
    tile = cd.side / L
    corners = cd.corners()
    thr = v2 - 2 * delta
    out = np.zeros((k, k), dtype=bool)
    eps = 1e-9
    for i in range(k):
        lo_x = origin[0] + 2 * N * i - N
        rel_x = np.mod(corners - lo_x + eps, M) - eps
        in_x = np.flatnonzero(rel_x + tile <= 2 * N + eps)
        for j in range(k):
            lo_y = origin[1] + 2 * N * j - N
            rel_y = np.mod(corners - lo_y + eps, M) - eps
            in_y = np.flatnonzero(rel_y + tile <= 2 * N + eps)
            if in_x.size == 0 or in_y.size == 0:
                raise ValueError("blocks are smaller than one coarse tile")
            out[i, j] = bool(np.all(cd.values[np.ix_(in_x, in_y)] >= thr))
    return out


# ---------------------------------------------------------------- bitmaps

def write_pbm(path, occ: np.ndarray):
    """Plain-text portable bitmap (P1); 1 = occupied (black)."""
    occ = np.asarray(occ, dtype=np.uint8)
    h, w = occ.shape
    with open(path, "w") as fh:
        fh.write(f"P1\n{w} {h}\n")
        for row in occ:
            fh.write(" ".join(map(str, row)) + "\n")


def read_pbm(path) -> np.ndarray:
    tokens = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0]
        tokens.extend(line.split())
    if not tokens or tokens[0] != "P1":
        raise ValueError(f"{path}: only plain P1 bitmaps are supported")
    w, h = int(tokens[1]), int(tokens[2])
    bits = "".join(tokens[3:])
    if len(bits) == w * h:
        vals = np.frombuffer(bits.encode(), dtype=np.uint8) - ord("0")
    else:
        vals = np.array([int(t) for t in tokens[3:]], dtype=np.uint8)
    return vals.reshape(h, w).astype(np.uint8)


# ---------------------------------------------------------------- hydrodynamics

@dataclass
class HydroRow:
    L: int
    errors: list[float]

    @property
    def median(self) -> float:
        return float(np.median(self.errors))


def hydro_check(G: BernsteinRate, H: BernsteinRate, A, B, profile, t: float, L_list,
                M: int = 4, seeds=range(5), gamma: float = 0.25, h: float = 0.05,
                window=None) -> list[HydroRow]:
    """Sup-tile error between lattice coarse densities and the IDE at time ``t``.

    ``profile(x, y)`` is the initial density; every site starts as an
    independent Bernoulli of the profile at its position. Each tile is
    compared with the IDE averaged over the same sites. ``window`` is an
    optional ((x0, x1), (y0, y1)) continuum box restricting the tiles.
    """
    from .ide import ScalarField, ide_solve

    u0 = ScalarField.from_function(M, h, profile)
    Bi = None if isinstance(A, HeterogeneityField) else B
    ref = ide_solve(u0, A, Bi, G, H, t)[-1] if t > 0 else u0
    rows = []
    for L in L_list:
        n = L * M
        x = np.arange(n) / L
        X, Y = np.meshgrid(x, x, indexing="ij")
        fine = ref.sample(X, Y)
        errs = []
        for s in seeds:
            st = new_state(L, M, G, H, A, B, init=profile, seed=s)
            if t > 0:
                advance(st, G, H, t)
            cd = coarse_density(st.occ, L, gamma)
            side = cd.side
            nt = cd.values.shape[0]
            target = fine[: nt * side, : nt * side].reshape(nt, side, nt, side).mean(axis=(1, 3))
            diff = np.abs(cd.values - target)
            if window is not None:
                c = cd.site_means()
                (x0, x1), (y0, y1) = window
                keep_x = (c >= x0) & (c <= x1)
                keep_y = (c >= y0) & (c <= y1)
                diff = diff[np.ix_(keep_x, keep_y)]
            errs.append(float(diff.max()))
        rows.append(HydroRow(L, errs))
        log.info("hydro L=%d median sup error %.4f", L, rows[-1].median)
    return rows
