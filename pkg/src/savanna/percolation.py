"""Renormalised wet sites, m-dependent oriented percolation and survival checks."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import stats

from .lattice import new_state, run, wet_sites
from .rates import BernsteinRate

N_MAX = 1_000_000


# ---------------------------------------------------------------- renormalisation

@dataclass
class WetLattice:
    """Wet renormalised sites (i, j, n); only entries with i + j + n even are meaningful."""

    N: float
    T: float
    layers: np.ndarray  # (n_layers, k, k) bool, zero off the even sublattice

    @property
    def period(self) -> float:
        return 2 * self.N

    @staticmethod
    def parity_mask(k: int, n: int) -> np.ndarray:
        i, j = np.indices((k, k))
        return (i + j + n) % 2 == 0

    def bounding_box(self, n: int):
        """(i_min, i_max, j_min, j_max) of wet sites in layer n, or None if dry."""
        idx = np.argwhere(self.layers[n])
        if idx.size == 0:
            return None
        return (int(idx[:, 0].min()), int(idx[:, 0].max()), int(idx[:, 1].min()), int(idx[:, 1].max()))

    def extent(self, n: int):
        """Side lengths (in blocks) of the wet bounding box of layer n, or None if dry.

        Wet sites alternate parity between layers, so a lone site cannot be
        contained by the next layer's box; comparing extents avoids that.
        """
        bb = self.bounding_box(n)
        return None if bb is None else (bb[1] - bb[0], bb[3] - bb[2])

    def spreading(self) -> bool:
        """True when no layer is dry and the box extent never shrinks."""
        ext = [self.extent(n) for n in range(self.layers.shape[0])]
        if any(e is None for e in ext):
            return False
        return all(b[0] >= a[0] and b[1] >= a[1] for a, b in zip(ext, ext[1:]))


def renormalize(snapshots, times, T: float, L: int, M: int, N: float, v2: float, delta: float,
                origin=(0.0, 0.0), gamma: float = 0.25) -> WetLattice:
    """Wet-site layers from snapshots taken at times 0, T, 2T, ..."""
    times = np.asarray(times, float)
    expect = np.arange(times.size) * T
    if times.size != len(snapshots) or not np.allclose(times, expect, rtol=0, atol=1e-9 * max(T, 1)):
        raise ValueError(f"snapshot times {times.tolist()} do not follow the schedule n*T with T={T}")
    layers = []
    for n, snap in enumerate(snapshots):
        w = wet_sites(snap, L, M, N, v2, delta, origin, gamma)
        layers.append(w & WetLattice.parity_mask(w.shape[0], n))
    return WetLattice(float(N), float(T), np.array(layers, dtype=bool))


def block_time(N: float, rho: float, b0: float = 1.0) -> float:
    """Layer spacing T = 5N / (b0 rho); b0 = 1 is the homogeneous case."""
    if rho <= 0:
        raise ValueError("front speed must be positive")
    return 5.0 * N / (b0 * rho)


def m_required(kappa: float, rho: float) -> int:
    """Smallest integer m with 2m - 3 - 5 kappa / rho > 3 + 5 kappa / rho, i.e. m > 3 + 5 kappa / rho."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    x = 3.0 + 5.0 * kappa / rho
    k = round(x)
    if abs(x - k) <= 1e-9 * max(1.0, abs(x)):
        return int(k) + 1
    return math.floor(x) + 1


# ---------------------------------------------------------------- oriented percolation

@dataclass(frozen=True)
class OPConfig:
    width: int
    p: float
    m: int = 1
    n_max: int = N_MAX

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")
        if self.m < 1:
            raise ValueError("m must be at least 1")
        if self.width < 2:
            raise ValueError("width must be at least 2")
        if self.n_max < 1:
            raise ValueError("n_max must be positive")

    @property
    def bad_probability(self) -> float:
        """Each site is open iff the m underlying flags in its window are all good;
        a flag is bad with probability 1 - p^(1/m), giving marginal p."""
        return 1.0 - self.p ** (1.0 / self.m)


@njit(cache=True)
def _op_skip(width, m, r, n_max, full, rng):
    """Survival time with closed sites generated by geometric skipping over
    the flag stream (width + m - 1 flags per layer)."""
    W = width + m - 1
    reach = np.zeros(width, np.bool_)
    nxt = np.zeros(width, np.bool_)
    closed = np.zeros(width, np.bool_)
    if full:
        for i in range(0, width, 2):
            reach[i] = True
    else:
        reach[(width // 2) & ~1] = True
    if r >= 1.0:
        return 1
    log1m = np.log1p(-r) if r > 0 else 0.0
    # flat index of the next bad flag
    pos = np.int64(-1)
    if r > 0:
        pos = np.int64(np.floor(np.log(1.0 - rng.random()) / log1m))
    for n in range(1, n_max):
        lo = np.int64(n - 1) * W
        hi = lo + W
        closed[:] = False
        if r > 0:
            while pos < hi:
                f = pos - lo
                a = max(0, f - m + 1)
                b = min(width - 1, f)
                for i in range(a, b + 1):
                    closed[i] = True
                pos += 1 + np.int64(np.floor(np.log(1.0 - rng.random()) / log1m))
        alive = False
        for i in range(width):
            v = False
            if (i + n) % 2 == 0 and not closed[i]:
                if i > 0 and reach[i - 1]:
                    v = True
                elif i < width - 1 and reach[i + 1]:
                    v = True
            nxt[i] = v
            alive |= v
        if not alive:
            return n
        reach, nxt = nxt, reach
    return n_max


@njit(cache=True)
def _op_skip_bits(width, m, r, n_max, full, rng):
    """Bit-parallel version of ``_op_skip`` for width <= 63; consumes the
    random stream identically."""
    W = width + m - 1
    row = (np.uint64(1) << np.uint64(width)) - np.uint64(1)
    reach = np.uint64(0)
    if full:
        for i in range(0, width, 2):
            reach |= np.uint64(1) << np.uint64(i)
    else:
        reach = np.uint64(1) << np.uint64((width // 2) & ~1)
    if r >= 1.0:
        return 1
    log1m = np.log1p(-r) if r > 0 else 0.0
    pos = np.int64(-1)
    if r > 0:
        pos = np.int64(np.floor(np.log(1.0 - rng.random()) / log1m))
    one = np.uint64(1)
    window = (one << np.uint64(m)) - one
    for n in range(1, n_max):
        lo = np.int64(n - 1) * W
        hi = lo + W
        closed = np.uint64(0)
        if r > 0:
            while pos < hi:
                f = pos - lo
                # a bad flag at f closes sites f-m+1 .. f
                if f >= m - 1:
                    closed |= window << np.uint64(f - m + 1)
                else:
                    closed |= window >> np.uint64(m - 1 - f)
                pos += 1 + np.int64(np.floor(np.log(1.0 - rng.random()) / log1m))
        reach = ((reach << one) | (reach >> one)) & row & ~closed
        if reach == 0:
            return n
    return n_max


@njit(cache=True)
def _op_uniform(width, m, q, n_max, full, rng):
    """Same process driven by one uniform per flag, so runs at different p
    with the same stream are coupled (larger p opens a superset of sites)."""
    W = width + m - 1
    reach = np.zeros(width, np.bool_)
    nxt = np.zeros(width, np.bool_)
    flags = np.empty(W)
    if full:
        for i in range(0, width, 2):
            reach[i] = True
    else:
        reach[(width // 2) & ~1] = True
    for n in range(1, n_max):
        for k in range(W):
            flags[k] = rng.random()
        alive = False
        for i in range(width):
            v = False
            if (i + n) % 2 == 0:
                ok = True
                for k in range(i, i + m):
                    if flags[k] >= q:
                        ok = False
                        break
                if ok and ((i > 0 and reach[i - 1]) or (i < width - 1 and reach[i + 1])):
                    v = True
            nxt[i] = v
            alive |= v
        if not alive:
            return n
        reach, nxt = nxt, reach
    return n_max


@dataclass
class SurvivalSample:
    cfg: OPConfig
    times: np.ndarray

    @property
    def censored(self) -> np.ndarray:
        return self.times >= self.cfg.n_max

    @property
    def censored_fraction(self) -> float:
        return float(self.censored.mean())

    @property
    def median(self) -> float:
        """Sample median; inf when at least half the runs hit the cap (the
        median is then only known to exceed n_max)."""
        if self.censored_fraction >= 0.5:
            return float("inf")
        return float(np.median(self.times))


def op_simulate(cfg: OPConfig, reps: int, seed=0, start: str = "full", coupled: bool = False) -> SurvivalSample:
    """Survival times (first layer with no reachable site), capped at ``n_max``.

    ``start`` is "full" (every even site of layer 0) or "single" (one site
    near the middle). ``coupled=True`` uses one uniform per flag so that two
    calls differing only in p are monotonically coupled; it is slower.
    """
    if start not in ("full", "single"):
        raise ValueError("start must be 'full' or 'single'")
    full = start == "full"
    out = np.empty(reps, np.int64)
    if coupled:
        q = cfg.p ** (1.0 / cfg.m)
        for k, ss in enumerate(np.random.SeedSequence(seed).spawn(reps)):
            out[k] = _op_uniform(cfg.width, cfg.m, q, cfg.n_max, full, np.random.default_rng(ss))
    else:
        rng = np.random.default_rng(seed)
        kernel = _op_skip_bits if cfg.width <= 63 and cfg.m <= 63 else _op_skip
        for k in range(reps):
            out[k] = kernel(cfg.width, cfg.m, cfg.bad_probability, cfg.n_max, full, rng)
    return SurvivalSample(cfg, out)


@dataclass
class ScalingFit:
    widths: list[int]
    medians: list[float]
    censored: list[float]
    slope: float
    increasing: bool


def op_scaling(widths, p: float, reps: int, m: int = 1, n_max: int = N_MAX, seed=0,
               start: str = "full") -> ScalingFit:
    """Medians of survival time across widths and the slope of log(median) vs width.

    A median hidden by censoring counts as unknown, so the sequence is only
    declared increasing when every median is observed.
    """
    meds, cens = [], []
    for k, w in enumerate(widths):
        s = op_simulate(OPConfig(int(w), p, m, n_max), reps, seed=[seed, k], start=start)
        meds.append(s.median)
        cens.append(s.censored_fraction)
    finite = [(w, md) for w, md in zip(widths, meds) if np.isfinite(md)]
    slope = float("nan")
    if len(finite) >= 2:
        slope = float(stats.linregress([w for w, _ in finite], np.log([md for _, md in finite])).slope)
    observed = all(np.isfinite(meds))
    increasing = observed and all(b > a for a, b in zip(meds, meds[1:])) and slope > 0
    return ScalingFit(list(widths), meds, cens, slope, bool(increasing))


def snake_embed(i0: int, j0: int, m: int) -> list[tuple[int, int]]:
    """Boustrophedon path over rows 0, m, 2m, ... <= j0 of {0..i0} x {0..j0}."""
    if i0 < 0 or j0 < 0 or m < 1:
        raise ValueError("need i0, j0 >= 0 and m >= 1")
    path = []
    for k, j in enumerate(range(0, j0 + 1, m)):
        cols = range(i0 + 1) if k % 2 == 0 else range(i0, -1, -1)
        path.extend((i, j) for i in cols)
    return path


# ---------------------------------------------------------------- persistence on the torus

@dataclass
class PersistenceRow:
    M: int
    runs: int
    persisted: int
    final_density: list[float]

    @property
    def fraction(self) -> float:
        return self.persisted / self.runs


def survival_scaling(G: BernsteinRate, H: BernsteinRate, theta: float, v2: float, M_list, L: int,
                     t0: float, t_cap: float, reps: int, eps: float = 0.1, *, B: float = 1.0,
                     init=None, sample_dt: float = 1.0, seed=0, mode: str = "persist") -> list[PersistenceRow]:
    """Fraction of runs whose global density stays in [v2 - eps, v2 + eps] on
    every sample in [t0, t_cap] (``mode="persist"``), or ends at most eps
    (``mode="die"``).

    ``init`` is a function of M giving an initial-condition spec for
    ``new_state``; by default product Bernoulli(v2) over the whole torus.
    """
    if init is None:
        def init(M):
            return {"kind": "bernoulli", "density": v2}
    samples = np.arange(t0, t_cap + 1e-9, sample_dt)
    rows = []
    for M in M_list:
        ok, finals = 0, []
        for r in range(reps):
            st = new_state(L, M, G, H, theta * B, B, init=init(M), seed=[seed, M, r])
            res = run(st, G, H, t_cap, samples, keep_snapshots=False)
            dens = np.array(res.densities)[np.searchsorted(res.times, samples[0]):]
            finals.append(float(dens[-1]))
            if mode == "persist":
                ok += bool(np.all(np.abs(dens - v2) <= eps))
            else:
                ok += bool(dens[-1] <= eps)
        rows.append(PersistenceRow(int(M), reps, ok, finals))
    return rows
