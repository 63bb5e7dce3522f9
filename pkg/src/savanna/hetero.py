"""Heterogeneous landscapes: region partition, seeded initial conditions,
per-region density reports and interface tracking."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import ndimage, stats
from scipy.spatial import cKDTree
from skimage.measure import find_contours

from .ide import DiskAverager, ScalarField, ide_solve
from .lattice import new_state, run
from .meanfield import STABLE, fixed_points
from .rates import BernsteinRate, HeterogeneityField, field_at

log = logging.getLogger(__name__)

GRASS, FOREST, BAND = 0, 1, 2
LABEL_NAMES = {GRASS: "grass", FOREST: "forest", BAND: "band"}


# ---------------------------------------------------------------- periodic helpers

def _periodic_components(mask: np.ndarray):
    """4-connected components of ``mask`` on the torus; returns (ids, count)."""
    lab, n = ndimage.label(mask)
    parent = np.arange(n + 1)

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in zip(np.concatenate([lab[0, :], lab[:, 0]]), np.concatenate([lab[-1, :], lab[:, -1]])):
        if a and b:
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
    roots = np.array([find(a) for a in range(n + 1)])
    uniq = np.unique(roots[1:]) if n else np.array([], int)
    remap = np.zeros(n + 1, int)
    for k, r in enumerate(uniq, 1):
        remap[roots == r] = k
    remap[0] = 0
    return remap[lab], len(uniq)


def _periodic_distance(outside: np.ndarray) -> np.ndarray:
    """Euclidean distance (in cells) from each cell centre to the nearest
    ``outside`` cell on the torus; inf if there is none."""
    if not outside.any():
        return np.full(outside.shape, np.inf)
    n0, n1 = outside.shape
    tiled = np.tile(~outside, (3, 3))
    d = ndimage.distance_transform_edt(tiled)
    return d[n0:2 * n0, n1:2 * n1]


def _periodic_chessboard(outside: np.ndarray) -> np.ndarray:
    if not outside.any():
        return np.full(outside.shape, np.inf)
    n0, n1 = outside.shape
    d = ndimage.distance_transform_cdt(np.tile(~outside, (3, 3)), metric="chessboard")
    return d[n0:2 * n0, n1:2 * n1].astype(float)


def periodic_contours(values: np.ndarray, level: float, side: float) -> list[np.ndarray]:
    """Level-set curves of a periodic grid field (cell-centred samples) on
    the torus [0, side)^2, grouped so that each entry is one closed or
    wrapping curve. Each curve is an unordered point set (x, y), x along
    axis 0; that is all the Hausdorff comparison needs."""
    n0 = values.shape[0]
    h = side / n0
    pad = np.pad(values, 1, mode="wrap")
    pieces = [(c - 1 + 0.5) * h for c in find_contours(pad, level)]
    pieces = [np.mod(p, side) for p in pieces if p.shape[0] > 1]
    if not pieces:
        return []
    # merge pieces sharing a vertex (pad copies overlap the interior)
    parent = list(range(len(pieces)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    owner = {}
    q = h * 1e-6
    for k, p in enumerate(pieces):
        for key in map(tuple, np.round(np.mod(p, side) / q).astype(np.int64) % int(round(side / q))):
            if key in owner:
                ra, rb = find(owner[key]), find(k)
                if ra != rb:
                    parent[rb] = ra
            else:
                owner[key] = k
    groups: dict[int, list[np.ndarray]] = {}
    for k, p in enumerate(pieces):
        groups.setdefault(find(k), []).append(p)
    curves = []
    for g in groups.values():
        pts = np.unique(np.round(np.concatenate(g) / q).astype(np.int64) % int(round(side / q)), axis=0) * q
        curves.append(pts)
    return curves


def torus_hausdorff(a: np.ndarray, b: np.ndarray, side: float) -> float:
    """Symmetric Hausdorff distance between point sets on the torus [0, side)^2."""
    if len(a) == 0 or len(b) == 0:
        return float("inf")
    a = np.mod(a, side)
    b = np.mod(b, side)
    # boxsize needs points strictly inside [0, side)
    a[a >= side] = 0.0
    b[b >= side] = 0.0
    ta = cKDTree(a, boxsize=side)
    tb = cKDTree(b, boxsize=side)
    return float(max(tb.query(a)[0].max(), ta.query(b)[0].max()))


# ---------------------------------------------------------------- partition

@dataclass
class RegionMap:
    """Coarse-cell labels on the unit torus; cell (i, j) is centred at ((i+0.5)/n, (j+0.5)/n)."""

    ratio: np.ndarray
    labels: np.ndarray
    components: np.ndarray  # 0 in the band, otherwise a component id >= 1
    component_label: dict[int, int]
    boundaries: list[np.ndarray]  # curves in unit-torus coordinates
    theta1: float
    delta: float

    @property
    def resolution(self) -> int:
        return self.labels.shape[0]

    def ids(self, label: int) -> list[int]:
        return [c for c, lab in self.component_label.items() if lab == label]

    def mask(self, cid: int) -> np.ndarray:
        return self.components == cid

    def cell_of(self, x, y, M: float):
        """Coarse cell indices of continuum points on the M-torus."""
        n = self.resolution
        i = (np.floor(np.mod(x, M) / M * n).astype(int)) % n
        j = (np.floor(np.mod(y, M) / M * n).astype(int)) % n
        return i, j


def region_partition(fld: HeterogeneityField, theta1: float, delta: float, resolution: int = 64) -> RegionMap:
    """Label cells forest (A/B > theta1 + delta), grass (< theta1 - delta) or band,
    extract periodic 4-connected components and the A/B = theta1 curves."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    c = (np.arange(resolution) + 0.5) / resolution
    Y = np.stack(np.meshgrid(c, c, indexing="ij"), axis=-1)
    a, b = field_at(fld, Y)
    ratio = a / b
    labels = np.full(ratio.shape, BAND, dtype=np.int8)
    labels[ratio > theta1 + delta] = FOREST
    labels[ratio < theta1 - delta] = GRASS
    comps = np.zeros(ratio.shape, dtype=int)
    owner = {}
    nxt = 1
    for lab in (FOREST, GRASS):
        ids, k = _periodic_components(labels == lab)
        for cid in range(1, k + 1):
            comps[ids == cid] = nxt
            owner[nxt] = lab
            nxt += 1
    curves = periodic_contours(ratio, theta1, 1.0) if (ratio.min() < theta1 < ratio.max()) else []
    return RegionMap(ratio, labels, comps, owner, curves, float(theta1), float(delta))


# ---------------------------------------------------------------- initial conditions

@dataclass
class Seed:
    component: int
    label: int
    center: tuple[float, float]  # continuum coordinates
    half_width: float | None  # None: whole component


@dataclass
class H3Initial:
    """Piecewise-constant initial density on the coarse cells of a RegionMap."""

    M: float
    density: np.ndarray
    seeds: list[Seed]

    def profile(self, x, y):
        n = self.density.shape[0]
        i = (np.floor(np.mod(x, self.M) / self.M * n).astype(int)) % n
        j = (np.floor(np.mod(y, self.M) / self.M * n).astype(int)) % n
        return self.density[i, j]

    __call__ = profile


class ComponentTooSmall(ValueError):
    def __init__(self, component: int, label: str, needed: float, available: float):
        super().__init__(f"{label} component {component} holds a square of half-width "
                         f"{available:.3g} at most; {needed:.3g} required")
        self.component = component


def build_h3_initial(regions: RegionMap, M: float, sigma1: float, sigma0: float = 0.0,
                     N1: float | None = None, N0: float | None = None,
                     background: dict | float = 0.0) -> H3Initial:
    """Density >= sigma1 on a square of half-width N1 in every forest component
    and <= sigma0 on one of half-width N0 in every grass component.

    ``N1``/``N0`` = None seeds the whole component. Cells outside the seeded
    squares take ``background`` (a float, or a dict keyed by label name).
    """
    n = regions.resolution
    cs = M / n
    if isinstance(background, dict):
        dens = np.zeros((n, n))
        for lab, name in LABEL_NAMES.items():
            dens[regions.labels == lab] = float(background.get(name, 0.0))
    else:
        dens = np.full((n, n), float(background))
    seeds = []
    for cid, lab in sorted(regions.component_label.items()):
        N, val = (N1, sigma1) if lab == FOREST else (N0, sigma0)
        m = regions.mask(cid)
        if N is None:
            dens[m] = val
            k = np.argwhere(m)[0]
            seeds.append(Seed(cid, lab, ((k[0] + 0.5) * cs, (k[1] + 0.5) * cs), None))
            continue
        cheb = _periodic_chessboard(~m)
        cheb[~m] = 0
        best = np.unravel_index(np.argmax(cheb), cheb.shape)
        avail = (cheb[best] - 0.5) * cs
        if avail < N - 1e-12:
            raise ComponentTooSmall(cid, LABEL_NAMES[lab], N, avail)
        r = int(np.ceil(N / cs - 0.5 - 1e-12))
        ii = (best[0] + np.arange(-r, r + 1)) % n
        jj = (best[1] + np.arange(-r, r + 1)) % n
        dens[np.ix_(ii, jj)] = val
        seeds.append(Seed(cid, lab, ((best[0] + 0.5) * cs, (best[1] + 0.5) * cs), float(N)))
    return H3Initial(float(M), dens, seeds)


# ---------------------------------------------------------------- run and report

@lru_cache(maxsize=4096)
def _equilibria(G: BernsteinRate, H: BernsteinRate, ratio: float):
    rep = fixed_points(G, H, ratio, 1.0)
    stable = [p.u for p in rep.points if p.stability == STABLE]
    v2 = max(stable)
    try:
        v1, _ = rep.bistable_pair()
    except ValueError:
        v1 = float("nan")
    return v1, v2


def upper_equilibrium(G: BernsteinRate, H: BernsteinRate, ratio: float) -> float:
    """Largest stable mean-field fixed point at A/B = ratio."""
    return _equilibria(G, H, round(float(ratio), 10))[1]


def core_masks(regions: RegionMap, M: float, buffer: float) -> dict[int, np.ndarray]:
    """Cells of each component farther than ``buffer`` (continuum units) from any other cell."""
    cs = M / regions.resolution
    out = {}
    for cid in regions.component_label:
        m = regions.mask(cid)
        d = _periodic_distance(~m) * cs
        out[cid] = m & (d > buffer)
    return out


@dataclass
class RegionSeries:
    component: int
    label: str
    target: float  # v2 for forest, 0 for grass
    core_cells: int
    core: list[float]
    whole: list[float]
    ide_core: list[float] = field(default_factory=list)


@dataclass
class HeteroReport:
    times: list[float]
    sampled: list[float]
    eps: float
    regions: list[RegionSeries]
    snapshots: list[np.ndarray]
    passed: bool
    reasons: list[str]

    def rows(self):
        for r in self.regions:
            for k, t in enumerate(self.times):
                yield (t, r.component, r.label, r.target, r.core[k], r.whole[k])


def _region_means(occ: np.ndarray, regions: RegionMap, masks: dict[int, np.ndarray]) -> dict[int, float]:
    n = occ.shape[0]
    res = regions.resolution
    if n % res:
        raise ValueError(f"lattice side {n} is not a multiple of the region resolution {res}")
    k = n // res
    cells = occ.reshape(res, k, res, k).mean(axis=(1, 3))
    return {cid: float(cells[m].mean()) if m.any() else float("nan") for cid, m in masks.items()}


def _score(regions, series, sampled_idx, eps):
    reasons = []
    for r in series:
        vals = np.asarray(r.core)[sampled_idx]
        if np.isnan(vals).any():
            reasons.append(f"component {r.component} has no core cells")
        elif r.label == "forest":
            bad = np.abs(vals - r.target) > eps
            if bad.any():
                reasons.append(f"forest component {r.component}: density {vals[bad][0]:.3f} "
                               f"outside {r.target:.3f} +/- {eps}")
        else:
            bad = vals > eps
            if bad.any():
                reasons.append(f"grass component {r.component}: density {vals[bad][0]:.3f} > {eps}")
    return not reasons, reasons


def default_sigma1(G, H, regions: RegionMap) -> float:
    """v1 + 0.75 (v2 - v1) at the weakest forest cell."""
    forest = regions.ratio[regions.labels == FOREST]
    if forest.size == 0:
        return 0.0
    v1, v2 = _equilibria(G, H, round(float(forest.min()), 10))
    if np.isnan(v1):
        v1 = 0.0
    return v1 + 0.75 * (v2 - v1)


def run_hetero(fld: HeterogeneityField, G: BernsteinRate, H: BernsteinRate, L: int, M: int, theta1: float,
               t0: float, t_cap: float, eps: float = 0.1, delta: float = 0.05, *, seed=0,
               sample_dt: float = 1.0, buffer: float = 0.5, resolution: int | None = None,
               initial: H3Initial | None = None, sigma1: float | None = None, ide_h: float | None = None,
               keep_snapshots: bool = False) -> HeteroReport:
    """Lattice run on a heterogeneous field with per-region scoring.

    Forest components must stay within eps of their mean v2 and grass
    components below eps on every sample in [t0, t_cap]. Scoring uses region
    cores (cells farther than ``buffer`` from other regions); whole-region
    means are reported as well. ``ide_h`` adds an IDE comparison run.
    """
    n = L * M
    if resolution is None:
        resolution = max(d for d in range(1, min(n, 128) + 1) if n % d == 0)
    regions = region_partition(fld, theta1, delta, resolution)
    if initial is None:
        s1 = default_sigma1(G, H, regions) if sigma1 is None else sigma1
        initial = build_h3_initial(regions, M, s1, 0.0)
    cores = core_masks(regions, M, buffer)
    wholes = {cid: regions.mask(cid) for cid in regions.component_label}
    times = sorted(set(np.round(np.arange(0.0, t_cap + 1e-9, sample_dt), 12)) | {float(t0), float(t_cap)})
    st = new_state(L, M, G, H, fld, None, init=initial.profile, seed=seed)
    res = run(st, G, H, t_cap, times, keep_snapshots=True)

    series = []
    for cid, lab in sorted(regions.component_label.items()):
        if lab == FOREST:
            tgt = float(np.mean([upper_equilibrium(G, H, r) for r in regions.ratio[cores[cid]]])) \
                if cores[cid].any() else float("nan")
        else:
            tgt = 0.0
        series.append(RegionSeries(cid, LABEL_NAMES[lab], tgt, int(cores[cid].sum()), [], []))
    for snap in res.snapshots:
        c = _region_means(snap, regions, cores)
        w = _region_means(snap, regions, wholes)
        for r in series:
            r.core.append(c[r.component])
            r.whole.append(w[r.component])

    if ide_h is not None:
        u0 = ScalarField.from_function(M, ide_h, initial.profile)
        snaps = ide_solve(u0, fld, None, G, H, t_cap, snapshot_times=res.times)
        for s in snaps:
            k = int(round(M / ide_h))
            cells = s.values.reshape(resolution, k // resolution, resolution, k // resolution).mean(axis=(1, 3)) \
                if k % resolution == 0 else None
            if cells is None:
                raise ValueError("IDE grid must refine the region grid")
            for r in series:
                m = cores[r.component]
                r.ide_core.append(float(cells[m].mean()) if m.any() else float("nan"))

    idx = [k for k, t in enumerate(res.times) if t0 - 1e-9 <= t <= t_cap + 1e-9]
    ok, reasons = _score(regions, series, idx, eps)
    return HeteroReport(list(res.times), [res.times[k] for k in idx], eps, series,
                        res.snapshots if keep_snapshots else [], ok, reasons)


def equilibration_time(fld: HeterogeneityField, G, H, M: int, initial: H3Initial, h: float = 0.05,
                       t_max: float = 30.0, step: float = 0.5, tol: float = 1e-3) -> float:
    """First time after which the IDE changes by less than ``tol`` (sup norm) per unit time."""
    u0 = ScalarField.from_function(M, h, initial.profile)
    ts = np.arange(0.0, t_max + 1e-9, step)
    snaps = ide_solve(u0, fld, None, G, H, t_max, snapshot_times=ts)
    rates = [np.abs(b.values - a.values).max() / step for a, b in zip(snaps, snaps[1:])]
    for k in range(len(rates)):
        if max(rates[k:]) < tol:
            return float(ts[k])
    return float(t_max)


# ---------------------------------------------------------------- interfaces

@dataclass
class BoundaryTrack:
    boundary: int
    times: list[float]
    distance: list[float]
    slope: float = float("nan")
    p_value: float = float("nan")
    drifting: bool = False
    within_band: bool = True


@dataclass
class BoundaryReport:
    status: str  # "ok", "no boundary", "no interface"
    level: float
    band: float
    tracks: list[BoundaryTrack]

    @property
    def passed(self) -> bool:
        return self.status == "ok" and all(t.within_band and not t.drifting for t in self.tracks)


def smoothed_density(occ: np.ndarray, L: int) -> np.ndarray:
    """Disk average of lattice occupancy over the interaction radius."""
    n = occ.shape[0]
    return DiskAverager(1.0 / L, n)(occ.astype(float))


def boundary_stability(times, fields, regions: RegionMap, M: float, t0: float, t_cap: float,
                       level: float, *, band: float = 2.0, alpha: float = 0.01,
                       drift_tol: float = 0.05) -> BoundaryReport:
    """Track the Hausdorff distance between each predicted A/B = theta1 curve
    and the empirical interface (level set of ``fields`` at ``level``).

    ``fields`` are density arrays on an (n, n) grid covering the M-torus
    (smoothed lattice densities or IDE values). Drift counts as significant
    when the regression slope over [t0, t_cap] has p < alpha and moves the
    interface by more than ``drift_tol`` over the window.
    """
    if not regions.boundaries:
        return BoundaryReport("no boundary", level, band, [])
    predicted = [c * M for c in regions.boundaries]
    allpred = np.concatenate(predicted)
    owner = np.concatenate([np.full(len(c), k) for k, c in enumerate(predicted)])
    tree = cKDTree(np.mod(allpred, M) % M, boxsize=M)
    tracks = [BoundaryTrack(k, [], []) for k in range(len(predicted))]
    for t, f in zip(times, fields):
        if not (t0 - 1e-9 <= t <= t_cap + 1e-9):
            continue
        curves = periodic_contours(np.asarray(f, float), level, M)
        if not curves:
            return BoundaryReport("no interface", level, band, tracks)
        emp = np.concatenate(curves)
        emp[emp >= M] = 0.0
        near = owner[tree.query(emp)[1]]
        for k, tr in enumerate(tracks):
            tr.times.append(float(t))
            tr.distance.append(torus_hausdorff(predicted[k], emp[near == k], M))
    for tr in tracks:
        d = np.asarray(tr.distance)
        tr.within_band = bool(np.all(d <= band))
        if len(d) >= 3 and np.ptp(d) > 0:
            fit = stats.linregress(tr.times, d)
            tr.slope, tr.p_value = float(fit.slope), float(fit.pvalue)
            tr.drifting = bool(fit.pvalue < alpha and abs(fit.slope) * (t_cap - t0) > drift_tol)
        else:
            tr.slope, tr.p_value = 0.0, 1.0
    return BoundaryReport("ok", level, band, tracks)


def interface_level(G, H, regions: RegionMap) -> float:
    """(v1 + v2) / 2 at the median forest ratio."""
    forest = regions.ratio[regions.labels == FOREST]
    if forest.size == 0:
        raise ValueError("no forest region")
    v1, v2 = _equilibria(G, H, round(float(np.median(forest)), 10))
    return 0.5 * ((0.0 if np.isnan(v1) else v1) + v2)
