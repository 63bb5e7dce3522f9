"""Integro-differential limit equation on a periodic grid.

    du/dt = A(x) (1 - u) G(ubar) - B(x) u H(1 - ubar),   ubar = average of u over D(x, 1)

Plus front-speed estimation for planar fronts and bisection for the ratio
theta1 at which the front speed changes sign.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
from numba import njit

from .meanfield import fixed_points, max_rate, ode_trajectory
from .rates import BernsteinRate, HeterogeneityField, bernstein_scalar, field_at

log = logging.getLogger(__name__)

# theta1 of the default power model (alpha=3, beta=0.5, Bernstein degree 60),
# from theta1_bisect at h=0.05 and h=0.025 (identical to 1e-3);
# regenerated by tests/test_ide.py::test_reference_theta1
POWER_THETA1 = 6.5126


@dataclass(frozen=True, eq=False)
class DiskKernel:
    """Uniform weights on grid cells whose centres lie in the closed unit disk."""

    h: float
    offsets: np.ndarray  # (k, 2) integer cell offsets
    weights: np.ndarray  # (k,), sums to 1

    @property
    def radius_cells(self) -> int:
        return int(np.abs(self.offsets).max())

    def dense(self) -> np.ndarray:
        r = self.radius_cells
        out = np.zeros((2 * r + 1, 2 * r + 1))
        out[self.offsets[:, 0] + r, self.offsets[:, 1] + r] = self.weights
        return out

    def projected(self) -> np.ndarray:
        """1-D marginal of the kernel along the first axis (offsets -r..r)."""
        return self.dense().sum(axis=1)


def disk_kernel(h: float) -> DiskKernel:
    r = int(np.floor(1.0 / h + 1e-9))
    i, j = np.meshgrid(np.arange(-r, r + 1), np.arange(-r, r + 1), indexing="ij")
    # integer test avoids rounding: (i h)^2 + (j h)^2 <= 1  <=>  i^2 + j^2 <= 1/h^2
    inv = 1.0 / h
    keep = (i * i + j * j) <= inv * inv * (1 + 1e-12)
    offs = np.stack([i[keep], j[keep]], axis=1)
    w = np.full(offs.shape[0], 1.0 / offs.shape[0])
    return DiskKernel(h, offs, w)


@dataclass
class ScalarField:
    """Grid function on the torus [0, M)^2 with spacing h; cell (i, j) is
    centred at ((i + 0.5) h, (j + 0.5) h)."""

    M: float
    h: float
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        n = self.M / self.h
        if abs(n - round(n)) > 1e-9:
            raise ValueError(f"M/h = {n} is not an integer")
        if self.values.shape != (round(n), round(n)):
            raise ValueError(f"values must have shape {(round(n), round(n))}")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def centers(self) -> np.ndarray:
        c = (np.arange(self.n) + 0.5) * self.h
        return c

    @classmethod
    def from_function(cls, M: float, h: float, f, t: float = 0.0) -> "ScalarField":
        n = int(round(M / h))
        c = (np.arange(n) + 0.5) * h
        X, Y = np.meshgrid(c, c, indexing="ij")
        return cls(M, h, np.asarray(f(X, Y), dtype=float) * np.ones((n, n)), t)

    @classmethod
    def constant(cls, M: float, h: float, c: float) -> "ScalarField":
        n = int(round(M / h))
        return cls(M, h, np.full((n, n), float(c)))

    def sample(self, x, y) -> np.ndarray:
        """Periodic bilinear interpolation at continuum points."""
        n = self.n
        s = np.mod(np.asarray(x, float), self.M) / self.h - 0.5
        t = np.mod(np.asarray(y, float), self.M) / self.h - 0.5
        i0 = np.floor(s).astype(int)
        j0 = np.floor(t).astype(int)
        fx, fy = s - i0, t - j0
        i0 %= n
        j0 %= n
        i1, j1 = (i0 + 1) % n, (j0 + 1) % n
        v = self.values
        return ((1 - fx) * (1 - fy) * v[i0, j0] + fx * (1 - fy) * v[i1, j0]
                + (1 - fx) * fy * v[i0, j1] + fx * fy * v[i1, j1])


class DiskAverager:
    """Periodic convolution with the disk kernel via real FFTs.

    The kernel transform is cached per grid shape. FFTs run single-threaded,
    so results do not depend on worker count.
    """

    def __init__(self, h: float, n: int):
        self.kernel = disk_kernel(h)
        if 2 * self.kernel.radius_cells + 1 > n:
            raise ValueError("grid is smaller than the interaction disk")
        full = np.zeros((n, n))
        offs = self.kernel.offsets
        full[offs[:, 0] % n, offs[:, 1] % n] += self.kernel.weights
        # circular correlation == convolution here because the kernel is symmetric
        self._khat = sfft.rfft2(full)
        self.n = n

    def __call__(self, u: np.ndarray) -> np.ndarray:
        out = sfft.irfft2(sfft.rfft2(u) * self._khat, s=u.shape)
        np.clip(out, 0.0, 1.0, out=out)
        return out


def disk_average(u: ScalarField, averager: DiskAverager | None = None) -> ScalarField:
    if averager is None:
        averager = DiskAverager(u.h, u.n)
    return ScalarField(u.M, u.h, averager(u.values), u.t)


def coefficients_on_grid(fld: HeterogeneityField, M: float, h: float):
    """A(x) = a(x/M), B(x) = b(x/M) at the cell centres of an (M/h)^2 grid."""
    n = int(round(M / h))
    c = (np.arange(n) + 0.5) / n
    Y = np.stack(np.meshgrid(c, c, indexing="ij"), axis=-1)
    return field_at(fld, Y)


@njit(cache=True)
def _reaction(cG, lG, cH, lH, A, B, u, ub, out):
    for i in range(u.size):
        x = ub[i]
        out[i] = A[i] * (1.0 - u[i]) * lG * bernstein_scalar(cG, x) \
            - B[i] * u[i] * lH * bernstein_scalar(cH, 1.0 - x)
    return out


class _IDESystem:
    def __init__(self, G, H, A, B, n, avg):
        self.G, self.H = G, H
        self.A = np.ascontiguousarray(np.broadcast_to(A, (n, n)), dtype=float).ravel()
        self.B = np.ascontiguousarray(np.broadcast_to(B, (n, n)), dtype=float).ravel()
        self.avg = avg
        self.shape = (n, n)
        self._buf = np.empty(n * n)

    def rhs(self, u):
        ub = self.avg(u).ravel()
        out = np.empty(u.size)
        _reaction(self.G.coef, self.G.lam, self.H.coef, self.H.lam, self.A, self.B,
                  u.ravel(), ub, out)
        return out.reshape(self.shape)

    def step(self, u, dt):
        k1 = self.rhs(u)
        k2 = self.rhs(u + 0.5 * dt * k1)
        k3 = self.rhs(u + 0.5 * dt * k2)
        k4 = self.rhs(u + dt * k3)
        return u + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def ide_solve(u0: ScalarField, A, B, G: BernsteinRate, H: BernsteinRate, t_end: float,
              dt: float | None = None, snapshot_times=None) -> list[ScalarField]:
    """Explicit RK4 integration of the IDE.

    ``A`` and ``B`` are constants, arrays on the grid, or ``B`` may be
    omitted when ``A`` is a HeterogeneityField (pass ``B=None``).
    Returns snapshots at ``snapshot_times`` (default: only ``t_end``).
    """
    if isinstance(A, HeterogeneityField):
        A, B = coefficients_on_grid(A, u0.M, u0.h)
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    rate = float(A.max()) * G.lam + float(B.max()) * H.lam
    bound = 0.1 / rate
    if dt is None:
        dt = bound
    if dt > bound * (1 + 1e-12):
        raise ValueError(f"dt={dt} violates the rate bound dt <= {bound:.4g}")
    v = u0.values.astype(float)
    if np.any(v < 0) or np.any(v > 1):
        raise ValueError("initial values must lie in [0, 1]")

    n = u0.n
    sys_ = _IDESystem(G, H, A, B, n, DiskAverager(u0.h, n))
    times = [t_end] if snapshot_times is None else sorted(snapshot_times)
    nsteps = int(np.ceil(t_end / dt - 1e-9))
    marks = {}
    for ts in times:
        marks.setdefault(min(int(round(ts / dt)), nsteps), []).append(ts)

    out = []
    for ts in marks.get(0, []):
        out.append(ScalarField(u0.M, u0.h, v.copy(), u0.t + ts))
    for k in range(1, nsteps + 1):
        v = sys_.step(v, dt)
        lo, hi = v.min(), v.max()
        if lo < -1e-12 or hi > 1 + 1e-12:
            raise RuntimeError(f"IDE left [0,1] at step {k}: range [{lo}, {hi}]")
        np.clip(v, 0.0, 1.0, out=v)
        for ts in marks.get(k, []):
            out.append(ScalarField(u0.M, u0.h, v.copy(), u0.t + ts))
    return out


# ---------------------------------------------------------------- fronts

class DomainTooShort(RuntimeError):
    pass


@dataclass
class FrontTrace:
    times: np.ndarray
    positions: np.ndarray
    speed: float
    residual: float
    level: float
    fit_from: float = 0.0


@njit(cache=True)
def _conv_edge(u, w, out):
    n = u.size
    r = (w.size - 1) // 2
    for i in range(n):
        acc = 0.0
        for k in range(-r, r + 1):
            j = i + k
            if j < 0:
                j = 0
            elif j >= n:
                j = n - 1
            acc += w[k + r] * u[j]
        if acc < 0.0:
            acc = 0.0
        elif acc > 1.0:
            acc = 1.0
        out[i] = acc
    return out


@njit(cache=True)
def _rhs1(u, w, cG, lG, cH, lH, A, B, ub, out):
    _conv_edge(u, w, ub)
    for i in range(u.size):
        x = ub[i]
        out[i] = A * (1.0 - u[i]) * lG * bernstein_scalar(cG, x) \
            - B * u[i] * lH * bernstein_scalar(cH, 1.0 - x)
    return out


@njit(cache=True)
def _crossing(u, level, h):
    for i in range(u.size - 1):
        if u[i] >= level and u[i + 1] < level:
            return (i + 0.5) * h + h * (u[i] - level) / (u[i] - u[i + 1])
    return np.nan


@njit(cache=True)
def _front_run(u, w, cG, lG, cH, lH, A, B, dt, nsteps, every, level, h, margin):
    n = u.size
    nsamp = nsteps // every + 1
    pos = np.full(nsamp, np.nan)
    ub = np.empty(n)
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    pos[0] = _crossing(u, level, h)
    length = n * h
    for s in range(1, nsteps + 1):
        _rhs1(u, w, cG, lG, cH, lH, A, B, ub, k1)
        for i in range(n):
            tmp[i] = u[i] + 0.5 * dt * k1[i]
        _rhs1(tmp, w, cG, lG, cH, lH, A, B, ub, k2)
        for i in range(n):
            tmp[i] = u[i] + 0.5 * dt * k2[i]
        _rhs1(tmp, w, cG, lG, cH, lH, A, B, ub, k3)
        for i in range(n):
            tmp[i] = u[i] + dt * k3[i]
        _rhs1(tmp, w, cG, lG, cH, lH, A, B, ub, k4)
        for i in range(n):
            v = u[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            u[i] = min(max(v, 0.0), 1.0)
        if s % every == 0:
            p = _crossing(u, level, h)
            pos[s // every] = p
            if not (margin < p < length - margin):
                return pos, s // every
    return pos, nsamp - 1


def front_speed(G: BernsteinRate, H: BernsteinRate, A: float, B: float, *, h: float = 0.05,
                length: float = 40.0, t_end: float = 40.0, sample_dt: float = 0.25,
                burn_in: float = 0.25, dt: float | None = None) -> FrontTrace:
    """Speed of a planar front, positive when the forest state v2 invades 0.

    The profile is invariant in the transverse direction, so the disk
    average reduces exactly to the kernel's 1-D marginal. The strip is
    ``length`` long with constant extension at both ends; the initial step
    is v2 on the left half and 0 on the right.
    """
    rep = fixed_points(G, H, A, B)
    v1, v2 = rep.bistable_pair()
    level = 0.5 * (v1 + v2)
    n = int(round(length / h))
    x = (np.arange(n) + 0.5) * h
    u = np.where(x < length / 2, v2, 0.0)
    w = disk_kernel(h).projected()
    bound = 0.1 / max_rate(G, H, A, B)
    if dt is None:
        dt = bound
    every = max(1, int(round(sample_dt / dt)))
    nsteps = int(np.ceil(t_end / dt / every)) * every
    margin = 2.0
    pos, last = _front_run(u, w, G.coef, G.lam, H.coef, H.lam, float(A), float(B), float(dt),
                           nsteps, every, level, h, margin)
    times = np.arange(pos.size) * every * dt
    if last < pos.size - 1 or np.isnan(pos).any():
        raise DomainTooShort(f"front left the strip at t={times[last]:.2f} (length {length})")
    start = int(np.floor(burn_in * (pos.size - 1)))
    tt, pp = times[start:], pos[start:]
    coef = np.polyfit(tt, pp, 1)
    resid = float(np.sqrt(np.mean((pp - np.polyval(coef, tt)) ** 2)))
    # the front moves right (toward the 0 region) when v2 invades
    return FrontTrace(times, pos, float(coef[0]), resid, level, float(tt[0]))


# ---------------------------------------------------------------- theta1

@dataclass
class Theta1Result:
    theta1: float
    bracket: tuple[float, float]
    tol: float
    samples: list[tuple[float, float]] = field(default_factory=list)


def theta1_bisect(G: BernsteinRate, H: BernsteinRate, bracket: tuple[float, float],
                  tol: float = 1e-2, speed_floor: float = 1e-6, **front_kw) -> Theta1Result:
    """Bisection on the sign of the front speed in theta = A/B (B = 1)."""
    lo, hi = map(float, bracket)
    if not lo < hi:
        raise ValueError("bracket must satisfy lo < hi")
    for th in (lo, hi):
        if not fixed_points(G, H, th, 1.0).bistable:
            raise ValueError(f"theta={th} is outside the bistable range")
    samples = []

    def rho(th):
        tr = front_speed(G, H, th, 1.0, **front_kw)
        samples.append((th, tr.speed, tr.residual))
        log.info("theta=%.6f rho=%.3e resid=%.1e", th, tr.speed, tr.residual)
        return tr.speed

    if not (rho(lo) < -speed_floor and rho(hi) > speed_floor):
        raise ValueError(f"bracket does not straddle a sign change: {samples}")
    while hi - lo > 2 * tol:
        mid = 0.5 * (lo + hi)
        if rho(mid) > speed_floor:
            hi = mid
        else:
            lo = mid
    ordered = sorted(samples)
    for (t0, r0, e0), (t1, r1, e1) in zip(ordered, ordered[1:]):
        if r1 < r0 - max(e0, e1) - 1e-9:
            raise RuntimeError(f"front speed not monotone in theta: rho({t0})={r0} > rho({t1})={r1}")
    return Theta1Result(0.5 * (lo + hi), bracket, tol, [(t, r) for t, r, _ in ordered])


# ---------------------------------------------------------------- Weinberger hypotheses

@dataclass
class HypothesisReport:
    v1: float
    v2: float
    constants: list[tuple[float, float]]
    violations: list[str]
    max_order_violation: float

    @property
    def ok(self) -> bool:
        return not self.violations


def time_one_constant(G, H, A, B, alpha, dt=None):
    """Q[alpha] for a constant field: the IDE reduces to the mean-field ODE."""
    return float(ode_trajectory(G, H, A, B, alpha, 1.0, dt).u[-1])


def weinberger_hypotheses_check(G: BernsteinRate, H: BernsteinRate, A: float, B: float, *,
                                n_alpha: int = 20, n_pairs: int = 20, M: float = 4.0,
                                h: float = 0.1, seed: int = 0) -> HypothesisReport:
    """Numerical check of the iteration hypotheses for the time-1 map Q.

    Constants in (v1, v2) must move up, constants in (v2, 1) down, v2 stays
    put, and Q must preserve the pointwise order of random field pairs.
    """
    v1, v2 = fixed_points(G, H, A, B).bistable_pair()
    viol = []
    consts = []
    qv2 = time_one_constant(G, H, A, B, v2)
    if abs(qv2 - v2) > 1e-8:
        viol.append(f"Q[v2]-v2 = {qv2 - v2:.2e}")
    for a in np.linspace(v1 + 0.05, v2 - 0.05, n_alpha):
        q = time_one_constant(G, H, A, B, a)
        consts.append((float(a), q))
        if not q > a:
            viol.append(f"Q[{a:.4f}] = {q:.6f} is not above alpha")
    if v2 < 1:
        for a in np.linspace(v2, 1.0, n_alpha + 2)[1:-1]:
            q = time_one_constant(G, H, A, B, a)
            consts.append((float(a), q))
            if not q < a:
                viol.append(f"Q[{a:.4f}] = {q:.6f} is not below alpha")

    rng = np.random.default_rng(seed)
    worst = 0.0
    n = int(round(M / h))
    for _ in range(n_pairs):
        u = rng.random((n, n)) * rng.random()
        v = u + (1 - u) * rng.random((n, n))
        qu = ide_solve(ScalarField(M, h, u), A, B, G, H, 1.0)[-1].values
        qv = ide_solve(ScalarField(M, h, v), A, B, G, H, 1.0)[-1].values
        worst = max(worst, float((qu - qv).max()))
    if worst > 1e-10:
        viol.append(f"order violated by {worst:.2e}")
    return HypothesisReport(v1, v2, consts, viol, worst)
