"""Mean-field ODE  du/dt = A (1-u) G(u) - B u H(1-u)  = u (1-u) [A g(u) - B h(1-u)].

Fixed points, their stability, the bistability threshold theta0 for the
power-law model, and RK4 trajectories.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.optimize import minimize_scalar

from .rates import BernsteinRate, PowerLawSpec, bernstein_scalar, check_M1, eval_g

STABLE = "stable"
UNSTABLE = "unstable"
MARGINAL = "marginal"


@dataclass(frozen=True)
class CaseReport:
    label: str
    zero: str
    one: str


def classify_cases(spec: PowerLawSpec) -> CaseReport:
    """Boundary stability from the exponents alone.

    alpha > 1 makes 0 stable (the birth term vanishes faster than the death
    term); beta > 1 does the same for 1.
    """
    a, b = spec.alpha, spec.beta
    if a == 1 or b == 1:
        raise ValueError("alpha = 1 or beta = 1 is degenerate")
    zero = STABLE if a > 1 else UNSTABLE
    one = STABLE if b > 1 else UNSTABLE
    label = {
        (UNSTABLE, UNSTABLE): "Case1",
        (STABLE, STABLE): "Case2",
        (STABLE, UNSTABLE): "Case3",
        (UNSTABLE, STABLE): "Case4",
    }[zero, one]
    return CaseReport(label, zero, one)


def _require_case3(spec: PowerLawSpec):
    if not spec.alpha > 1 > spec.beta:
        raise ValueError(f"theta0 is defined for alpha > 1 > beta only, got {spec}")


def peak_location(spec: PowerLawSpec) -> float:
    """Maximiser w of u^(alpha-1) (1-u)^(1-beta)."""
    _require_case3(spec)
    return (spec.alpha - 1) / (spec.alpha - spec.beta)


def peak_value(spec: PowerLawSpec) -> float:
    w = peak_location(spec)
    return w ** (spec.alpha - 1) * (1 - w) ** (1 - spec.beta)


def theta0(spec: PowerLawSpec) -> float:
    """Bistability threshold (a-b)^(a-b) / ((a-1)^(a-1) (1-b)^(1-b))."""
    _require_case3(spec)
    a, b = spec.alpha, spec.beta
    return (a - b) ** (a - b) / ((a - 1) ** (a - 1) * (1 - b) ** (1 - b))


@dataclass(frozen=True)
class FixedPoint:
    u: float
    stability: str


@dataclass
class FixedPointReport:
    points: list[FixedPoint]
    case_label: str
    w: float
    theta0: float | None = None
    residuals: list[float] = field(default_factory=list)

    @property
    def interior(self) -> list[FixedPoint]:
        return [p for p in self.points if 0.0 < p.u < 1.0]

    @property
    def bistable(self) -> bool:
        try:
            self.bistable_pair()
        except ValueError:
            return False
        return True

    def bistable_pair(self) -> tuple[float, float]:
        """(v1, v2): the upper stable point v2 > 0 and the unstable point below it.

        Requires 0 to be stable as well, so that 0 and v2 are the two
        attracting states.
        """
        if self.points[0].stability != STABLE:
            raise ValueError("0 is not stable; no grass/forest bistability")
        stable = [p for p in self.points if p.stability == STABLE and p.u > 0]
        if not stable:
            raise ValueError("no stable fixed point above 0")
        v2 = max(p.u for p in stable)
        below = [p.u for p in self.points if p.stability == UNSTABLE and 0 < p.u < v2]
        if not below:
            raise ValueError("no unstable interior fixed point below v2")
        return max(below), v2


def _drift_factor(G, H, A, B):
    def D(u):
        return A * eval_g(G, u) - B * eval_g(H, 1.0 - np.asarray(u))
    return D


def _sign_near(D, u, side):
    val = D(u)
    if val != 0:
        return np.sign(val)
    return np.sign(D(u + side * 1e-6))


def _bisect(D, lo, hi, dlo, resid=1e-12):
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        dm = float(D(mid))
        if abs(dm) < resid or hi - lo < 4e-16:
            return mid, dm
        if np.sign(dm) == np.sign(dlo):
            lo, dlo = mid, dm
        else:
            hi = mid
    return mid, dm


def fixed_points(G: BernsteinRate, H: BernsteinRate, A: float, B: float,
                 grid_step: float = 1e-4) -> FixedPointReport:
    """Fixed points of the mean-field ODE with stability tags.

    Interior roots of A g(u) = B h(1-u) come from a sign scan followed by
    bisection; stability is read off the sign of the drift at u* -/+ 1e-6.
    """
    if not (A > 0 and B > 0):
        raise ValueError("A and B must be positive")
    m1 = check_M1(G, H)
    if not m1:
        raise ValueError(f"(M1) violated: g(u)/h(1-u) is not unimodal (grid argmax {m1.w:.3f})")
    w, th0 = _ratio_peak(G, H, m1)
    return _analyze(_drift_factor(G, H, A, B), w, th0, grid_step)


def power_fixed_points(spec: PowerLawSpec, A: float, B: float, grid_step: float = 1e-4) -> FixedPointReport:
    """Same analysis on the exact power law, D(u) = A u^(a-1) - B (1-u)^(b-1)."""
    if not (A > 0 and B > 0):
        raise ValueError("A and B must be positive")
    a, b = spec.alpha, spec.beta

    def D(u):
        u = np.asarray(u, dtype=float)
        with np.errstate(divide="ignore"):
            return A * u ** (a - 1) - B * (1 - u) ** (b - 1)

    if a > 1 > b:
        return _analyze(D, peak_location(spec), theta0(spec), grid_step)
    return _analyze(D, float("nan"), None, grid_step)


def _analyze(D, w, th0, grid_step):
    n = int(round(1.0 / grid_step))
    u = np.linspace(0.0, 1.0, n + 1)[1:-1]
    d = D(u)

    roots, resid = [], []
    for k in np.flatnonzero(d == 0):
        roots.append(float(u[k]))
        resid.append(0.0)
    for k in np.flatnonzero(d[:-1] * d[1:] < 0):
        r, dr = _bisect(D, u[k], u[k + 1], d[k])
        roots.append(float(r))
        resid.append(abs(dr))

    tangent = []
    for k in range(1, d.size - 1):
        if d[k] != 0 and (abs(d[k]) <= abs(d[k - 1]) and abs(d[k]) <= abs(d[k + 1])) \
                and np.sign(d[k - 1]) == np.sign(d[k]) == np.sign(d[k + 1]) and abs(d[k]) < 1e-6:
            opt = minimize_scalar(lambda x: abs(float(D(x))), bounds=(u[k - 1], u[k + 1]),
                                  method="bounded", options={"xatol": 1e-14})
            if opt.fun < 1e-10:
                tangent.append(float(opt.x))

    pts = [FixedPoint(0.0, STABLE if _sign_near(D, 0.0, 1) < 0 else
                      (UNSTABLE if _sign_near(D, 0.0, 1) > 0 else MARGINAL))]
    order = np.argsort(roots)
    for i in order:
        r = roots[i]
        left = float(D(r - 1e-6))
        right = float(D(r + 1e-6))
        if left > 0 > right:
            tag = STABLE
        elif left < 0 < right:
            tag = UNSTABLE
        else:
            tag = MARGINAL
        pts.append(FixedPoint(r, tag))
    for r in tangent:
        pts.append(FixedPoint(r, MARGINAL))
    # rounding can split a double root into two marginal neighbours
    merged = []
    for p in sorted(pts, key=lambda p: p.u):
        if merged and p.stability == MARGINAL == merged[-1].stability and p.u - merged[-1].u < 1e-5:
            merged[-1] = FixedPoint(0.5 * (p.u + merged[-1].u), MARGINAL)
        else:
            merged.append(p)
    pts = merged
    s1 = _sign_near(D, 1.0, -1)
    pts.append(FixedPoint(1.0, STABLE if s1 > 0 else (UNSTABLE if s1 < 0 else MARGINAL)))
    pts.sort(key=lambda p: p.u)

    zero, one = pts[0].stability, pts[-1].stability
    n_int = sum(1 for p in pts if 0.0 < p.u < 1.0)
    if zero == STABLE and one == STABLE:
        label = "Case2"
    elif zero == UNSTABLE and one == UNSTABLE:
        label = "Case1"
    elif zero == STABLE and one == UNSTABLE:
        label = "Case3" if n_int == 2 else "NoBistability"
    elif zero == UNSTABLE and one == STABLE:
        label = "Case4" if n_int == 2 else "NoBistability"
    else:
        label = "Degenerate"

    return FixedPointReport(pts, label, w, th0 if zero == STABLE and one == UNSTABLE else None,
                            [resid[i] for i in order])


def _ratio_peak(G, H, m1):
    """Refined argmax of g(u)/h(1-u) and 1/max (the threshold in A/B)."""
    u, r = m1.grid, m1.ratio
    k = int(np.argmax(r))
    if not np.isfinite(r[k]) or k in (0, u.size - 1):
        return float(u[k]), None
    lo, hi = u[k - 1], u[k + 1]
    opt = minimize_scalar(lambda x: -float(eval_g(G, x) / eval_g(H, 1 - x)),
                          bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
    return float(opt.x), float(-1.0 / opt.fun)


@njit(cache=True)
def _rhs(cG, lG, cH, lH, A, B, u):
    return A * (1.0 - u) * lG * bernstein_scalar(cG, u) - B * u * lH * bernstein_scalar(cH, 1.0 - u)


@njit(cache=True)
def _rk4_path(cG, lG, cH, lH, A, B, u0, dt, nsteps):
    out = np.empty(nsteps + 1)
    u = u0
    out[0] = u
    for i in range(nsteps):
        k1 = _rhs(cG, lG, cH, lH, A, B, u)
        k2 = _rhs(cG, lG, cH, lH, A, B, min(max(u + 0.5 * dt * k1, 0.0), 1.0))
        k3 = _rhs(cG, lG, cH, lH, A, B, min(max(u + 0.5 * dt * k2, 0.0), 1.0))
        k4 = _rhs(cG, lG, cH, lH, A, B, min(max(u + dt * k3, 0.0), 1.0))
        u = u + dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        u = min(max(u, 0.0), 1.0)
        out[i + 1] = u
    return out


def drift(G: BernsteinRate, H: BernsteinRate, A: float, B: float, u):
    """Right-hand side A(1-u)G(u) - B u H(1-u)."""
    u = np.asarray(u, dtype=float)
    return A * (1 - u) * G(u) - B * u * H(1 - u)


def max_rate(G: BernsteinRate, H: BernsteinRate, A: float, B: float) -> float:
    return A * G.lam + B * H.lam


@dataclass
class Trajectory:
    t: np.ndarray
    u: np.ndarray


def ode_trajectory(G: BernsteinRate, H: BernsteinRate, A: float, B: float, u0: float,
                   t_end: float, dt: float | None = None) -> Trajectory:
    """Classical RK4 path of the mean-field ODE, sampled every step."""
    bound = 1e-2 / max_rate(G, H, A, B)
    if dt is None:
        dt = bound
    if dt > bound * (1 + 1e-12):
        raise ValueError(f"dt={dt} exceeds the stability bound {bound:.3g}")
    if not 0.0 <= u0 <= 1.0:
        raise ValueError("u0 must lie in [0, 1]")
    nsteps = int(np.ceil(t_end / dt - 1e-9))
    u = _rk4_path(G.coef, G.lam, H.coef, H.lam, float(A), float(B), float(u0), float(dt), nsteps)
    return Trajectory(np.arange(nsteps + 1) * dt, u)


def theta_sweep(G: BernsteinRate, H: BernsteinRate, thetas, B: float = 1.0):
    """Rows (theta, v1, v2) with NaN where the model is not bistable."""
    rows = []
    for th in thetas:
        rep = fixed_points(G, H, th * B, B)
        try:
            v1, v2 = rep.bistable_pair()
        except ValueError:
            v1 = v2 = float("nan")
        rows.append((float(th), v1, v2))
    return rows
