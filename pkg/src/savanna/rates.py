"""Birth/death rate functions and heterogeneous coefficient fields.

A rate function is stored in Bernstein (binomial-mixture) form

    G(u) = lam * sum_{j=1..m} p_j * C(m, j) * u^j * (1 - u)^(m - j)

which is exactly what the lattice dynamics realize: at rate ``lam`` a site
samples ``m`` neighbours and accepts with probability ``p_j`` when ``j`` of
them are of the opposite type.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from numba import njit


@njit(cache=True)
def bernstein_scalar(coef, x):
    # coef[j] = p_j * C(m, j); all terms are non-negative so Horner in the
    # ratio x/(1-x) (or its inverse) has no cancellation.
    m = coef.size - 1
    if x <= 0.5:
        s = x / (1.0 - x)
        acc = coef[m]
        for j in range(m - 1, -1, -1):
            acc = acc * s + coef[j]
        return acc * (1.0 - x) ** m
    s = (1.0 - x) / x
    acc = coef[0]
    for j in range(1, m + 1):
        acc = acc * s + coef[j]
    return acc * x ** m


@njit(cache=True)
def _bernstein_sum(coef, u, out):
    for i in range(u.size):
        out[i] = bernstein_scalar(coef, u[i])
    return out


@dataclass(frozen=True)
class BernsteinRate:
    """Rate function ``G`` (or ``H``) in Bernstein form.

    ``probs`` holds p_1..p_m; p_0 = 0 is implicit so the rate vanishes at 0.
    """

    lam: float
    probs: tuple[float, ...]
    _coef: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        probs = tuple(float(p) for p in self.probs)
        object.__setattr__(self, "probs", probs)
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if len(probs) == 0:
            raise ValueError("need at least one acceptance probability")
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise ValueError(f"acceptance probabilities must lie in [0, 1]: {probs}")
        m = len(probs)
        coef = np.array([0.0] + [p * math.comb(m, j) for j, p in enumerate(probs, 1)])
        coef.setflags(write=False)
        object.__setattr__(self, "_coef", coef)

    @property
    def degree(self) -> int:
        return len(self.probs)

    @property
    def coef(self) -> np.ndarray:
        """Unscaled Bernstein weights p_j * C(m, j), j = 0..m."""
        return self._coef

    @property
    def acceptance(self) -> np.ndarray:
        """Acceptance table p_0..p_m with p_0 = 0."""
        return np.concatenate(([0.0], self.probs))

    def __call__(self, u):
        return eval_G(self, u)


def _check_unit(u: np.ndarray):
    if np.any(~((u >= 0.0) & (u <= 1.0))):
        raise ValueError("rate functions are only defined on [0, 1]")


def eval_G(rate: BernsteinRate, u):
    """Evaluate the rate function; accepts scalars or arrays."""
    arr = np.asarray(u, dtype=float)
    _check_unit(arr)
    flat = np.ascontiguousarray(arr).ravel()
    out = _bernstein_sum(rate._coef, flat, np.empty_like(flat))
    out *= rate.lam
    if arr.ndim == 0:
        return float(out[0])
    return out.reshape(arr.shape)


def eval_g(rate: BernsteinRate, u):
    """G(u)/u, with the removable singularity at 0 filled by lam*m*p_1."""
    arr = np.asarray(u, dtype=float)
    G = np.asarray(eval_G(rate, arr))
    limit = rate.lam * rate.degree * rate.probs[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(arr > 0, G / np.where(arr > 0, arr, 1.0), limit)
    if arr.ndim == 0:
        return float(out)
    return out


def bernstein_approx(f: Callable[[np.ndarray], np.ndarray], m: int) -> BernsteinRate:
    """Degree-``m`` Bernstein approximation of ``f`` normalized into rate form.

    Coefficients are f(k/m); lambda is their maximum so every p_k is in [0, 1].
    """
    if m < 1:
        raise ValueError("degree must be >= 1")
    nodes = np.arange(m + 1) / m
    vals = np.asarray(f(nodes), dtype=float)
    if abs(vals[0]) > 1e-14:
        raise ValueError(f"f(0) must be 0 (p_0 = 0), got {vals[0]}")
    if np.any(vals < -1e-14):
        raise ValueError("f must be non-negative on [0, 1]")
    lam = float(vals.max())
    if lam <= 0:
        raise ValueError("f vanishes at every node; no positive rate")
    probs = np.clip(vals[1:] / lam, 0.0, 1.0)
    return BernsteinRate(lam, tuple(probs))


@dataclass(frozen=True)
class PowerLawSpec:
    """Concrete model: births at rate A f_1^alpha, deaths at B (1 - f_1)^beta."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("alpha and beta must be positive")


DEFAULT_DEGREE = 60


def power_rates(spec: PowerLawSpec, m: int = DEFAULT_DEGREE) -> tuple[BernsteinRate, BernsteinRate]:
    """Bernstein approximations (G, H) of u^alpha and u^beta."""
    G = bernstein_approx(lambda u: u ** spec.alpha, m)
    H = bernstein_approx(lambda u: u ** spec.beta, m)
    return G, H


@dataclass
class M1Result:
    unimodal: bool
    w: float
    ratio: np.ndarray
    grid: np.ndarray

    def __bool__(self):
        return self.unimodal


def check_M1(G: BernsteinRate, H: BernsteinRate, grid_step: float = 1e-3, tol: float = 1e-12) -> M1Result:
    """Check that g(u)/h(1-u) rises then falls on a grid; returns the argmax too.

    An infinite ratio is allowed only at u = 1 (when h(0) = 0).
    """
    if not 0 < grid_step <= 0.01:
        raise ValueError("grid_step must be in (0, 0.01]")
    n = int(round(1.0 / grid_step))
    u = np.linspace(0.0, 1.0, n + 1)
    num = eval_g(G, u)
    den = eval_g(H, 1.0 - u)
    if np.any(den[:-1] <= 0):
        bad = u[:-1][den[:-1] <= 0][0]
        raise ValueError(f"h(1-u) vanishes at interior point u={bad:.4g}")
    with np.errstate(divide="ignore"):
        r = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.inf)
    k = int(np.argmax(r))
    scale = np.maximum(1.0, np.abs(np.where(np.isfinite(r), r, 0.0)))
    with np.errstate(invalid="ignore"):
        d = np.diff(r)
        rising = np.all((d[:k] >= -tol * scale[1 : k + 1]) | np.isnan(d[:k]))
        falling = np.all((d[k:] <= tol * scale[k:-1]) | np.isnan(d[k:]))
    return M1Result(bool(rising and falling), float(u[k]), r, u)


@dataclass(frozen=True, eq=False)
class HeterogeneityField:
    """Continental-scale coefficients a(y), b(y) on the unit torus.

    Samples live at cell centres ((i + 0.5)/n, (j + 0.5)/n); axis 0 is the
    first coordinate. Interpolation is bilinear and periodic.
    """

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.array(self.a, dtype=float)
        b = np.array(self.b, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape != b.shape:
            raise ValueError("a and b must be square arrays of equal shape")
        if not (np.all(a > 0) and np.all(b > 0)):
            raise ValueError("coefficient fields must be strictly positive")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return self.a.shape[0]

    def ratio_samples(self) -> np.ndarray:
        return self.a / self.b

    def __call__(self, y):
        return field_at(self, y)


def _bilinear(samples: np.ndarray, y: np.ndarray) -> np.ndarray:
    n = samples.shape[0]
    s = np.mod(y, 1.0) * n - 0.5
    base = np.floor(s)
    frac = s - base
    # snap so nodal samples are reproduced exactly
    near = np.abs(frac - np.round(frac)) < 1e-12
    base = np.where(near, np.round(s), base)
    frac = np.where(near, 0.0, frac)
    i0 = base[..., 0].astype(np.int64) % n
    j0 = base[..., 1].astype(np.int64) % n
    i1 = (i0 + 1) % n
    j1 = (j0 + 1) % n
    fx = frac[..., 0]
    fy = frac[..., 1]
    return ((1 - fx) * (1 - fy) * samples[i0, j0] + fx * (1 - fy) * samples[i1, j0]
            + (1 - fx) * fy * samples[i0, j1] + fx * fy * samples[i1, j1])


def field_at(fld: HeterogeneityField, y):
    """Interpolated (a, b) at point(s) ``y`` (last axis of length 2)."""
    yy = np.asarray(y, dtype=float)
    a = _bilinear(fld.a, yy)
    b = _bilinear(fld.b, yy)
    if yy.ndim == 1:
        return float(a), float(b)
    return a, b


def constant_field(a0: float, b0: float = 1.0, n: int = 8) -> HeterogeneityField:
    return HeterogeneityField(np.full((n, n), a0), np.full((n, n), b0))


def two_stripe_field(ratio_hi: float, ratio_lo: float, b0: float = 1.0, n: int = 64) -> HeterogeneityField:
    """a/b = ratio_hi for y1 in [0, 1/2) and ratio_lo for y1 in [1/2, 1)."""
    if n % 2:
        raise ValueError("two-stripe preset needs an even resolution")
    ratio = np.where(np.arange(n)[:, None] < n // 2, ratio_hi, ratio_lo) * np.ones((1, n))
    return HeterogeneityField(ratio * b0, np.full((n, n), b0))


def gradient_field(ratio_mid: float, spread: float, b0: float = 1.0, n: int = 64) -> HeterogeneityField:
    """Smooth periodic gradient: a/b = ratio_mid * spread^cos(2 pi y1)."""
    y1 = (np.arange(n) + 0.5) / n
    ratio = ratio_mid * spread ** np.cos(2 * np.pi * y1)[:, None] * np.ones((1, n))
    return HeterogeneityField(ratio * b0, np.full((n, n), b0))


def bump_field(ratio_peak: float, ratio_floor: float, radius: float = 0.25, b0: float = 1.0,
               n: int = 64) -> HeterogeneityField:
    """Radially symmetric bump centred at (1/2, 1/2) on the unit torus."""
    c = (np.arange(n) + 0.5) / n - 0.5
    r2 = c[:, None] ** 2 + c[None, :] ** 2
    prof = np.exp(-r2 / (2 * radius ** 2))
    ratio = ratio_floor + (ratio_peak - ratio_floor) * prof
    return HeterogeneityField(ratio * b0, np.full((n, n), b0))


def load_matrix(path) -> np.ndarray:
    """Plain-text square matrix: n lines of n positive decimals."""
    arr = np.loadtxt(Path(path), dtype=float, ndmin=2)
    if arr.shape[0] != arr.shape[1]:
        raise ValueError(f"{path}: expected a square matrix, got {arr.shape}")
    return arr


PRESETS = {
    "constant": constant_field,
    "two-stripe": two_stripe_field,
    "gradient": gradient_field,
    "bump": bump_field,
}


def field_from_config(cfg: dict) -> HeterogeneityField:
    cfg = dict(cfg)
    if "file" in cfg or "a_file" in cfg:
        a = load_matrix(cfg.get("a_file", cfg.get("file")))
        b = load_matrix(cfg["b_file"]) if "b_file" in cfg else np.ones_like(a)
        return HeterogeneityField(a, b)
    preset = cfg.pop("preset", "constant")
    try:
        make = PRESETS[preset]
    except KeyError:
        raise ValueError(f"unknown field preset {preset!r}; choose from {sorted(PRESETS)}") from None
    return make(**cfg)


def rates_from_config(cfg: dict) -> tuple[BernsteinRate, BernsteinRate]:
    """Build (G, H) from ``{kind: power, alpha, beta, m}`` or
    ``{kind: bernstein, G: {lambda, probs}, H: {lambda, probs}}``."""
    kind = cfg.get("kind", "power")
    if kind == "power":
        spec = PowerLawSpec(float(cfg["alpha"]), float(cfg["beta"]))
        return power_rates(spec, int(cfg.get("m", DEFAULT_DEGREE)))
    if kind == "bernstein":
        out = []
        for key in ("G", "H"):
            part = cfg[key]
            out.append(BernsteinRate(float(part["lambda"]), tuple(part["probs"])))
        return out[0], out[1]
    raise ValueError(f"unknown rate kind {kind!r}")
