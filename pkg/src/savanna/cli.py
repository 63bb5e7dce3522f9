"""Command-line entry point: ``savanna <subcommand> [options]``.

Every run resolves defaults, an optional YAML/JSON config file, ``--set``
overrides and explicit flags (in that order of increasing precedence) into
one config dict, validates it, runs, and writes a manifest beside its
outputs. Exit status: 0 success, 2 invalid input, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import copy
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from . import dual, hetero, ide, lattice, meanfield, percolation
from .io import write_csv, write_manifest, write_pgm
from .rates import PowerLawSpec, field_from_config, rates_from_config

log = logging.getLogger("savanna")

DEFAULT_MODEL = {"kind": "power", "alpha": 3.0, "beta": 0.5, "m": 60}

DEFAULTS = {
    "meanfield": {"model": DEFAULT_MODEL, "theta": None, "B": 1.0, "sweep": []},
    "ide": {"model": DEFAULT_MODEL, "field": None, "theta": 7.0, "B": 1.0, "M": 4, "h": 0.05,
            "t_end": 10.0, "snapshots": [], "init": {"kind": "constant", "density": 0.5}},
    "front-speed": {"model": DEFAULT_MODEL, "theta": 7.0, "B": 1.0, "h": 0.05, "length": 40.0,
                    "t_end": 40.0, "sample_dt": 0.25},
    "theta1": {"model": DEFAULT_MODEL, "bracket": None, "tol": 1e-3, "h": 0.05, "length": 40.0,
               "t_end": 40.0},
    "simulate": {"model": DEFAULT_MODEL, "field": None, "theta": 7.0, "B": 1.0, "L": 10, "M": 4,
                 "init": {"kind": "bernoulli", "density": 0.5}, "t_end": 5.0, "snapshots": [],
                 "gamma": 0.25},
    "dual": {"model": {"kind": "bernstein", "G": {"lambda": 0.5, "probs": [0, 1]},
                       "H": {"lambda": 0.5, "probs": [0, 1]}},
             "A": 1.0, "B": 1.0, "L": [10, 20, 40, 80], "t": 2.0, "reps": 2000, "pair_distance": None},
    "percolation": {"widths": [10, 20, 40], "p": 0.95, "m": 1, "reps": 500, "n_max": 1_000_000,
                    "start": "full"},
    "survival": {"model": DEFAULT_MODEL, "theta": 7.0, "B": 1.0, "M": [2, 4], "L": 20, "t0": 20.0,
                 "t_cap": 40.0, "reps": 10, "eps": 0.1, "mode": "persist", "v2": None},
    "hetero": {"model": DEFAULT_MODEL, "field": None, "theta1": None, "forest_ratio": 2.0,
               "grass_ratio": 0.5, "L": 20, "M": 4, "t0": None, "t_cap": 40.0, "eps": 0.1, "delta": 0.05,
               "buffer": 0.5, "sample_dt": 1.0, "sigma1": None, "band": 2.0, "ide_h": None},
}

STOCHASTIC = {"simulate", "hetero"}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- config plumbing

def _load_file(path):
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    if doc is None:
        return {}, None
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must be a mapping")
    # a manifest carries the resolved config and seed of an earlier run
    if "subcommand" in doc and "config" in doc:
        return dict(doc["config"]), doc
    return doc, None


def _set_path(cfg, dotted, value):
    keys = dotted.split(".")
    cur = cfg
    for k in keys[:-1]:
        if not isinstance(cur.get(k), dict):
            cur[k] = {}
        cur = cur[k]
    cur[keys[-1]] = value


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "model":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve_config(args) -> tuple[dict, int]:
    cfg = copy.deepcopy(DEFAULTS[args.command])
    seed = 0
    if args.config:
        doc, manifest = _load_file(args.config)
        if manifest is not None:
            if manifest["subcommand"] != args.command:
                raise ConfigError(f"manifest is for '{manifest['subcommand']}', not '{args.command}'")
            seed = int(manifest.get("seed", 0))
            if args.replicas == 1:
                args.replicas = int(manifest.get("replicas", 1))
        seed = int(doc.pop("seed", seed))
        unknown = set(doc) - set(cfg)
        if unknown:
            raise ConfigError(f"unknown config keys for {args.command}: {sorted(unknown)}")
        cfg = _merge(cfg, doc)
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        if k.split(".")[0] not in cfg:
            raise ConfigError(f"unknown config key {k!r}")
        _set_path(cfg, k, yaml.safe_load(v))
    model_flags = {k: getattr(args, k, None) for k in ("alpha", "beta", "m_degree")}
    if any(v is not None for v in model_flags.values()) or getattr(args, "model", None):
        model = dict(cfg.get("model") or DEFAULT_MODEL)
        if getattr(args, "model", None):
            model["kind"] = args.model
        if model_flags["alpha"] is not None:
            model["alpha"] = args.alpha
        if model_flags["beta"] is not None:
            model["beta"] = args.beta
        if model_flags["m_degree"] is not None:
            model["m"] = args.m_degree
        if model.get("kind") == "power":
            model = {k: model[k] for k in ("kind", "alpha", "beta", "m") if k in model}
        cfg["model"] = model
    for key in cfg:
        flag = getattr(args, "opt_" + key.replace("-", "_"), None)
        if flag is not None:
            cfg[key] = flag
    if args.seed is not None:
        seed = args.seed
    return cfg, int(seed)


def _positive(cfg, *keys):
    for k in keys:
        v = cfg[k]
        vals = v if isinstance(v, (list, tuple)) else [v]
        for x in vals:
            if not isinstance(x, (int, float)) or isinstance(x, bool) or not x > 0:
                raise ConfigError(f"{k} must be positive, got {v!r}")


def _integers(cfg, *keys):
    for k in keys:
        v = cfg[k]
        vals = v if isinstance(v, (list, tuple)) else [v]
        for x in vals:
            if isinstance(x, bool) or not float(x).is_integer():
                raise ConfigError(f"{k} must be an integer, got {v!r}")


def _model(cfg):
    try:
        return rates_from_config(cfg["model"])
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"invalid model: {e}") from None


def _field(cfg):
    if cfg.get("field") is None:
        return None
    try:
        return field_from_config(cfg["field"])
    except (KeyError, TypeError, ValueError, OSError) as e:
        raise ConfigError(f"invalid field: {e}") from None


def validate(cmd: str, cfg: dict):
    """Check ranges and build model objects; raises ConfigError."""
    G = H = None
    if "model" in cfg:
        G, H = _model(cfg)
    if cmd == "meanfield":
        if cfg["theta"] is not None:
            _positive(cfg, "theta")
        _positive(cfg, "B")
    elif cmd in ("ide", "front-speed"):
        _positive(cfg, "theta", "B", "h", "t_end")
        if cmd == "ide":
            _positive(cfg, "M")
            if cfg["M"] <= 2:
                raise ConfigError("M must exceed 2, the diameter of the interaction disk")
            _field(cfg)
        else:
            _positive(cfg, "length")
    elif cmd == "theta1":
        _positive(cfg, "tol", "h", "length", "t_end")
        if cfg["bracket"] is None and cfg["model"].get("kind") != "power":
            raise ConfigError("theta1 needs a bracket for non-power models")
    elif cmd == "simulate":
        _positive(cfg, "L", "M", "theta", "B", "gamma")
        _integers(cfg, "L", "M")
        if cfg["t_end"] < 0:
            raise ConfigError("t_end must be non-negative")
        if not 0 < cfg["gamma"] <= 0.25:
            raise ConfigError("gamma must lie in (0, 1/4]")
        _field(cfg)
    elif cmd == "dual":
        _positive(cfg, "L", "A", "B", "reps")
        _integers(cfg, "L", "reps")
        if cfg["t"] < 0:
            raise ConfigError("t must be non-negative")
        if cfg["reps"] < 1000:
            raise ConfigError("reps must be at least 1000")
    elif cmd == "percolation":
        _positive(cfg, "widths", "reps", "n_max", "m")
        _integers(cfg, "widths", "reps", "n_max", "m")
        if not 0 <= cfg["p"] <= 1:
            raise ConfigError("p must lie in [0, 1]")
        if min(cfg["widths"]) < 2:
            raise ConfigError("widths must be at least 2")
        if cfg["start"] not in ("full", "single"):
            raise ConfigError("start must be 'full' or 'single'")
    elif cmd == "survival":
        _positive(cfg, "theta", "B", "M", "L", "t_cap", "reps", "eps")
        _integers(cfg, "M", "L", "reps")
        if cfg["mode"] not in ("persist", "die"):
            raise ConfigError("mode must be 'persist' or 'die'")
    elif cmd == "hetero":
        _positive(cfg, "L", "M", "t_cap", "eps", "delta", "buffer", "sample_dt", "band")
        _integers(cfg, "L", "M")
        _field(cfg)
        if cfg["theta1"] is None and cfg["model"] != DEFAULT_MODEL:
            raise ConfigError("theta1 must be given for models other than the default power model")
    return G, H


# ---------------------------------------------------------------- runners

def _theta1(cfg):
    return float(cfg["theta1"]) if cfg["theta1"] is not None else ide.POWER_THETA1


def run_meanfield(cfg, seed, out: Path):
    G, H = _model(cfg)
    rows = []
    m = cfg["model"]
    if m.get("kind") == "power":
        spec = PowerLawSpec(float(m["alpha"]), float(m["beta"]))
        rows.append(("case", meanfield.classify_cases(spec).label))
        if spec.alpha > 1 > spec.beta:
            rows += [("w", meanfield.peak_location(spec)), ("peak_value", meanfield.peak_value(spec)),
                     ("theta0", meanfield.theta0(spec))]
    if cfg["theta"] is not None:
        A, B = float(cfg["theta"]) * cfg["B"], float(cfg["B"])
        if m.get("kind") == "power":
            rep = meanfield.power_fixed_points(spec, A, B)
            rows += _fp_rows(rep, "")
        rep = meanfield.fixed_points(G, H, A, B)
        rows.append(("theta0_bernstein", rep.theta0 if rep.theta0 is not None else float("nan")))
        rows += _fp_rows(rep, "_bernstein")
    write_csv(out / "meanfield.csv", ("quantity", "value"), rows)
    files = ["meanfield.csv"]
    if cfg["sweep"]:
        write_csv(out / "sweep.csv", ("theta", "v1", "v2"), meanfield.theta_sweep(G, H, cfg["sweep"], cfg["B"]))
        files.append("sweep.csv")
    for k, v in rows:
        print(f"{k:>20s}  {v}")
    return files


def _fp_rows(rep, suffix):
    rows = [("case" + suffix, rep.case_label)]
    try:
        v1, v2 = rep.bistable_pair()
    except ValueError:
        v1 = v2 = float("nan")
    rows += [("v1" + suffix, v1), ("v2" + suffix, v2)]
    for p in rep.points:
        rows.append(("fixed_point" + suffix, f"{p.u!r}:{p.stability}"))
    return rows


def _coeffs(cfg):
    fld = _field(cfg)
    if fld is not None:
        return fld, None
    return float(cfg["theta"]) * cfg["B"], float(cfg["B"])


def _ide_initial(cfg):
    init = cfg["init"]
    M, h = cfg["M"], cfg["h"]
    kind = init.get("kind", "constant")
    if kind == "constant":
        return ide.ScalarField.constant(M, h, init["density"])
    if kind == "plateau":
        cx, cy = init.get("center", (M / 2, M / 2))
        N = float(init["half_width"])

        def f(x, y):
            dx = np.abs((x - cx + M / 2) % M - M / 2)
            dy = np.abs((y - cy + M / 2) % M - M / 2)
            return np.where((dx <= N) & (dy <= N), init.get("density", 1.0), init.get("background", 0.0))
        return ide.ScalarField.from_function(M, h, f)
    raise ConfigError(f"unknown IDE initial condition {kind!r}")


def run_ide(cfg, seed, out: Path):
    G, H = _model(cfg)
    A, B = _coeffs(cfg)
    u0 = _ide_initial(cfg)
    times = sorted(set(cfg["snapshots"]) | {cfg["t_end"]})
    snaps = ide.ide_solve(u0, A, B, G, H, cfg["t_end"], snapshot_times=times)
    files = []
    for s in snaps:
        name = f"ide_t{s.t:g}.pgm"
        write_pgm(out / name, s.values)
        files.append(name)
    write_csv(out / "density.csv", ("t", "density"), [(s.t, float(s.values.mean())) for s in snaps])
    return files + ["density.csv"]


def run_front(cfg, seed, out: Path):
    G, H = _model(cfg)
    tr = ide.front_speed(G, H, cfg["theta"] * cfg["B"], cfg["B"], h=cfg["h"], length=cfg["length"],
                         t_end=cfg["t_end"], sample_dt=cfg["sample_dt"])
    write_csv(out / "front.csv", ("t", "position"), zip(tr.times, tr.positions))
    write_csv(out / "speed.csv", ("theta", "speed", "residual", "level"),
              [(cfg["theta"], tr.speed, tr.residual, tr.level)])
    print(f"front speed {tr.speed:.6g} (fit residual {tr.residual:.2g})")
    return ["front.csv", "speed.csv"]


def run_theta1(cfg, seed, out: Path):
    G, H = _model(cfg)
    bracket = cfg["bracket"]
    if bracket is None:
        m = cfg["model"]
        t0 = meanfield.theta0(PowerLawSpec(float(m["alpha"]), float(m["beta"])))
        bracket = (1.5 * t0, 2.5 * t0)
    res = ide.theta1_bisect(G, H, tuple(bracket), tol=cfg["tol"], h=cfg["h"], length=cfg["length"],
                            t_end=cfg["t_end"])
    write_csv(out / "theta1.csv", ("theta1", "bracket_lo", "bracket_hi", "tol"),
              [(res.theta1, res.bracket[0], res.bracket[1], res.tol)])
    write_csv(out / "theta1_samples.csv", ("theta", "speed"), res.samples)
    print(f"theta1 = {res.theta1:.6g}  bracket {tuple(res.bracket)}  tol {res.tol:g}")
    return ["theta1.csv", "theta1_samples.csv"]


def _simulate_one(cfg, seed, out: Path):
    G, H = _model(cfg)
    A, B = _coeffs(cfg)
    init = cfg["init"]
    st = lattice.new_state(cfg["L"], cfg["M"], G, H, A, B, init=init, seed=seed)
    res = lattice.run(st, G, H, cfg["t_end"], cfg["snapshots"])
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for t, snap in zip(res.times, res.snapshots):
        name = f"snap_t{t:g}.pbm"
        lattice.write_pbm(out / name, snap)
        files.append(name)
    write_csv(out / "density.csv", ("t", "density"), zip(res.times, res.densities))
    write_csv(out / "events.csv", ("t", "events", "flips"), res.log)
    return files + ["density.csv", "events.csv"]


def _boundary_overlay(regions, M, n):
    mask = np.zeros((n, n), bool)
    for c in regions.boundaries:
        idx = np.floor(np.mod(c, 1.0) * n).astype(int) % n
        mask[idx[:, 0], idx[:, 1]] = True
    return mask


def _hetero_one(cfg, seed, out: Path):
    G, H = _model(cfg)
    th1 = _theta1(cfg)
    fld = _field(cfg) or hetero_default_field(cfg, th1)
    L, M = cfg["L"], cfg["M"]
    n = L * M
    res_grid = max(d for d in range(1, min(n, 128) + 1) if n % d == 0)
    regions = hetero.region_partition(fld, th1, cfg["delta"], res_grid)
    s1 = cfg["sigma1"] if cfg["sigma1"] is not None else hetero.default_sigma1(G, H, regions)
    init = hetero.build_h3_initial(regions, M, s1, 0.0)
    t0 = cfg["t0"]
    if t0 is None:
        t0 = 2 * hetero.equilibration_time(fld, G, H, M, init)
    if t0 >= cfg["t_cap"]:
        raise ConfigError(f"t0 = {t0:g} is not below t_cap = {cfg['t_cap']:g}")
    rep = hetero.run_hetero(fld, G, H, L, M, th1, t0, cfg["t_cap"], cfg["eps"], cfg["delta"], seed=seed,
                            sample_dt=cfg["sample_dt"], buffer=cfg["buffer"], resolution=res_grid,
                            initial=init, ide_h=cfg["ide_h"], keep_snapshots=True)
    out.mkdir(parents=True, exist_ok=True)
    header = ["t", "component", "label", "target", "core_density", "whole_density"]
    rows = list(rep.rows())
    if cfg["ide_h"] is not None:
        header.append("ide_core_density")
        rows = [(t, r.component, r.label, r.target, r.core[k], r.whole[k], r.ide_core[k])
                for r in rep.regions for k, t in enumerate(rep.times)]
    write_csv(out / "regions.csv", header, rows)
    level = hetero.interface_level(G, H, regions)
    fields = [hetero.smoothed_density(s, L) for s in rep.snapshots]
    br = hetero.boundary_stability(rep.times, fields, regions, M, t0, cfg["t_cap"], level, band=cfg["band"])
    write_csv(out / "boundary.csv", ("t", "boundary", "hausdorff"),
              [(t, tr.boundary, d) for tr in br.tracks for t, d in zip(tr.times, tr.distance)])
    write_csv(out / "boundary_summary.csv", ("boundary", "slope", "p_value", "drifting", "within_band"),
              [(tr.boundary, tr.slope, tr.p_value, tr.drifting, tr.within_band) for tr in br.tracks])
    overlay = _boundary_overlay(regions, M, n)
    files = ["regions.csv", "boundary.csv", "boundary_summary.csv"]
    for t, f in zip(rep.times, fields):
        if abs(t - round(t)) < 1e-9 and (round(t) % 10 == 0 or t == rep.times[-1]):
            name = f"density_t{t:g}.pgm"
            write_pgm(out / name, f, overlay)
            files.append(name)
    status = "pass" if rep.passed and br.passed else "fail"
    write_csv(out / "summary.csv", ("seed", "t0", "t_cap", "regions_pass", "boundary_status", "boundary_pass",
                                    "status", "reasons"),
              [(seed, t0, cfg["t_cap"], rep.passed, br.status, br.passed, status, "; ".join(rep.reasons))])
    return files + ["summary.csv"]


def hetero_default_field(cfg, th1):
    from .rates import two_stripe_field
    return two_stripe_field(cfg["forest_ratio"] * th1, cfg["grass_ratio"] * th1)


def run_dual(cfg, seed, out: Path):
    G, H = _model(cfg)
    tab = dual.collision_probability(cfg["L"], cfg["t"], cfg["reps"], G, H, cfg["A"], cfg["B"],
                                     pair_distance=cfg["pair_distance"], seed=seed)
    rows = [(r.L, r.t, r.reps, r.p, r.ci_lo, r.ci_hi, r.mean_size) for r in tab.rows]
    header = ["L", "t", "reps", "p_collision", "ci_lo", "ci_hi", "mean_size"]
    if cfg["pair_distance"] is not None:
        header += ["p_pair", "p_pair_cross"]
        rows = [row + (r.p_pair, r.p_pair_cross) for row, r in zip(rows, tab.rows)]
    write_csv(out / "dual.csv", header, rows)
    write_csv(out / "dual_fit.csv", ("slope", "slope_se", "intercept"), [(tab.slope, tab.slope_se, tab.intercept)])
    print(f"log-log slope {tab.slope:.3f} +/- {tab.slope_se:.3f}")
    return ["dual.csv", "dual_fit.csv"]


def run_percolation(cfg, seed, out: Path):
    rows = []
    for k, w in enumerate(cfg["widths"]):
        s = percolation.op_simulate(percolation.OPConfig(int(w), cfg["p"], int(cfg["m"]), int(cfg["n_max"])),
                                    int(cfg["reps"]), seed=[seed, k], start=cfg["start"])
        rows.append((int(w), cfg["p"], int(cfg["m"]), s.median, s.censored_fraction))
    write_csv(out / "percolation.csv", ("width", "p", "m", "median_survival", "censored_fraction"), rows)
    for r in rows:
        print("width {:3d}  median {:>10}  censored {:.3f}".format(r[0], r[3], r[4]))
    return ["percolation.csv"]


def run_survival(cfg, seed, out: Path):
    G, H = _model(cfg)
    v2 = cfg["v2"]
    if v2 is None:
        v2 = hetero.upper_equilibrium(G, H, cfg["theta"])
    rows = percolation.survival_scaling(G, H, cfg["theta"], v2, cfg["M"], cfg["L"], cfg["t0"], cfg["t_cap"],
                                        cfg["reps"], cfg["eps"], B=cfg["B"], seed=seed, mode=cfg["mode"])
    write_csv(out / "survival.csv", ("M", "persistence_fraction"), [(r.M, r.fraction) for r in rows])
    return ["survival.csv"]


def _replicated(one):
    def runner(cfg, seed, out: Path, replicas=1, workers=1):
        if replicas == 1:
            return one(cfg, seed, out)
        seeds = [seed + k for k in range(replicas)]
        dirs = [out / f"rep_{k:03d}" for k in range(replicas)]
        if workers > 1:
            with ProcessPoolExecutor(workers) as ex:
                lists = list(ex.map(one, [cfg] * replicas, seeds, dirs))
        else:
            lists = [one(cfg, s, d) for s, d in zip(seeds, dirs)]
        return [f"{d.name}/{f}" for d, fs in zip(dirs, lists) for f in fs]
    return runner


RUNNERS = {
    "meanfield": run_meanfield,
    "ide": run_ide,
    "front-speed": run_front,
    "theta1": run_theta1,
    "simulate": _replicated(_simulate_one),
    "dual": run_dual,
    "percolation": run_percolation,
    "survival": run_survival,
    "hetero": _replicated(_hetero_one),
}


# ---------------------------------------------------------------- argparse

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="savanna", description="Two-type lattice vegetation model experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")

    def common(sp, model=True):
        sp.add_argument("--config", help="YAML/JSON config or a manifest from an earlier run")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", default=None, help="output directory (default: out/<subcommand>)")
        sp.add_argument("--replicas", type=int, default=1)
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config entry (dotted keys, YAML values)")
        if model:
            sp.add_argument("--model", choices=["power", "bernstein"])
            sp.add_argument("--alpha", type=float)
            sp.add_argument("--beta", type=float)
            sp.add_argument("--m", dest="m_degree", type=int, help="Bernstein degree (J = K)")

    def opt(sp, name, typ, **kw):
        sp.add_argument("--" + name, dest="opt_" + name.replace("-", "_"), type=typ, **kw)

    floats = lambda s: [float(x) for x in s.split(",")]  # noqa: E731
    ints = lambda s: [int(x) for x in s.split(",")]  # noqa: E731

    sp = sub.add_parser("meanfield", help="fixed points, thresholds and theta sweeps")
    common(sp)
    opt(sp, "theta", float)
    opt(sp, "sweep", floats, help="comma-separated theta values")

    sp = sub.add_parser("ide", help="integrate the integro-differential equation")
    common(sp)
    for k in ("theta", "h", "t_end"):
        opt(sp, k, float)
    opt(sp, "M", int)

    sp = sub.add_parser("front-speed", help="planar front speed at one ratio A/B")
    common(sp)
    for k in ("theta", "h", "length", "t_end"):
        opt(sp, k, float)

    sp = sub.add_parser("theta1", help="ratio at which the front speed changes sign")
    common(sp)
    opt(sp, "tol", float)
    opt(sp, "h", float)
    opt(sp, "bracket", floats)

    sp = sub.add_parser("simulate", help="exact lattice simulation")
    common(sp)
    opt(sp, "L", int)
    opt(sp, "M", int)
    opt(sp, "theta", float)
    opt(sp, "t_end", float)
    opt(sp, "gamma", float)
    opt(sp, "snapshots", floats)

    sp = sub.add_parser("dual", help="influence-set collision statistics")
    common(sp)
    opt(sp, "L", ints)
    opt(sp, "t", float)
    opt(sp, "reps", int)
    opt(sp, "pair_distance", float)

    sp = sub.add_parser("percolation", help="oriented percolation survival times")
    common(sp, model=False)
    opt(sp, "widths", ints)
    opt(sp, "p", float)
    opt(sp, "m", int)
    opt(sp, "reps", int)
    opt(sp, "n_max", int)

    sp = sub.add_parser("survival", help="persistence of the forest state on tori of several sizes")
    common(sp)
    opt(sp, "theta", float)
    opt(sp, "M", ints)
    opt(sp, "L", int)
    opt(sp, "reps", int)
    opt(sp, "t0", float)
    opt(sp, "t_cap", float)

    sp = sub.add_parser("hetero", help="two-region landscape: region densities and interfaces")
    common(sp)
    opt(sp, "L", int)
    opt(sp, "M", int)
    opt(sp, "theta1", float)
    opt(sp, "t0", float)
    opt(sp, "t_cap", float)
    opt(sp, "eps", float)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg, seed = resolve_config(args)
        validate(args.command, cfg)
        if args.replicas < 1 or args.workers < 1:
            raise ConfigError("--replicas and --workers must be at least 1")
        if args.replicas > 1 and args.command not in STOCHASTIC:
            raise ConfigError(f"--replicas applies to {sorted(STOCHASTIC)} only")
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    out = Path(args.out or Path("out") / args.command)
    start = time.perf_counter()
    try:
        out.mkdir(parents=True, exist_ok=True)
        runner = RUNNERS[args.command]
        if args.command in STOCHASTIC:
            files = runner(cfg, seed, out, args.replicas, args.workers)
        else:
            files = runner(cfg, seed, out)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001
        log.debug("run failed", exc_info=True)
        print(f"runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return 3
    write_manifest(out / "manifest.json", args.command, cfg, seed, time.perf_counter() - start, files,
                   replicas=args.replicas)
    return 0


if __name__ == "__main__":
    sys.exit(main())
