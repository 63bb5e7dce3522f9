import warnings

import numpy as np
import pytest
from scipy.stats import hypergeom

from savanna.lattice import (MAX_SITES, acceptance_frequency, advance, build_neighborhood, coarse_density,
                             hydro_check, initial_configuration, local_density, new_state, read_pbm, run,
                             step_exact, tile_side, wet_sites, write_pbm)
from savanna.meanfield import ode_trajectory, theta0
from savanna.rates import BernsteinRate, two_stripe_field

from conftest import SPEC

TH0 = theta0(SPEC)


@pytest.mark.parametrize("L", [1, 2, 10, 40])
def test_neighbourhood(L, oracle):
    nbh = build_neighborhood(L)
    assert len(nbh) == oracle["neighbourhood_counts"][str(L)]
    s = {tuple(d) for d in nbh}
    assert (0, 0) not in s and {(-a, -b) for a, b in s} == s
    assert np.all((nbh ** 2).sum(1) <= L * L)


def test_neighbourhood_area():
    assert len(build_neighborhood(60)) / (np.pi * 3600) == pytest.approx(1, abs=0.01)


@pytest.mark.parametrize("c", [0, 1])
def test_absorbing_exact(c, power_model):
    G, H = power_model
    st = new_state(10, 2, G, H, 2 * TH0, 1.0, init=float(c), seed=1)
    advance(st, G, H, max_events=1_000_000)
    assert st.events == 1_000_000 and st.flips == 0
    assert np.all(st.occ == c)


def test_step_exact_single_event(power_model):
    G, H = power_model
    st = new_state(10, 2, G, H, 2 * TH0, 1.0, init=0.5, seed=2)
    t0 = st.t
    step_exact(st, G, H)
    assert st.events == 1 and st.t > t0 and st.flips <= 1


def test_determinism_and_schedule_independence(power_model):
    G, H = power_model
    a = new_state(10, 2, G, H, 2 * TH0, 1.0, init=0.6, seed=5)
    b = new_state(10, 2, G, H, 2 * TH0, 1.0, init=0.6, seed=5)
    c = new_state(10, 2, G, H, 2 * TH0, 1.0, init=0.6, seed=5)
    ra = run(a, G, H, 2.0, [0.5, 1.0])
    rb = run(b, G, H, 2.0, [0.5, 1.0])
    run(c, G, H, 2.0, [0.1, 0.2, 0.7, 1.3])
    assert all(np.array_equal(x, y) for x, y in zip(ra.snapshots, rb.snapshots))
    assert np.array_equal(a.occ, c.occ) and a.events == c.events


def test_run_zero_time(power_model):
    G, H = power_model
    st = new_state(10, 2, G, H, 2 * TH0, 1.0, init=0.5, seed=0)
    before = st.occ.copy()
    res = run(st, G, H, 0.0)
    assert np.array_equal(res.snapshots[0], before) and st.events == 0
    with pytest.raises(ValueError):
        run(st, G, H, -1.0)


def test_total_rate_bookkeeping(power_model):
    G, H = power_model
    fld = two_stripe_field(8.0, 3.0, n=8)
    st = new_state(10, 4, G, H, fld, init=0.5, seed=0)
    advance(st, G, H, max_events=1_000_000)
    expected = float((G.lam * fld(np.stack(np.meshgrid(np.arange(40) / 40, np.arange(40) / 40,
                                                          indexing="ij"), -1))[0]).sum() + H.lam * 1600)
    assert st.recompute_total_rate() == pytest.approx(st.total_rate, rel=1e-9)
    assert st.total_rate == pytest.approx(expected, rel=1e-9)


def test_memory_limit(power_model):
    G, H = power_model
    side = int(np.sqrt(MAX_SITES)) + 10
    with pytest.raises(MemoryError, match="reduce"):
        new_state(side, 1, G, H, 1.0, 1.0)


def test_degree_needs_neighbourhood(power_model):
    G, H = power_model
    with pytest.raises(ValueError):
        new_state(2, 4, G, H, 1.0, 1.0)


def test_mean_field_path(power_model):
    G, H = power_model
    st = new_state(30, 4, G, H, 2 * TH0, 1.0, init=0.7, seed=3)
    times = np.arange(0, 10.01, 1.0)
    res = run(st, G, H, 10.0, times, keep_snapshots=False)
    ode = ode_trajectory(G, H, 2 * TH0, 1.0, 0.7, 10.0)
    ref = np.interp(times, ode.t, ode.u)
    assert np.max(np.abs(np.array(res.densities) - ref)) < 0.05


def _hypergeom_acceptance(rate, n_nbh, occupied):
    j = np.arange(rate.degree + 1)
    return float((rate.acceptance * hypergeom.pmf(j, n_nbh, occupied, rate.degree)).sum())


def test_acceptance_exact_small_L():
    # tiny neighbourhood: the without-replacement law differs visibly from the binomial
    G = BernsteinRate(1.0, (0.2, 0.5, 1.0))
    H = BernsteinRate(1.0, (1.0,))
    rng = np.random.default_rng(0)
    occ = (rng.random((12, 12)) < 0.4).astype(np.uint8)
    st = new_state(3, 4, G, H, 1.0, 1.0, init=occ)
    site = (5, 7)
    occ[site] = 0
    nbh = build_neighborhood(3)
    k = int(occ[(5 + nbh[:, 0]) % 12, (7 + nbh[:, 1]) % 12].sum())
    exact = _hypergeom_acceptance(G, len(nbh), k)
    trials = 400_000
    freq = acceptance_frequency(st, G, H, site, "birth", trials, seed=1)
    assert abs(freq - exact) < 3 * np.sqrt(exact * (1 - exact) / trials)


def test_frozen_environment_rates(power_model):
    G, H = power_model
    rng = np.random.default_rng(7)
    trials = 200_000
    for rep in range(3):
        occ = (rng.random((120, 120)) < rng.uniform(0.2, 0.9)).astype(np.uint8)
        st = new_state(40, 3, G, H, 2 * TH0, 1.0, init=occ)
        site = tuple(rng.integers(0, 120, 2))
        st.occ[site] = 0
        f1 = local_density(st, site)
        target = G(f1) / G.lam
        freq = acceptance_frequency(st, G, H, site, "birth", trials, seed=rep)
        assert abs(freq - target) < 3 * np.sqrt(target * (1 - target) / trials) + 1e-4


def test_initial_configurations(tmp_path):
    rng = np.random.default_rng(0)
    plate = initial_configuration(10, 4, {"kind": "plateau", "half_width": 0.5, "density": 1.0}, rng)
    assert plate[20, 20] == 1 and plate[0, 0] == 0 and plate.sum() == 11 * 11
    write_pbm(tmp_path / "x.pbm", plate)
    assert np.array_equal(initial_configuration(10, 4, {"kind": "bitmap", "file": tmp_path / "x.pbm"}, rng),
                          plate)
    with pytest.raises(ValueError):
        initial_configuration(10, 4, 1.5, rng)
    with pytest.raises(ValueError):
        initial_configuration(10, 4, {"kind": "nope"}, rng)


def test_pbm_round_trip(tmp_path):
    occ = (np.random.default_rng(1).random((7, 9)) < 0.5).astype(np.uint8)
    write_pbm(tmp_path / "a.pbm", occ)
    assert np.array_equal(read_pbm(tmp_path / "a.pbm"), occ)


def test_coarse_trivial():
    assert np.all(coarse_density(np.ones((64, 64), np.uint8), 16).values == 1)
    checker = (np.add.outer(np.arange(64), np.arange(64)) % 2).astype(np.uint8)
    cd = coarse_density(checker, 16)
    assert cd.side == 8 and np.all(cd.values == 0.5)
    assert cd.corners()[1] == 0.5


def test_tile_side_warns():
    with pytest.warns(UserWarning):
        assert tile_side(50, 0.25) == 19
    with pytest.raises(ValueError):
        tile_side(16, 0.3)


def test_bernoulli_tiles():
    rng = np.random.default_rng(4)
    L, M = 50, 4
    occ = initial_configuration(L, M, 0.3, rng)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cd = coarse_density(occ, L)
    dev = np.abs(cd.values - 0.3)
    assert np.mean(dev < 5 / cd.side) >= 0.95


def test_wet_sites(power_model):
    L, M, N = 16, 4, 0.5
    assert wet_sites(np.ones((64, 64), np.uint8), L, M, N, 0.9, 0.05, origin=(0.5, 0.5)).all()
    assert not wet_sites(np.zeros((64, 64), np.uint8), L, M, N, 0.9, 0.05, origin=(0.5, 0.5)).any()
    occ = np.zeros((64, 64), np.uint8)
    occ[16:32, 32:48] = 1
    occ[16:32:2, 32:48:2] = 0  # density 3/4 on block (1, 2)
    wet = wet_sites(occ, L, M, N, 0.75, 0.05, origin=(0.5, 0.5))
    assert wet.sum() == 1 and wet[1, 2]


def test_hydro_trivial(power_model):
    G, H = power_model
    rows = hydro_check(G, H, 2 * TH0, 1.0, lambda x, y: 0.0 * x, 1.0, [8, 16], seeds=range(2))
    assert all(r.median == 0 for r in rows)
    rows = hydro_check(G, H, 2 * TH0, 1.0, lambda x, y: 0.5 + 0.0 * x, 0.0, [16], seeds=range(3))
    assert rows[0].median < 3 / 8
