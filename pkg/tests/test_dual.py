import numpy as np
import pytest

from savanna.dual import (brw_envelope, collision_probability, dual_forward_agreement, dual_forward_trial,
                          dual_size_stats, mean_bound, simulate_influence_set)
from savanna.meanfield import theta0
from savanna.rates import BernsteinRate

from conftest import SPEC

SQ = BernsteinRate(0.5, (0.0, 1.0))
LIN = BernsteinRate(0.5, (1.0,))


def test_trivial_sets():
    s = simulate_influence_set((3, 4), 0.0, 10, SQ, SQ, seed=1)
    assert s.size == 1 and s.n_events == 0 and not s.collided
    s = simulate_influence_set((0, 0), 5.0, 10, SQ, SQ, A=0.0, B=0.0, seed=1)
    assert s.size == 1 and s.n_events == 0
    with pytest.raises(ValueError):
        simulate_influence_set((0, 0), -1.0, 10, SQ, SQ)


def test_influence_set_structure():
    L = 10
    for seed in range(20):
        s = simulate_influence_set((0, 0), 1.5, L, SQ, SQ, seed=seed)
        sites = [tuple(p) for p in s.sites]
        assert len(set(sites)) == len(sites)
        assert np.all(np.diff(s.event_times) >= 0) and np.all(s.event_times <= 1.5)
        pos = 1
        short = False
        for parent, kind, added in zip(s.event_parent, s.event_kind, s.event_added):
            drawn = SQ.degree
            assert added <= drawn
            short |= added < drawn
            new = s.sites[pos:pos + added]
            assert np.all(((new - s.sites[parent]) ** 2).sum(1) <= L * L)
            assert parent < pos
            pos += added
        assert pos == s.size
        assert s.collided == short


@pytest.mark.parametrize("G,H,t", [(SQ, SQ, 1.0), (LIN, SQ, 1.5), (BernsteinRate(1.0, (0.2, 0.5, 1.0)), LIN, 0.5)])
def test_mean_bound(G, H, t):
    st = dual_size_stats(t, 10, G, H, reps=3000, seed=2)
    assert st.bound == mean_bound(G, H, 1.0, 1.0, t)
    assert st.within_bound and st.truncated == 0


def test_collision_basics():
    tab = collision_probability([10], 0.0, 1000, SQ, SQ)
    assert tab.rows[0].hits == 0
    with pytest.raises(ValueError):
        collision_probability([10], 1.0, 10, SQ, SQ)


def test_collision_decreases_with_L():
    tab = collision_probability([10, 40], 1.5, 3000, SQ, SQ, seed=4)
    small, large = tab.rows
    assert large.p < small.p and large.ci_hi < small.ci_lo


def test_far_pairs_do_not_cross():
    # at kappa = 4 the continuum envelope almost never leaves its box by t = 1
    t, kappa = 1.0, 4.0
    env = brw_envelope(t, kappa, 5000, SQ, SQ, seed=3)
    assert env.fraction > 0.999
    tab = collision_probability([10], t, 2000, SQ, SQ, pair_distance=2 + 2 * kappa * t + 0.1, seed=5)
    row = tab.rows[0]
    assert row.pair_cross_hits == 0
    assert row.pair_hits >= row.pair_cross_hits


def test_envelope_limits():
    assert brw_envelope(1e-6, 1.0, 2000, LIN, LIN, seed=0).fraction == 1.0
    # kappa t well below one displacement: a single birth can leave the box
    fast = BernsteinRate(50.0, (1.0,))
    assert brw_envelope(1.0, 0.2, 500, fast, fast, seed=0).fraction < 0.5
    with pytest.raises(ValueError):
        brw_envelope(1.0, 0.0, 10, LIN, LIN)


def test_envelope_exponential_form():
    res = [brw_envelope(t, 1.0, 20000, LIN, LIN, seed=1) for t in (2, 4, 6)]
    miss = np.array([1 - r.fraction for r in res])
    assert np.all(np.diff(miss) < 0)
    # escape ~ C exp(-eta t): the rate over successive intervals should not fall
    logm = np.log(miss)
    inc = -np.diff(logm) / 2
    se = np.sqrt(1 / (miss * 20000))
    assert inc[1] >= inc[0] - (se[1] + se[2]) / 2
    assert inc.min() > 0


@pytest.mark.parametrize("c", [0, 1])
def test_duality_absorbing(c, power_model):
    G, H = power_model
    n = 16
    for seed in range(3):
        tr = dual_forward_trial((seed, 2 * seed), 2.0, 8, G, H, 2 * theta0(SPEC), 1.0, seed=seed,
                                init=np.full(n * n, c))
        assert tr.agree and tr.forward == c


def test_duality_random(power_model):
    G, H = power_model
    rng = np.random.default_rng(0)
    for seed in range(25):
        x = tuple(rng.integers(0, 16, 2))
        assert dual_forward_agreement(x, 3.0, 8, seed, G, H, 2 * theta0(SPEC), 1.0)
    assert dual_forward_agreement((1, 1), 2.0, 6, 9, SQ, LIN, 1.0, 1.0)


def test_duality_limits(power_model):
    with pytest.raises(ValueError):
        dual_forward_trial((0, 0), 4.0, 8, *power_model)
