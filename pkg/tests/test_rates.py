import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from savanna.rates import (BernsteinRate, HeterogeneityField, PowerLawSpec, bernstein_approx, check_M1,
                           constant_field, eval_G, eval_g, field_at, field_from_config, power_rates,
                           rates_from_config, two_stripe_field)

probs_st = st.lists(st.floats(0, 1), min_size=1, max_size=12)


def test_identity_and_square():
    assert eval_G(BernsteinRate(1, (1.0,)), 0.3) == pytest.approx(0.3, abs=1e-15)
    assert eval_G(BernsteinRate(1, (0.0, 1.0)), 0.5) == pytest.approx(0.25, abs=1e-15)
    assert eval_g(BernsteinRate(1, (1.0,)), 0.0) == 1.0
    assert eval_g(BernsteinRate(1, (0.0, 1.0)), 0.0) == 0.0


def test_g_at_zero_matches_high_precision(oracle):
    rate = BernsteinRate(2.0, (0.2, 0.5, 1.0))
    assert eval_g(rate, 0.0) == pytest.approx(1.2, abs=1e-12)
    assert eval_g(rate, 0.0) == pytest.approx(oracle["g0_m3"], abs=1e-7)


@pytest.mark.parametrize("bad", [-0.01, 1.01, np.nan])
def test_domain_error(bad):
    with pytest.raises(ValueError):
        eval_G(BernsteinRate(1, (1.0,)), bad)


def test_invalid_rates():
    with pytest.raises(ValueError):
        BernsteinRate(0.0, (1.0,))
    with pytest.raises(ValueError):
        BernsteinRate(1.0, (1.5,))
    with pytest.raises(ValueError):
        BernsteinRate(1.0, ())
    with pytest.raises(ValueError):
        PowerLawSpec(0, 1)


@settings(max_examples=60, deadline=None)
@given(lam=st.floats(0.01, 50), probs=probs_st, u=st.floats(0, 1))
def test_range_and_g_identity(lam, probs, u):
    rate = BernsteinRate(lam, tuple(probs))
    G = eval_G(rate, u)
    assert eval_G(rate, 0.0) == 0.0
    assert -1e-15 <= G <= lam * (1 + 1e-12)
    if u > 0:
        assert eval_g(rate, u) * u == pytest.approx(G, rel=1e-14, abs=1e-300)


@pytest.mark.parametrize("m", [1, 5, 33])
def test_linear_reproduced(m):
    rate = bernstein_approx(lambda u: u, m)
    u = np.linspace(0, 1, 101)
    assert np.max(np.abs(eval_G(rate, u) - u)) < 1e-13


def test_bernstein_approx_errors_match_oracle(oracle):
    grid = np.linspace(0, 1, 1001)
    err = {}
    for m in (15, 20, 40, 60, 80):
        err[m] = np.max(np.abs(eval_G(bernstein_approx(lambda u: u ** 3, m), grid) - grid ** 3))
        assert err[m] == pytest.approx(oracle["sup_err_u3"][str(m)], rel=1e-9)
    assert err[60] < err[15]
    assert err[20] > err[40] > err[80]
    e2 = [np.max(np.abs(eval_G(bernstein_approx(lambda u: u ** 2, m), grid) - grid ** 2)) for m in (20, 40, 80)]
    assert e2 == pytest.approx([oracle["sup_err_u2"][k] for k in ("20", "40", "80")], rel=1e-9)
    assert e2[0] >= e2[1] >= e2[2]


def test_bernstein_approx_rejects_nonzero_origin():
    with pytest.raises(ValueError):
        bernstein_approx(lambda u: u + 0.1, 10)


def test_m1_cases(oracle, power_model, square):
    assert check_M1(square, square)
    res = check_M1(*power_model)
    assert res.unimodal and abs(res.w - 0.8) < 0.05
    two = BernsteinRate(1.0, tuple(oracle["two_max_probs"]))
    assert not check_M1(two, BernsteinRate(1.0, (1.0,)))


def test_m1_grid_step_checked(square):
    with pytest.raises(ValueError):
        check_M1(square, square, grid_step=0.1)


def test_field_constant_nodes_and_seam():
    assert field_at(constant_field(2.0, 1.0), (0.37, 0.91)) == pytest.approx((2.0, 1.0))
    rng = np.random.default_rng(0)
    fld = HeterogeneityField(rng.uniform(0.5, 3, (8, 8)), rng.uniform(0.5, 3, (8, 8)))
    a, b = field_at(fld, ((2 + 0.5) / 8, (5 + 0.5) / 8))
    assert a == fld.a[2, 5] and b == fld.b[2, 5]
    # dyadic points: y + 1 is exact in floating point, so the match must be too
    y = rng.integers(0, 2 ** 20, (50, 2)) / 2 ** 20
    yr = rng.random((50, 2))
    for shift in ((1, 0), (0, 1)):
        a0, b0 = field_at(fld, y)
        a1, b1 = field_at(fld, y + shift)
        assert np.array_equal(a0, a1) and np.array_equal(b0, b1)
        a2, _ = field_at(fld, yr + shift)
        assert np.max(np.abs(a2 - field_at(fld, yr)[0])) < 1e-12
    left = field_at(fld, (np.nextafter(1.0, 0.0), 0.3))
    right = field_at(fld, (0.0, 0.3))
    assert abs(left[0] - right[0]) < 1e-12 and abs(left[1] - right[1]) < 1e-12


def test_field_validation():
    with pytest.raises(ValueError):
        HeterogeneityField(np.zeros((4, 4)), np.ones((4, 4)))
    with pytest.raises(ValueError):
        HeterogeneityField(np.ones((4, 3)), np.ones((4, 3)))


def test_presets_and_config(tmp_path):
    fld = two_stripe_field(4.0, 1.0, n=8)
    assert fld.ratio_samples()[0, 0] == 4.0 and fld.ratio_samples()[7, 0] == 1.0
    mat = tmp_path / "a.txt"
    np.savetxt(mat, np.full((4, 4), 3.0))
    assert field_from_config({"file": str(mat)}).a[1, 1] == 3.0
    with pytest.raises(ValueError):
        field_from_config({"preset": "nope"})
    G, H = rates_from_config({"kind": "bernstein", "G": {"lambda": 2, "probs": [0, 1]},
                              "H": {"lambda": 1, "probs": [1]}})
    assert G.degree == 2 and H.degree == 1
    G2, H2 = rates_from_config({"kind": "power", "alpha": 3, "beta": 0.5, "m": 20})
    assert (G2, H2) == power_rates(PowerLawSpec(3, 0.5), 20)
