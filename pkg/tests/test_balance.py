import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from orliczkit.balance import (Cell, Domain, ThresholdError, UnsupportedFamily, analytic_admissible, balance_check,
                               cell_infimum, isotropic_balance_check, classify_trend, radial_envelope, theta_ratio)
from orliczkit.families import ModularFamily, make_family
from orliczkit.modular import ModularFunction

from conftest import norm


def var_exp(lo, eps):
    """|xi|^{lo + eps x} in one space dimension."""
    return ModularFunction(fn=lambda t, x, xi: norm(xi) ** (lo + eps * x[..., 0]), dim=1, isotropic=True,
                           profile=lambda t, x, s: s ** (lo + eps * x[..., 0]))


UNIT1 = Domain(T=1.0, lower=(0.0,), upper=(1.0,))


def test_cell_infimum_of_homogeneous_is_itself(quad2):
    xi = np.random.default_rng(0).normal(size=(7, 2))
    got = cell_infimum(quad2, Cell(0.2, 0.4, (0.1, 0.1), (0.3, 0.3)), xi)
    np.testing.assert_allclose(got, np.sum(xi ** 2, axis=-1))


def test_cell_infimum_picks_lowest_exponent_above_one():
    M = var_exp(2.0, 0.1)
    assert cell_infimum(M, Cell(0, 1, (0.0,), (1.0,)), np.array([[10.0]]), UNIT1)[0] == pytest.approx(100.0)


def test_cell_infimum_drops_double_phase_weight():
    M = ModularFunction(fn=lambda t, x, xi: norm(xi) ** 2 + 0.3 * x[..., 0] * norm(xi) ** 3, dim=1)
    xi = np.linspace(-5, 5, 11)[:, None]
    got = cell_infimum(M, Cell(0, 1, (0.0,), (1.0,)), xi, UNIT1)
    np.testing.assert_allclose(got, xi[:, 0] ** 2)


def test_theta_ratio_examples(quad2):
    cell = Cell(0.0, 1.0, (0.0, 0.0), (1.0, 1.0))
    assert theta_ratio(quad2, 0.5, [0.5, 0.5], [3.0, 1.0], cell) == 1.0
    eps = 0.1
    M = var_exp(2.0, eps)
    r = theta_ratio(M, 0.5, [1.0], [np.e], Cell(0, 1, (0.0,), (1.0,)), UNIT1)
    assert r == pytest.approx(np.exp(eps), rel=1e-9)
    with pytest.raises(ThresholdError):
        theta_ratio(M, 0.5, [1.0], [0.5], Cell(0, 1, (0.0,), (1.0,)), UNIT1)


@settings(max_examples=15)
@given(st.floats(0.05, 0.95), st.floats(0.05, 0.95), st.floats(1.5, 50.0), st.floats(0.05, 1.0))
def test_theta_nonincreasing_as_cells_shrink(t, x, s, eps):
    # monotone exponent: the cell infimum sits on a lattice corner, so sampling is exact
    M = var_exp(1.5, eps)
    prev = np.inf
    for delta in (0.5, 0.25, 0.125, 0.0625):
        th = theta_ratio(M, t, [x], [s], Cell.centred(t, [x], delta), UNIT1)
        assert th <= prev * (1 + 1e-9)
        assert th >= 1 - 1e-9
        prev = th


def test_homogeneous_balance_is_bounded(quad2):
    fam = ModularFamily("power_p", quad2, {"p": 2.0}, 2)
    rep = balance_check(fam)
    assert rep.verdict == "bounded-trend" and all(th == 1.0 for th in rep.theta_estimates)


def test_balance_report_thetas_at_least_one():
    rep = balance_check(make_family("variable_exponent", N=1), delta_grid=[0.25, 0.125, 0.0625], n_cells=4)
    assert all(th >= 1 - 1e-9 for th in rep.theta_estimates)
    d = rep.to_dict()
    assert set(d["rows"][0]) == {"delta", "theta", "witness"} and {"t", "x", "xi", "cell"} <= set(d["rows"][0]["witness"])


def test_balance_rejects_increasing_grid():
    with pytest.raises(ValueError):
        balance_check(make_family("llog", N=1), delta_grid=[0.1, 0.2])


@pytest.mark.parametrize("q,expected", [(2.2, True), (2.6, False)])
def test_double_phase_analytic(q, expected):
    ok, reason = analytic_admissible(make_family("double_phase", p=2.0, q=q, alpha=0.5, N=2))
    assert ok is expected and "1 + alpha/N = 1.25" in reason


def test_log_holder_exponent_is_admissible():
    assert analytic_admissible(make_family("variable_exponent", N=2))[0]


def test_unsupported_family(quad2):
    fam = ModularFamily("custom", ModularFunction(fn=quad2.fn, dim=2), {}, 2)
    with pytest.raises(UnsupportedFamily):
        analytic_admissible(fam)


def test_radial_envelope_examples(quad2):
    s = np.array([0.5, 1.0, 3.0])
    np.testing.assert_allclose(radial_envelope(quad2, s), s ** 2)
    aniso = ModularFunction(fn=lambda t, x, xi: xi[..., 0] ** 2 + 2 * xi[..., 1] ** 2, dim=2)
    np.testing.assert_allclose(radial_envelope(aniso, s), s ** 2, rtol=1e-12)
    dp = ModularFunction(fn=lambda t, x, xi: norm(xi) ** 2 + x[..., 0] * norm(xi) ** 3, dim=2, isotropic=True)
    t = np.array([0.5, 0.5])
    x = np.array([[0.0, 0.2], [0.7, 0.1]])
    np.testing.assert_allclose(radial_envelope(dp, s, t, x), s ** 2)


def test_radial_envelope_monotone_superlinear():
    s = np.logspace(-2, 3, 30)
    env = radial_envelope(make_family("orlicz_dp", variant="llog").M, s)
    assert np.all(np.diff(env) > 0) and np.all(np.diff(env / s) > 0)


def test_classify_trend():
    d = 2.0 ** -np.arange(1, 11)
    assert classify_trend(d, np.ones(10))["verdict"] == "bounded-trend"
    assert classify_trend(d, 1 + d ** -0.5)["verdict"] == "diverging-trend"
    assert classify_trend(d, 1 + d)["verdict"] == "bounded-trend"
    assert classify_trend(d, np.r_[np.ones(9), np.inf])["verdict"] == "diverging-trend"


# isotropic pointwise form ----------------------------------------------------------------------


@pytest.mark.parametrize("q,verdict,slope", [(2.2, "bounded-trend", -0.3), (2.6, "diverging-trend", 0.1)])
def test_isotropic_double_phase(q, verdict, slope):
    # ratio 1 + delta^alpha s^(q-p) at s = delta^(-N/p): excess slope N(q-p)/p - alpha
    fam = make_family("double_phase", p=2.0, q=q, alpha=0.5, N=2)
    rep = isotropic_balance_check(fam, c_sp=1.0)
    assert rep.verdict == verdict
    assert rep.trend["tail_slope"] == pytest.approx(slope, abs=1e-6)


def test_isotropic_homogeneous_is_one():
    rep = isotropic_balance_check(make_family("exp_orlicz", N=2), c_sp=3.0)
    assert rep.theta_estimates == [1.0] * 10 and rep.bounded


def test_isotropic_jump_diverges():
    fam = make_family("variable_exponent", N=2, p_min=2.0, p_max=3.0, jump=True)
    assert isotropic_balance_check(fam).verdict == "diverging-trend"


def test_isotropic_rejects_bad_input():
    with pytest.raises(UnsupportedFamily):
        isotropic_balance_check(make_family("orlicz_dp", variant="llog"))
    with pytest.raises(ValueError):
        isotropic_balance_check(make_family("power_p", p=2.0), c_sp=0.0)


@settings(max_examples=25)
@given(st.floats(0.05, 1.0), st.floats(0.5, 8.0), st.integers(0, 1000))
def test_isotropic_ratio_bounded_by_exponent_spread(eps, c_sp, seed):
    # |p(x) - p(y)| <= eps |x - y| <= eps delta / c_sp, so the ratio is at most s^(eps delta / c_sp)
    fam = ModularFamily("custom", var_exp(1.5, eps), {}, 1)
    deltas = [0.5, 0.25, 0.125, 0.0625]
    rep = isotropic_balance_check(fam, c_sp=c_sp, delta_grid=deltas, seed=seed, n_pairs=32)
    for d, th in zip(deltas, rep.theta_estimates):
        s = d ** -1.0
        assert 1.0 <= th <= s ** (eps * d / c_sp) * (1 + 1e-12)
