import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from orliczkit.diagnostics import (
    HProfile,
    InvalidTestFunction,
    OrderingError,
    TestField,
    a_priori_check,
    comparison_test,
    decay_check,
    energy_inequality_check,
    l1_norms,
    level_measures,
    renormalize_pipeline,
    renormalized_residual,
    truncation_commutes,
    w2,
    weak_form_residual,
)
from orliczkit.fluxes import laplace, p_laplace
from orliczkit.solver import Mesh, Problem, solve_bounded


def _sine(t, x):
    return np.sin(np.pi * x[..., 0])


@pytest.fixture(scope="module")
def heat_report():
    return solve_bounded(Problem((1.0,), 1.0, laplace(), u0=_sine), None, Mesh((64,), 128))


@pytest.fixture(scope="module")
def p3_report():
    prob = Problem((1.0,), 0.5, p_laplace(3.0), f=lambda t, x: 4 * np.cos(3 * x[..., 0]) * (1 + t),
                   u0=lambda t, x: 3 * np.sin(np.pi * x[..., 0]) ** 2)
    return solve_bounded(prob, None, Mesh((48,), 24))


def test_w2_is_linear_in_k():
    assert w2(2.0, 1.0, 4.0) == pytest.approx(6.0)
    assert w2(3.0, 1.0, 4.0) == pytest.approx(1.5 * w2(2.0, 1.0, 4.0))


def test_l1_norms_of_sine(heat_report):
    f1, u1 = l1_norms(heat_report)
    assert f1 == 0.0
    assert u1 == pytest.approx(2 / np.pi, rel=1e-3)


def test_a_priori_zero_solution():
    rep = solve_bounded(Problem((1.0,), 0.5, laplace()), None, Mesh((16,), 4))
    out = a_priori_check(rep, [1.0, 2.0])
    assert all(r["lhs1"] == 0.0 and r["lhs2"] == 0.0 for r in out["rows"])
    assert out["passed"]


def test_published_bound_slips_below_one(heat_report):
    # u0 = sin(pi x), f = 0: at k = 1/4 the half-weighted initial term is too small
    row = a_priori_check(heat_report, [0.25])["rows"][0]
    assert row["lhs1"] > row["w2"] * 1.05
    assert row["within_w_energy"]
    row1 = a_priori_check(heat_report, [1.0])["rows"][0]
    assert row1["passed"]


def test_a_priori_p3(p3_report):
    out = a_priori_check(p3_report, [1.0, 2.0, 4.0, 8.0])
    assert out["passed"] and not out["degraded"]
    for r in out["rows"]:
        assert r["lhs2"] <= r["lhs1"] * (1 + 1e-9)


def test_energy_inequality(heat_report, p3_report):
    assert energy_inequality_check(heat_report, [0.25, 0.5, 1.0])["passed"]
    assert energy_inequality_check(p3_report, [0.5, 1.0, 2.0, 8.0])["passed"]


def test_decay_and_levels(p3_report):
    out = decay_check(p3_report, [1.0, 2.0, 3.0, 4.0])
    assert out["decreasing"]
    meas = level_measures(p3_report, [0.5, 1.0, 2.0, 4.0])
    assert np.all(np.diff(meas) <= 0)


@given(st.floats(0.1, 10.0), st.floats(-20.0, 20.0))
def test_h_profile_antiderivative(R, s):
    h = HProfile(R)
    exact, _ = quad(lambda v: float(h(v)), 0.0, s, points=[v for v in (R / 2, R, -R / 2, -R) if min(0, s) < v < max(0, s)])
    assert float(h.antiderivative(s)) == pytest.approx(exact, abs=1e-9 * max(1.0, R))


def test_h_profile_shape():
    h = HProfile(2.0)
    assert h(np.array([0.0, 1.0, 2.0, 5.0])).tolist() == [1.0, 1.0, 0.0, 0.0]
    assert float(h(1.5)) == pytest.approx(0.5)
    assert np.all(HProfile()(np.array([-100.0, 3.0])) == 1.0)
    assert float(HProfile().antiderivative(-3.0)) == -3.0


@pytest.mark.parametrize("tau,r", [(0.0, 0.1), (0.9, 0.2), (0.3, 0.0)])
def test_invalid_test_field(heat_report, tau, r):
    with pytest.raises(InvalidTestFunction):
        TestField(tau, r).values(heat_report)


def test_weak_form_vanishes_on_scheme_solution(heat_report, p3_report):
    for rep in (heat_report, p3_report):
        fields = [TestField(0.3, 0.1), TestField(0.2, 0.05, 2)]
        res = weak_form_residual(rep, fields)
        assert max(res) < 1e-9
        assert renormalized_residual(rep, HProfile(), fields) == pytest.approx(res, abs=1e-12)


def test_renormalized_residual_zero_data():
    rep = solve_bounded(Problem((1.0,), 1.0, p_laplace(3.0)), None, Mesh((16,), 8))
    assert renormalized_residual(rep, HProfile(2.0), [TestField(0.3, 0.1)]) == [0.0]


def test_truncation_commutes(p3_report):
    out = truncation_commutes(p3_report, 1.0)
    assert out["max_regular_deviation"] < 1e-12
    assert 0 <= out["exceptional_fraction"] < 0.2


def test_comparison_identical_and_ordered():
    prob = Problem((1.0,), 0.3, p_laplace(3.0))
    mesh = Mesh((24,), 8)
    same = comparison_test(prob, (1.0, _sine), (1.0, _sine), None, mesh)
    assert same["violation"] == 0.0 and same["passed"]
    ordered = comparison_test(prob, (0.0, _sine), (1.0, _sine), None, mesh)
    assert ordered["passed"]


def test_comparison_rejects_unordered_data():
    prob = Problem((1.0,), 0.3, laplace())
    with pytest.raises(OrderingError):
        comparison_test(prob, (1.0, 0.0), (0.0, 0.0), None, Mesh((8,), 2))


def test_pipeline_cauchy_trend():
    prob = Problem((1.0,), 0.5, p_laplace(3.0),
                   f=lambda t, x: 1.0 / np.sqrt(np.abs(x[..., 0] - 0.5) + 1e-3),
                   u0=lambda t, x: 1.0 / np.sqrt(np.abs(x[..., 0] - 0.5) + 1e-3))
    out = renormalize_pipeline(prob, [1.0, 2.0, 4.0, 8.0], Mesh((32,), 16), k_list=(1.0,))
    diffs = out["cauchy"]["1.0"]
    assert len(diffs) == 3 and diffs[-1] < diffs[0]
    assert all(run["a_priori"]["passed"] for run in out["runs"])
    with pytest.raises(ValueError):
        renormalize_pipeline(prob, [2.0, 1.0], Mesh((8,), 2))
