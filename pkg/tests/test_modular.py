import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from orliczkit.families import make_family, preset_families
from orliczkit.modular import (GridBoundaryError, ModularFunction, SamplePlan, asym_truncate, biconjugate,
                               check_delta2, check_nfunction, conjugate, conjugate_points, envelope_at,
                               level_remainder, plateau_cutoff, time_window, truncate)

from conftest import norm


def power(p, dim=1, scale=None):
    c = (1.0 / p) if scale is None else scale
    return ModularFunction(fn=lambda t, x, xi: c * norm(xi) ** p, dim=dim, isotropic=True,
                           profile=lambda t, x, s: c * s ** p, homogeneous=True)


# N-function checks -----------------------------------------------------------------------

def test_quadratic_passes_all_conditions(quad2):
    assert check_nfunction(quad2).passed


def test_linear_growth_fails_superlinearity():
    lin = ModularFunction(fn=lambda t, x, xi: norm(xi), dim=2, isotropic=True)
    rep = check_nfunction(lin)
    assert not rep.passed
    failed = [c.name for c in rep.conditions if not c.passed]
    assert any("superlinear" in name for name in failed)


def test_smooth_variable_exponent_passes():
    fam = make_family("variable_exponent", N=2, p_min=1.5, p_max=3.0)
    assert check_nfunction(fam.M, SamplePlan(n_points=32, seed=3)).passed


def test_nonfinite_evaluation_is_reported_not_raised():
    bad = ModularFunction(fn=lambda t, x, xi: np.where(norm(xi) > 100, np.nan, norm(xi) ** 2), dim=1)
    rep = check_nfunction(bad)
    assert not rep.passed


@pytest.mark.parametrize("label,fam,_", list(preset_families()), ids=lambda v: v if isinstance(v, str) else "")
def test_presets_are_n_functions(label, fam, _):
    # exp(|xi|) overflows double precision past |xi| ~ 709, which the check reports as non-finite
    radii = np.logspace(-4, 2.5, 27) if label == "exp_orlicz" else np.logspace(-4, 4, 33)
    assert check_nfunction(fam.M, SamplePlan(n_points=12, n_dirs=4, radii=radii)).passed, label


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_exp_overflow_is_structural_failure():
    rep = check_nfunction(make_family("exp_orlicz", N=1).M)
    assert not rep["structural"].passed


# conjugates ---------------------------------------------------------------------------------

def test_half_square_is_self_conjugate():
    M = power(2.0)
    eta = np.linspace(-3, 3, 61)
    tab = conjugate(M, 0.0, [0.5], (eta,), (np.linspace(-8, 8, 1601),), refine=True)
    np.testing.assert_allclose(tab.values, 0.5 * eta ** 2, atol=1e-12)


def test_quartic_conjugate_matches_closed_form_and_dense_grid():
    M = power(4.0, scale=0.25)
    eta = np.linspace(0.1, 4.0, 40)
    tab = conjugate(M, 0.0, [0.5], (eta,), (np.linspace(-3, 3, 2001),), refine=True)
    closed = 0.75 * eta ** (4.0 / 3.0)
    np.testing.assert_allclose(tab.values, closed, rtol=1e-6)
    # independent route: brute-force maximisation on a much finer grid
    s = np.linspace(-3, 3, 600001)
    brute = np.array([np.max(e * s - 0.25 * s ** 4) for e in eta])
    np.testing.assert_allclose(tab.values, brute, rtol=1e-6)


def test_anisotropic_conjugate_on_tensor_grid():
    M = ModularFunction(fn=lambda t, x, xi: xi[..., 0] ** 2 + 2 * xi[..., 1] ** 2, dim=2)
    e1 = np.linspace(-2, 2, 9)
    e2 = np.linspace(-3, 3, 7)
    ax = np.linspace(-3, 3, 601)
    tab = conjugate(M, 0.0, [0.5, 0.5], (e1, e2), (ax, ax))
    E1, E2 = np.meshgrid(e1, e2, indexing="ij")
    np.testing.assert_allclose(tab.values, E1 ** 2 / 4 + E2 ** 2 / 8, atol=1e-10)


def test_maximiser_on_grid_edge_raises():
    M = power(2.0)
    with pytest.raises(GridBoundaryError, match="widen"):
        conjugate(M, 0.0, [0.5], (np.array([5.0]),), (np.linspace(-1, 1, 101),))


def test_conjugate_table_invariants_and_csv(tmp_path):
    fam = make_family("double_phase", N=1)
    eta = np.linspace(-6, 6, 49)
    tab = conjugate(fam.M, 0.3, [0.4], (eta,), (np.linspace(-5, 5, 2001),), refine=True)
    assert tab.values[24] == 0.0 and np.all(tab.values >= 0)
    assert np.all(np.diff(tab.values, 2) >= -1e-9)
    tab.to_csv(tmp_path / "c.csv")
    data = np.loadtxt(tmp_path / "c.csv", delimiter=",", skiprows=1)
    np.testing.assert_array_equal(data[:, 1], tab.values)


@given(st.floats(1.2, 5.0), st.floats(0.05, 4.0))
def test_power_closed_form_property(p, eta):
    M = power(p)
    q = p / (p - 1)
    xi_max = 2.0 * eta ** (1 / (p - 1)) + 1.0
    tab = conjugate(M, 0.0, [0.5], (np.array([eta]),), (np.linspace(-xi_max, xi_max, 2001),), refine=True)
    assert tab.values[0] == pytest.approx(eta ** q / q, rel=1e-6)


@given(st.floats(-8, 8), st.floats(-8, 8), st.floats(0, 1), st.floats(0, 1))
def test_fenchel_young_property(xi, eta, t, x):
    fam = make_family("double_phase", N=1)
    M = fam.M
    mstar = conjugate_points(M, t, [x], [[eta]], xi_radius=12.0)[0]
    m = float(M(t, [x], [xi]))
    assert xi * eta <= m + mstar + 1e-10 * (1 + m + mstar)


@given(st.floats(1.5, 3.0), st.floats(0.5, 3.0))
def test_order_reversal(p, c):
    eta = np.linspace(-2, 2, 25)
    grid = (np.linspace(-10, 10, 2001),)
    small = conjugate(power(p, scale=min(c, 1.0)), 0.0, [0.5], (eta,), grid).values
    big = conjugate(power(p, scale=max(c, 1.0)), 0.0, [0.5], (eta,), grid).values
    assert np.all(small >= big - 1e-12)


# envelopes ----------------------------------------------------------------------------------

def test_w_shape_envelope():
    xs = np.linspace(-3, 3, 601)
    env = biconjugate(np.minimum((xs - 1) ** 2, (xs + 1) ** 2), xs)
    np.testing.assert_allclose(env, np.where(np.abs(xs) <= 1, 0.0, (np.abs(xs) - 1) ** 2), atol=1e-12)


@pytest.mark.parametrize("f", [lambda x: x ** 2, np.abs])
def test_convex_input_is_fixed(f):
    xs = np.linspace(-2, 2, 401)
    np.testing.assert_allclose(biconjugate(f(xs), xs), f(xs), atol=1e-12)


@given(st.lists(st.floats(-5, 5), min_size=5, max_size=60))
def test_envelope_sandwich_1d(vals):
    f = np.asarray(vals)
    xs = np.linspace(-1, 1, len(f))
    g = biconjugate(f, xs)
    assert np.all(g <= f + 1e-12)
    assert np.all(np.diff(g, 2) >= -1e-9)
    np.testing.assert_allclose(biconjugate(g, xs), g, atol=1e-10)


@given(st.integers(0, 10_000))
def test_envelope_sandwich_2d(seed):
    rng = np.random.default_rng(seed)
    ax = np.linspace(-1, 1, 9)
    f = rng.normal(size=(9, 9))
    g = biconjugate(f, (ax, ax))
    assert np.all(g <= f + 1e-12)
    np.testing.assert_allclose(biconjugate(g, (ax, ax)), g, atol=1e-10)
    pts = rng.uniform(-1, 1, (20, 2))
    # the envelope at a point never exceeds the envelope's bilinear neighbours' max
    assert np.all(np.isfinite(envelope_at(f, (ax, ax), pts)))


def test_legendre_route_agrees_on_convex_2d():
    ax = np.linspace(-2, 2, 41)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    f = X ** 2 + 0.5 * Y ** 2
    np.testing.assert_allclose(biconjugate(f, (ax, ax), method="legendre"), f, atol=1e-9)
    np.testing.assert_allclose(biconjugate(f, (ax, ax)), f, atol=1e-12)


# Delta_2 --------------------------------------------------------------------------------------

def test_delta2_power():
    rep = check_delta2(power(3.0, dim=2))
    np.testing.assert_allclose(rep.ratios, 8.0, rtol=1e-12)
    assert rep.holds_estimate


def test_delta2_exponential_fails():
    M = ModularFunction(fn=lambda t, x, xi: np.expm1(norm(xi)) + norm(xi), dim=1)
    rep = check_delta2(M)
    assert rep.verdict == "likely_not"


def test_delta2_square_log_holds():
    M = ModularFunction(fn=lambda t, x, xi: norm(xi) ** 2 * (1 + np.abs(np.log(np.maximum(norm(xi), 1e-300)))), dim=1)
    assert check_delta2(M).holds_estimate


# truncations ----------------------------------------------------------------------------------

@pytest.mark.parametrize("fn,args,expected", [
    (truncate, (2, 3), 2), (truncate, (2, -5), -2), (truncate, (2, 1), 1),
    (asym_truncate, (1, 3, -5), -1), (asym_truncate, (1, 3, 2), 2), (asym_truncate, (1, 3, 7), 3),
    (level_remainder, (2, 2.5), 0.5), (level_remainder, (2, 1), 0), (level_remainder, (2, 10), 1),
    (plateau_cutoff, (2, 1.5), 1), (plateau_cutoff, (2, 2.4), 0.6), (plateau_cutoff, (2, 3.5), 0),
])
def test_truncation_examples(fn, args, expected):
    assert fn(*args) == pytest.approx(expected, abs=1e-15)


def test_invalid_levels():
    with pytest.raises(ValueError):
        truncate(0, 1.0)
    with pytest.raises(ValueError):
        asym_truncate(1, -1, 0.0)


@given(st.floats(0.01, 100), st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
def test_truncation_algebra(k, a, b):
    assert truncate(k, truncate(k, a)) == truncate(k, a)
    assert abs(truncate(k, a) - truncate(k, b)) <= abs(a - b)
    if a <= b:
        assert truncate(k, a) <= truncate(k, b)


@given(st.floats(0, 50), st.floats(-1e3, 1e3))
def test_level_remainder_vanishes_exactly_inside(l, v):
    assert (level_remainder(l, v) == 0) == (abs(v) <= l)


def test_time_window_examples():
    assert time_window(1, 0.1, 0.5) == pytest.approx(1.0, abs=1e-14)
    assert time_window(1, 0.1, -0.2) == 0.0
    assert time_window(1, 0.1, 1.0) == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(ValueError, match="degenerate"):
        time_window(0.1, 0.05, 0.0)
