import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from orliczkit.families import preset_families
from orliczkit.fields import GridField
from orliczkit.modular import ModularFunction
from orliczkit.mollifier import (
    C2_JENSEN,
    FROZEN_C1,
    calibrate_c1,
    epsilon_of_mu,
    mollify_full,
    mollify_truncated,
    ode_refinement_orders,
    ode_residual,
    oscillatory_field,
    uniform_modular_bound,
    verify_theorem31,
)


def _scalar(values, dt=1 / 64, dx=1 / 8):
    return GridField(np.asarray(values, float), (dt, dx))


def _time_only(values, T=1.0):
    values = np.asarray(values, float)
    return _scalar(np.repeat(values[:, None], 3, axis=1), dt=T / (len(values) - 1))


def test_epsilon_examples():
    assert epsilon_of_mu(np.e ** 2) == pytest.approx(4 / np.e ** 2, rel=1e-14)
    assert epsilon_of_mu(np.e) == pytest.approx(1 / np.e, rel=1e-14)
    eps = [epsilon_of_mu(m) for m in (10.0, 100.0, 1000.0, 1e4)]
    assert np.all(np.diff(eps) < 0)


@pytest.mark.parametrize("mu", [2.0, 1.0, -5.0])
def test_rate_must_exceed_two(mu):
    with pytest.raises(ValueError):
        epsilon_of_mu(mu)
    with pytest.raises(ValueError):
        mollify_full(_time_only(np.ones(5)), mu)


def test_constant_is_fixed_by_full_mollifier():
    phi = _time_only(np.full(65, 3.5))
    assert np.max(np.abs(mollify_full(phi, 50.0).values - 3.5)) < 1e-13


def test_step_with_zero_history():
    mu, n = 20.0, 128
    phi = _time_only(np.ones(n + 1))
    t = np.linspace(0.0, 1.0, n + 1)
    out = mollify_full(phi, mu, history="zero").values[:, 0]
    assert np.max(np.abs(out - (1 - np.exp(-mu * t)))) < 1e-13


def test_full_mollifier_matches_quadrature():
    n, mu = 40, 15.0
    t = np.linspace(0.0, 1.0, n + 1)
    nodes = np.sin(3 * t) + t ** 2
    out = mollify_full(_time_only(nodes), mu).values[:, 0]

    def oracle(tau):
        interp = lambda s: np.interp(s, t, nodes)  # holds nodes[0] for s < 0
        inner, _ = quad(lambda s: mu * np.exp(mu * (s - tau)) * interp(s), 0.0, tau, points=t[t < tau], limit=200)
        return inner + nodes[0] * np.exp(-mu * tau)

    for m in (0, 1, 7, 23, 40):
        assert out[m] == pytest.approx(oracle(t[m]), abs=1e-10)


def test_truncated_matches_quadrature():
    n, mu = 64, 30.0
    t = np.linspace(0.0, 1.0, n + 1)
    nodes = np.cos(5 * t)
    out = mollify_truncated(_time_only(nodes), mu).values[:, 0]
    eps = epsilon_of_mu(mu)

    def oracle(tau):
        interp = lambda s: np.interp(s, t, nodes)
        lo = tau - eps
        a = max(lo, 0.0)
        body, _ = quad(lambda s: mu * np.exp(mu * (s - tau)) * interp(s), a, tau,
                       points=t[(t > a) & (t < tau)], limit=200, epsabs=1e-13)
        if lo < 0:
            body += nodes[0] * (np.exp(-mu * tau) - np.exp(-mu * tau - mu * (0.0 - lo)))
        return body

    for m in (0, 3, 17, 64):
        assert out[m] == pytest.approx(oracle(t[m]), abs=1e-10)


def test_zero_field_gives_zero():
    phi = _scalar(np.zeros((33, 9)))
    assert np.all(mollify_truncated(phi, 100.0).values == 0.0)


@settings(max_examples=30)
@given(
    st.integers(0, 10_000),
    st.floats(-3, 3),
    st.floats(-3, 3),
    st.sampled_from([10.0, 100.0, 1000.0]),
)
def test_linearity(seed, a, b, mu):
    rng = np.random.default_rng(seed)
    p = _scalar(rng.normal(size=(33, 9)))
    q = _scalar(rng.normal(size=(33, 9)))
    lhs = mollify_truncated(p.like(a * p.values + b * q.values), mu).values
    rhs = a * mollify_truncated(p, mu).values + b * mollify_truncated(q, mu).values
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * (1 + abs(a) + abs(b)) * 10


@settings(max_examples=30)
@given(st.integers(0, 10_000), st.sampled_from([3.0, 10.0, 100.0, 1000.0]))
def test_sup_contraction(seed, mu):
    rng = np.random.default_rng(seed)
    p = _scalar(rng.normal(size=(33, 9)) * rng.uniform(0.1, 10))
    sup = np.max(np.abs(p.values))
    assert np.max(np.abs(mollify_full(p, mu).values)) <= sup * (1 + 1e-12)
    assert np.max(np.abs(mollify_truncated(p, mu).values)) <= sup * (1 + 1e-12)


@settings(max_examples=20)
@given(st.integers(0, 10_000), st.sampled_from([10.0, 100.0]))
def test_commutes_with_space_gradient(seed, mu):
    rng = np.random.default_rng(seed)
    p = _scalar(rng.normal(size=(17, 9)))
    g = p.space_gradient()
    a = mollify_truncated(g.like(g.values), mu).values
    b = mollify_truncated(p, mu).space_gradient().values
    assert np.max(np.abs(a - b)) < 1e-12


def test_initial_value_of_truncated():
    mu = 100.0
    p = _scalar(np.random.default_rng(1).normal(size=(65, 9)))
    out = mollify_truncated(p, mu).values[0]
    assert np.allclose(out, p.values[0] * (1 - np.exp(-np.log(mu) ** 2)), atol=1e-13)


def test_ode_residual_second_order():
    _, orders = ode_refinement_orders(lambda t, x: np.sin(4 * t) * np.cos(np.pi * x), 10.0, [64, 128, 256, 512])
    assert min(orders) > 1.8


def test_ode_residual_vanishes_on_constants():
    assert ode_residual(_time_only(np.full(33, -2.0)), 20.0) < 1e-12


def test_properties_on_oscillatory_field():
    M = ModularFunction(fn=lambda t, x, xi: np.sum(np.abs(xi) ** 3, axis=-1), dim=1)
    xi = oscillatory_field(3, N=1, nt=128)
    scalar = GridField(xi.values[..., 0], xi.steps, xi.origin)
    rep = verify_theorem31(scalar, [10.0, 100.0, 1000.0], M)
    assert rep.passed, rep.to_dict()


def test_uniform_bound_on_zero_field(quad2):
    M = quad2
    xi = GridField(np.zeros((17, 5, 5, 2)), (1 / 16, 1 / 4, 1 / 4), vector=True)
    rows = uniform_modular_bound(xi, M, [10.0, 100.0], C1=1.0)
    assert all(r.lhs == 0.0 and r.rhs == 0.0 and r.holds for r in rows)


def test_jensen_constant():
    assert C2_JENSEN == pytest.approx(1.5819767068693265, rel=1e-14)


@pytest.mark.parametrize("label", ["power_p", "variable_exponent_smooth", "variable_exponent_jump"])
def test_frozen_c1_reproduces_from_training_seeds(label):
    fam = dict((lbl, f) for lbl, f, _ in preset_families())[label]
    fields = [oscillatory_field(1000 + i, N=fam.M.dim) for i in range(20)]
    c = calibrate_c1(fam.M, fields, [10.0, 100.0, 1000.0, 1e4])
    assert round(c, 3) == FROZEN_C1[label]
