import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from orliczkit.families import make_family
from orliczkit.fields import GridField, read_binary, read_csv, write_binary, write_csv
from orliczkit.metrics import (UnboundedNormError, calibrate_poincare, luxemburg_norm, modular_convergence_check,
                               modular_integral, poincare_check, tends_to_zero, uniform_integrability_index)
from orliczkit.modular import ModularFunction

from conftest import norm


def const_vector(v, shape=(2, 2, 2), steps=(0.5, 0.5, 0.5)):
    vals = np.broadcast_to(np.asarray(v, float), shape + (len(v),)).copy()
    return GridField(vals, steps, centering="cell", vector=True)


# GridField ---------------------------------------------------------------------------------

def test_invalid_meshes():
    with pytest.raises(ValueError, match="strictly positive"):
        GridField(np.zeros((3, 3)), (0.1, 0.0))
    with pytest.raises(ValueError, match="axes"):
        GridField(np.zeros((3, 3)), (0.1,))
    bad = np.zeros((3, 4))
    bad[1, 0] = 1.0
    with pytest.raises(ValueError, match="boundary"):
        GridField(bad, (0.1, 0.1), boundary_zero=True)


@pytest.mark.parametrize("vector", [False, True])
def test_csv_and_binary_round_trip(tmp_path, vector):
    rng = np.random.default_rng(1)
    shape = (4, 5, 3) + ((2,) if vector else ())
    fld = GridField(rng.normal(size=shape), (0.25, 0.2, 0.5), origin=(0.0, -1.0, 2.0), vector=vector)
    write_csv(fld, tmp_path / "f.csv")
    write_binary(fld, tmp_path / "f.bin")
    for back in (read_csv(tmp_path / "f.csv"), read_binary(tmp_path / "f.bin")):
        np.testing.assert_array_equal(back.values, fld.values)
        assert back.steps == fld.steps and back.origin == fld.origin and back.vector == vector


def test_cell_gradient_exact_for_bilinear():
    t = np.linspace(0, 1, 3)[:, None, None]
    x = np.linspace(0, 1, 5)[None, :, None]
    y = np.linspace(0, 1, 4)[None, None, :]
    fld = GridField(np.broadcast_to(2 * x + 3 * y + x * y + t, (3, 5, 4)), (0.5, 0.25, 1 / 3))
    g = fld.cell_space_gradient()
    _, _, xc = fld.cell_values()
    np.testing.assert_allclose(g[..., 0], 2 + xc[..., 1], atol=1e-12)
    np.testing.assert_allclose(g[..., 1], 3 + xc[..., 0], atol=1e-12)


# modular integral -----------------------------------------------------------------------------

def test_modular_integral_examples(quad2):
    xi = const_vector([1.0, 0.0])
    assert modular_integral(quad2, xi) == pytest.approx(1.0)
    assert modular_integral(quad2, xi, 2.0) == pytest.approx(0.25)
    with pytest.raises(ValueError):
        modular_integral(quad2, xi, 0.0)


def test_variable_exponent_single_cell():
    M = ModularFunction(fn=lambda t, x, xi: norm(xi) ** np.full(np.shape(t), 2.0), dim=2)
    xi = const_vector([2.0, 0.0], shape=(1, 1, 1), steps=(1.0, 0.5, 1.0))
    assert modular_integral(M, xi) == pytest.approx(2.0)


@given(st.integers(0, 10_000), st.floats(0.1, 10))
def test_monotone_modulars(seed, lam):
    rng = np.random.default_rng(seed)
    xi = GridField(rng.normal(size=(3, 3, 3, 2)) * 3, (0.5, 0.5, 0.5), vector=True)
    small = make_family("double_phase", p=2.0, q=2.2, N=2).M
    big = ModularFunction(fn=lambda t, x, xi: small(t, x, xi) + norm(xi) ** 3, dim=2)
    assert modular_integral(small, xi, lam) <= modular_integral(big, xi, lam)


# Luxemburg norm -------------------------------------------------------------------------------

@given(st.floats(1e-3, 1e3))
def test_norm_of_constant(c):
    quad1 = ModularFunction(fn=lambda t, x, xi: np.sum(xi * xi, axis=-1), dim=1)
    xi = GridField(np.full((2, 2, 1), c), (0.5, 0.5), centering="cell", vector=True)
    assert luxemburg_norm(quad1, xi) == pytest.approx(c, rel=1e-10)


def test_norm_of_zero_field(quad2):
    assert luxemburg_norm(quad2, const_vector([0.0, 0.0])) == 0.0


def test_unbounded_norm():
    M = ModularFunction(fn=lambda t, x, xi: np.where(norm(xi) > 0, np.inf, 0.0), dim=1)
    xi = GridField(np.ones((2, 2, 1)), (0.5, 0.5), centering="cell", vector=True)
    with np.errstate(invalid="ignore"), pytest.raises(UnboundedNormError):
        luxemburg_norm(M, xi, max_doublings=20)


@given(st.integers(0, 10_000), st.floats(1.1, 5.0))
def test_power_norm_equals_discrete_lp(seed, p):
    rng = np.random.default_rng(seed)
    M = ModularFunction(fn=lambda t, x, xi: norm(xi) ** p, dim=1)
    xi = GridField(rng.normal(size=(4, 6, 1)) * 10.0 ** rng.uniform(-2, 2), (0.25, 1 / 6), centering="cell", vector=True)
    direct = (np.sum(np.abs(xi.values) ** p) * xi.cell_volume()) ** (1 / p)
    assert luxemburg_norm(M, xi) == pytest.approx(direct, rel=1e-8)


@given(st.integers(0, 10_000), st.floats(-5, 5).filter(lambda a: abs(a) > 1e-3))
def test_norm_axioms(seed, alpha):
    rng = np.random.default_rng(seed)
    M = make_family("llog", N=1).M
    a = GridField(rng.normal(size=(3, 4, 1)) * 5, (0.5, 0.25), vector=True)
    b = GridField(rng.normal(size=(3, 4, 1)) * 5, (0.5, 0.25), vector=True)
    na = luxemburg_norm(M, a)
    assert modular_integral(M, a, na) <= 1 + 1e-8
    assert modular_integral(M, a, (1 - 1e-7) * na) > 1
    assert luxemburg_norm(M, a.scale(alpha)) == pytest.approx(abs(alpha) * na, rel=1e-8)
    assert luxemburg_norm(M, a + b) <= (na + luxemburg_norm(M, b)) * (1 + 1e-8)


# modular convergence and uniform integrability --------------------------------------------------

def test_quadratic_decay_converges_at_unit_scale(quad2):
    limit = const_vector([0.3, -0.2])
    seq = [const_vector([0.3 + 1.0 / i, -0.2]) for i in range(1, 101)]
    assert modular_convergence_check(quad2, seq, limit).lambda_found == 1.0
    same = modular_convergence_check(quad2, [limit] * 5, limit)
    assert same.lambda_found == 1.0 and all(v == 0 for v in same.integrals[1.0])


def test_spike_sequence_has_no_modular_limit():
    n = 2 ** 16
    M = ModularFunction(fn=lambda t, x, xi: np.expm1(norm(xi)), dim=1)
    limit = GridField(np.zeros((1, n, 1)), (1.0, 1.0 / n), centering="cell", vector=True)
    seq = []
    for j in range(1, 17):
        v = np.zeros((1, n, 1))
        v[0, : n >> j, 0] = 2.0 ** j  # height 2^j on measure 2^-j
        seq.append(limit.like(v))
    with np.errstate(over="ignore"):
        assert modular_convergence_check(M, seq, limit).lambda_found is None


def test_uniform_integrability_examples():
    ones = [GridField(np.ones((2, 3)), (1.0, 0.5), centering="cell") for _ in range(3)]
    np.testing.assert_array_equal(uniform_integrability_index(ones, [1.5, 2.0]), [0.0, 0.0])
    spikes = []
    for n in (2, 4, 8, 16):
        v = np.zeros((1, 16))
        v[0, : 16 // n] = n
        spikes.append(GridField(v, (1.0, 1 / 16), centering="cell"))
    np.testing.assert_allclose(uniform_integrability_index(spikes, [1.0, 3.0, 15.0]), 1.0)


def test_superlinear_bound_gives_vanishing_tails():
    rng = np.random.default_rng(0)
    fields = []
    for n in range(1, 30):
        v = np.abs(rng.standard_t(3, size=(4, 64))) * (1 + 0.1 * n)
        fields.append(GridField(v, (0.25, 1 / 64), centering="cell"))
    assert max(np.sum(f.values ** 2) * f.cell_volume() for f in fields) < np.inf
    tails = uniform_integrability_index(fields, [1, 10, 100, 1000])
    assert np.all(np.diff(tails) <= 0) and tails[-1] == 0.0


@pytest.mark.parametrize("seq,ok", [([1, 0.1, 1e-4, 1e-5, 1e-6, 5e-7], True), ([1, 0.5, 0.4, 0.3], False),
                                     ([0, 0, 0], True), ([1, 1e-5, 1e-5, 1e-5, 1e-4, 5e-4], False)])
def test_tends_to_zero(seq, ok):
    assert tends_to_zero(seq) is ok


# Poincare ------------------------------------------------------------------------------------------

def test_poincare_zero_and_trace():
    B = lambda s: s ** 2  # noqa: E731
    zero = GridField(np.zeros((3, 5)), (0.5, 0.25))
    r = poincare_check(B, zero)
    assert r.lhs == 0 and r.rhs == 0
    bad = GridField(np.ones((3, 5)), (0.5, 0.25))
    with pytest.raises(ValueError, match="trace"):
        poincare_check(B, bad)


def test_poincare_sine_matches_rayleigh_quotient():
    x = np.linspace(0, 1, 2049)
    g = GridField(np.tile(np.sin(np.pi * x), (2, 1)), (1.0, x[1]))
    r = poincare_check(lambda s: s ** 2, g)
    assert r.ratio == pytest.approx(1 / np.pi ** 2, rel=1e-5)
    c2 = calibrate_poincare(lambda s: s ** 2, [g])
    assert poincare_check(lambda s: s ** 2, g, c2=c2).holds
