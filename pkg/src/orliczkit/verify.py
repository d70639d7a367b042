"""Property and oracle suites shared by the acceptance tests and ``orliczkit verify``.

Every suite is a pure function of its seed and returns a JSON-ready dict with a
boolean ``passed``. Reports carry no timings, so repeated runs are byte-identical.
"""

from __future__ import annotations

from typing import Callable, Dict

import numpy as np

from .balance import analytic_admissible, balance_check
from .diagnostics import (
    HProfile,
    TestField,
    a_priori_check,
    calibrate_level_constant,
    comparison_test,
    decay_check,
    energy_inequality_check,
    level_measure_check,
    renormalized_residual,
    weak_form_residual,
)
from .families import make_family, preset_families
from .fields import GridField
from .fluxes import make_flux
from .metrics import luxemburg_norm, modular_integral
from .modular import ModularFunction, biconjugate, conjugate, conjugate_points
from .mollifier import C2_JENSEN, FROZEN_C1, ode_refinement_orders, oscillatory_field, uniform_modular_bound, verify_theorem31
from .solver import Mesh, Problem, solve_bounded

__all__ = ["SUITES", "CRITERIA", "run_suite", "run_all"]


# 1. Fenchel-Young ----------------------------------------------------------------------------

def _grad_fd(M: ModularFunction, t, x, xi):
    g = np.empty_like(xi)
    for a in range(xi.shape[-1]):
        h = 1e-6 * (1.0 + np.abs(xi[..., a]))
        e = np.zeros(xi.shape[-1])
        e[a] = 1.0
        g[..., a] = (M(t, x, xi + h[..., None] * e) - M(t, x, xi - h[..., None] * e)) / (2 * h)
    return g


def _power_modular(p: float, dim: int) -> ModularFunction:
    return ModularFunction(fn=lambda t, x, xi: np.sum(np.abs(xi) ** 2, axis=-1) ** (p / 2) / p, dim=dim,
                           isotropic=True, family="power_p", params={"p": p, "space_dim": 1})


def suite_fenchel_young(seed: int = 0, samples: int = 10_000) -> dict:
    """xi.eta <= M + M* + 1e-10 (1 + M + M*) on seeded samples, plus the power-conjugate closed form."""
    rng = np.random.default_rng(seed)
    presets = list(preset_families())
    n_tx = 10
    per_point = int(np.ceil(samples / (len(presets) * n_tx)))
    rows = []
    total = 0
    for label, fam, _ in presets:
        M = fam.M
        worst = -np.inf
        for _ in range(n_tx):
            t = float(rng.uniform(0, 1))
            x = rng.uniform(0, 1, M.space_dim)
            rmax = 5.0 if label == "exp_orlicz" else 20.0
            dirs = rng.normal(size=(per_point, M.dim))
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
            radii = 10.0 ** rng.uniform(-2, np.log10(rmax), per_point)
            xi = radii[:, None] * dirs
            # half the duals are gradients at xi (near-equality), half at independent points
            other = 10.0 ** rng.uniform(-2, np.log10(rmax), per_point)[:, None] * dirs[rng.permutation(per_point)]
            base = np.where((np.arange(per_point) % 2 == 0)[:, None], xi, other)
            tt = np.full(per_point, t)
            xx = np.broadcast_to(x, (per_point, M.space_dim))
            eta = _grad_fd(M, tt, xx, base)
            mstar = conjugate_points(M, t, x, eta, xi_radius=1.5 * rmax)
            m = M(tt, xx, xi)
            gap = np.sum(xi * eta, axis=1) - m - mstar
            worst = max(worst, float(np.max(gap / (1.0 + m + mstar))))
            total += per_point
        rows.append({"preset": label, "worst_relative_gap": worst, "passed": bool(worst <= 1e-10)})
    closed = []
    for p in (1.5, 2.0, 3.0, 4.0):
        for dim in (1, 2):
            M = _power_modular(p, dim)
            q = p / (p - 1.0)
            etas = np.linspace(0.05, 3.0, 60)
            xi_max = 2.0 * 3.0 ** (1.0 / (p - 1.0))
            s = np.linspace(-xi_max, xi_max, 4001)
            if dim == 1:
                tab = conjugate(M, 0.5, np.array([0.5]), (etas,), (s,), refine=True)
            else:
                tab = conjugate(M, 0.5, np.array([0.5]), etas, s, refine=True)
            exact = etas ** q / q
            rel = float(np.max(np.abs(tab.values - exact) / exact))
            closed.append({"p": p, "dim": dim, "max_relative_error": rel, "passed": bool(rel <= 1e-6)})
    return {
        "criterion": 1,
        "samples": total,
        "presets": rows,
        "power_closed_form": closed,
        "passed": bool(total >= samples and all(r["passed"] for r in rows) and all(r["passed"] for r in closed)),
    }


# 2. Envelopes -----------------------------------------------------------------------------------

def _brute_envelope_1d(xs: np.ndarray, f: np.ndarray, n_dual: int = 16001) -> np.ndarray:
    """sup over a fine dual grid of (x eta - max_y (y eta - f(y)))."""
    slope = float(np.max(np.abs(np.diff(f) / np.diff(xs))))
    etas = np.linspace(-slope, slope, n_dual)
    fstar = np.empty(n_dual)
    for i in range(0, n_dual, 1024):
        fstar[i:i + 1024] = np.max(etas[i:i + 1024, None] * xs[None, :] - f[None, :], axis=1)
    out = np.empty(len(xs))
    for i in range(0, len(xs), 1024):
        out[i:i + 1024] = np.max(xs[i:i + 1024, None] * etas[None, :] - fstar[None, :], axis=1)
    return out


def suite_envelope(seed: int = 0, n_random: int = 20) -> dict:
    rng = np.random.default_rng(seed)
    below, idem = -np.inf, 0.0
    for i in range(n_random):
        if i % 2 == 0:
            xs = np.sort(np.concatenate([[-3.0, 3.0], rng.uniform(-3, 3, 199)]))
            f = np.sin(rng.uniform(1, 5) * xs) + rng.uniform(0, 1) * xs ** 2 + rng.uniform(0, 0.5, len(xs))
            grid = xs
        else:
            ax = np.linspace(-2, 2, 31)
            X, Y = np.meshgrid(ax, ax, indexing="ij")
            f = rng.uniform(0.2, 1) * X ** 2 + rng.uniform(0.2, 1) * Y ** 2 + np.cos(rng.uniform(1, 4) * X * Y)
            f = f + rng.uniform(0, 0.3, f.shape)
            grid = (ax, ax)
        g = biconjugate(f, grid)
        gg = biconjugate(g, grid)
        below = max(below, float(np.max(g - f)))
        idem = max(idem, float(np.max(np.abs(gg - g))))
    xs = np.linspace(-3, 3, 6001)
    w = np.minimum((xs - 1) ** 2, (xs + 1) ** 2)
    env = biconjugate(w, xs)
    oracle = _brute_envelope_1d(xs, w)
    closed = np.where(np.abs(xs) <= 1, 0.0, (np.abs(xs) - 1) ** 2)
    err_oracle = float(np.max(np.abs(env - oracle)))
    err_closed = float(np.max(np.abs(env - closed)))
    convex = xs ** 2
    err_convex = float(np.max(np.abs(biconjugate(convex, xs) - convex)))
    return {
        "criterion": 2,
        "max_envelope_minus_f": below,
        "max_idempotence_gap": idem,
        "w_shape_vs_bruteforce": err_oracle,
        "w_shape_vs_closed_form": err_closed,
        "convex_fixed_point_error": err_convex,
        "passed": bool(below <= 0.0 and idem <= 1e-10 and err_oracle <= 1e-6 and err_closed <= 1e-6
                       and err_convex <= 1e-12),
    }


# 3. Luxemburg ---------------------------------------------------------------------------------------

def _lux_modulars():
    return [
        ("power_p_2.5", make_family("power_p", p=2.5, N=1).M, 2.5),
        ("power_p_1.5", make_family("power_p", p=1.5, N=1).M, 1.5),
        ("variable_exponent", make_family("variable_exponent", N=1).M, None),
        ("double_phase", make_family("double_phase", p=2.0, q=2.2, alpha=0.5, N=1).M, None),
        ("llog", make_family("llog", N=1).M, None),
    ]


def suite_luxemburg(seed: int = 0, n_fields: int = 1000, tol: float = 1e-8) -> dict:
    rng = np.random.default_rng(seed)
    mods = _lux_modulars()
    worst = {"consistency_upper": -np.inf, "consistency_lower": np.inf, "homogeneity": 0.0, "triangle": -np.inf,
             "p_norm": 0.0}
    for i in range(n_fields):
        label, M, p = mods[i % len(mods)]
        shape = (5, 5, 1)
        scale = 10.0 ** rng.uniform(-2, 2)
        a = GridField(rng.normal(size=shape) * scale, (0.25, 0.25), vector=True)
        b = GridField(rng.normal(size=shape) * scale, (0.25, 0.25), vector=True)
        na = luxemburg_norm(M, a)
        worst["consistency_upper"] = max(worst["consistency_upper"], modular_integral(M, a, na) - 1.0)
        worst["consistency_lower"] = min(worst["consistency_lower"], modular_integral(M, a, (1 - 10 * tol) * na) - 1.0)
        alpha = float(rng.choice([-3.0, 0.5, 2.0, 7.0]))
        nh = luxemburg_norm(M, a.scale(alpha))
        worst["homogeneity"] = max(worst["homogeneity"], abs(nh - abs(alpha) * na) / (abs(alpha) * na))
        nb = luxemburg_norm(M, b)
        nab = luxemburg_norm(M, a + b)
        worst["triangle"] = max(worst["triangle"], (nab - na - nb) / (na + nb))
        if p is not None:
            v, _, _ = a.cell_values()
            direct = (np.sum(np.abs(v) ** p) * a.cell_volume()) ** (1.0 / p)
            worst["p_norm"] = max(worst["p_norm"], abs(na - direct) / direct)
    ok = (worst["consistency_upper"] <= tol and worst["consistency_lower"] > 0 and worst["homogeneity"] <= tol
          and worst["triangle"] <= tol and worst["p_norm"] <= tol)
    return {"criterion": 3, "fields": n_fields, "worst": worst, "tol": tol, "passed": bool(ok)}


# 4. Balance ----------------------------------------------------------------------------------------------

def suite_balance(seed: int = 0) -> dict:
    rows = []
    for label, fam, expected in preset_families():
        rep = balance_check(fam, seed=seed)
        ok, reason = analytic_admissible(fam)
        rows.append({
            "preset": label,
            "verdict": rep.verdict,
            "analytic": bool(ok),
            "expected": bool(expected),
            "reason": reason,
            "tail_slope": rep.trend.get("tail_slope"),
            "min_delta": rep.delta_grid[-1],
            "agree": bool((rep.verdict == "bounded-trend") == ok == expected),
        })
    return {"criterion": 4, "presets": rows, "passed": all(r["agree"] for r in rows)}


# 5. Mollifier -------------------------------------------------------------------------------------------

def suite_mollifier(seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    c = float(rng.uniform(0.5, 2.0))

    def phi_fn(t, x):
        return c * t * np.sin(np.pi * x) + np.cos(3 * t) * x * (1 - x)

    orders = {}
    for mu in (10.0, 30.0):
        res, ords = ode_refinement_orders(phi_fn, mu, [64, 128, 256, 512])
        orders[str(mu)] = {"residuals": res.tolist(), "orders": ords.tolist()}
    order_ok = all(min(v["orders"]) >= 1.8 for v in orders.values())
    t = np.linspace(0, 1, 257)[:, None]
    x = np.linspace(0, 1, 33)[None, :]
    phi = GridField(phi_fn(t, x) + 0.3 * np.sin(7 * t) * np.sin(2 * np.pi * x), (1 / 256, 1 / 32))
    M = make_family("power_p", p=2.0, N=1).M
    rep = verify_theorem31(phi, [10.0, 100.0, 1000.0], M)
    return {
        "criterion": 5,
        "ode_refinement": orders,
        "order_threshold": 1.8,
        "theorem": rep.to_dict(),
        "passed": bool(order_ok and rep.passed),
    }


# 6. Uniform modular bound ------------------------------------------------------------------------------

def suite_modular_bound(seed: int = 0, n_fields: int = 20) -> dict:
    mu_list = [10.0, 100.0, 1000.0, 10000.0]
    rows = []
    for label, fam, _ in preset_families():
        C1 = FROZEN_C1[label]
        worst = 0.0
        holds = True
        for i in range(n_fields):
            xi = oscillatory_field(10_000 + 97 * seed + i, N=fam.M.dim)
            for row in uniform_modular_bound(xi, fam.M, mu_list, C1, C2_JENSEN):
                holds &= row.holds
                if row.rhs > 0:
                    worst = max(worst, row.lhs / row.rhs)
        rows.append({"preset": label, "C1": C1, "worst_lhs_over_rhs": worst, "passed": bool(holds)})
    return {"criterion": 6, "C2": C2_JENSEN, "mu": mu_list, "presets": rows, "passed": all(r["passed"] for r in rows)}


# 7. Heat oracle ------------------------------------------------------------------------------------------------

def _heat_problem():
    return Problem((1.0,), 1.0, make_flux("laplace"), f=0.0, u0=lambda t, x: np.sin(np.pi * x[..., 0]))


def _l2_time_space(report, diff: np.ndarray) -> float:
    return float(np.sqrt(np.sum(diff[1:] ** 2) * report.dt * report.steps[0]))


def suite_heat(seed: int = 0) -> dict:
    pb = _heat_problem()
    main = solve_bounded(pb, None, Mesh((128,), 512))
    exact = np.exp(-np.pi ** 2 * main.t)[:, None] * np.sin(np.pi * main.x[..., 0])[None, :]
    err = _l2_time_space(main, main.u - exact)
    # spatial order: compare with the time-discrete solution (1 + pi^2 dt)^{-m} sin(pi x)
    space = []
    for nx in (32, 64, 128):
        r = solve_bounded(pb, None, Mesh((nx,), 512))
        m = np.arange(len(r.t))
        oracle = (1.0 + np.pi ** 2 * r.dt) ** (-m)[:, None] * np.sin(np.pi * r.x[..., 0])[None, :]
        space.append(_l2_time_space(r, r.u - oracle))
    # temporal order: compare with the space-discrete solution exp(-lambda_h t) sin(pi x_i)
    time_err = []
    for nt in (128, 256, 512):
        r = solve_bounded(pb, None, Mesh((128,), nt))
        h = r.steps[0]
        lam_h = 4.0 / h ** 2 * np.sin(np.pi * h / 2) ** 2
        oracle = np.exp(-lam_h * r.t)[:, None] * np.sin(np.pi * r.x[..., 0])[None, :]
        time_err.append(_l2_time_space(r, r.u - oracle))
    p_space = np.log2(np.array(space[:-1]) / np.array(space[1:])).tolist()
    p_time = np.log2(np.array(time_err[:-1]) / np.array(time_err[1:])).tolist()
    ok = err < 5e-3 and min(p_space) >= 1.9 and min(p_time) >= 0.9
    return {
        "criterion": 7,
        "l2_error": err,
        "l2_threshold": 5e-3,
        "space_errors": space,
        "space_orders": p_space,
        "time_errors": time_err,
        "time_orders": p_time,
        "max_newton_iterations": int(max(main.newton_iterations)),
        "passed": bool(ok),
    }


# 8. A priori bound ---------------------------------------------------------------------------------------

def _spike_f(t, x):
    return 200.0 * ((np.abs(x[..., 0] - 0.4) < 1 / 32) & (t < 0.25))


def _spike_u0(t, x):
    return 40.0 * (np.abs(x[..., 0] - 0.7) < 1 / 32)


def suite_a_priori(seed: int = 0) -> dict:
    rows = []
    k_list = [1.0, 2.0, 4.0, 8.0]
    for p in (1.5, 2.0, 3.0):
        pb = Problem((1.0,), 0.5, make_flux("p_laplace", p=p), f=_spike_f, u0=_spike_u0)
        worst1 = worst2 = 0.0
        energy_ok = True
        ok = True
        for n in range(1, 17):
            r = solve_bounded(pb, float(n), Mesh((64,), 32))
            a = a_priori_check(r, k_list, tol=0.05)
            ok &= a["passed"]
            worst1 = max(worst1, max(row["lhs1"] / row["w2"] for row in a["rows"]))
            worst2 = max(worst2, max(row["lhs2"] / row["w2"] for row in a["rows"]))
            energy_ok &= energy_inequality_check(r, k_list)["passed"]
        rows.append({"p": p, "worst_lhs1_over_w2": worst1, "worst_lhs2_over_w2": worst2, "energy_inequality": energy_ok,
                     "passed": bool(ok and energy_ok)})
    return {"criterion": 8, "k_list": k_list, "n_range": [1, 16], "factor": 1.05, "rows": rows,
            "passed": all(r["passed"] for r in rows)}


# 9. Decay and level measures ------------------------------------------------------------------------------

def _level_data(seed: int):
    rng = np.random.default_rng(seed)
    c, a = rng.uniform(0.25, 0.75), rng.uniform(1500, 3000)
    c2, a2 = rng.uniform(0.2, 0.8), rng.uniform(10, 20)

    def f(t, x):
        return a * ((np.abs(x[..., 0] - c) < 1 / 32) & (t < 0.2))

    def u0(t, x):
        return a2 * np.exp(-200 * (x[..., 0] - c2) ** 2)

    return f, u0


LEVEL_PRESETS = [("laplace", {}), ("p_laplace", {"p": 3.0}), ("double_phase", {})]


def suite_levels(seed: int = 0, n_test: int = 3) -> dict:
    l_decay = [float(l) for l in range(1, 41)]
    l_meas = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0]
    rows = []
    for fid, kw in LEVEL_PRESETS:
        flux = make_flux(fid, **kw)

        def run(s):
            return solve_bounded(Problem((1.0,), 0.5, flux, *_level_data(s)), 64.0, Mesh((64,), 32))

        c2 = calibrate_level_constant([run(100 + s) for s in range(3)], l_meas)
        for i in range(n_test):
            s = 1000 + 31 * seed + i
            r = run(s)
            d = decay_check(r, l_decay)
            lv = level_measure_check(r, l_meas, c2)
            informative = d["energies"][0] > 0
            rows.append({
                "flux": fid, "params": kw, "seed": s, "c2": c2,
                "energies_head": d["energies"][:4], "decays": d["decays"], "informative": bool(informative),
                "measures": lv["measures"], "envelope": lv["envelope"],
                "below_envelope": lv["below_envelope"], "monotone": lv["monotone"], "vanishing": lv["vanishing"],
                "passed": bool(d["decays"] and informative and lv["passed"]),
            })
    return {"criterion": 9, "decay_fraction": 1e-3, "rows": rows, "passed": all(r["passed"] for r in rows)}


# 10. Comparison -------------------------------------------------------------------------------------------

COMPARISON_PRESETS = [
    ("laplace", {}), ("p_laplace", {"p": 1.5}), ("p_laplace", {"p": 3.0}), ("variable_exponent", {}),
    ("double_phase", {}), ("dp_borderline", {}), ("llog", {}),
]


def _ordered_pair(seed: int):
    rng = np.random.default_rng(seed)
    c = rng.uniform(0.2, 0.8, 2)
    a = rng.uniform(-3, 3, 3)
    d = rng.uniform(0.0, 2.0, 2)

    def f1(t, x):
        return a[0] * np.sin(np.pi * x[..., 0] * (1 + c[0])) + a[1] * np.cos(3 * t)

    def f2(t, x):
        return f1(t, x) + d[0] * (1 + np.sin(5 * x[..., 0] + t))

    def u1(t, x):
        return a[2] * np.sin(np.pi * x[..., 0]) + np.sin(7 * x[..., 0])

    def u2(t, x):
        return u1(t, x) + d[1] * np.exp(-50 * (x[..., 0] - c[1]) ** 2)

    return (f1, u1), (f2, u2)


def suite_comparison(seed: int = 0, n_pairs: int = 5, tol: float = 1e-6) -> dict:
    rows = []
    for fid, kw in COMPARISON_PRESETS:
        pb = Problem((1.0,), 0.5, make_flux(fid, **kw))
        viol = []
        for i in range(n_pairs):
            d1, d2 = _ordered_pair(7919 * seed + i)
            viol.append(comparison_test(pb, d1, d2, 16.0, Mesh((48,), 24), tol=tol)["violation"])
        rows.append({"flux": fid, "params": kw, "violations": viol, "passed": bool(max(viol) <= tol)})
    return {"criterion": 10, "tol": tol, "rows": rows, "passed": all(r["passed"] for r in rows)}


# 11. Renormalised residual --------------------------------------------------------------------------------

def suite_renormalized(seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    amp = float(rng.uniform(1.5, 2.5))
    pb = Problem((1.0,), 0.5, make_flux("laplace"),
                 f=lambda t, x: 3 * np.sin(np.pi * x[..., 0]) * np.cos(t),
                 u0=lambda t, x: amp * np.sin(np.pi * x[..., 0]))
    tests = [TestField(0.3, 0.1), TestField(0.2, 0.05, 2)]
    h = HProfile(2.0)
    levels = []
    agree = 0.0
    for k in range(4):
        n = 16 * 2 ** k
        r = solve_bounded(pb, None, Mesh((n,), n))
        levels.append(renormalized_residual(r, h, tests))
        big = renormalized_residual(r, HProfile(4.0 * float(np.max(np.abs(r.u)))), tests)
        plain = renormalized_residual(r, HProfile(), tests)
        weak = weak_form_residual(r, tests)
        agree = max(agree, max(abs(a - b) for a, b in zip(big, weak)), max(abs(a - b) for a, b in zip(plain, weak)))
    res = np.array(levels)
    orders = np.log2(res[:-1] / res[1:])
    ok = bool(np.min(orders) >= 0.95 and agree <= 1e-10)
    return {"criterion": 11, "h_R": 2.0, "residuals": res.tolist(), "orders": orders.tolist(), "order_threshold": 0.95,
            "identity_agreement": agree, "passed": ok}


SUITES: Dict[str, Callable[..., dict]] = {
    "fenchel_young": suite_fenchel_young,
    "envelope": suite_envelope,
    "luxemburg": suite_luxemburg,
    "balance": suite_balance,
    "mollifier": suite_mollifier,
    "modular_bound": suite_modular_bound,
    "heat_oracle": suite_heat,
    "a_priori": suite_a_priori,
    "levels": suite_levels,
    "comparison": suite_comparison,
    "renormalized": suite_renormalized,
}

CRITERIA = {name: i + 1 for i, name in enumerate(SUITES)}


def run_suite(name: str, seed: int = 0) -> dict:
    try:
        fn = SUITES[name]
    except KeyError:
        raise ValueError(f"unknown suite {name!r}; known: {', '.join(SUITES)}, all") from None
    return fn(seed=seed)


def run_all(seed: int = 0) -> dict:
    results = {name: run_suite(name, seed) for name in SUITES}
    return {"suites": results, "passed": all(r["passed"] for r in results.values())}
