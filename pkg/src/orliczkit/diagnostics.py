"""Truncation-based diagnostics on discrete solutions: energy bounds, level sets, comparison, residuals."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .balance import radial_envelope
from .fields import GridField
from .metrics import calibrate_poincare, tends_to_zero
from .modular import time_window, truncate
from .solver import Mesh, Problem, SolveReport, SolverTols, solve_bounded

__all__ = [
    "OrderingError",
    "InvalidTestFunction",
    "HProfile",
    "TestField",
    "l1_norms",
    "w2",
    "a_priori_check",
    "energy_inequality_check",
    "decay_check",
    "level_measures",
    "level_envelope",
    "calibrate_level_constant",
    "level_measure_check",
    "comparison_test",
    "weak_form_residual",
    "renormalized_residual",
    "truncation_commutes",
    "renormalize_pipeline",
]


class OrderingError(ValueError):
    pass


class InvalidTestFunction(ValueError):
    pass


# discrete integrals -----------------------------------------------------------------

def _inner(report: SolveReport):
    return (slice(1, -1),) * (report.x.ndim - 1)


def l1_norms(report: SolveReport, raw: bool = True) -> tuple:
    """Node-lumped (||f||_L1(Omega_T), ||u0||_L1(Omega)) over levels 1..Nt, matching the scheme."""
    f = report.f_raw if raw else report.f
    u0 = report.u0_raw if raw else report.u0
    inner = _inner(report)
    vol = report.node_volume
    fn = float(sum(np.sum(np.abs(f[m][inner])) for m in range(1, len(report.t))) * report.dt * vol)
    un = float(np.sum(np.abs(u0[inner])) * vol)
    return fn, un


def w2(k: float, f_l1: float, u0_l1: float) -> float:
    """k (||f||_1 + ||u0||_1 / 2)."""
    return k * (f_l1 + 0.5 * u0_l1)


def _face_weights(dim: int) -> list:
    # each face family carries a full gradient; in 2D the two families are averaged
    return [1.0 / dim] * dim


def _face_integral(report: SolveReport, fields: np.ndarray, fn: Callable) -> float:
    """sum_m dt vol sum_faces w fn(t, x_face, grad), over levels 1..Nt."""
    op = report.operator()
    total = 0.0
    wts = _face_weights(op.dim)
    for m in range(1, len(report.t)):
        grads = op.face_gradients(fields[m])
        tm = float(report.t[m])
        for w, g, xf in zip(wts, grads, op.faces):
            total += w * float(np.sum(fn(np.full(g.shape[:-1], tm), xf, g)))
    return total * report.dt * report.node_volume


def _normal_pairing(report: SolveReport, u: np.ndarray, v: np.ndarray, m: int) -> float:
    """sum_faces A_n(grad u) D_n v at level m: the pairing produced by summation by parts."""
    op = report.operator()
    gu = op.face_gradients(u)
    gv = op.face_gradients(v)
    fl = op.fluxes(float(report.t[m]), gu)
    return float(sum(np.sum(F[..., ax] * g[..., ax]) for ax, (F, g) in enumerate(zip(fl, gv))))


# a priori bound ----------------------------------------------------------------------

def a_priori_check(report: SolveReport, k_list: Sequence[float], tol: float = 0.05) -> dict:
    """Per k: lhs1 = int M(grad T_k u), lhs2 = c_A int M*(A(grad T_k u)) against w2(k)."""
    flux = report.problem.flux
    M = flux.M
    f1, u1 = l1_norms(report)
    rows = []
    degraded = flux.mstar is None
    for k in k_list:
        if not k > 0:
            raise ValueError("truncation levels must be positive")
        Tk = truncate(k, report.u)
        lhs1 = _face_integral(report, Tk, lambda t, x, g: M(t, x, g))
        lhs2 = None
        if not degraded:
            lhs2 = flux.c_A * _face_integral(report, Tk, lambda t, x, g: flux.mstar(t, x, flux(t, x, g)))
        bound = w2(k, f1, u1)
        ok1 = bool(lhs1 <= bound * (1 + tol))
        ok2 = None if lhs2 is None else bool(lhs2 <= bound * (1 + tol))
        # Phi_k(u0) <= k |u0| is all the energy identity gives for the initial term, hence the full ||u0||_1 here
        safe = k * (f1 + u1)
        rows.append({"k": float(k), "lhs1": lhs1, "lhs2": lhs2, "w2": bound, "lhs1_ok": ok1, "lhs2_ok": ok2,
                     "w_energy": safe, "within_w_energy": bool(max(lhs1, lhs2 or 0.0) <= safe * (1 + tol)),
                     "passed": bool(ok1 and ok2 is not False)})
    return {
        "f_l1": f1,
        "u0_l1": u1,
        "tol": tol,
        "degraded": degraded,
        "rows": rows,
        "passed": all(r["passed"] for r in rows),
    }


def _phi_k(k: float, s):
    """Antiderivative of T_k vanishing at 0."""
    a = np.abs(s)
    return np.where(a <= k, 0.5 * a * a, k * a - 0.5 * k * k)


def energy_inequality_check(report: SolveReport, k_list: Sequence[float], tol: float = 1e-8) -> dict:
    """int Phi_k(u(tau)) + int_0^tau A.grad T_k u <= int Phi_k(u0) + k int_0^tau |f| for every level tau.

    Phi_k is the antiderivative of T_k; it dominates T_k^2 / 2 and agrees with it where |u| <= k.
    """
    inner = _inner(report)
    vol = report.node_volume
    dt = report.dt
    rows = []
    for k in k_list:
        Tk = truncate(k, report.u)
        left_acc = 0.0
        f_acc = 0.0
        rhs0 = float(np.sum(_phi_k(k, report.u0[inner]))) * vol
        worst = -np.inf
        for m in range(1, len(report.t)):
            left_acc += dt * vol * _normal_pairing(report, report.u[m], Tk[m], m)
            f_acc += dt * vol * float(np.sum(np.abs(report.f[m][inner])))
            lhs = float(np.sum(_phi_k(k, report.u[m][inner]))) * vol + left_acc
            rhs = rhs0 + k * f_acc
            worst = max(worst, (lhs - rhs) / max(1.0, abs(rhs)))
        rows.append({"k": float(k), "worst_excess": worst, "passed": bool(worst <= tol)})
    return {"rows": rows, "passed": all(r["passed"] for r in rows)}


# decay and level sets ------------------------------------------------------------------

def decay_check(report: SolveReport, l_list: Sequence[float], fraction: float = 1e-3) -> dict:
    """Energies int_{l < |u| < l+1} A(grad u).grad u, discretised as A(D u).D(T_{l+1} u - T_l u)."""
    energies = []
    for l in l_list:
        band = truncate(l + 1.0, report.u) - truncate(l, report.u)
        e = sum(_normal_pairing(report, report.u[m], band[m], m) for m in range(1, len(report.t)))
        energies.append(float(e * report.dt * report.node_volume))
    e = np.asarray(energies)
    first = e[0] if len(e) else 0.0
    decreasing = bool(np.all(e[1:] <= e[:-1] * (1 + 1e-12) + 1e-300))
    decays = bool(len(e) > 0 and (first == 0 or e[-1] <= fraction * first))
    return {"levels": [float(l) for l in l_list], "energies": energies, "fraction": fraction,
            "decreasing": decreasing, "decays": decays, "passed": bool(decays)}


def level_measures(report: SolveReport, l_list: Sequence[float]) -> list:
    """Node-lumped |{|u| >= l}| in Omega_T over levels 1..Nt."""
    inner = _inner(report)
    a = np.abs(report.u[1:][(slice(None),) + inner])
    return [float(np.sum(a >= l) * report.dt * report.node_volume) for l in l_list]


def _lower_radial(report: SolveReport, s) -> np.ndarray:
    return radial_envelope(report.problem.flux.M, s, seed=0)


def level_envelope(report: SolveReport, l_list: Sequence[float], c1: float, c2: float) -> list:
    """c2 w2(l) / m(c1 l) with m the lower radial envelope of M."""
    f1, u1 = l1_norms(report)
    l = np.asarray(l_list, float)
    m = _lower_radial(report, c1 * l)
    return [float(c2 * w2(li, f1, u1) / mi) for li, mi in zip(l, m)]


def _time_space_field(report: SolveReport, values: np.ndarray) -> GridField:
    steps = (report.dt,) + tuple(report.steps)
    return GridField(values, steps)


def calibrate_level_constant(training: Sequence[SolveReport], l_list: Sequence[float], c1: float = 1.0,
                             margin: float = 1.25) -> float:
    """Poincare constant for B = lower radial envelope, calibrated on truncations T_l u of training runs.

    The envelope then follows from the chain
    |{|u| >= l}| B(c1 l) <= int B(c1 |T_l u|) <= c2 int B(|grad T_l u|) <= c2 w2(l).
    """
    if not training:
        raise ValueError("need at least one training run")
    M = training[0].problem.flux.M

    def B(s):
        return radial_envelope(M, np.ravel(s), seed=0).reshape(np.shape(s))

    fields = []
    for rep in training:
        for l in l_list:
            tl = truncate(l, rep.u)
            if np.any(tl):
                fields.append(_time_space_field(rep, tl))
    return calibrate_poincare(_TabulatedYoung(B), fields, c1=c1, margin=margin)


class _TabulatedYoung:
    """Radial Young function evaluated through a monotone table (interpolation in log-log)."""

    def __init__(self, B: Callable, lo: float = 1e-8, hi: float = 1e6, n: int = 1401):
        self.s = np.logspace(np.log10(lo), np.log10(hi), n)
        self.v = np.log(np.maximum(B(self.s), 1e-300))
        self.ls = np.log(self.s)

    def __call__(self, s):
        s = np.asarray(s, float)
        out = np.zeros_like(s)
        pos = s > 0
        out[pos] = np.exp(np.interp(np.log(s[pos]), self.ls, self.v))
        return out


def level_measure_check(report: SolveReport, l_list: Sequence[float], c2: float, c1: float = 1.0) -> dict:
    meas = level_measures(report, l_list)
    env = level_envelope(report, l_list, c1, c2)
    below = bool(all(m <= e for m, e in zip(meas, env)))
    monotone = bool(all(b <= a for a, b in zip(meas, meas[1:])))
    vanishing = tends_to_zero(meas) if meas and meas[0] > 0 else True
    return {"levels": [float(l) for l in l_list], "measures": meas, "envelope": env, "c1": c1, "c2": c2,
            "below_envelope": below, "monotone": monotone, "vanishing": bool(vanishing),
            "passed": bool(below and monotone and vanishing)}


# comparison ---------------------------------------------------------------------------------

def comparison_test(problem: Problem, data1: tuple, data2: tuple, n: Optional[float], mesh: Mesh,
                    tol: float = 1e-6, tols: Optional[SolverTols] = None) -> dict:
    """Solve with (f1, u01) and (f2, u02); report max (u1 - u2)^+ over nodes."""
    p1 = dataclasses.replace(problem, f=data1[0], u0=data1[1])
    p2 = dataclasses.replace(problem, f=data2[0], u0=data2[1])
    f1, u1 = p1.data_on(mesh)
    f2, u2 = p2.data_on(mesh)
    if np.any(f1 > f2) or np.any(u1 > u2):
        raise OrderingError("data are not ordered on the mesh")
    r1 = solve_bounded(p1, n, mesh, tols)
    r2 = solve_bounded(p2, n, mesh, tols)
    viol = float(np.max(np.maximum(r1.u - r2.u, 0.0)))
    return {"violation": viol, "tol": tol, "passed": bool(viol <= tol),
            "newton_iterations": [int(sum(r1.newton_iterations)), int(sum(r2.newton_iterations))]}


# weak forms ------------------------------------------------------------------------------------

@dataclass(frozen=True)
class HProfile:
    """Smoothed plateau: h = 1 on |s| <= R/2, cubic smoothstep down to 0 at |s| = R.

    ``R = inf`` gives h identically 1.
    """

    R: float = np.inf

    def __call__(self, s):
        s = np.asarray(s, float)
        if not np.isfinite(self.R):
            return np.ones_like(s)
        z = np.clip((np.abs(s) - 0.5 * self.R) / (0.5 * self.R), 0.0, 1.0)
        return 1.0 - z * z * (3.0 - 2.0 * z)

    def antiderivative(self, s):
        """S(s) = int_0^s h exactly."""
        s = np.asarray(s, float)
        if not np.isfinite(self.R):
            return s.copy()
        half = 0.5 * self.R
        a = np.abs(s)
        z = np.clip((a - half) / half, 0.0, 1.0)
        inner = np.minimum(a, half) + half * (z - z ** 3 + 0.5 * z ** 4)
        return np.sign(s) * inner


@dataclass(frozen=True)
class TestField:
    """phi(t, x) = time_window(tau, r, t) * prod_i sin(pi x_i / L_i)^power."""

    __test__ = False  # not a pytest class

    tau: float
    r: float
    power: int = 1

    def values(self, report: SolveReport) -> np.ndarray:
        T = float(report.t[-1])
        if not (self.r > 0 and self.tau > 0 and self.tau + self.r < T):
            raise InvalidTestFunction("test field must have compact time support inside [0, T)")
        w = np.asarray(time_window(self.tau, self.r, report.t))
        L = report.problem.lengths
        psi = np.ones(report.x.shape[:-1])
        for i, Li in enumerate(L):
            psi = psi * np.sin(np.pi * report.x[..., i] / Li) ** self.power
        bmask = np.ones(psi.shape, bool)
        bmask[_inner(report)] = False
        psi[bmask] = 0.0
        return w[(slice(None),) + (None,) * psi.ndim] * psi[None]


def _assemble_r2(report: SolveReport, phi: np.ndarray, h: HProfile) -> float:
    inner = _inner(report)
    vol = report.node_volume
    dt = report.dt
    u = report.u
    H = h.antiderivative(u) - h.antiderivative(report.u0)[None]
    nt = len(report.t) - 1
    term1 = -sum(float(np.sum(H[m][inner] * (phi[m + 1][inner] - phi[m][inner]))) for m in range(nt)) * vol
    term2 = 0.0
    term3 = 0.0
    for m in range(1, nt + 1):
        hp = h(u[m]) * phi[m]
        term2 += _normal_pairing(report, u[m], hp, m)
        term3 += float(np.sum(report.f[m][inner] * hp[inner]))
    return term1 + dt * vol * term2 - dt * vol * term3


def weak_form_residual(report: SolveReport, test_fields: Sequence[TestField]) -> list:
    """-int (u - u0) phi_t + int A.grad phi - int f phi, assembled on the scheme's levels."""
    inner = _inner(report)
    vol = report.node_volume
    dt = report.dt
    out = []
    nt = len(report.t) - 1
    for tf in test_fields:
        phi = tf.values(report)
        d = report.u - report.u0[None]
        term1 = -sum(float(np.sum(d[m][inner] * (phi[m + 1][inner] - phi[m][inner]))) for m in range(nt)) * vol
        term2 = sum(_normal_pairing(report, report.u[m], phi[m], m) for m in range(1, nt + 1))
        term3 = sum(float(np.sum(report.f[m][inner] * phi[m][inner])) for m in range(1, nt + 1))
        out.append(abs(term1 + dt * vol * (term2 - term3)))
    return out


def renormalized_residual(report: SolveReport, h: HProfile, test_fields: Sequence[TestField]) -> list:
    """|-int (S(u) - S(u0)) phi_t + int A(grad u).grad(h(u) phi) - int f h(u) phi| per test field."""
    return [abs(_assemble_r2(report, tf.values(report), h)) for tf in test_fields]


def truncation_commutes(report: SolveReport, k: float, m: int = -1) -> dict:
    """Compare D T_k u with 1_{|u|<k} D u on faces; faces whose endpoints straddle the level are exceptional."""
    op = report.operator()
    u = report.u[m]
    g_t = op.face_gradients(truncate(k, u))
    g_u = op.face_gradients(u)
    inside = (np.abs(u) < k).astype(float)
    worst = 0.0
    exceptional = 0
    total = 0
    for ax, (gt, gu) in enumerate(zip(g_t, g_u)):
        a = np.take(inside, range(0, u.shape[ax] - 1), axis=ax)
        b = np.take(inside, range(1, u.shape[ax]), axis=ax)
        regular = a == b
        pred = a * gu[..., ax]
        diff = np.abs(gt[..., ax] - pred)
        worst = max(worst, float(np.max(np.where(regular, diff, 0.0), initial=0.0)))
        exceptional += int(np.sum(~regular))
        total += regular.size
    return {"k": float(k), "max_regular_deviation": worst, "exceptional_fraction": exceptional / total}


# pipeline -----------------------------------------------------------------------------------------

def renormalize_pipeline(problem: Problem, n_list: Sequence[float], mesh: Mesh, k_list: Sequence[float] = (1.0,),
                         l_list: Sequence[float] = (1.0, 2.0, 3.0), tols: Optional[SolverTols] = None,
                         a_priori_tol: float = 0.05) -> dict:
    """Solve per n and report L1 distances of T_k(u_n) between consecutive n plus per-n diagnostics."""
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be increasing")
    reports = []
    for n in n_list:
        try:
            reports.append(solve_bounded(problem, n, mesh, tols))
        except Exception as exc:
            raise RuntimeError(f"solve failed at n={n}: {exc}") from exc
    inner = _inner(reports[0])
    vol = reports[0].node_volume * reports[0].dt
    cauchy = {}
    for k in k_list:
        diffs = []
        for a, b in zip(reports, reports[1:]):
            d = truncate(k, a.u[1:]) - truncate(k, b.u[1:])
            diffs.append(float(np.sum(np.abs(d[(slice(None),) + inner])) * vol))
        cauchy[str(float(k))] = diffs
    per_n = []
    for n, rep in zip(n_list, reports):
        per_n.append({
            "n": float(n),
            "solve": rep.summary(),
            "a_priori": a_priori_check(rep, k_list, a_priori_tol),
            "decay": decay_check(rep, l_list),
        })
    trend = {k: bool(all(b <= a * (1 + 1e-9) + 1e-14 for a, b in zip(v, v[1:]))) for k, v in cauchy.items()}
    return {"n_list": [float(n) for n in n_list], "cauchy": cauchy, "cauchy_nonincreasing": trend, "runs": per_n,
            "reports": reports}
