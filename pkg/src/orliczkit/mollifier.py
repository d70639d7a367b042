"""Exponential-kernel time regularisation and its verification.

phi_mu(t) = mu * int_{-inf}^t exp(mu (s - t)) phi(s) ds
phi_mu_bullet(t) = mu * int_{t - eps}^t exp(mu (s - t)) phi(s) ds,  eps = log(mu)^2 / mu

Fields are node-centred with time on axis 0 starting at t = 0. Between time
nodes phi is linear, and every integral against the kernel is evaluated in
closed form. Before t = 0 phi is held at phi(0) (or set to zero with
``history="zero"``); the continuation by zero after T never enters, since the
kernel only looks backwards.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .fields import GridField
from .metrics import modular_convergence_check, modular_integral, tends_to_zero
from .modular import ModularFunction

__all__ = [
    "C2_JENSEN",
    "FROZEN_C1",
    "epsilon_of_mu",
    "mollify_full",
    "mollify_truncated",
    "ode_residual",
    "ode_residual_curve",
    "ode_refinement_orders",
    "verify_theorem31",
    "uniform_modular_bound",
    "calibrate_c1",
    "oscillatory_field",
]

C2_JENSEN = 1.0 / (1.0 - np.exp(-1.0))

# Calibrated on training seeds 1000..1019 with a 1.5 margin (see calibrate_c1); held fixed since.
FROZEN_C1 = {
    "power_p": 0.476,
    "variable_exponent_smooth": 0.547,
    "variable_exponent_jump": 0.515,
    "llog": 0.687,
    "double_phase_2.2": 0.583,
    "double_phase_2.6": 0.555,
    "dp_borderline": 0.581,
    "orlicz_dp_llog": 0.596,
    "orlicz_dp_quartic": 0.578,
    "weighted_orlicz": 0.601,
    "exp_orlicz": 0.508,
}


def _check_mu(mu: float) -> None:
    if not mu > 2:
        raise ValueError(f"kernel rate must exceed 2, got {mu}")


def epsilon_of_mu(mu: float) -> float:
    _check_mu(mu)
    return float(np.log(mu) ** 2 / mu)


def _weights(a: float):
    """Exact kernel weights over one step of length a / mu for linear data."""
    one_minus_e = -np.expm1(-a)
    e = 1.0 - one_minus_e
    w1 = (a - one_minus_e) / a
    w0 = one_minus_e - w1
    return e, w0, w1


def _time_values(phi: GridField) -> np.ndarray:
    if phi.centering != "node":
        raise ValueError("time mollification takes node-centred fields")
    if phi.origin[0] != 0.0:
        raise ValueError("time axis must start at t = 0")
    return phi.values


def _full_nodes(vals: np.ndarray, dt: float, mu: float, history: str) -> np.ndarray:
    e, w0, w1 = _weights(mu * dt)
    out = np.empty_like(vals)
    out[0] = vals[0] if history == "hold" else 0.0
    for m in range(len(vals) - 1):
        out[m + 1] = e * out[m] + w0 * vals[m] + w1 * vals[m + 1]
    return out


def mollify_full(phi: GridField, mu: float, history: str = "hold") -> GridField:
    """phi_mu at every node via the exact exponential recurrence."""
    _check_mu(mu)
    if history not in ("hold", "zero"):
        raise ValueError("history must be 'hold' or 'zero'")
    vals = _time_values(phi)
    return phi.like(_full_nodes(vals, phi.steps[0], mu, history))


def _full_at(vals: np.ndarray, full: np.ndarray, dt: float, mu: float, tau: float, history: str) -> np.ndarray:
    """phi_mu at an arbitrary time tau <= T, from the node values ``full``."""
    if tau <= 0.0:
        return vals[0].copy() if history == "hold" else np.zeros_like(vals[0])
    m = min(int(np.floor(tau / dt)), len(vals) - 1)
    sigma = tau - m * dt
    if sigma <= 1e-14 * dt or m == len(vals) - 1:
        return full[m].copy()
    b = mu * sigma
    one_minus_e = -np.expm1(-b)
    slope = (vals[m + 1] - vals[m]) / dt
    return (1.0 - one_minus_e) * full[m] + one_minus_e * vals[m] + slope * (sigma - one_minus_e / mu)


def mollify_truncated(phi: GridField, mu: float, history: str = "hold") -> GridField:
    """phi_mu_bullet(t) = phi_mu(t) - exp(-log(mu)^2) phi_mu(t - eps)."""
    eps = epsilon_of_mu(mu)
    vals = _time_values(phi)
    dt = phi.steps[0]
    full = _full_nodes(vals, dt, mu, history)
    damp = np.exp(-np.log(mu) ** 2)
    out = np.empty_like(vals)
    for m in range(len(vals)):
        out[m] = full[m] - damp * _full_at(vals, full, dt, mu, m * dt - eps, history)
    return phi.like(out)


def ode_residual(phi: GridField, mu: float) -> float:
    """Max-norm trapezoidal residual of d/dt phi_mu = mu (phi - phi_mu)."""
    return float(np.max(ode_residual_curve(phi, mu)[1]))


def ode_residual_curve(phi: GridField, mu: float) -> tuple:
    """Interval midpoints and the max-over-space trapezoidal residual on each time interval."""
    vals = _time_values(phi)
    dt = phi.steps[0]
    full = _full_nodes(vals, dt, mu, "hold")
    lhs = np.diff(full, axis=0) / dt
    rhs = 0.5 * mu * ((vals[1:] - full[1:]) + (vals[:-1] - full[:-1]))
    err = np.abs(lhs - rhs).reshape(len(lhs), -1).max(axis=1)
    t = phi.origin[0] + (np.arange(len(lhs)) + 0.5) * dt
    return t, err


def ode_refinement_orders(phi_fn, mu: float, nts: Sequence[int], x=None) -> tuple:
    """Residuals and observed orders for phi_fn(t, x) sampled with nt + 1 time nodes on [0, 1]."""
    x = np.linspace(0.0, 1.0, 33) if x is None else x
    res = []
    for nt in nts:
        t = np.linspace(0.0, 1.0, nt + 1)
        fld = GridField(phi_fn(t[:, None], x[None, :]), (1.0 / nt, float(x[1] - x[0])))
        res.append(ode_residual(fld, mu))
    res = np.asarray(res)
    ratios = np.asarray(nts[1:], float) / np.asarray(nts[:-1], float)
    orders = np.log(res[:-1] / res[1:]) / np.log(ratios)
    return res, orders


def _space_grad(phi: GridField) -> GridField:
    return phi.space_gradient()


@dataclass
class MuCheck:
    mu: float
    ode_residual: float
    initial_error: float
    commutation_error: float
    l1_error: float
    sup_phi: float
    sup_bullet: float
    sup_full: float
    gap_full_bullet: float
    gap_bound: float
    dgap_measured: float
    dgap_bound: float
    ode_tol: float

    @property
    def passed(self) -> bool:
        tol = 1e-12 * max(1.0, self.sup_phi)
        return bool(
            self.initial_error <= 1e-12 * max(1.0, self.sup_phi)
            and self.commutation_error <= 1e-13 * max(1.0, self.sup_phi)
            and self.sup_bullet <= self.sup_phi + tol
            and self.sup_full <= self.sup_phi + tol
            and self.gap_full_bullet <= self.gap_bound + tol
            and self.dgap_measured <= self.dgap_bound + tol
            and self.ode_residual <= self.ode_tol
        )


@dataclass
class Theorem31Report:
    checks: list
    modular_lambda: Optional[float]
    l1_decreasing: bool
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return (
            all(c.passed for c in self.checks)
            and self.modular_lambda is not None
            and self.l1_decreasing
        )

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "modular_lambda": self.modular_lambda,
            "l1_decreasing": self.l1_decreasing,
            "per_mu": [dict(c.__dict__, passed=c.passed) for c in self.checks],
        }


def verify_theorem31(
    phi: GridField, mu_list: Sequence[float], M: ModularFunction, phi0: Optional[np.ndarray] = None, ode_const: float = 1.0
) -> Theorem31Report:
    """Check properties i) to v) of the mollifier on a node-centred scalar field."""
    vals = _time_values(phi)
    phi0 = vals[0] if phi0 is None else np.asarray(phi0, float)
    dt = phi.steps[0]
    sup_phi = float(np.max(np.abs(vals)))
    grad = _space_grad(phi)
    checks, bullets_grad, l1 = [], [], []
    for mu in mu_list:
        full = mollify_full(phi, mu)
        bul = mollify_truncated(phi, mu)
        damp = np.exp(-np.log(mu) ** 2)
        init_err = float(np.max(np.abs(bul.values[0] - phi0 * (1.0 - damp))))
        gb = mollify_truncated(grad.like(grad.values), mu)
        comm = float(np.max(np.abs(gb.values - _space_grad(bul).values)))
        bullets_grad.append(gb)
        l1.append(float(np.sum(np.abs((bul - phi).cell_values()[0])) * phi.cell_volume()))
        gap = full.values - bul.values
        dgap = float(np.max(np.abs(np.diff(gap, axis=0)))) / dt
        checks.append(MuCheck(
            mu=float(mu),
            ode_residual=ode_residual(phi, mu),
            initial_error=init_err,
            commutation_error=comm,
            l1_error=l1[-1],
            sup_phi=sup_phi,
            sup_bullet=float(np.max(np.abs(bul.values))),
            sup_full=float(np.max(np.abs(full.values))),
            gap_full_bullet=float(np.max(np.abs(gap))),
            gap_bound=sup_phi * damp,
            dgap_measured=dgap,
            dgap_bound=2.0 * sup_phi * np.exp(np.log(mu) * (1.0 - np.log(mu))),
            # trapezoid residual is O(dt^2) with a constant of order mu^2 sup|phi|
            ode_tol=ode_const * mu ** 2 * dt ** 2 * sup_phi + 1e-10,
        ))
    conv = modular_convergence_check(M, bullets_grad, grad)
    l1_ok = tends_to_zero(l1) or bool(np.all(np.diff(l1) <= 0))
    return Theorem31Report(checks, conv.lambda_found, l1_ok)


@dataclass
class ModularBoundRow:
    mu: float
    lhs: float
    base: float
    rhs: float
    holds: bool


def uniform_modular_bound(
    xi: GridField, M: ModularFunction, mu_list: Sequence[float], C1: float, C2: float = C2_JENSEN
) -> list:
    """Per mu: lhs = int M(xi_mu_bullet), rhs = C1 * int M(C2 xi)."""
    base = modular_integral(M, xi.scale(C2))
    if not np.isfinite(base):
        raise ArithmeticError("modular of C2 * xi is not finite")
    rows = []
    for mu in mu_list:
        lhs = modular_integral(M, mollify_truncated(xi, mu))
        rows.append(ModularBoundRow(float(mu), lhs, base, C1 * base, bool(lhs <= C1 * base * (1 + 1e-12))))
    return rows


def calibrate_c1(M: ModularFunction, fields: Sequence[GridField], mu_list: Sequence[float], margin: float = 1.5) -> float:
    """Max observed int M(xi_bullet) / int M(C2 xi) over a training family, times a margin."""
    worst = 0.0
    for xi in fields:
        for row in uniform_modular_bound(xi, M, mu_list, 1.0):
            if row.base > 0:
                worst = max(worst, row.lhs / row.base)
    return margin * worst


def oscillatory_field(seed: int, N: int = 2, nt: int = 64, nx: int = 16, amplitude: float = 2.0, modes: int = 4) -> GridField:
    """Seeded vector field on (0,1) x (0,1)^N: random Fourier modes plus an early-time burst."""
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, 1.0, nt + 1)
    xs = [np.linspace(0.0, 1.0, nx + 1)] * N
    mesh = np.meshgrid(t, *xs, indexing="ij")
    comps = []
    for _ in range(N):
        v = np.zeros(mesh[0].shape)
        for _ in range(modes):
            k = rng.integers(1, 6, size=N + 1)
            ph = rng.uniform(0, 2 * np.pi, size=N + 1)
            term = np.ones_like(v)
            for j, m in enumerate(mesh):
                term = term * np.cos(np.pi * k[j] * m + ph[j])
            v += rng.uniform(-1, 1) * term
        burst = np.exp(-((mesh[0] - rng.uniform(0, 0.2)) / 0.03) ** 2)
        v += rng.uniform(-1, 1) * burst
        comps.append(v)
    vals = np.stack(comps, axis=-1)
    vals *= amplitude / max(float(np.max(np.abs(vals))), 1e-300)
    steps = (1.0 / nt,) + (1.0 / nx,) * N
    return GridField(vals, steps, vector=True)
