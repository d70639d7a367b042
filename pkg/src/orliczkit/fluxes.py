"""Flux presets A(t, x, xi) = kappa(t, x, |xi|) xi paired with their modular M."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .modular import ModularFunction, PowerLower

__all__ = ["FluxPreset", "AssumptionViolation", "make_flux", "FLUX_IDS", "check_flux_assumptions"]

EPS_REG = 1e-8


class AssumptionViolation(ValueError):
    """Growth, coercivity or monotonicity of the flux fails on a sample."""


def _norm(xi):
    return np.sqrt(np.sum(xi * xi, axis=-1))


@dataclass
class FluxPreset:
    """Radial flux with its modular, coercivity constant and (optionally) closed-form M*.

    ``kappa(t, x, s)`` gives A = kappa * xi; for exponents below 2 the radius is
    regularised as sqrt(s^2 + eps_reg^2) inside kappa.
    """

    id: str
    kappa: Callable
    M: ModularFunction
    c_A: float
    params: dict
    dim: int
    mstar: Optional[Callable] = None
    eps_reg: float = 0.0
    b_bounds: tuple = (1.0, 1.0)
    b: Optional[Callable] = None
    extra: dict = field(default_factory=dict)

    def __call__(self, t, x, xi):
        xi = np.asarray(xi, float)
        s = _norm(xi)
        if self.eps_reg > 0:
            s = np.sqrt(s * s + self.eps_reg ** 2)
        return self.kappa(t, x, s)[..., None] * xi

    def magnitude(self, t, x, s):
        """|A| along a ray as a function of the radius."""
        s = np.asarray(s, float)
        sr = np.sqrt(s * s + self.eps_reg ** 2) if self.eps_reg > 0 else s
        return self.kappa(t, x, sr) * s


def _b_default(dim):
    # smooth coefficient with 0.5 <= b <= 1.5
    return lambda t, x: 1.0 + 0.5 * np.sin(np.pi * x[..., 0]) * np.cos(np.pi * t)


def _power_mstar(p_fn, b_fn):
    def mstar(t, x, eta):
        p = p_fn(t, x)
        b = b_fn(t, x)
        q = p / (p - 1.0)
        return (p - 1.0) * b * (_norm(eta) / (b * p)) ** q

    return mstar


def _mf(fn, dim, family, params, **kw):
    params = dict(params, space_dim=dim)
    return ModularFunction(fn=fn, dim=dim, family=family, params=params, isotropic=True, **kw)


def laplace(dim: int = 1) -> FluxPreset:
    M = _mf(lambda t, x, xi: np.sum(xi * xi, axis=-1), dim, "power_p", {"p": 2.0},
            homogeneous=True, growth=PowerLower(2.0), profile=lambda t, x, s: s * s)
    return FluxPreset(
        "laplace", lambda t, x, s: np.ones(np.shape(s)), M, 4.0, {}, dim,
        mstar=lambda t, x, eta: 0.25 * np.sum(eta * eta, axis=-1),
    )


def p_laplace(p: float = 3.0, dim: int = 1, b: Optional[Callable] = None, b_bounds=(0.5, 1.5)) -> FluxPreset:
    if not p > 1:
        raise ValueError("p must exceed 1")
    b = b or _b_default(dim)
    M = _mf(lambda t, x, xi: b(t, x) * _norm(xi) ** p, dim, "power_p", {"p": p},
            growth=PowerLower(p, b_bounds[0]), profile=lambda t, x, s: b(t, x) * s ** p)
    c_A = p ** (p / (p - 1.0)) / (p - 1.0)
    return FluxPreset(
        "p_laplace", lambda t, x, s: b(t, x) * s ** (p - 2.0), M, c_A, {"p": p}, dim,
        mstar=_power_mstar(lambda t, x: np.full(np.shape(t), p), b),
        eps_reg=EPS_REG if p < 2 else 0.0, b_bounds=b_bounds, b=b,
    )


def variable_exponent(dim: int = 1, p_min: float = 1.8, p_max: float = 2.6, b: Optional[Callable] = None,
                      b_bounds=(0.5, 1.5)) -> FluxPreset:
    b = b or _b_default(dim)
    mid, amp = 0.5 * (p_min + p_max), 0.5 * (p_max - p_min)

    def pf(t, x):
        return mid + amp * np.sin(2 * np.pi * x[..., 0] + t)

    M = _mf(lambda t, x, xi: b(t, x) * _norm(xi) ** pf(t, x), dim, "variable_exponent",
            {"p_min": p_min, "p_max": p_max}, growth=PowerLower(p_min, b_bounds[0]),
            profile=lambda t, x, s: b(t, x) * s ** pf(t, x))
    ps = np.linspace(p_min, p_max, 257)
    c_A = float(np.min(ps ** (ps / (ps - 1.0)) / (ps - 1.0)))
    return FluxPreset(
        "variable_exponent", lambda t, x, s: b(t, x) * s ** (pf(t, x) - 2.0), M, c_A,
        {"p_min": p_min, "p_max": p_max}, dim, mstar=_power_mstar(pf, b),
        eps_reg=EPS_REG if p_min < 2 else 0.0, b_bounds=b_bounds, b=b, extra={"exponent": pf},
    )


def double_phase(p: float = 2.0, q: float = 3.0, dim: int = 1, b: Optional[Callable] = None,
                 b_bounds=(0.5, 1.5)) -> FluxPreset:
    b = b or _b_default(dim)
    a = lambda t, x: np.abs(x[..., 0] - 0.5) ** 0.5  # noqa: E731
    M = _mf(lambda t, x, xi: b(t, x) * (_norm(xi) ** p + a(t, x) * _norm(xi) ** q), dim, "double_phase",
            {"p": p, "q": q}, growth=PowerLower(p, b_bounds[0]),
            profile=lambda t, x, s: b(t, x) * (s ** p + a(t, x) * s ** q))
    # M*(g1' / p + g2' / q) <= f1*(f1'/p) + f2*(f2'/q) by inf-convolution
    c_A = min(p ** (p / (p - 1)) / (p - 1), q ** (q / (q - 1)) / (q - 1))
    return FluxPreset(
        "double_phase", lambda t, x, s: b(t, x) * (s ** (p - 2.0) + a(t, x) * s ** (q - 2.0)), M, c_A,
        {"p": p, "q": q}, dim, eps_reg=EPS_REG if p < 2 else 0.0, b_bounds=b_bounds, b=b, extra={"weight": a},
    )


def dp_borderline(p: float = 2.0, dim: int = 1, b: Optional[Callable] = None, b_bounds=(0.5, 1.5)) -> FluxPreset:
    b = b or _b_default(dim)
    a = lambda t, x: x[..., 0]  # noqa: E731
    M = _mf(lambda t, x, xi: b(t, x) * _norm(xi) ** p * (1 + a(t, x) * np.log(np.e + _norm(xi))), dim,
            "dp_borderline", {"p": p}, growth=PowerLower(p, b_bounds[0]),
            profile=lambda t, x, s: b(t, x) * s ** p * (1 + a(t, x) * np.log(np.e + s)))
    # A = (M(s) / s^2) xi, and M*(M(s)/s) <= M(s) for any N-function, so c_A = 1
    return FluxPreset(
        "dp_borderline", lambda t, x, s: b(t, x) * s ** (p - 2.0) * (1 + a(t, x) * np.log(np.e + s)), M, 1.0,
        {"p": p}, dim, eps_reg=EPS_REG if p < 2 else 0.0, b_bounds=b_bounds, b=b, extra={"weight": a},
    )


def llog(alpha: float = 1.0, dim: int = 1, b: Optional[Callable] = None, b_bounds=(0.5, 1.5)) -> FluxPreset:
    """b log^alpha(1 + s) / s; same structure A = (M(s)/s^2) xi as above, so c_A = 1."""
    b = b or _b_default(dim)
    M = _mf(lambda t, x, xi: b(t, x) * _norm(xi) * np.log1p(_norm(xi)) ** alpha, dim, "llog",
            {"alpha": alpha}, profile=lambda t, x, s: b(t, x) * s * np.log1p(s) ** alpha)

    def kappa(t, x, s):
        s = np.asarray(s, float)
        safe = np.where(s > 0, s, 1.0)
        # log1p(s)^alpha / s -> s^(alpha - 1) near 0
        return b(t, x) * np.where(s > 1e-12, np.log1p(safe) ** alpha / safe, np.maximum(s, 1e-300) ** (alpha - 1.0))

    return FluxPreset("llog", kappa, M, 1.0, {"alpha": alpha}, dim,
                      eps_reg=EPS_REG if alpha < 1 else 0.0, b_bounds=b_bounds, b=b)


_FACTORIES = {
    "laplace": laplace,
    "p_laplace": p_laplace,
    "variable_exponent": variable_exponent,
    "double_phase": double_phase,
    "dp_borderline": dp_borderline,
    "llog": llog,
}

FLUX_IDS = tuple(_FACTORIES)


def make_flux(flux_id: str, **params) -> FluxPreset:
    try:
        return _FACTORIES[flux_id](**params)
    except KeyError:
        raise ValueError(f"unknown flux preset {flux_id!r}; known: {', '.join(FLUX_IDS)}") from None


def check_flux_assumptions(A: FluxPreset, seed: int = 0, n: int = 256, T: float = 1.0, tol: float = 1e-9) -> dict:
    """Sample growth M <= A.xi, coercivity c_A M*(A) <= M, monotonicity and bounds on b."""
    rng = np.random.default_rng(seed)
    d = A.dim
    t = rng.uniform(0, T, n)
    x = rng.uniform(0, 1, (n, d))
    r = 10.0 ** rng.uniform(-3, 3, n)
    u = rng.normal(size=(n, d))
    xi = r[:, None] * u / np.linalg.norm(u, axis=1, keepdims=True)
    eta = xi + 10.0 ** rng.uniform(-3, 2, n)[:, None] * rng.normal(size=(n, d))
    Axi = A(t, x, xi)
    M = A.M(t, x, xi)
    growth = float(np.min((np.sum(Axi * xi, axis=-1) - M) / np.maximum(M, 1e-300) + tol))
    mono_vals = np.sum((Axi - A(t, x, eta)) * (xi - eta), axis=-1)
    scale = np.abs(np.sum(Axi * xi, axis=-1)) + np.abs(np.sum(A(t, x, eta) * eta, axis=-1))
    mono = float(np.min(mono_vals + tol * (1 + scale)))
    out = {"growth_margin": growth, "monotonicity_margin": mono, "coercivity_margin": None}
    if A.mstar is not None:
        cm = (M - A.c_A * A.mstar(t, x, Axi)) / np.maximum(M, 1e-300) + tol
        out["coercivity_margin"] = float(np.min(cm))
    b_ok = True
    if A.b is not None:
        b = A.b(t, x)
        out["coefficient_range"] = [float(np.min(b)), float(np.max(b))]
        b_ok = bool(np.min(b) >= A.b_bounds[0] - tol and np.max(b) <= A.b_bounds[1] + tol and np.min(b) > 0)
    out["passed"] = bool(
        growth >= 0 and mono >= 0 and b_ok and (out["coercivity_margin"] is None or out["coercivity_margin"] >= 0)
    )
    return out
