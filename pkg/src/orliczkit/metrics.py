"""Modular integrals, Luxemburg norms and convergence diagnostics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .fields import GridField
from .modular import ModularFunction

__all__ = [
    "UnboundedNormError",
    "modular_integral",
    "luxemburg_norm",
    "modular_convergence_check",
    "tends_to_zero",
    "uniform_integrability_index",
    "poincare_check",
    "calibrate_poincare",
]


class UnboundedNormError(ArithmeticError):
    pass


def modular_integral(M: ModularFunction, xi: GridField, lam: float = 1.0) -> float:
    """Midpoint-rule quadrature of M(t, x, xi / lam) over the space-time mesh."""
    if not lam > 0:
        raise ValueError(f"scale must be positive, got {lam}")
    v, t, x = xi.cell_values()
    if not xi.vector:
        v = v[..., None]
    if v.shape[-1] != M.dim:
        raise ValueError(f"field has {v.shape[-1]} components, modular expects {M.dim}")
    with np.errstate(over="ignore"):
        vals = M(t, x, v / lam)
    return float(np.sum(vals) * xi.cell_volume())


def luxemburg_norm(M: ModularFunction, xi: GridField, tol: float = 1e-12, max_doublings: int = 200) -> float:
    """inf{lam > 0 : modular_integral(M, xi, lam) <= 1} by bracketing then log-bisection.

    Returns the upper end of the final bracket so the modular there is at most 1.
    """
    if not np.all(np.isfinite(xi.values)):
        raise ValueError("field must be finite")
    if not np.any(xi.values):
        return 0.0

    def rho(lam):
        r = modular_integral(M, xi, lam)
        return np.inf if np.isnan(r) else r

    lo = hi = max(float(np.max(np.abs(xi.values))), 1e-300)
    if rho(hi) <= 1.0:
        for _ in range(max_doublings):
            lo = hi / 2.0
            if rho(lo) > 1.0:
                break
            hi = lo
        else:
            return hi
    else:
        for _ in range(max_doublings):
            lo, hi = hi, hi * 2.0
            if rho(hi) <= 1.0:
                break
        else:
            raise UnboundedNormError("modular stays above 1 for every scale in the bracket range")
    while hi / lo - 1.0 > tol:
        mid = np.sqrt(lo * hi)
        if mid <= lo or mid >= hi:
            break
        if rho(mid) <= 1.0:
            hi = mid
        else:
            lo = mid
    return float(hi)


def tends_to_zero(seq: Sequence[float], ratio: float = 1e-3, slack: float = 0.1) -> bool:
    """Finite-sequence test: tail third below ratio * first term and nonincreasing up to slack."""
    s = np.asarray(seq, dtype=float)
    if len(s) == 0 or not np.all(np.isfinite(s)):
        return False
    if np.all(s == 0):
        return True
    tail = s[len(s) - max(1, len(s) // 3):]
    if s[0] == 0 or np.any(tail > ratio * s[0]):
        return False
    return bool(np.all(tail[1:] <= (1.0 + slack) * tail[:-1]))


@dataclass
class ModularConvergenceReport:
    lambda_found: Optional[float]
    integrals: dict

    def to_dict(self) -> dict:
        return {"lambda_found": self.lambda_found, "integrals": {str(k): v for k, v in self.integrals.items()}}


def modular_convergence_check(
    M: ModularFunction, sequence: Sequence[GridField], limit: GridField, max_power: int = 12
) -> ModularConvergenceReport:
    """Smallest dyadic lam = 2^j with modular_integral(M, xi_i - limit, lam) -> 0."""
    diffs = [xi - limit for xi in sequence]
    tried = {}
    for j in range(max_power + 1):
        lam = 2.0 ** j
        vals = [modular_integral(M, d, lam) for d in diffs]
        tried[lam] = vals
        if tends_to_zero(vals):
            return ModularConvergenceReport(lam, tried)
    return ModularConvergenceReport(None, tried)


def uniform_integrability_index(fields: Sequence[GridField], R_grid: Sequence[float]) -> np.ndarray:
    """For each R, sup_n of the integral of |f_n| over {|f_n| >= R}."""
    out = np.zeros(len(R_grid))
    for f in fields:
        if f.vector:
            raise ValueError("uniform integrability index needs scalar fields")
        v, _, _ = f.cell_values()
        a = np.abs(v).ravel()
        vol = f.cell_volume()
        for i, R in enumerate(R_grid):
            out[i] = max(out[i], float(np.sum(a[a >= R]) * vol))
    return out


# Poincare ----------------------------------------------------------------------

YoungFn = Union[Callable, ModularFunction]


def _young(B: YoungFn) -> Callable:
    if isinstance(B, ModularFunction):
        if not B.isotropic:
            raise ValueError("Poincare check needs an isotropic Young function")
        return lambda s: B.radial(0.0, np.zeros(B.space_dim), s)
    return B


def _poincare_sides(B: YoungFn, g: GridField, c1: float):
    if g.vector or g.centering != "node":
        raise ValueError("Poincare check takes a scalar node field")
    scale = float(np.max(np.abs(g.values), initial=0.0))
    if np.max(np.abs(g._spatial_boundary()), initial=0.0) > 1e-12 * scale:
        raise ValueError("field has a nonzero boundary trace")
    b = _young(B)
    v, _, _ = g.cell_values()
    grad = g.cell_space_gradient()
    vol = g.cell_volume()
    lhs = float(np.sum(b(c1 * np.abs(v))) * vol)
    rhs = float(np.sum(b(np.sqrt(np.sum(grad ** 2, axis=-1)))) * vol)
    return lhs, rhs


@dataclass
class PoincareResult:
    lhs: float
    rhs: float
    ratio: float
    c1: float
    c2: Optional[float]
    holds: Optional[bool]

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def poincare_check(B: YoungFn, g: GridField, c1: float = 1.0, c2: Optional[float] = None) -> PoincareResult:
    """lhs = int B(c1 |g|), rhs = int B(|grad g|); holds iff lhs <= c2 * rhs."""
    lhs, rhs = _poincare_sides(B, g, c1)
    ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else np.inf)
    holds = None if c2 is None else bool(lhs <= c2 * rhs * (1 + 1e-12))
    return PoincareResult(lhs, rhs, float(ratio), c1, c2, holds)


def calibrate_poincare(B: YoungFn, training: Sequence[GridField], c1: float = 1.0, margin: float = 1.25) -> float:
    """c2 = margin * max observed ratio over a training family (the theorem gives no value)."""
    worst = 0.0
    for g in training:
        r = poincare_check(B, g, c1).ratio
        if np.isfinite(r):
            worst = max(worst, r)
    if worst == 0.0:
        raise ValueError("training family produced no informative ratio")
    return margin * worst
