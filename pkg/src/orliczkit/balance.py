"""Empirical and closed-form checks of the space-time balance condition."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .families import ModularFamily
from .modular import ModularFunction, biconjugate, envelope_at

__all__ = [
    "Cell",
    "UnsupportedFamily",
    "ThresholdError",
    "cell_infimum",
    "theta_ratio",
    "cell_theta",
    "balance_check",
    "isotropic_balance_check",
    "classify_trend",
    "analytic_admissible",
    "radial_envelope",
    "BalanceReport",
]


class UnsupportedFamily(ValueError):
    pass


class ThresholdError(ValueError):
    pass


@dataclass(frozen=True)
class Cell:
    """A space-time cell I x Q; Q is an axis-aligned box given by its corners."""

    t0: float
    t1: float
    lower: tuple
    upper: tuple

    @classmethod
    def centred(cls, t: float, x, delta: float, edge_factor: float = 4.0) -> "Cell":
        x = np.atleast_1d(np.asarray(x, float))
        h = 0.5 * edge_factor * delta
        return cls(t - 0.5 * delta, t + 0.5 * delta, tuple(x - h), tuple(x + h))

    def clip(self, T: float, lo, hi) -> "Cell":
        lo = np.resize(np.asarray(lo, float), len(self.lower))
        hi = np.resize(np.asarray(hi, float), len(self.upper))
        return Cell(max(self.t0, 0.0), min(self.t1, T), tuple(np.maximum(self.lower, lo)), tuple(np.minimum(self.upper, hi)))

    @property
    def empty(self) -> bool:
        return self.t1 < self.t0 or any(u < l for l, u in zip(self.lower, self.upper))

    def lattice(self, n: int = 5):
        """n points per axis (endpoints included); returns t of shape (K,) and x of shape (K, d)."""
        axes = [np.linspace(self.t0, self.t1, n)] + [np.linspace(l, u, n) for l, u in zip(self.lower, self.upper)]
        mesh = np.meshgrid(*axes, indexing="ij")
        t = mesh[0].ravel()
        x = np.stack([m.ravel() for m in mesh[1:]], axis=-1)
        # duplicates appear when a cell is clipped to a point; keep them, the min is unaffected
        return t, x

    def to_dict(self) -> dict:
        return {"I": [self.t0, self.t1], "Q": [list(self.lower), list(self.upper)]}


@dataclass(frozen=True)
class Domain:
    T: float = 1.0
    lower: tuple = (0.0, 0.0)
    upper: tuple = (1.0, 1.0)


def _lattice(cell: Cell, domain: Domain, n: int):
    c = cell.clip(domain.T, domain.lower, domain.upper)
    if c.empty:
        raise ValueError("cell does not intersect the domain")
    return c.lattice(n)


def cell_infimum(M: ModularFunction, cell: Cell, xi_grid, domain: Optional[Domain] = None, n: int = 5) -> np.ndarray:
    """Pointwise minimum of M over a lattice of (I x Q) intersected with the domain.

    ``xi_grid`` has shape S + (dim,); the result has shape S.
    """
    domain = domain or Domain(lower=(0.0,) * M.space_dim, upper=(1.0,) * M.space_dim)
    t, x = _lattice(cell, domain, n)
    xi = np.asarray(xi_grid, float)
    extra = (None,) * (xi.ndim - 1)
    return np.min(M(t[(slice(None),) + extra], x[(slice(None),) + extra], xi[None]), axis=0)


def _radial_infimum(M: ModularFunction, t, x, s) -> np.ndarray:
    return np.min(M.radial(t[:, None], x[:, None, :], s[None, :]), axis=0)


def _envelope_values(M: ModularFunction, t, x, points: np.ndarray, n_radial: int = 4001, n_axis: int = 49):
    """Convex envelope of the lattice infimum evaluated at ``points`` (shape (K, dim))."""
    R = float(np.max(np.linalg.norm(points, axis=1)))
    if M.isotropic or M.dim == 1:
        s = np.linspace(-2 * R, 2 * R, n_radial)
        radii = np.linalg.norm(points, axis=1) if M.isotropic else points[:, 0]
        s = np.union1d(s, np.concatenate([radii, -radii]))
        if M.isotropic:
            g = _radial_infimum(M, t, x, s)
        else:
            g = np.min(M(t[:, None], x[:, None, :], s[None, :, None]), axis=0)
        env = biconjugate(g, s)
        return env[np.searchsorted(s, radii)]
    if M.dim != 2:
        raise ValueError("anisotropic envelopes are limited to dimension 2")
    axes = []
    for a in range(2):
        ax = np.union1d(np.linspace(-2 * R, 2 * R, n_axis), points[:, a])
        axes.append(ax)
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    g = np.min(M(t[:, None, None], x[:, None, None, :], mesh[None]), axis=0)
    i0 = np.searchsorted(axes[0], points[:, 0])
    i1 = np.searchsorted(axes[1], points[:, 1])
    return np.minimum(envelope_at(g, tuple(axes), points), g[i0, i1])


def theta_ratio(
    M: ModularFunction, t: float, x, xi, cell: Cell, domain: Optional[Domain] = None, xi0: float = 1.0, n: int = 5
) -> float:
    """M(t, x, xi) divided by the convex envelope of the cell infimum at xi."""
    xi = np.atleast_1d(np.asarray(xi, float))
    if np.linalg.norm(xi) <= xi0:
        raise ThresholdError(f"|xi| = {np.linalg.norm(xi):g} must exceed the threshold {xi0:g}")
    if M.homogeneous:
        return 1.0
    domain = domain or Domain(lower=(0.0,) * M.space_dim, upper=(1.0,) * M.space_dim)
    tl, xl = _lattice(cell, domain, n)
    env = float(_envelope_values(M, tl, xl, xi[None, :])[0])
    if not env > 0:
        raise ThresholdError("envelope vanishes at xi; raise the threshold")
    return float(M(t, x, xi)) / env


def cell_theta(M: ModularFunction, cell: Cell, directions: np.ndarray, radius: float, domain: Domain, n: int = 5):
    """Worst ratio over lattice points of the cell and sampled directions at |xi| = radius."""
    if M.homogeneous:
        return 1.0, {"t": cell.t0, "x": list(cell.lower), "xi": (radius * directions[0]).tolist()}
    t, x = _lattice(cell, domain, n)
    pts = radius * directions
    env = _envelope_values(M, t, x, pts)
    vals = M(t[:, None], x[:, None, :], pts[None])  # (K, D)
    ratio = vals / env[None, :]
    k, d = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
    return float(ratio[k, d]), {"t": float(t[k]), "x": x[k].tolist(), "xi": pts[d].tolist()}


def _directions(M: ModularFunction) -> np.ndarray:
    if M.isotropic or M.dim == 1:
        e = np.zeros((1, M.dim))
        e[0, 0] = 1.0
        return e
    r = 1.0 / np.sqrt(2.0)
    return np.array([[1.0, 0.0], [0.0, 1.0], [r, r], [r, -r]])


def classify_trend(deltas: Sequence[float], values: Sequence[float], excess: bool = True) -> dict:
    """Three-way verdict from per-delta worst ratios.

    The classifier fits the log-log slope of (theta - 1) against log(1/delta)
    over the last half of the grid; ``excess=False`` fits theta itself.
    """
    d = np.asarray(deltas, float)
    v = np.asarray(values, float)
    e = np.maximum(v - 1.0, 0.0) if excess else v
    half = slice(len(d) // 2, None)
    dh, eh = d[half], e[half]
    overall_growth = float(v[-1] / v[0]) if v[0] > 0 else np.inf
    monotone = bool(np.all(np.diff(v) >= -1e-12 * np.abs(v[1:])))
    info = {"overall_growth": overall_growth, "monotone": monotone, "tail_slope": None}
    if not np.all(np.isfinite(v)):
        info["verdict"] = "diverging-trend"
        return info
    if np.max(eh) <= 1e-9 * max(1.0, float(np.max(np.abs(v)))):
        info["tail_slope"] = 0.0
        info["verdict"] = "bounded-trend"
        return info
    pos = eh > 0
    if pos.sum() < 2:
        info["verdict"] = "bounded-trend"
        return info
    slope = float(np.polyfit(np.log(1.0 / dh[pos]), np.log(eh[pos]), 1)[0])
    info["tail_slope"] = slope
    tail_monotone = bool(np.all(np.diff(v[half]) >= 0))
    if (monotone and overall_growth >= 10.0) or (tail_monotone and slope >= 0.05):
        info["verdict"] = "diverging-trend"
    elif slope <= 0.02:
        info["verdict"] = "bounded-trend"
    else:
        info["verdict"] = "inconclusive"
    return info


@dataclass
class BalanceReport:
    family: str
    mode: str
    delta_grid: list
    theta_estimates: list
    verdict: str
    witnesses: list
    trend: dict = field(default_factory=dict)

    @property
    def bounded(self) -> bool:
        return self.verdict == "bounded-trend"

    def to_dict(self) -> dict:
        rows = [
            {"delta": d, "theta": th, "witness": w}
            for d, th, w in zip(self.delta_grid, self.theta_estimates, self.witnesses)
        ]
        return {"family": self.family, "mode": self.mode, "rows": rows, "trend": self.trend, "verdict": self.verdict}


def _verify_power_growth(M: ModularFunction, domain: Domain, seed: int) -> None:
    g = M.growth
    rng = np.random.default_rng(seed + 17)
    t = rng.uniform(0, domain.T, 64)
    x = np.asarray(domain.lower) + (np.asarray(domain.upper) - np.asarray(domain.lower)) * rng.uniform(size=(64, M.space_dim))
    dirs = rng.normal(size=(64, M.dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = g.xi_p * np.logspace(1e-3, 6, 25)
    for r in radii:
        vals = M(t, x, r * dirs)
        if np.any(vals < g.c_gr * r ** g.p * (1 - 1e-12)):
            raise ValueError(f"power lower bound c_gr|xi|^{g.p} fails at |xi| = {r:g}")


def balance_check(
    family: ModularFamily,
    mode: Optional[str] = None,
    delta_grid: Optional[Sequence[float]] = None,
    n_cells: int = 16,
    lattice: int = 5,
    seed: int = 0,
    p: Optional[float] = None,
    T: float = 1.0,
) -> BalanceReport:
    """Sample cells of size delta and evaluate the worst theta at |xi| = delta^{-N} or delta^{-N/p}."""
    M = family.M
    N = family.N
    mode = mode or family.default_mode
    if mode not in ("arbitrary", "power"):
        raise ValueError("mode must be 'arbitrary' or 'power'")
    deltas = list(delta_grid if delta_grid is not None else 2.0 ** -np.arange(1, 11))
    if any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise ValueError("delta grid must be decreasing")
    domain = Domain(T=T, lower=(0.0,) * N, upper=(1.0,) * N)
    if mode == "power":
        if M.growth is None and p is None:
            raise ValueError("power mode needs a power growth tag or an explicit p")
        if M.growth is not None:
            _verify_power_growth(M, domain, seed)
        p = p if p is not None else M.growth.p
    dirs = _directions(M)
    rng = np.random.default_rng(seed)
    thetas, witnesses = [], []
    for delta in deltas:
        radius = delta ** (-N) if mode == "arbitrary" else delta ** (-N / p)
        centres = [(0.5 * T, np.asarray(c, float)) for c in family.critical_x]
        centres += [(rng.uniform(0, T), rng.uniform(0, 1, N)) for _ in range(n_cells)]
        worst, wit = -np.inf, None
        for tc, xc in centres:
            cell = Cell.centred(tc, xc, delta)
            th, w = cell_theta(M, cell, dirs, radius, domain, lattice)
            if th > worst:
                worst, wit = th, dict(w, cell=cell.clip(T, domain.lower, domain.upper).to_dict())
        thetas.append(worst)
        witnesses.append(wit)
    trend = classify_trend(deltas, thetas)
    return BalanceReport(family.id, mode, [float(d) for d in deltas], thetas, trend["verdict"], witnesses, trend)


def isotropic_balance_check(
    family: ModularFamily,
    c_sp: float = 1.0,
    mode: Optional[str] = None,
    delta_grid: Optional[Sequence[float]] = None,
    n_pairs: int = 64,
    seed: int = 0,
    p: Optional[float] = None,
    T: float = 1.0,
) -> BalanceReport:
    """Pointwise form for isotropic M: worst M(t,x,s) / M(tau,y,s) over |t - tau| + c_sp |x - y| <= delta.

    The radius is s = delta^{-N} (arbitrary) or delta^{-N/p} (power). Pairs are drawn at
    random and, for degenerate families, anchored at the family's critical points.
    """
    M = family.M
    N = family.N
    if not M.isotropic:
        raise UnsupportedFamily(f"{family.id} is not isotropic")
    if not c_sp > 0:
        raise ValueError("c_sp must be positive")
    mode = mode or family.default_mode
    if mode not in ("arbitrary", "power"):
        raise ValueError("mode must be 'arbitrary' or 'power'")
    deltas = list(delta_grid if delta_grid is not None else 2.0 ** -np.arange(1, 11))
    if any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise ValueError("delta grid must be decreasing")
    if mode == "power":
        if M.growth is None and p is None:
            raise ValueError("power mode needs a power growth tag or an explicit p")
        p = p if p is not None else M.growth.p
    rng = np.random.default_rng(seed)
    anchors = [np.asarray(c, float) for c in family.critical_x]
    thetas, witnesses = [], []
    for delta in deltas:
        s = delta ** (-N) if mode == "arbitrary" else delta ** (-N / p)
        if M.homogeneous:
            thetas.append(1.0)
            witnesses.append({"t": [0.0, 0.0], "x": [[0.0] * N, [0.0] * N], "s": float(s)})
            continue
        # random pairs split the budget delta between time and space and spend it fully
        t1 = rng.uniform(0, T, n_pairs)
        x1 = rng.uniform(0, 1, (n_pairs, N))
        share = rng.uniform(0, 1, n_pairs)
        u = rng.normal(size=(n_pairs, N))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        t2 = t1 + share * delta * rng.choice([-1.0, 1.0], n_pairs)
        x2 = x1 + ((1 - share) * delta / c_sp)[:, None] * u
        # at degenerate points: one end on the point, or the pair straddling it along each axis
        h = delta / c_sp
        for c in anchors:
            for e in np.eye(N):
                for lo, hi in ((c, c + h * e), (c, c - h * e), (c - 0.5 * h * e, c + 0.5 * h * e)):
                    t1 = np.append(t1, 0.5 * T)
                    t2 = np.append(t2, 0.5 * T)
                    x1 = np.vstack([x1, lo])
                    x2 = np.vstack([x2, hi])
        t2 = np.clip(t2, 0.0, T)
        x1 = np.clip(x1, 0.0, 1.0)
        x2 = np.clip(x2, 0.0, 1.0)
        a = M.radial(t1, x1, np.full(len(t1), s))
        b = M.radial(t2, x2, np.full(len(t1), s))
        ratio = np.maximum(a / b, b / a)
        i = int(np.argmax(ratio))
        thetas.append(float(ratio[i]))
        witnesses.append({"t": [float(t1[i]), float(t2[i])], "x": [x1[i].tolist(), x2[i].tolist()], "s": float(s)})
    trend = classify_trend(deltas, thetas)
    return BalanceReport(family.id, f"isotropic-{mode}", [float(d) for d in deltas], thetas, trend["verdict"],
                         witnesses, trend)


# closed-form criteria -------------------------------------------------------------


def _sphere(n: int = 720) -> np.ndarray:
    a = np.linspace(0, 2 * np.pi, n, endpoint=False)
    return np.stack([np.cos(a), np.sin(a)], axis=-1)


def analytic_admissible(family: ModularFamily, N: Optional[int] = None, p: Optional[float] = None,
                        delta_grid: Optional[Sequence[float]] = None) -> tuple:
    """Apply the closed-form balance criterion matching the family; returns (bool, reason)."""
    N = N or family.N
    fid = family.id
    prm = family.params
    if family.M.homogeneous:
        return True, "no (t,x) dependence: the balance condition is void"
    if fid == "variable_exponent":
        if family.modulus in ("lipschitz", "log_holder"):
            return True, f"exponent has a {family.modulus} modulus, hence log-Hoelder"
        return False, "exponent is discontinuous, so it is not log-Hoelder"
    if fid == "double_phase":
        q, pp, alpha = prm["q"], prm["p"], prm["alpha"]
        bound = 1.0 + alpha / N
        ok = q / pp <= bound + 1e-15
        return ok, f"q/p = {q / pp:g} {'<=' if ok else '>'} 1 + alpha/N = {bound:g}"
    if fid == "dp_borderline":
        if family.modulus in ("lipschitz", "log_holder"):
            return True, "weight is log-Hoelder"
        return False, "weight is not log-Hoelder"
    if fid == "orlicz_dp":
        M1, M2 = family.components["M1"], family.components["M2"]
        deltas = np.asarray(delta_grid if delta_grid is not None else 2.0 ** -np.arange(1, 11))
        circle = _sphere()
        seq = []
        for d in deltas:
            s = d ** (-N) if p is None else d ** (-N / p)
            low = float(np.min(M1(s * circle)))
            high = float(np.max(M2(s * circle)))
            seq.append(family.holder_const * d ** family.holder_alpha * high / low)
        trend = classify_trend(deltas, seq, excess=False)
        ok = trend["verdict"] == "bounded-trend"
        return ok, f"omega_a(delta) * sup M2 / inf M1 shows a {trend['verdict']} (tail slope {trend['tail_slope']:.3g})"
    if fid == "weighted_orlicz":
        rng = np.random.default_rng(3)
        t = rng.uniform(0, 1, 512)
        x = rng.uniform(0, 1, (512, N))
        for k in family.components["weights"]:
            kv = k(t, x)
            if not np.all(kv > 0):
                return False, "a weight is not positive"
        if family.modulus not in ("lipschitz", "log_holder"):
            return False, "isotropic part lacks a log-Hoelder exponent"
        return True, "weights positive and bounded, isotropic part has a Lipschitz exponent"
    raise UnsupportedFamily(f"no closed-form balance criterion for family {fid!r}")


def radial_envelope(M: ModularFunction, s, t=None, x=None, n_dirs: int = 64, seed: int = 0) -> np.ndarray:
    """min over sampled (t, x) and directions of M at radius s."""
    s = np.atleast_1d(np.asarray(s, float))
    if np.any(s < 0):
        raise ValueError("radius must be nonnegative")
    if t is None or x is None:
        rng = np.random.default_rng(seed)
        t = rng.uniform(0, 1, 64)
        x = rng.uniform(0, 1, (64, M.space_dim))
    t = np.asarray(t, float).ravel()
    x = np.asarray(x, float).reshape(len(t), -1)
    if M.isotropic or M.dim == 1:
        dirs = np.eye(M.dim)[:1]
    elif M.dim == 2:
        dirs = _sphere(n_dirs)
    else:
        dirs = np.random.default_rng(seed + 1).normal(size=(n_dirs, M.dim))
        dirs = np.vstack([np.eye(M.dim), dirs / np.linalg.norm(dirs, axis=1, keepdims=True)])
    out = np.empty(len(s))
    for i, si in enumerate(s):
        pts = si * dirs
        vals = M(t[:, None], x[:, None, :], pts[None, :, :])
        out[i] = float(np.min(vals))
    return out
