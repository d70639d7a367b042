"""Implicit Euler finite-difference solver for u_t = div A(t, x, grad u) + f with zero Dirichlet data."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fluxes import AssumptionViolation, FluxPreset, check_flux_assumptions
from .modular import truncate

__all__ = [
    "Mesh",
    "Problem",
    "SolverTols",
    "SolveReport",
    "StepFailure",
    "truncate_data",
    "solve_bounded",
    "DiscreteOperator",
]

Data = Union[Callable, np.ndarray, float]


class StepFailure(RuntimeError):
    def __init__(self, step: int, residual: float, message: str = ""):
        super().__init__(f"time step {step} did not converge (residual {residual:.3e}) {message}".strip())
        self.step = step
        self.residual = residual


@dataclass(frozen=True)
class Mesh:
    """Node counts per axis (intervals, so nx + 1 nodes) and number of time steps."""

    nx: tuple
    nt: int

    def __post_init__(self):
        nx = tuple(int(n) for n in np.atleast_1d(self.nx))
        object.__setattr__(self, "nx", nx)
        if not 1 <= len(nx) <= 2:
            raise ValueError("only 1D and 2D meshes are supported")
        if any(n < 2 for n in nx) or self.nt < 1:
            raise ValueError("mesh needs at least 2 intervals per axis and one time step")


@dataclass
class SolverTols:
    newton: float = 1e-10
    max_newton: int = 40
    max_fixed_point: int = 400
    monotonicity: float = 1e-9


@dataclass
class Problem:
    """Domain (0, L1) [x (0, L2)], horizon T, flux preset and data.

    ``f`` is a callable f(t, x) on nodes, an array of nodal values with shape
    (nt + 1,) + node shape, or a constant; ``u0`` likewise without the time axis.
    """

    lengths: tuple
    T: float
    flux: FluxPreset
    f: Data = 0.0
    u0: Data = 0.0
    validated: bool = field(default=False, init=False)

    def __post_init__(self):
        self.lengths = tuple(float(v) for v in np.atleast_1d(self.lengths))
        if len(self.lengths) != self.flux.dim:
            raise ValueError(f"domain has {len(self.lengths)} axes but flux is {self.flux.dim}-dimensional")
        if not self.T > 0 or any(not v > 0 for v in self.lengths):
            raise ValueError("horizon and domain lengths must be positive")

    @property
    def M(self):
        return self.flux.M

    @property
    def c_A(self) -> float:
        return self.flux.c_A

    def validate(self, seed: int = 0) -> dict:
        rep = check_flux_assumptions(self.flux, seed=seed, T=self.T)
        if not rep["passed"]:
            raise AssumptionViolation(f"flux {self.flux.id} fails sampled growth/coercivity/monotonicity: {rep}")
        self.validated = True
        return rep

    def grid(self, mesh: Mesh):
        steps = tuple(L / n for L, n in zip(self.lengths, mesh.nx))
        axes = [np.arange(n + 1) * h for n, h in zip(mesh.nx, steps)]
        x = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        t = np.linspace(0.0, self.T, mesh.nt + 1)
        return t, x, steps

    def data_on(self, mesh: Mesh):
        """Nodal (f, u0): f of shape (nt + 1,) + nodes, u0 of node shape."""
        t, x, _ = self.grid(mesh)
        node_shape = x.shape[:-1]
        f = _eval(self.f, t[(slice(None),) + (None,) * len(node_shape)], x[None], (len(t),) + node_shape)
        u0 = _eval(self.u0, np.zeros(node_shape), x, node_shape)
        return f, u0


def _eval(d: Data, t, x, shape) -> np.ndarray:
    if callable(d):
        v = np.asarray(d(t, x), float)
        return np.broadcast_to(v, shape).copy()
    v = np.asarray(d, float)
    if v.ndim == 0:
        return np.full(shape, float(v))
    if v.shape != shape:
        raise ValueError(f"data array has shape {v.shape}, mesh expects {shape}")
    return v.copy()


def truncate_data(f, u0, n: float):
    """(T_n f, T_n u0)."""
    if not n > 0:
        raise ValueError("truncation level must be positive")
    return truncate(n, np.asarray(f, float)), truncate(n, np.asarray(u0, float))


# discrete operator ------------------------------------------------------------


class DiscreteOperator:
    """Face gradients, fluxes and the conservative divergence on a node mesh.

    In 1D the face gradient is the difference quotient. In 2D the normal
    component is the difference quotient across the face and the tangential
    component is the average of the central differences at the two face nodes.
    """

    def __init__(self, flux: FluxPreset, x: np.ndarray, steps: tuple):
        self.flux = flux
        self.x = x
        self.steps = steps
        self.dim = len(steps)
        self.faces = []
        for ax in range(self.dim):
            sl0 = [slice(None)] * self.dim
            sl1 = [slice(None)] * self.dim
            sl0[ax] = slice(0, -1)
            sl1[ax] = slice(1, None)
            xf = 0.5 * (x[tuple(sl0)] + x[tuple(sl1)])
            self.faces.append(xf)

    def face_gradients(self, u: np.ndarray) -> list:
        """Gradient vectors on the faces normal to each axis, shape face + (dim,)."""
        if self.dim == 1:
            return [(np.diff(u) / self.steps[0])[..., None]]
        h1, h2 = self.steps
        # central differences at nodes, zero-padded beyond the boundary (u = 0 there)
        cx = np.zeros_like(u)
        cy = np.zeros_like(u)
        cx[1:-1, :] = (u[2:, :] - u[:-2, :]) / (2 * h1)
        cy[:, 1:-1] = (u[:, 2:] - u[:, :-2]) / (2 * h2)
        gx = np.stack([np.diff(u, axis=0) / h1, 0.5 * (cy[:-1, :] + cy[1:, :])], axis=-1)
        gy = np.stack([0.5 * (cx[:, :-1] + cx[:, 1:]), np.diff(u, axis=1) / h2], axis=-1)
        return [gx, gy]

    def fluxes(self, t: float, grads: list) -> list:
        return [self.flux(np.full(g.shape[:-1], t), xf, g) for g, xf in zip(grads, self.faces)]

    def divergence(self, fl: list) -> np.ndarray:
        """Conservative divergence at interior nodes from normal face fluxes."""
        out = 0.0
        for ax, F in enumerate(fl):
            Fn = F[..., ax]
            d = np.diff(Fn, axis=ax) / self.steps[ax]
            sl = [slice(1, -1)] * self.dim
            sl[ax] = slice(None)
            out = out + d[tuple(sl)]
        return out

    def apply(self, t: float, u: np.ndarray):
        grads = self.face_gradients(u)
        fl = self.fluxes(t, grads)
        return self.divergence(fl), grads, fl


# report ---------------------------------------------------------------------------


@dataclass
class SolveReport:
    n: Optional[float]
    t: np.ndarray
    x: np.ndarray
    steps: tuple
    u: np.ndarray
    f: np.ndarray
    u0: np.ndarray
    f_raw: np.ndarray
    u0_raw: np.ndarray
    newton_iterations: list
    fallback_steps: list
    final_residuals: list
    problem: Problem
    mesh: Mesh
    diagnostics: dict = field(default_factory=dict)

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    @property
    def node_volume(self) -> float:
        return float(np.prod(self.steps))

    def operator(self) -> DiscreteOperator:
        if "_op" not in self.__dict__:
            self.__dict__["_op"] = DiscreteOperator(self.problem.flux, self.x, self.steps)
        return self.__dict__["_op"]

    def summary(self) -> dict:
        return {
            "n": self.n,
            "mesh": {"nx": list(self.mesh.nx), "nt": self.mesh.nt},
            "steps": list(self.steps),
            "dt": self.dt,
            "newton_iterations_total": int(sum(self.newton_iterations)),
            "newton_iterations_max": int(max(self.newton_iterations)),
            "fallback_steps": list(self.fallback_steps),
            "max_final_residual": float(max(self.final_residuals)),
            "eps_reg": self.problem.flux.eps_reg,
            "sup_u": float(np.max(np.abs(self.u))),
            "diagnostics": self.diagnostics,
        }


# Newton ------------------------------------------------------------------------------


def _colors(shape: tuple) -> np.ndarray:
    idx = np.indices(shape)
    c = idx[0] % 3
    for k in range(1, len(shape)):
        c = c * 3 + idx[k] % 3
    return c


class _Step:
    """Residual R(u) = u - u_prev - dt (div_h A(t, grad u) + f) on interior nodes."""

    def __init__(self, op: DiscreteOperator, node_shape: tuple, tols: SolverTols):
        self.op = op
        self.shape = node_shape
        self.inner = tuple(s - 2 for s in node_shape)
        self.tols = tols
        self.colors = _colors(self.inner)
        self.ncolors = int(self.colors.max()) + 1
        self._pattern = self._stencil_pattern()

    def embed(self, v: np.ndarray) -> np.ndarray:
        full = np.zeros(self.shape)
        full[(slice(1, -1),) * len(self.shape)] = v
        return full

    def residual(self, v, prev, t, dt, f):
        div, grads, fl = self.op.apply(t, self.embed(v))
        return v - prev - dt * (div + f), grads, fl

    def _stencil_pattern(self):
        """Row/column pairs of the 3^d-point stencil on the interior index set."""
        n = int(np.prod(self.inner))
        ids = np.arange(n).reshape(self.inner)
        rows, cols = [], []
        d = len(self.inner)
        for off in np.ndindex(*(3,) * d):
            off = np.array(off) - 1
            src = [slice(max(0, -o), s - max(0, o)) for o, s in zip(off, self.inner)]
            dst = [slice(max(0, o), s + min(0, o)) for o, s in zip(off, self.inner)]
            rows.append(ids[tuple(src)].ravel())
            cols.append(ids[tuple(dst)].ravel())
        return np.concatenate(rows), np.concatenate(cols)

    def _assemble(self, lin) -> sp.csr_matrix:
        """Sparse matrix of a linear map on interior nodes, one probe per stencil color."""
        n = int(np.prod(self.inner))
        rows, cols = self._pattern
        vals = np.zeros(len(rows))
        col_color = self.colors.ravel()[cols]
        for c in range(self.ncolors):
            col = lin((self.colors == c).astype(float)).ravel()
            sel = col_color == c
            # each row sees exactly one probed column of this color
            vals[sel] = col[rows[sel]]
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))

    def _tangents(self, t, grads):
        """dA/dxi on each face: kappa I + kappa'(r) xi xi^T / r, kappa' by a relative central difference."""
        flux = self.op.flux
        out = []
        for g, xf in zip(grads, self.op.faces):
            s = np.sqrt(np.sum(g * g, axis=-1))
            r = np.sqrt(s * s + flux.eps_reg ** 2) if flux.eps_reg > 0 else s
            tt = np.full(s.shape, t)
            safe = np.where(r > 0, r, 1.0)
            eta = 1e-6
            k0 = flux.kappa(tt, xf, np.where(r > 0, r, 0.0))
            dk = (flux.kappa(tt, xf, safe * (1 + eta)) - flux.kappa(tt, xf, safe * (1 - eta))) / (2 * eta * safe)
            dk = np.where(r > 0, dk / safe, 0.0)
            eye = np.eye(g.shape[-1])
            out.append(k0[..., None, None] * eye + dk[..., None, None] * g[..., :, None] * g[..., None, :])
        return out

    def jacobian(self, v, t, dt, grads):
        tan = self._tangents(t, grads)

        def lin(w):
            gw = self.op.face_gradients(self.embed(w))
            fl = [np.einsum("...ij,...j->...i", T, g) for T, g in zip(tan, gw)]
            return w - dt * self.op.divergence(fl)

        return self._assemble(lin)

    def frozen_matrix(self, v, t, dt):
        """Linear operator I - dt div_h(kappa(grad v) grad .) with kappa frozen at v."""
        grads = self.op.face_gradients(self.embed(v))
        kap = [self._kappa(t, g, xf) for g, xf in zip(grads, self.op.faces)]

        def lin(w):
            gw = self.op.face_gradients(self.embed(w))
            fl = [k[..., None] * g for k, g in zip(kap, gw)]
            return w - dt * self.op.divergence(fl)

        return self._assemble(lin)

    def _kappa(self, t, g, xf):
        s = np.sqrt(np.sum(g * g, axis=-1))
        if self.op.flux.eps_reg > 0:
            s = np.sqrt(s * s + self.op.flux.eps_reg ** 2)
        else:
            s = np.maximum(s, 1e-300)
        return self.op.flux.kappa(np.full(s.shape, t), xf, s)

    def check_monotone(self, ga, fa, gb, fb):
        for g1, f1, g2, f2 in zip(ga, fa, gb, fb):
            prod = np.sum((f1 - f2) * (g1 - g2), axis=-1)
            scale = np.abs(np.sum(f1 * g1, axis=-1)) + np.abs(np.sum(f2 * g2, axis=-1))
            worst = float(np.min(prod + self.tols.monotonicity * (1.0 + scale)))
            if worst < 0:
                raise AssumptionViolation(f"flux is not monotone on the current iterates (margin {worst:.3e})")


def _solve_step(stp: _Step, prev, t, dt, f, step_index: int):
    tols = stp.tols
    v = prev.copy()
    R, g, fl = stp.residual(v, prev, t, dt, f)
    res = float(np.max(np.abs(R), initial=0.0))
    iters = 0
    while res >= tols.newton and iters < tols.max_newton:
        iters += 1
        J = stp.jacobian(v, t, dt, g)
        delta = spla.spsolve(J.tocsc(), -R.ravel()).reshape(v.shape)
        accepted = False
        for lam in (1.0, 0.5, 0.25):
            w = v + lam * delta
            Rw, gw, fw = stp.residual(w, prev, t, dt, f)
            rw = float(np.max(np.abs(Rw), initial=0.0))
            if np.isfinite(rw) and rw < res:
                stp.check_monotone(g, fl, gw, fw)
                v, R, g, fl, res = w, Rw, gw, fw, rw
                accepted = True
                break
        if not accepted:
            return _fixed_point(stp, v, prev, t, dt, f, step_index, iters)
    if res >= tols.newton:
        return _fixed_point(stp, v, prev, t, dt, f, step_index, iters)
    return v, iters, False, res


def _line_search(stp: _Step, v, d, prev, t, dt, f, iters: int = 60) -> float:
    """Step length where the directional derivative <R(v + lam d), d> changes sign.

    Each step minimises a convex functional whose gradient is R (exactly so in
    1D), so this is an exact line search that needs no potential for A.
    """

    def slope(lam):
        return float(np.sum(stp.residual(v + lam * d, prev, t, dt, f)[0] * d))

    lo, hi = 0.0, 1.0
    s_hi = slope(hi)
    if not np.isfinite(s_hi):
        s_hi = np.inf
    if s_hi <= 0:
        return 1.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        s_mid = slope(mid)
        if np.isfinite(s_mid) and s_mid <= 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-3 * hi:
            break
    return lo if lo > 0 else hi


def _fixed_point(stp: _Step, v, prev, t, dt, f, step_index, iters):
    """Line-search fallback.

    The direction is the Newton step when it descends and otherwise the
    frozen-coefficient (Kacanov) update; the step length comes from an exact
    line search on the directional derivative of the residual.
    """
    tols = stp.tols
    R, g, fl = stp.residual(v, prev, t, dt, f)
    res = float(np.max(np.abs(R), initial=0.0))
    for _ in range(tols.max_fixed_point):
        if res < tols.newton:
            return v, iters, True, res
        iters += 1
        J = stp.jacobian(v, t, dt, g)
        d = spla.spsolve(J.tocsc(), -R.ravel()).reshape(v.shape)
        if not (np.all(np.isfinite(d)) and np.sum(R * d) < 0):
            L = stp.frozen_matrix(v, t, dt)
            d = spla.spsolve(L.tocsc(), (prev + dt * f).ravel()).reshape(v.shape) - v
        lam = _line_search(stp, v, d, prev, t, dt, f)
        w = v + lam * d
        Rw, gw, fw = stp.residual(w, prev, t, dt, f)
        rw = float(np.max(np.abs(Rw), initial=0.0))
        if not np.isfinite(rw) or np.array_equal(w, v):
            break
        stp.check_monotone(g, fl, gw, fw)
        v, R, g, fl, res = w, Rw, gw, fw, rw
    if res < tols.newton:
        return v, iters, True, res
    raise StepFailure(step_index, res)


def solve_bounded(problem: Problem, n: Optional[float], mesh: Mesh, tols: Optional[SolverTols] = None,
                  validate: bool = True, seed: int = 0) -> SolveReport:
    """Implicit Euler with f evaluated at the new time level; data truncated at level n (None: untruncated)."""
    tols = tols or SolverTols()
    if validate and not problem.validated:
        problem.validate(seed)
    t, x, steps = problem.grid(mesh)
    f_raw, u0_raw = problem.data_on(mesh)
    if n is None:
        f, u0 = f_raw.copy(), u0_raw.copy()
    else:
        f, u0 = truncate_data(f_raw, u0_raw, n)
    node_shape = x.shape[:-1]
    inner = (slice(1, -1),) * len(node_shape)
    u0 = u0.copy()
    # homogeneous Dirichlet data on the boundary nodes
    bmask = np.ones(node_shape, bool)
    bmask[inner] = False
    u0[bmask] = 0.0
    op = DiscreteOperator(problem.flux, x, steps)
    stp = _Step(op, node_shape, tols)
    U = np.zeros((len(t),) + node_shape)
    U[0] = u0
    iters, fallbacks, residuals = [], [], []
    dt = float(t[1] - t[0])
    v = u0[inner]
    for m in range(1, len(t)):
        v, it, fb, res = _solve_step(stp, v, float(t[m]), dt, f[m][inner], m)
        U[m][inner] = v
        iters.append(it)
        residuals.append(res)
        if fb:
            fallbacks.append(m)
    return SolveReport(n, t, x, steps, U, f, u0, f_raw, u0_raw, iters, fallbacks, residuals, problem, mesh)
