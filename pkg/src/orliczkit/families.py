"""Preset modular families, addressed by string id."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .modular import ModularFunction, PowerLower

__all__ = ["ModularFamily", "make_family", "FAMILY_IDS", "PRESETS", "preset_families"]


def _norm(xi):
    return np.sqrt(np.sum(xi * xi, axis=-1))


def _power_conj(p):
    """Conjugate of s -> s^p: (p - 1) (s / p)^{p'}."""
    q = p / (p - 1.0)
    return lambda s: (p - 1.0) * (np.abs(s) / p) ** q


@dataclass
class ModularFamily:
    """A modular function with the metadata the balance checks need.

    ``critical_x`` lists spatial points where the family degenerates (zeros of
    a weight, jumps of an exponent); the balance sampler centres extra cells there.
    ``modulus`` describes the declared regularity of the (t, x) dependence.
    """

    id: str
    M: ModularFunction
    params: dict
    N: int
    default_mode: str = "arbitrary"
    critical_x: list = field(default_factory=list)
    modulus: str = "none"
    holder_alpha: Optional[float] = None
    holder_const: float = 1.0
    components: dict = field(default_factory=dict)
    expected_admissible: Optional[bool] = None

    @property
    def growth_p(self) -> Optional[float]:
        return self.M.growth.p if self.M.growth is not None else None


def _mf(fn, N, family, params, **kw) -> ModularFunction:
    params = dict(params)
    params["space_dim"] = N
    return ModularFunction(fn=fn, dim=N, family=family, params=params, **kw)


def power_p(p: float = 2.0, N: int = 2) -> ModularFamily:
    if not p > 1:
        raise ValueError("power family needs p > 1")
    conj = _power_conj(p)
    M = _mf(
        lambda t, x, xi: _norm(xi) ** p,
        N, "power_p", {"p": p},
        isotropic=True, homogeneous=True, growth=PowerLower(p),
        profile=lambda t, x, s: s ** p,
        conj=lambda t, x, eta: conj(_norm(eta)),
    )
    return ModularFamily("power_p", M, {"p": p}, N, modulus="constant")


def _smooth_exponent(N: int, lo: float, hi: float) -> Callable:
    mid, amp = 0.5 * (lo + hi), 0.5 * (hi - lo)

    def p(t, x):
        val = np.sin(2 * np.pi * x[..., 0] + t)
        if N > 1:
            val = val * np.cos(np.pi * x[..., 1])
        return mid + amp * val

    return p


def _jump_exponent(lo: float, hi: float, at: float = 0.5) -> Callable:
    return lambda t, x: np.where(x[..., 0] < at, lo, hi)


def variable_exponent(N: int = 2, p_min: float = 1.5, p_max: float = 3.0, jump: bool = False) -> ModularFamily:
    """|xi|^{p(t,x)} with a smooth (Lipschitz) exponent, or one jumping across x1 = 1/2."""
    if not (1 < p_min <= p_max):
        raise ValueError("exponent bounds must satisfy 1 < p_min <= p_max")
    pf = _jump_exponent(p_min, p_max) if jump else _smooth_exponent(N, p_min, p_max)

    def conj(t, x, eta):
        p = pf(t, x)
        return (p - 1.0) * (_norm(eta) / p) ** (p / (p - 1.0))

    M = _mf(
        lambda t, x, xi: _norm(xi) ** pf(t, x),
        N, "variable_exponent", {"p_min": p_min, "p_max": p_max, "jump": jump},
        isotropic=True, growth=PowerLower(p_min),
        profile=lambda t, x, s: s ** pf(t, x),
        conj=conj,
    )
    return ModularFamily(
        "variable_exponent", M, {"p_min": p_min, "p_max": p_max, "jump": jump}, N,
        critical_x=[[0.5] + [0.5] * (N - 1)] if jump else [],
        modulus="discontinuous" if jump else "lipschitz",
        components={"exponent": pf},
    )


def llog(alpha: float = 1.0, N: int = 2) -> ModularFamily:
    """|xi| log^alpha(1 + |xi|)."""
    if not alpha > 0:
        raise ValueError("llog needs alpha > 0")
    prof = lambda t, x, s: s * np.log1p(s) ** alpha  # noqa: E731
    M = _mf(
        lambda t, x, xi: prof(t, x, _norm(xi)),
        N, "llog", {"alpha": alpha},
        isotropic=True, homogeneous=True, profile=prof,
    )
    return ModularFamily("llog", M, {"alpha": alpha}, N, modulus="constant")


def _holder_weight(alpha: float, N: int, centre: float = 0.5, scale: float = 1.0) -> Callable:
    return lambda t, x: scale * np.abs(x[..., 0] - centre) ** alpha


def double_phase(p: float = 2.0, q: float = 2.2, alpha: float = 0.5, N: int = 2) -> ModularFamily:
    """|xi|^p + a(x)|xi|^q with a = |x1 - 1/2|^alpha vanishing on a hyperplane."""
    if not (1 < p <= q):
        raise ValueError("double phase needs 1 < p <= q")
    if not (0 < alpha <= 1):
        raise ValueError("Hoelder exponent must lie in (0, 1]")
    a = _holder_weight(alpha, N)
    prof = lambda t, x, s: s ** p + a(t, x) * s ** q  # noqa: E731
    M = _mf(
        lambda t, x, xi: prof(t, x, _norm(xi)),
        N, "double_phase", {"p": p, "q": q, "alpha": alpha},
        isotropic=True, growth=PowerLower(p), profile=prof,
    )
    return ModularFamily(
        "double_phase", M, {"p": p, "q": q, "alpha": alpha}, N,
        default_mode="power", critical_x=[[0.5] * N], modulus="holder",
        holder_alpha=alpha, holder_const=1.0, components={"weight": a},
    )


def dp_borderline(p: float = 2.0, N: int = 2) -> ModularFamily:
    """|xi|^p (1 + a(x) log(e + |xi|)) with Lipschitz a = x1 touching zero."""
    a = lambda t, x: x[..., 0]  # noqa: E731
    prof = lambda t, x, s: s ** p * (1.0 + a(t, x) * np.log(np.e + s))  # noqa: E731
    M = _mf(
        lambda t, x, xi: prof(t, x, _norm(xi)),
        N, "dp_borderline", {"p": p},
        isotropic=True, growth=PowerLower(p), profile=prof,
    )
    return ModularFamily(
        "dp_borderline", M, {"p": p}, N, critical_x=[[0.0] + [0.5] * (N - 1)],
        modulus="lipschitz", components={"weight": a},
    )


_ORLICZ_PAIRS = {
    # name: (M1, M2) homogeneous anisotropic N-functions on R^2, M1 <= M2 for |xi| > 1
    "llog": (
        lambda xi: xi[..., 0] ** 2 + xi[..., 1] ** 2,
        lambda xi: xi[..., 0] ** 2 * np.log(np.e + np.abs(xi[..., 0])) + xi[..., 1] ** 2,
    ),
    "quartic": (
        lambda xi: xi[..., 0] ** 2 + xi[..., 1] ** 2,
        lambda xi: xi[..., 0] ** 4 + xi[..., 1] ** 2,
    ),
}


def orlicz_dp(variant: str = "llog", alpha: float = 0.5) -> ModularFamily:
    """M1(xi) + a(x) M2(xi) on R^2 with a = |x1 - 1/2|^alpha."""
    if variant not in _ORLICZ_PAIRS:
        raise ValueError(f"unknown orlicz_dp variant {variant!r}; choose from {sorted(_ORLICZ_PAIRS)}")
    M1, M2 = _ORLICZ_PAIRS[variant]
    N = 2
    a = _holder_weight(alpha, N)
    M = _mf(
        lambda t, x, xi: M1(xi) + a(t, x) * M2(xi),
        N, "orlicz_dp", {"variant": variant, "alpha": alpha},
    )
    return ModularFamily(
        "orlicz_dp", M, {"variant": variant, "alpha": alpha}, N,
        critical_x=[[0.5, 0.5]], modulus="holder", holder_alpha=alpha,
        components={"M1": M1, "M2": M2, "weight": a},
    )


def weighted_orlicz(N: int = 2, theta0: Optional[dict] = None) -> ModularFamily:
    """k(t,x)(xi1^2 + 2 xi2^2) + |xi|^{p(t,x)} with positive Lipschitz k.

    ``theta0`` carries the user-supplied parameters of the isotropic part:
    {"p_min", "p_max"} of its smooth exponent.
    """
    if N != 2:
        raise ValueError("weighted_orlicz preset is defined on R^2")
    theta0 = dict(theta0 or {"p_min": 1.5, "p_max": 2.5})
    pf = _smooth_exponent(N, theta0["p_min"], theta0["p_max"])
    k = lambda t, x: 1.5 + 0.5 * np.sin(np.pi * x[..., 0]) * np.cos(t)  # noqa: E731
    M1 = lambda xi: xi[..., 0] ** 2 + 2.0 * xi[..., 1] ** 2  # noqa: E731
    M = _mf(
        lambda t, x, xi: k(t, x) * M1(xi) + _norm(xi) ** pf(t, x),
        N, "weighted_orlicz", {"theta0": theta0},
        growth=PowerLower(min(2.0, theta0["p_min"])),
    )
    return ModularFamily(
        "weighted_orlicz", M, {"theta0": theta0}, N, modulus="lipschitz",
        components={"weights": [k], "M": [M1], "exponent": pf},
    )


def exp_orlicz(N: int = 2) -> ModularFamily:
    """exp(|xi|) - 1 - |xi|, a homogeneous N-function outside Delta_2."""
    prof = lambda t, x, s: np.expm1(s) - s  # noqa: E731

    def conj(t, x, eta):
        r = _norm(eta)
        return (1.0 + r) * np.log1p(r) - r

    M = _mf(
        lambda t, x, xi: prof(t, x, _norm(xi)),
        N, "exp_orlicz", {},
        isotropic=True, homogeneous=True, profile=prof, conj=conj,
    )
    return ModularFamily("exp_orlicz", M, {}, N, modulus="constant")


_FACTORIES = {
    "power_p": power_p,
    "variable_exponent": variable_exponent,
    "llog": llog,
    "double_phase": double_phase,
    "dp_borderline": dp_borderline,
    "orlicz_dp": orlicz_dp,
    "weighted_orlicz": weighted_orlicz,
    "exp_orlicz": exp_orlicz,
}

FAMILY_IDS = tuple(_FACTORIES)


def make_family(family_id: str, **params) -> ModularFamily:
    try:
        factory = _FACTORIES[family_id]
    except KeyError:
        raise ValueError(f"unknown family {family_id!r}; known: {', '.join(FAMILY_IDS)}") from None
    return factory(**params)


# (label, id, params, expected balance verdict)
PRESETS = [
    ("power_p", "power_p", {"p": 2.5}, True),
    ("variable_exponent_smooth", "variable_exponent", {}, True),
    ("variable_exponent_jump", "variable_exponent", {"p_min": 2.0, "p_max": 3.0, "jump": True}, False),
    ("llog", "llog", {"alpha": 1.0}, True),
    ("double_phase_2.2", "double_phase", {"p": 2.0, "q": 2.2, "alpha": 0.5, "N": 2}, True),
    ("double_phase_2.6", "double_phase", {"p": 2.0, "q": 2.6, "alpha": 0.5, "N": 2}, False),
    ("dp_borderline", "dp_borderline", {"p": 2.0}, True),
    ("orlicz_dp_llog", "orlicz_dp", {"variant": "llog"}, True),
    ("orlicz_dp_quartic", "orlicz_dp", {"variant": "quartic"}, False),
    ("weighted_orlicz", "weighted_orlicz", {}, True),
    ("exp_orlicz", "exp_orlicz", {}, True),
]


def preset_families():
    """Yield (label, family, expected admissibility) for every shipped preset."""
    for label, fid, params, expected in PRESETS:
        fam = make_family(fid, **params)
        fam.expected_admissible = expected
        yield label, fam, expected
