"""Run configuration schema (YAML or JSON files, overridable from the command line)."""

from __future__ import annotations

from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

__all__ = [
    "ConfigError",
    "build_config",
    "RunConfig",
    "COMMANDS",
    "load_config",
    "parse_expression",
]

COMMANDS = ("check-nfunction", "conjugate", "balance", "mollify", "solve", "verify")


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class FamilyRef(_Strict):
    id: str = "power_p"
    params: Dict[str, Any] = Field(default_factory=dict)


class CheckNFunctionParams(_Strict):
    family: FamilyRef = Field(default_factory=FamilyRef)
    n_points: int = 24
    n_dirs: int = 8
    tol: float = 1e-10


class ConjugateParams(_Strict):
    family: FamilyRef = Field(default_factory=FamilyRef)
    t: float = 0.5
    x: Optional[List[float]] = None
    eta_max: float = 4.0
    n_eta: int = 65
    xi_max: float = 16.0
    n_xi: int = 2049
    refine: bool = True
    csv: Optional[str] = None


class BalanceParams(_Strict):
    family: FamilyRef = Field(default_factory=FamilyRef)
    mode: Optional[Literal["arbitrary", "power"]] = None
    deltas: Optional[List[float]] = None
    n_cells: int = 16
    lattice: int = 5
    # set to also run the pointwise isotropic form with this space weight
    c_sp: Optional[float] = None


class MollifyParams(_Strict):
    input: Optional[str] = None
    mu: List[float] = Field(default_factory=lambda: [10.0, 100.0, 1000.0])
    # N defaults to the spatial dimension of the input field
    family: FamilyRef = Field(default_factory=lambda: FamilyRef(id="power_p", params={"p": 2.0}))


class Domain(_Strict):
    lengths: List[float] = Field(default_factory=lambda: [1.0])
    T: float = 1.0


class MeshCfg(_Strict):
    nx: List[int] = Field(default_factory=lambda: [64])
    nt: int = 64


class FluxCfg(_Strict):
    id: str = "laplace"
    params: Dict[str, Any] = Field(default_factory=dict)


class DataCfg(_Strict):
    """Expressions in t, x (x1, x2) with numpy names, or paths to CSV field files.

    ``exact`` is an optional reference solution; the report then carries the L2 space-time error.
    """

    f: Union[str, float] = 0.0
    u0: Union[str, float] = 0.0
    f_csv: Optional[str] = None
    u0_csv: Optional[str] = None
    exact: Optional[str] = None


class TolCfg(_Strict):
    newton: float = 1e-10
    max_newton: int = 40
    max_fixed_point: int = 400
    monotonicity: float = 1e-9


class TestFieldCfg(_Strict):
    tau: float
    r: float
    power: int = 1


class DiagnosticsCfg(_Strict):
    k_list: List[float] = Field(default_factory=lambda: [1.0, 2.0, 4.0, 8.0])
    l_list: List[float] = Field(default_factory=lambda: [1.0, 2.0, 3.0, 4.0])
    n_list: List[float] = Field(default_factory=list)
    a_priori_tol: float = 0.05
    decay_fraction: float = 1e-3
    level_c1: float = 1.0
    level_c2: Optional[float] = None
    h_R: Optional[float] = None
    test_fields: List[TestFieldCfg] = Field(default_factory=list)
    comparison_tol: float = 1e-6


class SolveParams(_Strict):
    domain: Domain = Field(default_factory=Domain)
    mesh: MeshCfg = Field(default_factory=MeshCfg)
    flux: FluxCfg = Field(default_factory=FluxCfg)
    modular: Literal["paired"] = "paired"
    data: DataCfg = Field(default_factory=DataCfg)
    n: Optional[float] = None
    tolerances: TolCfg = Field(default_factory=TolCfg)
    diagnostics: DiagnosticsCfg = Field(default_factory=DiagnosticsCfg)
    snapshots: Optional[str] = None


class VerifyParams(_Strict):
    suite: str = "all"


PARAM_MODELS = {
    "check-nfunction": CheckNFunctionParams,
    "conjugate": ConjugateParams,
    "balance": BalanceParams,
    "mollify": MollifyParams,
    "solve": SolveParams,
    "verify": VerifyParams,
}


class RunConfig(_Strict):
    command: Literal["check-nfunction", "conjugate", "balance", "mollify", "solve", "verify"]
    seed: int = 0
    report: Optional[str] = None
    emit_plots: Optional[str] = None
    params: Dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _resolve(self):
        model = PARAM_MODELS[self.command]
        self.params = model.model_validate(self.params).model_dump(mode="json")
        return self

    def typed(self):
        return PARAM_MODELS[self.command].model_validate(self.params)


def _field_path(err: dict) -> str:
    return ".".join(str(p) for p in err["loc"]) or "<root>"


def _raise(exc: ValidationError, prefix: str = "") -> None:
    msgs = "; ".join(f"{prefix}{_field_path(e)}: {e['msg']}" for e in exc.errors())
    raise ConfigError(msgs) from None


def build_config(data: dict) -> RunConfig:
    """Validate a mapping; errors name the offending field path (``params.mesh.nx``)."""
    if not isinstance(data, dict):
        raise ConfigError("<root>: config must be a mapping")
    command = data.get("command")
    params = data.get("params", {})
    if command in PARAM_MODELS:
        if not isinstance(params, dict):
            raise ConfigError("params: must be a mapping")
        try:
            PARAM_MODELS[command].model_validate(params)
        except ValidationError as exc:
            _raise(exc, "params.")
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        _raise(exc)


def load_config(path) -> dict:
    """Read a YAML/JSON config; a previously emitted report is accepted through its 'config' echo."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file {p} does not exist")
    data = yaml.safe_load(p.read_text()) or {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    if "config" in data and isinstance(data["config"], dict):
        data = data["config"]
    return data


_NAMES = {name: getattr(np, name) for name in (
    "sin", "cos", "tan", "exp", "log", "log1p", "expm1", "sqrt", "abs", "minimum", "maximum", "where",
    "tanh", "sinh", "cosh", "arctan", "sign", "heaviside", "clip",
)}
_NAMES.update(pi=np.pi, e=np.e)


def parse_expression(expr: Union[str, float]):
    """Turn an expression in t and x (x1, x2 for components) into a callable f(t, x).

    Only numpy functions from a fixed list are visible; builtins are not.
    """
    if not isinstance(expr, str):
        value = float(expr)
        return lambda t, x: np.full(np.broadcast_shapes(np.shape(t), np.shape(x)[:-1]), value)
    code = compile(expr, "<expression>", "eval")
    allowed = set(_NAMES) | {"t", "x", "x1", "x2"}
    unknown = set(code.co_names) - allowed
    if unknown:
        raise ConfigError(f"unknown names in expression {expr!r}: {', '.join(sorted(unknown))}")

    def fn(t, x):
        env = dict(_NAMES)
        env.update(t=t, x=x[..., 0], x1=x[..., 0], x2=x[..., 1] if x.shape[-1] > 1 else 0.0)
        val = eval(code, {"__builtins__": {}}, env)
        return np.broadcast_to(np.asarray(val, float), np.broadcast_shapes(np.shape(t), x.shape[:-1]))

    return fn
