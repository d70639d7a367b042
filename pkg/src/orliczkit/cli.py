"""Command-line entry point: ``orliczkit <command> [--config FILE] [flags]``.

Exit status: 0 when every enabled check passes, 1 when a check fails,
2 for usage or configuration errors, 3 when a module raises.
"""

from __future__ import annotations

import os

# thread caps must be in place before numpy loads its BLAS
_threads = os.environ.get("ORLICZKIT_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[_var] = _threads

import argparse  # noqa: E402
import sys  # noqa: E402
from pathlib import Path  # noqa: E402
from typing import Optional, Sequence  # noqa: E402

import numpy as np  # noqa: E402

from .config import COMMANDS, ConfigError, RunConfig, build_config, load_config, parse_expression  # noqa: E402
from .report import write_columns, write_report  # noqa: E402

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_ERROR = 0, 1, 2, 3

FAMILY_FLAGS = [
    ("--p", "p", float), ("--q", "q", float), ("--alpha", "alpha", float), ("--N", "N", int),
    ("--p-min", "p_min", float), ("--p-max", "p_max", float), ("--variant", "variant", str),
]


def _floats(text: str) -> list:
    return [float(v) for v in text.replace(",", " ").split()]


def _ints(text: str) -> list:
    return [int(v) for v in text.replace(",", " ").split()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or JSON config (a previous report is accepted too)")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--report", default=argparse.SUPPRESS, help="JSON report path (default: stdout)")
    common.add_argument("--emit-plots", dest="emit_plots", default=argparse.SUPPRESS, metavar="DIR",
                        help="directory for gnuplot-ready CSV columns")

    fam = argparse.ArgumentParser(add_help=False)
    g = fam.add_argument_group("modular family")
    g.add_argument("--family", default=argparse.SUPPRESS, help="family id, e.g. power_p, double_phase")
    for flag, dest, typ in FAMILY_FLAGS:
        g.add_argument(flag, dest=f"fam_{dest}", type=typ, default=argparse.SUPPRESS)
    g.add_argument("--jump", dest="fam_jump", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="orliczkit", description="Musielak-Orlicz modular toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check-nfunction", parents=[common, fam], help="sampled N-function and Delta_2 checks")
    p.add_argument("--n-points", dest="n_points", type=int, default=argparse.SUPPRESS)
    p.add_argument("--n-dirs", dest="n_dirs", type=int, default=argparse.SUPPRESS)
    p.add_argument("--tol", type=float, default=argparse.SUPPRESS)

    p = sub.add_parser("conjugate", parents=[common, fam], help="tabulate the conjugate M*(t, x, .)")
    p.add_argument("--t", type=float, default=argparse.SUPPRESS)
    p.add_argument("--x", type=_floats, default=argparse.SUPPRESS)
    p.add_argument("--eta-max", dest="eta_max", type=float, default=argparse.SUPPRESS)
    p.add_argument("--n-eta", dest="n_eta", type=int, default=argparse.SUPPRESS)
    p.add_argument("--xi-max", dest="xi_max", type=float, default=argparse.SUPPRESS)
    p.add_argument("--n-xi", dest="n_xi", type=int, default=argparse.SUPPRESS)
    p.add_argument("--csv", default=argparse.SUPPRESS, help="write the table as CSV (eta..., value)")

    p = sub.add_parser("balance", parents=[common, fam], help="sampled balance condition and trend verdict")
    p.add_argument("--mode", choices=["arbitrary", "power"], default=argparse.SUPPRESS)
    p.add_argument("--deltas", type=_floats, default=argparse.SUPPRESS)
    p.add_argument("--n-cells", dest="n_cells", type=int, default=argparse.SUPPRESS)
    p.add_argument("--c-sp", dest="c_sp", type=float, default=argparse.SUPPRESS,
                   help="also check the isotropic pointwise form with this space weight")

    p = sub.add_parser("mollify", parents=[common, fam], help="time mollifier properties on a field")
    p.add_argument("--mu", type=_floats, default=argparse.SUPPRESS)
    p.add_argument("--input", default=argparse.SUPPRESS, help="field file (.csv or binary)")

    p = sub.add_parser("solve", parents=[common], help="truncated-data implicit Euler solve with diagnostics")
    p.add_argument("--n", type=float, default=argparse.SUPPRESS, help="data truncation level")
    p.add_argument("--nx", type=_ints, default=argparse.SUPPRESS)
    p.add_argument("--nt", type=int, default=argparse.SUPPRESS)
    p.add_argument("--snapshots", default=argparse.SUPPRESS, help="CSV with columns t, x..., u")

    p = sub.add_parser("verify", parents=[common], help="property and oracle suites")
    p.add_argument("--suite", default=argparse.SUPPRESS)
    return parser


def _merge_flags(data: dict, ns: argparse.Namespace) -> dict:
    """Overlay command-line flags on the config mapping."""
    flags = vars(ns)
    for key in ("seed", "report", "emit_plots"):
        if key in flags:
            data[key] = flags[key]
    params = data.setdefault("params", {})
    if not isinstance(params, dict):
        raise ConfigError("params: must be a mapping")
    fam_params = {k[4:]: v for k, v in flags.items() if k.startswith("fam_")}
    if "family" in flags or fam_params:
        family = params.setdefault("family", {})
        if "family" in flags:
            if family.get("id") not in (None, flags["family"]):
                family["params"] = {}
            family["id"] = flags["family"]
        family.setdefault("params", {}).update(fam_params)
    simple = ("n_points", "n_dirs", "tol", "t", "x", "eta_max", "n_eta", "xi_max", "n_xi", "csv", "mode", "deltas",
              "n_cells", "c_sp", "mu", "input", "n", "snapshots", "suite")
    for key in simple:
        if key in flags:
            params[key] = flags[key]
    if "nx" in flags or "nt" in flags:
        mesh = params.setdefault("mesh", {})
        if "nx" in flags:
            mesh["nx"] = flags["nx"]
        if "nt" in flags:
            mesh["nt"] = flags["nt"]
    return data


def resolve_config(ns: argparse.Namespace) -> RunConfig:
    data: dict = {}
    if ns.config:
        loaded = load_config(ns.config)
        if "command" in loaded or "params" in loaded:
            if loaded.get("command", ns.command) != ns.command:
                raise ConfigError(f"command: config is for {loaded['command']!r}, invoked as {ns.command!r}")
            data = dict(loaded)
        else:
            data = {"params": dict(loaded)}
    data["command"] = ns.command
    return build_config(_merge_flags(data, ns))


# command handlers: each returns (result dict, passed, plot writer or None) ---------------------------


def _family(ref):
    from .families import make_family
    return make_family(ref.id, **ref.params)


def run_check_nfunction(cfg: RunConfig, prm) -> tuple:
    from .modular import SamplePlan, check_delta2, check_nfunction

    fam = _family(prm.family)
    plan = SamplePlan(n_points=prm.n_points, n_dirs=prm.n_dirs, seed=cfg.seed)
    rep = check_nfunction(fam.M, plan, prm.tol)
    d2 = check_delta2(fam.M, plan)
    result = {"family": fam.id, "nfunction": rep.to_dict(), "delta2": d2.to_dict()}

    def plots(out: Path):
        write_columns(out / "delta2_ratios.csv", ["radius", "ratio"], [d2.radii, d2.ratios])

    return result, rep.passed, plots


def run_conjugate(cfg: RunConfig, prm) -> tuple:
    from .modular import conjugate

    M = _family(prm.family).M
    x = np.asarray(prm.x if prm.x is not None else [0.5] * M.space_dim, float)
    xi_axis = np.linspace(-prm.xi_max, prm.xi_max, prm.n_xi)
    radial = M.isotropic and M.dim > 1
    if radial:
        eta_grid = np.linspace(0.0, prm.eta_max, prm.n_eta)
        tab = conjugate(M, prm.t, x, eta_grid, xi_axis, refine=prm.refine)
    else:
        eta_axis = np.linspace(-prm.eta_max, prm.eta_max, prm.n_eta)
        tab = conjugate(M, prm.t, x, (eta_axis,) * M.dim, (xi_axis,) * M.dim, refine=prm.refine)
    result = {"family": M.family, "t": prm.t, "x": x, "radial": radial, "eta_grid": list(tab.eta_grid),
              "values": tab.values}
    passed = True
    if M.conj is not None:
        # closed-form dual route
        mesh = np.stack(np.meshgrid(*tab.eta_grid, indexing="ij"), axis=-1)
        if radial:
            pts = np.zeros(mesh.shape[:-1] + (M.dim,))
            pts[..., 0] = mesh[..., 0]
        else:
            pts = mesh
        exact = np.asarray(M.conj(np.full(pts.shape[:-1], prm.t), np.broadcast_to(x, pts.shape[:-1] + x.shape), pts))
        rel = float(np.max(np.abs(tab.values - exact) / (1.0 + np.abs(exact))))
        result["closed_form_max_relative_error"] = rel
        passed = rel <= 1e-6
    if prm.csv:
        Path(prm.csv).parent.mkdir(parents=True, exist_ok=True)
        tab.to_csv(prm.csv)

    def plots(out: Path):
        mesh = np.meshgrid(*tab.eta_grid, indexing="ij")
        names = [f"eta{i + 1}" for i in range(len(mesh))] + ["value"]
        write_columns(out / "conjugate.csv", names, [m.ravel() for m in mesh] + [tab.values.ravel()])

    return result, passed, plots


def run_balance(cfg: RunConfig, prm) -> tuple:
    from .balance import analytic_admissible, balance_check, isotropic_balance_check

    fam = _family(prm.family)
    rep = balance_check(fam, mode=prm.mode, delta_grid=prm.deltas, n_cells=prm.n_cells, lattice=prm.lattice,
                        seed=cfg.seed)
    ok, reason = analytic_admissible(fam)
    result = dict(rep.to_dict(), analytic={"admissible": bool(ok), "reason": reason})
    passed = rep.verdict == "bounded-trend"
    iso = None
    if prm.c_sp is not None:
        iso = isotropic_balance_check(fam, c_sp=prm.c_sp, mode=prm.mode, delta_grid=prm.deltas, seed=cfg.seed)
        result["isotropic"] = dict(iso.to_dict(), c_sp=prm.c_sp)
        passed = passed and iso.verdict == "bounded-trend"

    def plots(out: Path):
        write_columns(out / "balance_theta.csv", ["delta", "theta"], [rep.delta_grid, rep.theta_estimates])
        if iso is not None:
            write_columns(out / "balance_theta_isotropic.csv", ["delta", "theta"],
                          [iso.delta_grid, iso.theta_estimates])

    return result, passed, plots


def _seeded_field(seed: int):
    from .fields import GridField

    rng = np.random.default_rng(seed)
    a, b = rng.uniform(0.5, 2.0, 2)
    t = np.linspace(0.0, 1.0, 257)[:, None]
    x = np.linspace(0.0, 1.0, 33)[None, :]
    vals = a * t * np.sin(np.pi * x) + np.cos(3 * t) * x * (1 - x) + 0.3 * b * np.sin(7 * t) * np.sin(2 * np.pi * x)
    return GridField(vals, (1 / 256, 1 / 32))


def run_mollify(cfg: RunConfig, prm) -> tuple:
    from .fields import read_binary, read_csv
    from .families import make_family
    from .mollifier import ode_residual_curve, verify_theorem31

    if prm.input:
        path = Path(prm.input)
        if not path.exists():
            raise ConfigError(f"params.input: file {path} does not exist")
        phi = read_csv(path) if path.suffix.lower() == ".csv" else read_binary(path)
    else:
        phi = _seeded_field(cfg.seed)
    if phi.vector:
        raise ConfigError("params.input: mollify takes a scalar node field")
    params = dict(prm.family.params)
    params.setdefault("N", phi.ndim_space)
    M = make_family(prm.family.id, **params).M
    rep = verify_theorem31(phi, prm.mu, M)
    curves = {mu: ode_residual_curve(phi, mu) for mu in prm.mu}
    result = {"field": {"shape": list(phi.shape), "steps": list(phi.steps)}, "theorem": rep.to_dict()}

    def plots(out: Path):
        for mu, (t, r) in curves.items():
            write_columns(out / f"ode_residual_mu{mu:g}.csv", ["t", "residual"], [t, r])

    return result, rep.passed, plots


def _load_data(expr, csv: Optional[str], name: str):
    if csv is None:
        return parse_expression(expr)
    from .fields import read_csv

    if not Path(csv).exists():
        raise ConfigError(f"params.data.{name}_csv: file {csv} does not exist")
    return read_csv(csv).values


def run_solve(cfg: RunConfig, prm) -> tuple:
    from .diagnostics import (HProfile, TestField, a_priori_check, decay_check, energy_inequality_check,
                              level_measure_check, renormalize_pipeline, renormalized_residual, weak_form_residual)
    from .fluxes import make_flux
    from .solver import Mesh, Problem, SolverTols, solve_bounded

    lengths = tuple(prm.domain.lengths)
    if len(prm.mesh.nx) != len(lengths):
        raise ConfigError("params.mesh.nx: needs one entry per domain axis")
    fparams = dict(prm.flux.params)
    fparams.setdefault("dim", len(lengths))
    flux = make_flux(prm.flux.id, **fparams)
    f = _load_data(prm.data.f, prm.data.f_csv, "f")
    u0 = _load_data(prm.data.u0, prm.data.u0_csv, "u0")
    if not callable(u0) and np.ndim(u0) == len(lengths) + 1:
        u0 = np.asarray(u0)[0]
    problem = Problem(lengths, prm.domain.T, flux, f=f, u0=u0)
    mesh = Mesh(tuple(prm.mesh.nx), prm.mesh.nt)
    tol = prm.tolerances
    tols = SolverTols(tol.newton, tol.max_newton, tol.max_fixed_point, tol.monotonicity)
    problem.validate(cfg.seed)
    dg = prm.diagnostics
    result: dict = {}
    if dg.n_list:
        pipe = renormalize_pipeline(problem, dg.n_list, mesh, dg.k_list, dg.l_list, tols, dg.a_priori_tol)
        rep = pipe.pop("reports")[-1]
        result["pipeline"] = pipe
    else:
        rep = solve_bounded(problem, prm.n, mesh, tols, validate=False)
    checks = {
        "a_priori": a_priori_check(rep, dg.k_list, dg.a_priori_tol),
        "energy_inequality": energy_inequality_check(rep, dg.k_list),
        "decay": decay_check(rep, dg.l_list, dg.decay_fraction),
    }
    if dg.level_c2 is not None:
        checks["levels"] = level_measure_check(rep, dg.l_list, dg.level_c2, dg.level_c1)
    result["solve"] = rep.summary()
    result["checks"] = checks
    if dg.test_fields:
        tfs = [TestField(tf.tau, tf.r, tf.power) for tf in dg.test_fields]
        h = HProfile(dg.h_R if dg.h_R is not None else float("inf"))
        result["residuals"] = {"weak_form": weak_form_residual(rep, tfs), "renormalized": renormalized_residual(rep, h, tfs)}
    if prm.data.exact:
        ex = parse_expression(prm.data.exact)
        tt = rep.t[(slice(None),) + (None,) * (rep.x.ndim - 1)]
        err = rep.u[1:] - np.asarray(ex(tt, rep.x[None]))[1:]
        result["exact_l2_error"] = float(np.sqrt(np.sum(err ** 2) * rep.dt * rep.node_volume))
    passed = all(c["passed"] for c in checks.values())
    if prm.snapshots:
        _write_snapshots(Path(prm.snapshots), rep)

    def plots(out: Path):
        ap = checks["a_priori"]["rows"]
        write_columns(out / "a_priori.csv", ["k", "lhs", "w2"],
                      [[r["k"] for r in ap], [r["lhs1"] for r in ap], [r["w2"] for r in ap]])
        dc = checks["decay"]
        write_columns(out / "decay.csv", ["l", "energy"], [dg.l_list, dc["energies"]])
        if "levels" in checks:
            lv = checks["levels"]
            write_columns(out / "levels.csv", ["l", "measure", "envelope"], [dg.l_list, lv["measures"], lv["envelope"]])
        if rep.x.shape[-1] == 1:
            write_columns(out / "u_final.csv", ["x", "u"], [rep.x[..., 0], rep.u[-1]])
        else:
            write_columns(out / "u_final.csv", ["x1", "x2", "u"], [rep.x[..., 0].ravel(), rep.x[..., 1].ravel(),
                                                                    rep.u[-1].ravel()])

    return result, passed, plots


def _write_snapshots(path: Path, rep) -> None:
    nodes = rep.x.reshape(-1, rep.x.shape[-1])
    cols = [np.repeat(rep.t, len(nodes))]
    cols += [np.tile(nodes[:, i], len(rep.t)) for i in range(nodes.shape[1])]
    cols.append(rep.u.reshape(-1))
    names = ["t"] + [f"x{i + 1}" for i in range(nodes.shape[1])] + ["u"]
    write_columns(path, names, cols)


def run_verify(cfg: RunConfig, prm) -> tuple:
    from .verify import SUITES, run_all, run_suite

    if prm.suite == "all":
        result = run_all(cfg.seed)
    elif prm.suite in SUITES:
        result = run_suite(prm.suite, cfg.seed)
    else:
        raise ConfigError(f"params.suite: unknown suite {prm.suite!r}; known: all, {', '.join(SUITES)}")

    def plots(out: Path):
        rows = result["suites"] if "suites" in result else {prm.suite: result}
        names = list(rows)
        write_columns(out / "suites.csv", ["criterion", "passed"],
                      [[rows[n].get("criterion", 0) for n in names], [float(rows[n]["passed"]) for n in names]])

    return result, result["passed"], plots


HANDLERS = {
    "check-nfunction": run_check_nfunction,
    "conjugate": run_conjugate,
    "balance": run_balance,
    "mollify": run_mollify,
    "solve": run_solve,
    "verify": run_verify,
}
assert set(HANDLERS) == set(COMMANDS)


def run(cfg: RunConfig) -> tuple:
    """Dispatch a validated config; returns (exit status, report text)."""
    result, passed, plots = HANDLERS[cfg.command](cfg, cfg.typed())
    report = {"config": cfg.model_dump(mode="json"), "command": cfg.command, "passed": bool(passed), "result": result}
    text = write_report(report, cfg.report)
    if cfg.emit_plots and plots is not None:
        out = Path(cfg.emit_plots)
        out.mkdir(parents=True, exist_ok=True)
        plots(out)
    return (EXIT_OK if passed else EXIT_FAIL), text


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        cfg = resolve_config(ns)
    except ConfigError as exc:
        parser.exit(EXIT_USAGE, f"orliczkit {ns.command}: config error: {exc}\n")
    try:
        status, text = run(cfg)
    except ConfigError as exc:
        parser.exit(EXIT_USAGE, f"orliczkit {ns.command}: config error: {exc}\n")
    except Exception as exc:  # module errors, reported with context
        sys.stderr.write(f"orliczkit {ns.command}: {type(exc).__name__}: {exc}\n")
        return EXIT_ERROR
    if cfg.report is None:
        sys.stdout.write(text)
    else:
        verdict = "passed" if status == EXIT_OK else "FAILED"
        sys.stdout.write(f"{cfg.command}: {verdict} (report: {cfg.report})\n")
    return status


if __name__ == "__main__":
    sys.exit(main())
