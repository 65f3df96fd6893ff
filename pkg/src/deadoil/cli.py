"""Command-line front end.

    deadoil simulate|optimize|verify|audit|mms --out DIR [--config PATH]
            [--jobs N] [--seed INT] [--levels K] [--case NAME]

Exit codes: 0 success, 1 domain failure (hypotheses, nonconvergence,
gradient mismatch), 2 usage or configuration error.  A ``manifest.json``
is written into ``--out`` in every case.
"""
import argparse
from concurrent.futures import ThreadPoolExecutor
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from .artifacts import (input_hash, output_hashes, write_control, write_json, write_table,
                        write_trajectory, write_manifest_atomic)
from .config import parse_config
from .control import (OptOptions, cost_of, gradient_check, minimize, random_probes)
from .cost import Control, evaluate_cost
from .discretization import Grid2D, lp_norm
from .errors import ConfigError, DeadOilError, HypothesisError, StallError
from .estimates import (DRIFT, Scaled, check_energy_estimate, check_gronwall,
                        check_grad_ratio, check_hessian_estimate, multiplicative_study,
                        random_dirichlet_fields, refine, refinement_levels, regularity_audit,
                        solve_levels)
from .forward import SolverOptions, solve_forward
from .laws import Separable, make_generator, make_time_factor
from .mms import manufactured_problem, spatial_study, temporal_study
from .model import build_problem, validate_hypotheses

log = logging.getLogger("deadoil")

GRADIENT_TOL = 1e-5


class RunContext:
    def __init__(self, args, cfg, executor):
        self.args = args
        self.cfg = cfg
        self.out = args.out
        self.executor = executor

    def path(self, *parts):
        full = os.path.join(self.out, *parts)
        os.makedirs(os.path.dirname(full), exist_ok=True)
        return full


# ---------------------------------------------------------------------------
# configuration helpers
# ---------------------------------------------------------------------------

def _require_config(ctx):
    if ctx.cfg is None:
        raise ConfigError(f"'{ctx.args.command}' needs --config")
    return ctx.cfg


def _mesh(cfg, problem):
    nx = cfg.get_int("domain", "nx", 32)
    ny = cfg.get_int("domain", "ny", nx)
    nt = cfg.get_int("domain", "nt", 100)
    for key, v, low in (("nx", nx, 2), ("ny", ny, 2), ("nt", nt, 2)):
        if v < low:
            raise ConfigError(f"{key} must be >= {low}", key=key, line=cfg.line("domain", key))
    return Grid2D(nx, ny, problem.Lx, problem.Ly), problem.T / nt, nt


def _solver_options(cfg):
    averaging = cfg.get("coefficients", "averaging", "arithmetic")
    if averaging not in ("arithmetic", "harmonic"):
        raise ConfigError(f"unknown averaging '{averaging}'", key="averaging",
                          line=cfg.line("coefficients", "averaging"))
    try:
        return SolverOptions(newton_tol=cfg.get_float("solver", "newton_tol", 1e-12),
                             newton_max=cfg.get_int("solver", "newton_max", 30),
                             linear_tol=cfg.get_float("solver", "linear_tol", 1e-10),
                             averaging=averaging)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _space_time(cfg, problem, section, key, time_key):
    """Separable generator from ``key`` and ``time_key``; None if ``key`` is absent."""
    if not cfg.has(section, key):
        return None
    try:
        name, params = cfg.get_spec(section, key)
        spatial = make_generator(name, Lx=problem.Lx, Ly=problem.Ly, **params)
        name, params = cfg.get_spec(section, time_key, default="one")
        temporal = make_time_factor(name, **params)
    except ConfigError as exc:
        if exc.line is not None:
            raise
        raise ConfigError(str(exc), key=key, line=cfg.line(section, key)) from None
    return Separable(spatial, temporal)


def _mask(problem, grid):
    return problem.mask(grid) if problem.well_mask is not None else None


def _configured_control(cfg, problem, grid, dt, nt):
    gen = _space_time(cfg, problem, "wells", "control", "control_time")
    mask = _mask(problem, grid)
    if gen is None:
        return Control.zeros(grid, dt, nt, mask), None
    return Control.sample(grid, dt, nt, gen, mask), gen


def _validate(ctx, problem):
    cfg = ctx.cfg
    rep = validate_hypotheses(problem.coefficients,
                              n_samples=cfg.get_int("coefficients", "n_samples", 10001),
                              tol=cfg.get_float("coefficients", "tol", 1e-6))
    write_json(ctx.path("validation.json"), rep.as_dict())
    if not rep.passed:
        failed = [f"{c.name} (margin {c.margin:.3e} at r={c.witness:.6g})"
                  for c in rep.failed_clauses()]
        if rep.derivative_error > rep.tol:
            failed.append(f"derivative consistency error {rep.derivative_error:.3e}")
        raise HypothesisError("coefficient hypotheses fail: " + "; ".join(failed))
    return rep


def _targets(cfg, problem, grid, dt, nt, opts):
    """(targets, generating control or None)."""
    source = cfg.get("targets", "source", "fields")
    if source == "fields":
        return problem.targets(grid, dt, nt), None
    if source != "control":
        raise ConfigError(f"unknown target source '{source}'", key="source",
                          line=cfg.line("targets", "source"))
    gen = _space_time(cfg, problem, "targets", "control", "control_time")
    if gen is None:
        raise ConfigError("source = control needs [targets] control", key="control")
    f_true = Control.sample(grid, dt, nt, gen, _mask(problem, grid))
    res = solve_forward(problem, f_true, opts)
    return (res.u.values, res.p.values), f_true


def _initial_control(cfg, problem, grid, dt, nt, seed, start):
    """First start follows [optimize] f0; later starts are seeded random fields."""
    mask = _mask(problem, grid)
    kind = cfg.get("optimize", "f0", "zero")
    if start > 0 and kind != "random":
        kind = "random"
    if kind == "zero":
        return Control.zeros(grid, dt, nt, mask)
    if kind == "random":
        amp = cfg.get_float("optimize", "f0_amp", 1.0)
        rng = np.random.default_rng(seed)
        f = Control.zeros(grid, dt, nt, mask)
        return f.from_flat(rng.uniform(-amp, amp, size=f.flat().size))
    name, params = cfg.get_spec("optimize", "f0")
    try:
        gen = Separable(make_generator(name, Lx=problem.Lx, Ly=problem.Ly, **params))
    except ConfigError as exc:
        raise ConfigError(str(exc), key="f0", line=cfg.line("optimize", "f0")) from None
    return Control.sample(grid, dt, nt, gen, mask)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(ctx):
    cfg = _require_config(ctx)
    problem = build_problem(cfg)
    _validate(ctx, problem)
    grid, dt, nt = _mesh(cfg, problem)
    opts = _solver_options(cfg)
    f, _ = _configured_control(cfg, problem, grid, dt, nt)
    res = solve_forward(problem, f, opts)
    every = cfg.get_int("solver", "snapshot_every", 1)
    write_trajectory(ctx.path("u", ""), res.u, "u", every)
    write_trajectory(ctx.path("p", ""), res.p, "p", every)
    write_table(ctx.path("steps.csv"), res.diagnostics)
    cost = evaluate_cost(res.u, res.p, f, problem)
    summary = {
        "grid": {"nx": grid.nx, "ny": grid.ny, "nt": nt, "dt": dt},
        "cost": cost.as_dict(),
        "newton_iterations_total": int(sum(res.newton_iterations)),
        "newton_iterations_max": int(max(res.newton_iterations)),
        "pressure_residual_max": max(d["pressure_residual"] for d in res.diagnostics),
        "newton_residual_max": max(d["newton_residual"] for d in res.diagnostics),
        "final_u_l2": lp_norm(grid, res.u.values[-1]),
        "final_p_l2": lp_norm(grid, res.p.values[-1]),
    }
    write_json(ctx.path("summary.json"), summary)
    from .plotting import plot_field
    plot_field(ctx.path("figures", "u_final.png"), grid, res.u.values[-1], f"u at t={problem.T:g}")
    plot_field(ctx.path("figures", "p_final.png"), grid, res.p.values[-1], f"p at t={problem.T:g}")
    return summary


def _history_rows(history, problem):
    J0 = history[0].cost.total
    rows = []
    for h in history:
        c = h.cost
        rows.append({
            "iteration": h.iteration, "J": c.total, "tracking_u": c.tracking_u,
            "tracking_p": c.tracking_p, "penal_f": c.penal_f, "penal_dtf": c.penal_dtf,
            "grad_norm": h.grad_norm, "step": h.step, "armijo_lhs": h.armijo_lhs,
            "armijo_rhs": h.armijo_rhs, "backtracks": h.backtracks,
            "f_norm_pow": 2 * c.penal_f / problem.beta1, "f_bound": 2 * J0 / problem.beta1,
            "dtf_norm_sq": 2 * c.penal_dtf / problem.beta2, "dtf_bound": 2 * J0 / problem.beta2,
        })
    return rows


def cmd_optimize(ctx):
    cfg = _require_config(ctx)
    problem = build_problem(cfg)
    _validate(ctx, problem)
    grid, dt, nt = _mesh(cfg, problem)
    opts = _solver_options(cfg)
    try:
        oopts = OptOptions(max_outer=cfg.get_int("optimize", "max_outer", 200),
                           grad_tol=cfg.get_float("optimize", "grad_tol", 1e-6),
                           step0=cfg.get_float("optimize", "step0", 1.0),
                           armijo_c=cfg.get_float("optimize", "armijo_c", 1e-4),
                           history_len=cfg.get_int("optimize", "history_len", 10))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    targets, f_true = _targets(cfg, problem, grid, dt, nt, opts)
    starts = cfg.get_int("optimize", "starts", 1)
    if starts < 1:
        raise ConfigError("starts must be >= 1", key="starts", line=cfg.line("optimize", "starts"))

    def job(k):
        f0 = _initial_control(cfg, problem, grid, dt, nt, ctx.args.seed + k, k)
        stalled = None
        try:
            res = minimize(problem, f0, oopts, opts, targets)
        except StallError as exc:
            res, stalled = exc.result, str(exc)
        rows = _history_rows(res.history, problem)
        write_table(ctx.path(f"start_{k:02d}", "history.csv"), rows)
        return res, stalled

    runs = list(ctx.executor.map(job, range(starts)))
    finals = [r.history[-1].cost.total for r, _ in runs]
    best = int(np.argmin(finals))
    res, stalled = runs[best]
    write_control(ctx.path("f_opt", ""), res.f_opt)
    summary = {
        "best_start": best,
        "starts": [{"start": k, "J_final": r.history[-1].cost.total, "J_initial":
                    r.history[0].cost.total, "iterations": len(r.history) - 1,
                    "converged": r.converged, "stalled": s} for k, (r, s) in enumerate(runs)],
        "cost": res.history[-1].cost.as_dict(),
        "grad_norm": res.history[-1].grad_norm,
    }
    if f_true is not None:
        J_true = cost_of(problem, f_true, opts, targets)[0].total
        summary["J_generating_control"] = J_true
        summary["J_gap"] = finals[best] - J_true
    write_json(ctx.path("summary.json"), summary)
    from .plotting import plot_field, plot_history
    plot_history(ctx.path("figures", "history.png"),
                 {f"start {k}": [h.cost.total for h in r.history] for k, (r, _) in enumerate(runs)})
    plot_field(ctx.path("figures", "f_opt_final.png"), grid, res.f_opt.values[-1],
               "optimal control, last slot")
    if stalled:
        raise StallError(stalled)
    if not res.converged:
        log.warning("best start did not reach grad_tol within %d iterations", oopts.max_outer)
    return summary


def cmd_verify(ctx):
    cfg = _require_config(ctx)
    problem = build_problem(cfg)
    _validate(ctx, problem)
    grid, dt, nt = _mesh(cfg, problem)
    opts = _solver_options(cfg)
    targets, _ = _targets(cfg, problem, grid, dt, nt, opts)
    f, _ = _configured_control(cfg, problem, grid, dt, nt)
    probes = random_probes(f, cfg.get_int("verify", "probes", 20), ctx.args.seed)
    steps = cfg.get_floats("verify", "steps", (1e-2, 1e-3, 1e-4))
    if len(steps) < 3 or min(steps) <= 0:
        raise ConfigError("steps needs at least three positive values", key="steps",
                          line=cfg.line("verify", "steps"))

    chunks = [probes[i::ctx.args.jobs] for i in range(ctx.args.jobs)]
    parts = list(ctx.executor.map(
        lambda ch: gradient_check(problem, f, ch, steps, opts, targets) if ch else [], chunks))
    order = {p: m for m, p in enumerate(probes)}
    rows = sorted((r for part in parts for r in part), key=lambda r: order[(r["k"], r["i"], r["j"])])
    for m, r in enumerate(rows):
        r["probe"] = m
    write_table(ctx.path("gradient_check.csv"), rows)
    worst = max(r["rel_err"] for r in rows)
    summary = {"probes": len(rows), "max_rel_err": worst, "tolerance": GRADIENT_TOL,
               "passed": worst <= GRADIENT_TOL}
    write_json(ctx.path("summary.json"), summary)
    if not summary["passed"]:
        raise DeadOilError(f"adjoint gradient disagrees with finite differences "
                           f"(max relative error {worst:.3e} > {GRADIENT_TOL:.0e})")
    return summary


def cmd_audit(ctx):
    cfg = _require_config(ctx)
    problem = build_problem(cfg)
    _validate(ctx, problem)
    opts = _solver_options(cfg)
    gen = _space_time(cfg, problem, "wells", "control", "control_time")
    if gen is None:
        raise ConfigError("audit needs a nonzero [wells] control", key="control")
    drift = cfg.get_float("audit", "drift", DRIFT)
    levels = refinement_levels(cfg.get_int("audit", "base_n", 16),
                               cfg.get_int("audit", "base_nt", 50), ctx.args.levels)
    seed, ex = ctx.args.seed, ctx.executor

    results = solve_levels(problem, gen, levels, opts, ex)
    reports = [
        check_energy_estimate(problem, [gen, Scaled(gen, 2.0)], levels, opts, drift, ex),
        refine([check_hessian_estimate(r, problem) for r in results], drift),
        refine([check_grad_ratio(r) for r in results], drift),
        multiplicative_study(random_dirichlet_fields(cfg.get_int("audit", "n_fields", 100), seed,
                                                     Lx=problem.Lx, Ly=problem.Ly),
                             [n for n, _ in levels], drift, problem.Lx, problem.Ly),
    ]
    regularity = regularity_audit(problem, gen, levels, opts,
                                  n_pairs=cfg.get_int("audit", "n_pairs", 20000), seed=seed,
                                  drift=drift, executor=ex, results=results)
    C, gron = check_gronwall(results[-1])

    est_rows = []
    for rep in reports:
        for s in rep.refinement_series:
            est_rows.append({"estimate": rep.name, "control": s.get("control", 0),
                             "h": s["h"], "dt": s.get("dt", ""), "lhs": s.get("lhs", ""),
                             "rhs_core": s.get("rhs_core", ""), "inferred_c": s["inferred_c"]})
    write_table(ctx.path("estimates.csv"), est_rows)
    write_table(ctx.path("regularity.csv"), regularity.rows,
                ["level", "n", "nt", "h", "dt", "group", "quantity", "value"])
    long_rows = [{"series": r["estimate"] + (f"[{r['control']}]" if r["control"] else ""),
                  "h": r["h"], "value": r["inferred_c"]} for r in est_rows]
    long_rows += [{"series": r["quantity"], "h": r["h"], "value": r["value"]}
                  for r in regularity.rows]
    write_table(ctx.path("plot_long.csv"), long_rows, ["series", "h", "value"])
    summary = {
        "levels": [list(lv) for lv in levels],
        "drift": drift,
        "estimates": {rep.name: {"verdict": rep.verdict, "inferred_c": rep.inferred_c,
                                 "notes": rep.notes} for rep in reports},
        "regularity": regularity.verdicts,
        "regularity_notes": regularity.notes,
        "holder_alpha_u": regularity.series("holder_alpha_u"),
        "holder_reference": 0.25,
        "gronwall": {"C": C, "holds": gron.holds, "margin": gron.margin},
    }
    write_json(ctx.path("summary.json"), summary)
    from .plotting import plot_audit
    plot_audit(ctx.path("figures", "regularity.png"), regularity.rows)
    return summary


def cmd_mms(ctx):
    case = manufactured_problem(ctx.args.case)
    if ctx.args.levels < 2:
        raise ConfigError("mms needs --levels >= 2", key="levels")
    spatial = spatial_study(case, levels=ctx.args.levels, executor=ctx.executor)
    temporal = temporal_study(case, executor=ctx.executor)
    write_table(ctx.path("convergence_space.csv"), spatial)
    write_table(ctx.path("convergence_time.csv"), temporal)
    orders_s = [r[k] for r in spatial[1:] for k in ("order_u", "order_p")]
    orders_t = [r[k] for r in temporal[1:] for k in ("order_u", "order_p")]
    summary = {"case": case.name, "expressions": {k: str(v) for k, v in case.expressions.items()},
               "min_spatial_order": min(orders_s), "min_temporal_order": min(orders_t)}
    write_json(ctx.path("summary.json"), summary)
    from .plotting import plot_convergence
    plot_convergence(ctx.path("figures", "convergence.png"), spatial, temporal)
    return summary


COMMANDS = {
    "simulate": (cmd_simulate, "integrate the coupled system for the configured control"),
    "optimize": (cmd_optimize, "minimize the objective over the control"),
    "verify": (cmd_verify, "check hypotheses and the adjoint gradient"),
    "audit": (cmd_audit, "audit estimates and regularity norms under refinement"),
    "mms": (cmd_mms, "manufactured-solution convergence study"),
}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="deadoil", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"deadoil {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, text) in COMMANDS.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="INI run configuration")
        p.add_argument("--out", required=True, help="run directory")
        p.add_argument("--jobs", type=int, default=1, help="concurrent jobs")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--levels", type=int, default=3, help="refinement levels")
        p.add_argument("--case", default="M1", help="manufactured case (mms)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def run(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.jobs < 1:
        print("deadoil: error: --jobs must be >= 1", file=sys.stderr)
        return 2

    os.makedirs(args.out, exist_ok=True)
    options = {"seed": args.seed, "levels": args.levels}
    if args.command == "mms":
        options["case"] = args.case
    manifest = {"tool": "deadoil", "version": __version__, "subcommand": args.command,
                "options": dict(options, jobs=args.jobs), "config_path": args.config,
                "config_text": None, "config": None}
    start = time.perf_counter()
    cfg = None
    code, error = 0, None
    try:
        if args.config is not None:
            cfg = parse_config(args.config)
            manifest["config_text"] = cfg.text
            manifest["config"] = cfg.as_dict()
        with ThreadPoolExecutor(max_workers=args.jobs) as ex:
            COMMANDS[args.command][0](RunContext(args, cfg, ex))
    except ConfigError as exc:
        code, error = 2, f"configuration error: {exc}"
    except DeadOilError as exc:
        code, error = 1, f"{type(exc).__name__}: {exc}"
    except MemoryError as exc:
        code, error = 1, f"MemoryError: {exc}"
    except Exception as exc:  # recorded in the manifest, then reported
        log.exception("unexpected failure")
        code, error = 1, f"{type(exc).__name__}: {exc}"
    if error:
        print(f"deadoil: {error}", file=sys.stderr)
    manifest.update({
        "input_hash": input_hash(manifest["config_text"], args.command, options),
        "status": "ok" if code == 0 else "error",
        "exit_code": code,
        "error": error,
        "wall_time": time.perf_counter() - start,
        "outputs": output_hashes(args.out),
    })
    write_manifest_atomic(os.path.join(args.out, "manifest.json"), manifest)
    return code


def main():
    return run(sys.argv[1:])
