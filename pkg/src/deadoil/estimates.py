"""Empirical audits of a-priori inequalities and regularity norms.

The inequalities carry unspecified constants, so each audit computes both
sides on solver output, records the ratio as an inferred constant and asks
whether it stays put under grid refinement.  All constants are specific to
the rectangular domain used here.
"""
from dataclasses import dataclass, field
import math

import numpy as np

from .cost import Control
from .discretization import (Grid2D, Trajectory, grad_norm, hessian_pow_sum, holder_estimate,
                             lp_norm, spacetime_grad, spacetime_norms)
from .errors import DegenerateCaseError
from .forward import SolverOptions, solve_forward

DRIFT = 1.25
HESSIAN_NOTE = "rhs_core carries +1 in place of the unquantified data-dependent constant"
RECTANGLE_NOTE = "constants are specific to the rectangular domain"


@dataclass
class EstimateReport:
    name: str
    lhs: float
    rhs_core: float
    inferred_c: float
    refinement_series: list = field(default_factory=list)
    verdict: str = "stable"
    notes: list = field(default_factory=list)

    def as_dict(self):
        return {"name": self.name, "lhs": self.lhs, "rhs_core": self.rhs_core,
                "inferred_c": self.inferred_c, "verdict": self.verdict,
                "refinement_series": self.refinement_series, "notes": self.notes}


def drift_verdict(values, drift=DRIFT):
    """'violated' if any value is not finite, else stable/drifting by max/min."""
    v = np.asarray(values, dtype=float)
    if v.size == 0 or not np.all(np.isfinite(v)):
        return "violated"
    lo, hi = float(np.min(np.abs(v))), float(np.max(np.abs(v)))
    if hi == 0.0:
        return "stable"
    if lo == 0.0:
        return "drifting"
    return "stable" if hi / lo <= drift else "drifting"


def _ratio(lhs, rhs):
    if rhs > 0:
        return lhs / rhs
    return 0.0 if lhs == 0 else math.inf


def _levels(levels):
    levels = [tuple(int(v) for v in lv) for lv in levels]
    for n, nt in levels:
        if n < 2 or nt < 1:
            raise ValueError(f"bad refinement level {(n, nt)}")
    return levels


def refinement_levels(base_n=16, base_nt=50, k=3, time_ratio=2):
    """[(base_n 2^j, base_nt time_ratio^j) for j < k]."""
    return [(base_n * 2 ** j, base_nt * time_ratio ** j) for j in range(k)]


def level_control(problem, control_gen, grid, nt):
    mask = problem.mask(grid) if problem.well_mask is not None else None
    return Control.sample(grid, problem.T / nt, nt, control_gen, mask)


def solve_level(problem, control_gen, level, opts=SolverOptions()):
    n, nt = level
    control = level_control(problem, control_gen, Grid2D(n, n, problem.Lx, problem.Ly), nt)
    return solve_forward(problem, control, opts), control


# ---------------------------------------------------------------------------
# energy estimate for the pressure equation
# ---------------------------------------------------------------------------

def energy_sides(p_traj, f, p0_field):
    grid = p_traj.grid
    lhs = max(lp_norm(grid, w) ** 2 for w in p_traj.values) \
        + p_traj.dt * sum(grad_norm(grid, w) ** 2 for w in p_traj.values[1:])
    f_l2 = float(np.sum(f.values ** 2)) * grid.hx * grid.hy * f.dt
    rhs = f_l2 + lp_norm(grid, p0_field) ** 2
    return lhs, rhs


def check_energy_estimate(problem, controls, levels, opts=SolverOptions(), drift=DRIFT,
                          executor=None):
    """sup_n |p_n|^2 + sum dt |grad p_n|^2 against |f|^2_{Q_T} + |p0|^2.

    ``controls`` are space-time generators f(x, y, t); each is solved on
    every level.  The verdict is the worst over controls of the drift of the
    inferred constant across levels.
    """
    levels = _levels(levels)
    if len(controls) < 2:
        raise ValueError("need at least 2 controls")
    if len(levels) < 2:
        raise ValueError("need at least 2 refinement levels")
    jobs = [(ci, lv) for ci in range(len(controls)) for lv in levels]

    def job(item):
        ci, lv = item
        res, f = solve_level(problem, controls[ci], lv, opts)
        lhs, rhs = energy_sides(res.p, f, res.p.values[0])
        return ci, lv, res.p.grid.hx, f.dt, lhs, rhs

    out = list(executor.map(job, jobs)) if executor else [job(j) for j in jobs]
    series = []
    for ci, lv, h, dt, lhs, rhs in out:
        if rhs == 0:
            raise DegenerateCaseError("zero control and zero initial pressure: 0/0 constant")
        series.append({"control": ci, "n": lv[0], "nt": lv[1], "h": h, "dt": dt,
                       "lhs": lhs, "rhs_core": rhs, "inferred_c": lhs / rhs})
    verdicts = [drift_verdict([s["inferred_c"] for s in series if s["control"] == ci], drift)
                for ci in range(len(controls))]
    verdict = _worst(verdicts)
    last = series[len(levels) - 1]
    return EstimateReport("energy_estimate", last["lhs"], last["rhs_core"], last["inferred_c"],
                          series, verdict, [RECTANGLE_NOTE])


def _worst(verdicts):
    for v in ("violated", "drifting"):
        if v in verdicts:
            return v
    return "stable"


# ---------------------------------------------------------------------------
# per-result checks
# ---------------------------------------------------------------------------

def check_hessian_estimate(result, problem=None):
    """sup |grad p|^2 + int |D^2 p|^2 against |grad p|_4^4 + |grad u|_4^4 + 1."""
    p = result.p
    grid, dt = p.grid, p.dt
    if p.nt < 2:
        raise ValueError("need nt >= 2")
    lhs = max(grad_norm(grid, w) ** 2 for w in p.values) \
        + dt * sum(hessian_pow_sum(grid, w, 2.0) for w in p.values[1:])
    rhs = spacetime_grad(p, 4.0) ** 4 + spacetime_grad(result.u, 4.0) ** 4 + 1.0
    c = lhs / rhs
    return EstimateReport("hessian_estimate", lhs, rhs, c,
                          [{"h": grid.hx, "dt": dt, "inferred_c": c}], "stable",
                          [HESSIAN_NOTE, RECTANGLE_NOTE])


def check_grad_ratio(result):
    """|grad u|_{4,Q_T} / |grad p|_{4,Q_T}."""
    gu = spacetime_grad(result.u, 4.0)
    gp = spacetime_grad(result.p, 4.0)
    grid = result.u.grid
    notes = [RECTANGLE_NOTE]
    if gp == 0.0 and gu > 0.0:
        notes.append("grad p vanishes while grad u does not: u is driven by its initial "
                     "data alone, outside the regime where the bound applies")
        return EstimateReport("grad_ratio", gu, gp, math.inf,
                              [{"h": grid.hx, "dt": result.u.dt, "inferred_c": math.inf}],
                              "violated", notes)
    c = _ratio(gu, gp)
    return EstimateReport("grad_ratio", gu, gp, c,
                          [{"h": grid.hx, "dt": result.u.dt, "inferred_c": c}], "stable", notes)


def refine(reports, drift=DRIFT):
    """Merge single-level reports of one inequality into a refinement series."""
    series = [dict(s) for r in reports for s in r.refinement_series]
    cs = [s["inferred_c"] for s in series]
    verdict = "violated" if any(r.verdict == "violated" for r in reports) \
        else drift_verdict(cs, drift)
    last = reports[-1]
    notes = list(dict.fromkeys(n for r in reports for n in r.notes))
    return EstimateReport(last.name, last.lhs, last.rhs_core, last.inferred_c, series,
                          verdict, notes)


def study(check, problem, control_gen, levels, opts=SolverOptions(), drift=DRIFT,
          executor=None):
    """Run a per-result ``check`` on every level and merge the reports."""
    results = solve_levels(problem, control_gen, levels, opts, executor)
    return refine([check(r) for r in results], drift)


# ---------------------------------------------------------------------------
# multiplicative (Ladyzhenskaya) inequality
# ---------------------------------------------------------------------------

def multiplicative_ratio(grid, w):
    den = lp_norm(grid, w, 2.0) * grad_norm(grid, w, 2.0)
    return lp_norm(grid, w, 4.0) ** 2 / den


def check_multiplicative(grid, fields):
    """max over fields of |w|_4^2 / (|w|_2 |grad w|_2); zero fields are skipped."""
    ratios, notes = [], [RECTANGLE_NOTE]
    for k, w in enumerate(fields):
        if not np.any(w):
            notes.append(f"field {k} is zero and was skipped")
            continue
        ratios.append(multiplicative_ratio(grid, w))
    if len(ratios) < 10:
        raise ValueError("need at least 10 nonzero fields")
    k = int(np.argmax(ratios))
    w = [f for f in fields if np.any(f)][k]
    lhs = lp_norm(grid, w, 4.0) ** 2
    rhs = lp_norm(grid, w, 2.0) * grad_norm(grid, w, 2.0)
    return EstimateReport("multiplicative", lhs, rhs, float(ratios[k]),
                          [{"h": grid.hx, "inferred_c": float(ratios[k]),
                            "ratios": [float(x) for x in ratios]}], "stable", notes)


@dataclass(frozen=True)
class SineSeries:
    """sum_{k,l <= K} a_kl sin(k pi x / Lx) sin(l pi y / Ly)."""
    coeffs: tuple
    Lx: float = 1.0
    Ly: float = 1.0

    def __call__(self, X, Y, *_):
        out = np.zeros(np.shape(X))
        for k, row in enumerate(self.coeffs, start=1):
            sx = np.sin(k * np.pi * X / self.Lx)
            for m, a in enumerate(row, start=1):
                out += a * sx * np.sin(m * np.pi * Y / self.Ly)
        return out


def random_dirichlet_fields(n_fields, seed=0, modes=4, Lx=1.0, Ly=1.0):
    """Smooth random fields vanishing on the boundary, resolution independent."""
    rng = np.random.default_rng(seed)
    return [SineSeries(tuple(map(tuple, rng.standard_normal((modes, modes)))), Lx, Ly)
            for _ in range(n_fields)]


def multiplicative_study(generators, ns, drift=DRIFT, Lx=1.0, Ly=1.0):
    reports = []
    for n in ns:
        grid = Grid2D(n, n, Lx, Ly)
        reports.append(check_multiplicative(grid, [grid.sample(g) for g in generators]))
    return refine(reports, drift)


# ---------------------------------------------------------------------------
# discrete Gronwall
# ---------------------------------------------------------------------------

@dataclass
class GronwallResult:
    holds: bool
    margin: float
    first_violation: object = None
    inequality_holds: bool = True


def gronwall_verify(a, b, c, dt, rtol=1e-12):
    """Check the one-step inequality and the exponential bound it implies.

    The one-step inequality is a_{k+1} <= exp(b_k dt) (a_k + c_k dt), the
    integrating-factor form of a' <= b a + c; it contains the continuous
    equality case a = exp(B t) exactly.  If it holds for every k, then
    a_n <= (a_0 + sum_{k<n} dt c_k) exp(sum_{k<n} dt b_k) for every n.
    ``rtol`` only absorbs floating-point rounding.
    """
    a, b, c = (np.asarray(v, dtype=float) for v in (a, b, c))
    if a.ndim != 1 or len(a) < 2:
        raise ValueError("need a series of at least two values")
    if len(b) < len(a) - 1 or len(c) < len(a) - 1:
        raise ValueError("b and c must cover every step")
    if np.any(a < 0) or np.any(b < 0) or np.any(c < 0):
        raise ValueError("Gronwall input must be nonnegative")
    n = len(a) - 1
    b, c = b[:n], c[:n]
    step_bound = np.exp(b * dt) * (a[:-1] + c * dt)
    bad = a[1:] > step_bound * (1 + rtol)
    if bad.any():
        k = int(np.argmax(bad))
        return GronwallResult(False, float((step_bound[k] - a[k + 1]) / max(step_bound[k], 1e-300)),
                              first_violation=k, inequality_holds=False)
    bound = (a[0] + np.concatenate([[0.0], np.cumsum(c * dt)])) \
        * np.exp(np.concatenate([[0.0], np.cumsum(b * dt)]))
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.where(bound > 0, (bound - a) / bound, 0.0)
    margin = float(np.min(rel[1:]))
    return GronwallResult(bool(margin >= -rtol), margin)


def fit_gronwall_constant(a, G, dt, iters=200):
    """Smallest C with a_{k+1} <= exp(C (1 + G_k) dt) (a_k + C dt) for all k."""
    a, G = np.asarray(a, dtype=float), np.asarray(G, dtype=float)
    need = a[1:] > a[:-1]
    if not need.any():
        return 0.0
    lo = np.zeros(need.sum())
    hi = np.ones(need.sum())
    ak, ak1, gk = a[:-1][need], a[1:][need], G[:len(a) - 1][need]

    def ok(C):
        return ak1 <= np.exp(C * (1 + gk) * dt) * (ak + C * dt)

    while not np.all(ok(hi)):
        hi = np.where(ok(hi), hi, 2 * hi)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        good = ok(mid)
        hi = np.where(good, mid, hi)
        lo = np.where(good, lo, mid)
    return float(np.max(hi))


def gronwall_series(result):
    """Time-derivative energy a_n and |grad p_n|_{4}^4 from a forward result.

    a_n = |d_t u|^2 + |d_t p|^2 at t_n, n = 1..nt (backward differences).
    """
    u, p = result.u, result.p
    grid, dt = u.grid, u.dt
    du = np.diff(u.values, axis=0) / dt
    dp = np.diff(p.values, axis=0) / dt
    a = np.array([lp_norm(grid, x) ** 2 + lp_norm(grid, y) ** 2 for x, y in zip(du, dp)])
    G = np.array([grad_norm(grid, w, 4.0) ** 4 for w in p.values[1:]])
    return a, G


def check_gronwall(result, slack=1.0 + 1e-9):
    """Fit the Gronwall constant on solver output, then verify the conclusion."""
    a, G = gronwall_series(result)
    dt = result.u.dt
    C = fit_gronwall_constant(a, G, dt) * slack
    b = C * (1.0 + G)
    c = np.full_like(a, C)
    verdict = gronwall_verify(a, b, c, dt)
    return C, verdict


# ---------------------------------------------------------------------------
# regularity audit
# ---------------------------------------------------------------------------

INTEGRABILITY_QS = (1.05, 1.1, 1.25)
INTEGRABILITY_NOTE = ("grad_2q_ratio_p divides |grad p|_2q by |f|_2q + |p0|_{W1_2q}; "
                      "the pressure bound is stated with u0 in place of p0 and no constant")


def integrability_ratios(result, f):
    """|grad p|_{2q,Q_T} / (|f|_{2q,Q_T} + |p0|_{W^1_{2q}}) for each probed q."""
    grid, p0 = result.p.grid, result.p.values[0]
    out = {}
    for qq in INTEGRABILITY_QS:
        e = 2 * qq
        f_norm = float(np.sum(np.abs(f.values) ** e) * grid.hx * grid.hy * f.dt) ** (1.0 / e)
        data = f_norm + lp_norm(grid, p0, e) + grad_norm(grid, p0, e)
        out[f"grad_2q_ratio_p[q={qq}]"] = _ratio(spacetime_grad(result.p, e), data)
    return out


def regularity_quantities(result, q0, n_pairs=20000, seed=0):
    """Every audited norm for one forward result, as an ordered dict."""
    u, p = result.u, result.p
    grid, dt = u.grid, u.dt
    du = Trajectory(grid, dt, np.concatenate([[np.zeros(grid.shape)],
                                              np.diff(u.values, axis=0) / dt]))
    dp = Trajectory(grid, dt, np.concatenate([[np.zeros(grid.shape)],
                                              np.diff(p.values, axis=0) / dt]))
    hp = holder_estimate(p, n_pairs, seed)
    hu = holder_estimate(u, n_pairs, seed + 1)
    q = {}
    q["holder_alpha_p"] = hp.alpha_hat
    q["holder_const_p"] = hp.constant_hat
    q["grad4_u"] = spacetime_grad(u, 4.0)
    q["grad4_p"] = spacetime_grad(p, 4.0)
    q["w21_2_u"] = spacetime_norms(u, 2.0).w21
    q["w21_2_p"] = spacetime_norms(p, 2.0).w21
    q["sup_dt_u_l2"] = max(lp_norm(grid, w) for w in du.values[1:])
    q["sup_dt_p_l2"] = max(lp_norm(grid, w) for w in dp.values[1:])
    q["grad_dt_u_l2"] = spacetime_grad(du, 2.0)
    q["grad_dt_p_l2"] = spacetime_grad(dp, 2.0)
    q["holder_alpha_u"] = hu.alpha_hat
    q["holder_const_u"] = hu.constant_hat
    q["w21_2q0_u"] = spacetime_norms(u, 2 * q0).w21
    q["w21_2q0_p"] = spacetime_norms(p, 2 * q0).w21
    for qq in INTEGRABILITY_QS:
        q[f"grad_2q_p[q={qq}]"] = spacetime_grad(p, 2 * qq)
    return q


QUANTITY_GROUP = {
    "holder_alpha_p": "holder_p", "holder_const_p": "holder_p",
    "grad4_u": "gradient_l4", "grad4_p": "gradient_l4",
    "w21_2_u": "w21_2", "w21_2_p": "w21_2",
    "sup_dt_u_l2": "time_derivative", "sup_dt_p_l2": "time_derivative",
    "grad_dt_u_l2": "time_derivative", "grad_dt_p_l2": "time_derivative",
    "holder_alpha_u": "holder_u", "holder_const_u": "holder_u",
    "w21_2q0_u": "w21_2q0", "w21_2q0_p": "w21_2q0",
}


@dataclass
class AuditReport:
    rows: list
    verdicts: dict
    levels: list
    notes: list = field(default_factory=list)

    def series(self, quantity):
        return [r["value"] for r in self.rows if r["quantity"] == quantity]

    @property
    def all_bounded(self):
        return all(v == "bounded" for v in self.verdicts.values())


def bounded_verdict(values, drift=DRIFT):
    """Non-diverging if max <= drift * min over the levels after the coarsest."""
    v = np.asarray(values, dtype=float)
    tail = v[1:] if len(v) > 2 else v
    if not np.all(np.isfinite(tail)):
        return "diverging"
    hi, lo = float(np.max(tail)), float(np.min(tail))
    if hi == 0.0:
        return "bounded"
    return "bounded" if lo > 0 and hi <= drift * lo else "diverging"


def solve_levels(problem, control_gen, levels, opts=SolverOptions(), executor=None):
    """Forward results for every level, in level order."""
    levels = _levels(levels)

    def job(lv):
        return solve_level(problem, control_gen, lv, opts)[0]

    return list(executor.map(job, levels)) if executor else [job(lv) for lv in levels]


def regularity_audit(problem, control_gen, levels, opts=SolverOptions(), n_pairs=20000,
                     seed=0, drift=DRIFT, executor=None, results=None):
    """Tabulate every regularity quantity per level and judge each series.

    ``results`` may supply forward results already computed for ``levels``.
    """
    levels = _levels(levels)
    if len(levels) < 2:
        raise ValueError("need at least 2 refinement levels")
    if results is None:
        results = solve_levels(problem, control_gen, levels, opts, executor)

    def job(item):
        (n, nt), res = item
        table = regularity_quantities(res, problem.q0, n_pairs, seed)
        table.update(integrability_ratios(res, level_control(problem, control_gen,
                                                             res.u.grid, nt)))
        return table

    items = list(zip(levels, results))
    tables = list(executor.map(job, items)) if executor else [job(it) for it in items]
    rows = []
    for k, (res, table) in enumerate(zip(results, tables)):
        grid = res.u.grid
        for name, value in table.items():
            rows.append({"level": k, "n": grid.nx, "nt": res.u.nt, "h": grid.hx,
                         "dt": res.u.dt, "quantity": name,
                         "group": QUANTITY_GROUP.get(name, "higher_integrability"), "value": value})
    verdicts = {name: bounded_verdict([t[name] for t in tables], drift) for name in tables[0]}
    return AuditReport(rows, verdicts, levels, [RECTANGLE_NOTE, INTEGRABILITY_NOTE])


@dataclass(frozen=True)
class Scaled:
    """factor * gen(x, y, t)"""
    gen: object
    factor: float

    def __call__(self, X, Y, t):
        return self.factor * self.gen(X, Y, t)
