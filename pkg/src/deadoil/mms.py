"""Manufactured solutions and convergence studies for the forward solver.

Sources are obtained by substituting the exact fields into the two
equations with sympy and lambdifying the result.
"""
from dataclasses import dataclass
import math

import numpy as np
import sympy as sy

from .cost import Control
from .discretization import Grid2D
from .errors import ConfigError
from .forward import SolverOptions, solve_forward
from .laws import make_law
from .model import CoefficientSet, ProblemSpec

x, y, t, r = sy.symbols("x y t r", real=True)


def _symbolic_cases():
    pi = sy.pi
    return {
        "M1": dict(
            phi=r, g=sy.Integer(1), d=sy.Integer(1),
            laws=(make_law("identity"), make_law("constant", c=1.0), make_law("constant", c=1.0)),
            bounds=dict(c1=1.0, c2=10.0, c3=1.0, delta_phi=1.0),
            u=t * x * (1 - x) * y * (1 - y),
            p=t * sy.sin(pi * x) * sy.sin(pi * y),
            T=0.1,
        ),
        "M2": dict(
            phi=r + sy.Rational(1, 4) * sy.sin(r),
            g=sy.Rational(1, 2) / (1 + r ** 2),
            d=sy.Rational(5, 4) + sy.Rational(1, 4) * sy.cos(r),
            laws=(make_law("affine_plus_sine", c=0.25), make_law("rational", a=0.5, b=1.0),
                  make_law("affine_plus_cosine", a=1.25, b=0.0, c=0.25)),
            bounds=dict(c1=1.0, c2=3.0, c3=1.25, delta_phi=0.5),
            u=sy.Rational(1, 2) * (1 + sy.sin(5 * t)) * sy.sin(pi * x) * 4 * y * (1 - y),
            p=sy.cos(3 * t) * 4 * x * (1 - x) * sy.sin(pi * y),
            T=0.1,
        ),
    }


CASES = tuple(_symbolic_cases())


class _Lambdified:
    """Picklable-by-recipe wrapper around a lambdified (x, y, t) expression."""

    def __init__(self, expr):
        self.expr = expr
        self._fn = sy.lambdify((x, y, t), expr, "numpy")

    def __call__(self, X, Y, T):
        return np.broadcast_to(np.asarray(self._fn(X, Y, T), dtype=float), np.shape(X))


class _AtZero:
    def __init__(self, fn):
        self.fn = fn

    def __call__(self, X, Y):
        return self.fn(X, Y, 0.0)


@dataclass
class ManufacturedCase:
    name: str
    problem: ProblemSpec
    f: _Lambdified
    s_u: _Lambdified
    exact_u: _Lambdified
    exact_p: _Lambdified
    expressions: dict

    def control(self, grid, nt):
        return Control.sample(grid, self.problem.T / nt, nt, self.f)


def manufactured_problem(case_id):
    """Problem, sources and exact fields of a registered manufactured case."""
    cases = _symbolic_cases()
    if case_id not in cases:
        raise ConfigError(f"unknown manufactured case '{case_id}'; known: {sorted(cases)}")
    c = cases[case_id]
    u, p = c["u"], c["p"]
    phi_u = c["phi"].subs(r, u)
    g_u = c["g"].subs(r, u)
    d_u = c["d"].subs(r, u)
    s_u = (sy.diff(u, t) - (sy.diff(phi_u, x, 2) + sy.diff(phi_u, y, 2))
           - (sy.diff(g_u * sy.diff(p, x), x) + sy.diff(g_u * sy.diff(p, y), y)))
    f = sy.diff(p, t) - (sy.diff(d_u * sy.diff(p, x), x) + sy.diff(d_u * sy.diff(p, y), y))
    exact_u, exact_p = _Lambdified(u), _Lambdified(p)
    phi_law, g_law, d_law = c["laws"]
    coeffs = CoefficientSet.from_laws(phi_law, g_law, d_law, validation_range=(-2.0, 2.0),
                                      **c["bounds"])
    zero = _Lambdified(sy.Integer(0))
    problem = ProblemSpec(Lx=1.0, Ly=1.0, T=c["T"], coefficients=coeffs,
                          u0=_AtZero(exact_u), p0=_AtZero(exact_p), U=zero, P=zero,
                          beta1=1.0, beta2=1.0, q0=1.5)
    return ManufacturedCase(case_id, problem, _Lambdified(f), _Lambdified(s_u),
                            exact_u, exact_p,
                            {"u": u, "p": p, "phi": c["phi"], "g": c["g"], "d": c["d"],
                             "f": f, "s_u": s_u})


# ---------------------------------------------------------------------------
# convergence studies
# ---------------------------------------------------------------------------

def _l2_error(traj, exact):
    grid = traj.grid
    X, Y = grid.mesh()
    s = 0.0
    for n in range(1, traj.nt + 1):
        s += float(np.sum((traj.values[n] - exact(X, Y, n * traj.dt)) ** 2))
    return math.sqrt(s * grid.hx * grid.hy * traj.dt)


def run_case(case, n, nt, opts=SolverOptions()):
    grid = Grid2D(n, n)
    res = solve_forward(case.problem, case.control(grid, nt), opts, s_u=case.s_u)
    return res, _l2_error(res.u, case.exact_u), _l2_error(res.p, case.exact_p)


def spatial_study(case, levels=3, base_n=16, base_nt=25, opts=SolverOptions(), executor=None):
    """Errors on n = base_n * 2^k with nt = base_nt * 4^k, i.e. dt proportional to h^2."""
    specs = [(base_n * 2 ** k, base_nt * 4 ** k) for k in range(levels)]

    def job(spec):
        _, eu, ep = run_case(case, *spec, opts)
        return eu, ep

    results = list(executor.map(job, specs)) if executor else [job(s) for s in specs]
    rows = []
    for k, ((n, nt), (eu, ep)) in enumerate(zip(specs, results)):
        h = 1.0 / (n + 1)
        row = {"n": n, "h": h, "nt": nt, "dt": case.problem.T / nt,
               "err_u": eu, "err_p": ep, "order_u": float("nan"), "order_p": float("nan")}
        if k:
            prev = rows[-1]
            row["order_u"] = math.log(prev["err_u"] / eu) / math.log(prev["h"] / h)
            row["order_p"] = math.log(prev["err_p"] / ep) / math.log(prev["h"] / h)
        rows.append(row)
    return rows


def temporal_study(case, n=64, nts=(25, 50, 100, 200), opts=SolverOptions(), executor=None):
    """Self-convergence in time on a fixed grid.

    The spatial error is identical for every run on the same grid, so the
    differences between successive halvings of dt isolate the temporal
    error: order = log2(|x_dt - x_dt/2| / |x_dt/2 - x_dt/4|).
    """
    def job(nt):
        res, _, _ = run_case(case, n, nt, opts)
        return res

    runs = list(executor.map(job, nts)) if executor else [job(k) for k in nts]
    rows = []
    diffs = []
    for k in range(len(nts) - 1):
        a, b = runs[k], runs[k + 1]
        ratio = nts[k + 1] // nts[k]
        du = _coarse_diff(a.u, b.u, ratio)
        dp = _coarse_diff(a.p, b.p, ratio)
        diffs.append((du, dp))
    for k, nt in enumerate(nts[:-1]):
        du, dp = diffs[k]
        row = {"nt": nt, "dt": case.problem.T / nt, "diff_u": du, "diff_p": dp,
               "order_u": float("nan"), "order_p": float("nan")}
        if k:
            pu, pp = diffs[k - 1]
            row["order_u"] = math.log2(pu / du)
            row["order_p"] = math.log2(pp / dp)
        rows.append(row)
    return rows


def _coarse_diff(coarse, fine, ratio):
    grid = coarse.grid
    d = coarse.values[1:] - fine.values[ratio::ratio]
    return math.sqrt(float(np.sum(d ** 2)) * grid.hx * grid.hy * coarse.dt)
