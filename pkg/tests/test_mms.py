import numpy as np
import pytest
import sympy as sy

from deadoil.errors import ConfigError
from deadoil.mms import CASES, manufactured_problem, run_case

x, y, t, r = sy.symbols("x y t r", real=True)


@pytest.mark.parametrize("name", CASES)
def test_sources_satisfy_the_equations(name):
    case = manufactured_problem(name)
    e = case.expressions
    u, p = e["u"], e["p"]
    phi, g, d = (sy.Lambda(r, e[k]) for k in ("phi", "g", "d"))
    grad = lambda w: (sy.diff(w, x), sy.diff(w, y))
    div = lambda v: sy.diff(v[0], x) + sy.diff(v[1], y)
    res_u = sy.diff(u, t) - div(grad(phi(u))) - div([g(u) * c for c in grad(p)])
    res_p = sy.diff(p, t) - div([d(u) * c for c in grad(p)])
    fu = sy.lambdify((x, y, t), res_u, "numpy")
    fp = sy.lambdify((x, y, t), res_p, "numpy")
    rng = np.random.default_rng(0)
    X, Y = rng.random(200), rng.random(200)
    for T in (0.0, 0.03, 0.1):
        assert np.max(np.abs(fu(X, Y, T) - case.s_u(X, Y, T))) <= 1e-10
        assert np.max(np.abs(fp(X, Y, T) - case.f(X, Y, T))) <= 1e-10


@pytest.mark.parametrize("name", CASES)
def test_exact_fields_vanish_on_boundary(name):
    case = manufactured_problem(name)
    s = np.linspace(0, 1, 21)
    for T in (0.0, 0.05, 0.1):
        for fn in (case.exact_u, case.exact_p):
            vals = np.concatenate([fn(s, 0 * s, T), fn(s, 0 * s + 1, T),
                                   fn(0 * s, s, T), fn(0 * s + 1, s, T)])
            assert np.max(np.abs(vals)) < 1e-14


def test_m1_initial_state_and_sources():
    case = manufactured_problem("M1")
    X, Y = np.meshgrid(np.linspace(0, 1, 9), np.linspace(0, 1, 9))
    assert not np.any(case.exact_u(X, Y, 0.0)) and not np.any(case.exact_p(X, Y, 0.0))
    assert np.max(np.abs(case.f(X, Y, 0.0))) > 0.5


def test_nonlinear_case_has_nonconstant_coefficients():
    e = manufactured_problem("M2").expressions
    for k in ("g", "d"):
        assert e[k].free_symbols == {r}
    assert sy.diff(e["phi"], r, 2) != 0


def test_unknown_case():
    with pytest.raises(ConfigError, match="unknown manufactured case"):
        manufactured_problem("M9")


def test_coarse_runs_are_accurate():
    for name in CASES:
        _, eu, ep = run_case(manufactured_problem(name), 16, 25)
        assert eu < 1e-3 and ep < 1e-3
