"""Gradient of the discrete objective and descent over the control.

The gradient is the exact transpose of the linearised time stepping: one
reverse sweep over the stored forward states, transposing the saturation
Newton Jacobian and the (symmetric) pressure operator step by step.
"""
from dataclasses import dataclass, field
import logging

import numpy as np
import scipy.sparse.linalg as spla

from .cost import evaluate_cost, penalty_gradient
from .discretization import diffuse_coefficient_adjoint, flux_divergence
from .errors import DeadOilError, StallError
from .forward import (SolverOptions, pressure_matrix, saturation_jacobian, solve_forward)

log = logging.getLogger(__name__)

# bytes of stored state allowed before refusing to run the reverse sweep
MAX_CHECKPOINT_BYTES = 2 * 1024 ** 3


@dataclass
class GradientEvaluation:
    cost: object
    gradient: object
    forward: object


def cost_of(problem, f, opts=SolverOptions(), targets=None):
    fwd = solve_forward(problem, f, opts)
    return evaluate_cost(fwd.u, fwd.p, f, problem, targets), fwd


def cost_and_gradient(problem, f, opts=SolverOptions(), targets=None):
    """Objective breakdown and its gradient with respect to every control value."""
    grid, dt, nt = f.grid, f.dt, f.nt
    need = 2 * (nt + 1) * grid.shape[0] * grid.shape[1] * 8
    if need > MAX_CHECKPOINT_BYTES:
        raise MemoryError(f"storing {need / 1e9:.1f} GB of forward states; use fewer steps")
    if targets is None:
        targets = problem.targets(grid, dt, nt)
    fwd = solve_forward(problem, f, opts)
    cost = evaluate_cost(fwd.u, fwd.p, f, problem, targets)
    U, P = targets
    u, p = fwd.u.values, fwd.p.values
    coeffs = problem.coefficients
    avg = opts.averaging
    w = dt * grid.hx * grid.hy
    interior = ~grid.boundary

    ubar = w * (u - U)
    pbar = w * (p - P)
    ubar[0] = 0.0
    pbar[0] = 0.0
    ubar[:, grid.boundary] = 0.0
    pbar[:, grid.boundary] = 0.0
    fbar = np.zeros_like(f.values)

    for n in range(nt - 1, -1, -1):
        # saturation step: R(u_{n+1}; u_n, p_{n+1}) = 0
        J = saturation_jacobian(grid, u[n + 1], dt, coeffs)
        mu = grid.embed(spla.splu(J.T.tocsc()).solve(grid.interior(ubar[n + 1])))
        g_n = np.asarray(coeffs.g(u[n]), dtype=float) * np.ones(grid.shape)
        dg_n = np.asarray(coeffs.dg(u[n]), dtype=float) * np.ones(grid.shape)
        ubar[n] += mu + dt * dg_n * diffuse_coefficient_adjoint(grid, mu, p[n + 1], g_n, avg)
        # flux_divergence(g, .) is symmetric on interior fields
        pbar[n + 1] += dt * _flux_adjoint(grid, g_n, mu, avg)

        # pressure step: (I - dt A(d(u_n))) p_{n+1} = p_n + dt f_{n+1}
        M = pressure_matrix(grid, u[n], dt, coeffs, avg)
        lam = grid.embed(spla.splu(M).solve(grid.interior(pbar[n + 1])))
        fbar[n] = dt * lam
        pbar[n] += lam
        d_n = np.asarray(coeffs.d(u[n]), dtype=float) * np.ones(grid.shape)
        dd_n = np.asarray(coeffs.dd(u[n]), dtype=float) * np.ones(grid.shape)
        ubar[n] += dt * dd_n * diffuse_coefficient_adjoint(grid, lam, p[n + 1], d_n, avg)
        ubar[n][~interior] = 0.0

    grad = fbar + penalty_gradient(f, problem)
    grad[:, ~f.support] = 0.0
    return GradientEvaluation(cost, f.replace(grad), fwd)


def _flux_adjoint(grid, a, mu, averaging):
    out = flux_divergence(grid, a, mu, averaging)
    out[grid.boundary] = 0.0
    return out


def adjoint_gradient(problem, f, opts=SolverOptions(), targets=None):
    """Gradient of the discrete objective, shaped like the control."""
    return cost_and_gradient(problem, f, opts, targets).gradient


def fd_gradient(problem, f, h, probes, opts=SolverOptions(), targets=None):
    """Central differences (J(f + h e_k) - J(f - h e_k)) / 2h at probe entries.

    ``probes`` is a sequence of (k, i, j) indices into ``f.values``; ``h`` a
    scalar or one step per probe.
    """
    if targets is None:
        targets = problem.targets(f.grid, f.dt, f.nt)
    hs = np.broadcast_to(np.asarray(h, dtype=float), (len(probes),))
    out = np.empty(len(probes))
    for m, (k, i, j) in enumerate(probes):
        if not hs[m] > 0:
            raise ValueError("finite-difference step must be positive")
        if not f.support[i, j]:
            raise ValueError(f"probe {m} at node ({i}, {j}) lies outside the well mask")
        vals = []
        for sgn in (1.0, -1.0):
            v = f.values.copy()
            v[k, i, j] += sgn * hs[m]
            try:
                vals.append(cost_of(problem, f.replace(v), opts, targets)[0].total)
            except DeadOilError as exc:
                raise type(exc)(f"probe {m}: {exc}") from exc
        out[m] = (vals[0] - vals[1]) / (2 * hs[m])
    return out


def fd_gradient_sweep(problem, f, probes, steps=(1e-2, 1e-3, 1e-4), opts=SolverOptions(),
                      targets=None):
    """Central differences with the step picked per probe from a three-point sweep.

    For each probe the adjacent pair of steps whose estimates agree best is
    kept and the smaller step of that pair is returned.
    """
    steps = tuple(sorted(steps, reverse=True))
    est = np.stack([fd_gradient(problem, f, h, probes, opts, targets) for h in steps])
    spread = np.abs(np.diff(est, axis=0))
    best = np.argmin(spread, axis=0)
    return est[best + 1, np.arange(len(probes))], np.asarray(steps)[best + 1]


# ---------------------------------------------------------------------------
# descent
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OptOptions:
    max_outer: int = 200
    grad_tol: float = 1e-6
    step0: float = 1.0
    armijo_c: float = 1e-4
    history_len: int = 10
    max_backtracks: int = 30

    def __post_init__(self):
        if self.max_outer < 1:
            raise ValueError("max_outer must be >= 1")
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if not 0 < self.armijo_c < 1:
            raise ValueError("armijo_c must lie in (0, 1)")


@dataclass
class HistoryEntry:
    iteration: int
    cost: object
    grad_norm: float
    step: float
    armijo_lhs: float = float("nan")
    armijo_rhs: float = float("nan")
    backtracks: int = 0


@dataclass
class OptResult:
    f_opt: object
    u_opt: object
    p_opt: object
    history: list = field(default_factory=list)
    converged: bool = False


def minimize(problem, f0, opts=OptOptions(), solver_opts=SolverOptions(), targets=None,
             callback=None):
    """Limited-memory quasi-Newton descent with Armijo backtracking.

    The control is treated as an element of L^2 over the space-time
    cylinder: gradients are Riesz representatives (nodal gradient divided
    by dt hx hy) and ``grad_tol`` bounds their L^2 norm.  Every accepted
    iterate strictly decreases J.
    """
    if targets is None:
        targets = problem.targets(f0.grid, f0.dt, f0.nt)
    weight = f0.dt * f0.grid.hx * f0.grid.hy

    def evaluate(x):
        ev = cost_and_gradient(problem, f0.from_flat(x), solver_opts, targets)
        return ev, ev.gradient.flat() / weight

    def inner(a, b):
        return weight * float(np.dot(a, b))

    x = f0.flat()
    ev, g = evaluate(x)
    gnorm = np.sqrt(inner(g, g))
    history = [HistoryEntry(0, ev.cost, gnorm, 0.0)]
    result = OptResult(f0.from_flat(x), ev.forward.u, ev.forward.p, history)
    if callback:
        callback(history[-1])
    if gnorm <= opts.grad_tol:
        result.converged = True
        return result

    s_hist, y_hist = [], []
    for it in range(1, opts.max_outer + 1):
        d = _two_loop(g, s_hist, y_hist, inner)
        slope = inner(g, d)
        if not slope < 0:
            s_hist.clear()
            y_hist.clear()
            d = -g
            slope = -gnorm ** 2
        # without curvature memory the direction is -g; start at unit length
        alpha = 1.0 if s_hist else opts.step0 / max(1.0, gnorm)
        J0 = ev.cost.total
        for bt in range(opts.max_backtracks + 1):
            x_new = x + alpha * d
            try:
                ev_new, g_new = evaluate(x_new)
                ok = ev_new.cost.total <= J0 + opts.armijo_c * alpha * slope \
                    and ev_new.cost.total < J0
            except DeadOilError:
                ok = False
            if ok:
                break
            alpha *= 0.5
        else:
            raise StallError(f"line search failed after {opts.max_backtracks} backtracks at "
                             f"iteration {it} (J = {J0:.6e}, |g| = {gnorm:.3e})",
                             result=result)
        s, yv = x_new - x, g_new - g
        sy = inner(s, yv)
        if opts.history_len > 0 and sy > 1e-16 * inner(s, s) ** 0.5 * inner(yv, yv) ** 0.5:
            s_hist.append(s)
            y_hist.append(yv)
            if len(s_hist) > opts.history_len:
                s_hist.pop(0)
                y_hist.pop(0)
        x, g, ev = x_new, g_new, ev_new
        gnorm = np.sqrt(inner(g, g))
        history.append(HistoryEntry(it, ev.cost, gnorm, alpha,
                                    armijo_lhs=ev.cost.total,
                                    armijo_rhs=J0 + opts.armijo_c * alpha * slope,
                                    backtracks=bt))
        result = OptResult(f0.from_flat(x), ev.forward.u, ev.forward.p, history)
        if callback:
            callback(history[-1])
        log.debug("iter %d J=%.6e |g|=%.3e step=%.3e", it, ev.cost.total, gnorm, alpha)
        if gnorm <= opts.grad_tol:
            result.converged = True
            break
    return result


def _two_loop(g, s_hist, y_hist, inner):
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(s_hist), reversed(y_hist)):
        rho = 1.0 / inner(y, s)
        a = rho * inner(s, q)
        alphas.append(a)
        q -= a * y
    if s_hist:
        s, y = s_hist[-1], y_hist[-1]
        q *= inner(s, y) / inner(y, y)
    for (s, y), a in zip(zip(s_hist, y_hist), reversed(alphas)):
        rho = 1.0 / inner(y, s)
        b = rho * inner(y, q)
        q += (a - b) * s
    return -q


def random_probes(f, n, seed=0):
    """``n`` distinct (k, i, j) entries drawn from the control's support."""
    rng = np.random.default_rng(seed)
    ii, jj = np.nonzero(f.support)
    total = f.nt * len(ii)
    picks = rng.choice(total, size=min(n, total), replace=False)
    return [(int(m // len(ii)), int(ii[m % len(ii)]), int(jj[m % len(ii)])) for m in picks]


def gradient_check(problem, f, probes, steps=(1e-2, 1e-3, 1e-4), opts=SolverOptions(),
                   targets=None):
    """Adjoint against swept central differences, one row per probe.

    The relative error is |adj - fd| / max(|fd|, floor) with floor
    1e-8 * max|adjoint gradient|, so probes where the gradient nearly
    vanishes are judged on the gradient's own scale.
    """
    if targets is None:
        targets = problem.targets(f.grid, f.dt, f.nt)
    grad = adjoint_gradient(problem, f, opts, targets).values
    fd, hs = fd_gradient_sweep(problem, f, probes, steps, opts, targets)
    floor = 1e-8 * float(np.max(np.abs(grad)))
    rows = []
    for m, (k, i, j) in enumerate(probes):
        adj = float(grad[k, i, j])
        rel = abs(adj - fd[m]) / max(abs(fd[m]), floor, 1e-300)
        rows.append({"probe": m, "k": k, "i": i, "j": j, "adjoint": adj, "fd": float(fd[m]),
                     "h": float(hs[m]), "rel_err": rel})
    return rows
