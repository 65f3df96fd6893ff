"""Time stepping of the coupled saturation/pressure system.

Each backward-Euler step first solves the linear pressure equation with
d(u_n) lagged, then the saturation equation by Newton iteration with
g(u_n) lagged inside the coupling term.  Boundary values are pinned to zero.
"""
from dataclasses import dataclass, field
from functools import lru_cache
import logging
import time
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .discretization import (Trajectory, diffusion_matrix, flux_divergence,
                             laplace_of_composition, laplacian_matrix)
from .errors import (DeadOilError, DivergenceError, LinearSolveError, NewtonError,
                     ParabolicityError)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverOptions:
    nt: Optional[int] = None
    newton_tol: float = 1e-12
    newton_max: int = 30
    linear_tol: float = 1e-10
    averaging: str = "arithmetic"
    aux_source_u: Optional[Callable] = None

    def __post_init__(self):
        if self.nt is not None and self.nt < 1:
            raise ValueError("nt must be >= 1")
        if not (self.newton_tol > 0 and self.linear_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.newton_max < 1:
            raise ValueError("newton_max must be >= 1")


@dataclass
class ForwardResult:
    u: Trajectory
    p: Trajectory
    newton_iterations: list
    diagnostics: list = field(default_factory=list)
    wall_time: float = 0.0


@lru_cache(maxsize=16)
def _laplacian(grid):
    return laplacian_matrix(grid).tocsr()


def _identity(grid):
    return sp.identity(grid.n_interior, format="csr")


def pressure_matrix(grid, u_n, dt, coeffs, averaging="arithmetic"):
    """dt-scaled pressure operator I - dt div(d(u_n) grad .) on interior nodes."""
    a = np.asarray(coeffs.d(u_n), dtype=float)
    if np.any(a <= 0) or not np.all(np.isfinite(a)):
        raise ParabolicityError("d(u) must be positive and finite")
    return (_identity(grid) - dt * diffusion_matrix(grid, a, averaging)).tocsc()


def step_pressure(grid, u_n, p_n, f_np1, dt, coeffs, opts=SolverOptions()):
    """One implicit pressure step; returns (p_{n+1}, relative residual)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    M = pressure_matrix(grid, u_n, dt, coeffs, opts.averaging)
    b = grid.interior(p_n) + dt * grid.interior(f_np1)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return grid.zeros(), 0.0
    x = spla.splu(M).solve(b)
    res = np.linalg.norm(b - M @ x) / bnorm
    if not res <= opts.linear_tol:
        raise LinearSolveError(f"pressure solve reached relative residual {res:.3e} "
                               f"> {opts.linear_tol:.1e}", residual=res)
    return grid.embed(x), float(res)


def saturation_residual(grid, u, u_n, rhs, dt, coeffs):
    """dt-scaled nodal residual u - u_n - dt (lap phi(u) + rhs), interior only."""
    r = u - u_n - dt * (laplace_of_composition(grid, coeffs.phi, u) + rhs)
    r[grid.boundary] = 0.0
    return r


def saturation_jacobian(grid, u, dt, coeffs):
    dphi = grid.interior(np.asarray(coeffs.dphi(u), dtype=float) * np.ones(grid.shape))
    return (_identity(grid) - dt * _laplacian(grid) @ sp.diags(dphi)).tocsc()


def _check_parabolic(grid, u, coeffs):
    dphi = np.asarray(coeffs.dphi(u), dtype=float) * np.ones(grid.shape)
    low = dphi[1:-1, 1:-1] < coeffs.delta_phi
    if low.any():
        i, j = np.unravel_index(int(np.argmax(low)), low.shape)
        raise ParabolicityError(f"phi'(u) = {dphi[i + 1, j + 1]:.3e} below delta_phi "
                                f"= {coeffs.delta_phi:.3e} at node ({i + 1}, {j + 1})")


def step_saturation(grid, u_n, p_np1, dt, coeffs, opts=SolverOptions(), s_u=None):
    """Newton solve of the saturation step.

    Returns ``(u_{n+1}, newton_iterations, final max-norm residual)``.  The
    residual is scaled by dt, i.e. it is measured in units of u.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    g = np.asarray(coeffs.g(u_n), dtype=float) * np.ones(grid.shape)
    rhs = flux_divergence(grid, g, p_np1, opts.averaging)
    if s_u is not None:
        rhs = rhs + np.where(grid.boundary, 0.0, s_u)

    u = u_n.copy()
    u[grid.boundary] = 0.0
    _check_parabolic(grid, u, coeffs)
    r = saturation_residual(grid, u, u_n, rhs, dt, coeffs)
    rnorm = np.max(np.abs(r))
    it = 0
    while rnorm > opts.newton_tol:
        if it >= opts.newton_max:
            raise NewtonError(f"Newton did not converge in {opts.newton_max} iterations "
                              f"(residual {rnorm:.3e})", residual=rnorm)
        J = saturation_jacobian(grid, u, dt, coeffs)
        du = grid.embed(spla.splu(J).solve(-grid.interior(r)))
        lam = 1.0
        for _ in range(11):
            trial = u + lam * du
            _check_parabolic(grid, trial, coeffs)
            r_trial = saturation_residual(grid, trial, u_n, rhs, dt, coeffs)
            n_trial = np.max(np.abs(r_trial))
            if n_trial < rnorm:
                break
            lam *= 0.5
        u, r, rnorm = trial, r_trial, n_trial
        it += 1
    return u, it, float(rnorm)


def solve_forward(problem, control, opts=SolverOptions(), s_u=None):
    """Integrate the coupled system over [0, T] on the control's mesh.

    ``s_u`` is an optional space-time source added to the saturation
    equation (manufactured solutions only); it defaults to
    ``opts.aux_source_u``.
    """
    grid, dt, nt = control.grid, control.dt, control.nt
    if opts.nt is not None and opts.nt != nt:
        raise ValueError(f"options ask for {opts.nt} steps, control has {nt}")
    if abs(nt * dt - problem.T) > 1e-12 * problem.T:
        raise ValueError("control time mesh does not cover [0, T]")
    if (grid.Lx, grid.Ly) != (problem.Lx, problem.Ly):
        raise ValueError("grid and problem domain differ")
    s_u = s_u if s_u is not None else opts.aux_source_u
    coeffs = problem.coefficients

    start = time.perf_counter()
    u = np.empty((nt + 1,) + grid.shape)
    p = np.empty((nt + 1,) + grid.shape)
    u[0] = grid.sample(lambda X, Y: problem.u0(X, Y))
    p[0] = grid.sample(lambda X, Y: problem.p0(X, Y))
    iters, diags = [], []
    for n in range(nt):
        try:
            p[n + 1], pres = step_pressure(grid, u[n], p[n], control.values[n], dt, coeffs, opts)
            src = grid.sample(s_u, (n + 1) * dt) if s_u is not None else None
            u[n + 1], k, ures = step_saturation(grid, u[n], p[n + 1], dt, coeffs, opts, src)
        except DeadOilError as exc:
            raise type(exc)(f"step {n + 1}: {exc}") from exc
        if not (np.all(np.isfinite(u[n + 1])) and np.all(np.isfinite(p[n + 1]))):
            raise DivergenceError(f"non-finite field at step {n + 1}")
        iters.append(k)
        diags.append({"step": n + 1, "pressure_residual": pres, "newton_residual": ures,
                      "newton_iterations": k})
    wall = time.perf_counter() - start
    log.debug("forward solve: %d steps on %dx%d in %.2fs", nt, grid.nx, grid.ny, wall)
    return ForwardResult(Trajectory(grid, dt, u), Trajectory(grid, dt, p), iters, diags, wall)
