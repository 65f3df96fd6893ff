"""Control type and the four-term tracking functional.

    J = 1/2 ||u - U||^2 + 1/2 ||p - P||^2
        + beta1/2 ||f||_{2 q0}^{2 q0} + beta2/2 ||d_t f||^2

All norms are over the space-time cylinder.  Every step-end field
(t_1 .. t_nt) is weighted by dt * hx * hy.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .discretization import Grid2D
from .errors import InsufficientDataError


@dataclass
class Control:
    """Space-time source; ``values[k]`` acts at t_{k+1}, k = 0..nt-1."""
    grid: Grid2D
    dt: float
    values: np.ndarray
    mask: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 3 or self.values.shape[1:] != self.grid.shape:
            raise ValueError("control values must have shape (nt, nx+2, ny+2)")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("control values must be finite")
        allowed = ~self.grid.boundary if self.mask is None else self.mask
        if np.any(self.values[:, ~allowed] != 0):
            raise ValueError("control is nonzero outside its well mask")

    @property
    def nt(self):
        return self.values.shape[0]

    @property
    def support(self):
        return ~self.grid.boundary if self.mask is None else self.mask

    def replace(self, values):
        return Control(self.grid, self.dt, values, self.mask)

    @classmethod
    def zeros(cls, grid, dt, nt, mask=None):
        return cls(grid, dt, np.zeros((nt,) + grid.shape), mask)

    @classmethod
    def sample(cls, grid, dt, nt, gen, mask=None):
        """Evaluate a space-time generator f(x, y, t) at t_1..t_nt."""
        vals = np.stack([grid.sample(gen, (k + 1) * dt) for k in range(nt)])
        if mask is not None:
            vals[:, ~mask] = 0.0
        return cls(grid, dt, vals, mask)

    def flat(self):
        """Free degrees of freedom as a flat vector."""
        return self.values[:, self.support].ravel()

    def from_flat(self, x):
        vals = np.zeros_like(self.values)
        vals[:, self.support] = np.reshape(x, (self.nt, -1))
        return self.replace(vals)


@dataclass
class CostBreakdown:
    tracking_u: float
    tracking_p: float
    penal_f: float
    penal_dtf: float
    total: float = field(init=False)

    def __post_init__(self):
        self.total = self.tracking_u + self.tracking_p + self.penal_f + self.penal_dtf

    def as_dict(self):
        return {"tracking_u": self.tracking_u, "tracking_p": self.tracking_p,
                "penal_f": self.penal_f, "penal_dtf": self.penal_dtf, "total": self.total}


def dt_control(f):
    """Forward differences in time; the last slot repeats the final difference."""
    if f.nt < 2:
        raise InsufficientDataError("time derivative of a control needs nt >= 2")
    d = np.empty_like(f.values)
    d[:-1] = (f.values[1:] - f.values[:-1]) / f.dt
    d[-1] = d[-2]
    return Control(f.grid, f.dt, d, f.mask)


def dt_control_adjoint(f, r):
    """Transpose of :func:`dt_control` applied to an array ``r`` of the same shape."""
    rr = np.array(r, dtype=float)
    rr[-2] += rr[-1]
    rr[-1] = 0.0
    out = np.zeros_like(rr)
    out[1:] += rr[:-1] / f.dt
    out[:-1] -= rr[:-1] / f.dt
    return out


def _weight(grid, dt):
    return dt * grid.hx * grid.hy


def evaluate_cost(u_traj, p_traj, f, problem, targets=None):
    """Four-term objective on discrete trajectories.

    ``targets`` may pass pre-sampled (U, P) arrays of shape (nt+1, nx+2, ny+2).
    """
    grid, dt = f.grid, f.dt
    if u_traj.grid != grid or p_traj.grid != grid:
        raise ValueError("trajectories and control live on different grids")
    if u_traj.nt != f.nt or p_traj.nt != f.nt or abs(u_traj.dt - dt) > 1e-15 * dt:
        raise ValueError("trajectories and control use different time meshes")
    if targets is None:
        targets = problem.targets(grid, dt, f.nt)
    U, P = targets
    w = _weight(grid, dt)
    tu = 0.5 * w * float(np.sum((u_traj.values[1:] - U[1:]) ** 2))
    tp = 0.5 * w * float(np.sum((p_traj.values[1:] - P[1:]) ** 2))
    pf = 0.5 * problem.beta1 * w * float(np.sum(np.abs(f.values) ** (2 * problem.q0)))
    pd = 0.0
    if f.nt >= 2:
        pd = 0.5 * problem.beta2 * w * float(np.sum(dt_control(f).values ** 2))
    return CostBreakdown(tu, tp, pf, pd)


def penalty_gradient(f, problem):
    """Gradient of the two control penalties with respect to the nodal values of f."""
    w = _weight(f.grid, f.dt)
    v = f.values
    q = 2 * problem.q0
    grad = 0.5 * problem.beta1 * w * q * np.sign(v) * np.abs(v) ** (q - 1)
    if f.nt >= 2:
        grad = grad + problem.beta2 * w * dt_control_adjoint(f, dt_control(f).values)
    return grad
