"""Uniform node lattice on a rectangle, 5-point operators and discrete norms.

Fields are plain ``ndarray`` of shape ``(nx + 2, ny + 2)`` indexed ``[i, j]``
with ``x = i * hx`` and ``y = j * hy``; the outer ring holds the boundary
nodes.  Interior unknowns are ordered C-style, ``k = (i - 1) * ny + (j - 1)``.
"""
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import EvaluationError, InsufficientDataError

HOLDER_ALPHAS = np.round(np.arange(1, 21) * 0.05, 2)
HOLDER_CAP = 1.0


@dataclass(frozen=True)
class Grid2D:
    nx: int
    ny: int
    Lx: float = 1.0
    Ly: float = 1.0

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError("need at least 2 interior nodes per axis")

    @property
    def hx(self):
        return self.Lx / (self.nx + 1)

    @property
    def hy(self):
        return self.Ly / (self.ny + 1)

    @property
    def shape(self):
        return (self.nx + 2, self.ny + 2)

    @property
    def n_interior(self):
        return self.nx * self.ny

    @property
    def x(self):
        return np.arange(self.nx + 2) * self.hx

    @property
    def y(self):
        return np.arange(self.ny + 2) * self.hy

    def mesh(self):
        return np.meshgrid(self.x, self.y, indexing="ij")

    @cached_property
    def boundary(self):
        b = np.ones(self.shape, dtype=bool)
        b[1:-1, 1:-1] = False
        return b

    def zeros(self):
        return np.zeros(self.shape)

    def sample(self, gen, *args):
        """Evaluate a generator on the nodes; boundary forced to zero."""
        X, Y = self.mesh()
        w = np.array(np.broadcast_to(gen(X, Y, *args), X.shape), dtype=float)
        if not np.all(np.isfinite(w)):
            raise EvaluationError("field generator returned non-finite values")
        w[self.boundary] = 0.0
        return w

    def interior(self, w):
        return w[1:-1, 1:-1].ravel()

    def embed(self, v):
        w = self.zeros()
        w[1:-1, 1:-1] = np.reshape(v, (self.nx, self.ny))
        return w


@dataclass
class Trajectory:
    """Fields at t_n = n dt for n = 0..nt, stacked along axis 0."""
    grid: Grid2D
    dt: float
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape[1:] != self.grid.shape:
            raise ValueError("trajectory fields do not match the grid")

    @property
    def nt(self):
        return self.values.shape[0] - 1

    @property
    def T(self):
        return self.nt * self.dt

    @property
    def times(self):
        return np.arange(self.nt + 1) * self.dt

    def __getitem__(self, n):
        return self.values[n]


def _check_same(grid, *fields):
    for w in fields:
        if np.shape(w) != grid.shape:
            raise ValueError(f"field shape {np.shape(w)} does not match grid {grid.shape}")


def face_average(a_left, a_right, averaging="arithmetic"):
    if averaging == "arithmetic":
        return 0.5 * (a_left + a_right)
    if averaging == "harmonic":
        return 2.0 * a_left * a_right / (a_left + a_right)
    raise ValueError(f"unknown averaging '{averaging}'")


def face_average_partials(a_left, a_right, averaging="arithmetic"):
    """Derivatives of the face value with respect to its two node values."""
    if averaging == "arithmetic":
        half = np.full(np.broadcast(a_left, a_right).shape, 0.5)
        return half, half
    s = (a_left + a_right) ** 2
    return 2.0 * a_right ** 2 / s, 2.0 * a_left ** 2 / s


def diffuse(grid, a, w, averaging="arithmetic"):
    """Flux-form 5-point approximation of div(a grad w) at interior nodes.

    ``w`` is read on every node, so nonzero boundary values act as Dirichlet
    data; the returned field is zero on the boundary.
    """
    _check_same(grid, a, w)
    if np.any(a <= 0):
        raise ValueError("diffusion coefficient must be positive")
    return flux_divergence(grid, a, w, averaging)


def flux_divergence(grid, a, w, averaging="arithmetic"):
    """div(a grad w) without the positivity check on ``a``.

    The saturation equation feeds g(u) through here and g may vanish.
    """
    _check_same(grid, a, w)
    if averaging == "harmonic":
        ax = _safe_harmonic(a[:-1, :], a[1:, :])
        ay = _safe_harmonic(a[:, :-1], a[:, 1:])
    else:
        ax = face_average(a[:-1, :], a[1:, :], averaging)
        ay = face_average(a[:, :-1], a[:, 1:], averaging)
    fx = ax * (w[1:, :] - w[:-1, :]) / grid.hx ** 2
    fy = ay * (w[:, 1:] - w[:, :-1]) / grid.hy ** 2
    out = grid.zeros()
    out[1:-1, 1:-1] = (fx[1:, 1:-1] - fx[:-1, 1:-1]) + (fy[1:-1, 1:] - fy[1:-1, :-1])
    return out


def _safe_harmonic(al, ar):
    s = al + ar
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(s != 0, 2.0 * al * ar / np.where(s != 0, s, 1.0), 0.0)


def diffuse_coefficient_adjoint(grid, mu, w, a=None, averaging="arithmetic"):
    """Gradient of <mu, diffuse(a, w)> with respect to the nodal coefficient a.

    ``mu`` must vanish on the boundary.  Summation by parts gives
    <mu, diffuse(a, w)> = -sum_faces a_f (D mu)(D w) / h^2.
    """
    sx = -(mu[1:, :] - mu[:-1, :]) * (w[1:, :] - w[:-1, :]) / grid.hx ** 2
    sy = -(mu[:, 1:] - mu[:, :-1]) * (w[:, 1:] - w[:, :-1]) / grid.hy ** 2
    if averaging == "arithmetic" or a is None:
        lx = rx = ly = ry = 0.5
    else:
        lx, rx = face_average_partials(a[:-1, :], a[1:, :], averaging)
        ly, ry = face_average_partials(a[:, :-1], a[:, 1:], averaging)
    out = grid.zeros()
    out[:-1, :] += lx * sx
    out[1:, :] += rx * sx
    out[:, :-1] += ly * sy
    out[:, 1:] += ry * sy
    return out


def diffusion_matrix(grid, a, averaging="arithmetic"):
    """Sparse interior matrix of w -> diffuse(a, w) for w zero on the boundary."""
    ax = face_average(a[:-1, :], a[1:, :], averaging)[:, 1:-1] / grid.hx ** 2  # (nx+1, ny)
    ay = face_average(a[:, :-1], a[:, 1:], averaging)[1:-1, :] / grid.hy ** 2  # (nx, ny+1)
    nx, ny = grid.nx, grid.ny
    diag = -(ax[:-1, :] + ax[1:, :] + ay[:, :-1] + ay[:, 1:]).ravel()
    idx = np.arange(nx * ny).reshape(nx, ny)
    # x-neighbours (i, i+1) share face ax[i+1] in lattice numbering
    xr = idx[:-1, :].ravel()
    xc = idx[1:, :].ravel()
    xv = ax[1:-1, :].ravel()
    yr = idx[:, :-1].ravel()
    yc = idx[:, 1:].ravel()
    yv = ay[:, 1:-1].ravel()
    rows = np.concatenate([np.arange(nx * ny), xr, xc, yr, yc])
    cols = np.concatenate([np.arange(nx * ny), xc, xr, yc, yr])
    vals = np.concatenate([diag, xv, xv, yv, yv])
    return sp.csr_matrix((vals, (rows, cols)), shape=(nx * ny, nx * ny))


def laplacian_matrix(grid):
    return diffusion_matrix(grid, np.ones(grid.shape))


def laplace_of_composition(grid, phi, u):
    """5-point Laplacian of the nodewise image phi(u).

    Boundary nodes enter through phi(u) evaluated there, i.e. phi(0) for a
    field satisfying the Dirichlet condition.
    """
    _check_same(grid, u)
    v = np.asarray(phi(u), dtype=float)
    bad = ~np.isfinite(v)
    if bad.any():
        idx = np.unravel_index(int(np.argmax(bad)), bad.shape)
        raise EvaluationError(f"phi(u) is not finite at node {tuple(int(i) for i in idx)}")
    return diffuse(grid, np.ones(grid.shape), v)


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------

def lp_norm(grid, w, p=2.0):
    """(sum_nodes |w|^p hx hy)^(1/p)."""
    if p < 1:
        raise ValueError("norm exponent must be >= 1")
    return float(np.sum(np.abs(w) ** p) * grid.hx * grid.hy) ** (1.0 / p)


def gradient_density(grid, w):
    """|grad w|^2 per cell, from the squared differences on the four cell faces.

    Every interior face is shared by two cells with weight 1/2, so summing
    over cells reproduces the face-based discrete H1 seminorm exactly.
    """
    dx2 = ((w[1:, :] - w[:-1, :]) / grid.hx) ** 2  # (nx+1, ny+2)
    dy2 = ((w[:, 1:] - w[:, :-1]) / grid.hy) ** 2  # (nx+2, ny+1)
    return 0.5 * (dx2[:, :-1] + dx2[:, 1:]) + 0.5 * (dy2[:-1, :] + dy2[1:, :])


def grad_norm(grid, w, p=2.0):
    if p < 1:
        raise ValueError("norm exponent must be >= 1")
    g2 = gradient_density(grid, w)
    return float(np.sum(g2 ** (p / 2.0)) * grid.hx * grid.hy) ** (1.0 / p)


def hessian_parts(grid, w):
    """Second difference quotients (wxx, wyy at interior nodes; wxy at cells)."""
    wxx = (w[2:, 1:-1] - 2 * w[1:-1, 1:-1] + w[:-2, 1:-1]) / grid.hx ** 2
    wyy = (w[1:-1, 2:] - 2 * w[1:-1, 1:-1] + w[1:-1, :-2]) / grid.hy ** 2
    wxy = (w[1:, 1:] - w[:-1, 1:] - w[1:, :-1] + w[:-1, :-1]) / (grid.hx * grid.hy)
    return wxx, wyy, wxy


def hessian_pow_sum(grid, w, p=2.0):
    """sum of |wxx|^p + |wyy|^p + 2 |wxy|^p times the cell area (entrywise)."""
    wxx, wyy, wxy = hessian_parts(grid, w)
    s = np.sum(np.abs(wxx) ** p) + np.sum(np.abs(wyy) ** p) + 2.0 * np.sum(np.abs(wxy) ** p)
    return float(s) * grid.hx * grid.hy


def hessian_norm(grid, w, p=2.0):
    return hessian_pow_sum(grid, w, p) ** (1.0 / p)


@dataclass
class SpaceTimeNorms:
    lp: float
    grad: float
    hess: float
    dt: float
    w10: float
    w21: float


def spacetime_norms(traj, p=2.0):
    """Discrete L^p, W^{1,0}_p and W^{2,1}_p norms of a trajectory.

    Each step-end field t_n, n = 1..nt, carries the weight dt of the interval
    it closes; the time derivative uses the nt forward differences.
    """
    if traj.nt < 2:
        raise InsufficientDataError("need at least 2 time steps")
    grid, dt = traj.grid, traj.dt
    cell = grid.hx * grid.hy
    fields = traj.values[1:]
    lp = (np.sum(np.abs(fields) ** p) * cell * dt) ** (1.0 / p)
    g = sum(grad_norm(grid, w, p) ** p for w in fields) * dt
    hs = sum(hessian_pow_sum(grid, w, p) for w in fields) * dt
    dtw = np.diff(traj.values, axis=0) / dt
    dtn = (np.sum(np.abs(dtw) ** p) * cell * dt) ** (1.0 / p)
    g = g ** (1.0 / p)
    hs = hs ** (1.0 / p)
    w10 = lp + g
    return SpaceTimeNorms(lp=float(lp), grad=float(g), hess=float(hs), dt=float(dtn),
                          w10=float(w10), w21=float(w10 + hs + dtn))


def spacetime_grad(traj, p=2.0):
    """||grad w||_{p, Q_T} over the step-end fields."""
    s = sum(grad_norm(traj.grid, w, p) ** p for w in traj.values[1:]) * traj.dt
    return float(s) ** (1.0 / p)


# ---------------------------------------------------------------------------
# parabolic Hoelder exponent
# ---------------------------------------------------------------------------

@dataclass
class HolderEstimate:
    alpha_hat: float
    constant_hat: float
    slopes: dict


def holder_estimate(traj, n_pairs=20000, seed=0, alphas=HOLDER_ALPHAS):
    """Empirical parabolic Hoelder exponent and constant of a trajectory.

    Random base nodes are paired with a partner displaced along x, y or t by
    a dyadic number of lattice steps.  Per axis, the log of the largest
    sampled increment is regressed on the log of the parabolic distance
    rho = |x - y| + |t - s|^(1/2); the exponent is the smallest slope over
    the axes, capped at 1 and snapped to ``alphas``.  ``constant_hat`` is the
    largest quotient |w(x,t) - w(y,s)| / rho^alpha_hat among the pairs.
    """
    if n_pairs < 100:
        raise ValueError("n_pairs must be >= 100")
    v = traj.values
    if np.ptp(v) == 0.0:
        return HolderEstimate(HOLDER_CAP, 0.0, {})
    rng = np.random.default_rng(seed)
    grid = traj.grid
    nt1, nx2, ny2 = v.shape
    axis_of = {"x": 1, "y": 2, "t": 0}
    kind = rng.integers(0, 3, n_pairs)
    base = np.stack([rng.integers(0, nt1, n_pairs), rng.integers(0, nx2, n_pairs),
                     rng.integers(0, ny2, n_pairs)])
    draw = rng.integers(0, 2 ** 31, n_pairs)

    slopes, all_dw, all_rho = {}, [], []
    for k, name in enumerate(("x", "y", "t")):
        ax = axis_of[name]
        size = v.shape[ax]
        top = int(np.log2(max(1, (size - 1) // 4)))
        sel = kind == k
        offsets = 2 ** (draw[sel] % (top + 1))
        a = base[:, sel]
        b = a.copy()
        shifted = a[ax] + offsets
        b[ax] = np.where(shifted >= size, a[ax] - offsets, shifted)
        dw = np.abs(v[tuple(a)] - v[tuple(b)])
        if name == "t":
            rho = np.sqrt(offsets * traj.dt)
        else:
            rho = offsets * (grid.hx if name == "x" else grid.hy)
        all_dw.append(dw)
        all_rho.append(rho)
        xs, ys = [], []
        for e in range(top + 1):
            m = offsets == 2 ** e
            if m.any() and dw[m].max() > 0:
                xs.append(np.log(rho[m][0]))
                ys.append(np.log(dw[m].max()))
        if len(xs) >= 2:
            slopes[name] = float(np.polyfit(xs, ys, 1)[0])

    exponent = min(min(slopes.values()) if slopes else HOLDER_CAP, HOLDER_CAP)
    alpha = float(alphas[int(np.argmin(np.abs(alphas - exponent)))])
    dw = np.concatenate(all_dw)
    rho = np.concatenate(all_rho)
    return HolderEstimate(alpha, float(np.max(dw / rho ** alpha)), slopes)
