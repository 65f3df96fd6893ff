import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from deadoil.discretization import (Grid2D, Trajectory, diffuse, grad_norm, hessian_norm,
                                    holder_estimate, laplace_of_composition, lp_norm,
                                    spacetime_norms)
from deadoil.errors import InsufficientDataError
from deadoil.laws import make_law


def interior_field(grid, rng):
    w = grid.zeros()
    w[1:-1, 1:-1] = rng.standard_normal((grid.nx, grid.ny))
    return w


def test_grid_geometry():
    g = Grid2D(3, 4, 2.0, 1.0)
    assert g.hx == 0.5 and g.hy == 0.2
    assert g.shape == (5, 6)
    assert g.boundary.sum() == 5 * 6 - 12
    with pytest.raises(ValueError):
        Grid2D(1, 4)


def test_affine_fields_are_discretely_harmonic():
    g = Grid2D(9, 7)
    X, Y = g.mesh()
    w = 2.0 * X - 0.5 * Y + 1.0
    out = diffuse(g, np.ones(g.shape), w)
    assert np.max(np.abs(out[1:-1, 1:-1])) < 1e-10


def test_sine_laplacian_error_constant():
    # frozen from tests/oracles/compute_oracles.py (laplacian_sine_constant)
    frozen = {15: 16.213999382189286, 31: 16.229633532806474, 63: 16.233544595044805}
    for n, c in frozen.items():
        g = Grid2D(n, n)
        X, Y = g.mesh()
        w = np.sin(np.pi * X) * np.sin(np.pi * Y)
        err = np.max(np.abs(diffuse(g, np.ones(g.shape), w) + 2 * np.pi ** 2 * w))
        assert err / g.hx ** 2 == pytest.approx(c, rel=1e-9)


def test_diffuse_is_linear_in_constant_coefficient():
    g = Grid2D(6, 5)
    w = interior_field(g, np.random.default_rng(1))
    a1 = diffuse(g, np.ones(g.shape), w)
    assert np.array_equal(diffuse(g, 2 * np.ones(g.shape), w), 2 * a1)


def test_diffuse_rejects_nonpositive_coefficient_and_mismatch():
    g = Grid2D(4, 4)
    with pytest.raises(ValueError):
        diffuse(g, -np.ones(g.shape), g.zeros())
    with pytest.raises(ValueError):
        diffuse(g, np.ones(g.shape), np.zeros((3, 3)))


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 9), st.integers(2, 9), st.integers(0, 2 ** 31))
def test_diffuse_symmetric_negative_semidefinite(nx, ny, seed):
    rng = np.random.default_rng(seed)
    g = Grid2D(nx, ny, 1.0 + rng.random(), 1.0 + rng.random())
    a = 0.5 + rng.random(g.shape)
    w, v = interior_field(g, rng), interior_field(g, rng)
    Aw, Av = diffuse(g, a, w), diffuse(g, a, v)
    assert np.sum(Aw * v) == pytest.approx(np.sum(w * Av), rel=1e-10, abs=1e-10)
    assert np.sum(Aw * w) <= 1e-10


def test_product_rule_anchor():
    g = Grid2D(8, 6)
    w = interior_field(g, np.random.default_rng(3))
    assert np.array_equal(diffuse(g, np.ones(g.shape), w),
                          laplace_of_composition(g, make_law("identity"), w))


def test_composition_trivial_cases():
    g = Grid2D(5, 5)
    square = make_law("affine_plus_cube", a=0.0, b=0.0, c=0.0)  # phi = 0 placeholder
    assert not np.any(laplace_of_composition(g, square, g.zeros()))
    X, Y = g.mesh()
    lap = laplace_of_composition(g, make_law("identity"), 3 * X + Y)
    assert np.max(np.abs(lap[1:-1, 1:-1])) < 1e-10


def test_composition_with_square_converges_at_second_order():
    def err(n):
        g = Grid2D(n, n)
        X, Y = g.mesh()
        u = np.sin(np.pi * X) * np.sin(np.pi * Y)
        exact = 2 * np.pi ** 2 * (np.cos(np.pi * X) ** 2 * np.sin(np.pi * Y) ** 2
                                  + np.sin(np.pi * X) ** 2 * np.cos(np.pi * Y) ** 2
                                  - 2 * u ** 2)
        lap = laplace_of_composition(g, lambda r: r ** 2, u)
        return np.max(np.abs(lap - exact)[1:-1, 1:-1]), g.hx

    (e1, h1), (e2, h2) = err(31), err(63)
    assert math.log(e1 / e2) / math.log(h1 / h2) > 1.9


def test_lp_norm_direct_summation():
    g = Grid2D(63, 63)
    w = g.sample(lambda X, Y: np.ones_like(X))
    for p in (1.0, 2.0, 3.5):
        assert lp_norm(g, w, p) == pytest.approx(((63 / 64) ** 2) ** (1 / p), rel=1e-14)
    assert lp_norm(g, g.zeros()) == 0.0
    with pytest.raises(ValueError):
        lp_norm(g, w, 0.5)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(-5, 5), st.sampled_from([1.0, 2.0, 3.0, 4.0]))
def test_norms_homogeneous_and_subadditive(seed, lam, p):
    rng = np.random.default_rng(seed)
    g = Grid2D(6, 5)
    w, v = interior_field(g, rng), interior_field(g, rng)
    for norm in (lp_norm, grad_norm, hessian_norm):
        assert norm(g, lam * w, p) == pytest.approx(abs(lam) * norm(g, w, p), rel=1e-12, abs=1e-12)
        assert norm(g, w + v, p) <= norm(g, w, p) + norm(g, v, p) + 1e-12


def test_grad_norm_matches_face_seminorm():
    g = Grid2D(7, 9, 1.5, 1.0)
    w = interior_field(g, np.random.default_rng(4))
    faces = (np.sum(np.diff(w, axis=0) ** 2) / g.hx ** 2 + np.sum(np.diff(w, axis=1) ** 2) / g.hy ** 2)
    assert grad_norm(g, w) ** 2 == pytest.approx(faces * g.hx * g.hy, rel=1e-13)


def test_spacetime_norms_zero_and_time_ramp():
    g = Grid2D(7, 7)
    zero = Trajectory(g, 0.1, np.zeros((11,) + g.shape))
    n = spacetime_norms(zero, 2.0)
    assert (n.lp, n.w10, n.w21) == (0.0, 0.0, 0.0)

    ramp = np.stack([k * 0.1 * g.sample(lambda X, Y: np.ones_like(X)) for k in range(11)])
    for p in (2.0, 3.0):
        n = spacetime_norms(Trajectory(g, 0.1, ramp), p)
        area = (7 / 8) ** 2
        assert n.dt == pytest.approx((area * 1.0) ** (1 / p), rel=1e-12)


def test_static_trajectory_has_no_time_derivative_part():
    g = Grid2D(6, 6)
    w = interior_field(g, np.random.default_rng(5))
    n = spacetime_norms(Trajectory(g, 0.05, np.stack([w] * 5)))
    assert n.dt == 0.0
    assert n.w21 == pytest.approx(n.w10 + n.hess)


def test_spacetime_norms_need_two_steps():
    g = Grid2D(4, 4)
    with pytest.raises(InsufficientDataError):
        spacetime_norms(Trajectory(g, 0.1, np.zeros((2,) + g.shape)))


def profile_trajectory(fn, n=63, nt=16, T=1.0):
    g = Grid2D(n, n)
    X, _ = g.mesh()
    w = fn(X)
    return Trajectory(g, T / nt, np.stack([w] * (nt + 1)))


def test_holder_constant_trajectory():
    est = holder_estimate(profile_trajectory(lambda X: 0 * X + 2.0))
    assert est.alpha_hat == 1.0 and est.constant_hat == 0.0


def test_holder_linear_profile_is_lipschitz():
    est = holder_estimate(profile_trajectory(lambda X: X))
    assert est.alpha_hat == 1.0
    assert est.constant_hat == pytest.approx(1.0, rel=1e-12)


def test_holder_square_root_profile():
    est = holder_estimate(profile_trajectory(np.sqrt))
    assert abs(est.alpha_hat - 0.5) <= 0.05


def test_holder_quarter_power_and_time_scaling():
    assert abs(holder_estimate(profile_trajectory(lambda X: X ** 0.25)).alpha_hat - 0.25) <= 0.05
    g = Grid2D(15, 15)
    bump = g.sample(lambda X, Y: np.sin(np.pi * X) * np.sin(np.pi * Y))
    nt = 256
    traj = Trajectory(g, 1.0 / nt, np.stack([np.sqrt(k / nt) * bump for k in range(nt + 1)]))
    # sqrt(t) is Lipschitz in the parabolic distance |t - s|^(1/2)
    assert holder_estimate(traj).alpha_hat >= 0.9


def test_holder_is_deterministic_given_seed():
    traj = profile_trajectory(lambda X: np.sin(3 * X))
    a, b = holder_estimate(traj, 2000, seed=7), holder_estimate(traj, 2000, seed=7)
    assert (a.alpha_hat, a.constant_hat) == (b.alpha_hat, b.constant_hat)
    with pytest.raises(ValueError):
        holder_estimate(traj, 50)
