from __future__ import annotations

import math

import numpy as np
import pytest

from adaptid.coeffs import (
    DelayPlant,
    HeatPlant,
    bounds_for,
    closed_form_tf,
    delay_coeffs,
    heat_coeffs,
)
from adaptid.filters import E_gain
from adaptid.identifier import EstimatorDivergence, SlidingWindowEstimator, residual_delta
from adaptid.pe import gain_sup
from adaptid.pipeline import RegressorStream


def make_estimator(n=3, omega=0.5, dt=0.05, gamma=2.0, alpha0=0.1, method="exponential"):
    model = heat_coeffs(5.0, 1.5, n)
    return SlidingWindowEstimator(model, omega, gamma, alpha0, dt, method=method)


@pytest.fixture(scope="module")
def heat_stream():
    """Steady-state regressor samples of the heat example at n = 9 (dt = 0.01)."""
    plant = HeatPlant(5.0, 1.5)
    model = heat_coeffs(5.0, 1.5, 9)
    stream = RegressorStream(plant, 9, 0.1, 1e-2, grid_points=100)
    ts, phis = [], []
    for _ in range(19000):
        stream.advance()
        ts.append(stream.t)
        phis.append(stream.phi())
    return plant, model, np.array(ts), np.array(phis)


def test_window_size():
    est = make_estimator(omega=0.5, dt=0.05)
    assert est.size == math.ceil(4 * math.pi / 0.05) + 1
    assert est.alpha.shape == (est.model.r,)


def test_incremental_gram_matches_recompute():
    rng = np.random.default_rng(1)
    est = make_estimator()
    for _ in range(3 * est.size + 7):
        est.push(rng.normal(size=8))
    np.testing.assert_allclose(est.M, est.gram_from_scratch(), atol=1e-11)
    hist = est.history()
    trap = np.trapezoid(hist[:, :, None] * hist[:, None, :], dx=est.dt, axis=0)
    np.testing.assert_allclose(est.M, trap, atol=1e-11)


def test_zero_history_leaves_estimate_unchanged():
    est = make_estimator(alpha0=0.3)
    for _ in range(50):
        est.step(np.zeros(8))
    np.testing.assert_array_equal(est.alpha, 0.3)
    assert est.cost() == 0.0


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(7)
    est = make_estimator(n=4)
    for _ in range(est.size // 2):
        est.push(rng.normal(size=10))
    alpha = rng.normal(size=est.model.r)
    g = est.gradient(alpha)
    h = 1e-5
    fd = np.array([
        (est.cost(alpha + h * e) - est.cost(alpha - h * e)) / (2 * h) for e in np.eye(est.model.r)
    ])
    np.testing.assert_allclose(g, fd, rtol=1e-6)


def test_known_entries_never_move():
    rng = np.random.default_rng(3)
    est = make_estimator()
    known = est.model.known_mask
    before = est.beta_hat()[known].copy()
    for _ in range(200):
        est.step(rng.normal(size=8))
    np.testing.assert_array_equal(est.beta_hat()[known], before)
    assert not np.allclose(est.alpha, 0.1)


def test_exponential_and_rk4_agree_for_small_steps():
    rng = np.random.default_rng(5)
    a = make_estimator(dt=0.01, gamma=0.5)
    b = make_estimator(dt=0.01, gamma=0.5, method="rk4")
    for _ in range(400):
        phi = rng.normal(size=8)
        a.step(phi)
        b.step(phi)
    np.testing.assert_allclose(a.alpha, b.alpha, rtol=1e-7, atol=1e-12)


def test_exponential_step_is_stable_for_stiff_gram():
    est = make_estimator(dt=0.05, gamma=1e4)
    phi = np.array([1.0, 2.0, 0.0, 0.0, -0.5, -0.3, 0.0, 0.0])
    for _ in range(est.size):
        est.step(phi)
    assert np.all(np.isfinite(est.alpha))
    assert est.cost() < 1e-12


def test_divergence_guard():
    est = make_estimator(alpha0=2e6)
    with pytest.raises(EstimatorDivergence) as info:
        est.advance()
    assert info.value.norm > 1e6


def test_invalid_arguments():
    with pytest.raises(ValueError):
        make_estimator(gamma=0.0)
    with pytest.raises(ValueError):
        make_estimator(dt=-1.0)
    with pytest.raises(ValueError):
        make_estimator(method="euler")


def test_rational_plant_true_coefficients_are_equilibrium():
    plant = DelayPlant(K=1.5, a=0.3, b=1.0, tau=0.0)
    model = delay_coeffs(1.5, 0.3, 1.0, 0.0, 2)
    alpha_true = model.select(model.beta)
    stream = RegressorStream(plant, 2, 1 / 3, 5e-3)
    est = SlidingWindowEstimator(model, 1 / 3, 50.0, alpha_true, 5e-3)
    worst_delta = 0.0
    for _ in range(12000):
        phi = stream.phi()
        worst_delta = max(worst_delta, abs(residual_delta(model, phi)))
        est.step(phi)
        stream.advance()
    assert worst_delta < 1e-6
    np.testing.assert_allclose(est.alpha, alpha_true, atol=1e-6)


def test_steady_state_residual_within_truncation_bound():
    plant = HeatPlant(5.0, 1.5)
    bounds = bounds_for(plant, dict(theta_min=1.0, lam_max=5.0))
    C = 1.0 + gain_sup(plant)
    for n in (3, 5, 7):
        model = heat_coeffs(5.0, 1.5, n)
        omega = 1.0 / (n + 1)
        s = 1j * omega * np.arange(1, n + 2)
        k = np.arange(n + 1)
        powers = s[:, None] ** k[None, :]
        E = E_gain(n, omega, s)
        G = closed_form_tf(plant, omega * np.arange(1, n + 2))
        # worst case over t of sum_m Im(c_m exp(j m omega t))
        amplitude = np.sum(np.abs(E * (powers @ model.p - (powers @ model.q) * G)))
        tail = sum(bounds.q_u(j) * (n + 1) ** (j + 1) * omega**j for j in range(n + 1, n + 80))
        assert 0 < amplitude <= C * tail


def test_simulated_residual_at_discretization_floor(heat_stream):
    # The n = 9 truncation residual is ~1e-16; what remains is PDE grid error.
    _, model, t, phis = heat_stream
    delta = phis[t > 120.0] @ model.beta
    assert np.max(np.abs(delta)) < 1e-5 * np.max(np.abs(phis))


def test_residual_is_periodic(heat_stream):
    _, model, t, phis = heat_stream
    delta = phis @ model.beta
    T = 2 * np.pi / 0.1
    grid = np.linspace(t[-1] - T - 50.0, t[-1] - T, 2000)
    first = np.interp(grid, t, delta)
    second = np.interp(grid + T, t, delta)
    assert np.max(np.abs(second - first)) < 1e-4 * np.max(np.abs(first))


def test_cost_at_true_coefficients_is_bounded(heat_stream):
    _, model, t, phis = heat_stream
    est = SlidingWindowEstimator(model, 0.1, 30.0, model.select(model.beta), 1e-2)
    for phi in phis:
        est.push(phi)
    worst = np.max(np.abs(est.history() @ model.beta))
    assert est.cost() <= est.window * worst**2
