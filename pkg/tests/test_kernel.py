import math

import numpy as np
import pytest

from plsimel.core import ModelSpec, Series, Theta
from plsimel.errors import ConfigError, DomainError
from plsimel.kernel import (
    KernelConfig,
    conditional_at,
    estimate_eta,
    eta_at,
    gaussian_density,
    kernel_deriv,
    kernel_eval,
    oracle_eta,
)
from plsimel.simulate import SimDesign, design51_link, index_variance, simulate

SPEC = ModelSpec.plsim(2, 3)
THETA = Theta([0.1, 0.0], [1.0, 1.0])


def brute_eta(t_eval, t, resid, grad, w, h, exclude_self=False):
    """Direct double sums, written from the estimator definitions."""
    u = (t[None, :] - t_eval[:, None]) / h
    K = np.exp(-0.5 * u**2) / math.sqrt(2 * math.pi)
    Kd = -u * K
    if exclude_self:
        np.fill_diagonal(K, 0.0)
        np.fill_diagonal(Kd, 0.0)
    n = t.size - (1 if exclude_self else 0)
    f = K.sum(1) / (n * h)
    m = K @ resid / (n * h)
    ex = K @ grad / (n * h)
    ew = K @ w / (n * h)
    mp = -(f * (Kd @ resid) - m * Kd.sum(1)) / (n * h * h)
    return f, m, mp, ex, ew


def _random_series(n, seed=0):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((n, 3))
    x = rng.standard_normal((n, 2))
    y = x @ [0.1, 0.0] + np.sin(w.sum(1)) + 0.3 * rng.standard_normal(n)
    return Series(y, x, w)


def test_kernel_closed_forms():
    assert kernel_eval(0.0) == pytest.approx(0.3989422804, abs=1e-10)
    assert kernel_deriv(0.0) == 0.0
    assert kernel_eval(1.0) == pytest.approx(0.2419707245, abs=1e-10)
    assert kernel_deriv(1.0) == pytest.approx(-0.2419707245, abs=1e-10)


@pytest.mark.parametrize("loo", [False, True])
def test_estimate_eta_matches_brute_force(loo):
    s = _random_series(300, seed=1)
    eta = estimate_eta(s, THETA, SPEC, leave_one_out=loo)
    t = s.w @ [1, 1, 1]
    resid = s.y - s.x @ THETA.gamma1
    f, m, mp, ex, ew = brute_eta(t, t, resid, s.x, s.w, eta.source.h, exclude_self=loo)
    np.testing.assert_allclose(eta.eta_f, f, rtol=1e-12)
    np.testing.assert_allclose(eta.eta_m, m, rtol=1e-10, atol=1e-14)
    np.testing.assert_allclose(eta.eta_m_prime, mp, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(eta.eta_X, ex, rtol=1e-10, atol=1e-13)
    np.testing.assert_allclose(eta.eta_W, ew, rtol=1e-10, atol=1e-13)
    assert np.all(eta.eta_f >= 0)


def test_eta_at_matches_brute_force():
    s = _random_series(200, seed=2)
    pts = np.linspace(-6, 6, 37)
    h = 0.4
    eta = eta_at(pts, s, THETA, SPEC, h)
    t = s.w @ [1, 1, 1]
    f, m, mp, ex, ew = brute_eta(pts, t, s.y - s.x @ THETA.gamma1, s.x, s.w, h)
    for got, want in zip((eta.eta_f, eta.eta_m, eta.eta_m_prime, eta.eta_X, eta.eta_W), (f, m, mp, ex, ew)):
        np.testing.assert_allclose(got, want, rtol=1e-10, atol=1e-13)


def test_single_point_density():
    s = Series([2.0], [[0.0, 0.0]], [[0.3, 0.1, 0.2]])
    h = 0.7
    eta = estimate_eta(s, THETA, SPEC, KernelConfig.manual(h))
    assert eta.eta_f[0] == pytest.approx(kernel_eval(0.0) / h, rel=1e-15)


def test_constant_response_factors_out():
    s = _random_series(150, seed=3)
    c = 2.5
    flat = Series(np.full(s.n, c), s.x, s.w)
    eta = estimate_eta(flat, Theta([0.0, 0.0], [1.0, 1.0]), SPEC)
    np.testing.assert_allclose(eta.eta_m, c * eta.eta_f, rtol=1e-13)


def test_two_point_hand_value():
    spec = ModelSpec.plsim(0, 2)
    s = Series([0.0, 2.0], np.zeros((2, 0)), [[0.0, 0.0], [1.0, 0.0]])
    eta = estimate_eta(s, Theta([], [0.0]), spec, KernelConfig.manual(1.0))
    assert eta.eta_f[0] == pytest.approx(0.3204565, abs=1e-7)
    assert eta.eta_f[0] == pytest.approx((kernel_eval(0) + kernel_eval(1)) / 2, rel=1e-14)
    assert eta.eta_m[0] == pytest.approx(2 * kernel_eval(1) / 2, rel=1e-14)


def test_bandwidth_errors():
    with pytest.raises(ConfigError):
        KernelConfig.manual(0.0)
    with pytest.raises(ConfigError):
        KernelConfig.manual(-1.0)
    s = Series([1.0], [[0.0, 0.0]], [[0.0, 0.0, 0.0]])
    with pytest.raises(DomainError):
        estimate_eta(s, THETA, SPEC, KernelConfig.manual(1.0), leave_one_out=True)


def test_scaled_rate_bandwidth():
    t = np.random.default_rng(0).standard_normal(1000) * 3
    h = KernelConfig().bandwidth(t)
    assert h == pytest.approx(1000 ** (-0.2) / np.std(t, ddof=1))


def test_index_variance_design_value():
    S = np.array([[1, 0.5, 0.25], [0.5, 1, 0.5], [0.25, 0.5, 1]])
    g = np.ones(3)
    assert g @ S @ g == pytest.approx(5.5)
    assert index_variance(g, 0.25) == pytest.approx(88 / 15, rel=1e-14)


def test_oracle_with_self_training_reproduces_estimates():
    s = _random_series(400, seed=4)
    est = estimate_eta(s, THETA, SPEC)
    orc = oracle_eta(s, THETA, SPEC, train=s, true_index_density=lambda t: est.eta_f)
    for a, b in ((orc.eta_f, est.eta_f), (orc.eta_m, est.eta_m), (orc.eta_m_prime, est.eta_m_prime),
                 (orc.eta_X, est.eta_X), (orc.eta_W, est.eta_W)):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)


def test_oracle_requires_density():
    s = _random_series(50)
    with pytest.raises(ConfigError):
        oracle_eta(s, THETA, SPEC, s, None)


def test_gaussian_density_integrates_to_one():
    dens = gaussian_density(88 / 15)
    grid = np.linspace(-30, 30, 20001)
    assert np.trapezoid(dens(grid), grid) == pytest.approx(1.0, abs=1e-10)


def test_density_estimate_mass():
    s = _random_series(800, seed=5)
    eta = estimate_eta(s, THETA, SPEC)
    h = eta.source.h
    grid = np.linspace(eta.t.min() - 5 * h, eta.t.max() + 5 * h, 2000)
    f = eta_at(grid, s, THETA, SPEC, h).eta_f
    assert abs(np.trapezoid(f, grid) - 1.0) < 1e-3


def test_derivative_matches_finite_differences():
    # monotone link on a Gaussian index, n = 5000
    rng = np.random.default_rng(6)
    n = 5000
    w = rng.standard_normal((n, 3))
    t = w @ [1, 1, 1]
    y = np.tanh(t / 2) + 0.1 * rng.standard_normal(n)
    s = Series(y, np.zeros((n, 2)), w)
    th = Theta([0.0, 0.0], [1.0, 1.0])
    h = KernelConfig().bandwidth(t)
    pts = np.quantile(t, np.linspace(0.1, 0.9, 41))
    eta = eta_at(pts, s, th, SPEC, h)
    d = h / 10
    up = eta_at(pts + d, s, th, SPEC, h)
    dn = eta_at(pts - d, s, th, SPEC, h)
    Dm = (up.eta_m - dn.eta_m) / (2 * d)
    Df = (up.eta_f - dn.eta_f) / (2 * d)
    fd = eta.eta_f * Dm - eta.eta_m * Df
    rel = np.abs(eta.eta_m_prime - fd) / np.abs(fd)
    assert rel.max() < 0.02
    # the estimate has the sign of the increasing link
    assert np.all(eta.eta_m_prime > 0)


def test_translation_equivariance():
    s = _random_series(300, seed=7)
    c = 3.0
    shift = np.zeros(3)
    shift[0] = c  # moves the index by c under FixFirst
    moved = Series(s.y, s.x, s.w + shift)
    h = 0.5
    cfg = KernelConfig.manual(h)
    a = estimate_eta(s, THETA, SPEC, cfg)
    b = estimate_eta(moved, THETA, SPEC, cfg)
    np.testing.assert_allclose(b.t, a.t + c, atol=1e-12)
    np.testing.assert_allclose(b.eta_f, a.eta_f, atol=1e-12)
    np.testing.assert_allclose(b.eta_m, a.eta_m, atol=1e-12)
    np.testing.assert_allclose(b.eta_m_prime, a.eta_m_prime, atol=1e-11)
    np.testing.assert_allclose(b.eta_X, a.eta_X, atol=1e-12)
    # E[W|t] moves with the data
    np.testing.assert_allclose(b.eta_W, a.eta_W + a.eta_f[:, None] * shift, atol=1e-12)


def test_link_error_shrinks_with_sample_size():
    mse = []
    for n in (500, 5000):
        path = simulate(SimDesign(n=n, seed=8))
        eta = estimate_eta(path.series, THETA, SPEC)
        mse.append(np.mean((eta.m_hat - design51_link(eta.t)) ** 2))
    assert mse[1] < mse[0]


def test_conditional_means_match_ratios_of_sums():
    s = _random_series(300, seed=9)
    pts = np.linspace(-3, 3, 25)
    eta = eta_at(pts, s, THETA, SPEC, 0.4)
    m, mp, ex, ew = conditional_at(pts, s, THETA, SPEC, 0.4)
    np.testing.assert_allclose(m, eta.eta_m / eta.eta_f, rtol=1e-10)
    np.testing.assert_allclose(mp, eta.eta_m_prime / eta.eta_f**2, rtol=1e-8, atol=1e-12)
    np.testing.assert_allclose(ex, eta.eta_X / eta.eta_f[:, None], rtol=1e-10)
    np.testing.assert_allclose(ew, eta.eta_W / eta.eta_f[:, None], rtol=1e-10)


def test_oracle_is_finite_where_training_density_underflows():
    train = _random_series(200, seed=10)
    t = train.w @ [1, 1, 1]
    # a point 30 bandwidths past the training range: the raw density is ~1e-196
    h = KernelConfig().bandwidth(t)
    far = t.max() + 30 * h
    probe = Series([0.0], [[0.0, 0.0]], [[far, 0.0, 0.0]])
    assert eta_at([far], train, THETA, SPEC, h).eta_f[0] < 1e-150
    eta = oracle_eta(probe, THETA, SPEC, train, gaussian_density(3.0))
    assert np.all(np.isfinite(eta.eta_m_prime)) and np.all(np.isfinite(eta.eta_W))
    # log-domain weights give the same conditional mean
    logw = -0.5 * ((t - far) / h) ** 2
    wts = np.exp(logw - logw.max())
    resid = train.y - train.x @ THETA.gamma1
    assert eta.eta_m[0] / eta.eta_f[0] == pytest.approx(wts @ resid / wts.sum(), rel=1e-10)
    # beyond the kernel's numerical support the window follows the nearest point
    far = t.max() + 80 * h
    beyond = Series([0.0], [[0.0, 0.0]], [[far, 0.0, 0.0]])
    eta = oracle_eta(beyond, THETA, SPEC, train, gaussian_density(3.0))
    logw = -0.5 * ((t - far) / h) ** 2
    wts = np.exp(logw - logw.max())
    assert eta.eta_m[0] / eta.eta_f[0] == pytest.approx(wts @ resid / wts.sum(), rel=1e-10)
