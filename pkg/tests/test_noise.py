import numpy as np
import pytest
from scipy import integrate
from scipy.special import gamma

from fracbridge.frac_calc import Grid
from fracbridge.noise import (
    alpha_h, fbm_covariance, fbm_exact, fbm_mandelbrot, fou_exact_moments, fou_stationary_variance,
    fou_variance_factor, liouville_from_wiener, liouville_ou_variance_factor, liouville_variance,
    past_edges, sample_two_sided_wiener, truncation_variance,
)


@pytest.mark.parametrize("H", [0.2, 0.35, 0.5, 0.65, 0.8])
def test_alpha_h_normalizes_mandelbrot_integral(H):
    # Var B_1 = alpha^2 [ int_0^inf ((1+u)^(H-1/2) - u^(H-1/2))^2 du + 1/(2H) ]
    k = lambda u: ((1 + u) ** (H - 0.5) - u ** (H - 0.5)) ** 2
    past = integrate.quad(k, 0, 1)[0] + integrate.quad(k, 1, np.inf)[0]
    assert alpha_h(H) ** 2 * (past + 1 / (2 * H)) == pytest.approx(1.0, rel=1e-8)
    assert alpha_h(0.5) == 1.0


def test_wiener_sampler_is_pure_and_stream_separated():
    a = sample_two_sided_wiener(2.0, 1.0, 0.01, seed=3, stream=1)
    b = sample_two_sided_wiener(2.0, 1.0, 0.01, seed=3, stream=1)
    c = sample_two_sided_wiener(2.0, 1.0, 0.01, seed=3, stream=2)
    assert np.array_equal(a.increments, b.increments)
    assert not np.array_equal(a.increments, c.increments)
    assert a.past_grid is not None and a.T_past == pytest.approx(2.0)


def test_graded_past_edges():
    e = past_edges(100.0, 0.01, 1.0, 1.05)
    w = np.diff(e)
    assert e[0] == pytest.approx(-100.0) and e[-1] == 0.0
    assert np.all(w > 0) and w.size < 2000
    assert np.allclose(w[-100:], 0.01)


def test_wiener_increment_variance():
    W = sample_two_sided_wiener(5.0, 1.0, 0.01, seed=0, n_paths=4000, past_ratio=1.05)
    widths = np.concatenate([np.diff(W.past_edges), np.full(100, 0.01)])
    ratio = W.increments[..., 0].var(axis=1) / widths
    assert abs(ratio.mean() - 1) < 0.01


@pytest.mark.parametrize("H", [0.3, 0.7])
def test_liouville_variance(H):
    W = sample_two_sided_wiener(0.0, 1.0, 0.01, seed=1, n_paths=20000)
    v = liouville_from_wiener(W, H).values[-1, :, 0].var()
    se = liouville_variance(H, 1.0) * np.sqrt(2 / 20000)
    # cell-averaged kernel adds a small O(dt) bias
    assert abs(v - liouville_variance(H, 1.0)) < 4 * se + 0.01


def test_liouville_h_half_is_wiener():
    W = sample_two_sided_wiener(0.0, 1.0, 0.01, seed=1)
    assert np.allclose(liouville_from_wiener(W, 0.5).values, W.wiener_values().values)


@pytest.mark.parametrize("H", [0.3, 0.7])
def test_mandelbrot_covariance(H):
    W = sample_two_sided_wiener(20.0, 1.0, 0.05, seed=2, n_paths=20000, past_ratio=1.05)
    B = fbm_mandelbrot(W, H).values[..., 0]
    assert np.all(B[0] == 0)
    emp = np.cov(B[[10, 20]])
    ex = fbm_covariance(np.array([0.5, 1.0]), H)
    tv = truncation_variance(H, 1.0, 20.0)
    assert np.allclose(emp, ex, atol=0.05 + tv)


def test_fbm_exact_moments():
    g = Grid.span(0.0, 1.0, 20)
    B = fbm_exact(g, 0.3, seed=5, n_paths=20000).values[..., 0]
    emp = np.cov(B[1:])
    assert np.max(np.abs(emp - fbm_covariance(g.times[1:], 0.3))) < 0.05


def test_fbm_exact_multidim_independent_components():
    g = Grid.span(0.0, 1.0, 10)
    B = fbm_exact(g, 0.7, seed=5, n_paths=20000, dim=2).values
    c = np.corrcoef(B[-1, :, 0], B[-1, :, 1])[0, 1]
    assert abs(c) < 0.03


def test_truncation_variance_vanishes_at_half():
    assert truncation_variance(0.5, 1.0, 10.0) == pytest.approx(0.0, abs=1e-14)
    assert truncation_variance(0.75, 1.0, 100.0) > truncation_variance(0.75, 1.0, 1000.0)


def test_fou_moments_reduce_to_ou():
    lam, t = 1.3, 0.7
    ou = (1 - np.exp(-2 * lam * t)) / (2 * lam)
    assert fou_variance_factor(lam, 0.5, t) == pytest.approx(ou, rel=1e-9)
    f, c = fou_exact_moments(lam, [[2.0]], 0.5, t)
    assert f == pytest.approx(np.exp(-lam * t)) and c[0, 0] == pytest.approx(4 * ou, rel=1e-9)


@pytest.mark.parametrize("H", [0.3, 0.5, 0.7])
@pytest.mark.parametrize("lam", [0.5, 1.0, 2.0])
def test_fou_stationary_closed_form(H, lam):
    v = fou_stationary_variance(lam, [[1.0]], H)[0, 0]
    assert v == pytest.approx(H * gamma(2 * H) * lam ** (-2 * H), rel=1e-6)


def test_fou_variance_matches_monte_carlo():
    g = Grid.span(0.0, 1.0, 400)
    B = fbm_exact(g, 0.7, seed=9, n_paths=4000).values[..., 0]
    Y = np.zeros(B.shape[1])
    for k in range(400):
        Y = Y - Y * g.dt + (B[k + 1] - B[k])
    v = fou_variance_factor(1.0, 0.7, 1.0)
    assert abs(Y.var() - v) < 4 * v * np.sqrt(2 / 4000) + 0.005


def test_liouville_ou_h_half():
    assert liouville_ou_variance_factor(1.0, 0.5, 1.0) == pytest.approx((1 - np.exp(-2)) / 2, rel=1e-8)


def test_invalid_hurst():
    with pytest.raises(ValueError, match="hurst"):
        alpha_h(1.2)


@pytest.mark.parametrize("H", [0.25, 0.75])
def test_tail_slope_carries_truncated_variance(H):
    from fracbridge.noise import tail_slope_std
    assert tail_slope_std(H, 100.0) ** 2 == pytest.approx(truncation_variance(H, 1.0, 100.0), rel=0.02)
    assert truncation_variance(H, 1.0, 100.0, corrected=True) < 1e-6


@pytest.mark.parametrize("H", [0.25, 0.75])
def test_node_variance_is_exact_after_subcell_residual(H):
    from fracbridge.noise import history_weights, liouville_matrix, subgrid_std, tail_slope_std
    W = sample_two_sided_wiener(100.0, 1.0, 0.01, seed=0, past_ratio=1.05)
    g = W.future_grid
    hv = np.sum(history_weights(W, 0.0, g, H)[-1] ** 2 * np.diff(W.past_edges))
    lv = np.sum(liouville_matrix(g.n_steps, g.dt, H)[-1] ** 2) * g.dt
    total = hv + lv + tail_slope_std(H, 100.0) ** 2 + 2 * subgrid_std(H, 0.01) ** 2
    assert total == pytest.approx(1.0, abs=5e-4)


def test_subgrid_switch_only_adds_residual():
    W = sample_two_sided_wiener(10.0, 1.0, 0.01, seed=1, past_ratio=1.05)
    a = fbm_mandelbrot(W, 0.3).values
    b = fbm_mandelbrot(W, 0.3, subgrid=False).values
    from fracbridge.noise import subgrid_std
    assert np.allclose(a[1:] - b[1:], subgrid_std(0.3, 0.01) * W.subgrid[1:])
    assert np.all(a[0] == 0)
