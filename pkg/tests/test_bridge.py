import numpy as np
import pytest

from fracbridge.bridge import (
    BridgeEndpoint, bridge_conditional_moments, bridge_drift_k, bridge_factor,
    deterministic_drift_mean, endpoint_functional, holder_norm, sample_bridge_exact, sample_bridge_sde,
)
from fracbridge.frac_calc import Grid


def test_brownian_bridge_moments_at_half():
    g = Grid.span(0.0, 2.0, 40)
    m, C = bridge_conditional_moments(g, 0.5)
    t = g.times
    assert np.allclose(m, t / 2.0)
    assert np.allclose(np.diag(C), t[1:] * (2.0 - t[1:]) / 2.0, atol=1e-12)


@pytest.mark.parametrize("H", [0.3, 0.5, 0.7])
def test_sde_bridge_hits_endpoint_exactly(H):
    g = Grid.span(0.0, 1.0, 100)
    ep = BridgeEndpoint([0.7], 1.0)
    p = sample_bridge_sde(ep, g, H, seed=1, n_paths=50)
    assert np.max(np.abs(endpoint_functional(p, H) - 0.7)) < 1e-12


@pytest.mark.parametrize("H", [0.3, 0.7])
def test_exact_bridge_endpoint_error_shrinks(H):
    ep = BridgeEndpoint([0.5], 1.0)
    errs = []
    for n in (50, 200, 800):
        p = sample_bridge_exact(ep, Grid.span(0.0, 1.0, n), H, seed=0, n_paths=400)
        errs.append(np.sqrt(np.mean((endpoint_functional(p, H) - 0.5) ** 2)))
    rate = np.log(errs[0] / errs[-1]) / np.log(16)
    assert rate > 0.8 * min(H, 0.5)


def test_conditional_covariance_is_psd():
    for H in (0.2, 0.5, 0.8):
        f = bridge_factor(60, 1 / 60, H)
        assert np.linalg.eigvalsh(f.cond_cov).min() > -1e-10
        assert not f.chol.flags.writeable


@pytest.mark.parametrize("H", [0.3, 0.7])
def test_samplers_agree_at_mid_time(H):
    g = Grid.span(0.0, 1.0, 400)
    ep = BridgeEndpoint([1.0], 1.0)
    a = sample_bridge_exact(ep, g, H, seed=4, n_paths=4000).x_values[200, :, 0]
    b = sample_bridge_sde(ep, g, H, seed=5, n_paths=4000).x_values[200, :, 0]
    se = np.sqrt(a.var() / a.size + b.var() / b.size)
    assert abs(a.mean() - b.mean()) < 4 * se
    se_v = np.sqrt(2 / 4000) * (a.var() + b.var()) / np.sqrt(2)
    assert abs(a.var() - b.var()) < 4 * se_v + 0.005


def test_drift_k_mean():
    g = Grid.span(0.0, 1.0, 400)
    ep = BridgeEndpoint([1.0], 1.0)
    p = sample_bridge_sde(ep, g, 0.7, seed=3, n_paths=3000)
    K = bridge_drift_k(ep, g, p.dw_increments, 0.7).values[-1]
    assert abs(K.mean() - deterministic_drift_mean(ep, 0.7)[0]) < 0.05
    with pytest.raises(ValueError):
        bridge_drift_k(ep, g, None, 0.7)


def test_multidim_endpoint_and_determinism():
    g = Grid.span(0.0, 1.0, 50)
    ep = BridgeEndpoint([1.0, -2.0], 1.0)
    a = sample_bridge_sde(ep, g, 0.4, seed=11, n_paths=7)
    b = sample_bridge_sde(ep, g, 0.4, seed=11, n_paths=7)
    assert a.x_values.shape == (51, 7, 2)
    assert np.array_equal(a.x_values, b.x_values)
    assert np.allclose(endpoint_functional(a, 0.4), [1.0, -2.0], atol=1e-12)


def test_grid_must_span_horizon():
    with pytest.raises(ValueError, match="span"):
        sample_bridge_exact(BridgeEndpoint([0.0], 2.0), Grid.span(0.0, 1.0, 10), 0.5, seed=0)


def test_holder_norm_of_linear_path():
    t = np.linspace(0, 1, 101)
    assert holder_norm(2 * t, 0.01, 1.0) == pytest.approx(4.0)
