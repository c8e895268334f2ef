import numpy as np
import pytest

from fracbridge.frac_calc import Grid, SampledPath
from fracbridge.noise import fbm_mandelbrot, liouville_from_wiener, p_h_operator, sample_two_sided_wiener
from fracbridge.sde import (
    ModelSpec, SimulationError, SlowSpec, check_off_diagonal_contraction, conditional_evolution,
    drift_divergence, drift_eval, effective_solve, euler_solve, linear_growth_constant, make_drift,
    slow_fast_solve,
)


def test_drift_catalog_values():
    y = np.array([[0.5], [-1.0]])
    assert np.allclose(drift_eval(make_drift("zero"), None, y), 0)
    assert np.allclose(drift_eval(make_drift("linear", rate=2.0), None, y), -2 * y)
    assert np.allclose(drift_eval(make_drift("tanh_well", a=2.0), None, y), -y + 2 * np.tanh(y))
    assert np.allclose(drift_eval(make_drift("sign"), None, y), -np.sign(y))
    assert np.allclose(drift_eval(make_drift("parametric_linear"), 0.3, y), -0.3 * y)
    with pytest.raises(ValueError):
        drift_eval(make_drift("parametric_linear"), None, y)


def test_divergence_matches_finite_differences():
    d = make_drift("tanh_well", a=1.5)
    y = np.array([[0.3], [1.2]])
    h = 1e-6
    fd = (drift_eval(d, None, y + h) - drift_eval(d, None, y - h))[:, 0] / (2 * h)
    assert np.allclose(drift_divergence(d, None, y), fd, atol=1e-6)
    assert drift_divergence(make_drift("sign"), None, y) is None


def test_model_validation():
    with pytest.raises(ValueError, match="hurst"):
        ModelSpec(make_drift("zero"), [[1.0]], 1.2)
    with pytest.raises(ValueError, match="invertible"):
        ModelSpec(make_drift("zero", dim=2), [[1.0, 1.0], [1.0, 1.0]], 0.5)
    with pytest.raises(ValueError):
        ModelSpec(make_drift("zero", dim=2), [[1.0]], 0.5)


@pytest.mark.parametrize("kind", ["linear", "tanh_well", "sign"])
def test_catalog_drifts_are_contractive(kind):
    chk = check_off_diagonal_contraction(make_drift(kind))
    assert chk.satisfied and chk.kappa_est > 0


def test_expanding_drift_fails_contraction():
    chk = check_off_diagonal_contraction(make_drift("linear", rate=-1.0))
    assert not chk.satisfied


def test_linear_growth_constant():
    assert linear_growth_constant(make_drift("linear", rate=3.0)) <= 3.0 + 1e-12


def test_euler_exact_for_zero_drift():
    W = sample_two_sided_wiener(5.0, 1.0, 0.01, seed=0, past_ratio=1.05)
    B = fbm_mandelbrot(W, 0.3)
    m = ModelSpec(make_drift("zero"), [[2.0]], 0.3)
    Y = euler_solve(m, None, B, [1.0])
    assert np.allclose(Y.values, 1.0 + 2.0 * B.values)


def test_euler_first_order_against_ou():
    # OU with H = 1/2: strong error of Euler is O(dt)
    m = ModelSpec(make_drift("linear", rate=1.0), [[1.0]], 0.5)
    fine = sample_two_sided_wiener(0.0, 1.0, 1 / 4096, seed=2, n_paths=200)
    dW = fine.future_increments[:, :, 0]
    t = fine.future_grid.times
    exact = np.exp(-1.0) * 1.0 + np.sum(np.exp(-(1.0 - t[1:, None])) * dW, axis=0)
    errs = []
    for n in (64, 256):
        k = 4096 // n
        inc = dW.reshape(n, k, -1).sum(axis=1)
        g = Grid.span(0.0, 1.0, n)
        drv = SampledPath(g, np.concatenate([np.zeros((1, 200)), np.cumsum(inc, 0)])[..., None])
        errs.append(np.mean(np.abs(euler_solve(m, None, drv, [1.0]).values[-1, :, 0] - exact)))
    assert errs[1] < errs[0] / 2


def test_decomposition_matches_direct_solve():
    H = 0.7
    W = sample_two_sided_wiener(10.0, 1.0, 0.01, seed=4, past_ratio=1.05)
    g = W.future_grid
    m = ModelSpec(make_drift("tanh_well"), [[0.8]], H)
    direct = euler_solve(m, None, fbm_mandelbrot(W, H, subgrid=False), [0.2])
    ell = SampledPath(g, 0.2 + p_h_operator(W, g, H).values * 0.8)
    split = conditional_evolution(m, None, ell, liouville_from_wiener(W, H))
    assert np.allclose(direct.values, split.values, atol=1e-12)


def test_blow_up_reported():
    m = ModelSpec(make_drift("linear", rate=-1e3), [[1.0]], 0.5)
    W = sample_two_sided_wiener(0.0, 1.0, 0.01, seed=0)
    with pytest.raises(SimulationError, match="step"):
        euler_solve(m, None, W.wiener_values(), [1e300])


def test_slow_fast_averages_toward_effective():
    fast = ModelSpec(make_drift("linear", rate=1.0), [[1.0]], 0.6)
    slow = SlowSpec(lambda x, y: -x + y)
    g = Grid.span(0.0, 1.0, 500)
    out = slow_fast_solve(slow, fast, 0.01, g, seed=0, x0=1.0, y0=0.0, n_paths=20)
    xbar = effective_solve(lambda x: -x, lambda x: np.ones_like(x), out.slow_noise,
                           np.full_like(out.x[0], 1.0), g)
    assert np.mean(np.abs(out.x[-1] - xbar[-1])) < 0.3
    with pytest.raises(ValueError):
        slow_fast_solve(slow, fast, 0.01, g, seed=0, x0=1.0, y0=0.0, hurst_slow=0.4)
