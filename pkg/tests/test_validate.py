import json

import numpy as np
import pytest

from fracbridge import validate as V
from fracbridge.sde import ModelSpec, make_drift


def test_sandwich_lp_on_exact_gaussian():
    y = np.linspace(-3, 3, 13)
    z = y**2
    logp = -0.5 * z - 0.5 * np.log(2 * np.pi)
    fit = V.sandwich_lp(z, logp, np.full_like(z, 1e-3))
    assert fit.feasible
    assert fit.c_lower == pytest.approx(0.5, abs=1e-6) and fit.c_upper == pytest.approx(0.5, abs=1e-6)


def test_sandwich_lp_bounds_contain_data():
    y = np.linspace(-3, 3, 9)
    z = y**2
    logp = np.log(np.exp(-0.5 * (y - 1) ** 2) + np.exp(-0.5 * (y + 1) ** 2))
    s = np.full_like(z, 0.01)
    fit = V.sandwich_lp(z, logp, s)
    assert fit.feasible and fit.c_lower >= fit.c_upper
    assert np.all(fit.logC_lower - fit.c_lower * z <= logp + s + 1e-9)
    assert np.all(fit.logC_upper - fit.c_upper * z >= logp - s - 1e-9)


def test_report_json_is_sorted():
    rep = V.ExperimentReport("x", {"b": 1, "a": np.float64(2.0)}, {"z": np.arange(2)}, "pass")
    d = json.loads(rep.to_json())
    assert list(d) == sorted(d)
    assert d["inputs"] == {"a": 2.0, "b": 1} and d["metrics"]["z"] == [0, 1]
    assert rep.passed


def test_chapman_kolmogorov_linear():
    m = ModelSpec(make_drift("linear"), [[1.0]], 0.5)
    rep = V.check_chapman_kolmogorov(m, n_outer=500, n_inner=50)
    assert rep.passed, rep.metrics


def test_nonstationary_bounds_small():
    m = ModelSpec(make_drift("linear"), [[1.0]], 0.7)
    rep = V.check_nonstationary_bounds(m, y0_list=(0.0,), t_list=(0.5,), n_outer=100, n_inner=50)
    assert rep.passed, rep.metrics


def test_tv_exact_route_decreases():
    m = ModelSpec(make_drift("linear"), [[1.0]], 0.3)
    rep = V.check_tv_convergence(m)
    tv = rep.metrics["tv"]
    assert rep.passed and tv[-1] < tv[0]


def test_tv_histogram_route():
    m = ModelSpec(make_drift("tanh_well"), [[1.0]], 0.5)
    rep = V.check_tv_convergence(m, t_list=(1.0, 4.0), n_paths=4000, bins=64)
    assert rep.metrics["method"] == "histogram" and rep.passed


def test_holder_distance_rejects_bad_alpha():
    with pytest.raises(ValueError, match="Holder"):
        V.check_averaging(alphas=(0.9,))


def test_holder_distance_of_line():
    d = np.linspace(0, 1, 11)[:, None, None]
    assert V.holder_distance(d, 0.1, 1.0)[0] == pytest.approx(1.0)


def test_experiment_registry():
    assert "chapman_kolmogorov" in V.EXPERIMENTS and len(set(V.EXPERIMENTS)) == 5
