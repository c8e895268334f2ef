"""Densities of fractional SDEs via fractional bridges and Girsanov reweighting."""
from .frac_calc import Grid, SampledPath, rl_derivative, rl_integral
from .noise import (
    FbmPath,
    alpha_h,
    fbm_exact,
    fbm_mandelbrot,
    fou_stationary_variance,
    sample_two_sided_wiener,
)
from .bridge import BridgeEndpoint, BridgePath, sample_bridge_exact, sample_bridge_sde
from .sde import DriftSpec, ModelSpec, euler_solve, make_drift
from .density import (
    DensityEstimate,
    conditional_density,
    parametric_stationary_sweep,
    stationary_density,
    transition_density,
)
from .validate import EXPERIMENTS, ExperimentReport

__all__ = [
    "Grid", "SampledPath", "rl_integral", "rl_derivative",
    "FbmPath", "alpha_h", "fbm_exact", "fbm_mandelbrot", "fou_stationary_variance",
    "sample_two_sided_wiener",
    "BridgeEndpoint", "BridgePath", "sample_bridge_exact", "sample_bridge_sde",
    "DriftSpec", "ModelSpec", "euler_solve", "make_drift",
    "DensityEstimate", "conditional_density", "parametric_stationary_sweep",
    "stationary_density", "transition_density",
    "EXPERIMENTS", "ExperimentReport",
]
__version__ = "0.1.0"
