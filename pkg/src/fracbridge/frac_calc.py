"""Riemann-Liouville fractional integrals and derivatives on uniform grids.

Both operators act on the piecewise-linear interpolant of the sampled
values and integrate the kernel exactly on each cell, so they reduce to
lower-triangular weight matrices. Applying an operator is one matrix
product along the time axis, which makes the schemes linear and causal by
construction.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gamma

ZERO_TOL = 1e-9


@dataclass(frozen=True)
class Grid:
    """Uniform grid t0, t0 + dt, ..., t0 + n_steps*dt."""

    t0: float
    dt: float
    n_steps: int

    def __post_init__(self):
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"grid dt must be positive, got {self.dt}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"grid n_steps must be a positive integer, got {self.n_steps}")
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @classmethod
    def span(cls, t0: float, t1: float, n_steps: int) -> "Grid":
        return cls(float(t0), (float(t1) - float(t0)) / n_steps, n_steps)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_steps + 1)

    @property
    def t_end(self) -> float:
        return self.t0 + self.n_steps * self.dt

    def __len__(self):
        return self.n_steps + 1


@dataclass
class SampledPath:
    """Values of an R^n-valued function on a grid.

    `values` has the time axis first: shape (n_steps + 1, ..., n). Extra
    axes in the middle hold independent realizations.
    """

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        if self.values.shape[0] != self.grid.n_steps + 1:
            raise ValueError(
                f"expected {self.grid.n_steps + 1} values, got {self.values.shape[0]}"
            )

    @property
    def times(self):
        return self.grid.times

    @property
    def dim(self) -> int:
        return self.values.shape[-1]

    def with_values(self, values) -> "SampledPath":
        return SampledPath(self.grid, values)


SampledFunction = SampledPath


def _check_alpha(alpha):
    if not 0 < alpha < 1:
        raise ValueError(f"order must lie in (0, 1), got {alpha}")


def _check_anchor(f: SampledPath):
    if abs(f.grid.t0) > 1e-12 * max(1.0, f.grid.dt):
        raise ValueError(f"fractional operators are anchored at t0 = 0, got t0 = {f.grid.t0}")
    if f.values.size == 0:
        raise ValueError("empty function")


@lru_cache(maxsize=64)
def integral_matrix(n_steps: int, dt: float, alpha: float) -> np.ndarray:
    """Product-trapezoid weights M with (I^alpha f)(t_k) = sum_j M[k, j] f_j."""
    _check_alpha(alpha)
    n = n_steps
    k = np.arange(n + 1, dtype=float)
    p = alpha + 1.0
    # interior weights depend on m = k - j only
    m = np.arange(n + 1, dtype=float)
    inner = np.zeros(n + 1)
    inner[0] = 1.0
    inner[1:] = (m[1:] + 1) ** p - 2 * m[1:] ** p + (m[1:] - 1) ** p
    idx = np.arange(n + 1)
    lag = idx[:, None] - idx[None, :]
    mat = np.where(lag >= 0, inner[np.clip(lag, 0, n)], 0.0)
    first = np.zeros(n + 1)
    first[1:] = (k[1:] - 1) ** p - (k[1:] - p) * k[1:] ** alpha
    mat[:, 0] = first
    mat[0, :] = 0.0
    mat *= dt**alpha / gamma(alpha + 2.0)
    mat.setflags(write=False)
    return mat


@lru_cache(maxsize=64)
def derivative_matrix(n_steps: int, dt: float, alpha: float) -> np.ndarray:
    """Weights of the exact derivative of I^(1-alpha) on piecewise-linear data.

    On cell i the interpolant has slope (f_{i+1} - f_i)/dt, which gives
    (D^alpha f)(t_k) = dt^-alpha/Gamma(2-alpha) * sum_i d_{k-i} (f_{i+1} - f_i)
    with d_m = m^(1-alpha) - (m-1)^(1-alpha). The value at node 0 is the
    limit of the first-cell formula, which is 0.
    """
    _check_alpha(alpha)
    n = n_steps
    q = 1.0 - alpha
    m = np.arange(n + 2, dtype=float)
    d = np.zeros(n + 2)
    d[1:] = m[1:] ** q - (m[1:] - 1) ** q
    idx = np.arange(n + 1)
    lag = idx[:, None] - idx[None, :]
    # coefficient of f_j: +d_{k-j+1} from cell j-1 (j >= 1), -d_{k-j} from cell j (j < k)
    plus = np.where((lag >= 0) & (idx[None, :] >= 1), d[np.clip(lag + 1, 0, n + 1)], 0.0)
    minus = np.where(lag >= 1, d[np.clip(lag, 0, n + 1)], 0.0)
    mat = (plus - minus) * (dt ** (-alpha) / gamma(2.0 - alpha))
    mat[0, :] = 0.0
    mat.setflags(write=False)
    return mat


def apply_matrix(mat: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Apply a time-by-time matrix along the leading axis of `values`."""
    shape = values.shape
    out = mat @ values.reshape(shape[0], -1)
    return out.reshape((mat.shape[0],) + shape[1:])


def rl_integral(f: SampledPath, alpha: float) -> SampledPath:
    """Left-sided Riemann-Liouville integral of order alpha in (0, 1)."""
    _check_alpha(alpha)
    _check_anchor(f)
    g = f.grid
    return f.with_values(apply_matrix(integral_matrix(g.n_steps, g.dt, float(alpha)), f.values))


def rl_derivative(f: SampledPath, alpha: float, tol: float = ZERO_TOL) -> SampledPath:
    """Left-sided Riemann-Liouville derivative of order alpha in (0, 1).

    Requires f(0) = 0 up to tol*(1 + max|f|); a nonzero start is reported,
    not subtracted.
    """
    _check_alpha(alpha)
    _check_anchor(f)
    v = f.values
    scale = 1.0 + np.max(np.abs(v))
    if np.max(np.abs(v[0])) > tol * scale:
        raise ValueError(
            f"rl_derivative needs f(0) = 0, got max |f(0)| = {np.max(np.abs(v[0])):.3e}"
        )
    g = f.grid
    return f.with_values(apply_matrix(derivative_matrix(g.n_steps, g.dt, float(alpha)), v))


def frac_op(f: SampledPath, order: float) -> SampledPath:
    """I^order for order in (-1, 1): integral if positive, derivative if negative."""
    order = float(order)
    if not -1 < order < 1:
        raise ValueError(f"order must lie in (-1, 1), got {order}")
    if order == 0:
        return f
    if order > 0:
        return rl_integral(f, order)
    return rl_derivative(f, -order)


def frac_matrix(n_steps: int, dt: float, order: float) -> np.ndarray:
    """Matrix form of frac_op; identity for order 0."""
    if order == 0:
        return np.eye(n_steps + 1)
    if order > 0:
        return integral_matrix(n_steps, dt, float(order))
    return derivative_matrix(n_steps, dt, float(-order))
