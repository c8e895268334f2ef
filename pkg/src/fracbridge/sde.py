"""Drift catalog, Euler schemes and the slow-fast system.

The model is dY = b(Y) dt + sigma dB with additive fractional noise. All
steppers accept paths with extra batch axes, shape (N+1, *batch, n).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _rng
from .frac_calc import Grid, SampledPath
from .noise import fbm_mandelbrot, sample_two_sided_wiener

DRIFT_KINDS = ("zero", "linear", "tanh_well", "sign", "parametric_linear")


@dataclass(frozen=True)
class DriftSpec:
    """A catalog drift b(y) or b(lambda, y).

    zero: 0; linear: -A y; tanh_well: -y + a tanh(y); sign: -scale sign(y);
    parametric_linear: -lambda * y with lambda a rate (scalar or per
    component) supplied at evaluation time.
    """

    kind: str
    dim: int = 1
    matrix: Optional[tuple] = None
    a: float = 2.0
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in DRIFT_KINDS:
            raise ValueError(f"unknown drift kind {self.kind!r}; known: {', '.join(DRIFT_KINDS)}")
        if self.dim < 1:
            raise ValueError("drift dimension must be >= 1")
        if self.kind == "linear":
            A = self.lin_matrix
            if A.shape != (self.dim, self.dim):
                raise ValueError(f"linear drift matrix must be {self.dim}x{self.dim}")

    @property
    def lin_matrix(self) -> np.ndarray:
        if self.matrix is None:
            return np.eye(self.dim)
        return np.atleast_2d(np.asarray(self.matrix, dtype=float))

    @property
    def is_parametric(self) -> bool:
        return self.kind == "parametric_linear"

    def __call__(self, y, lam=None):
        return drift_eval(self, lam, y)

    def linear_rate(self, lam=None) -> Optional[np.ndarray]:
        """Matrix A when b(y) = -A y, else None."""
        if self.kind == "linear":
            return self.lin_matrix
        if self.kind == "parametric_linear":
            if lam is None:
                raise ValueError("parametric drift needs a lambda value")
            return np.diag(np.broadcast_to(np.asarray(lam, dtype=float), (self.dim,)))
        return None


def make_drift(name: str, dim: int = 1, **params) -> DriftSpec:
    """Catalog lookup by name, e.g. make_drift('tanh_well', a=2)."""
    if name == "linear" and "rate" in params:
        r = np.broadcast_to(np.asarray(params.pop("rate"), dtype=float), (dim,))
        params["matrix"] = tuple(map(tuple, np.diag(r)))
    if "matrix" in params and params["matrix"] is not None:
        params["matrix"] = tuple(map(tuple, np.atleast_2d(np.asarray(params["matrix"], float))))
    return DriftSpec(name, dim, **params)


def drift_eval(d: DriftSpec, lam, y):
    """b(lambda, y) for y of shape (..., n)."""
    y = np.asarray(y, dtype=float)
    k = d.kind
    if k == "zero":
        return np.zeros_like(y)
    if k == "linear":
        return -y @ d.lin_matrix.T
    if k == "tanh_well":
        return -y + d.a * np.tanh(y)
    if k == "sign":
        return -d.scale * np.sign(y)
    if lam is None:
        raise ValueError("parametric drift needs a lambda value")
    return -np.asarray(lam, dtype=float) * y


def drift_divergence(d: DriftSpec, lam, y):
    """Trace of the Jacobian of b at y; None for the sign drift (not differentiable)."""
    y = np.asarray(y, dtype=float)
    k = d.kind
    if k == "zero":
        return np.zeros(y.shape[:-1])
    if k == "linear":
        return np.full(y.shape[:-1], -np.trace(d.lin_matrix))
    if k == "tanh_well":
        return np.sum(-1.0 + d.a / np.cosh(y) ** 2, axis=-1)
    if k == "parametric_linear":
        if lam is None:
            raise ValueError("parametric drift needs a lambda value")
        return np.full(y.shape[:-1], -float(np.sum(np.broadcast_to(lam, (d.dim,)))))
    return None


def linear_growth_constant(d: DriftSpec, lam=None, radius=50.0, samples=2000, seed=0):
    """Empirical C with |b(y)| <= C (1 + |y|) on a ball."""
    rng = _rng.generator(seed, _rng.CONTRACTION, 1)
    y = rng.uniform(-radius, radius, size=(samples, d.dim))
    b = drift_eval(d, lam, y)
    return float(np.max(np.linalg.norm(b, axis=-1) / (1 + np.linalg.norm(y, axis=-1))))


@dataclass(frozen=True)
class ModelSpec:
    drift: DriftSpec
    sigma: np.ndarray
    hurst: float

    def __post_init__(self):
        if not 0 < self.hurst < 1:
            raise ValueError(f"hurst must lie in (0, 1), got {self.hurst}")
        s = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        if s.shape != (self.drift.dim, self.drift.dim):
            raise ValueError(f"sigma must be {self.drift.dim}x{self.drift.dim}, got {s.shape}")
        if not np.isfinite(self.condition_number_of(s)):
            raise ValueError("sigma must be invertible")
        s.setflags(write=False)
        object.__setattr__(self, "sigma", s)

    @staticmethod
    def condition_number_of(s):
        c = np.linalg.cond(s)
        return c if c < 1e14 else np.inf

    @property
    def dim(self) -> int:
        return self.drift.dim

    @property
    def condition_number(self) -> float:
        return float(np.linalg.cond(self.sigma))

    @property
    def sigma_inv(self) -> np.ndarray:
        return np.linalg.inv(self.sigma)


@dataclass
class ContractionCheck:
    C_est: float
    kappa_est: float
    violations: Optional[int]
    satisfied: bool


def check_off_diagonal_contraction(d: DriftSpec, lam=None, sample_count=4000, radius=10.0,
                                   C=None, kappa=None, seed=0) -> ContractionCheck:
    """Fit <b(y)-b(z), y-z> <= C - kappa |y-z|^2 on random pairs in a ball.

    kappa_est is the smallest ratio -<b(y)-b(z), y-z>/|y-z|^2 among the
    10% most separated pairs (the large-distance slope); C_est is then the
    least C that makes every sampled pair satisfy the bound.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    rng = _rng.generator(seed, _rng.CONTRACTION, 0)

    def ball(m):
        g = rng.standard_normal((m, d.dim))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        return g * radius * rng.uniform(0, 1, (m, 1)) ** (1.0 / d.dim)

    y, z = ball(sample_count), ball(sample_count)
    diff = y - z
    ip = np.sum((drift_eval(d, lam, y) - drift_eval(d, lam, z)) * diff, axis=1)
    r2 = np.sum(diff * diff, axis=1)
    far = r2 >= np.quantile(r2, 0.9)
    kappa_est = max(0.0, float(np.min(-ip[far] / r2[far])))
    C_est = max(0.0, float(np.max(ip + kappa_est * r2)))
    viol = None
    if C is not None and kappa is not None:
        viol = int(np.sum(ip > C - kappa * r2 + 1e-12))
    return ContractionCheck(C_est, kappa_est, viol, kappa_est > 0)


class SimulationError(FloatingPointError):
    pass


def _euler(b: Callable, y0, dt, incs):
    """Y_{k+1} = Y_k + b(Y_k) dt + incs_k."""
    N = incs.shape[0]
    Y = np.empty((N + 1,) + incs.shape[1:])
    Y[0] = y0
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(N):
            Y[k + 1] = Y[k] + b(Y[k]) * dt + incs[k]
            if not np.all(np.isfinite(Y[k + 1])):
                raise SimulationError(f"non-finite state at step {k + 1}")
    return Y


def euler_solve(m: ModelSpec, lam, driving: SampledPath, y0, grid: Optional[Grid] = None) -> SampledPath:
    """Explicit Euler for dY = b(Y) dt + sigma dD along a given noise path D."""
    grid = driving.grid if grid is None else grid
    if grid != driving.grid:
        raise ValueError("driving path is not on the solver grid")
    inc = np.diff(driving.values, axis=0) @ m.sigma.T
    y0 = np.broadcast_to(np.asarray(y0, dtype=float), inc.shape[1:])
    return SampledPath(grid, _euler(lambda y: drift_eval(m.drift, lam, y), y0, grid.dt, inc))


def conditional_evolution(m: ModelSpec, lam, ell: SampledPath, liouville: SampledPath,
                          grid: Optional[Grid] = None) -> SampledPath:
    """Euler scheme for Phi_t = ell(t) + int_0^t b(Phi) ds + sigma B~_t."""
    grid = ell.grid if grid is None else grid
    if ell.grid != grid or liouville.grid != grid:
        raise ValueError("ell and the Liouville path must share the solver grid")
    inc = np.diff(liouville.values, axis=0) @ m.sigma.T
    dl = np.diff(ell.values, axis=0)
    inc = inc + dl if np.any(dl) else inc
    y0 = np.broadcast_to(ell.values[0], inc.shape[1:])
    return SampledPath(grid, _euler(lambda y: drift_eval(m.drift, lam, y), y0, grid.dt, inc))


@dataclass
class SlowSpec:
    """Slow coefficients f(x, y) and g(x) of the slow-fast system."""

    f: Callable
    g: Callable = field(default=lambda x: np.ones_like(x))


@dataclass
class SlowFastPaths:
    grid: Grid
    x: np.ndarray
    y: np.ndarray
    slow_noise: np.ndarray


def slow_fast_solve(slow: SlowSpec, fast_model: ModelSpec, eps: float, grid: Grid, seed,
                    x0=0.0, y0=0.0, hurst_slow=0.75, n_paths=None, stream=0,
                    T_past=None, fast_lam=None) -> SlowFastPaths:
    """Slow-fast system with independent fBms B (slow) and B^ (fast).

        X_{k+1} = X_k + f(X_k, Y_k) dt + g(X_k) dB_k
        Y_{k+1} = Y_k + b(Y_k) dt/eps + sigma dB^_k / eps^H^

    The fast noise eps^-H^ dB^ is the increment of the time-rescaled fBm
    B^(t/eps), equal in law by self-similarity. Fast drift may depend on
    x through `fast_lam(x)` (returns the drift parameter).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if not hurst_slow > 0.5:
        raise ValueError("slow noise needs hurst > 1/2 (Young regime)")
    T = grid.t_end
    Tp = 10 * T if T_past is None else T_past
    kw = dict(dim=fast_model.dim, n_paths=n_paths, past_ratio=1.05)
    Wb = sample_two_sided_wiener(Tp, T, grid.dt, seed, 2 * stream, **kw)
    Wf = sample_two_sided_wiener(Tp, T, grid.dt, seed, 2 * stream + 1, **kw)
    B = fbm_mandelbrot(Wb, hurst_slow).values
    Bh = fbm_mandelbrot(Wf, fast_model.hurst).values
    dB, dBh = np.diff(B, axis=0), np.diff(Bh, axis=0) @ fast_model.sigma.T
    N = grid.n_steps
    X = np.empty_like(B)
    Y = np.empty_like(B)
    X[0], Y[0] = x0, y0
    dt = grid.dt
    fast_scale = eps ** (-fast_model.hurst)
    for k in range(N):
        x, y = X[k], Y[k]
        lam = None if fast_lam is None else fast_lam(x)
        X[k + 1] = x + slow.f(x, y) * dt + slow.g(x) * dB[k]
        Y[k + 1] = y + drift_eval(fast_model.drift, lam, y) * (dt / eps) + fast_scale * dBh[k]
        if not (np.all(np.isfinite(X[k + 1])) and np.all(np.isfinite(Y[k + 1]))):
            raise SimulationError(f"non-finite state at step {k + 1}")
    return SlowFastPaths(grid, X, Y, B)


def effective_solve(fbar: Callable, gbar: Callable, slow_noise: np.ndarray, x0, grid: Grid):
    """Euler/Young scheme for dX = fbar(X) dt + gbar(X) dB along a given B."""
    dB = np.diff(slow_noise, axis=0)
    X = np.empty_like(slow_noise)
    X[0] = x0
    for k in range(grid.n_steps):
        X[k + 1] = X[k] + fbar(X[k]) * grid.dt + gbar(X[k]) * dB[k]
    return X
