"""Wiener-Liouville bridges: Wiener paths conditioned on the Liouville endpoint.

Two samplers are provided. Exact conditioning uses the joint Gaussian law
of the Wiener values on the grid and of B~_T; it is the default. The SDE
sampler integrates the path-dependent bridge equation

    dX = (2H/a)(T-t)^(H-1/2) (x/T^(2H) - a int_0^t (T-s)^(-H-1/2) dW_s) dt + dW,

a = alpha_H, with the last increment solved so that the discrete
endpoint functional equals x.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from . import _rng
from .frac_calc import Grid, SampledPath, apply_matrix
from .noise import alpha_h, cholesky_jitter, kernel_average

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BridgeEndpoint:
    x: np.ndarray
    T: float

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("bridge horizon T must be positive")
        object.__setattr__(self, "x", np.atleast_1d(np.asarray(self.x, dtype=float)))


@dataclass
class BridgePath:
    """Bridge values (N+1, *batch, n) on [0, T]; dw_increments only for the SDE sampler."""

    grid: Grid
    x_values: np.ndarray
    dw_increments: Optional[np.ndarray] = None
    method: str = "exact_conditioning"
    endpoint: Optional[BridgeEndpoint] = None


def _check_grid(grid: Grid, T: float):
    if abs(grid.t0) > 0 or abs(grid.t_end - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"bridge grid must span [0, {T}], got [{grid.t0}, {grid.t_end}]")


@lru_cache(maxsize=32)
def endpoint_weights(n_steps: int, dt: float, H: float) -> np.ndarray:
    """alpha_H times the cell averages of (T - s)^(H-1/2), T = n_steps*dt."""
    T = n_steps * dt
    j = np.arange(n_steps)
    w = alpha_h(H) * kernel_average(T, j * dt, (j + 1) * dt, H)
    w.setflags(write=False)
    return w


@dataclass(frozen=True)
class BridgeFactor:
    """Gaussian conditioning data for one (grid, H); shareable and immutable.

    mean_coeff[k] multiplies x to give E[X_{t_k}]; chol factors the
    conditional covariance of the nodes 1..N.
    """

    n_steps: int
    dt: float
    hurst: float
    cov_w_liouville: np.ndarray
    liouville_var: float
    mean_coeff: np.ndarray
    cond_cov: np.ndarray
    chol: np.ndarray
    jittered: bool
    notes: tuple = field(default=())


@lru_cache(maxsize=32)
def bridge_factor(n_steps: int, dt: float, H: float) -> BridgeFactor:
    T = n_steps * dt
    t = dt * np.arange(n_steps + 1)
    a = alpha_h(H)
    p = H + 0.5
    c = a * (T**p - (T - t) ** p) / p
    if H == 0.5:
        c = t.copy()
    V = a * a * T ** (2 * H) / (2 * H)
    tt = t[1:]
    S = np.minimum(tt[:, None], tt[None, :])
    C = S - np.outer(c[1:], c[1:]) / V
    notes = []
    L, jit = cholesky_jitter(C, notes)
    for msg in notes:
        log.info("bridge factor (N=%d, H=%g): %s", n_steps, H, msg)
    for arr in (c, C, L):
        arr.setflags(write=False)
    m = c / V
    m.setflags(write=False)
    return BridgeFactor(n_steps, dt, H, c, V, m, C, L, jit, tuple(notes))


def bridge_conditional_moments(grid: Grid, H: float):
    """(mean coefficient per node, conditional covariance of nodes 1..N)."""
    f = bridge_factor(grid.n_steps, grid.dt, H)
    return f.mean_coeff, f.cond_cov


def bridge_fluctuations(grid: Grid, H: float, rng, n_paths=None, dim=1) -> np.ndarray:
    """Zero-mean part of the exact bridge, shape (N+1, *batch, dim)."""
    f = bridge_factor(grid.n_steps, grid.dt, H)
    batch = () if n_paths is None else (int(n_paths),)
    z = rng.standard_normal((grid.n_steps,) + batch + (int(dim),))
    xi = apply_matrix(f.chol, z)
    return np.concatenate([np.zeros_like(xi[:1]), xi])


def sample_bridge_exact(ep: BridgeEndpoint, grid: Grid, H: float, seed, stream=0,
                        n_paths=None) -> BridgePath:
    """Exact Gaussian conditioning of the Wiener path on B~_T = x."""
    _check_grid(grid, ep.T)
    rng = _rng.generator(seed, _rng.BRIDGE, stream)
    xi = bridge_fluctuations(grid, H, rng, n_paths, ep.x.size)
    m = bridge_factor(grid.n_steps, grid.dt, H).mean_coeff
    X = m.reshape((-1,) + (1,) * (xi.ndim - 1)) * ep.x + xi
    return BridgePath(grid, X, None, "exact_conditioning", ep)


@lru_cache(maxsize=32)
def _sde_coeffs(n_steps: int, dt: float, H: float):
    T = n_steps * dt
    j = np.arange(n_steps)
    u0, u1 = j * dt, (j + 1) * dt
    # cell integrals of (T-s)^(H-1/2) and cell averages of (T-s)^(-H-1/2);
    # the last cell of the latter is never used (pinned step)
    drift_int = kernel_average(T, u0, u1, H) * dt
    q = np.zeros(n_steps)
    r0, r1 = T - u0[:-1], T - u1[:-1]
    if H == 0.5:
        q[:-1] = np.log(r0 / r1) / dt
    else:
        e = 0.5 - H
        q[:-1] = (r1**e - r0**e) / (-e) / dt if e != 0 else 0.0
    return drift_int, q


def _sde_drift(ep: BridgeEndpoint, grid: Grid, dW: np.ndarray, H: float) -> np.ndarray:
    """Increments of K for the SDE bridge, including the pinned last step."""
    N = grid.n_steps
    T = ep.T
    a = alpha_h(H)
    drift_int, q = _sde_coeffs(N, grid.dt, H)
    shape = (-1,) + (1,) * (dW.ndim - 1)
    # J_k = sum_{i<k} q_i dW_i, left point in time
    J = np.cumsum(q.reshape(shape) * dW, axis=0)
    J = np.concatenate([np.zeros_like(J[:1]), J[:-1]])
    dK = (2 * H / a) * drift_int.reshape(shape) * (ep.x / T ** (2 * H) - a * J)
    w = endpoint_weights(N, grid.dt, H)
    dX_head = dK[:-1] + dW[:-1]
    head = np.tensordot(w[:-1], dX_head, axes=(0, 0))
    dX_last = (ep.x - head) / w[-1]
    dK[-1] = dX_last - dW[-1]
    return dK


def sample_bridge_sde(ep: BridgeEndpoint, grid: Grid, H: float, seed, stream=0,
                      n_paths=None, dw_increments=None) -> BridgePath:
    """Euler scheme for the bridge SDE with exact pinning of the last step."""
    _check_grid(grid, ep.T)
    if dw_increments is None:
        rng = _rng.generator(seed, _rng.BRIDGE, stream)
        batch = () if n_paths is None else (int(n_paths),)
        dW = rng.standard_normal((grid.n_steps,) + batch + (ep.x.size,)) * np.sqrt(grid.dt)
    else:
        dW = np.asarray(dw_increments, dtype=float)
    K = _cumulate(_sde_drift(ep, grid, dW, H))
    W = _cumulate(dW)
    return BridgePath(grid, K + W, dW, "sde", ep)


def _cumulate(inc):
    return np.concatenate([np.zeros_like(inc[:1]), np.cumsum(inc, axis=0)])


def bridge_drift_k(ep: BridgeEndpoint, grid: Grid, dw_increments, H: float) -> SampledPath:
    """Finite-variation part K of an SDE bridge, so that X = K + W."""
    if dw_increments is None:
        raise ValueError("bridge_drift_k needs driving increments (SDE-sampled bridge)")
    dW = np.asarray(dw_increments, dtype=float)
    return SampledPath(grid, _cumulate(_sde_drift(ep, grid, dW, H)))


def deterministic_drift_mean(ep: BridgeEndpoint, H: float) -> np.ndarray:
    """E[K_T] = (2H/alpha_H) int_0^T (T-s)^(H-1/2) ds x / T^(2H)."""
    return (2 * H / alpha_h(H)) * ep.T ** (H + 0.5) / (H + 0.5) * ep.x / ep.T ** (2 * H)


def endpoint_functional(p: BridgePath, H: float) -> np.ndarray:
    """Discrete B~_T of the path: alpha_H sum_i avg_i (T-s)^(H-1/2) dX_i."""
    dX = np.diff(p.x_values, axis=0)
    w = endpoint_weights(p.grid.n_steps, p.grid.dt, H)
    return np.tensordot(w, dX, axes=(0, 0))


def holder_norm(values: np.ndarray, dt: float, gamma_: float) -> np.ndarray:
    """Sup norm plus gamma-Holder seminorm along axis 0, per path (max over components)."""
    v = np.asarray(values)
    sup = np.max(np.abs(v), axis=0)
    semi = np.zeros_like(sup)
    n = v.shape[0]
    for lag in range(1, n):
        d = np.abs(v[lag:] - v[:-lag]).max(axis=0) / (lag * dt) ** gamma_
        semi = np.maximum(semi, d)
    out = sup + semi
    return out.max(axis=-1) if out.ndim > 1 else out
