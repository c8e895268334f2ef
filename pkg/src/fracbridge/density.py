"""Monte Carlo densities through Wiener-Liouville bridges and Girsanov weights.

For a conditioning path ell and fresh innovation noise, the solution of

    Phi_t = ell(t) + int_0^t b(Phi_s) ds + sigma B~_t

has density at y equal to the Gaussian density of ell(T) + sigma B~_T
times the mean Girsanov weight over bridges X conditioned on
B~_T[X] = x = sigma^-1 (y - ell(T)). The weight integrand is

    L = rho^-1 sigma^-1 I^(1/2-H)[ b(ell + sigma B~[X]) ],  rho = alpha_H Gamma(H+1/2),

where B~[X] = rho I^(H-1/2) X is the Liouville transform of the bridge.
Transition and stationary densities average this over conditioning
paths built from simulated Wiener pasts.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy.special import gamma

from . import _rng
from .bridge import bridge_factor
from .frac_calc import Grid, SampledPath, apply_matrix, derivative_matrix, integral_matrix
from .noise import alpha_h, fbm_mandelbrot, history_process, sample_two_sided_wiener
from .sde import ModelSpec, check_off_diagonal_contraction, drift_divergence, drift_eval

log = logging.getLogger(__name__)

LOG_CLAMP = 700.0
PATH_CHUNK = 250
LOW_ESS = 10.0


@dataclass
class DensityEstimate:
    value: float
    stderr: float
    n_paths: int
    diagnostics: dict = field(default_factory=dict)


@dataclass
class ConditioningPath:
    ell: SampledPath
    origin: str = "constant"


def constant_path(y0, grid: Grid) -> SampledPath:
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    return SampledPath(grid, np.broadcast_to(y0, (grid.n_steps + 1, y0.size)).copy())


def rho_h(H: float) -> float:
    """alpha_H Gamma(H + 1/2): B~ = rho I^(H-1/2) W."""
    return alpha_h(H) * gamma(H + 0.5)


@lru_cache(maxsize=32)
def _operators(n_steps: int, dt: float, H: float):
    """Inner (Liouville transform) and outer matrices plus the start term.

    For H > 1/2 the outer operator is a derivative; it is applied to
    g - g(0), and g(0) enters through the exact D^(H-1/2) of a constant,
    t^(1/2-H)/Gamma(3/2-H). `start` holds its node values (first-cell
    average at node 0) and `start_cells` its exact cell averages.
    """
    rho = rho_h(H)
    if H == 0.5:
        return None, None, None, None
    beta = H - 0.5
    if H > 0.5:
        inner = rho * integral_matrix(n_steps, dt, beta)
        outer = derivative_matrix(n_steps, dt, beta) / rho
        t = dt * np.arange(n_steps + 1)
        start = np.empty(n_steps + 1)
        start[1:] = t[1:] ** (-beta) / gamma(1 - beta)
        start[0] = dt ** (-beta) / gamma(2 - beta)
        start /= rho
        cells = np.diff(t ** (1 - beta)) / (gamma(2 - beta) * dt * rho)
    else:
        inner = rho * derivative_matrix(n_steps, dt, -beta)
        outer = integral_matrix(n_steps, dt, -beta) / rho
        start = cells = None
    return inner, outer, start, cells


def covariation_coeff(n_steps: int, dt: float, H: float) -> float:
    """d<L, X>/dt per unit divergence of b for the discrete operators.

    L_{k+1} depends on X_{k+1} through the diagonal entries of the inner and
    outer matrices; their product is 1/(Gamma(2-b) Gamma(2+b)), b = |H-1/2|,
    rather than the continuum value 1.
    """
    inner, outer, _, _ = _operators(n_steps, dt, H)
    if inner is None:
        return 1.0
    return float(inner[1, 1] * outer[1, 1])


def _frak_l_parts(m: ModelSpec, lam, ell_vals, X, grid: Grid):
    """(regular part at nodes, start term per cell or None, Phi).

    L = regular + start; the start term is g(0) t^(1/2-H)/(rho Gamma(3/2-H))
    for H > 1/2 and is returned as exact cell averages.
    """
    inner, outer, _, cells = _operators(grid.n_steps, grid.dt, m.hurst)
    Z = X if inner is None else apply_matrix(inner, X)
    phi = ell_vals + Z @ m.sigma.T
    G = drift_eval(m.drift, lam, phi) @ m.sigma_inv.T
    if outer is None:
        return G, None, phi
    if cells is None:
        return apply_matrix(outer, G), None, phi
    G0 = G[:1]
    return apply_matrix(outer, G - G0), cells.reshape((-1,) + (1,) * (G.ndim - 1)) * G0, phi


def _frak_l_values(m: ModelSpec, lam, ell_vals, X, grid: Grid):
    """L at the nodes (start term at node 0 as its first-cell average)."""
    reg, _, phi = _frak_l_parts(m, lam, ell_vals, X, grid)
    _, _, start, _ = _operators(grid.n_steps, grid.dt, m.hurst)
    if start is None:
        return reg
    G0 = drift_eval(m.drift, lam, phi[:1]) @ m.sigma_inv.T
    return reg + start.reshape((-1,) + (1,) * (reg.ndim - 1)) * G0


def frak_l(m: ModelSpec, lam, ell: SampledPath, bridge) -> SampledPath:
    """Girsanov integrand L along a bridge path, same shape as the bridge."""
    if ell.grid != bridge.grid:
        raise ValueError("ell and the bridge must share a grid")
    X = bridge.x_values
    ev = ell.values.reshape((ell.values.shape[0],) + (1,) * (X.ndim - 2) + (ell.values.shape[-1],))
    L = _frak_l_values(m, lam, ev, X, bridge.grid)
    if not np.all(np.isfinite(L)):
        raise FloatingPointError("non-finite Girsanov integrand")
    return SampledPath(bridge.grid, L)


def _log_weight(L, X, dt, div=None, cells=None):
    """Discrete Girsanov exponent.

    Without `div`: left-point Ito sums. With `div` (rate of the covariation
    of L and X along Phi at the nodes): trapezoid sums with half the
    covariation subtracted. Both converge to the same Ito integral; the
    trapezoid form removes the first-order bias of the left-point rule for
    smooth drifts.

    `cells` is a deterministic, possibly singular part of the integrand
    given by its cell averages (N, ..., n); it enters as a piecewise
    constant integrand, which is the exact projection of its exponential
    martingale onto the grid increments.
    """
    dX = np.diff(X, axis=0)
    if div is None:
        Lc = L[:-1] if cells is None else L[:-1] + cells
        return np.sum(Lc * dX, axis=(0, -1)) - 0.5 * dt * np.sum(Lc * Lc, axis=(0, -1))
    Lm = 0.5 * (L[:-1] + L[1:])
    sq = np.sum(L * L, axis=-1)
    sq_int = dt * (np.sum(sq[1:-1], axis=0) + 0.5 * (sq[0] + sq[-1]))
    div_int = dt * (np.sum(div[1:-1], axis=0) + 0.5 * (div[0] + div[-1]))
    out = np.sum(Lm * dX, axis=(0, -1)) - 0.5 * div_int - 0.5 * sq_int
    if cells is not None:
        out = out + np.sum(cells * dX, axis=(0, -1)) - dt * np.sum(cells * (Lm + 0.5 * cells), axis=(0, -1))
    return out


def _log_weight_paths(m: ModelSpec, lam, ell_vals, X, grid: Grid):
    reg, cells, phi = _frak_l_parts(m, lam, ell_vals, X, grid)
    div = drift_divergence(m.drift, lam, phi)
    if div is not None:
        div = covariation_coeff(grid.n_steps, grid.dt, m.hurst) * div
    return _log_weight(reg, X, grid.dt, div, cells)


def girsanov_log_weight(m: ModelSpec, lam, ell: SampledPath, bridge) -> np.ndarray:
    """Log Girsanov weight per bridge path (same rule as the density estimators)."""
    if ell.grid != bridge.grid:
        raise ValueError("ell and the bridge must share a grid")
    X = bridge.x_values
    ev = ell.values.reshape((ell.values.shape[0],) + (1,) * (X.ndim - 2) + (ell.values.shape[-1],))
    return _log_weight_paths(m, lam, ev, X, bridge.grid)


def girsanov_weight(m: ModelSpec, lam, ell: SampledPath, bridge):
    """exp of girsanov_log_weight.

    Returns (weight, clamped) where clamped flags log-weights cut at 700.
    """
    lw = girsanov_log_weight(m, lam, ell, bridge)
    clamped = bool(np.any(lw > LOG_CLAMP))
    if clamped:
        log.warning("Girsanov log-weight above %g clamped", LOG_CLAMP)
    return np.exp(np.minimum(lw, LOG_CLAMP)), clamped


def liouville_endpoint_density(ell_T, y, T: float, m: ModelSpec):
    """Density at y of N(ell_T, V_T sigma sigma^T), V_T = alpha_H^2 T^(2H) / (2H)."""
    if T <= 0:
        raise ValueError("T must be positive")
    H = m.hurst
    V = alpha_h(H) ** 2 * T ** (2 * H) / (2 * H)
    S = V * m.sigma @ m.sigma.T
    n = m.dim
    d = np.asarray(y, dtype=float) - np.asarray(ell_T, dtype=float)
    Sinv = np.linalg.inv(S)
    q = np.einsum("...i,ij,...j->...", d, Sinv, d)
    return np.exp(-0.5 * q) / np.sqrt((2 * np.pi) ** n * np.linalg.det(S))


def _bridge_xi(grid: Grid, H, n, n_paths, seed, key):
    """Exact-bridge fluctuations for one conditioning path, shape (N+1, P, n).

    Paths come in fixed chunks with their own substreams so that the first
    P paths do not change when more are requested.
    """
    f = bridge_factor(grid.n_steps, grid.dt, H)
    out = []
    for c in range(-(-n_paths // PATH_CHUNK)):
        rng = _rng.generator(seed, _rng.BRIDGE, *key, c)
        z = rng.standard_normal((grid.n_steps, PATH_CHUNK, n))
        take = min(PATH_CHUNK, n_paths - c * PATH_CHUNK)
        out.append(z[:, :take])
    z = np.concatenate(out, axis=1)
    xi = apply_matrix(f.chol, z)
    return np.concatenate([np.zeros_like(xi[:1]), xi])


def _log_weights_block(m: ModelSpec, lam, ell_vals, grid: Grid, ys, xi):
    """Log-weights for R conditioning paths, Y targets and P bridges each.

    ell_vals (N+1, R, n), ys (Y, n), xi (N+1, R, P, n) -> (R, Y, P).
    """
    R, P, n = xi.shape[1], xi.shape[2], xi.shape[3]
    Yn = ys.shape[0]
    if m.drift.kind == "zero":
        return np.zeros((R, Yn, P))
    f = bridge_factor(grid.n_steps, grid.dt, m.hurst)
    # bridge endpoint in the Wiener coordinates: x = sigma^-1 (y - ell(T))
    xs = (ys[None, :, :] - ell_vals[-1][:, None, :]) @ m.sigma_inv.T  # (R, Y, n)
    mc = f.mean_coeff.reshape(-1, 1, 1, 1, 1)
    X = mc * xs[None, :, :, None, :] + xi[:, :, None, :, :]
    ev = ell_vals[:, :, None, None, :]
    return _log_weight_paths(m, lam, ev, X, grid)


def _summarize_weights(lw):
    """Mean weight, its stderr, ESS and max share for log-weights (..., P)."""
    clamped = lw > LOG_CLAMP
    w = np.exp(np.minimum(lw, LOG_CLAMP))
    P = w.shape[-1]
    mean = w.mean(axis=-1)
    sd = w.std(axis=-1, ddof=1) if P > 1 else np.zeros_like(mean)
    s1 = w.sum(axis=-1)
    ess = s1**2 / np.sum(w * w, axis=-1)
    share = w.max(axis=-1) / s1
    return mean, sd / np.sqrt(P), ess, share, clamped.any(axis=-1)


def _as_targets(y, n):
    ys = np.asarray(y, dtype=float)
    # a scalar, or a 1-D array of length n > 1, is one point; otherwise a list
    single = ys.ndim == 0 or (ys.ndim == 1 and n > 1)
    ys = ys.reshape(-1, n)
    return ys, single


def conditional_density(m: ModelSpec, lam, ell, y, T: Optional[float] = None, n_paths: int = 1000,
                        seed=0, stream=0):
    """Density at y of Phi_T(ell), with ell a SampledPath on [0, T].

    `y` is one point or a sequence of points; a list of estimates is
    returned for a sequence. The same bridges serve all targets.
    """
    if isinstance(ell, ConditioningPath):
        ell = ell.ell
    grid = ell.grid
    T = grid.t_end if T is None else T
    if abs(grid.t0) > 0 or abs(grid.t_end - T) > 1e-9 * max(1.0, T):
        raise ValueError("ell must live on a grid spanning [0, T]")
    if n_paths < 2:
        raise ValueError("n_paths must be >= 2")
    n = m.dim
    ys, single = _as_targets(y, n)
    if single:
        ys = ys[:1]
    ev = ell.values.reshape(grid.n_steps + 1, 1, n)
    xi = _bridge_xi(grid, m.hurst, n, n_paths, seed, (np.atleast_1d(stream)[0], 0))[:, None]
    lw = _log_weights_block(m, lam, ev, grid, ys, xi)[0]
    pref = liouville_endpoint_density(ev[-1, 0], ys, T, m)
    mean, se, ess, share, clamped = _summarize_weights(lw)
    out = []
    for i in range(ys.shape[0]):
        diag = {"weight_ess": float(ess[i]), "max_weight_share": float(share[i]),
                "clamped": bool(clamped[i]), "low_ess": bool(ess[i] < LOW_ESS),
                "prefactor": float(pref[i])}
        if m.drift.kind == "zero":
            out.append(DensityEstimate(float(pref[i]), 0.0, n_paths, diag))
        else:
            out.append(DensityEstimate(float(pref[i] * mean[i]), float(pref[i] * se[i]), n_paths, diag))
    return out[0] if single else out


@dataclass
class ReplicaValues:
    """Per-replica conditional densities (R, Y) with weight diagnostics."""

    values: np.ndarray
    inner_se: np.ndarray
    ess: np.ndarray
    share: np.ndarray
    clamped: np.ndarray


def _replica_densities(m: ModelSpec, lam, ell_vals, grid: Grid, ys, n_inner, seed, stream, first):
    """Conditional densities for replicas first, first+1, ... with own bridge streams."""
    R = ell_vals.shape[1]
    n = m.dim
    xi = np.stack([_bridge_xi(grid, m.hurst, n, n_inner, seed, (stream, first + r))
                   for r in range(R)], axis=1)
    lw = _log_weights_block(m, lam, ell_vals, grid, ys, xi)
    pref = liouville_endpoint_density(ell_vals[-1][:, None, :], ys[None, :, :], grid.t_end, m)
    mean, se, ess, share, clamped = _summarize_weights(lw)
    return ReplicaValues(pref * mean, pref * se, ess, share, clamped)


def _combine(parts: Sequence[ReplicaValues]) -> ReplicaValues:
    return ReplicaValues(*(np.concatenate([getattr(p, f) for p in parts], axis=0)
                           for f in ("values", "inner_se", "ess", "share", "clamped")))


def _map_chunks(fn, n_items, chunk, workers):
    """Apply fn(start, stop) over fixed chunks, results in index order."""
    bounds = [(s, min(s + chunk, n_items)) for s in range(0, n_items, chunk)]
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(lambda b: fn(*b), bounds))
    return [fn(*b) for b in bounds]


def _outer_estimates(rv: ReplicaValues, n_inner, extra=None):
    R = rv.values.shape[0]
    vals = rv.values.mean(axis=0)
    if R > 1:
        se = rv.values.std(axis=0, ddof=1) / np.sqrt(R)
    else:
        se = rv.inner_se[0]
    out = []
    for i in range(vals.shape[0]):
        diag = {"weight_ess": float(np.mean(rv.ess[:, i])), "min_weight_ess": float(np.min(rv.ess[:, i])),
                "max_weight_share": float(np.max(rv.share[:, i])), "clamped": bool(np.any(rv.clamped[:, i])),
                "low_ess": bool(np.mean(rv.ess[:, i]) < LOW_ESS), "n_outer": R, "n_inner": n_inner}
        if extra:
            diag.update(extra)
        out.append(DensityEstimate(float(vals[i]), float(se[i]), R * n_inner, diag))
    return out


def _default_past(T_past, horizon):
    return 100.0 * horizon if T_past is None else T_past


def transition_density(m: ModelSpec, lam, y0, y, t: float, n_outer: int = 200, n_inner: int = 200,
                       T_past: Optional[float] = None, seed=0, n_steps: int = 100, workers: int = 1,
                       chunk: int = 20, return_replicas: bool = False):
    """Density at y of Y_t started at y0 with a Wiener past.

    Each outer sample draws a fresh past w, sets ell = y0 + sigma P^H w on
    [0, t] and averages Girsanov weights over its own bridges; the error
    bar is the spread of the outer values.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    n = m.dim
    ys, single = _as_targets(y, n)
    grid = Grid.span(0.0, t, n_steps)
    Tp = _default_past(T_past, t)
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))

    def block(a, b):
        ells = []
        for r in range(a, b):
            if m.hurst == 0.5:
                ells.append(np.broadcast_to(y0, (n_steps + 1, n)))
                continue
            W = sample_two_sided_wiener(Tp, t, grid.dt, seed, (_rng.PAST, r), dim=n, past_ratio=1.05)
            hist = history_process(W, 0.0, grid, m.hurst).values
            ells.append(y0 + hist @ m.sigma.T)
        ev = np.stack(ells, axis=1)
        return _replica_densities(m, lam, ev, grid, ys, n_inner, seed, 1, a)

    rv = _combine(_map_chunks(block, n_outer, chunk, workers))
    out = _outer_estimates(rv, n_inner, {"T_past": Tp})
    if return_replicas:
        return (out[0] if single else out), rv
    return out[0] if single else out


@dataclass
class BurnIn:
    """Mean and variance of Y across replicas at checkpoints of the burn-in."""

    times: np.ndarray
    mean: np.ndarray
    var: np.ndarray


def stationary_conditioning(m: ModelSpec, lam, T0: float, t_burn: float, n_replicas: int,
                            T_past: Optional[float], seed, dt_burn: float, n_steps: int,
                            first: int = 0, y_start=None):
    """Conditioning paths ell_r = Y_{t_burn} + sigma hist^{t_burn} on [0, T0].

    Replica r uses the two-sided Wiener path with stream (PAST, r); Y runs
    by Euler from y_start (default 0) over [0, t_burn].
    """
    n = m.dim
    grid = Grid.span(0.0, T0, n_steps)
    Tp = _default_past(T_past, t_burn + T0)
    Ws = [sample_two_sided_wiener(Tp, t_burn, dt_burn, seed, (_rng.PAST, first + r), dim=n,
                                  past_ratio=1.05)
          for r in range(n_replicas)]
    W = Ws[0]
    W.past_increments = np.stack([w.past_increments for w in Ws], axis=1)
    W.future_increments = np.stack([w.future_increments for w in Ws], axis=1)
    if W.tail is not None:
        W.tail = np.stack([w.tail for w in Ws], axis=0)
    W.subgrid = np.stack([w.subgrid for w in Ws], axis=1)
    B = fbm_mandelbrot(W, m.hurst).values  # (Nb+1, R, n)
    dB = np.diff(B, axis=0) @ m.sigma.T
    Nb = dB.shape[0]
    Y = np.zeros((n_replicas, n)) if y_start is None else np.broadcast_to(y_start, (n_replicas, n)).copy()
    checks = np.unique(np.round(np.linspace(0, Nb, 5)).astype(int))
    mean, var = [], []
    for k in range(Nb + 1):
        if k in checks:
            mean.append(Y.mean(axis=0))
            var.append(Y.var(axis=0))
        if k == Nb:
            break
        Y = Y + drift_eval(m.drift, lam, Y) * dt_burn + dB[k]
    if not np.all(np.isfinite(Y)):
        raise FloatingPointError("burn-in diverged")
    hist = history_process(W, t_burn, grid, m.hurst).values  # (N+1, R, n)
    ell = Y[None] + hist @ m.sigma.T
    return grid, ell, BurnIn(checks * dt_burn, np.array(mean), np.array(var))


def stationary_replicas(m: ModelSpec, lam, y, T0: float = 1.0, t_burn: Optional[float] = None,
                        n_replicas: int = 200, n_inner: int = 200, T_past: Optional[float] = None,
                        seed=0, dt_burn: float = 0.01, n_steps: int = 100, workers: int = 1,
                        chunk: int = 20):
    """Per-replica conditional densities for the stationary estimator."""
    n = m.dim
    ys, single = _as_targets(y, n)
    if t_burn is None:
        k = check_off_diagonal_contraction(m.drift, lam).kappa_est
        t_burn = 20.0 / max(k, 1e-3) if k > 0 else 20.0
        t_burn = dt_burn * np.ceil(t_burn / dt_burn - 1e-9)
    burn = []

    def block(a, b):
        grid, ell, bi = stationary_conditioning(m, lam, T0, t_burn, b - a, T_past, seed, dt_burn,
                                                n_steps, first=a)
        burn.append((a, bi))
        return _replica_densities(m, lam, ell, grid, ys, n_inner, seed, 2, a)

    rv = _combine(_map_chunks(block, n_replicas, chunk, workers))
    burn.sort(key=lambda p: p[0])
    return ys, single, rv, t_burn, [b for _, b in burn]


def stationary_density(m: ModelSpec, lam, y, T0: float = 1.0, t_burn: Optional[float] = None,
                       n_replicas: int = 200, n_inner: int = 200, T_past: Optional[float] = None,
                       seed=0, dt_burn: float = 0.01, n_steps: int = 100, workers: int = 1,
                       chunk: int = 20, return_replicas: bool = False):
    """Stationary density by burn-in replicas and the disintegration formula."""
    chk = check_off_diagonal_contraction(m.drift, lam)
    if not chk.satisfied:
        log.warning("drift fails the off-diagonal contraction check (kappa_est = %g)", chk.kappa_est)
    ys, single, rv, t_burn, burn = stationary_replicas(m, lam, y, T0, t_burn, n_replicas, n_inner,
                                                       T_past, seed, dt_burn, n_steps, workers, chunk)
    R = rv.values.shape[0]
    mean_end = np.sum([b.mean[-1] * 1 for b in burn], axis=0) / max(len(burn), 1)
    extra = {"t_burn": t_burn, "T0": T0, "contraction_ok": chk.satisfied,
             "burn_in_mean_end": float(np.mean(mean_end)),
             "burn_in_var_end": float(np.mean([np.mean(b.var[-1]) for b in burn]))}
    out = _outer_estimates(rv, n_inner, extra)
    res = out[0] if single else out
    return (res, rv) if return_replicas else res


@dataclass
class SweepResult:
    lambdas: np.ndarray
    ys: np.ndarray
    table: list  # table[i][j]: estimate at lambdas[i], ys[j]
    fd_lambdas: np.ndarray
    fd_values: np.ndarray  # (len(fd_lambdas), Y)
    fd_stderr: np.ndarray


def parametric_stationary_sweep(m: ModelSpec, lambda_grid, y_grid, **params) -> SweepResult:
    """Stationary densities over a lambda grid with common random numbers.

    Central differences in lambda use the paired replica values, so their
    error bars reflect the strong positive correlation between neighbours.
    """
    if not m.drift.is_parametric:
        raise ValueError("sweep needs a parametric drift")
    lams = np.asarray(lambda_grid, dtype=float)
    if params.get("t_burn") is None:
        # one burn-in length for the whole grid keeps the random numbers common
        k = min(check_off_diagonal_contraction(m.drift, lam).kappa_est for lam in lams)
        dtb = params.get("dt_burn", 0.01)
        params["t_burn"] = dtb * np.ceil(20.0 / max(k, 1e-3) / dtb - 1e-9)
    table, reps = [], []
    for lam in lams:
        est, rv = stationary_density(m, lam, np.asarray(y_grid, float).reshape(-1, m.dim),
                                     return_replicas=True, **params)
        table.append(est)
        reps.append(rv.values)
    fd_l, fd_v, fd_s = [], [], []
    for i in range(1, len(lams) - 1):
        d = (reps[i + 1] - reps[i - 1]) / (lams[i + 1] - lams[i - 1])
        fd_l.append(lams[i])
        fd_v.append(d.mean(axis=0))
        fd_s.append(d.std(axis=0, ddof=1) / np.sqrt(d.shape[0]))
    ys = np.asarray(y_grid, float).reshape(-1, m.dim)
    return SweepResult(lams, ys, table, np.array(fd_l), np.array(fd_v), np.array(fd_s))


@dataclass
class AveragedTable:
    x: np.ndarray
    fbar: np.ndarray
    gbar: np.ndarray
    mass: np.ndarray


def averaged_coefficients(f, g, fast_model: ModelSpec, x_grid, y_grid=None, fast_lam=None,
                          **params) -> AveragedTable:
    """fbar(x), gbar(x) against the estimated stationary law of the fast process.

    One-dimensional fast variable. `fast_lam(x)` gives the fast drift
    parameter for a given x (None for an x-independent fast process). If the
    quadrature mass is off by more than 5% the y-grid is widened once.
    """
    if fast_model.dim != 1:
        raise ValueError("averaged_coefficients supports a one-dimensional fast variable")
    xs = np.atleast_1d(np.asarray(x_grid, dtype=float))
    fb, gb, mass = [], [], []
    cache = {}
    for x in xs:
        lam = None if fast_lam is None else fast_lam(x)
        yg = np.linspace(-5, 5, 41) if y_grid is None else np.asarray(y_grid, dtype=float)
        for attempt in range(2):
            key = (None if lam is None else float(np.asarray(lam).ravel()[0]), yg.tobytes())
            if key not in cache:
                est = stationary_density(fast_model, lam, yg.reshape(-1, 1), **params)
                cache[key] = np.array([e.value for e in est])
            p = cache[key]
            mval = np.trapezoid(p, yg)
            if abs(mval - 1) <= 0.05:
                break
            if attempt == 1:
                raise ArithmeticError(f"stationary density mass {mval:.3f} at x = {x}")
            yg = 1.5 * yg
        fb.append(np.trapezoid(f(x, yg) * p, yg) / mval)
        gb.append(np.trapezoid(g(x, yg) * p, yg) / mval)
        mass.append(mval)
    return AveragedTable(xs, np.array(fb), np.array(gb), np.array(mass))
