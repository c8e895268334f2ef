"""Wiener, Liouville and fractional Brownian noise on uniform grids.

Everything is built from one two-sided Wiener path: fBm in the
Mandelbrot-van Ness form

    B_t = alpha_H * int_{-inf}^t [(t-u)_+^{H-1/2} - (-u)_+^{H-1/2}] dW_u,

split at any time t into a history part (driven by increments before t)
and an innovation part (the Liouville process of the increments after t).
Kernels are integrated exactly over each cell, so the singularity at u = t
for H < 1/2 never gets evaluated pointwise.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import integrate
from scipy.special import gamma, hyp1f1

from . import _rng
from .frac_calc import Grid, SampledPath, apply_matrix

PAST_RATIO = 1.05
PAST_FACTOR = 100.0


def _check_hurst(H):
    if not 0 < H < 1:
        raise ValueError(f"hurst must lie in (0, 1), got {H}")


def alpha_h(H: float) -> float:
    """Normalization making the Mandelbrot-van Ness integral a standard fBm."""
    _check_hurst(H)
    if H == 0.5:
        return 1.0
    return float(np.sqrt(2 * H * gamma(1.5 - H) / (gamma(H + 0.5) * gamma(2 - 2 * H))))


@dataclass(frozen=True)
class HurstConstants:
    hurst: float
    alpha_H: float
    kernel_coeff: float
    endpoint_var_coeff: float

    @classmethod
    def from_hurst(cls, H: float) -> "HurstConstants":
        a = alpha_h(H)
        return cls(H, a, a, a * a / (2 * H))

    def endpoint_variance(self, T: float) -> float:
        """Var of the Liouville process at T, per component."""
        return self.endpoint_var_coeff * T ** (2 * self.hurst)


def liouville_variance(H: float, T: float) -> float:
    return HurstConstants.from_hurst(H).endpoint_variance(T)


def kernel_average(c, u0, u1, H):
    """Mean of (c - u)^(H-1/2) over the cell [u0, u1], requires c >= u1."""
    c, u0, u1 = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (c, u0, u1)))
    if H == 0.5:
        return np.ones(c.shape)
    p = H + 0.5
    return ((c - u0) ** p - np.maximum(c - u1, 0.0) ** p) / (p * (u1 - u0))


def past_edges(T_past: float, dt: float, near: float, ratio: Optional[float] = PAST_RATIO):
    """Cell edges over [-T_past, 0].

    Uniform cells of width dt cover [-near, 0]; beyond that the cells grow
    geometrically by `ratio` (ratio None keeps the whole past uniform).
    """
    if T_past <= 0:
        return np.zeros(1)
    if ratio is None or T_past <= near:
        n = _steps(T_past, dt, "T_past")
        return -dt * np.arange(n, -1, -1, dtype=float)
    n_near = _steps(near, dt, "near-past span")
    edges = list(-dt * np.arange(n_near + 1, dtype=float))
    w = dt
    while -edges[-1] < T_past:
        w *= ratio
        nxt = edges[-1] - w
        if -nxt > T_past or T_past + nxt < 0.5 * w:
            nxt = -T_past
        edges.append(nxt)
    return np.array(edges[::-1])


def _steps(span, dt, what):
    n = span / dt
    k = int(round(n))
    if k < 1 or abs(n - k) > 1e-9 * max(1.0, n):
        raise ValueError(f"{what} = {span} is not a whole number of steps dt = {dt}")
    return k


@dataclass
class TwoSidedWienerPath:
    """Wiener increments over [-T_past, T_hor].

    Past cells are described by their edges (uniform near 0, possibly graded
    further out); the future is the uniform `future_grid`. Increment arrays
    have shape (cells, *batch, n). `tail` is a standard normal (*batch, n)
    standing for the remote past before -T_past (see history_process).
    `subgrid` holds standard normals (1 + future cells, *batch, n) for the
    part of a singular kernel integral over a cell that its average misses;
    index 0 is the last past cell.
    """

    past_edges: np.ndarray
    future_grid: Grid
    past_increments: np.ndarray
    future_increments: np.ndarray
    seed: int
    stream: object
    tail: Optional[np.ndarray] = None
    subgrid: Optional[np.ndarray] = None

    @property
    def T_past(self) -> float:
        return -float(self.past_edges[0])

    @property
    def T_hor(self) -> float:
        return self.future_grid.t_end

    @property
    def dim(self) -> int:
        return self.future_increments.shape[-1]

    @property
    def increments(self) -> np.ndarray:
        return np.concatenate([self.past_increments, self.future_increments], axis=0)

    @property
    def past_grid(self) -> Optional[Grid]:
        """Uniform grid over the past, when the past is uniform."""
        w = np.diff(self.past_edges)
        if w.size and np.allclose(w, self.future_grid.dt, rtol=1e-12, atol=0):
            return Grid(float(self.past_edges[0]), self.future_grid.dt, w.size)
        return None

    def wiener_values(self) -> SampledPath:
        """W on the future grid, W_0 = 0."""
        v = np.concatenate([np.zeros_like(self.future_increments[:1]),
                            np.cumsum(self.future_increments, axis=0)])
        return SampledPath(self.future_grid, v)


def sample_two_sided_wiener(T_past, T_hor, dt, seed, stream=0, dim=1, n_paths=None,
                            past_ratio: Optional[float] = None, near=None,
                            tail: bool = True) -> TwoSidedWienerPath:
    """Independent N(0, width) increments, a pure function of (seed, stream).

    With past_ratio None the past uses cells of width dt and T_past must be a
    multiple of dt. Otherwise cells beyond `near` (default T_hor) grow
    geometrically, which keeps long pasts cheap. With `tail` a separate
    normal per path carries the remote past beyond -T_past.
    """
    if T_past < 0:
        raise ValueError("T_past must be non-negative")
    if T_hor <= 0:
        raise ValueError("T_hor must be positive")
    n_fut = _steps(T_hor, dt, "T_hor")
    near = T_hor if near is None else near
    edges = past_edges(T_past, dt, min(near, T_past) if T_past > 0 else 0.0, past_ratio)
    widths = np.concatenate([np.diff(edges), np.full(n_fut, dt)])
    batch = () if n_paths is None else (int(n_paths),)
    rng = _rng.generator(seed, _rng.WIENER, *np.atleast_1d(stream))
    z = rng.standard_normal((widths.size,) + batch + (int(dim),))
    inc = z * np.sqrt(widths).reshape((-1,) + (1,) * (z.ndim - 1))
    n_past = edges.size - 1
    zeta = None
    key = tuple(np.atleast_1d(stream))
    if tail and T_past > 0:
        zeta = _rng.generator(seed, _rng.TAIL, *key).standard_normal(batch + (int(dim),))
    sub = _rng.generator(seed, _rng.SUBGRID, *key).standard_normal((n_fut + 1,) + batch + (int(dim),))
    return TwoSidedWienerPath(edges, Grid(0.0, dt, n_fut), inc[:n_past], inc[n_past:],
                              int(seed), stream, zeta, sub)


@lru_cache(maxsize=32)
def liouville_matrix(n_steps: int, dt: float, H: float) -> np.ndarray:
    """L with B~(t_k) = sum_j L[k, j] dW_j on a uniform grid (alpha_H included)."""
    _check_hurst(H)
    k = np.arange(n_steps + 1)[:, None]
    j = np.arange(n_steps)[None, :]
    mask = j < k
    c = np.where(mask, k * dt, (j + 1) * dt)
    L = np.where(mask, alpha_h(H) * kernel_average(c, j * dt, (j + 1) * dt, H), 0.0)
    L.setflags(write=False)
    return L


def liouville_from_wiener(W, H: float) -> SampledPath:
    """Liouville process alpha_H int_0^t (t-u)^(H-1/2) dW_u on the future grid.

    Accepts a TwoSidedWienerPath or a SampledPath of Wiener values.
    """
    _check_hurst(H)
    if isinstance(W, TwoSidedWienerPath):
        grid, inc = W.future_grid, W.future_increments
    else:
        grid, inc = W.grid, np.diff(W.values, axis=0)
    if H == 0.5:
        vals = np.concatenate([np.zeros_like(inc[:1]), np.cumsum(inc, axis=0)])
    else:
        vals = apply_matrix(liouville_matrix(grid.n_steps, grid.dt, H), inc)
    return SampledPath(grid, vals)


def history_weights(W: TwoSidedWienerPath, t_base: float, h_grid: Grid, H: float) -> np.ndarray:
    """Weights of the history process on all cells up to t_base."""
    dt = W.future_grid.dt
    b = int(round(t_base / dt))
    if b < 0 or b > W.future_grid.n_steps or abs(b * dt - t_base) > 1e-9 * max(1.0, t_base):
        raise ValueError(f"t_base = {t_base} is not a node of the Wiener path")
    edges = np.concatenate([W.past_edges, dt * np.arange(1, b + 1)])
    u0, u1 = edges[:-1][None, :], edges[1:][None, :]
    tb = edges[-1]
    h = h_grid.times[:, None] - h_grid.t0
    a = alpha_h(H)
    return a * (kernel_average(tb + h, u0, u1, H) - kernel_average(tb, u0, u1, H))


def history_process(W: TwoSidedWienerPath, t_base: float, h_grid: Grid, H: float) -> SampledPath:
    """History of the fBm increments after t_base, driven by W before t_base.

    Returns B(t_base + h) - B(t_base) minus its innovation part, for h on
    h_grid (whose t0 is taken as h = 0). Increments before -T_past enter
    through W.tail as a random slope in h, their leading-order effect when
    h is small against t_base + T_past. The cell just before t_base gets
    its sub-cell residual from W.subgrid.
    """
    _check_hurst(H)
    b = int(round(t_base / W.future_grid.dt))
    batch = W.future_increments.shape[1:]
    if H == 0.5:
        return SampledPath(h_grid, np.zeros((h_grid.n_steps + 1,) + batch))
    wts = history_weights(W, t_base, h_grid, H)
    inc = np.concatenate([W.past_increments, W.future_increments[:b]], axis=0)
    if inc.shape[0] == 0:
        return SampledPath(h_grid, np.zeros((h_grid.n_steps + 1,) + batch))
    vals = apply_matrix(wts, inc)
    h = (h_grid.times - h_grid.t0).reshape((-1,) + (1,) * (vals.ndim - 1))
    if W.tail is not None:
        vals = vals + tail_slope_std(H, t_base + W.T_past) * h * W.tail
    last = W.past_edges[-1] - W.past_edges[-2] if b == 0 and W.past_edges.size > 1 else W.future_grid.dt
    if W.subgrid is not None and abs(last - W.future_grid.dt) < 1e-12 * last:
        vals = vals - (h > 0) * subgrid_std(H, W.future_grid.dt) * W.subgrid[b]
    return SampledPath(h_grid, vals)


def p_h_operator(W: TwoSidedWienerPath, grid: Grid, H: float) -> SampledPath:
    """The past-to-future operator P^H applied to the Wiener past of W."""
    return history_process(W, 0.0, grid, H)


@dataclass
class FbmPath(SampledPath):
    hurst: float = 0.5


def subgrid_std(H: float, dt: float) -> float:
    """Std of alpha_H int_0^dt (u^(H-1/2) - avg) dW_u, the part a cell average misses."""
    if H == 0.5:
        return 0.0
    return float(alpha_h(H) * dt**H * np.sqrt(1 / (2 * H) - 1 / (H + 0.5) ** 2))


def fbm_mandelbrot(W: TwoSidedWienerPath, H: float, subgrid: bool = True) -> FbmPath:
    """fBm on the future grid: history at 0 plus the Liouville part.

    With `subgrid` each node also gets the sub-cell residual of its most
    recent cell, which restores the variance lost to cell averaging of the
    singular kernel (of order dt^(2H)).
    """
    hist = history_process(W, 0.0, W.future_grid, H)
    liou = liouville_from_wiener(W, H)
    vals = hist.values + liou.values
    if subgrid and W.subgrid is not None and H != 0.5:
        vals[1:] += subgrid_std(H, W.future_grid.dt) * W.subgrid[1:]
    return FbmPath(W.future_grid, vals, hurst=H)


def tail_slope_std(H: float, dist: float) -> float:
    """Std of alpha_H (H-1/2) int_{dist}^inf v^(H-3/2) dW_v, the remote-past slope."""
    return float(alpha_h(H) * abs(H - 0.5) * dist ** (H - 1) / np.sqrt(2 - 2 * H))


def truncation_variance(H: float, t: float, T_past: float, corrected: bool = False) -> float:
    """Variance of B_t carried by Wiener increments before -T_past.

    With `corrected`, the part left over once the tail slope is included.
    """
    _check_hurst(H)
    if H == 0.5 or t <= 0:
        return 0.0
    a2 = alpha_h(H) ** 2
    if corrected:
        f = lambda v: ((t + v) ** (H - 0.5) - v ** (H - 0.5) - (H - 0.5) * t * v ** (H - 1.5)) ** 2
    else:
        f = lambda v: ((t + v) ** (H - 0.5) - v ** (H - 0.5)) ** 2
    val, _ = integrate.quad(f, T_past, np.inf, epsabs=1e-14, epsrel=1e-10, limit=200)
    return a2 * val


def fbm_covariance(times, H: float, dim: int = 1) -> np.ndarray:
    """Covariance of (B_{t_1}, ..., B_{t_m}) with `dim` independent components.

    Component index runs fastest (kron with the identity).
    """
    t = np.asarray(times, dtype=float)
    s, u = t[:, None], t[None, :]
    c = 0.5 * (s ** (2 * H) + u ** (2 * H) - np.abs(s - u) ** (2 * H))
    return np.kron(c, np.eye(dim))


def cholesky_jitter(cov: np.ndarray, log=None):
    """Cholesky factor; on failure add 1e-12*(trace/N)*I once and note it."""
    try:
        return np.linalg.cholesky(cov), False
    except np.linalg.LinAlgError:
        n = cov.shape[0]
        jit = 1e-12 * np.trace(cov) / n
        if log is not None:
            log.append(f"cholesky jitter {jit:.3e} added")
        return np.linalg.cholesky(cov + jit * np.eye(n)), True


@lru_cache(maxsize=16)
def _fbm_factor(n_steps, dt, H):
    t = dt * np.arange(1, n_steps + 1)
    L, _ = cholesky_jitter(fbm_covariance(t, H))
    return L


def fbm_exact(grid: Grid, H: float, seed, stream=0, dim=1, n_paths=None) -> FbmPath:
    """fBm with the exact grid covariance, by dense Cholesky."""
    _check_hurst(H)
    if abs(grid.t0) > 0:
        raise ValueError("fbm_exact needs a grid starting at 0")
    L = _fbm_factor(grid.n_steps, grid.dt, H)
    batch = () if n_paths is None else (int(n_paths),)
    rng = _rng.generator(seed, _rng.FBM_EXACT, stream)
    z = rng.standard_normal((grid.n_steps,) + batch + (int(dim),))
    v = apply_matrix(L, z)
    return FbmPath(grid, np.concatenate([np.zeros_like(v[:1]), v]), hurst=H)


def _quad(f, a, b, **kw):
    val, err = integrate.quad(f, a, b, epsabs=1e-13, epsrel=1e-11, limit=500, **kw)
    if not np.isfinite(val) or err > 1e-7 * max(1.0, abs(val)):
        raise ArithmeticError(f"quadrature did not converge (estimate {val}, error {err})")
    return val


def fou_variance_factor(lam: float, H: float, t: float) -> float:
    """Var(Z_t) for dZ = -lam Z dt + dB^H, Z_0 = 0.

    Variation of constants against the fBm covariance, with the double
    integral reduced to one-dimensional integrals in closed form.
    """
    _check_hurst(H)
    if lam <= 0:
        raise ValueError("rate lambda must be positive")
    if t <= 0:
        return 0.0
    p = 2 * H
    # int_0^t e^{-lam(t-s)} s^{2H} ds, int_0^t e^{-lam u} u^{2H} du, and the
    # reflected piece of the double integral
    i1 = _quad(lambda s: np.exp(-lam * (t - s)) * s**p, 0, t)
    i2 = _quad(lambda u: np.exp(-lam * u) * u**p, 0, t)
    j2 = _quad(lambda u: np.exp(lam * (u - 2 * t)) * u**p, 0, t)
    return float(np.exp(-lam * t) * (t**p - lam * i1) + 0.5 * lam * i2 + 0.5 * lam * j2)


def fou_exact_moments(lam: float, sigma, H: float, t: float):
    """(mean_factor, cov) of the fractional OU process at time t."""
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    v = fou_variance_factor(lam, H, t)
    return float(np.exp(-lam * t)), v * sigma @ sigma.T


def fou_stationary_variance(lam: float, sigma, H: float, tol: float = 1e-8):
    """Large-t limit of the fOU covariance, doubling t until it settles."""
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    t = 20.0 / lam
    prev = fou_variance_factor(lam, H, t)
    for _ in range(8):
        t *= 2
        cur = fou_variance_factor(lam, H, t)
        if abs(cur - prev) < tol:
            return cur * sigma @ sigma.T
        prev = cur
    raise ArithmeticError("stationary fOU variance did not converge")


def liouville_ou_variance_factor(lam: float, H: float, t: float) -> float:
    """Var(Z_t) for dZ = -lam Z dt + dB~ (Liouville driving), Z_0 = 0.

    Z_t = alpha_H int_0^t g(t-u) dW_u with
    g(r) = r^(H-1/2) - lam e^{-lam r} r^a/a 1F1(a; a+1; lam r), a = H + 1/2.
    """
    _check_hurst(H)
    if t <= 0:
        return 0.0
    a = H + 0.5

    def g(r):
        return r ** (H - 0.5) - lam * np.exp(-lam * r) * r**a / a * hyp1f1(a, a + 1, lam * r)

    if H < 0.5:
        # split off the r^(2H-1) singularity at 0
        def rest(r):
            return g(r) ** 2 - r ** (2 * H - 1)

        val = t ** (2 * H) / (2 * H) + _quad(rest, 0, t)
    else:
        val = _quad(lambda r: g(r) ** 2, 0, t)
    return alpha_h(H) ** 2 * val
