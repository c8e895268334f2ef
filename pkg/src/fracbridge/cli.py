"""Command-line front end.

    fracbridge <command> [--config FILE] [--set key=value ...] [--seed S] [--workers K] [--out DIR]

Commands: simulate, density, transition, stationary, sweep, validate, averaging.
The config file holds one `key = value` per line; '#' starts a comment.
Lines of the form `# cfg: key = value` (the echo written into every
output) are read as settings, so any output file can be fed back as a
config to reproduce it.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import _io, _rng
from .bridge import BridgeEndpoint, sample_bridge_exact, sample_bridge_sde
from .density import (
    conditional_density,
    constant_path,
    parametric_stationary_sweep,
    stationary_density,
    transition_density,
    averaged_coefficients,
)
from .frac_calc import Grid, SampledPath
from .noise import (
    fbm_exact,
    fbm_mandelbrot,
    liouville_from_wiener,
    p_h_operator,
    sample_two_sided_wiener,
)
from .sde import DRIFT_KINDS, ModelSpec, euler_solve, make_drift
from . import validate as V

COMMANDS = ("simulate", "density", "transition", "stationary", "sweep", "validate", "averaging")
SIM_KINDS = ("sde", "fbm", "fbm_exact", "liouville", "wiener", "bridge_exact", "bridge_sde")


class ConfigError(ValueError):
    def __init__(self, field_name, msg):
        super().__init__(f"{field_name}: {msg}")
        self.field = field_name


@dataclass
class RunConfig:
    # model
    hurst: float = 0.5
    drift: str = "linear"
    dim: int = 1
    sigma: str = "1"
    drift_rate: float = 1.0
    drift_a: float = 2.0
    drift_scale: float = 1.0
    lam: Optional[float] = None
    # grids and Monte Carlo sizes
    T: float = 1.0
    n_steps: int = 100
    n_paths: int = 1000
    n_outer: int = 200
    n_inner: int = 200
    T_past: Optional[float] = None
    T0: float = 1.0
    t_burn: Optional[float] = None
    dt_burn: float = 0.01
    # targets
    y0: str = "0"
    y_list: Optional[str] = None
    ell_mode: str = "constant"
    x: str = "0"
    kind: str = "sde"
    lambda_grid: str = "0.8,1.0,1.2"
    # experiment knobs
    t: float = 0.5
    s: float = 0.5
    t_list: Optional[str] = None
    y0_list: str = "-1,0,1"
    eps_list: str = "0.1,0.03,0.01"
    alpha: float = 0.5
    hurst_fast: float = 0.6
    dt: float = 0.001
    seed: int = 0

    def validate(self):
        if not 0 < self.hurst < 1:
            raise ConfigError("hurst", f"must lie in (0, 1), got {self.hurst}")
        if self.drift not in DRIFT_KINDS:
            raise ConfigError("drift", f"unknown drift {self.drift!r}; known: {', '.join(DRIFT_KINDS)}")
        if self.dim < 1:
            raise ConfigError("dim", "must be >= 1")
        for name in ("T", "T0", "dt_burn", "t", "s", "dt"):
            if not getattr(self, name) > 0:
                raise ConfigError(name, "must be positive")
        for name in ("n_steps", "n_outer", "n_inner"):
            if getattr(self, name) < 1:
                raise ConfigError(name, "must be >= 1")
        if self.n_paths < 2:
            raise ConfigError("n_paths", "must be >= 2")
        if self.ell_mode not in ("constant", "history"):
            raise ConfigError("ell_mode", "must be 'constant' or 'history'")
        if self.kind not in SIM_KINDS:
            raise ConfigError("kind", f"unknown kind {self.kind!r}; known: {', '.join(SIM_KINDS)}")
        if not 0 < self.hurst_fast < 1:
            raise ConfigError("hurst_fast", "must lie in (0, 1)")
        self.sigma_matrix()
        return self

    def sigma_matrix(self) -> np.ndarray:
        try:
            rows = [[float(v) for v in r.split(",")] for r in self.sigma.split(";")]
        except ValueError:
            raise ConfigError("sigma", f"cannot parse {self.sigma!r}")
        S = np.array(rows, dtype=float)
        if S.size == 1:
            S = S[0, 0] * np.eye(self.dim)
        if S.shape != (self.dim, self.dim):
            raise ConfigError("sigma", f"expected {self.dim}x{self.dim}, got {S.shape}")
        if np.linalg.cond(S) > 1e14:
            raise ConfigError("sigma", "matrix is singular")
        return S

    def model(self) -> ModelSpec:
        params = {}
        if self.drift == "linear":
            params["rate"] = self.drift_rate
        elif self.drift == "tanh_well":
            params["a"] = self.drift_a
        elif self.drift == "sign":
            params["scale"] = self.drift_scale
        return ModelSpec(make_drift(self.drift, self.dim, **params), self.sigma_matrix(), self.hurst)

    def lam_value(self):
        if self.drift == "parametric_linear":
            if self.lam is None:
                raise ConfigError("lam", "parametric drift needs lam")
            return self.lam
        return None

    def vector(self, name) -> np.ndarray:
        raw = getattr(self, name)
        try:
            v = np.array([float(s) for s in str(raw).split(",")])
        except ValueError:
            raise ConfigError(name, f"cannot parse {raw!r}")
        if v.size == 1:
            v = np.full(self.dim, v[0])
        if v.size != self.dim:
            raise ConfigError(name, f"expected {self.dim} components")
        return v

    def points(self, name) -> np.ndarray:
        raw = getattr(self, name)
        if raw is None or str(raw).strip() == "":
            raise ConfigError(name, "required for this command")
        try:
            pts = [[float(v) for v in p.split(",")] for p in str(raw).split(";")]
        except ValueError:
            raise ConfigError(name, f"cannot parse {raw!r}")
        arr = np.array(pts, dtype=float)
        if arr.shape[1] != self.dim:
            raise ConfigError(name, f"points need {self.dim} components")
        return arr

    def floats(self, name):
        raw = getattr(self, name)
        try:
            return [float(v) for v in str(raw).split(",")]
        except ValueError:
            raise ConfigError(name, f"cannot parse {raw!r}")

    def echo(self):
        """`key = value` lines for every setting, sorted by key."""
        out = []
        for f in sorted(fields(self), key=lambda f: f.name):
            v = getattr(self, f.name)
            out.append(f"{f.name} = {'' if v is None else _io.fmt(v)}")
        return out


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _coerce(name, raw: str):
    f = _FIELDS.get(name)
    if f is None:
        raise ConfigError(name, "unknown setting")
    raw = raw.strip()
    typ = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
    if raw == "" and "Optional" in typ:
        return None
    try:
        if "float" in typ:
            return float(raw)
        if "int" in typ:
            return int(raw)
    except ValueError:
        raise ConfigError(name, f"cannot parse {raw!r}")
    return raw


def parse_config_text(text: str) -> dict:
    out = {}
    for line in text.splitlines():
        s = line.strip()
        if s.startswith(_io.ECHO_PREFIX.strip()):
            s = s[len(_io.ECHO_PREFIX.strip()):].strip()
        elif s.startswith("#") or "=" not in s:
            continue
        key, _, val = s.partition("=")
        key = key.strip()
        if "#" in val:
            val = val.split("#", 1)[0]
        out[key] = _coerce(key, val)
    return out


def load_config(path=None, overrides=(), seed=None) -> RunConfig:
    values = {}
    if path is not None:
        values.update(parse_config_text(Path(path).read_text()))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(item, "override must be key=value")
        k, _, v = item.partition("=")
        values[k.strip()] = _coerce(k.strip(), v)
    if seed is not None:
        values["seed"] = seed
    return RunConfig(**values).validate()


def _density_rows(cfg, m, lam, ys, horizon, ests):
    rows = []
    for y, e in zip(ys, ests):
        flags = [k for k in ("clamped", "low_ess") if e.diagnostics.get(k)]
        rows.append([m.hurst, m.drift.kind, "" if lam is None else lam, *y, horizon, e.value,
                     e.stderr, e.n_paths, e.diagnostics.get("weight_ess", ""), "|".join(flags)])
    return rows


def _density_header(n):
    return ["H", "drift", "lambda"] + [f"y{i + 1}" for i in range(n)] + [
        "T", "value", "stderr", "n_paths", "ess", "flags"]


def cmd_simulate(cfg: RunConfig, out: Path, workers=1):
    m = cfg.model()
    grid = Grid.span(0.0, cfg.T, cfg.n_steps)
    Tp = 100 * cfg.T if cfg.T_past is None else cfg.T_past
    echo = cfg.echo()
    k = cfg.kind
    if k in ("bridge_exact", "bridge_sde"):
        ep = BridgeEndpoint(cfg.vector("x"), cfg.T)
        fn = sample_bridge_exact if k == "bridge_exact" else sample_bridge_sde
        p = fn(ep, grid, cfg.hurst, cfg.seed)
        return [_io.write_path_csv(out / "simulate.csv", SampledPath(grid, p.x_values), echo)]
    if k == "fbm_exact":
        return [_io.write_path_csv(out / "simulate.csv", fbm_exact(grid, cfg.hurst, cfg.seed, dim=cfg.dim), echo)]
    W = sample_two_sided_wiener(Tp, cfg.T, grid.dt, cfg.seed, 0, dim=cfg.dim, past_ratio=1.05)
    if k == "wiener":
        path = W.wiener_values()
    elif k == "liouville":
        path = liouville_from_wiener(W, cfg.hurst)
    elif k == "fbm":
        path = fbm_mandelbrot(W, cfg.hurst)
    else:
        B = fbm_mandelbrot(W, cfg.hurst)
        path = euler_solve(m, cfg.lam_value(), B, cfg.vector("y0"))
    return [_io.write_path_csv(out / "simulate.csv", path, echo)]


def cmd_density(cfg: RunConfig, out: Path, workers=1):
    m = cfg.model()
    lam = cfg.lam_value()
    ys = cfg.points("y_list")
    grid = Grid.span(0.0, cfg.T, cfg.n_steps)
    y0 = cfg.vector("y0")
    if cfg.ell_mode == "constant":
        ell = constant_path(y0, grid)
    else:
        Tp = 100 * cfg.T if cfg.T_past is None else cfg.T_past
        W = sample_two_sided_wiener(Tp, cfg.T, grid.dt, cfg.seed, (_rng.PAST, 0), dim=cfg.dim,
                                    past_ratio=1.05)
        ell = SampledPath(grid, y0 + p_h_operator(W, grid, cfg.hurst).values @ m.sigma.T)
    ests = conditional_density(m, lam, ell, ys, cfg.T, cfg.n_paths, cfg.seed)
    rows = _density_rows(cfg, m, lam, ys, cfg.T, ests)
    return [_io.write_csv(out / "density.csv", _density_header(cfg.dim), rows, cfg.echo())]


def cmd_transition(cfg: RunConfig, out: Path, workers=1):
    m = cfg.model()
    lam = cfg.lam_value()
    ys = cfg.points("y_list")
    ests = transition_density(m, lam, cfg.vector("y0"), ys, cfg.T, cfg.n_outer, cfg.n_inner,
                              cfg.T_past, cfg.seed, n_steps=cfg.n_steps, workers=workers)
    rows = _density_rows(cfg, m, lam, ys, cfg.T, ests)
    return [_io.write_csv(out / "transition.csv", _density_header(cfg.dim), rows, cfg.echo())]


def cmd_stationary(cfg: RunConfig, out: Path, workers=1):
    m = cfg.model()
    lam = cfg.lam_value()
    ys = cfg.points("y_list")
    ests = stationary_density(m, lam, ys, cfg.T0, cfg.t_burn, cfg.n_outer, cfg.n_inner, cfg.T_past,
                              cfg.seed, cfg.dt_burn, cfg.n_steps, workers)
    rows = _density_rows(cfg, m, lam, ys, cfg.T0, ests)
    return [_io.write_csv(out / "stationary.csv", _density_header(cfg.dim), rows, cfg.echo())]


def cmd_sweep(cfg: RunConfig, out: Path, workers=1):
    if cfg.drift != "parametric_linear":
        raise ConfigError("drift", "sweep needs drift = parametric_linear")
    m = cfg.model()
    ys = cfg.points("y_list")
    res = parametric_stationary_sweep(m, cfg.floats("lambda_grid"), ys, T0=cfg.T0, t_burn=cfg.t_burn,
                                      n_replicas=cfg.n_outer, n_inner=cfg.n_inner, T_past=cfg.T_past,
                                      seed=cfg.seed, dt_burn=cfg.dt_burn, n_steps=cfg.n_steps,
                                      workers=workers)
    rows = []
    for lam, ests in zip(res.lambdas, res.table):
        rows += _density_rows(cfg, m, lam, ys, cfg.T0, ests)
    fd_rows = []
    for lam, vals, ses in zip(res.fd_lambdas, res.fd_values, res.fd_stderr):
        for y, v, s in zip(ys, vals, ses):
            fd_rows.append([lam, *y, v, s])
    fd_header = ["lambda"] + [f"y{i + 1}" for i in range(cfg.dim)] + ["d_lambda_p", "stderr"]
    return [_io.write_csv(out / "sweep.csv", _density_header(cfg.dim), rows, cfg.echo()),
            _io.write_csv(out / "sweep_fd.csv", fd_header, fd_rows, cfg.echo())]


def cmd_averaging(cfg: RunConfig, out: Path, workers=1):
    fast = ModelSpec(make_drift("linear", rate=cfg.drift_rate), [[1.0]], cfg.hurst_fast)
    tab = averaged_coefficients(lambda x, y: -x + y, lambda x, y: np.ones_like(y), fast,
                                np.linspace(-3, 3, 7), np.linspace(-4, 4, 33),
                                n_replicas=cfg.n_outer, n_inner=cfg.n_inner, t_burn=cfg.t_burn,
                                seed=cfg.seed, n_steps=cfg.n_steps, dt_burn=cfg.dt_burn, workers=workers)
    rows = zip(tab.x, tab.fbar, tab.gbar, tab.mass)
    return [_io.write_csv(out / "averaging.csv", ["x", "fbar", "gbar", "mass"], rows, cfg.echo())]


def run_experiment(name: str, cfg: RunConfig, workers=1) -> V.ExperimentReport:
    m = cfg.model()
    lam = cfg.lam_value()
    if name == "chapman_kolmogorov":
        ys = cfg.points("y_list") if cfg.y_list else None
        return V.check_chapman_kolmogorov(m, lam, cfg.vector("y0"), cfg.t, cfg.s, ys, cfg.n_outer,
                                          cfg.n_inner, min(cfg.n_steps, 50), T_past=cfg.T_past,
                                          seed=cfg.seed, workers=workers)
    if name == "gaussian_bounds":
        ys = cfg.points("y_list") if cfg.y_list else None
        return V.check_gaussian_bounds_stationary(m, lam, ys, cfg.n_outer, cfg.n_inner, cfg.t_burn,
                                                  cfg.T0, cfg.T_past, cfg.seed, cfg.n_steps,
                                                  cfg.dt_burn, workers)
    if name == "nonstationary_bounds":
        tl = cfg.floats("t_list") if cfg.t_list else (0.25, 0.5, 1.0)
        return V.check_nonstationary_bounds(m, lam, cfg.floats("y0_list"), tl, n_outer=cfg.n_outer,
                                            n_inner=cfg.n_inner, T_past=cfg.T_past, seed=cfg.seed,
                                            n_steps=min(cfg.n_steps, 50), workers=workers)
    if name == "tv_convergence":
        tl = cfg.floats("t_list") if cfg.t_list else (1.0, 2.0, 4.0, 8.0)
        return V.check_tv_convergence(m, lam, tl, float(cfg.vector("y0")[0]), n_paths=cfg.n_paths,
                                      dt=cfg.dt_burn, T_past=cfg.T_past, seed=cfg.seed)
    if name == "averaging":
        pr = V.AveragingPreset(hurst_slow=cfg.hurst, hurst_fast=cfg.hurst_fast,
                               fast_rate=cfg.drift_rate, T=cfg.T, dt=cfg.dt)
        return V.check_averaging(pr, cfg.floats("eps_list"), (cfg.alpha,), seed=cfg.seed)
    raise KeyError(name)


def cmd_validate(cfg: RunConfig, out: Path, name: str, workers=1):
    rep = run_experiment(name, cfg, workers)
    rep.inputs = {"config": cfg.echo(), **rep.inputs}
    path = _io.write_json(out / f"validate_{name}.json", V._plain(
        {"name": rep.name, "inputs": rep.inputs, "metrics": rep.metrics, "verdict": rep.verdict,
         "thresholds": rep.thresholds, "artifacts": rep.artifacts}))
    return rep, path


def build_parser():
    p = argparse.ArgumentParser(prog="fracbridge", description=__doc__.split("\n\n")[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value settings file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one setting (repeatable)")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--workers", type=int, default=1, help="threads (outputs do not depend on it)")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for c in COMMANDS:
        sp = sub.add_parser(c, parents=[common])
        if c == "validate":
            sp.add_argument("experiment", help="one of: " + ", ".join(V.EXPERIMENTS))
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out)
    if args.command == "validate" and args.experiment not in V.EXPERIMENTS:
        print(f"unknown experiment {args.experiment!r}; known: {', '.join(V.EXPERIMENTS)}",
              file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config, args.set, args.seed)
        if args.command == "validate":
            rep, path = cmd_validate(cfg, out, args.experiment, args.workers)
            print(f"{rep.name}: {rep.verdict} ({path})")
            return 0 if rep.passed else 1
        fn = globals()[f"cmd_{args.command}"]
        for path in fn(cfg, out, args.workers):
            print(path)
        return 0
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
