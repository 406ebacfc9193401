"""Fit decomposition parameters and the load map to observed hourly load.

The loss is the residual sum of squares of ``load ~ theta0 + theta1 * v_F``.
For fixed decomposition parameters the linear map is solved in closed form;
the six decomposition parameters are searched with Nelder-Mead in an
unconstrained space:

* proportions ``p = sigmoid(z)``
* ``a0 = -50 + 100 * sigmoid(z)``
* ``a1 = 2 * sigmoid(z)``

All hours are evaluated together as one stacked array problem.
"""
from __future__ import annotations

import configparser
import logging
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, logit

from .decomposition import (
    INELASTIC_LIMIT,
    PARAM_NAMES,
    GERMANY_2017,
    DecompositionParams,
    decompose_arrays,
)
from .errors import (
    ConfigError,
    DegenerateRegressorError,
    DomainError,
    ObjectiveUndefinedError,
)
from .step_curve import first_crossing, to_mw

log = logging.getLogger(__name__)

A0_RANGE = (-50.0, 50.0)
A1_MAX = 2.0
_EDGE = 1e-6


@dataclass(frozen=True)
class OptimizerConfig:
    max_iters: int = 2000
    n_starts: int = 6
    tolerance: float = 1e-10
    rng_seed: int = 0
    n_resamples: int = 50

    def __post_init__(self):
        if self.max_iters < 1:
            raise ConfigError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.n_starts < 1:
            raise ConfigError(f"n_starts must be >= 1, got {self.n_starts}")
        if not self.tolerance > 0:
            raise ConfigError(f"tolerance must be positive, got {self.tolerance}")
        if self.n_resamples < 0:
            raise ConfigError(f"n_resamples must be >= 0, got {self.n_resamples}")

    @classmethod
    def from_mapping(cls, values: dict) -> "OptimizerConfig":
        kwargs = {}
        for f in fields(cls):
            if f.name in values:
                try:
                    kwargs[f.name] = _CASTS[f.name](values[f.name])
                except ValueError:
                    raise ConfigError(f"bad value for {f.name}: {values[f.name]!r}") from None
        return cls(**kwargs)


_CASTS = dict(max_iters=int, n_starts=int, tolerance=float, rng_seed=int, n_resamples=int)


def read_key_values(path) -> dict[str, str]:
    """Read a ``key = value`` text file (``#`` comments, no sections)."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        parser.read_string("[config]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None
    return dict(parser["config"])


def read_optimizer_config(path) -> OptimizerConfig:
    return OptimizerConfig.from_mapping(read_key_values(path))


class CalibrationProblem:
    """Hourly snapshots with index-aligned loads, stacked for vectorised use."""

    def __init__(self, snapshots, loads, *, check_order: bool = True):
        snapshots = list(snapshots)
        loads = np.asarray(loads, dtype=float)
        if len(snapshots) != loads.size:
            raise DomainError(f"{len(snapshots)} snapshots but {loads.size} loads")
        if not snapshots:
            raise DomainError("empty calibration problem")
        if np.any(~(loads > 0)):
            raise DomainError("loads must be positive")
        stamps = [s.timestamp for s in snapshots]
        if check_order and all(t is not None for t in stamps):
            if any(b <= a for a, b in zip(stamps, stamps[1:])):
                raise DomainError("timestamps must be strictly increasing")
        grid = snapshots[0].grid
        if any(s.grid != grid for s in snapshots):
            raise DomainError("all snapshots must share one grid")
        self.snapshots = snapshots
        self.loads = loads
        self.grid = grid
        self.timestamps = stamps
        self.wsup = np.stack([s.wsup.units for s in snapshots])
        self.wdem = np.stack([s.wdem.units for s in snapshots])
        self.wm = first_crossing(self.wsup, self.wdem)
        self._v_c = None

    def __len__(self):
        return self.loads.size

    def subset(self, index) -> "CalibrationProblem":
        index = np.asarray(index)
        return CalibrationProblem([self.snapshots[i] for i in index], self.loads[index],
                                  check_order=False)

    def decompose(self, params) -> dict:
        p = params.as_array() if isinstance(params, DecompositionParams) else params
        return decompose_arrays(self.grid, self.wsup, self.wdem, *p)

    @property
    def v_C_units(self) -> np.ndarray:
        if self._v_c is None:
            self._v_c = self.decompose(INELASTIC_LIMIT)["fm_vol"]
        return self._v_c


@dataclass(frozen=True)
class Evaluation:
    sse: float
    theta0: float
    theta1: float
    v_F: np.ndarray
    ok: np.ndarray

    @property
    def n_failed(self) -> int:
        return int((~self.ok).sum())


@dataclass(frozen=True)
class CalibrationResult:
    params: DecompositionParams
    theta0: float
    theta1: float
    sse: float
    v_F_series: np.ndarray
    v_W_series: np.ndarray
    v_C_series: np.ndarray
    correlations: tuple
    converged: bool
    n_failed: int = 0
    n_evaluations: int = 0
    starts: list = field(default_factory=list)
    per_param_se: dict | None = None


def inner_fit(v_F, loads):
    """Ordinary least squares of load on v_F: ``(theta0, theta1, sse)``."""
    x = np.asarray(v_F, dtype=float)
    y = np.asarray(loads, dtype=float)
    if x.size != y.size or x.size == 0:
        raise DegenerateRegressorError(f"need equal nonzero lengths, got {x.size} and {y.size}")
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx <= 1e-12 * max(1.0, float(x @ x)):
        raise DegenerateRegressorError("v_F is constant; the load map is not identified")
    theta1 = float(xc @ (y - y.mean())) / sxx
    theta0 = float(y.mean() - theta1 * x.mean())
    resid = y - theta0 - theta1 * x
    return theta0, theta1, float(resid @ resid)


def evaluate(params, problem: CalibrationProblem) -> Evaluation:
    """Decompose every hour and fit the load map on the hours that cleared."""
    r = problem.decompose(params)
    ok = r["ok"]
    if not ok.any():
        raise ObjectiveUndefinedError("no hour has a wholesale equilibrium")
    v_f = to_mw(r["fm_vol"])
    theta0, theta1, sse = inner_fit(v_f[ok], problem.loads[ok])
    return Evaluation(sse, theta0, theta1, v_f, ok)


def objective(params: DecompositionParams, problem: CalibrationProblem) -> float:
    return evaluate(params, problem).sse


# --------------------------------------------------------------------------
# search space

def to_search_space(params: DecompositionParams) -> np.ndarray:
    a0, a1, *props = params.as_array()
    z0 = logit(np.clip((a0 - A0_RANGE[0]) / (A0_RANGE[1] - A0_RANGE[0]), _EDGE, 1 - _EDGE))
    z1 = logit(np.clip(a1 / A1_MAX, _EDGE, 1 - _EDGE))
    return np.concatenate([[z0, z1], logit(np.clip(props, _EDGE, 1 - _EDGE))])


def from_search_space(z) -> np.ndarray:
    s = expit(np.asarray(z, dtype=float))
    out = s.copy()
    out[0] = A0_RANGE[0] + (A0_RANGE[1] - A0_RANGE[0]) * s[0]
    out[1] = A1_MAX * s[1]
    return out


def _snap_params(x) -> DecompositionParams:
    # sigmoid saturation can leave values a hair outside the closed box
    x = np.array(x, dtype=float)
    x[2:] = np.clip(x[2:], 0.0, 1.0)
    x[1] = max(x[1], np.finfo(float).tiny)
    return DecompositionParams.from_sequence(x)


CENTER = DecompositionParams(0.0, 1.0, 0.5, 0.5, 0.5, 0.5)
SEED_STARTS = (("germany2017", GERMANY_2017), ("inelastic", INELASTIC_LIMIT), ("center", CENTER))


def start_points(config: OptimizerConfig) -> list[tuple[str, np.ndarray]]:
    """Fixed seeds first, then random draws from ``rng_seed``."""
    starts = [(name, to_search_space(p)) for name, p in SEED_STARTS]
    rng = np.random.default_rng(config.rng_seed)
    while len(starts) < config.n_starts:
        starts.append((f"random{len(starts) - len(SEED_STARTS)}", rng.normal(0.0, 1.5, 6)))
    return starts[:config.n_starts]


def _nelder_mead(fun, z0, config, step):
    simplex = np.vstack([z0, z0 + step * np.eye(len(z0))])
    return minimize(fun, z0, method="Nelder-Mead",
                    options=dict(maxiter=config.max_iters, maxfev=4 * config.max_iters,
                                 xatol=1e-6, fatol=config.tolerance, initial_simplex=simplex))


def _scaled_loss(problem):
    y = problem.loads
    scale = float(((y - y.mean()) ** 2).sum()) or 1.0
    counter = {"n": 0}

    def fun(z):
        counter["n"] += 1
        try:
            return evaluate(from_search_space(z), problem).sse / scale
        except (DegenerateRegressorError, ObjectiveUndefinedError):
            return np.inf
    return fun, counter


def _search(problem, config, starts, step):
    fun, counter = _scaled_loss(problem)
    best, log_rows = None, []
    for name, z0 in starts:
        res = _nelder_mead(fun, z0, config, step)
        # one restart from the optimum to escape a collapsed simplex
        res2 = _nelder_mead(fun, res.x, config, step / 4)
        if res2.fun <= res.fun:
            res = res2
        log_rows.append((name, float(res.fun)))
        log.debug("start %s: loss %.3e after %d evaluations", name, res.fun, res.nfev)
        if best is None or res.fun < best.fun:
            best = res
    return best, counter["n"], log_rows


def _result(problem, x, converged, n_eval, starts) -> CalibrationResult:
    params = _snap_params(x)
    ev = evaluate(params, problem)
    ok = ev.ok
    v_w = to_mw(problem.wm[1]).astype(float)
    v_c = to_mw(problem.v_C_units).astype(float)
    y = problem.loads
    corr = tuple(_corr(y[ok], s[ok]) for s in (v_w, v_c, ev.v_F))
    return CalibrationResult(
        params=params, theta0=ev.theta0, theta1=ev.theta1, sse=ev.sse,
        v_F_series=np.where(ok, ev.v_F, np.nan), v_W_series=np.where(ok, v_w, np.nan),
        v_C_series=np.where(ok, v_c, np.nan), correlations=corr, converged=bool(converged),
        n_failed=ev.n_failed, n_evaluations=n_eval, starts=starts)


def _corr(a, b) -> float:
    if a.size < 2 or np.std(a) == 0 or np.std(b) == 0:
        return float("nan")
    return float(np.corrcoef(a, b)[0, 1])


def calibrate(problem: CalibrationProblem, config: OptimizerConfig | None = None) -> CalibrationResult:
    """Multi-start Nelder-Mead fit of the six decomposition parameters."""
    config = config or OptimizerConfig()
    if len(problem) < 24:
        raise DomainError(f"calibration needs at least 24 hours, got {len(problem)}")
    best, n_eval, rows = _search(problem, config, start_points(config), step=1.0)
    if not np.isfinite(best.fun):
        raise ObjectiveUndefinedError("loss is undefined at every start point")
    return _result(problem, from_search_space(best.x), best.success, n_eval, rows)


def _day_blocks(problem: CalibrationProblem) -> list[np.ndarray]:
    stamps = problem.timestamps
    if all(t is not None for t in stamps):
        keys = [t.date() for t in stamps]
    else:
        keys = [i // 24 for i in range(len(problem))]
    blocks = {}
    for i, k in enumerate(keys):
        blocks.setdefault(k, []).append(i)
    return [np.array(v) for v in blocks.values()]


def bootstrap_se(problem: CalibrationProblem, params: DecompositionParams, n_resamples: int,
                 config: OptimizerConfig | None = None) -> dict[str, float]:
    """Day-block bootstrap standard errors of the decomposition parameters.

    Whole days are resampled with replacement and each resample is refitted
    with a single Nelder-Mead run warm-started at ``params``.
    """
    if n_resamples < 10:
        raise ConfigError(f"n_resamples must be at least 10, got {n_resamples}")
    config = config or OptimizerConfig()
    blocks = _day_blocks(problem)
    rng = np.random.default_rng(config.rng_seed)
    z0 = to_search_space(params)
    draws = []
    for _ in range(n_resamples):
        pick = rng.integers(0, len(blocks), len(blocks))
        sub = problem.subset(np.concatenate([blocks[i] for i in pick]))
        fun, _ = _scaled_loss(sub)
        res = _nelder_mead(fun, z0, config, step=0.1)
        draws.append(_snap_params(from_search_space(res.x)).as_array())
    se = np.std(np.array(draws), axis=0, ddof=1)
    return dict(zip(PARAM_NAMES, se.tolist()))
