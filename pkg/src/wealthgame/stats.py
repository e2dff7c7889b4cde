"""Evaluation statistics over strategy and wealth path ensembles.

Conventions: time-series standard deviations use the population convention
(divide by the number of grid nodes); per-agent CV is the cross-path average
std divided by the cross-path average mean of |pi_t|; Sharpe and the
variance-risk ratio (VRR = mean over variance) are computed on per-step
wealth increments pooled across paths and time, which gives K*B samples per
agent.  A terminal-wealth alternative is available behind a flag.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import WealthGameError, ZeroVariance


@dataclass
class StrategyStats:
    """Cross-path averages of time-series statistics of |pi|."""

    mean_abs: np.ndarray   # (N,)
    std_abs: np.ndarray    # (N,)
    cv: np.ndarray         # (N,) std_abs / mean_abs
    mean_cv: float         # average over agents


@dataclass
class PerformanceStats:
    sharpe: np.ndarray     # (N,)
    vrr: np.ndarray        # (N,)
    social_sharpe: float
    social_vrr: float


def strategy_stats(pi_paths: np.ndarray) -> StrategyStats:
    """Time-series mean/std of |pi| per path, averaged over paths.

    pi_paths: (B, K+1, N).
    """
    pi_paths = np.asarray(pi_paths, dtype=float)
    if pi_paths.ndim != 3:
        raise WealthGameError("pi_paths must be (paths, steps, agents)")
    a = np.abs(pi_paths)
    per_path_mean = a.mean(axis=1)          # (B, N)
    per_path_std = a.std(axis=1)            # population convention
    mean_abs = per_path_mean.mean(axis=0)
    std_abs = per_path_std.mean(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        cv = np.where(mean_abs > 0, std_abs / mean_abs, 0.0)
    return StrategyStats(mean_abs=mean_abs, std_abs=std_abs, cv=cv, mean_cv=float(cv.mean()))


def _ratio_stats(increments: np.ndarray) -> tuple[float, float]:
    mu = float(increments.mean())
    sd = float(increments.std())
    if sd == 0.0:
        raise ZeroVariance("pooled increments are constant")
    return mu / sd, mu / sd**2


def performance_stats(wealth_paths: np.ndarray, terminal: bool = False) -> PerformanceStats:
    """Sharpe and VRR per agent and for the social portfolio (sum of wealths).

    wealth_paths: (B, K+1, N).  Default pools per-step increments over paths
    and time; terminal=True uses terminal minus initial wealth per path.
    """
    w = np.asarray(wealth_paths, dtype=float)
    if w.ndim != 3:
        raise WealthGameError("wealth_paths must be (paths, steps, agents)")
    n = w.shape[2]
    if terminal:
        incr = w[:, -1, :] - w[:, 0, :]             # (B, N)
    else:
        incr = np.diff(w, axis=1).reshape(-1, n)    # (B*K, N)
    sharpe = np.empty(n)
    vrr = np.empty(n)
    for i in range(n):
        sharpe[i], vrr[i] = _ratio_stats(incr[:, i])
    social = w.sum(axis=2)
    s_incr = (social[:, -1] - social[:, 0]) if terminal else np.diff(social, axis=1).ravel()
    s_sharpe, s_vrr = _ratio_stats(s_incr)
    return PerformanceStats(sharpe=sharpe, vrr=vrr, social_sharpe=s_sharpe, social_vrr=s_vrr)


@dataclass
class HedgingReport:
    """Pointwise strategy-minus-benchmark paths and the terminal decay check."""

    demand: np.ndarray            # (B, K+1, N)
    terminal_max_abs: float       # max over agents of mean |demand| at t_K
    initial_max_abs: float        # same at t_0


def hedging_demand(pi_paths: np.ndarray, merton_paths: np.ndarray) -> HedgingReport:
    pi_paths = np.asarray(pi_paths, dtype=float)
    merton_paths = np.asarray(merton_paths, dtype=float)
    if pi_paths.shape != merton_paths.shape:
        raise WealthGameError("strategy and benchmark grids are not aligned")
    demand = pi_paths - merton_paths
    terminal = float(np.max(np.mean(np.abs(demand[:, -1, :]), axis=0)))
    initial = float(np.max(np.mean(np.abs(demand[:, 0, :]), axis=0)))
    return HedgingReport(demand=demand, terminal_max_abs=terminal, initial_max_abs=initial)
