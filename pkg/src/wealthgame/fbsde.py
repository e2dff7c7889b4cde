"""Coupled FBSDE system for the N-agent game, independent of how Z is produced.

Writing b_t = hhat_t / sigma_S for the (estimated) market price of risk and
dtilde_i = delta_i / (1 - theta_i/N) for the effective risk tolerance, the
discretized system is, componentwise over agents,

    X_{k+1} = X_k + (Z_k b_k + dtilde b_k^2) dt + (Z_k + dtilde b_k) dzeta_k
    Y_{k+1} = Y_k + Z_k dzeta_k + f(b_k, Z_k) dt
    f(b, z) = z b + (dtilde / 2) b^2

with terminal coupling Y_K = A X_K through the competition matrix
A[i, j != i] = theta_i / (N - theta_i).  The equilibrium position is
pi = (Z + dtilde b) / sigma_S, so the wealth update is exactly
pi_k (hhat_k dt + sigma_S dzeta_k), i.e. position times realized return.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import WealthGameError
from .filtering import AgentProfile


@dataclass(frozen=True)
class CompetitionMatrix:
    """Zero-diagonal relative-concern matrix with its operator 2-norm."""

    A: np.ndarray
    L_a: float


def competition_matrix(theta, n_agents: int | None = None, tol: float = 1e-12) -> CompetitionMatrix:
    """Build A[i, j!=i] = theta_i / (N - theta_i) and its 2-norm.

    The norm is computed by power iteration on A^T A to the given tolerance.
    """
    theta = np.asarray(theta, dtype=float)
    n = len(theta) if n_agents is None else n_agents
    if len(theta) != n:
        raise WealthGameError("theta must have one entry per agent")
    if np.any((theta < 0) | (theta > 1)):
        raise WealthGameError("competition weights must lie in [0, 1]")
    A = np.zeros((n, n))
    for i in range(n):
        A[i, :] = theta[i] / (n - theta[i])
        A[i, i] = 0.0
    L_a = _two_norm(A, tol)
    return CompetitionMatrix(A=A, L_a=L_a)


def _two_norm(A: np.ndarray, tol: float) -> float:
    if not np.any(A):
        return 0.0
    AtA = A.T @ A
    v = np.ones(A.shape[0]) / np.sqrt(A.shape[0])
    lam_prev = 0.0
    for _ in range(10_000):
        w = AtA @ v
        lam = float(v @ w)
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0
        v = w / nrm
        if abs(lam - lam_prev) < tol * max(1.0, abs(lam)):
            return float(np.sqrt(max(lam, 0.0)))
        lam_prev = lam
    return float(np.sqrt(max(lam_prev, 0.0)))


@dataclass(frozen=True)
class ConditionReport:
    """Outcome of the small-competition uniqueness condition L_a^2 e < 1."""

    passed: bool
    margin: float  # 1 - L_a^2 e when passed, else negative


def check_small_competition(cm: CompetitionMatrix) -> ConditionReport:
    """Uniqueness of the FBSDE solution is guaranteed only under a pass
    (together with bounded returns)."""
    value = cm.L_a**2 * np.e
    return ConditionReport(passed=value < 1.0, margin=1.0 - value)


@dataclass(frozen=True)
class EffectiveRisk:
    """dtilde_i = delta_i / (1 - theta_i / N); the single-agent reduction of
    the relative-utility exponent uses this throughout."""

    dtilde: np.ndarray

    @classmethod
    def from_profiles(cls, agents: list[AgentProfile]) -> "EffectiveRisk":
        n = len(agents)
        d = np.array([a.delta / (1.0 - a.theta / n) for a in agents])
        return cls(dtilde=d)


@dataclass
class FbsdeState:
    """Batched state of the discretized system; arrays are (B, N) or (N,)."""

    X: np.ndarray
    Y: np.ndarray
    Z: np.ndarray
    b: np.ndarray
    dtilde: np.ndarray
    t: float = 0.0


def generator_f(b, z, dtilde):
    """Backward generator, componentwise z b + (dtilde/2) b^2."""
    return z * b + 0.5 * dtilde * b**2


def strategy_from_Z(z, b, sigma_S: float, dtilde):
    """Equilibrium dollar position pi = (z + dtilde b) / sigma_S."""
    if sigma_S <= 0:
        raise WealthGameError("sigma_S must be > 0")
    return (z + dtilde * b) / sigma_S


def forward_step(state: FbsdeState, dzeta, dt: float):
    """One Euler step of the wealth equation; returns X_next."""
    drift = state.Z * state.b + state.dtilde * state.b**2
    return state.X + drift * dt + (state.Z + state.dtilde * state.b) * dzeta


def backward_step(state: FbsdeState, dzeta, dt: float):
    """One Euler step of the value equation; returns Y_next."""
    return state.Y + state.Z * dzeta + generator_f(state.b, state.Z, state.dtilde) * dt


def terminal_gap(X_T, Y_T, cm: CompetitionMatrix):
    """Mean squared norm || Y_T - A X_T ||^2 over the batch."""
    X_T = np.atleast_2d(X_T)
    Y_T = np.atleast_2d(Y_T)
    resid = Y_T - X_T @ cm.A.T
    return float(np.mean(np.sum(resid**2, axis=1)))
