"""Conditional return estimation from observed prices.

For the linear-Gaussian market (OU state, identity return map) the exact
filter is Kalman-Bucy: the conditional mean follows

    dA_hat = -lam (A_hat - mu_bar) dt + ((Sigma(t) + sigma_S sigma_mu rho)/sigma_S) dzeta

driven by the innovation zeta_t (a standard Brownian motion in the price
filtration), and the conditional variance Sigma(t) has the closed form

    Sigma(t) = sqrt(k) sigma_S (k1 e^{2 sqrt(k) t / sigma_S} + k2)
               / (k1 e^{2 sqrt(k) t / sigma_S} - k2)
               - (lam + sigma_mu rho / sigma_S) sigma_S^2

with k = lam^2 sigma_S^2 + 2 sigma_S sigma_mu lam rho + sigma_mu^2 and
k1/k2 = +-sqrt(k) sigma_S + (lam sigma_S^2 + sigma_S sigma_mu rho) + Sigma_0.

The closed form is authoritative.  Differentiating it yields the scalar
Riccati ODE

    dSigma/dt = sigma_mu^2 - 2 lam Sigma - (Sigma + sigma_S sigma_mu rho)^2 / sigma_S^2,

which this module integrates with RK4 purely as an independent test oracle.

Note on the filter gain: the source formulas use (Sigma + sigma_S sigma_mu
rho)/sigma_S in the conditional-mean SDE but a /sigma_S^2 scaling inside some
of the equilibrium kernel exponents; both are implemented exactly where each
is used (see analytic.py), and the inconsistency is intentional, matching the
printed material this package reproduces.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDenominator, EmptySupport, WealthGameError, WrongModel
from .market import HiddenVariant, MarketSpec, h_of, simulate_hidden


@dataclass(frozen=True)
class PriorBelief:
    """Initial belief about the hidden state: N(mean, var) in the linear case,
    uniform of width support_width around mean in the bounded/CIR cases."""

    mean: float
    var: float = 0.0
    support_width: float = 0.0

    def __post_init__(self):
        if self.var < 0:
            raise WealthGameError("prior variance must be >= 0")
        if self.support_width < 0:
            raise WealthGameError("prior support width must be >= 0")

    @property
    def std(self) -> float:
        return float(np.sqrt(self.var))


@dataclass(frozen=True)
class AgentProfile:
    """Risk tolerance delta > 0, competition weight theta in [0, 1], prior."""

    delta: float
    theta: float
    prior: PriorBelief

    def __post_init__(self):
        if self.delta <= 0:
            raise WealthGameError("risk tolerance delta must be > 0")
        if not 0.0 <= self.theta <= 1.0:
            raise WealthGameError("competition weight theta must lie in [0, 1]")


@dataclass(frozen=True)
class RiccatiParams:
    """Derived constants of the conditional-variance closed form."""

    k: float
    k1: float
    k2: float
    Sigma0: float

    @classmethod
    def from_market(cls, spec: MarketSpec, Sigma0: float) -> "RiccatiParams":
        if Sigma0 < 0:
            raise WealthGameError("Sigma0 must be >= 0")
        lam = spec.dynamics.lam
        s, sm, rho = spec.sigma_S, spec.dynamics.sigma_vol, spec.rho
        k = lam**2 * s**2 + 2.0 * s * sm * lam * rho + sm**2
        if k <= 0:
            raise WealthGameError("k = lam^2 sigma_S^2 + 2 sigma_S sigma_mu lam rho + sigma_mu^2 must be > 0")
        base = lam * s**2 + s * sm * rho
        sk = np.sqrt(k)
        return cls(k=k, k1=sk * s + base + Sigma0, k2=-sk * s + base + Sigma0, Sigma0=Sigma0)


def riccati_sigma(t, params: RiccatiParams, spec: MarketSpec):
    """Closed-form conditional variance at time(s) t; Sigma(0) = Sigma0 exactly."""
    t = np.asarray(t, dtype=float)
    sk = np.sqrt(params.k)
    s = spec.sigma_S
    E = np.exp(2.0 * sk / s * t)
    den = params.k1 * E - params.k2
    if np.any(np.abs(den) < 1e-12):
        raise DegenerateDenominator("k1 e^{2 sqrt(k) t / sigma_S} - k2 vanished")
    lam, sm, rho = spec.dynamics.lam, spec.dynamics.sigma_vol, spec.rho
    out = sk * s * (params.k1 * E + params.k2) / den - (lam + sm * rho / s) * s**2
    return float(out) if out.ndim == 0 else out


def riccati_rhs(sigma, spec: MarketSpec) -> float:
    """Right-hand side of the reconstructed variance ODE (test oracle only)."""
    lam, s, sm, rho = spec.dynamics.lam, spec.sigma_S, spec.dynamics.sigma_vol, spec.rho
    return sm**2 - 2.0 * lam * sigma - (sigma + s * sm * rho) ** 2 / s**2


def riccati_ode_oracle(params: RiccatiParams, spec: MarketSpec, t_grid: np.ndarray) -> np.ndarray:
    """RK4 integration of the variance ODE from Sigma0 along t_grid."""
    t_grid = np.asarray(t_grid, dtype=float)
    out = np.empty_like(t_grid)
    sig = params.Sigma0
    out[0] = sig
    for i in range(len(t_grid) - 1):
        h = t_grid[i + 1] - t_grid[i]
        k1 = riccati_rhs(sig, spec)
        k2 = riccati_rhs(sig + 0.5 * h * k1, spec)
        k3 = riccati_rhs(sig + 0.5 * h * k2, spec)
        k4 = riccati_rhs(sig + h * k3, spec)
        sig = sig + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[i + 1] = sig
    return out


def stationary_sigma(spec: MarketSpec) -> float:
    """Positive root of the stationary Riccati equation (bisection-free)."""
    lam, s, sm, rho = spec.dynamics.lam, spec.sigma_S, spec.dynamics.sigma_vol, spec.rho
    # 0 = sm^2 - 2 lam x - (x + s sm rho)^2/s^2, expand to x^2 + b x + c = 0
    b = 2.0 * lam * s**2 + 2.0 * s * sm * rho
    c = sm**2 * s**2 * (rho**2 - 1.0)
    return (-b + np.sqrt(b * b - 4.0 * c)) / 2.0


def kalman_estimate(spec: MarketSpec, returns: np.ndarray, prior: PriorBelief, mean0=None):
    """Exact discrete Kalman-Bucy filter on observed stock relative increments.

    Innovation increments dzeta_k = (returns_k - A_hat_k dt)/sigma_S; the
    conditional mean is advanced with the gain evaluated at the left grid
    endpoint.  Returns (hhat, dzeta) with shapes (n, K+1) and (n, K).

    mean0 optionally overrides the starting mean per path (sampled priors);
    prior.var still sets the initial conditional variance.  Only valid for the
    linear-Gaussian market; raises WrongModel otherwise.
    """
    if not spec.is_linear_gaussian:
        raise WrongModel("Kalman filter requires the OU state with identity return map")
    returns = np.atleast_2d(returns)
    n, K = returns.shape
    if K != spec.K:
        raise WealthGameError(f"returns has {K} steps, spec.K = {spec.K}")
    params = RiccatiParams.from_market(spec, prior.var)
    grid = spec.time_grid()
    sig = riccati_sigma(grid, params, spec)
    lam, mu_bar = spec.dynamics.lam, spec.dynamics.mu_bar
    s, sm, rho = spec.sigma_S, spec.dynamics.sigma_vol, spec.rho
    dt = spec.dt
    hhat = np.empty((n, K + 1))
    dzeta = np.empty((n, K))
    hhat[:, 0] = prior.mean if mean0 is None else mean0
    for k in range(K):
        dzeta[:, k] = (returns[:, k] - hhat[:, k] * dt) / s
        gain = (sig[k] + s * sm * rho) / s
        hhat[:, k + 1] = hhat[:, k] - lam * (hhat[:, k] - mu_bar) * dt + gain * dzeta[:, k]
    return hhat, dzeta


def sample_prior(prior: PriorBelief, dynamics, rng: np.random.Generator, size=None):
    """Draw initial hidden-state belief(s).

    OU state: Gaussian N(mean, var).  Bounded/CIR states: uniform on
    [mean - w/2, mean + w/2] intersected with the state support, where w is
    the prior's support_width (Gaussian draws would exit the support).
    """
    if dynamics.variant is HiddenVariant.LINEAR_OU:
        if prior.var == 0.0:
            return prior.mean if size is None else np.full(size, prior.mean)
        return rng.normal(prior.mean, prior.std, size)
    lo = prior.mean - prior.support_width / 2.0
    hi = prior.mean + prior.support_width / 2.0
    if dynamics.variant is HiddenVariant.BOUNDED_NL:
        lo, hi = max(lo, dynamics.a_l), min(hi, dynamics.a_u)
    elif dynamics.variant is HiddenVariant.CIR:
        lo = max(lo, 0.0)
    if lo > hi:
        raise EmptySupport("prior interval misses the state support")
    if lo == hi:
        return lo if size is None else np.full(size, lo)
    return rng.uniform(lo, hi, size)


def subjective_hidden_path(spec: MarketSpec, a0_hat, noise_B: np.ndarray) -> np.ndarray:
    """Hidden path restarted from the sampled prior, driven by the same dB.

    This is the Stage I regression target under the agent's own measure; the
    same Euler scheme (and support clipping) as the objective simulation.
    a0_hat may be a scalar or per-path array of length n_paths.
    """
    if np.ndim(a0_hat) == 0:
        return simulate_hidden(spec, noise_B, a0=float(a0_hat))
    a0_hat = np.asarray(a0_hat, dtype=float)
    if a0_hat.shape != (noise_B.shape[0],):
        raise WealthGameError("a0_hat must be scalar or one value per path")
    from .market import _diffusion

    dyn = spec.dynamics
    dt = spec.dt
    n, K = noise_B.shape
    A = np.empty((n, K + 1))
    A[:, 0] = a0_hat
    for k in range(K):
        a = A[:, k]
        nxt = a - dyn.lam * (a - dyn.mu_bar) * dt + _diffusion(dyn, a) * noise_B[:, k]
        if dyn.variant is HiddenVariant.BOUNDED_NL:
            nxt = np.clip(nxt, dyn.a_l, dyn.a_u)
        elif dyn.variant is HiddenVariant.CIR:
            nxt = np.maximum(nxt, 0.0)
        A[:, k + 1] = nxt
    return A


def subjective_return_path(spec: MarketSpec, a0_hat, noise_B: np.ndarray) -> np.ndarray:
    """h applied along the subjective hidden path (the Stage I target)."""
    return h_of(spec.h_map, subjective_hidden_path(spec, a0_hat, noise_B))


def full_information_drift(spec: MarketSpec, A: np.ndarray) -> np.ndarray:
    """h(A_t) handed to downstream modules directly in FI mode."""
    return h_of(spec.h_map, A)
