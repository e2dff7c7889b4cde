"""Hidden-return market model and Euler path simulation.

The traded stock earns a drift h(A_t) driven by an unobserved state A_t:

    dS_t/S_t = h(A_t) dt + sigma_S (sqrt(1-rho^2) dW_t + rho dB_t)
    dA_t     = -lam (A_t - mu_bar) dt + m(A_t) dB_t

with three supported state diffusions m(a): constant (an Ornstein-Uhlenbeck
state), sigma_a*sqrt((a-a_l)(a_u-a)) (bounded support), and sigma_a*sqrt(a)
(CIR).  Paths are simulated with explicit Euler on a uniform grid; the bounded
variant is clipped to its support after each step and CIR uses full-truncation
Euler, both standard positivity/support-preserving choices.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import WealthGameError

STOCK_FLOOR_FRACTION = 1e-8  # S is floored at this fraction of S0


class HiddenVariant(Enum):
    LINEAR_OU = "linear_ou"
    BOUNDED_NL = "bounded_nl"
    CIR = "cir"


@dataclass(frozen=True)
class HiddenDynamics:
    """Parameters of the unobserved state SDE.

    sigma_vol is the diffusion scale: sigma_mu for the OU state, sigma_a for
    the bounded and CIR states.  a_l/a_u only apply to BOUNDED_NL.
    """

    variant: HiddenVariant
    lam: float
    mu_bar: float
    sigma_vol: float
    a_l: float = float("nan")
    a_u: float = float("nan")

    def __post_init__(self):
        if self.lam <= 0:
            raise WealthGameError("mean-reversion rate lam must be > 0")
        if self.sigma_vol < 0:
            raise WealthGameError("sigma_vol must be >= 0")
        if self.variant is HiddenVariant.BOUNDED_NL:
            if not (self.a_l < self.mu_bar < self.a_u):
                raise WealthGameError(
                    "bounded state needs a_l < mu_bar < a_u, otherwise the "
                    "drift pushes the state out of its support"
                )
        if self.variant is HiddenVariant.CIR and self.mu_bar < 0:
            raise WealthGameError("CIR state needs mu_bar >= 0")


@dataclass(frozen=True)
class ReturnMap:
    """Map h from hidden state to instantaneous return rate.

    kind 'identity' gives h(a) = a; kind 'signed_sqrt' gives
    h(a) = c * sign(a) * sqrt(|a|).
    """

    kind: str = "identity"
    c: float = 1.0

    def __post_init__(self):
        if self.kind not in ("identity", "signed_sqrt"):
            raise WealthGameError(f"unknown return map kind {self.kind!r}")


def h_of(h_map: ReturnMap, a):
    """Evaluate the return map at state value(s) a."""
    if h_map.kind == "identity":
        return a
    return h_map.c * np.sign(a) * np.sqrt(np.abs(a))


@dataclass(frozen=True)
class MarketSpec:
    """Full market description: hidden dynamics, stock parameters, time grid."""

    dynamics: HiddenDynamics
    h_map: ReturnMap
    sigma_S: float
    rho: float
    T: float
    K: int
    S0: float = 1.0
    A0: float = 0.0

    def __post_init__(self):
        if self.sigma_S <= 0:
            raise WealthGameError("sigma_S must be > 0 (uniform ellipticity)")
        if abs(self.rho) > 1:
            raise WealthGameError("|rho| must be <= 1")
        if self.K < 2:
            raise WealthGameError("K must be >= 2")
        if self.T <= 0:
            raise WealthGameError("T must be > 0")
        if self.S0 <= 0:
            raise WealthGameError("S0 must be > 0")

    @property
    def dt(self) -> float:
        return self.T / self.K

    def time_grid(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.K + 1)

    @property
    def is_linear_gaussian(self) -> bool:
        return (
            self.dynamics.variant is HiddenVariant.LINEAR_OU
            and self.h_map.kind == "identity"
        )


@dataclass
class PathBundle:
    """Discretized sample paths on the shared uniform grid.

    A and S have shape (n_paths, K+1); returns, dW, dB have shape (n_paths, K).
    floor_hits counts stock values clipped at the positivity floor.
    """

    grid: np.ndarray
    A: np.ndarray
    returns: np.ndarray
    S: np.ndarray
    dW: np.ndarray
    dB: np.ndarray
    floor_hits: int = 0
    estimates: dict = field(default_factory=dict)  # label -> (n_paths, K+1)

    @property
    def n_paths(self) -> int:
        return self.A.shape[0]


def _diffusion(dyn: HiddenDynamics, a: np.ndarray) -> np.ndarray:
    if dyn.variant is HiddenVariant.LINEAR_OU:
        return np.full_like(a, dyn.sigma_vol)
    if dyn.variant is HiddenVariant.BOUNDED_NL:
        inside = np.clip(a, dyn.a_l, dyn.a_u)
        return dyn.sigma_vol * np.sqrt((inside - dyn.a_l) * (dyn.a_u - inside))
    # CIR, full truncation: diffusion evaluated at max(a, 0)
    return dyn.sigma_vol * np.sqrt(np.maximum(a, 0.0))


def simulate_hidden(spec: MarketSpec, noise_B: np.ndarray, a0: float | None = None) -> np.ndarray:
    """Euler path of the hidden state driven by the given Brownian increments.

    noise_B has shape (n_paths, K) with per-step variance dt.  Bounded paths
    are clipped to [a_l, a_u] after each step; CIR paths are clipped at 0.
    """
    dyn = spec.dynamics
    n_paths, K = noise_B.shape
    if K != spec.K:
        raise WealthGameError(f"noise_B has {K} steps, spec.K = {spec.K}")
    dt = spec.dt
    A = np.empty((n_paths, K + 1))
    A[:, 0] = spec.A0 if a0 is None else a0
    for k in range(K):
        a = A[:, k]
        nxt = a - dyn.lam * (a - dyn.mu_bar) * dt + _diffusion(dyn, a) * noise_B[:, k]
        if dyn.variant is HiddenVariant.BOUNDED_NL:
            nxt = np.clip(nxt, dyn.a_l, dyn.a_u)
        elif dyn.variant is HiddenVariant.CIR:
            nxt = np.maximum(nxt, 0.0)
        A[:, k + 1] = nxt
    return A


def simulate_stock(
    spec: MarketSpec, A_path: np.ndarray, noise_W: np.ndarray, noise_B: np.ndarray
):
    """Stock relative increments and price path for a given hidden path.

    returns_k = h(A_k) dt + sigma_S (sqrt(1-rho^2) dW_k + rho dB_k),
    S_{k+1} = S_k (1 + returns_k) floored at a small positive constant.
    noise_B must be the same array that drove the hidden path.

    Returns (returns, S, floor_hits).
    """
    n_paths, K = noise_W.shape
    if A_path.shape != (n_paths, K + 1):
        raise WealthGameError("A_path shape inconsistent with noise arrays")
    dt = spec.dt
    h_vals = h_of(spec.h_map, A_path[:, :K])
    mix = np.sqrt(1.0 - spec.rho**2) * noise_W + spec.rho * noise_B
    returns = h_vals * dt + spec.sigma_S * mix
    S = np.empty((n_paths, K + 1))
    S[:, 0] = spec.S0
    floor = STOCK_FLOOR_FRACTION * spec.S0
    floor_hits = 0
    for k in range(K):
        nxt = S[:, k] * (1.0 + returns[:, k])
        low = nxt < floor
        floor_hits += int(np.count_nonzero(low))
        S[:, k + 1] = np.where(low, floor, nxt)
    return returns, S, floor_hits


def make_rng(seed) -> np.random.Generator:
    """Seeded counter-based generator (Philox); seed may be an int or a
    SeedSequence child."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(key=ss.generate_state(2, np.uint64)))


def spawn_rngs(seed, n: int) -> list[np.random.Generator]:
    """n independent child streams of a master seed."""
    return [make_rng(ss) for ss in np.random.SeedSequence(seed).spawn(n)]


def simulate_bundle(spec: MarketSpec, n_paths: int, rng: np.random.Generator) -> PathBundle:
    """Simulate a batch of (hidden, stock) paths under the objective measure."""
    sd = np.sqrt(spec.dt)
    dW = rng.normal(0.0, sd, (n_paths, spec.K))
    dB = rng.normal(0.0, sd, (n_paths, spec.K))
    A = simulate_hidden(spec, dB)
    returns, S, floor_hits = simulate_stock(spec, A, dW, dB)
    return PathBundle(
        grid=spec.time_grid(), A=A, returns=returns, S=S, dW=dW, dB=dB,
        floor_hits=floor_hits,
    )


@dataclass(frozen=True)
class NovikovBound:
    """Outcome of the exponential-moment diagnostic on b = h/sigma_S."""

    bounded: bool
    b_max: float = float("nan")


def novikov_diagnostic(spec: MarketSpec, truncation_bound: float | None = None) -> NovikovBound:
    """Boundedness diagnostic for the market price of risk.

    The bounded state gives |h| <= max(|h(a_l)|, |h(a_u)|) directly.  For OU
    and CIR states a user-supplied truncation bound on |h| may be configured;
    without one the diagnostic reports Unbounded, meaning the uniqueness
    theorem's hypothesis is unverified (warning-level only).
    """
    dyn = spec.dynamics
    if dyn.variant is HiddenVariant.BOUNDED_NL:
        h_lo = abs(float(h_of(spec.h_map, dyn.a_l)))
        h_hi = abs(float(h_of(spec.h_map, dyn.a_u)))
        return NovikovBound(True, max(h_lo, h_hi) / spec.sigma_S)
    if truncation_bound is not None:
        return NovikovBound(True, truncation_bound / spec.sigma_S)
    return NovikovBound(False)


def write_paths_csv(bundle: PathBundle, path) -> None:
    """One row per (path, step): path_id, k, t, A, S, ret, dW, dB, then one
    hhat_<label> column per stored estimate."""
    labels = sorted(bundle.estimates)
    K = bundle.returns.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["path_id", "k", "t", "A", "S", "ret", "dW", "dB"]
            + [f"hhat_{lb}" for lb in labels]
        )
        for j in range(bundle.n_paths):
            for k in range(K + 1):
                row = [
                    j, k, f"{bundle.grid[k]:.10g}",
                    f"{bundle.A[j, k]:.10g}", f"{bundle.S[j, k]:.10g}",
                    f"{bundle.returns[j, k]:.10g}" if k < K else "",
                    f"{bundle.dW[j, k]:.10g}" if k < K else "",
                    f"{bundle.dB[j, k]:.10g}" if k < K else "",
                ]
                row += [f"{bundle.estimates[lb][j, k]:.10g}" for lb in labels]
                w.writerow(row)
