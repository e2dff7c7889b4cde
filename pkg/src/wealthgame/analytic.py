"""Closed-form Nash equilibrium for the linear-Gaussian market.

Each agent's best response at time t, given an estimate eta of the return
rate and the opponents' average strategy abar, is affine:

    pi_i = beta_i(t, eta) + m_i(t) * abar_i

with

    beta_i = (delta_i / (sigma_S^2 (1 - theta_i/N))) *
             [eta (1 + phi(t) * IA(t)) + phi(t) * IB0(t)]
    m_i    = (delta_i / (sigma_S^2 (1 - theta_i/N))) * phi(t) * w2_i * IB1(t)
             + theta_i / (1 - theta_i/N),         w2_i = theta_i / delta_i,

where phi(t) = Sigma(t) + sigma_S sigma_mu rho is the hedge factor and IA,
IB0, IB1 are integrals of the coefficient kernels

    A(t,s) = -(1/(2 sigma_S^2)) exp(-2 int_t^s (lam + phi/sigma_S) du)
    l(t,s) = -(1/sigma_S^2) int_t^s q(u)
             exp(-int_u^s (lam + 2 phi/sigma_S - phi/sigma_S^2) dm) du
    B(t,s) = l(t,s) exp(-int_t^s (lam + phi/sigma_S^2) du)
    C(t,s) = int_t^s (phi^2/sigma_S^2 A(u,s) + q(u) B(u,s)) du

with source q(u) = lam mu_bar + w2 abar phi(u).  The value function is

    V(t,x,y,eta) = -exp(-(1/delta)((1-theta/N)x - theta y)) exp(g(t,eta)),
    g(t,eta) = int_t^T (A(t,s) eta^2 + B(t,s) eta + C(t,s)) ds.

All nested integrals are evaluated by composite trapezoid cumulative sums on
a lattice refined from the simulation grid, so the whole kernel build costs
O(K_lattice) for the strategy integrals and O(K_lattice) per value query.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoContraction, NumericError, WealthGameError
from .filtering import AgentProfile, RiccatiParams, riccati_sigma
from .market import MarketSpec

DEFAULT_REFINE = 8  # kernel lattice points per simulation step


def _cumtrapz(y: np.ndarray, t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t))
    return out


@dataclass
class CoefKernels:
    """Cached exponential-integral terms of the coefficient-kernel system.

    Built for one conditional-variance curve (one agent).  Rows of the
    A/l/B/C grids are reconstructed on demand from the cumulative arrays.
    """

    t: np.ndarray            # fine lattice, t[0] = 0, t[-1] = T
    phi: np.ndarray          # Sigma(t) + sigma_S sigma_mu rho
    sigma_S: float
    lam: float
    mu_bar: float
    EA: np.ndarray           # int_0^t (lam + phi/sigma_S)
    EB: np.ndarray           # int_0^t (lam + phi/sigma_S^2)
    EL: np.ndarray           # int_0^t (lam + 2 phi/sigma_S - phi/sigma_S^2)
    IA: np.ndarray           # int_t^T 2 A(t,s) ds, per lattice node
    IB0: np.ndarray          # int_t^T B(t,s) ds for q = lam mu_bar
    IB1: np.ndarray          # int_t^T B(t,s) ds for q = phi (unit coupling)

    def index_of(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.t - t)))
        if abs(self.t[i] - t) > 1e-9 * max(1.0, self.t[-1]):
            raise WealthGameError(f"t = {t} is not a lattice node")
        return i

    def A_row(self, i: int) -> np.ndarray:
        """A(t_i, s) for all lattice s >= t_i."""
        return -1.0 / (2.0 * self.sigma_S**2) * np.exp(-2.0 * (self.EA[i:] - self.EA[i]))

    def _q(self, w2_alpha: float) -> np.ndarray:
        return self.lam * self.mu_bar + w2_alpha * self.phi

    def l_row(self, i: int, w2_alpha: float) -> np.ndarray:
        q = self._q(w2_alpha)
        Q = _cumtrapz(q * np.exp(self.EL), self.t)
        return -(1.0 / self.sigma_S**2) * np.exp(-self.EL[i:]) * (Q[i:] - Q[i])

    def B_row(self, i: int, w2_alpha: float) -> np.ndarray:
        return self.l_row(i, w2_alpha) * np.exp(-(self.EB[i:] - self.EB[i]))

    def C_row(self, i: int, w2_alpha: float) -> np.ndarray:
        q = self._q(w2_alpha)
        P = _cumtrapz(self.phi**2 / self.sigma_S**2 * np.exp(2.0 * self.EA), self.t)
        c_a = -1.0 / (2.0 * self.sigma_S**2) * np.exp(-2.0 * self.EA[i:]) * (P[i:] - P[i])
        Q = _cumtrapz(q * np.exp(self.EL), self.t)
        R0 = _cumtrapz(q * np.exp(self.EB), self.t)
        R1 = _cumtrapz(q * np.exp(self.EB) * Q, self.t)
        c_b = (
            -(1.0 / self.sigma_S**2)
            * np.exp(-self.EB[i:] - self.EL[i:])
            * (Q[i:] * (R0[i:] - R0[i]) - (R1[i:] - R1[i]))
        )
        return c_a + c_b

    def g_at(self, i: int, eta: float, w2_alpha: float) -> float:
        """g(t_i, eta) with the opponents' average frozen inside w2_alpha."""
        s = self.t[i:]
        integrand = self.A_row(i) * eta**2 + self.B_row(i, w2_alpha) * eta + self.C_row(i, w2_alpha)
        return float(np.trapezoid(integrand, s))


def build_kernels(spec: MarketSpec, sigma_curve: np.ndarray, t_lattice: np.ndarray) -> CoefKernels:
    """Assemble the kernel cache from a conditional-variance curve."""
    t = np.asarray(t_lattice, dtype=float)
    sigma_curve = np.asarray(sigma_curve, dtype=float)
    if sigma_curve.shape != t.shape:
        raise WealthGameError("variance curve and lattice shapes differ")
    lam = spec.dynamics.lam
    s, sm, rho = spec.sigma_S, spec.dynamics.sigma_vol, spec.rho
    phi = sigma_curve + s * sm * rho
    EA = _cumtrapz(lam + phi / s, t)
    EB = _cumtrapz(lam + phi / s**2, t)
    EL = _cumtrapz(lam + 2.0 * phi / s - phi / s**2, t)

    # IA(t) = int_t^T 2 A(t,s) ds via VA = cumtrapz(e^{-2 EA})
    VA = _cumtrapz(np.exp(-2.0 * EA), t)
    IA = -(1.0 / s**2) * np.exp(2.0 * EA) * (VA[-1] - VA)

    # IB(t) = int_t^T B(t,s) ds for the two source pieces
    def _ib(q: np.ndarray) -> np.ndarray:
        Q = _cumtrapz(q * np.exp(EL), t)
        core = np.exp(-EB - EL)
        U0 = _cumtrapz(core, t)
        U1 = _cumtrapz(core * Q, t)
        return -(1.0 / s**2) * np.exp(EB) * ((U1[-1] - U1) - Q * (U0[-1] - U0))

    IB0 = _ib(np.full_like(t, lam * spec.dynamics.mu_bar))
    IB1 = _ib(phi)

    return CoefKernels(
        t=t, phi=phi, sigma_S=s, lam=lam, mu_bar=spec.dynamics.mu_bar,
        EA=EA, EB=EB, EL=EL, IA=IA, IB0=IB0, IB1=IB1,
    )


def kernels_for(spec: MarketSpec, Sigma0: float, refine: int = DEFAULT_REFINE) -> CoefKernels:
    """Kernels on a lattice refined `refine`-fold from the simulation grid."""
    t = np.linspace(0.0, spec.T, refine * spec.K + 1)
    params = RiccatiParams.from_market(spec, Sigma0)
    return build_kernels(spec, riccati_sigma(t, params, spec), t)


def _prefactor(agent: AgentProfile, sigma_S: float, n_agents: int) -> float:
    return agent.delta / (sigma_S**2 * (1.0 - agent.theta / n_agents))


def beta_i(t: float, eta, agent: AgentProfile, kernels: CoefKernels, n_agents: int = 3):
    """Myopic-plus-hedging self term of one agent; linear in eta."""
    i = kernels.index_of(t)
    pref = _prefactor(agent, kernels.sigma_S, n_agents)
    ph = kernels.phi[i]
    return pref * (np.asarray(eta) * (1.0 + ph * kernels.IA[i]) + ph * kernels.IB0[i])


def coupling_m_i(t: float, agent: AgentProfile, kernels: CoefKernels, n_agents: int = 3) -> float:
    """Scalar multiplying the opponents' average strategy in the best response."""
    if agent.theta == 0.0:
        return 0.0
    i = kernels.index_of(t)
    pref = _prefactor(agent, kernels.sigma_S, n_agents)
    w2 = agent.theta / agent.delta
    return float(
        pref * kernels.phi[i] * w2 * kernels.IB1[i]
        + agent.theta / (1.0 - agent.theta / n_agents)
    )


@dataclass
class NashLinearSolve:
    """Result of the per-time-step equilibrium solve."""

    m: np.ndarray
    beta: np.ndarray
    pi: np.ndarray
    iterations_used: int


def nash_fixed_point(beta, m, tol: float = 1e-10, max_iter: int = 50) -> NashLinearSolve:
    """Solve pi_i = beta_i + m_i * mean_{j != i} pi_j for all agents.

    Iteration: each sweep solves every agent's own affine equation exactly
    given the current aggregate sum, which reduces the coupling to a scalar
    linear map in sum(pi); after three sweeps the aggregate is Aitken
    delta-squared extrapolated, which is exact for a linear map, so the
    iteration lands within a handful of sweeps even at tight tolerances.
    The same system is also solved directly as an N x N linear system and the
    two routes must agree to 1e-9.

    beta may be (N,) for a single solve or (B, N) for a batch sharing m.
    """
    beta = np.asarray(beta, dtype=float)
    m = np.asarray(m, dtype=float)
    single = beta.ndim == 1
    b2 = beta[None, :] if single else beta
    n = b2.shape[1]
    if m.shape != (n,):
        raise WealthGameError("m must have one entry per agent")

    gamma = (m / n) / (1.0 + m / n)
    beta_t = b2 / (1.0 + m / n)
    gsum = float(gamma.sum())

    contraction_ok = float(np.max(m * (n - 1) / n, initial=0.0)) < 1.0

    pi = b2.copy()
    iterations = 0
    converged = False
    s_hist: list[np.ndarray] = []
    if contraction_ok:
        s = pi.sum(axis=1)
        for _ in range(max_iter):
            iterations += 1
            pi = beta_t + gamma[None, :] * s[:, None]
            s = pi.sum(axis=1)
            s_hist.append(s)
            if len(s_hist) == 3:
                d1 = s_hist[2] - s_hist[1]
                denom = d1 - (s_hist[1] - s_hist[0])
                corr = np.zeros_like(s)
                np.divide(d1 * d1, denom, out=corr, where=np.abs(denom) > 1e-300)
                s = s_hist[2] - corr
                s_hist.clear()
            abar = (pi.sum(axis=1, keepdims=True) - pi) / n
            resid = np.abs(pi - (b2 + m[None, :] * abar)).max()
            if resid < tol:
                converged = True
                break

    # direct route: (I - (1/N) diag(m) (ones - I)) pi = beta
    M = np.eye(n) - (np.outer(m, np.ones(n)) - np.diag(m)) / n
    try:
        pi_direct = np.linalg.solve(M, b2.T).T
    except np.linalg.LinAlgError:
        if not converged:
            raise NoContraction("iteration did not converge and the linear system is singular")
        pi_direct = pi

    if not converged:
        pi = pi_direct
    elif np.max(np.abs(pi - pi_direct)) > 1e-9:
        raise NumericError("fixed point and direct linear solve disagree beyond 1e-9")

    result_pi = pi[0] if single else pi
    result_beta = b2[0] if single else b2
    return NashLinearSolve(m=m, beta=result_beta, pi=result_pi, iterations_used=iterations)


def merton_benchmark(t: float, eta, agents: list[AgentProfile], sigma_S: float, tol: float = 1e-10):
    """No-hedging Nash positions at estimate(s) eta (deterministic-return view).

    Hedging integrals are dropped: beta_i = delta_i eta_i / (sigma_S^2
    (1 - theta_i/N)) and m_i = theta_i / (1 - theta_i/N).  eta may be a
    scalar, (N,) per-agent values, or a (B, N) batch.  t is accepted for
    signature symmetry with the full solve; the benchmark is time-free.
    """
    n = len(agents)
    delta = np.array([a.delta for a in agents])
    theta = np.array([a.theta for a in agents])
    eta = np.asarray(eta, dtype=float)
    if eta.ndim == 0:
        eta = np.full(n, float(eta))
    beta = delta * eta / (sigma_S**2 * (1.0 - theta / n))
    m = theta / (1.0 - theta / n)
    return nash_fixed_point(beta, m, tol=tol).pi


def value_function(
    t: float,
    x: float,
    y: float,
    eta: float,
    agent: AgentProfile,
    kernels: CoefKernels,
    n_agents: int = 3,
    alpha_opp: float = 0.0,
) -> float:
    """Agent value V(t, x, y, eta) = -e^{-(1/delta)((1-theta/N)x - theta y)} e^{g}.

    g depends on the opponents' average strategy frozen at time t through the
    kernel source q; pass the equilibrium value as alpha_opp (0 is exact when
    theta = 0, and when mu_bar = 0 it only affects the C kernel).
    """
    i = kernels.index_of(t)
    w2_alpha = (agent.theta / agent.delta) * alpha_opp
    g = kernels.g_at(i, eta, w2_alpha)
    expo = (1.0 / agent.delta) * ((1.0 - agent.theta / n_agents) * x - agent.theta * y)
    return float(-np.exp(-expo + g))


def equilibrium_at(
    t: float,
    eta,
    agents: list[AgentProfile],
    kernels: list[CoefKernels],
    tol: float = 1e-10,
    max_iter: int = 50,
) -> NashLinearSolve:
    """Equilibrium positions at one time for estimates eta (scalar or per agent)."""
    n = len(agents)
    eta = np.asarray(eta, dtype=float)
    if eta.ndim == 0:
        eta = np.full(n, float(eta))
    beta = np.array([float(beta_i(t, eta[i], agents[i], kernels[i], n)) for i in range(n)])
    m = np.array([coupling_m_i(t, agents[i], kernels[i], n) for i in range(n)])
    return nash_fixed_point(beta, m, tol=tol, max_iter=max_iter)


def solve_strategy_paths(
    spec: MarketSpec,
    agents: list[AgentProfile],
    eta_paths: np.ndarray,
    kernels: list[CoefKernels],
    tol: float = 1e-10,
    max_iter: int = 50,
):
    """Equilibrium and Merton strategy paths along estimate paths.

    eta_paths: (B, K+1, N) per-agent estimates on the simulation grid.
    Returns (pi, merton, max_iterations) with pi and merton (B, K+1, N).
    """
    B, Kp1, n = eta_paths.shape
    if n != len(agents):
        raise WealthGameError("eta_paths last axis must match the agent count")
    grid = spec.time_grid()
    if Kp1 != len(grid):
        raise WealthGameError("eta_paths second axis must match the time grid")
    delta = np.array([a.delta for a in agents])
    theta = np.array([a.theta for a in agents])
    pref = delta / (spec.sigma_S**2 * (1.0 - theta / n))
    m_myo = theta / (1.0 - theta / n)
    pi = np.empty((B, Kp1, n))
    merton = np.empty((B, Kp1, n))
    max_used = 0
    for k, tk in enumerate(grid):
        idx = [kr.index_of(tk) for kr in kernels]
        ph = np.array([kernels[i].phi[idx[i]] for i in range(n)])
        ia = np.array([kernels[i].IA[idx[i]] for i in range(n)])
        ib0 = np.array([kernels[i].IB0[idx[i]] for i in range(n)])
        ib1 = np.array([kernels[i].IB1[idx[i]] for i in range(n)])
        eta_k = eta_paths[:, k, :]
        beta = pref[None, :] * (eta_k * (1.0 + ph * ia)[None, :] + (ph * ib0)[None, :])
        m = pref * ph * (theta / delta) * ib1 + m_myo
        sol = nash_fixed_point(beta, m, tol=tol, max_iter=max_iter)
        pi[:, k, :] = sol.pi
        max_used = max(max_used, sol.iterations_used)
        beta_myo = delta[None, :] * eta_k / (spec.sigma_S**2 * (1.0 - theta / n))[None, :]
        merton[:, k, :] = nash_fixed_point(beta_myo, m_myo, tol=tol, max_iter=max_iter).pi
    return pi, merton, max_used
