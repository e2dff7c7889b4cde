"""N-agent relative-wealth portfolio game under partial information.

Simulates hidden-return markets, filters the unobserved drift, and computes
Nash-equilibrium investment strategies both in closed form (linear-Gaussian
case) and numerically through a deep FBSDE solver, then reports strategy and
performance statistics.
"""

__version__ = "0.1.0"

from .analytic import (
    CoefKernels,
    NashLinearSolve,
    beta_i,
    build_kernels,
    coupling_m_i,
    equilibrium_at,
    kernels_for,
    merton_benchmark,
    nash_fixed_point,
    solve_strategy_paths,
    value_function,
)
from .fbsde import (
    CompetitionMatrix,
    EffectiveRisk,
    FbsdeState,
    backward_step,
    check_small_competition,
    competition_matrix,
    forward_step,
    generator_f,
    strategy_from_Z,
    terminal_gap,
)
from .filtering import (
    AgentProfile,
    PriorBelief,
    RiccatiParams,
    kalman_estimate,
    riccati_ode_oracle,
    riccati_sigma,
    sample_prior,
    subjective_hidden_path,
)
from .market import (
    HiddenDynamics,
    HiddenVariant,
    MarketSpec,
    PathBundle,
    ReturnMap,
    h_of,
    make_rng,
    novikov_diagnostic,
    simulate_bundle,
    simulate_hidden,
    simulate_stock,
)
from .stats import hedging_demand, performance_stats, strategy_stats

__all__ = [name for name in dir() if not name.startswith("_")]
