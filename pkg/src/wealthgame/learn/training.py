"""The two-stage training scheme.

Stage I regresses each agent's return estimate on observed prices: a small
recurrent net maps (encoded price path, initial prior) to a per-step estimate,
trained against the return path simulated under the agent's own measure (same
Brownian increments, prior-sampled start).  E independently initialized nets
are trained and their outputs averaged.

Stage II solves the coupled FBSDE: a single shared feedforward net maps
(estimates, price, time) to the Z loadings, the initial value vector Y0 is a
learnable variable, and the loss is the squared terminal gap ||Y_K - A X_K||^2
averaged over a minibatch.  Minibatches are freshly simulated every epoch.

Adam drives both stages; Stage I halves its learning rate every decay_every
steps, Stage II keeps a constant rate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import Divergence, WealthGameError
from ..fbsde import EffectiveRisk, competition_matrix
from ..filtering import AgentProfile, kalman_estimate, sample_prior
from ..market import MarketSpec, PathBundle, h_of, make_rng, simulate_bundle
from ..filtering import subjective_return_path
from .adam import AdamState, adam_step
from .kernels import rnn_epoch, rnn_predict, stage2_epoch, stage2_rollout
from .nets import MlpParams, RnnParams, init_mlp, init_rnn, rnn_inputs

DEFAULT_INITIAL_WEALTH = 10.0


@dataclass
class TrainConfig:
    """Training hyperparameters; the defaults are the reference settings."""

    epochs: int = 5000
    batch: int = 64
    ensemble: int = 3
    hidden: int = 64
    n_layers: int = 3
    lr_stage1: float = 1e-3
    lr_stage2: float = 3e-3
    decay_every: int = 400
    decay_factor: float = 0.5
    stage1_epochs: int | None = None
    stage2_epochs: int | None = None
    log_input: bool = True

    def __post_init__(self):
        if min(self.epochs, self.batch, self.ensemble, self.hidden) <= 0:
            raise WealthGameError("train config fields must be positive")

    @property
    def epochs1(self) -> int:
        return self.stage1_epochs if self.stage1_epochs is not None else self.epochs

    @property
    def epochs2(self) -> int:
        return self.stage2_epochs if self.stage2_epochs is not None else self.epochs


@dataclass
class Stage1Result:
    """Per-agent estimator ensembles plus training logs."""

    ensembles: list                      # per agent: list[RnnParams]
    logs: dict = field(default_factory=dict)   # (agent, member) -> rows (epoch, loss, lr)
    log_input: bool = True


@dataclass
class Stage2Result:
    mlp: MlpParams
    Y0: np.ndarray
    losses: np.ndarray
    logs: list = field(default_factory=list)   # rows (epoch, loss, lr, *Y0)


def _rnn_arrays(p: RnnParams):
    return (p.W_in, p.b_in, p.W_h, p.b_h,
            np.ascontiguousarray(p.W_out[:, 0]), float(p.b_out[0]))


def _train_one_rnn(spec: MarketSpec, prior, cfg: TrainConfig, rng) -> tuple[RnnParams, list]:
    params = init_rnn(rng, 2, cfg.hidden, 1)
    flat = params.flat()
    opt = AdamState.for_params(flat, cfg.lr_stage1, cfg.decay_every, cfg.decay_factor)
    rows = []
    for ep in range(cfg.epochs1):
        bundle = simulate_bundle(spec, cfg.batch, rng)
        a0 = np.asarray(sample_prior(prior, spec.dynamics, rng, size=cfg.batch))
        target = subjective_return_path(spec, a0, bundle.dB)
        x = rnn_inputs(bundle.S, a0, cfg.log_input)
        loss, gWi, gbi, gWh, gbh, gwo, gbo = rnn_epoch(
            x, np.ascontiguousarray(target.T), *_rnn_arrays(params)
        )
        if not np.isfinite(loss):
            raise Divergence(f"stage I loss became {loss} at epoch {ep}")
        grads = [gWi, gbi, gWh, gbh, gwo.reshape(-1, 1), np.array([gbo])]
        adam_step(opt, flat, grads)
        rows.append((ep, float(loss), opt.lr))
    return params, rows


def train_stage1(spec: MarketSpec, agents: list[AgentProfile], cfg: TrainConfig, seed) -> Stage1Result:
    """Train the per-agent estimator ensembles.

    Agents sharing an identical prior share one trained ensemble (their
    estimation problems are the same distribution).
    """
    ss = np.random.SeedSequence(seed)
    by_prior: dict = {}
    ensembles = []
    logs = {}
    children = iter(ss.spawn(len(agents) * cfg.ensemble))
    for ai, agent in enumerate(agents):
        key = agent.prior
        if key in by_prior:
            src = by_prior[key]
            ensembles.append(ensembles[src])
            for e in range(cfg.ensemble):
                logs[(ai, e)] = logs[(src, e)]
            continue
        members = []
        for e in range(cfg.ensemble):
            child = next(children)
            rng = make_rng(child)
            params, rows = _train_one_rnn(spec, agent.prior, cfg, rng)
            members.append(params)
            logs[(ai, e)] = rows
        by_prior[key] = ai
        ensembles.append(members)
    return Stage1Result(ensembles=ensembles, logs=logs, log_input=cfg.log_input)


def ensemble_estimate(ensemble: list[RnnParams], S, a0, log_input: bool = True) -> np.ndarray:
    """Arithmetic mean of member outputs, per step; returns (B, K+1)."""
    x = rnn_inputs(S, a0, log_input)
    acc = None
    for p in ensemble:
        out = rnn_predict(x, *_rnn_arrays(p))
        acc = out if acc is None else acc + out
    return (acc / len(ensemble)).T


def epoch_inputs(
    spec: MarketSpec,
    agents: list[AgentProfile],
    rng,
    n_paths: int,
    drift: str,
    stage1: Stage1Result | None = None,
):
    """Simulate a batch and assemble per-agent estimates and innovations.

    drift: 'fi' uses the true h(A_t), 'kalman' the exact filter (linear only),
    'rnn' the Stage I ensembles.  Returns (bundle, hhat (B,K+1,N), dzeta (B,K,N)).
    """
    bundle = simulate_bundle(spec, n_paths, rng)
    n = len(agents)
    K = spec.K
    cols_h = []
    for i, agent in enumerate(agents):
        if drift == "fi":
            est = np.broadcast_to(h_of(spec.h_map, bundle.A), bundle.A.shape).copy()
        elif drift == "kalman":
            a0 = np.asarray(sample_prior(agent.prior, spec.dynamics, rng, size=n_paths))
            est, _ = kalman_estimate(spec, bundle.returns, agent.prior, mean0=a0)
        elif drift == "rnn":
            if stage1 is None:
                raise WealthGameError("drift='rnn' requires a Stage I result")
            a0 = np.asarray(sample_prior(agent.prior, spec.dynamics, rng, size=n_paths))
            est = ensemble_estimate(stage1.ensembles[i], bundle.S, a0, stage1.log_input)
        else:
            raise WealthGameError(f"unknown drift source {drift!r}")
        cols_h.append(est)
    hhat = np.stack(cols_h, axis=2)
    dzeta = (bundle.returns[:, :, None] - hhat[:, :K, :] * spec.dt) / spec.sigma_S
    return bundle, np.ascontiguousarray(hhat), np.ascontiguousarray(dzeta)


def train_stage2(
    spec: MarketSpec,
    agents: list[AgentProfile],
    cfg: TrainConfig,
    seed,
    drift: str = "rnn",
    stage1: Stage1Result | None = None,
    initial_wealth: float = DEFAULT_INITIAL_WEALTH,
) -> Stage2Result:
    """Train the deep FBSDE solver; returns the net, Y0 and the loss curve."""
    n = len(agents)
    rng = make_rng(seed)
    dtil = EffectiveRisk.from_profiles(agents).dtilde
    cm = competition_matrix(np.array([a.theta for a in agents]))
    mlp = init_mlp(rng, n + 2, n, cfg.hidden, cfg.n_layers)
    Y0 = np.zeros(n)
    params = mlp.flat() + [Y0]
    opt = AdamState.for_params(params, cfg.lr_stage2)
    x0 = np.full(n, float(initial_wealth))
    tgrid = spec.time_grid()
    losses = np.empty(cfg.epochs2)
    logs = []
    for ep in range(cfg.epochs2):
        bundle, hhat, dzeta = epoch_inputs(spec, agents, rng, cfg.batch, drift, stage1)
        out = stage2_epoch(
            hhat, bundle.S, tgrid, dzeta, dtil, cm.A, x0, Y0,
            mlp.weights[0], mlp.biases[0], mlp.weights[1], mlp.biases[1],
            mlp.weights[2], mlp.biases[2], spec.sigma_S, spec.dt,
        )
        loss = out[0]
        if not np.isfinite(loss):
            raise Divergence(f"stage II loss became {loss} at epoch {ep}")
        grads = list(out[1:8])
        adam_step(opt, params, grads)
        losses[ep] = loss
        logs.append((ep, float(loss), opt.lr) + tuple(float(v) for v in Y0))
    return Stage2Result(mlp=mlp, Y0=Y0, losses=losses, logs=logs)


@dataclass
class FbsdeEvaluation:
    """Solved paths on an evaluation batch."""

    bundle: PathBundle
    hhat: np.ndarray     # (B, K+1, N)
    Z: np.ndarray        # (B, K+1, N)
    X: np.ndarray
    Y: np.ndarray
    pi: np.ndarray       # (B, K+1, N) positions (Z + dtil b)/sigma_S


def evaluate_stage2(
    spec: MarketSpec,
    agents: list[AgentProfile],
    result: Stage2Result,
    seed,
    n_paths: int,
    drift: str = "rnn",
    stage1: Stage1Result | None = None,
    initial_wealth: float = DEFAULT_INITIAL_WEALTH,
) -> FbsdeEvaluation:
    """Roll the trained solver over a fresh path batch."""
    n = len(agents)
    rng = make_rng(seed)
    bundle, hhat, dzeta = epoch_inputs(spec, agents, rng, n_paths, drift, stage1)
    dtil = EffectiveRisk.from_profiles(agents).dtilde
    x0 = np.full(n, float(initial_wealth))
    mlp = result.mlp
    Z, X, Y = stage2_rollout(
        hhat, bundle.S, spec.time_grid(), dzeta, dtil, x0, result.Y0,
        mlp.weights[0], mlp.biases[0], mlp.weights[1], mlp.biases[1],
        mlp.weights[2], mlp.biases[2], spec.sigma_S, spec.dt,
    )
    b = hhat / spec.sigma_S
    pi = (Z + dtil[None, None, :] * b) / spec.sigma_S
    return FbsdeEvaluation(bundle=bundle, hhat=hhat, Z=Z, X=X, Y=Y, pi=pi)
