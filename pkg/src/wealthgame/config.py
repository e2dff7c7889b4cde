"""Scenario configuration: flat sectioned key=value files, named presets,
validation with per-key error reporting.

Sections and keys (all optional; unknown keys are errors):

    [scenario] presets
    [market]   filter, variant, lam, mu_bar, sigma, sigma_S, rho, c, a_l, a_u,
               h0, T, K, S0
    [agents]   delta, theta, prior_mean, prior_std, prior_width
    [modes]    info, beliefs, competition, solver, estimator
    [train]    epochs, stage1_epochs, stage2_epochs, batch, ensemble, hidden,
               lr_stage1, lr_stage2, decay_every, log_input
    [run]      seed, out_dir, label, initial_wealth, eval_paths

`presets` is a comma list applied in order before explicit keys; shipped
presets: lin_base, nl_base, risk_base, priors_ht.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .filtering import AgentProfile, PriorBelief
from .learn.training import TrainConfig
from .market import HiddenDynamics, HiddenVariant, MarketSpec, ReturnMap

PRESETS: dict[str, dict[str, dict[str, str]]] = {
    # base linear-Gaussian market, horizon T = 0.5
    "lin_base": {
        "market": {
            "filter": "L", "variant": "ou", "lam": "8", "mu_bar": "0.02",
            "sigma": "0.3", "sigma_S": "0.15", "rho": "-0.8", "h0": "0.05",
            "T": "0.5", "K": "50", "S0": "1.0",
        }
    },
    # base bounded nonlinear market
    "nl_base": {
        "market": {
            "filter": "NL", "variant": "bounded", "lam": "1", "mu_bar": "0.02",
            "sigma": "0.4", "sigma_S": "0.15", "rho": "-0.8", "c": "0.25",
            "a_l": "-0.3", "a_u": "0.3", "h0": "0.05", "T": "0.5", "K": "50",
            "S0": "1.0",
        }
    },
    # three agents, risk tolerances 2/3/5, competition weights 0.2/0.5/0.2
    "risk_base": {
        "agents": {"delta": "2, 3, 5", "theta": "0.2, 0.5, 0.2"}
    },
    # heterogeneous prior spreads (std for the linear filter, interval length
    # for the nonlinear one); means stay at the true initial state
    "priors_ht": {
        "agents": {"prior_std": "0.05, 0.1, 0", "prior_width": "0.05, 0.1, 0"}
    },
}

_KNOWN_KEYS = {
    "scenario": {"presets"},
    "market": {"filter", "variant", "lam", "mu_bar", "sigma", "sigma_S", "rho",
               "c", "a_l", "a_u", "h0", "T", "K", "S0"},
    "agents": {"delta", "theta", "prior_mean", "prior_std", "prior_width"},
    "modes": {"info", "beliefs", "competition", "solver", "estimator"},
    "train": {"epochs", "stage1_epochs", "stage2_epochs", "batch", "ensemble",
              "hidden", "lr_stage1", "lr_stage2", "decay_every", "log_input"},
    "run": {"seed", "out_dir", "label", "initial_wealth", "eval_paths"},
}


@dataclass
class ScenarioConfig:
    """Validated, fully defaulted scenario description."""

    market: MarketSpec
    agents: list[AgentProfile]
    info: str            # PI | FI
    beliefs: str         # HM | HT
    competition: str     # C | NC
    filter_kind: str     # L | NL
    solver: str          # analytic | fbsde | both
    estimator: str       # rnn | kalman
    train: TrainConfig
    seed: int
    out_dir: str
    label: str
    initial_wealth: float
    eval_paths: int
    raw_text: str = ""

    def solve_agents(self) -> list[AgentProfile]:
        """Agents as used in the solve: NC zeroes the competition weights."""
        if self.competition == "NC":
            return [AgentProfile(a.delta, 0.0, a.prior) for a in self.agents]
        return self.agents


def _merge(base: dict, extra: dict) -> None:
    for sec, kv in extra.items():
        base.setdefault(sec, {}).update(kv)


def _floats(raw: str) -> list[float]:
    return [float(tok) for tok in raw.replace(";", ",").split(",") if tok.strip()]


def a0_from_h0(h0: float, h_map: ReturnMap) -> float:
    """Initial hidden state implied by the quoted initial return rate."""
    if h_map.kind == "identity":
        return h0
    return float(np.sign(h0) * (abs(h0) / h_map.c) ** 2)


def validate_config(raw_text: str) -> ScenarioConfig:
    """Parse, default, and range-check a config; raises ConfigError with one
    entry per violation."""
    errors: list[tuple[str, str]] = []
    cp = configparser.ConfigParser()
    try:
        cp.read_string(raw_text)
    except configparser.Error as exc:
        raise ConfigError([("<file>", f"parse error: {exc}")])

    data: dict[str, dict[str, str]] = {}
    _merge(data, PRESETS["lin_base"])
    _merge(data, PRESETS["risk_base"])
    preset_names = []
    if cp.has_option("scenario", "presets"):
        preset_names = [p.strip() for p in cp.get("scenario", "presets").split(",") if p.strip()]
    for name in preset_names:
        if name not in PRESETS:
            errors.append(("scenario.presets", f"unknown preset {name!r}"))
        else:
            _merge(data, PRESETS[name])
    user: dict[str, dict[str, str]] = {
        sec: dict(cp.items(sec)) for sec in cp.sections()
    }
    for sec, kv in user.items():
        if sec not in _KNOWN_KEYS:
            errors.append((sec, "unknown section"))
            continue
        for key in kv:
            # configparser lowercases keys; compare case-insensitively
            if key.lower() not in {k.lower() for k in _KNOWN_KEYS[sec]}:
                errors.append((f"{sec}.{key}", "unknown key"))
    if errors:
        raise ConfigError(errors)
    _merge(data, user)

    def get(sec: str, key: str, default: str) -> str:
        block = data.get(sec, {})
        for k, v in block.items():
            if k.lower() == key.lower():
                return v
        return default

    def getf(sec: str, key: str, default: str) -> float:
        raw = get(sec, key, default)
        try:
            return float(raw)
        except ValueError:
            errors.append((f"{sec}.{key}", f"not a number: {raw!r}"))
            return float(default)

    def geti(sec: str, key: str, default: str) -> int:
        raw = get(sec, key, default)
        try:
            return int(raw)
        except ValueError:
            errors.append((f"{sec}.{key}", f"not an integer: {raw!r}"))
            return int(default)

    filter_kind = get("market", "filter", "L").upper()
    if filter_kind not in ("L", "NL"):
        errors.append(("market.filter", "must be L or NL"))
        filter_kind = "L"
    variant_name = get("market", "variant", "ou" if filter_kind == "L" else "bounded").lower()
    variant_map = {"ou": HiddenVariant.LINEAR_OU, "bounded": HiddenVariant.BOUNDED_NL,
                   "cir": HiddenVariant.CIR}
    if variant_name not in variant_map:
        errors.append(("market.variant", "must be ou, bounded, or cir"))
        variant_name = "ou"
    variant = variant_map[variant_name]
    if filter_kind == "L" and variant is not HiddenVariant.LINEAR_OU:
        errors.append(("market.variant", "linear filter requires the ou state"))
    if filter_kind == "NL" and variant is HiddenVariant.LINEAR_OU:
        errors.append(("market.variant", "nonlinear filter requires bounded or cir state"))

    h_map = ReturnMap("identity") if filter_kind == "L" else ReturnMap("signed_sqrt", getf("market", "c", "0.25"))
    h0 = getf("market", "h0", "0.05")

    lam = getf("market", "lam", "8")
    sigma = getf("market", "sigma", "0.3")
    mu_bar = getf("market", "mu_bar", "0.02")
    sigma_S = getf("market", "sigma_S", "0.15")
    rho = getf("market", "rho", "-0.8")
    T = getf("market", "T", "0.5")
    K = geti("market", "K", "50")
    S0 = getf("market", "S0", "1.0")
    a_l = getf("market", "a_l", "-0.3")
    a_u = getf("market", "a_u", "0.3")

    if lam <= 0:
        errors.append(("market.lam", "must be > 0"))
    if sigma_S <= 0:
        errors.append(("market.sigma_S", "must be > 0"))
    if abs(rho) > 1:
        errors.append(("market.rho", "must lie in [-1, 1]"))
    if K < 2:
        errors.append(("market.K", "must be >= 2"))
    if T <= 0:
        errors.append(("market.T", "must be > 0"))
    if variant is HiddenVariant.BOUNDED_NL and not (a_l < mu_bar < a_u):
        errors.append(("market.mu_bar", "bounded state needs a_l < mu_bar < a_u"))

    deltas = _floats(get("agents", "delta", "2, 3, 5"))
    thetas = _floats(get("agents", "theta", "0.2, 0.5, 0.2"))
    if len(deltas) != len(thetas):
        errors.append(("agents.theta", "delta and theta lengths differ"))
    for i, d in enumerate(deltas):
        if d <= 0:
            errors.append((f"agents.delta[{i}]", "risk tolerance must be > 0"))
    for i, th in enumerate(thetas):
        if not 0.0 <= th <= 1.0:
            errors.append((f"agents.theta[{i}]", "competition weight out of [0,1]"))

    info = get("modes", "info", "PI").upper()
    beliefs = get("modes", "beliefs", "HM").upper()
    competition = get("modes", "competition", "C").upper()
    solver = get("modes", "solver", "analytic").lower()
    estimator = get("modes", "estimator", "rnn").lower()
    if info not in ("PI", "FI"):
        errors.append(("modes.info", "must be PI or FI"))
    if beliefs not in ("HM", "HT"):
        errors.append(("modes.beliefs", "must be HM or HT"))
    if competition not in ("C", "NC"):
        errors.append(("modes.competition", "must be C or NC"))
    if solver not in ("analytic", "fbsde", "both"):
        errors.append(("modes.solver", "must be analytic, fbsde, or both"))
    if estimator not in ("rnn", "kalman"):
        errors.append(("modes.estimator", "must be rnn or kalman"))
    if solver in ("analytic", "both") and filter_kind == "NL":
        errors.append(("modes.solver", "analytic requires linear filter"))
    if solver in ("analytic", "both") and info == "FI":
        errors.append(("modes.solver", "analytic requires partial information"))
    if estimator == "kalman" and filter_kind == "NL":
        errors.append(("modes.estimator", "kalman estimator requires linear filter"))

    n = len(deltas)
    a0 = a0_from_h0(h0, h_map)
    means = _floats(get("agents", "prior_mean", "")) or [a0] * n
    stds = _floats(get("agents", "prior_std", "0.05, 0.1, 0"))
    widths = _floats(get("agents", "prior_width", "0.05, 0.1, 0"))
    for name, vals in (("prior_mean", means), ("prior_std", stds), ("prior_width", widths)):
        if len(vals) != n:
            errors.append((f"agents.{name}", f"needs {n} entries"))
    if errors:
        raise ConfigError(errors)

    priors = []
    for i in range(n):
        if beliefs == "HM":
            priors.append(PriorBelief(mean=a0, var=0.0, support_width=0.0))
        elif filter_kind == "L":
            priors.append(PriorBelief(mean=means[i], var=stds[i] ** 2, support_width=0.0))
        else:
            priors.append(PriorBelief(mean=means[i], var=0.0, support_width=widths[i]))

    try:
        dynamics = HiddenDynamics(variant=variant, lam=lam, mu_bar=mu_bar,
                                  sigma_vol=sigma, a_l=a_l, a_u=a_u)
        market = MarketSpec(dynamics=dynamics, h_map=h_map, sigma_S=sigma_S,
                            rho=rho, T=T, K=K, S0=S0, A0=a0)
        agents = [AgentProfile(deltas[i], thetas[i], priors[i]) for i in range(n)]
        train = TrainConfig(
            epochs=geti("train", "epochs", "5000"),
            batch=geti("train", "batch", "64"),
            ensemble=geti("train", "ensemble", "3"),
            hidden=geti("train", "hidden", "64"),
            lr_stage1=getf("train", "lr_stage1", "1e-3"),
            lr_stage2=getf("train", "lr_stage2", "3e-3"),
            decay_every=geti("train", "decay_every", "400"),
            stage1_epochs=None if get("train", "stage1_epochs", "") == "" else geti("train", "stage1_epochs", "0"),
            stage2_epochs=None if get("train", "stage2_epochs", "") == "" else geti("train", "stage2_epochs", "0"),
            log_input=get("train", "log_input", "true").lower() in ("1", "true", "yes"),
        )
    except Exception as exc:  # construction-level invariant failures
        raise ConfigError([("<config>", str(exc))])

    return ScenarioConfig(
        market=market, agents=agents, info=info, beliefs=beliefs,
        competition=competition, filter_kind=filter_kind, solver=solver,
        estimator=estimator, train=train,
        seed=geti("run", "seed", "1234"),
        out_dir=get("run", "out_dir", "out"),
        label=get("run", "label", "scenario"),
        initial_wealth=getf("run", "initial_wealth", "10"),
        eval_paths=geti("run", "eval_paths", "64"),
        raw_text=raw_text,
    )


def resolved_ini(cfg: ScenarioConfig) -> str:
    """Fully populated config echo; re-running it reproduces the scenario."""
    m, d = cfg.market, cfg.market.dynamics
    variant_name = {HiddenVariant.LINEAR_OU: "ou", HiddenVariant.BOUNDED_NL: "bounded",
                    HiddenVariant.CIR: "cir"}[d.variant]
    h0 = float(np.sign(m.A0) * m.h_map.c * np.sqrt(abs(m.A0))) if m.h_map.kind == "signed_sqrt" else m.A0
    cp = configparser.ConfigParser()
    cp["market"] = {
        "filter": cfg.filter_kind, "variant": variant_name, "lam": repr(d.lam),
        "mu_bar": repr(d.mu_bar), "sigma": repr(d.sigma_vol), "sigma_S": repr(m.sigma_S),
        "rho": repr(m.rho), "h0": repr(h0), "T": repr(m.T), "K": str(m.K), "S0": repr(m.S0),
    }
    if cfg.filter_kind == "NL":
        cp["market"]["c"] = repr(m.h_map.c)
        cp["market"]["a_l"] = repr(d.a_l)
        cp["market"]["a_u"] = repr(d.a_u)
    cp["agents"] = {
        "delta": ", ".join(repr(a.delta) for a in cfg.agents),
        "theta": ", ".join(repr(a.theta) for a in cfg.agents),
        "prior_mean": ", ".join(repr(a.prior.mean) for a in cfg.agents),
        "prior_std": ", ".join(repr(a.prior.std) for a in cfg.agents),
        "prior_width": ", ".join(repr(a.prior.support_width) for a in cfg.agents),
    }
    cp["modes"] = {
        "info": cfg.info, "beliefs": cfg.beliefs, "competition": cfg.competition,
        "solver": cfg.solver, "estimator": cfg.estimator,
    }
    t = cfg.train
    cp["train"] = {
        "epochs": str(t.epochs), "batch": str(t.batch), "ensemble": str(t.ensemble),
        "hidden": str(t.hidden), "lr_stage1": repr(t.lr_stage1), "lr_stage2": repr(t.lr_stage2),
        "decay_every": str(t.decay_every), "log_input": str(t.log_input).lower(),
    }
    if t.stage1_epochs is not None:
        cp["train"]["stage1_epochs"] = str(t.stage1_epochs)
    if t.stage2_epochs is not None:
        cp["train"]["stage2_epochs"] = str(t.stage2_epochs)
    cp["run"] = {
        "seed": str(cfg.seed), "out_dir": cfg.out_dir, "label": cfg.label,
        "initial_wealth": repr(cfg.initial_wealth), "eval_paths": str(cfg.eval_paths),
    }
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()
