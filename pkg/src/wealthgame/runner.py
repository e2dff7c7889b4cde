"""Configuration-driven experiment runner.

run_scenario wires the modules together for one scenario cell
(market x info x beliefs x competition x solver), manages seed streams, and
writes all artifacts: path/strategy/stats CSVs, training logs, serialized
models, and a manifest sufficient to re-run the scenario exactly.
run_table executes the named scenario grids and assembles combined CSVs.
"""

from __future__ import annotations

import concurrent.futures
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from ._accel import active_backend
from .analytic import (
    CoefKernels,
    equilibrium_at,
    kernels_for,
    merton_benchmark,
    solve_strategy_paths,
    value_function,
)
from .config import ScenarioConfig, resolved_ini, validate_config
from .errors import WealthGameError
from .fbsde import EffectiveRisk, check_small_competition, competition_matrix
from .filtering import kalman_estimate, sample_prior
from .learn.serialize import save_mlp, save_rnn
from .learn.training import (
    Stage1Result,
    Stage2Result,
    ensemble_estimate,
    train_stage1,
    train_stage2,
)
from .learn.kernels import stage2_rollout
from .market import make_rng, novikov_diagnostic, simulate_bundle, write_paths_csv
from .stats import hedging_demand, performance_stats, strategy_stats


@dataclass
class MethodResult:
    """Solved paths and summary quantities for one solver route."""

    pi: np.ndarray                 # (B, K+1, N)
    wealth: np.ndarray             # (B, K+1, N)
    merton: np.ndarray             # (B, K+1, N)
    hhat: np.ndarray               # (B, K+1, N) estimates the method consumed
    pi0: np.ndarray                # (N,) mean initial positions
    value0: np.ndarray | None = None   # (N,) time-0 values
    Y0: np.ndarray | None = None
    losses: np.ndarray | None = None
    nash_iterations: int = 0


@dataclass
class ScenarioSolution:
    config: ScenarioConfig
    bundle: object
    methods: dict = field(default_factory=dict)      # name -> MethodResult
    stage1: Stage1Result | None = None
    stage2: Stage2Result | None = None
    riccati: dict = field(default_factory=dict)      # agent index -> curve on grid
    value_curve: dict = field(default_factory=dict)  # agent index -> (g(t), f(t))
    wall_clock_s: float = 0.0


def _rng_children(seed, n=6):
    return [make_rng(ss) for ss in np.random.SeedSequence(seed).spawn(n)]


def _seed_children(seed, n=6):
    return [int(ss.generate_state(1, np.uint64)[0]) for ss in np.random.SeedSequence(seed).spawn(n)]


def _eval_estimates(cfg: ScenarioConfig, agents, bundle, a0_draws, stage1):
    """Per-agent drift estimates and innovations on the evaluation bundle."""
    from .market import h_of

    spec = cfg.market
    n = len(agents)
    cols = []
    for i, agent in enumerate(agents):
        if cfg.info == "FI":
            est = h_of(spec.h_map, bundle.A)
        elif cfg.estimator == "kalman":
            est, _ = kalman_estimate(spec, bundle.returns, agent.prior, mean0=a0_draws[i])
        else:
            est = ensemble_estimate(stage1.ensembles[i], bundle.S, a0_draws[i], stage1.log_input)
        cols.append(np.asarray(est))
    hhat = np.ascontiguousarray(np.stack(cols, axis=2))
    dzeta = (bundle.returns[:, :, None] - hhat[:, : spec.K, :] * spec.dt) / spec.sigma_S
    return hhat, np.ascontiguousarray(dzeta)


def _analytic_method(cfg: ScenarioConfig, agents, bundle, a0_draws) -> tuple[MethodResult, dict, dict]:
    spec = cfg.market
    n = len(agents)
    kernels = [kernels_for(spec, agent.prior.var) for agent in agents]
    cols = [
        kalman_estimate(spec, bundle.returns, agents[i].prior, mean0=a0_draws[i])[0]
        for i in range(n)
    ]
    eta = np.stack(cols, axis=2)
    pi, merton, iters = solve_strategy_paths(spec, agents, eta, kernels)
    wealth = np.empty_like(pi)
    wealth[:, 0, :] = cfg.initial_wealth
    for k in range(spec.K):
        wealth[:, k + 1, :] = wealth[:, k, :] + pi[:, k, :] * bundle.returns[:, k, None]

    # time-0 values and per-agent value curves at the initial estimate
    h0 = float(eta[:, 0, :].mean())
    grid = spec.time_grid()
    x0 = cfg.initial_wealth
    y0 = (n - 1) * x0 / n
    value0 = np.empty(n)
    sol0 = equilibrium_at(0.0, h0, agents, kernels)
    abar0 = (sol0.pi.sum() - sol0.pi) / n
    for i in range(n):
        value0[i] = value_function(0.0, x0, y0, h0, agents[i], kernels[i], n, abar0[i])
    curves = {}
    for i in range(n):
        g = np.empty(len(grid))
        for kk, tk in enumerate(grid):
            solk = equilibrium_at(tk, h0, agents, kernels)
            abark = (solk.pi.sum() - solk.pi) / n
            w2a = (agents[i].theta / agents[i].delta) * abark[i]
            g[kk] = kernels[i].g_at(kernels[i].index_of(tk), h0, w2a)
        curves[i] = (g, np.exp(g))
    riccati = {i: kernels[i].phi[:: _refine_of(kernels[i], spec)] - spec.sigma_S * spec.dynamics.sigma_vol * spec.rho
               for i in range(n)}
    result = MethodResult(
        pi=pi, wealth=wealth, merton=merton, hhat=eta,
        pi0=pi[:, 0, :].mean(axis=0), value0=value0, nash_iterations=iters,
    )
    return result, riccati, curves


def _refine_of(kernels: CoefKernels, spec) -> int:
    return (len(kernels.t) - 1) // spec.K


def _fbsde_method(cfg: ScenarioConfig, agents, bundle, hhat, dzeta,
                  stage2: Stage2Result) -> MethodResult:
    spec = cfg.market
    n = len(agents)
    dtil = EffectiveRisk.from_profiles(agents).dtilde
    x0 = np.full(n, cfg.initial_wealth)
    mlp = stage2.mlp
    Z, X, Y = stage2_rollout(
        hhat, bundle.S, spec.time_grid(), dzeta, dtil, x0, stage2.Y0,
        mlp.weights[0], mlp.biases[0], mlp.weights[1], mlp.biases[1],
        mlp.weights[2], mlp.biases[2], spec.sigma_S, spec.dt,
    )
    b = hhat / spec.sigma_S
    pi = (Z + dtil[None, None, :] * b) / spec.sigma_S
    merton = np.empty_like(pi)
    for k in range(spec.K + 1):
        merton[:, k, :] = merton_benchmark(0.0, hhat[:, k, :], agents, spec.sigma_S)
    value0 = -np.exp(-(1.0 / dtil) * (cfg.initial_wealth - stage2.Y0))
    return MethodResult(
        pi=pi, wealth=X, merton=merton, hhat=hhat,
        pi0=pi[:, 0, :].mean(axis=0), value0=value0, Y0=stage2.Y0.copy(),
        losses=stage2.losses,
    )


def solve_scenario(cfg: ScenarioConfig) -> ScenarioSolution:
    """Run one scenario in memory; artifact writing happens in run_scenario."""
    t_start = time.time()
    spec = cfg.market
    agents = cfg.solve_agents()
    n = len(agents)
    seeds = _seed_children(cfg.seed, 6)
    rng_eval, rng_prior = _rng_children(cfg.seed, 6)[:2]

    bundle = simulate_bundle(spec, cfg.eval_paths, rng_eval)
    a0_draws = [
        np.asarray(sample_prior(a.prior, spec.dynamics, rng_prior, size=cfg.eval_paths))
        for a in agents
    ]

    sol = ScenarioSolution(config=cfg, bundle=bundle)

    stage1 = None
    if cfg.solver in ("fbsde", "both") and cfg.info == "PI" and cfg.estimator == "rnn":
        stage1 = train_stage1(spec, agents, cfg.train, seeds[2])
        sol.stage1 = stage1

    if cfg.solver in ("analytic", "both"):
        result, riccati, curves = _analytic_method(cfg, agents, bundle, a0_draws)
        sol.methods["analytic"] = result
        sol.riccati = riccati
        sol.value_curve = curves

    if cfg.solver in ("fbsde", "both"):
        drift = "fi" if cfg.info == "FI" else cfg.estimator
        stage2 = train_stage2(
            spec, agents, cfg.train, seeds[3], drift=drift, stage1=stage1,
            initial_wealth=cfg.initial_wealth,
        )
        sol.stage2 = stage2
        hhat, dzeta = _eval_estimates(cfg, agents, bundle, a0_draws, stage1)
        bundle.estimates.update({f"agent_{i+1}": hhat[:, :, i] for i in range(n)})
        sol.methods["fbsde"] = _fbsde_method(cfg, agents, bundle, hhat, dzeta, stage2)
    elif cfg.info == "PI":
        est = sol.methods["analytic"].hhat
        bundle.estimates.update({f"agent_{i+1}": est[:, :, i] for i in range(n)})

    sol.wall_clock_s = time.time() - t_start
    return sol


def _stats_rows(label: str, method: str, result: MethodResult):
    st = strategy_stats(result.pi)
    try:
        perf = performance_stats(result.wealth)
        sharpe, vrr = perf.sharpe, perf.vrr
        social = (perf.social_sharpe, perf.social_vrr)
    except Exception:
        sharpe = vrr = np.full(len(st.mean_abs), np.nan)
        social = (np.nan, np.nan)
    rows = []
    for i in range(len(st.mean_abs)):
        rows.append([label, method, f"agent_{i+1}", st.mean_abs[i], st.std_abs[i],
                     st.cv[i], sharpe[i], vrr[i]])
    rows.append([label, method, "social", "", "", "", social[0], social[1]])
    rows.append([label, method, "mean_cv", st.mean_cv, "", "", "", ""])
    return rows


def run_scenario(cfg: ScenarioConfig, out_dir=None) -> Path:
    """Execute a scenario and write its artifact directory."""
    out = Path(out_dir if out_dir is not None else cfg.out_dir) / cfg.label
    out.mkdir(parents=True, exist_ok=True)
    sol = solve_scenario(cfg)
    spec = cfg.market
    n = len(cfg.agents)
    grid = spec.time_grid()

    write_paths_csv(sol.bundle, out / "paths.csv")

    if sol.riccati:
        cols = [grid] + [sol.riccati[i] for i in range(n)]
        header = "t," + ",".join(f"sigma_hat_agent_{i+1}" for i in range(n))
        np.savetxt(out / "riccati.csv", np.column_stack(cols), delimiter=",",
                   header=header, comments="")

    for method, res in sol.methods.items():
        rows = []
        hedge = res.pi - res.merton
        B = res.pi.shape[0]
        for j in range(B):
            for k in range(len(grid)):
                rows.append(
                    [j, k, grid[k]]
                    + list(res.pi[j, k, :]) + list(res.merton[j, k, :])
                    + list(hedge[j, k, :]) + list(res.wealth[j, k, :])
                )
        header = (
            "path_id,k,t,"
            + ",".join(f"pi_{i+1}" for i in range(n)) + ","
            + ",".join(f"merton_{i+1}" for i in range(n)) + ","
            + ",".join(f"hedging_{i+1}" for i in range(n)) + ","
            + ",".join(f"X_{i+1}" for i in range(n))
        )
        np.savetxt(out / f"strategies_{method}.csv", np.asarray(rows), delimiter=",",
                   header=header, comments="")

    if sol.value_curve:
        cols = [grid]
        header = ["t"]
        for i in range(n):
            g, f = sol.value_curve[i]
            cols.extend([g, f])
            header.extend([f"g_{i+1}", f"f_{i+1}"])
        np.savetxt(out / "value_curve.csv", np.column_stack(cols), delimiter=",",
                   header=",".join(header), comments="")

    stats_rows = []
    for method, res in sol.methods.items():
        stats_rows.extend(_stats_rows(cfg.label, method, res))
    with open(out / "stats.csv", "w") as fh:
        fh.write("scenario,method,agent,mean_abs_pi,std_abs_pi,cv,sharpe,vrr\n")
        for row in stats_rows:
            fh.write(",".join(str(v) for v in row) + "\n")

    if sol.stage1 is not None:
        for (ai, e), rows in sol.stage1.logs.items():
            p = out / f"train_stage1_agent{ai+1}_member{e+1}.csv"
            with open(p, "w") as fh:
                fh.write("epoch,loss,lr\n")
                for r in rows:
                    fh.write(",".join(str(v) for v in r) + "\n")
        seen = set()
        for ai, members in enumerate(sol.stage1.ensembles):
            if id(members) in seen:
                continue
            seen.add(id(members))
            for e, p in enumerate(members):
                save_rnn(out / f"stage1_agent{ai+1}_member{e+1}.bin", p)
    if sol.stage2 is not None:
        with open(out / "train_stage2.csv", "w") as fh:
            fh.write("epoch,loss,lr," + ",".join(f"Y0_{i+1}" for i in range(n)) + "\n")
            for r in sol.stage2.logs:
                fh.write(",".join(str(v) for v in r) + "\n")
        save_mlp(out / "stage2_mlp.bin", sol.stage2.mlp)
        np.savetxt(out / "stage2_Y0.csv", sol.stage2.Y0[None, :], delimiter=",",
                   header=",".join(f"Y0_{i+1}" for i in range(n)), comments="")

    cm = competition_matrix(np.array([a.theta for a in cfg.solve_agents()]))
    cond = check_small_competition(cm)
    nov = novikov_diagnostic(spec)
    manifest = {
        "label": cfg.label,
        "seed": cfg.seed,
        "versions": {
            "wealthgame": __version__,
            "numpy": np.__version__,
            "backend": active_backend(),
        },
        "wall_clock_s": sol.wall_clock_s,
        "floor_hits": sol.bundle.floor_hits,
        "competition_matrix": cm.A.tolist(),
        "competition_norm": cm.L_a,
        "small_competition": {"passed": cond.passed, "margin": cond.margin},
        "novikov": {"bounded": nov.bounded,
                    "b_max": None if not nov.bounded else nov.b_max},
        "methods": {},
        "config": resolved_ini(cfg),
    }
    for method, res in sol.methods.items():
        entry = {
            "pi0": res.pi0.tolist(),
            "nash_iterations": res.nash_iterations,
        }
        if res.value0 is not None:
            entry["value0"] = res.value0.tolist()
        if res.Y0 is not None:
            entry["Y0"] = res.Y0.tolist()
        if res.losses is not None:
            entry["final_loss"] = float(res.losses[-1])
        manifest["methods"][method] = entry
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    (out / "config_resolved.ini").write_text(resolved_ini(cfg))
    return out


# ---------------------------------------------------------------------------
# tables

PANELS = [(0.02, 0.0), (0.05, 0.02), (0.10, 0.02)]


def _merge_ini(*texts: str) -> str:
    """Merge config fragments left to right into one INI text."""
    import configparser

    merged: dict[str, dict[str, str]] = {}
    for text in texts:
        if not text:
            continue
        cp = configparser.ConfigParser()
        cp.read_string(text)
        for sec in cp.sections():
            merged.setdefault(sec, {}).update(dict(cp.items(sec)))
    lines = []
    for sec, kv in merged.items():
        lines.append(f"[{sec}]")
        lines.extend(f"{k} = {v}" for k, v in kv.items())
        lines.append("")
    return "\n".join(lines)


def _panel_config(h0, mu_bar, presets: str, modes: dict, label: str, overrides: str = "") -> str:
    base = "\n".join(
        [
            f"[scenario]\npresets = {presets}",
            f"[market]\nh0 = {h0}\nmu_bar = {mu_bar}",
            "[modes]\n" + "\n".join(f"{k} = {v}" for k, v in modes.items()),
            f"[run]\nlabel = {label}",
        ]
    )
    return _merge_ini(base, overrides)


def table_cells(name: str, overrides: str = "") -> list[str]:
    """Config texts for the named suite, one per cell."""
    cells = []
    if name == "pde_vs_fbsde":
        for h0, mub in PANELS:
            cells.append(_panel_config(
                h0, mub, "lin_base, risk_base",
                {"info": "PI", "beliefs": "HM", "competition": "C", "solver": "both"},
                f"pde_fbsde_h{h0}_m{mub}", overrides))
    elif name in ("lin_stats", "nl_stats"):
        preset = "lin_base" if name == "lin_stats" else "nl_base"
        for h0, mub in PANELS:
            for case, modes in (
                ("nc_fi", {"info": "FI", "competition": "NC", "solver": "fbsde"}),
                ("nc_pi", {"info": "PI", "competition": "NC", "solver": "fbsde"}),
                ("c_pi", {"info": "PI", "competition": "C", "solver": "fbsde"}),
            ):
                cells.append(_panel_config(
                    h0, mub, f"{preset}, risk_base", dict(modes, beliefs="HM"),
                    f"{name}_{case}_h{h0}_m{mub}", overrides))
    elif name == "hetero_ratio":
        for preset, tag in (("lin_base", "l"), ("nl_base", "nl")):
            for beliefs in ("HT", "HM"):
                for comp in ("NC", "C"):
                    presets = f"{preset}, risk_base"
                    if beliefs == "HT":
                        presets += ", priors_ht"
                    cells.append(_panel_config(
                        0.05, 0.02, presets,
                        {"info": "PI", "beliefs": beliefs, "competition": comp,
                         "solver": "fbsde"},
                        f"hetero_{tag}_{beliefs.lower()}_{comp.lower()}", overrides))
    elif name == "lr_sweep":
        for lr in ("1e-2", "3e-3", "1e-3", "3e-4"):
            cells.append(_panel_config(
                0.02, 0.0, "lin_base, risk_base",
                {"info": "PI", "beliefs": "HM", "competition": "C", "solver": "fbsde"},
                f"lr_{lr}",
                _merge_ini(overrides, f"[train]\nlr_stage2 = {lr}\n")))
    else:
        raise WealthGameError(f"unknown table {name!r}")
    return cells


def _run_cell(args):
    text, out_dir, seed = args
    cfg = validate_config(text)
    cfg = ScenarioConfig(**{**cfg.__dict__, "seed": seed})
    out = run_scenario(cfg, out_dir)
    manifest = json.loads((out / "manifest.json").read_text())
    return cfg.label, manifest


def run_table(name: str, out_dir, seed: int = 1234, serial: bool = False,
              overrides: str = ""):
    """Run a named suite; returns (csv path, failures list)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells = table_cells(name, overrides)
    jobs = [(text, str(out), seed + i) for i, text in enumerate(cells)]
    results = {}
    failures = []
    if serial or len(jobs) == 1:
        for job in jobs:
            try:
                label, manifest = _run_cell(job)
                results[label] = manifest
            except Exception as exc:
                failures.append((job[0].splitlines()[0], repr(exc)))
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=min(4, len(jobs))) as ex:
            futs = {ex.submit(_run_cell, job): job for job in jobs}
            for fut in concurrent.futures.as_completed(futs):
                try:
                    label, manifest = fut.result()
                    results[label] = manifest
                except Exception as exc:
                    failures.append((futs[fut][0].splitlines()[0], repr(exc)))

    csv_path = out / f"table_{name}.csv"
    with open(csv_path, "w") as fh:
        fh.write("cell,method,pi0_1,pi0_2,pi0_3,value0_1,value0_2,value0_3\n")
        for label in sorted(results):
            for method, entry in results[label]["methods"].items():
                pi0 = entry.get("pi0", [np.nan] * 3)
                v0 = entry.get("value0", [np.nan] * 3)
                fh.write(f"{label},{method}," + ",".join(f"{v:.6g}" for v in pi0)
                         + "," + ",".join(f"{v:.6g}" for v in v0) + "\n")
    if failures:
        report = out / f"table_{name}_failures.txt"
        report.write_text("\n".join(f"{c}: {e}" for c, e in failures))
    return csv_path, failures
