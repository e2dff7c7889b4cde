"""Command-line entry point.

Verbs: run (single scenario), table (named suite), check (invariant suite),
sweep (learning-rate study).  Exit codes: 0 success, 2 config error,
3 numeric failure, 4 partial table failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .config import validate_config
from .errors import ConfigError, WealthGameError
from .runner import run_scenario, run_table

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_PARTIAL = 0, 2, 3, 4


def _load_config(path: str, seed=None, out=None, solver=None):
    text = Path(path).read_text()
    cfg = validate_config(text)
    updates = {}
    if seed is not None:
        updates["seed"] = seed
    if out is not None:
        updates["out_dir"] = out
    if solver is not None:
        updates["solver"] = solver
    if updates:
        from dataclasses import replace

        cfg = replace(cfg, **updates)
        # re-validate mode interactions changed by flags
        if cfg.solver in ("analytic", "both") and cfg.filter_kind == "NL":
            raise ConfigError([("modes.solver", "analytic requires linear filter")])
        if cfg.solver in ("analytic", "both") and cfg.info == "FI":
            raise ConfigError([("modes.solver", "analytic requires partial information")])
    return cfg


def _cmd_run(args) -> int:
    cfg = _load_config(args.config, args.seed, args.out, args.solver)
    out = run_scenario(cfg)
    print(f"scenario {cfg.label}: artifacts in {out}")
    return EXIT_OK


def _cmd_table(args) -> int:
    overrides = Path(args.config).read_text() if args.config else ""
    csv_path, failures = run_table(
        args.name, args.out, seed=args.seed if args.seed is not None else 1234,
        serial=args.serial, overrides=overrides,
    )
    print(f"table {args.name}: {csv_path}")
    if failures:
        for cell, err in failures:
            print(f"  FAILED {cell}: {err}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def _cmd_check(args) -> int:
    """Fast invariant suite; prints one line per check."""
    from .analytic import nash_fixed_point
    from .fbsde import check_small_competition, competition_matrix
    from .filtering import RiccatiParams, riccati_ode_oracle, riccati_sigma
    from .learn.autodiff import gradient
    from .learn.nets import init_mlp, mlp_forward, mlp_from_dict, mlp_param_dict
    from .market import make_rng

    ok = True

    def report(name, passed, detail=""):
        nonlocal ok
        ok &= bool(passed)
        print(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}")

    spec = validate_config("").market
    grid = np.linspace(0, spec.T, 2001)
    for s0 in (0.0, 0.05, 0.1):
        p = RiccatiParams.from_market(spec, s0)
        cf = riccati_sigma(grid, p, spec)
        rk = riccati_ode_oracle(p, spec, grid)
        err = float(np.max(np.abs(cf - rk)))
        report(f"riccati closed form vs RK4 (Sigma0={s0})", err < 1e-6, f"max|diff|={err:.2e}")

    cm = competition_matrix(np.array([0.2, 0.5, 0.2]))
    rep = check_small_competition(cm)
    report("small-competition condition theta=(0.2,0.5,0.2)", rep.passed,
           f"margin={rep.margin:.4f}")
    rep_bad = check_small_competition(competition_matrix(np.array([0.99] * 3)))
    report("small-competition rejects theta=0.99", not rep_bad.passed)

    rng = make_rng(0)
    beta = rng.normal(size=3)
    m = rng.uniform(0, 0.8, size=3)
    sol = nash_fixed_point(beta, m)
    abar = (sol.pi.sum() - sol.pi) / 3
    resid = float(np.max(np.abs(sol.pi - beta - m * abar)))
    report("nash fixed point residual", resid < 1e-9,
           f"resid={resid:.2e} iters={sol.iterations_used}")

    mlp = init_mlp(rng, 4, 2)
    x = rng.normal(size=(5, 4))
    params = mlp_param_dict(mlp)
    grads = gradient(lambda p: mlp_forward(mlp_from_dict(p), x).sum(), params)
    name, g = "W1", grads["W1"]
    eps = 1e-6
    i, j = 1, 2
    shifted = {k: v.copy() for k, v in params.items()}
    shifted[name][i, j] += eps
    up = mlp_forward(mlp_from_dict(shifted), x).sum()
    shifted[name][i, j] -= 2 * eps
    dn = mlp_forward(mlp_from_dict(shifted), x).sum()
    fd = (up - dn) / (2 * eps)
    report("gradient spot-check vs finite difference",
           abs(fd - g[i, j]) < 1e-6 * max(1.0, abs(fd)),
           f"ad={g[i, j]:.6g} fd={fd:.6g}")
    return EXIT_OK if ok else EXIT_NUMERIC


def _cmd_sweep(args) -> int:
    overrides = f"[train]\nstage2_epochs = {args.epochs}\nstage1_epochs = {args.stage1_epochs}\n"
    csv_path, failures = run_table("lr_sweep", args.out,
                                   seed=args.seed if args.seed is not None else 1234,
                                   serial=args.serial, overrides=overrides)
    print(f"sweep: {csv_path}")
    return EXIT_PARTIAL if failures else EXIT_OK


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="wealthgame",
                                 description="partial-information relative-wealth game solver")
    sub = ap.add_subparsers(dest="verb", required=True)

    p_run = sub.add_parser("run", help="run a single scenario")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--out")
    p_run.add_argument("--serial", action="store_true")
    p_run.add_argument("--solver", choices=["analytic", "fbsde", "both"])
    p_run.set_defaults(func=_cmd_run)

    p_tab = sub.add_parser("table", help="run a named scenario grid")
    p_tab.add_argument("name", choices=["pde_vs_fbsde", "lin_stats", "nl_stats",
                                        "hetero_ratio", "lr_sweep"])
    p_tab.add_argument("--config", help="override fragment applied to every cell")
    p_tab.add_argument("--seed", type=int)
    p_tab.add_argument("--out", default="out")
    p_tab.add_argument("--serial", action="store_true")
    p_tab.set_defaults(func=_cmd_table)

    p_chk = sub.add_parser("check", help="run the invariant suite")
    p_chk.set_defaults(func=_cmd_check)

    p_swp = sub.add_parser("sweep", help="constant-learning-rate study")
    p_swp.add_argument("--epochs", type=int, default=2000)
    p_swp.add_argument("--stage1-epochs", type=int, default=800, dest="stage1_epochs")
    p_swp.add_argument("--seed", type=int)
    p_swp.add_argument("--out", default="out")
    p_swp.add_argument("--serial", action="store_true")
    p_swp.set_defaults(func=_cmd_sweep)

    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        for path, reason in exc.entries:
            print(f"config error: {path}: {reason}", file=sys.stderr)
        return EXIT_CONFIG
    except WealthGameError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
