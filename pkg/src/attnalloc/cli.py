"""Batch command-line interface.

    attnalloc simulate --config cfg.json --out runs/demo [--beta 18] ...
    attnalloc oracle scalar --a 0.5 --w 1 --theta 1 --vhat 0.01 --beta 1
    attnalloc bench admm --hmax 40 [--iters 12]

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .baselines import (
    Diverges,
    ScalarSystem,
    scalar_regime_thresholds,
    scalar_stationary_solution,
)
from .harness import (
    ConfigError,
    ScenarioConfig,
    bench_admm_scaling,
    export,
    monte_carlo,
    paper_scenario_config,
    run_mission,
)
from .subsolver import Infeasible, MaxIterations, SubsolverFailure

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_IO = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="attnalloc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a mission and export trace/summary")
    sim.add_argument("--config", help="JSON scenario config (defaults to the built-in scenario)")
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--beta", type=float, help="override allocation.beta")
    sim.add_argument("--horizon", type=int, help="override allocation.horizon")
    sim.add_argument("--method", help="override allocation.method")
    sim.add_argument("--seed", type=int, help="override rng_seed")
    sim.add_argument("--runs", type=int, default=1, help="Monte-Carlo repetitions")

    oracle = sub.add_parser("oracle", help="closed-form reference solutions")
    oracle_sub = oracle.add_subparsers(dest="oracle_kind", required=True)
    sc = oracle_sub.add_parser("scalar", help="stationary scalar allocation")
    sc.add_argument("--a", type=float, required=True)
    sc.add_argument("--w", type=float, required=True)
    sc.add_argument("--theta", type=float, required=True)
    sc.add_argument("--vhat", type=float, required=True)
    sc.add_argument("--beta", type=float, required=True)

    bench = sub.add_parser("bench", help="scaling experiments")
    bench_sub = bench.add_subparsers(dest="bench_kind", required=True)
    ba = bench_sub.add_parser("admm", help="per-iteration cost vs horizon")
    ba.add_argument("--hmax", type=int, default=40)
    ba.add_argument("--iters", type=int, default=12)
    ba.add_argument("--config", help="JSON scenario config")
    ba.add_argument("--out", help="write the JSON report here instead of stdout")
    return parser


def _load_config(args) -> ScenarioConfig:
    cfg = ScenarioConfig.from_json(args.config) if args.config else paper_scenario_config()
    if getattr(args, "beta", None) is not None:
        cfg.beta = args.beta
    if getattr(args, "horizon", None) is not None:
        cfg.horizon = args.horizon
    if getattr(args, "method", None) is not None:
        cfg.method = args.method
    if getattr(args, "seed", None) is not None:
        cfg.rng_seed = args.seed
    cfg.validate()
    return cfg


def _cmd_simulate(args) -> int:
    cfg = _load_config(args)
    if args.runs > 1:
        stats = monte_carlo(cfg, args.runs)
        from pathlib import Path

        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "monte_carlo.json").write_text(
            json.dumps(stats, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        print(json.dumps(stats, indent=2, sort_keys=True))
        return EXIT_OK
    log = run_mission(cfg)
    export(log, args.out)
    print(json.dumps(log.summary.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_oracle_scalar(args) -> int:
    sys_ = ScalarSystem(a=args.a, W=args.w, theta=args.theta, vhat=args.vhat, beta=args.beta)
    P, V, regime = scalar_stationary_solution(sys_)
    beta1, beta2 = scalar_regime_thresholds(sys_)
    print(
        json.dumps(
            {
                "P_star": P,
                "V_star": None if V == float("inf") else V,
                "regime": regime,
                "beta1": beta1,
                "beta2": beta2,
            },
            indent=2,
            sort_keys=True,
        )
    )
    return EXIT_OK


def _cmd_bench_admm(args) -> int:
    cfg = ScenarioConfig.from_json(args.config) if args.config else paper_scenario_config()
    horizons = [h for h in (5, 10, 20, 40) if h <= args.hmax] or [args.hmax]
    report = bench_admm_scaling(cfg, horizons=tuple(horizons), admm_iters=args.iters)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        from pathlib import Path

        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "oracle":
            return _cmd_oracle_scalar(args)
        if args.command == "bench":
            return _cmd_bench_admm(args)
        return EXIT_CONFIG
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SubsolverFailure, Infeasible, MaxIterations, Diverges) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
