"""Command line entry point: ``hipamdp run|compare-kl|compare-delta|eval``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import harness


def _config(args) -> harness.ExperimentConfig:
    overrides = {}
    for item in args.set or []:
        key, _, raw = item.partition("=")
        if not _:
            raise harness.ConfigError(f"--set expects key=value, got {item!r}")
        try:
            overrides[key] = json.loads(raw)
        except json.JSONDecodeError:
            overrides[key] = raw
    if args.seed is not None:
        overrides["seeds"] = [args.seed]
    if args.out is not None:
        overrides["out_dir"] = args.out
    return harness.load_config(args.config, overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hipamdp", description="Parameterized-action RL experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file (nested or dotted keys)")
        p.add_argument("--seed", type=int, help="run this single seed instead of the configured list")
        p.add_argument("--out", help="output directory")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one config entry, e.g. trpo.delta=0.01")

    common(sub.add_parser("run", help="train every configured seed and aggregate"))
    kl = sub.add_parser("compare-kl", help="PATRPO with each KL estimator")
    common(kl)
    kl.add_argument("--variance-reps", type=int, default=100)
    kl.add_argument("--variance-steps", type=int, default=1000)
    delta = sub.add_parser("compare-delta", help="PATRPO with several trust-region sizes")
    common(delta)
    delta.add_argument("--deltas", type=float, nargs="+", default=[0.005, 0.01, 0.05])
    ev = sub.add_parser("eval", help="greedy rollout of a stored checkpoint")
    ev.add_argument("run_dir")
    ev.add_argument("--seed", type=int, default=0, help="which seed's checkpoint to load")
    ev.add_argument("--episodes", type=int, default=10)
    ev.add_argument("--env-seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        if args.command == "eval":
            ret = harness.greedy_eval(args.run_dir, args.seed, args.episodes, args.env_seed)
            print(f"mean return over {args.episodes} episodes: {ret:.4f}")
            return 0
        cfg = _config(args)
        if args.command == "run":
            res = harness.run_experiment(cfg)
            agg = res.summary["aggregate"]
            print(f"{res.run_dir}: final {agg['final_return']:.4f}, best {agg['best_return']:.4f} "
                  f"at epoch {agg['best_epoch']}")
        elif args.command == "compare-kl":
            results = harness.compare_kl_estimators(cfg, args.variance_reps, args.variance_steps)
            for name, res in results.items():
                print(f"{name}: {res.run_dir} final {res.summary['aggregate']['final_return']:.4f}")
        else:
            results = harness.compare_step_sizes(cfg, args.deltas)
            for name, res in results.items():
                print(f"delta={name}: {res.run_dir} final {res.summary['aggregate']['final_return']:.4f}")
    except (harness.ConfigError, FileExistsError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
