"""viewplan command line: ``select``, ``simulate``, ``report``, ``pool``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

from . import runner
from .config import ConfigError, RunConfig, config_from_dict, load_config, validate


def _budgets(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"budgets must be comma-separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML or JSON run config")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory (default $VIEWPLAN_OUT or ./runs)")
    common.add_argument("--threads", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="viewplan", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("select", parents=[common], help="pool -> visibility -> selection sweep")
    s.add_argument("--budgets", type=_budgets, help="e.g. 0,25,50,100,200,500,1000,2000")
    s.add_argument("--policy", action="append", help="repeatable; overrides selection.policies")
    s.add_argument("--sigma", type=float)
    s.add_argument("--unique-cap", type=int)

    m = sub.add_parser("simulate", parents=[common], help="control-proxy benchmark")
    m.add_argument("--episodes", type=int, help="number of episodes")
    m.add_argument("--estimator", choices=["oracle", "additive_noise", "multiplicative_bias", "scripted"])
    m.add_argument("--no-episode-csv", action="store_true")

    r = sub.add_parser("report", parents=[common], help="diagnostic tables from RunRecord CSV")
    r.add_argument("--records", help="RunRecord CSV (method,N,scene_id,metric,coverage_fraction)")
    r.add_argument("--novelty", help="per-frame CSV (method,N,scene_id,novelty,error)")
    r.add_argument("--target", help="method compared against the others with paired Wilcoxon tests")

    sub.add_parser("pool", parents=[common], help="build and write the candidate pool")
    return p


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else config_from_dict({})
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = args.out
    if args.threads is not None:
        cfg.threads = args.threads
    if args.command == "select":
        sel = cfg.selection
        if args.budgets is not None:
            sel = replace(sel, budgets=args.budgets)
        if args.policy:
            sel = replace(sel, policies=tuple(args.policy))
        if args.sigma is not None:
            sel = replace(sel, sigma=args.sigma)
        if args.unique_cap is not None:
            sel = replace(sel, unique_cap=args.unique_cap)
        cfg.selection = sel
    elif args.command == "simulate":
        if args.episodes is not None:
            try:
                cfg.episodes = replace(cfg.episodes, n_episodes=args.episodes)
            except ValueError as e:
                raise ConfigError("episodes.n_episodes", str(e)) from None
        if args.estimator is not None:
            cfg.estimator = replace(cfg.estimator, kind=args.estimator)
    elif args.command == "report":
        rep = cfg.report
        if args.records is not None:
            rep = replace(rep, records=args.records)
        if args.novelty is not None:
            rep = replace(rep, novelty=args.novelty)
        if args.target is not None:
            rep = replace(rep, target=args.target)
        cfg.report = rep
    validate(cfg)
    if args.command == "report" and cfg.report.records is None:
        raise ConfigError("report.records", "no RunRecord CSV given")
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
    except ConfigError as e:
        print(f"viewplan: invalid config: {e}", file=sys.stderr)
        return 2

    if args.command == "pool":
        info = runner.cmd_pool(cfg)
        print(json.dumps(info))
        return 0

    if args.command == "select":
        res = runner.cmd_select(cfg)
        print(f"{'policy':<22}{'N':>6}{'unique':>8}{'stream':>8}{'coverage':>10}")
        for r in res["rows"]:
            print(f"{r['policy']:<22}{r['N']:>6}{r['n_unique']:>8}{r['stream_len']:>8}{r['coverage_fraction']:>10.3f}")
        t = res["timing"]
        print(
            f"Voxel extract time {t['voxel_extract_s']:.3f} s | Greedy select time {t['greedy_select_s_mean']:.3f} s"
            f" | Total select time {t['total_select_s']:.3f} s | Per-candidate score {t['per_candidate_score_ms']:.2f} ms"
        )
        if res["failures"]:
            for key, msg in res["failures"].items():
                print(f"FAILED {key}: {msg}", file=sys.stderr)
            return 1
        return 0

    if args.command == "simulate":
        rep = runner.cmd_simulate(cfg, per_episode_csv=not args.no_episode_csv)
        for name, m in rep["metrics"].items():
            ci = "undefined" if m["ci95"] is None else f"+/- {m['ci95']:.3f}"
            print(f"{name:<14}{m['mean']:.4f} {ci}")
        return 0

    try:
        tables = runner.cmd_report(cfg)
    except ValueError as e:
        print(f"viewplan: {e}", file=sys.stderr)
        return 2
    for name, rows in tables.items():
        print(f"[{name}] {len(rows)} rows")
    return 0


if __name__ == "__main__":
    sys.exit(main())
