"""Command-line entry point: ``uav-aoi {train,eval,oracle,experiment,render}``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, EnvConfig, desk_config
from .errors import UsageError
from .experiments import (
    DESK_NORMALIZE,
    DESK_REWARD_SCALE,
    DESK_SEEDS,
    ExperimentConfig,
    _write_eval,
    desk_observation,
    desk_ppo,
    render_trajectories,
    run_experiment,
)
from .marl import TRAIN_MODES, canonical_mode, evaluate, load_bundles, save_bundles, train, write_metrics_csv
from .oracle import TARGETS, solve_exact
from .problem import TrajectoryRecord

MODE_CHOICES = [m.replace("_", "-") for m in TRAIN_MODES] + list(TRAIN_MODES)


def _scenario(args) -> EnvConfig:
    if args.desk_scale:
        return desk_config()
    if args.scenario is None:
        raise UsageError("--scenario or --desk-scale is required")
    return EnvConfig.from_json(args.scenario)


def cmd_train(args) -> int:
    cfg = _scenario(args)
    out = Path(args.out)
    mode = canonical_mode(args.mode)
    res = train(
        mode,
        cfg,
        desk_ppo(),
        args.episodes,
        args.seed,
        desk_observation(),
        reward_scale=DESK_REWARD_SCALE,
        metrics_dir=out / "metrics",
        normalize_rewards=DESK_NORMALIZE,
    )
    write_metrics_csv(out / "episodes.csv", res.metrics)
    save_bundles(out / "checkpoints", res)
    cfg.to_json(out / "scenario.json")
    if res.metrics:
        last = res.metrics[-1]
        print(f"trained {mode} for {args.episodes} episodes; last objective1={last.objective1:.4g} objective2={last.objective2:.4g}")
    else:
        print(f"initialized {mode} agents (0 episodes)")
    return 0


def cmd_eval(args) -> int:
    cfg = _scenario(args)
    out = Path(args.out)
    bundles, mode, spec = load_bundles(out / "checkpoints", cfg)
    evals = evaluate(bundles, cfg, max(args.episodes, 1), args.seed, spec, mode)
    (out / "eval").mkdir(parents=True, exist_ok=True)
    _write_eval(out / "eval", evals, cfg)
    for e in evals:
        m = e.metrics
        print(
            f"episode {m.episode}: objective1={m.objective1:.6g} objective2={m.objective2:.6g} "
            f"communications={m.communications} distinct_devices={m.distinct_devices}"
        )
    return 0


def cmd_oracle(args) -> int:
    cfg = _scenario(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    doc = {}
    for target in TARGETS:
        sol = solve_exact(cfg, target)
        sol.save(out / f"oracle_{target}.json")
        doc[target] = {"value": sol.value, "nodes_explored": sol.nodes_explored}
        print(f"{target}: value={sol.value:.10g} objective1={sol.objective1:.10g} objective2={sol.objective2:.10g} nodes={sol.nodes_explored}")
    (out / "oracle.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return 0


def cmd_experiment(args) -> int:
    modes = (canonical_mode(args.mode),) if args.mode else TRAIN_MODES
    seeds = (args.seed,) if args.seed is not None else DESK_SEEDS
    exp = ExperimentConfig(
        scenario=args.scenario,
        modes=modes,
        episodes=args.episodes,
        seeds=seeds,
        out_dir=args.out,
        desk_scale=args.desk_scale,
    )

    def progress(run):
        last = run.train.metrics[-1]
        print(f"{run.mode} seed {run.seed}: final objective1={last.objective1:.4g}", flush=True)

    result = run_experiment(exp, progress)
    for r in result.comparison.rows:
        print(
            f"{r.mode}: objective1={r.objective1:.4g}±{r.objective1_std:.2g} objective2={r.objective2:.4g} "
            f"communications={r.communications:.4g} distinct={r.distinct_devices:.3g} scalars={r.scalars_exchanged:.0f}"
        )
    if result.comparison.ordering_holds is not None:
        print(f"ordering centr_obj1 <= centr_obj2 <= dec: {result.comparison.ordering_holds}")
    return 0


def cmd_render(args) -> int:
    out = Path(args.out)
    cfg = _scenario(args) if (args.scenario or args.desk_scale) else EnvConfig.from_json(out / "scenario.json")
    files = [Path(args.trajectory)] if args.trajectory else sorted(out.rglob("traj/*.json"))
    if not files:
        raise UsageError(f"no trajectories found under {out}")
    for f in files:
        svg = render_trajectories(TrajectoryRecord.load(f), cfg, f.with_suffix(".svg"))
        print(svg)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="uav-aoi", description="Weighted-AoI multi-UAV simulator and MAPPO trainer")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, episodes_default):
        sp.add_argument("--scenario", help="scenario JSON file")
        sp.add_argument("--desk-scale", action="store_true", help="use the built-in desk-scale scenario")
        sp.add_argument("--episodes", type=int, default=episodes_default)
        sp.add_argument("--out", default="out", help="output directory")

    sp = sub.add_parser("train", help="train one scheme")
    common(sp, 2000)
    sp.add_argument("--mode", choices=MODE_CHOICES, default="dec")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="greedy evaluation of checkpoints in --out")
    common(sp, 1)
    sp.add_argument("--mode", choices=MODE_CHOICES, help="ignored; the checkpoint records its mode")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("oracle", help="exact optima of a tiny scenario")
    common(sp, 0)
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("experiment", help="all schemes and seeds, figure data and summary")
    common(sp, 2000)
    sp.add_argument("--mode", choices=MODE_CHOICES, help="run a single scheme")
    sp.add_argument("--seed", type=int, help="run a single seed")
    sp.set_defaults(func=cmd_experiment)

    sp = sub.add_parser("render", help="SVG of trajectory files")
    common(sp, 0)
    sp.add_argument("--trajectory", help="one trajectory JSON (default: every traj/*.json under --out)")
    sp.set_defaults(func=cmd_render)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError, OSError, ValueError, KeyError, json.JSONDecodeError) as err:
        print(f"uav-aoi {args.command}: error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
