"""Command-line interface.

Subcommands: train, run, eval, retrieve-build, retrieve-query, render, synth.
Scenarios are given either as a tracks CSV path or as ``builtin:<family>:<seed>``
(families: slow_leader, dense).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, load_config, save_config
from .dataset_io import ScenarioSpec, load_tracks, synth_scenario, write_tracks
from .dqn_agent import DqnAgent, train
from .environment import EpisodeSpec, HighwayEnv
from .experiments import (
    EpisodeLog,
    RunMode,
    aggregate_metrics,
    compare_trajectories,
    evaluate,
    run_episode,
)
from .retrieval import build_index, load_index, query_knn, records_from_table, save_index
from .render import render_svg
from . import figures, scenarios

log = logging.getLogger("highwaysim")


def _parse_scenario(arg: str) -> ScenarioSpec:
    if arg.startswith("builtin:"):
        _, family, seed = arg.split(":")
        try:
            gen = scenarios.GENERATORS[family]
        except KeyError:
            raise SystemExit(f"unknown scenario family {family!r}; choices: "
                             f"{sorted(scenarios.GENERATORS)}")
        return gen(int(seed))
    raise SystemExit(
        f"scenario {arg!r} not understood; use builtin:<family>:<seed> "
        "(CSV replay scenarios are run via the library API)"
    )


def _cmd_train(args):
    cfg = load_config(args.config)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def env_factory(episode_idx: int):
        spec = scenarios.slow_leader_spec(episode_idx)
        env = HighwayEnv(synth_scenario(spec), cfg.sim, cfg.idm, cfg.lateral_gains)
        env.reset(scenarios.default_episode_spec())
        return env

    result = train(env_factory, cfg.agent, episodes=args.episodes)
    ckpt = out_dir / "policy.ckpt"
    result.agent.save(ckpt)
    curve_path = out_dir / "training_curve.jsonl"
    result.save_curve(curve_path)
    figures.save_training_curve(result.curve(), out_dir / "training_curve.png")
    last = result.returns[-min(50, len(result.returns)) :]
    print(f"trained {args.episodes} episodes; mean return (last {len(last)}): "
          f"{float(np.mean(last)):.2f}")
    print(f"checkpoint: {ckpt}")
    print(f"curve: {curve_path}")


def _cmd_run(args):
    cfg = load_config(args.config)
    scenario_arg = args.scenario
    if args.seed is not None and scenario_arg.startswith("builtin:"):
        prefix, family, _ = scenario_arg.split(":")
        scenario_arg = f"{prefix}:{family}:{args.seed}"
    scenario = _parse_scenario(scenario_arg)
    if not args.checkpoint:
        raise SystemExit("--checkpoint is required (all run modes use the RL policy)")
    agent = DqnAgent.load(args.checkpoint)
    mode = RunMode(args.mode)
    log_ = run_episode(
        mode,
        scenario,
        scenarios.default_episode_spec(),
        agent,
        cfg,
        planner_kind=args.planner,
    )
    out = Path(args.out)
    log_.to_jsonl(out)
    print(f"episode: steps={log_.end['steps']} collision={log_.end['collision']} "
          f"return={log_.end['return']:.2f} cause={log_.end['cause']}")
    print(f"log: {out}")
    if args.svg:
        render_svg(log_, args.svg)
        print(f"render: {args.svg}")


def _cmd_eval(args):
    cfg = load_config(args.config)
    agent = DqnAgent.load(args.checkpoint)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    modes = [RunMode(m) for m in args.modes]
    gen = scenarios.GENERATORS[args.family]
    logs, report = evaluate(
        modes,
        agent,
        cfg,
        gen,
        scenarios.default_episode_spec(),
        episodes=args.episodes,
        planner_kind=args.planner,
    )
    if args.save_logs:
        for i, l in enumerate(logs):
            l.to_jsonl(out_dir / f"{l.header['mode']}_{l.header['seed']:03d}.jsonl")
    csv_path = out_dir / "metrics.csv"
    report.to_csv(csv_path)
    figures.save_metrics_figure(report, out_dir / "metrics.png")
    trajectory_logs = [l for l in logs if l.mode == RunMode.RL_LLM_TRAJECTORY]
    if trajectory_logs:
        comp = compare_trajectories(trajectory_logs[0])
        figures.save_trajectory_figure(trajectory_logs[0], out_dir / "trajectory.png")
        figures.save_comparison_errors_figure(comp, out_dir / "trajectory_errors.png")
        print(f"waypoint error: mean={comp.mean_error:.3f} m max={comp.max_error:.3f} m "
              f"(skipped {comp.skipped})")
    print(csv_path.read_text().rstrip())
    print(f"report: {csv_path}")


def _cmd_retrieve_build(args):
    table = load_tracks(args.tracks)
    records = records_from_table(table, step_frames=args.step_frames, stride=args.stride)
    index = build_index(records)
    save_index(index, args.out)
    print(f"indexed {len(index)} records (dim {index.dimension}) -> {args.out}")


def _cmd_retrieve_query(args):
    index = load_index(args.index)
    q = np.array([float(v) for v in args.vector.split(",")])
    for rec, d2 in query_knn(index, q, k=args.k):
        src = rec.source
        payload = "; ".join(f"({x:.2f}, {y:.2f}, {vx:.2f}, {vy:.2f})" for x, y, vx, vy in rec.payload)
        print(f"d2={d2:.6f} recording={src.recording_id} vehicle={src.vehicle_id} "
              f"frame={src.frame} next3=[{payload}]")


def _cmd_render(args):
    log_ = EpisodeLog.from_jsonl(args.log)
    out = render_svg(log_, args.out)
    print(f"render: {out}")


def _cmd_synth(args):
    scenario = _parse_scenario(args.scenario)
    table = synth_scenario(scenario)
    write_tracks(table, args.out)
    print(f"wrote {len(table.all_rows())} rows "
          f"({len(table.vehicle_ids)} vehicles, {table.max_frame + 1} frames) -> {args.out}")


def _cmd_init_config(args):
    save_config(ExperimentConfig(), args.out)
    print(f"default config: {args.out}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="highwaysim", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train the DQN policy on the slow-leader family")
    t.add_argument("--episodes", type=int, default=500)
    t.add_argument("--config", default=None)
    t.add_argument("--out-dir", default="runs/train")
    t.set_defaults(func=_cmd_train)

    r = sub.add_parser("run", help="run one episode and write its JSONL log")
    r.add_argument("--mode", required=True, choices=[m.value for m in RunMode])
    r.add_argument("--planner", default="mock", choices=["mock", "live"])
    r.add_argument("--scenario", default="builtin:slow_leader:0")
    r.add_argument("--seed", type=int, default=None, help="override the builtin scenario seed")
    r.add_argument("--checkpoint", default=None)
    r.add_argument("--config", default=None)
    r.add_argument("--out", default="episode.jsonl")
    r.add_argument("--svg", default=None)
    r.set_defaults(func=_cmd_run)

    e = sub.add_parser("eval", help="evaluate modes over a seeded scenario matrix")
    e.add_argument("--modes", nargs="+", default=[m.value for m in RunMode],
                   choices=[m.value for m in RunMode])
    e.add_argument("--episodes", type=int, default=25)
    e.add_argument("--family", default="dense", choices=sorted(scenarios.GENERATORS))
    e.add_argument("--planner", default="mock", choices=["mock", "live"])
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--config", default=None)
    e.add_argument("--out-dir", default="runs/eval")
    e.add_argument("--save-logs", action="store_true")
    e.set_defaults(func=_cmd_eval)

    rb = sub.add_parser("retrieve-build", help="build a knn index from a tracks CSV")
    rb.add_argument("--tracks", required=True)
    rb.add_argument("--out", required=True)
    rb.add_argument("--step-frames", type=int, default=10)
    rb.add_argument("--stride", type=int, default=5)
    rb.set_defaults(func=_cmd_retrieve_build)

    rq = sub.add_parser("retrieve-query", help="query a knn index with a raw key vector")
    rq.add_argument("--index", required=True)
    rq.add_argument("--vector", required=True, help="comma-separated key vector")
    rq.add_argument("-k", type=int, default=3)
    rq.set_defaults(func=_cmd_retrieve_query)

    rd = sub.add_parser("render", help="render an episode log to SVG")
    rd.add_argument("--log", required=True)
    rd.add_argument("--out", required=True)
    rd.set_defaults(func=_cmd_render)

    sy = sub.add_parser("synth", help="write a builtin scenario as a tracks CSV + sidecar")
    sy.add_argument("--scenario", default="builtin:slow_leader:0")
    sy.add_argument("--out", required=True)
    sy.set_defaults(func=_cmd_synth)

    ic = sub.add_parser("init-config", help="write the default config file")
    ic.add_argument("--out", default="highwaysim.json")
    ic.set_defaults(func=_cmd_init_config)

    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
