"""Evaluation protocol: the three run modes, episode logging, metrics
aggregation in the comparison-table shape, trajectory comparison, replay
verification.

Episode logs are JSONL with one record per step plus planner-call and arbiter
records. Everything serialized is deterministic under the mock planner;
wall-clock decision timings live only on the in-memory EpisodeLog.
"""

from __future__ import annotations

import enum
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .controllers import WaypointTracker
from .dataset_io import ScenarioSpec, TrackTable, synth_scenario
from .dqn_agent import DqnAgent
from .environment import (
    ACTION_NAMES,
    ACTIONS_BY_NAME,
    EpisodeSpec,
    HighwayEnv,
    MetaAction,
    Observation,
    SimConfig,
)
from .llm_planner import LiveTrajectoryPlanner, MockTrajectoryPlanner
from .retrieval import KnnIndex, build_index, query_knn, records_from_table, vectorize
from .safety_arbiter import (
    LiveSafetyPlanner,
    MockSafetyPlanner,
    consensus,
)

LOG_VERSION = 1


class RunMode(enum.Enum):
    RL_IDM = "RL_IDM"
    RL_LLM_TRAJECTORY = "RL_LLM_TRAJECTORY"
    RL_IDM_LLM_SAFETY = "RL_IDM_LLM_SAFETY"


@dataclass
class EpisodeLog:
    header: dict
    steps: list[dict] = field(default_factory=list)
    planner_calls: list[dict] = field(default_factory=list)
    arbiter_decisions: list[dict] = field(default_factory=list)
    end: dict = field(default_factory=dict)
    decision_times: list[float] = field(default_factory=list)  # in-memory only

    @property
    def mode(self) -> RunMode:
        return RunMode(self.header["mode"])

    @property
    def collided(self) -> bool:
        return bool(self.end.get("collision", False))

    def episode_return(self) -> float:
        return sum(s["reward"] for s in self.steps)

    def records(self) -> list[dict]:
        """All records in serialization order (steps interleaved by index)."""
        out = [dict(self.header, type="header")]
        by_t: dict[int, list[dict]] = {}
        for call in self.planner_calls:
            by_t.setdefault(call["t"], []).append(dict(call, type="planner_call"))
        for dec in self.arbiter_decisions:
            by_t.setdefault(dec["t"], []).append(dict(dec, type="arbiter"))
        for i, step in enumerate(self.steps):
            out.extend(by_t.get(i, []))
            out.append(dict(step, type="step"))
        out.append(dict(self.end, type="end"))
        return out

    def to_jsonl(self, path: str | Path):
        with open(path, "w") as fh:
            for rec in self.records():
                fh.write(json.dumps(rec) + "\n")

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "EpisodeLog":
        header = None
        steps, calls, decisions, end = [], [], [], {}
        with open(path) as fh:
            for line in fh:
                rec = json.loads(line)
                kind = rec.pop("type")
                if kind == "header":
                    header = rec
                elif kind == "step":
                    steps.append(rec)
                elif kind == "planner_call":
                    calls.append(rec)
                elif kind == "arbiter":
                    decisions.append(rec)
                elif kind == "end":
                    end = rec
        if header is None:
            raise ValueError(f"{path}: no header record")
        return cls(header, steps, calls, decisions, end)


def _ego_dict(obs: Observation) -> dict:
    e = obs.ego
    return {"x": e.x, "y": e.y, "v_x": e.v_x, "v_y": e.v_y, "a_x": e.a_x, "a_y": e.a_y}


def _make_header(
    mode: RunMode,
    scenario: ScenarioSpec,
    episode: EpisodeSpec,
    cfg: ExperimentConfig,
    planner_kind: str,
    seed: int,
) -> dict:
    return {
        "log_version": LOG_VERSION,
        "mode": mode.value,
        "planner": planner_kind,
        "seed": seed,
        "scenario": scenario.to_dict(),
        "episode": episode.to_dict(),
        "sim": cfg.sim.to_dict(),
        "planner_step_frames": cfg.planner_step_frames,
        "retrieval_stride": cfg.retrieval_stride,
        "geometry": {
            "boundaries": list(scenario.geometry().boundaries),
            "centers": list(scenario.geometry().centers),
        },
    }


def build_scenario_index(table: TrackTable, cfg: ExperimentConfig) -> KnnIndex:
    records = records_from_table(
        table, step_frames=cfg.planner_step_frames, stride=cfg.retrieval_stride
    )
    return build_index(records)


def _vectorize_obs(obs: Observation, env: HighwayEnv) -> np.ndarray:
    return vectorize(
        obs.ego.v_x,
        obs.ego.v_y,
        obs.ego.a_x,
        obs.ego.a_y,
        obs.front_sight_distance,
        obs.back_sight_distance,
        obs.preceding_x_velocity,
        obs.ego.y,
        obs.lane_id,
        env.geometry,
    )


def _candidate_target(action: MetaAction, current_lane: int, lane_count: int) -> int:
    if action == MetaAction.LLC and current_lane > 1:
        return current_lane - 1
    if action == MetaAction.RLC and current_lane < lane_count:
        return current_lane + 1
    return current_lane


def run_episode(
    mode: RunMode,
    scenario: ScenarioSpec,
    episode: EpisodeSpec,
    agent: DqnAgent | None,
    cfg: ExperimentConfig,
    planner_kind: str = "mock",
    table: TrackTable | None = None,
    index: KnnIndex | None = None,
    random_policy_seed: int | None = None,
    policy=None,
) -> EpisodeLog:
    """Run one episode in the given mode and return its full log.

    ``random_policy_seed`` substitutes uniform random actions for the agent
    (baseline measurements); ``policy`` (obs_vec -> MetaAction) overrides the
    agent with a scripted decision rule. The agent is otherwise queried
    greedily.
    """
    if table is None:
        table = synth_scenario(scenario)
    env = HighwayEnv(table, cfg.sim, cfg.idm, cfg.lateral_gains)
    obs = env.reset(episode)
    seed = scenario.seed if random_policy_seed is None else random_policy_seed
    log = EpisodeLog(_make_header(mode, scenario, episode, cfg, planner_kind, seed))
    log.header["initial_ego"] = _ego_dict(obs)

    random_rng = (
        np.random.default_rng(random_policy_seed) if random_policy_seed is not None else None
    )

    def rl_action(vec: np.ndarray) -> MetaAction:
        if policy is not None:
            return policy(vec)
        if random_rng is not None:
            return MetaAction(int(random_rng.integers(3)))
        return agent.select_action(vec, eps=0.0)

    needs_index = mode in (RunMode.RL_LLM_TRAJECTORY, RunMode.RL_IDM_LLM_SAFETY)
    if needs_index and index is None:
        index = build_scenario_index(table, cfg)

    if mode == RunMode.RL_LLM_TRAJECTORY:
        if planner_kind == "live":
            planner = LiveTrajectoryPlanner(
                cfg.endpoint, env.geometry, cfg.idm, cfg.planner_dt, cfg.sim.v_max
            )
        else:
            planner = MockTrajectoryPlanner(
                env.geometry, cfg.idm, cfg.planner_dt, cfg.sim.v_max
            )
        _run_trajectory(env, obs, agent, rl_action, planner, index, cfg, log)
    elif mode == RunMode.RL_IDM_LLM_SAFETY:
        if planner_kind == "live":
            safety = LiveSafetyPlanner(cfg.endpoint)
        else:
            safety = MockSafetyPlanner(cfg.idm, cfg.safety)
        _run_safety(env, obs, rl_action, safety, index, cfg, log)
    else:
        _run_rl_idm(env, obs, rl_action, cfg, log)

    log.end = {
        "steps": len(log.steps),
        "collision": bool(env.collided),
        "cause": env.cause,
        "return": log.episode_return(),
    }
    return log


def _log_step(log, env, obs, action, reward, done, info):
    log.steps.append(
        {
            "t": len(log.steps),
            "frame": info["frame"],
            "ego": _ego_dict(obs),
            "lane": obs.lane_id,
            "action": ACTION_NAMES[action],
            "reward": reward,
            "done": done,
            "collision": info["collision"],
            "cause": info["cause"],
        }
    )


def _run_rl_idm(env, obs, rl_action, cfg, log):
    while not env.done:
        vec = env.normalized_observation()
        t0 = time.perf_counter()
        action = rl_action(vec)
        log.decision_times.append(time.perf_counter() - t0)
        obs, reward, done, info = env.step(action)
        _log_step(log, env, obs, action, reward, done, info)


def _run_trajectory(env, obs, agent, rl_action, planner, index, cfg, log):
    tracker = WaypointTracker(
        cfg.waypoint_x_gains, cfg.waypoint_y_gains, cfg.capture_radius
    )
    plan_period = cfg.plan_period_frames
    plan_action = MetaAction.LK
    t = 0
    while not env.done:
        if t % plan_period == 0:
            vec = env.normalized_observation()
            t0 = time.perf_counter()
            plan_action = rl_action(vec)
            key = _vectorize_obs(obs, env)
            neighbors = [rec for rec, _ in query_knn(index, key, k=3)]
            pred, info_call = planner.predict(obs, plan_action, neighbors)
            tracker.set_plan(list(pred.waypoints))
            log.decision_times.append(time.perf_counter() - t0)
            log.planner_calls.append(
                {
                    "t": t,
                    "frame": env.frame,
                    "action": ACTION_NAMES[plan_action],
                    "prompt_sha256": info_call.prompt_sha256,
                    "latency_s": info_call.latency_s,
                    "source": info_call.source,
                    "fallback": info_call.fallback,
                    "reject_reason": info_call.reject_reason,
                    "waypoints": [[x, y] for x, y in pred.waypoints],
                    "reason": pred.reason,
                }
            )
            step_action = plan_action
        else:
            step_action = MetaAction.LK
        a_x, a_y = tracker.step(env.ego, cfg.sim.dt)
        obs, reward, done, info = env.step_with_accel(step_action, a_x, a_y)
        _log_step(log, env, obs, step_action, reward, done, info)
        t += 1


def _run_safety(env, obs, rl_action, safety, index, cfg, log):
    t = 0
    while not env.done:
        vec = env.normalized_observation()
        t0 = time.perf_counter()
        proposal = rl_action(vec)
        executed = proposal
        new_target = _candidate_target(proposal, obs.lane_id, obs.lane_count)
        is_new_maneuver = proposal != MetaAction.LK and new_target != env.target_lane
        if is_new_maneuver or not cfg.safety.query_on_proposal_only:
            if proposal != MetaAction.LK:
                key = _vectorize_obs(obs, env)
                neighbors = [rec for rec, _ in query_knn(index, key, k=3)]
                llm = safety.action(obs, neighbors)
                decision = consensus(proposal, llm)
                executed = decision.executed
                log.arbiter_decisions.append(dict(decision.to_dict(), t=t, frame=env.frame))
        log.decision_times.append(time.perf_counter() - t0)
        obs, reward, done, info = env.step(executed)
        _log_step(log, env, obs, executed, reward, done, info)
        t += 1


# -- metrics -------------------------------------------------------------------


@dataclass(frozen=True)
class ModeMetrics:
    collision_mean: float
    velocity_kmh: float
    inference_time_s: float | None
    run_count: int
    seeds: tuple[int, ...]


@dataclass(frozen=True)
class MetricsReport:
    per_mode: dict[str, ModeMetrics]

    MODE_ORDER = ("RL_IDM", "RL_LLM_TRAJECTORY", "RL_IDM_LLM_SAFETY")
    METRIC_ROWS = ("collision_no", "velocity_kmh", "inference_time_s", "run_count")

    def to_csv(self, path: str | Path):
        modes = [m for m in self.MODE_ORDER if m in self.per_mode] + [
            m for m in sorted(self.per_mode) if m not in self.MODE_ORDER
        ]
        lines = ["metric," + ",".join(modes)]
        for row in self.METRIC_ROWS:
            cells = []
            for m in modes:
                mm = self.per_mode[m]
                if row == "collision_no":
                    cells.append(f"{mm.collision_mean:.4f}")
                elif row == "velocity_kmh":
                    cells.append(f"{mm.velocity_kmh:.2f}")
                elif row == "inference_time_s":
                    cells.append("" if mm.inference_time_s is None else f"{mm.inference_time_s:.6f}")
                else:
                    cells.append(str(mm.run_count))
            lines.append(row + "," + ",".join(cells))
        Path(path).write_text("\n".join(lines) + "\n")


def aggregate_metrics(logs: list[EpisodeLog]) -> MetricsReport:
    """Collapse episode logs into the per-mode comparison table."""
    if not logs:
        raise ValueError("no logs to aggregate")
    per_mode: dict[str, ModeMetrics] = {}
    by_mode: dict[str, list[EpisodeLog]] = {}
    for log in logs:
        by_mode.setdefault(log.header["mode"], []).append(log)
    for mode, group in by_mode.items():
        collisions = [1.0 if g.collided else 0.0 for g in group]
        v_sum = 0.0
        n_steps = 0
        for g in group:
            for s in g.steps:
                v_sum += s["ego"]["v_x"]
                n_steps += 1
        times = [t for g in group for t in g.decision_times]
        per_mode[mode] = ModeMetrics(
            collision_mean=float(np.mean(collisions)),
            velocity_kmh=(v_sum / n_steps * 3.6) if n_steps else 0.0,
            inference_time_s=float(np.mean(times)) if times else None,
            run_count=len(group),
            seeds=tuple(sorted(g.header["seed"] for g in group)),
        )
    return MetricsReport(per_mode)


# -- trajectory comparison --------------------------------------------------------


@dataclass(frozen=True)
class TrajectoryComparison:
    errors: list[list[float]]       # per planner call, per realized waypoint
    mean_error: float
    max_error: float
    counted: int
    skipped: int


def compare_trajectories(log: EpisodeLog) -> TrajectoryComparison:
    """Euclidean error between each predicted waypoint and the ego position
    realized one planner step later per waypoint index; predictions running
    past the episode end are skipped and counted."""
    step_frames = int(log.header.get("planner_step_frames", 10))
    errors: list[list[float]] = []
    all_errors: list[float] = []
    skipped = 0
    for call in log.planner_calls:
        t = call["t"]
        call_errors = []
        for n, (wx, wy) in enumerate(call["waypoints"], start=1):
            idx = t - 1 + n * step_frames
            if idx >= len(log.steps):
                skipped += 1
                continue
            ego = log.steps[idx]["ego"]
            err = math.hypot(ego["x"] - wx, ego["y"] - wy)
            call_errors.append(err)
            all_errors.append(err)
        errors.append(call_errors)
    return TrajectoryComparison(
        errors=errors,
        mean_error=float(np.mean(all_errors)) if all_errors else 0.0,
        max_error=float(np.max(all_errors)) if all_errors else 0.0,
        counted=len(all_errors),
        skipped=skipped,
    )


# -- replay verification -------------------------------------------------------------


@dataclass(frozen=True)
class ReplayResult:
    match: bool
    mismatch_step: int | None = None
    detail: str | None = None


def replay_episode(log: EpisodeLog, cfg: ExperimentConfig | None = None) -> ReplayResult:
    """Re-run the recorded action sequence through a fresh environment and
    compare every ego state bit-for-bit (mock planner mode)."""
    header = log.header
    if cfg is None:
        cfg = ExperimentConfig()
    cfg_sim = SimConfig.from_dict(header["sim"])
    scenario = ScenarioSpec.from_dict(header["scenario"])
    episode = EpisodeSpec.from_dict(header["episode"])
    table = synth_scenario(scenario)
    env = HighwayEnv(table, cfg_sim, cfg.idm, cfg.lateral_gains)
    env.reset(episode)
    mode = RunMode(header["mode"])

    tracker = None
    index = None
    planner = None
    if mode == RunMode.RL_LLM_TRAJECTORY:
        tracker = WaypointTracker(
            cfg.waypoint_x_gains, cfg.waypoint_y_gains, cfg.capture_radius
        )
        index = build_scenario_index(table, cfg)
        planner = MockTrajectoryPlanner(env.geometry, cfg.idm, cfg.planner_dt, cfg_sim.v_max)
        calls_by_t = {c["t"]: c for c in log.planner_calls}

    for i, step_rec in enumerate(log.steps):
        action = ACTIONS_BY_NAME[step_rec["action"]]
        if mode == RunMode.RL_LLM_TRAJECTORY:
            if i % cfg.plan_period_frames == 0:
                call = calls_by_t.get(i)
                plan_action = ACTIONS_BY_NAME[call["action"]] if call else action
                obs = env.observe()
                key = _vectorize_obs(obs, env)
                neighbors = [rec for rec, _ in query_knn(index, key, k=3)]
                pred, _ = planner.predict(obs, plan_action, neighbors)
                tracker.set_plan(list(pred.waypoints))
            a_x, a_y = tracker.step(env.ego, cfg_sim.dt)
            obs, reward, done, info = env.step_with_accel(action, a_x, a_y)
        else:
            obs, reward, done, info = env.step(action)
        recorded = step_rec["ego"]
        replayed = _ego_dict(obs)
        if replayed != recorded:
            return ReplayResult(False, i, f"ego state diverged: {replayed} != {recorded}")
        if done != step_rec["done"]:
            return ReplayResult(False, i, "done flag diverged")
    return ReplayResult(True)


# -- evaluation sweeps -------------------------------------------------------------------


def evaluate(
    modes: list[RunMode],
    agent: DqnAgent,
    cfg: ExperimentConfig,
    scenario_fn,
    episode_spec: EpisodeSpec,
    episodes: int = 25,
    planner_kind: str = "mock",
) -> tuple[list[EpisodeLog], MetricsReport]:
    """Run ``episodes`` seeded episodes per mode over the scenario matrix."""
    logs: list[EpisodeLog] = []
    for mode in modes:
        for seed in range(episodes):
            scenario = scenario_fn(seed)
            logs.append(
                run_episode(mode, scenario, episode_spec, agent, cfg, planner_kind)
            )
    return logs, aggregate_metrics(logs)
