"""Experiment configuration bundle with JSON load/save.

A config file may specify any subset of sections; missing fields keep their
defaults. Secrets never live in the file: the planner endpoint only names the
environment variable holding the API key.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .controllers import (
    DEFAULT_LATERAL_GAINS,
    DEFAULT_WAYPOINT_X_GAINS,
    IdmParams,
    PidGains,
)
from .dqn_agent import AgentConfig
from .environment import SimConfig
from .llm_planner import PlannerEndpoint
from .safety_arbiter import SafetyRuleConfig


def _gains_to_dict(g: PidGains) -> dict:
    return {
        "k_p": g.k_p,
        "k_i": g.k_i,
        "k_d": g.k_d,
        "integral_clamp": g.integral_clamp,
        "output_clamp": g.output_clamp,
    }


def _idm_to_dict(p: IdmParams) -> dict:
    return {
        "s_0": p.s_0,
        "v_desired": p.v_desired,
        "a_max": p.a_max,
        "b_max": p.b_max,
        "b_safe": p.b_safe,
        "time_headway": p.time_headway,
    }


def _safety_to_dict(s: SafetyRuleConfig) -> dict:
    return {
        "front_trigger_factor": s.front_trigger_factor,
        "adjacent_front_factor": s.adjacent_front_factor,
        "back_min_gap": s.back_min_gap,
        "query_on_proposal_only": s.query_on_proposal_only,
    }


@dataclass(frozen=True)
class ExperimentConfig:
    sim: SimConfig = SimConfig()
    agent: AgentConfig = AgentConfig()
    idm: IdmParams = IdmParams()
    lateral_gains: PidGains = DEFAULT_LATERAL_GAINS
    waypoint_x_gains: PidGains = DEFAULT_WAYPOINT_X_GAINS
    waypoint_y_gains: PidGains = DEFAULT_LATERAL_GAINS
    endpoint: PlannerEndpoint = PlannerEndpoint()
    safety: SafetyRuleConfig = SafetyRuleConfig()
    planner_step_frames: int = 10
    retrieval_stride: int = 5
    capture_radius: float = 0.5

    @property
    def planner_dt(self) -> float:
        return self.planner_step_frames * self.sim.dt

    @property
    def plan_period_frames(self) -> int:
        return 3 * self.planner_step_frames

    def to_dict(self) -> dict:
        return {
            "sim": self.sim.to_dict(),
            "agent": self.agent.to_dict(),
            "idm": _idm_to_dict(self.idm),
            "lateral_gains": _gains_to_dict(self.lateral_gains),
            "waypoint_x_gains": _gains_to_dict(self.waypoint_x_gains),
            "waypoint_y_gains": _gains_to_dict(self.waypoint_y_gains),
            "endpoint": self.endpoint.to_dict(),
            "safety": _safety_to_dict(self.safety),
            "planner_step_frames": self.planner_step_frames,
            "retrieval_stride": self.retrieval_stride,
            "capture_radius": self.capture_radius,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        defaults = cls()
        return cls(
            sim=SimConfig.from_dict(d["sim"]) if "sim" in d else defaults.sim,
            agent=AgentConfig.from_dict(d["agent"]) if "agent" in d else defaults.agent,
            idm=IdmParams(**d["idm"]) if "idm" in d else defaults.idm,
            lateral_gains=PidGains(**d["lateral_gains"])
            if "lateral_gains" in d
            else defaults.lateral_gains,
            waypoint_x_gains=PidGains(**d["waypoint_x_gains"])
            if "waypoint_x_gains" in d
            else defaults.waypoint_x_gains,
            waypoint_y_gains=PidGains(**d["waypoint_y_gains"])
            if "waypoint_y_gains" in d
            else defaults.waypoint_y_gains,
            endpoint=PlannerEndpoint.from_dict(d["endpoint"])
            if "endpoint" in d
            else defaults.endpoint,
            safety=SafetyRuleConfig(**d["safety"]) if "safety" in d else defaults.safety,
            planner_step_frames=int(d.get("planner_step_frames", defaults.planner_step_frames)),
            retrieval_stride=int(d.get("retrieval_stride", defaults.retrieval_stride)),
            capture_radius=float(d.get("capture_radius", defaults.capture_radius)),
        )


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    return ExperimentConfig.from_dict(json.loads(Path(path).read_text()))


def save_config(cfg: ExperimentConfig, path: str | Path):
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
