"""Consensus safety layer: an independent lane-action opinion from the
planner, executed only when it agrees with the RL proposal; disagreement
defaults to lane keeping."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import jsonschema

from .controllers import IdmParams, desired_gap
from .environment import MetaAction, Observation
from .llm_planner import (
    PlannerEndpoint,
    PlannerError,
    PromptBundle,
    ROLE_TEXT,
    UnparseablePredictionError,
    fmt,
    request_prediction,
    serialize_neighbors,
)
from .retrieval import KnowledgeRecord

log = logging.getLogger(__name__)

ACTION_TOOL_NAME = "choose_lane_action"
ACTION_WORDS = {MetaAction.LLC: "left", MetaAction.RLC: "right", MetaAction.LK: "keep"}
ACTIONS_BY_WORD = {v: k for k, v in ACTION_WORDS.items()}

SAFETY_PROMPT_TEMPLATE = (
    "You are given the current state with x position {current_x}, y position "
    "{current_y}, x velocity {velocity_x}, y velocity {velocity_y}, acceleration in x "
    "{acceleration_x}, acceleration in y {acceleration_y}, front sight distance "
    "{front_sight_distance}, back sight distance {back_sight_distance}, and preceding "
    "vehicle's x velocity {preceding_x_velocity}, along with similar past "
    "trajectories: {nearest_neighbors}. Decide independently whether the ego-vehicle "
    "should change to the left lane, change to the right lane, or keep in the same "
    "lane. Choose the single safest action, avoiding collisions with other vehicles "
    "and unnecessary manoeuvres."
)


def action_schema() -> dict:
    """Single-field tool descriptor: action in {left, right, keep}."""
    return {
        "type": "function",
        "function": {
            "name": ACTION_TOOL_NAME,
            "description": "Choose the safest high-level lane action for the ego-vehicle.",
            "parameters": {
                "type": "object",
                "properties": {
                    "action": {"type": "string", "enum": sorted(ACTIONS_BY_WORD)}
                },
                "required": ["action"],
                "additionalProperties": False,
            },
        },
    }


def build_safety_prompt(obs: Observation, neighbors: list[KnowledgeRecord]) -> PromptBundle:
    """Safety-variant prompt: same state fields, no RL command included."""
    if not neighbors:
        raise ValueError("at least one retrieved neighbor is required")
    padded = list(neighbors[:3])
    while len(padded) < 3:
        padded.append(padded[0])
    user = SAFETY_PROMPT_TEMPLATE.format(
        current_x=fmt(obs.ego.x),
        current_y=fmt(obs.ego.y),
        velocity_x=fmt(obs.ego.v_x),
        velocity_y=fmt(obs.ego.v_y),
        acceleration_x=fmt(obs.ego.a_x),
        acceleration_y=fmt(obs.ego.a_y),
        front_sight_distance=fmt(obs.front_sight_distance),
        back_sight_distance=fmt(obs.back_sight_distance),
        preceding_x_velocity=fmt(obs.preceding_x_velocity),
        nearest_neighbors=serialize_neighbors(padded),
    )
    return PromptBundle(role=ROLE_TEXT, user=user, tool_schema=action_schema())


def parse_action(raw: dict) -> MetaAction:
    try:
        tool_calls = raw["choices"][0]["message"].get("tool_calls") or []
        if not tool_calls:
            raise KeyError("no tool_calls in response message")
        arguments = tool_calls[0]["function"]["arguments"]
        args = json.loads(arguments) if isinstance(arguments, str) else arguments
        jsonschema.validate(args, action_schema()["function"]["parameters"])
    except (KeyError, IndexError, TypeError, json.JSONDecodeError, jsonschema.ValidationError) as exc:
        raise UnparseablePredictionError(f"unparseable action: {exc}", raw) from None
    return ACTIONS_BY_WORD[args["action"]]


@dataclass(frozen=True)
class SafetyRuleConfig:
    """Thresholds of the mock safety rule (gap terms in units of the desired gap
    s* except ``back_min_gap`` which is absolute meters)."""

    front_trigger_factor: float = 1.0
    adjacent_front_factor: float = 1.5
    back_min_gap: float | None = None  # defaults to IDM s_0
    query_on_proposal_only: bool = True


def mock_safety_action(
    obs: Observation, idm: IdmParams = IdmParams(), rule: SafetyRuleConfig = SafetyRuleConfig()
) -> MetaAction:
    """Gap/speed rule standing in for the language model's safety judgement.

    Keep lane unless the front gap is below the desired gap s* and an adjacent
    lane offers front gap > adjacent_front_factor * s* and back gap above the
    minimum; prefer left over right.
    """
    if not obs.ego_front.present:
        return MetaAction.LK
    v = max(0.0, obs.ego.v_x)
    s_star = desired_gap(idm, v, obs.ego_front.v_x)
    if obs.front_sight_distance >= rule.front_trigger_factor * s_star:
        return MetaAction.LK
    back_min = idm.s_0 if rule.back_min_gap is None else rule.back_min_gap
    candidates = []
    if obs.lane_id > 1:
        candidates.append((MetaAction.LLC, obs.left_front, obs.left_back))
    if obs.lane_id < obs.lane_count:
        candidates.append((MetaAction.RLC, obs.right_front, obs.right_back))
    for action, front, back in candidates:
        front_ok = (not front.present) or front.distance > rule.adjacent_front_factor * s_star
        back_ok = (not back.present) or back.distance > back_min
        if front_ok and back_ok:
            return action
    return MetaAction.LK


class MockSafetyPlanner:
    """Offline safety opinion; builds the prompt for parity, answers by rule."""

    name = "mock"

    def __init__(self, idm: IdmParams = IdmParams(), rule: SafetyRuleConfig = SafetyRuleConfig()):
        self.idm = idm
        self.rule = rule

    def action(self, obs: Observation, neighbors: list[KnowledgeRecord]) -> MetaAction:
        build_safety_prompt(obs, neighbors)
        return mock_safety_action(obs, self.idm, self.rule)


class LiveSafetyPlanner:
    """Wire-backed safety opinion; any failure degrades to conservative LK."""

    name = "live"

    def __init__(self, endpoint: PlannerEndpoint):
        self.endpoint = endpoint

    def action(self, obs: Observation, neighbors: list[KnowledgeRecord]) -> MetaAction:
        bundle = build_safety_prompt(obs, neighbors)
        try:
            result = request_prediction(self.endpoint, bundle)
            return parse_action(result.body)
        except PlannerError as exc:
            log.warning("safety query failed (%s); defaulting to lane keep", exc)
            return MetaAction.LK


def llm_action_query(planner, obs: Observation, neighbors: list[KnowledgeRecord]) -> MetaAction:
    """Independent lane-action opinion from the given safety planner."""
    return planner.action(obs, neighbors)


@dataclass(frozen=True)
class ArbiterDecision:
    rl_action: MetaAction
    llm_action: MetaAction
    executed: MetaAction
    agreed: bool

    def to_dict(self) -> dict:
        from .environment import ACTION_NAMES

        return {
            "rl": ACTION_NAMES[self.rl_action],
            "llm": ACTION_NAMES[self.llm_action],
            "executed": ACTION_NAMES[self.executed],
            "agreed": self.agreed,
        }


def consensus(rl: MetaAction, llm: MetaAction) -> ArbiterDecision:
    """Execute only on agreement; disagreement defaults to lane keeping."""
    agreed = rl == llm
    return ArbiterDecision(rl, llm, rl if agreed else MetaAction.LK, agreed)
