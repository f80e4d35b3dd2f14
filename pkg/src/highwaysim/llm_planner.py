"""Everything between the simulator and the language model.

Covers prompt assembly, the waypoint tool schema, a blocking chat-completions
HTTP client with retries, tool-call parsing into trajectory predictions,
waypoint sanity validation, and a deterministic kinematic mock planner for
offline runs. All numeric prompt fields use fixed 2-decimal formatting so
identical inputs produce byte-identical prompts.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import time
from dataclasses import dataclass

import jsonschema
import requests

from .controllers import IdmParams
from .environment import MetaAction, Observation
from .kinematics import LaneGeometry
from .retrieval import KnowledgeRecord

log = logging.getLogger(__name__)

TOOL_NAME = "predict_trajectory"
DEFAULT_PLANNER_STEP_S = 0.4      # 10 simulation frames between waypoints
DEFAULT_V_MAX = 50.0
WAYPOINT_FIELDS = ("t1_x", "t1_y", "t2_x", "t2_y", "t3_x", "t3_y")

ROLE_TEXT = (
    "You are an AI assistant capable of predicting a vehicle's next position on a "
    "highway. You will be provided with commands to change to the left lane, right "
    "lane, or keep in the same lane. You are given information about the current "
    "velocity, acceleration, and position of the ego-vehicle. Additionally, you are "
    "provided with information about the front and back sight distance with other "
    "vehicles, including the preceding vehicle's x velocity. You are also given past "
    "similar trajectories for the given state information."
)

PROMPT_TEMPLATE = (
    "You are given the current state with x position {current_x}, y position "
    "{current_y}, x velocity {velocity_x}, y velocity {velocity_y}, acceleration in x "
    "{acceleration_x}, acceleration in y {acceleration_y}, front sight distance "
    "{front_sight_distance}, back sight distance {back_sight_distance}, and preceding "
    "vehicle's x velocity {preceding_x_velocity}, along with similar past "
    "trajectories: {nearest_neighbors}. You are also given a command to "
    "{meta_action}. Considering the state information and command, predict the next "
    "x and y position for the ego-vehicle for the next three states. You should make "
    "logical predictions to avoid collision with other vehicles, ensure safe travel, "
    "and smooth speed transitions. You should briefly explain your reason for the "
    "predictions made."
)

ACTION_PHRASES = {
    MetaAction.LLC: "change to the left lane",
    MetaAction.RLC: "change to the right lane",
    MetaAction.LK: "keep in the same lane",
}


def fmt(value: float) -> str:
    return f"{value:.2f}"


@dataclass(frozen=True)
class TrajectoryPrediction:
    """Three future (x, y) waypoints (t+1, t+2, t+3) plus the model's rationale."""

    waypoints: tuple[tuple[float, float], ...]
    reason: str

    def __post_init__(self):
        if len(self.waypoints) != 3:
            raise ValueError(f"expected exactly 3 waypoints, got {len(self.waypoints)}")
        for x, y in self.waypoints:
            if not (math.isfinite(x) and math.isfinite(y)):
                raise ValueError("non-finite waypoint")
        if not self.reason:
            raise ValueError("reason must be non-empty")

    def to_arguments(self) -> dict:
        args = {}
        for n, (x, y) in enumerate(self.waypoints, start=1):
            args[f"t{n}_x"] = x
            args[f"t{n}_y"] = y
        args["reason"] = self.reason
        return args


@dataclass(frozen=True)
class PromptBundle:
    role: str
    user: str
    tool_schema: dict

    def sha256(self) -> str:
        payload = self.role + "\n" + self.user + "\n" + json.dumps(self.tool_schema, sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class PlannerEndpoint:
    base_url: str = "http://localhost:8000/v1"
    model: str = "planner-model"
    api_key_env: str = "PLANNER_API_KEY"
    timeout_s: float = 30.0
    retries: int = 2
    backoff_s: float = 0.5

    def __post_init__(self):
        if self.timeout_s <= 0:
            raise ValueError("timeout must be positive")

    def to_dict(self) -> dict:
        return {
            "base_url": self.base_url,
            "model": self.model,
            "api_key_env": self.api_key_env,
            "timeout_s": self.timeout_s,
            "retries": self.retries,
            "backoff_s": self.backoff_s,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PlannerEndpoint":
        return cls(**d)


def function_schema() -> dict:
    """Tool descriptor with six required numeric waypoint fields and a reason."""
    properties = {name: {"type": "number"} for name in WAYPOINT_FIELDS}
    properties["reason"] = {"type": "string"}
    return {
        "type": "function",
        "function": {
            "name": TOOL_NAME,
            "description": (
                "Predict the next x,y coordinate of the ego-vehicle for the next "
                "three states with respect to the given position parameters "
                "(x, y, velocity, acceleration)."
            ),
            "parameters": {
                "type": "object",
                "properties": properties,
                "required": list(WAYPOINT_FIELDS) + ["reason"],
                "additionalProperties": False,
            },
        },
    }


def serialize_neighbors(neighbors: list[KnowledgeRecord]) -> str:
    parts = []
    for rec in neighbors:
        states = ", ".join(
            f"({fmt(x)}, {fmt(y)}, {fmt(vx)}, {fmt(vy)})" for x, y, vx, vy in rec.payload
        )
        parts.append(f"[{states}]")
    return "; ".join(parts)


def build_prompt(
    obs: Observation, neighbors: list[KnowledgeRecord], action: MetaAction
) -> PromptBundle:
    """Fill the planner prompt template for this state, neighbor set, and command.

    Fewer than three neighbors are padded by repeating the nearest one.
    """
    if not neighbors:
        raise ValueError("at least one retrieved neighbor is required")
    padded = list(neighbors[:3])
    while len(padded) < 3:
        padded.append(padded[0])
    user = PROMPT_TEMPLATE.format(
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
        meta_action=ACTION_PHRASES[action],
    )
    return PromptBundle(role=ROLE_TEXT, user=user, tool_schema=function_schema())


# -- wire client -------------------------------------------------------------


class PlannerError(RuntimeError):
    pass


class PlannerTimeoutError(PlannerError):
    pass


class PlannerTransportError(PlannerError):
    pass


class PlannerHTTPError(PlannerError):
    def __init__(self, status: int, body: str):
        super().__init__(f"planner endpoint returned HTTP {status}")
        self.status = status
        self.body = body


class PlannerRetriesExhaustedError(PlannerError):
    pass


class UnparseablePredictionError(PlannerError):
    """The response carried no usable tool call; ``raw`` holds the body."""

    def __init__(self, message: str, raw):
        super().__init__(message)
        self.raw = raw


@dataclass(frozen=True)
class RequestResult:
    body: dict
    latency_s: float
    retries_used: int


def request_prediction(endpoint: PlannerEndpoint, bundle: PromptBundle) -> RequestResult:
    """One chat-completions POST with the tool schema attached.

    Transport failures, timeouts, and 5xx responses are retried with
    exponential backoff up to ``endpoint.retries`` extra attempts; 4xx
    responses fail immediately.
    """
    payload = {
        "model": endpoint.model,
        "messages": [
            {"role": "system", "content": bundle.role},
            {"role": "user", "content": bundle.user},
        ],
        "tools": [bundle.tool_schema],
        "tool_choice": {
            "type": "function",
            "function": {"name": bundle.tool_schema["function"]["name"]},
        },
    }
    headers = {"Content-Type": "application/json"}
    api_key = os.environ.get(endpoint.api_key_env, "")
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"

    url = endpoint.base_url.rstrip("/") + "/chat/completions"
    start = time.perf_counter()
    last_error: PlannerError | None = None
    for attempt in range(endpoint.retries + 1):
        if attempt:
            time.sleep(endpoint.backoff_s * 2 ** (attempt - 1))
        try:
            resp = requests.post(url, json=payload, headers=headers, timeout=endpoint.timeout_s)
        except requests.Timeout as exc:
            last_error = PlannerTimeoutError(f"planner request timed out after {endpoint.timeout_s}s")
            last_error.__cause__ = exc
            log.warning("planner timeout (attempt %d/%d)", attempt + 1, endpoint.retries + 1)
            continue
        except requests.RequestException as exc:
            last_error = PlannerTransportError(f"planner transport failure: {exc}")
            last_error.__cause__ = exc
            log.warning("planner transport failure (attempt %d/%d): %s", attempt + 1, endpoint.retries + 1, exc)
            continue
        if 200 <= resp.status_code < 300:
            latency = time.perf_counter() - start
            return RequestResult(resp.json(), latency, attempt)
        if 500 <= resp.status_code < 600:
            last_error = PlannerHTTPError(resp.status_code, resp.text)
            log.warning("planner HTTP %d (attempt %d/%d)", resp.status_code, attempt + 1, endpoint.retries + 1)
            continue
        log.error("planner HTTP %d, not retrying", resp.status_code)
        raise PlannerHTTPError(resp.status_code, resp.text)

    exhausted = PlannerRetriesExhaustedError(
        f"planner request failed after {endpoint.retries + 1} attempts: {last_error}"
    )
    exhausted.__cause__ = last_error
    log.error("%s", exhausted)
    raise exhausted


def parse_prediction(raw: dict) -> TrajectoryPrediction:
    """Extract and validate the tool-call arguments of a chat-completions body."""
    try:
        message = raw["choices"][0]["message"]
        tool_calls = message.get("tool_calls") or []
        if not tool_calls:
            raise KeyError("no tool_calls in response message")
        arguments = tool_calls[0]["function"]["arguments"]
        args = json.loads(arguments) if isinstance(arguments, str) else arguments
    except (KeyError, IndexError, TypeError, json.JSONDecodeError) as exc:
        raise UnparseablePredictionError(f"unparseable prediction: {exc}", raw) from None

    schema = function_schema()["function"]["parameters"]
    try:
        jsonschema.validate(args, schema)
    except jsonschema.ValidationError as exc:
        raise UnparseablePredictionError(f"unparseable prediction: {exc.message}", raw) from None
    for name in WAYPOINT_FIELDS:
        if not math.isfinite(args[name]):
            raise UnparseablePredictionError(f"unparseable prediction: non-finite {name}", raw)
    if not args["reason"].strip():
        raise UnparseablePredictionError("unparseable prediction: empty reason", raw)
    waypoints = tuple(
        (float(args[f"t{n}_x"]), float(args[f"t{n}_y"])) for n in (1, 2, 3)
    )
    return TrajectoryPrediction(waypoints=waypoints, reason=args["reason"])


# -- waypoint validation -------------------------------------------------------


@dataclass(frozen=True)
class WaypointVerdict:
    accepted: bool
    reason: str | None = None


def validate_waypoints(
    pred: TrajectoryPrediction,
    obs: Observation,
    geometry: LaneGeometry,
    v_max: float = DEFAULT_V_MAX,
    planner_dt: float = DEFAULT_PLANNER_STEP_S,
) -> WaypointVerdict:
    """Reject waypoints that leave the road, move backward, imply speeds over
    v_max for their spacing, or jump implausibly far from the current x."""
    for n, (_, y) in enumerate(pred.waypoints, start=1):
        if not geometry.contains(y):
            return WaypointVerdict(False, f"waypoint {n} leaves lateral bounds (y={y:.2f})")
    prev_x, prev_y = obs.ego.x, obs.ego.y
    for n, (x, y) in enumerate(pred.waypoints, start=1):
        if x <= prev_x:
            return WaypointVerdict(False, f"waypoint {n} does not move forward (x={x:.2f})")
        seg_speed = math.hypot(x - prev_x, y - prev_y) / planner_dt
        if seg_speed > v_max:
            return WaypointVerdict(
                False, f"waypoint {n} implies {seg_speed:.1f} m/s over the {v_max:.0f} m/s limit"
            )
        if abs(x - obs.ego.x) > 3.0 * v_max * planner_dt * n:
            return WaypointVerdict(False, f"waypoint {n} jumps too far from current x")
        prev_x, prev_y = x, y
    return WaypointVerdict(True)


# -- deterministic mock ---------------------------------------------------------


def _smoothstep(u: float) -> float:
    return u * u * (3.0 - 2.0 * u)


def mock_predict(
    obs: Observation,
    action: MetaAction,
    neighbors: list[KnowledgeRecord] | None = None,
    *,
    geometry: LaneGeometry,
    idm: IdmParams = IdmParams(),
    planner_dt: float = DEFAULT_PLANNER_STEP_S,
    v_max: float = DEFAULT_V_MAX,
) -> TrajectoryPrediction:
    """Kinematic stand-in for the language model.

    x advances at the current speed capped so the front gap never closes below
    s_0 (and never exceeds the desired velocity); y eases toward the target
    lane center along a smooth cubic. Retrieved neighbors are accepted for
    interface parity but not needed by the kinematics.
    """
    lane = obs.lane_id
    if action == MetaAction.LLC and lane > 1:
        target_lane = lane - 1
    elif action == MetaAction.RLC and lane < geometry.lane_count:
        target_lane = lane + 1
    else:
        target_lane = lane
    center = geometry.lane_center(target_lane)

    horizon = 3.0 * planner_dt
    v = obs.ego.v_x
    constraint = f"holding the current speed {fmt(v)} m/s"
    if obs.ego_front.present:
        gap_bound = obs.preceding_x_velocity + max(
            0.0, obs.front_sight_distance - idm.s_0
        ) / horizon
        if gap_bound < v:
            v = gap_bound
            constraint = (
                f"limiting speed to {fmt(v)} m/s to keep at least "
                f"{idm.s_0:.1f} m behind the leader"
            )
    if idm.v_desired < v:
        v = idm.v_desired
        constraint = f"limiting speed to the desired {fmt(v)} m/s"
    hard_cap = 0.98 * v_max
    if hard_cap < v:
        v = hard_cap
        constraint = f"limiting speed to the validator bound {fmt(v)} m/s"
    v = max(v, 0.1)  # predictions must keep advancing to stay valid

    waypoints = tuple(
        (
            obs.ego.x + n * planner_dt * v,
            obs.ego.y + (center - obs.ego.y) * _smoothstep(n / 3.0),
        )
        for n in (1, 2, 3)
    )
    reason = (
        f"Command: {ACTION_PHRASES[action]}. Easing toward lane center "
        f"y={fmt(center)} over the next three states while {constraint}."
    )
    return TrajectoryPrediction(waypoints=waypoints, reason=reason)


# -- planner pipeline -------------------------------------------------------------


@dataclass(frozen=True)
class PlannerCallInfo:
    prompt_sha256: str
    latency_s: float
    source: str          # "mock" or "live"
    fallback: bool = False
    reject_reason: str | None = None


class MockTrajectoryPlanner:
    """Offline planner: builds the prompt (for parity and logging) and answers
    with the kinematic mock. Logged latency is 0.0 by definition: no wire I/O."""

    name = "mock"

    def __init__(
        self,
        geometry: LaneGeometry,
        idm: IdmParams = IdmParams(),
        planner_dt: float = DEFAULT_PLANNER_STEP_S,
        v_max: float = DEFAULT_V_MAX,
    ):
        self.geometry = geometry
        self.idm = idm
        self.planner_dt = planner_dt
        self.v_max = v_max

    def predict(
        self, obs: Observation, action: MetaAction, neighbors: list[KnowledgeRecord]
    ) -> tuple[TrajectoryPrediction, PlannerCallInfo]:
        bundle = build_prompt(obs, neighbors, action)
        pred = mock_predict(
            obs,
            action,
            neighbors,
            geometry=self.geometry,
            idm=self.idm,
            planner_dt=self.planner_dt,
            v_max=self.v_max,
        )
        return pred, PlannerCallInfo(bundle.sha256(), 0.0, self.name)


class LiveTrajectoryPlanner:
    """HTTP planner with mock fallback on unparseable or rejected predictions."""

    name = "live"

    def __init__(
        self,
        endpoint: PlannerEndpoint,
        geometry: LaneGeometry,
        idm: IdmParams = IdmParams(),
        planner_dt: float = DEFAULT_PLANNER_STEP_S,
        v_max: float = DEFAULT_V_MAX,
    ):
        self.endpoint = endpoint
        self.mock = MockTrajectoryPlanner(geometry, idm, planner_dt, v_max)
        self.geometry = geometry

    def predict(
        self, obs: Observation, action: MetaAction, neighbors: list[KnowledgeRecord]
    ) -> tuple[TrajectoryPrediction, PlannerCallInfo]:
        bundle = build_prompt(obs, neighbors, action)
        try:
            result = request_prediction(self.endpoint, bundle)
            pred = parse_prediction(result.body)
        except PlannerError as exc:
            log.warning("live planner failed (%s); falling back to mock", exc)
            pred, _ = self.mock.predict(obs, action, neighbors)
            return pred, PlannerCallInfo(
                bundle.sha256(), 0.0, "live", fallback=True, reject_reason=str(exc)
            )
        verdict = validate_waypoints(
            pred, obs, self.geometry, self.mock.v_max, self.mock.planner_dt
        )
        if not verdict.accepted:
            log.warning("live prediction rejected (%s); falling back to mock", verdict.reason)
            pred, _ = self.mock.predict(obs, action, neighbors)
            return pred, PlannerCallInfo(
                bundle.sha256(),
                result.latency_s,
                "live",
                fallback=True,
                reject_reason=verdict.reason,
            )
        return pred, PlannerCallInfo(bundle.sha256(), result.latency_s, "live")
