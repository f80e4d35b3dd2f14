"""Episodic highway world: replayed traffic, ego stepped by controllers,
observation building, reward, collision and termination logic.

Recorded traffic is replayed verbatim from the track table and never reacts
to the ego. One environment step advances exactly one table frame.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .controllers import (
    DEFAULT_LATERAL_GAINS,
    GapClosedError,
    IdmParams,
    PidGains,
    PidState,
    idm_accel,
    pid_step,
)
from .dataset_io import SIGHT_SENTINEL, TrackRow, TrackTable
from .kinematics import BodyRect, LaneGeometry, VehicleState, rect_overlap, step_unicycle


class MetaAction(enum.IntEnum):
    """High-level lane command; integer encoding is part of the contract."""

    LLC = 0
    RLC = 1
    LK = 2


ACTION_NAMES = {MetaAction.LLC: "LLC", MetaAction.RLC: "RLC", MetaAction.LK: "LK"}
ACTIONS_BY_NAME = {v: k for k, v in ACTION_NAMES.items()}


@dataclass(frozen=True)
class SlotObs:
    """One surrounding-vehicle slot: relative x distance (>= 0), the vehicle's
    longitudinal speed, and a presence flag. Absent slots carry the sentinel."""

    distance: float = SIGHT_SENTINEL
    v_x: float = 0.0
    present: bool = False


@dataclass(frozen=True)
class Observation:
    ego: VehicleState
    lane_id: int
    lane_count: int
    ego_front: SlotObs
    ego_back: SlotObs
    left_front: SlotObs
    left_back: SlotObs
    right_front: SlotObs
    right_back: SlotObs
    front_sight_distance: float
    back_sight_distance: float
    preceding_x_velocity: float

    def slots(self) -> tuple[SlotObs, ...]:
        return (
            self.ego_front,
            self.ego_back,
            self.left_front,
            self.left_back,
            self.right_front,
            self.right_back,
        )


@dataclass(frozen=True)
class RewardWeights:
    speed: float = 1.0
    collision: float = 10.0
    lane_change: float = 0.1


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.04
    episode_frames: int = 250
    ego_length: float = 5.0
    ego_width: float = 2.0
    v_max: float = 50.0
    reward: RewardWeights = RewardWeights()
    seed: int = 0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.episode_frames < 1:
            raise ValueError("episode_frames must be >= 1")

    def to_dict(self) -> dict:
        return {
            "dt": self.dt,
            "episode_frames": self.episode_frames,
            "ego_length": self.ego_length,
            "ego_width": self.ego_width,
            "v_max": self.v_max,
            "reward": {
                "speed": self.reward.speed,
                "collision": self.reward.collision,
                "lane_change": self.reward.lane_change,
            },
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        d = dict(d)
        if "reward" in d:
            d["reward"] = RewardWeights(**d["reward"])
        return cls(**d)


@dataclass(frozen=True)
class EpisodeSpec:
    """Ego spawn: table start frame plus lane, longitudinal position, speed."""

    start_frame: int = 0
    ego_lane: int = 1
    ego_x: float = 0.0
    ego_v: float = 25.0

    def to_dict(self) -> dict:
        return {
            "start_frame": self.start_frame,
            "ego_lane": self.ego_lane,
            "ego_x": self.ego_x,
            "ego_v": self.ego_v,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EpisodeSpec":
        return cls(**d)


class SpawnError(ValueError):
    """Ego spawn overlaps recorded traffic or lies outside the recording."""


class EpisodeDoneError(RuntimeError):
    """step() called on a finished episode."""


def compute_reward(
    prev: Observation,
    action: MetaAction,
    next_obs: Observation,
    collided: bool,
    weights: RewardWeights = RewardWeights(),
    v_desired: float = 130.0 / 3.6,
) -> float:
    """Speed-proportional reward with collision and lane-change penalties."""
    r = weights.speed * (next_obs.ego.v_x / v_desired)
    if collided:
        r -= weights.collision
    if action != MetaAction.LK:
        r -= weights.lane_change
    return r


def normalize(obs: Observation, v_max: float, geometry: LaneGeometry) -> np.ndarray:
    """Fixed-order 25-entry feature vector, every entry clipped to [-1, 1].

    Order: [v_x/v_max, v_y/v_max, lane_id/lane_count, y scaled over the road
    span to [-1, 1]] then six slots as (distance/1000, v_x/v_max, present) in
    the order (ego front, ego back, left front, left back, right front,
    right back), then [front sight/1000, back sight/1000, preceding v/v_max].
    """
    span = geometry.y_max - geometry.y_min
    vec = np.empty(25)
    vec[0] = obs.ego.v_x / v_max
    vec[1] = obs.ego.v_y / v_max
    vec[2] = obs.lane_id / obs.lane_count
    vec[3] = 2.0 * (obs.ego.y - geometry.y_min) / span - 1.0
    i = 4
    for slot in obs.slots():
        vec[i] = min(slot.distance, SIGHT_SENTINEL) / SIGHT_SENTINEL
        vec[i + 1] = slot.v_x / v_max
        vec[i + 2] = 1.0 if slot.present else 0.0
        i += 3
    vec[22] = min(obs.front_sight_distance, SIGHT_SENTINEL) / SIGHT_SENTINEL
    vec[23] = min(obs.back_sight_distance, SIGHT_SENTINEL) / SIGHT_SENTINEL
    vec[24] = obs.preceding_x_velocity / v_max
    return np.clip(vec, -1.0, 1.0)


def _nearest_slots(rows: list[TrackRow], lane_id: int, ego_x: float) -> tuple[SlotObs, SlotObs]:
    front = None
    back = None
    for r in rows:
        if r.lane_id != lane_id:
            continue
        if r.x >= ego_x:
            if front is None or r.x < front.x:
                front = r
        else:
            if back is None or r.x > back.x:
                back = r
    front_slot = SlotObs(front.x - ego_x, front.v_x, True) if front else SlotObs()
    back_slot = SlotObs(ego_x - back.x, back.v_x, True) if back else SlotObs()
    return front_slot, back_slot


class HighwayEnv:
    """Single-ego episodic environment over one replayed track table."""

    def __init__(
        self,
        table: TrackTable,
        config: SimConfig = SimConfig(),
        idm: IdmParams = IdmParams(),
        lateral_gains: PidGains = DEFAULT_LATERAL_GAINS,
    ):
        if abs(config.dt - table.meta.dt) > 1e-9:
            raise ValueError(
                f"config dt {config.dt} does not match table frame step {table.meta.dt}"
            )
        self.table = table
        self.config = config
        self.idm = idm
        self.lateral_gains = lateral_gains
        self.geometry = table.meta.geometry
        self._started = False

    # -- episode lifecycle -------------------------------------------------

    def reset(self, spec: EpisodeSpec) -> Observation:
        g = self.geometry
        if spec.start_frame < self.table.min_frame or spec.start_frame > self.table.max_frame:
            raise SpawnError(f"start_frame {spec.start_frame} outside recording")
        center = g.lane_center(spec.ego_lane)
        self.ego = VehicleState(x=spec.ego_x, y=center, v_x=spec.ego_v, v_y=0.0)
        ego_rect = BodyRect(spec.ego_x, center, self.config.ego_length, self.config.ego_width)
        for row in self.table.rows_at(spec.start_frame):
            if rect_overlap(ego_rect, row.body()):
                raise SpawnError(
                    f"ego spawn overlaps vehicle {row.vehicle_id} at frame {spec.start_frame}"
                )
        self.spec = spec
        self.frame = spec.start_frame
        self.steps = 0
        self.done = False
        self.collided = False
        self.cause: str | None = None
        self.target_lane = spec.ego_lane
        self._pid = PidState()
        self._started = True
        self._end_frame = min(
            self.table.max_frame, spec.start_frame + self.config.episode_frames
        )
        return self.observe()

    # -- observations -------------------------------------------------------

    def observe(self) -> Observation:
        g = self.geometry
        lane_id = g.lane_of(self.ego.y) if g.contains(self.ego.y) else self.target_lane
        rows = self.table.rows_at(self.frame)
        ego_front, ego_back = _nearest_slots(rows, lane_id, self.ego.x)
        if lane_id > 1:
            left_front, left_back = _nearest_slots(rows, lane_id - 1, self.ego.x)
        else:
            left_front, left_back = SlotObs(), SlotObs()
        if lane_id < g.lane_count:
            right_front, right_back = _nearest_slots(rows, lane_id + 1, self.ego.x)
        else:
            right_front, right_back = SlotObs(), SlotObs()
        return Observation(
            ego=self.ego,
            lane_id=lane_id,
            lane_count=g.lane_count,
            ego_front=ego_front,
            ego_back=ego_back,
            left_front=left_front,
            left_back=left_back,
            right_front=right_front,
            right_back=right_back,
            front_sight_distance=ego_front.distance,
            back_sight_distance=ego_back.distance,
            preceding_x_velocity=ego_front.v_x if ego_front.present else 0.0,
        )

    def normalized_observation(self) -> np.ndarray:
        return normalize(self.observe(), self.config.v_max, self.geometry)

    # -- stepping ------------------------------------------------------------

    def step(self, action: MetaAction) -> tuple[Observation, float, bool, dict]:
        """Advance one frame with IDM longitudinal and lane-center PID lateral
        control; the action only moves the latched target lane."""
        self._require_live()
        prev = self.observe()
        self._update_target(action, prev.lane_id)
        a_y = self._lateral_accel()
        a_x = self._longitudinal_accel(prev)
        return self._advance(action, prev, a_x, a_y)

    def step_with_accel(
        self, action: MetaAction, a_x: float, a_y: float
    ) -> tuple[Observation, float, bool, dict]:
        """Advance one frame under caller-supplied accelerations (waypoint
        tracking path); target-lane bookkeeping still follows the action."""
        self._require_live()
        prev = self.observe()
        self._update_target(action, prev.lane_id)
        return self._advance(action, prev, a_x, a_y)

    def _require_live(self):
        if not self._started:
            raise RuntimeError("reset() must be called before step()")
        if self.done:
            raise EpisodeDoneError("episode is done; reset before stepping again")

    def _update_target(self, action: MetaAction, current_lane: int):
        if action == MetaAction.LLC and current_lane > 1:
            self.target_lane = current_lane - 1
        elif action == MetaAction.RLC and current_lane < self.geometry.lane_count:
            self.target_lane = current_lane + 1
        # LK (or a change off the road edge) keeps the latched target

    def _lateral_accel(self) -> float:
        error = self.geometry.lane_center(self.target_lane) - self.ego.y
        a_y, self._pid = pid_step(self.lateral_gains, self._pid, error, self.config.dt)
        return a_y

    def _longitudinal_accel(self, obs: Observation) -> float:
        v = max(0.0, self.ego.v_x)
        if obs.ego_front.present:
            lead = obs.ego_front
            # slot distance is center-to-center; IDM wants the bumper gap
            leader_len = self._leader_length(obs.lane_id)
            gap = lead.distance - (self.config.ego_length + leader_len) / 2.0
            try:
                return idm_accel(self.idm, v, lead.v_x, gap)
            except GapClosedError:
                return -self.idm.b_max
        return idm_accel(self.idm, v, v, 1e9)

    def _leader_length(self, lane_id: int) -> float:
        best = None
        for r in self.table.rows_at(self.frame):
            if r.lane_id == lane_id and r.x >= self.ego.x:
                if best is None or r.x < best.x:
                    best = r
        return best.width if best else self.config.ego_length

    def _advance(self, action, prev, a_x, a_y):
        cfg = self.config
        ego = step_unicycle(self.ego, a_x, a_y, cfg.dt)
        if ego.v_x < 0.0:
            # replayed highway traffic never reverses; neither does the ego
            ego = VehicleState(ego.x, ego.y, 0.0, ego.v_y, ego.a_x, ego.a_y)
        self.ego = ego
        self.frame += 1
        self.steps += 1

        collided = False
        ego_rect = BodyRect(ego.x, ego.y, cfg.ego_length, cfg.ego_width)
        for row in self.table.rows_at(self.frame):
            if rect_overlap(ego_rect, row.body()):
                collided = True
                break
        exited = not self.geometry.contains(ego.y)

        if collided:
            self.done, self.collided, self.cause = True, True, "collision"
        elif exited:
            self.done, self.cause = True, "road_exit"
        elif self.frame >= self._end_frame:
            self.done, self.cause = True, "table_end"

        obs = self.observe()
        reward = compute_reward(
            prev, action, obs, collided or exited, cfg.reward, self.idm.v_desired
        )
        info = {
            "frame": self.frame,
            "cause": self.cause,
            "collision": collided,
            "road_exit": exited,
            "target_lane": self.target_lane,
        }
        return obs, reward, self.done, info
