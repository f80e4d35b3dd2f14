"""Seeded synthetic scenario generators.

Two families: ``slow_leader_spec`` (training/evaluation distribution: one slow
leader ahead of the ego lane, light adjacent traffic) and ``dense_matrix_spec``
(harder out-of-distribution sweep: closer leader, boxed-in adjacent lanes).
Every generator is a pure function of its seed.
"""

from __future__ import annotations

import numpy as np

from .dataset_io import ScenarioSpec, VehicleScript
from .environment import EpisodeSpec

LANE_COUNT = 3
LANE_WIDTH = 4.0
Y_MIN = 92.0
EGO_LANE = 2
EGO_SPEED = 25.0


def slow_leader_spec(seed: int, duration: int = 260) -> ScenarioSpec:
    """Slow leader ahead in the ego lane; adjacent lanes randomly occupied."""
    rng = np.random.default_rng(seed)
    vehicles = [
        VehicleScript(
            vehicle_id=1,
            lane_id=EGO_LANE,
            start_x=float(rng.uniform(45.0, 65.0)),
            speed=float(rng.uniform(12.0, 16.0)),
        )
    ]
    vid = 2
    for lane in (EGO_LANE - 1, EGO_LANE + 1):
        if rng.random() < 0.7:  # a vehicle near the ego, blocking casual changes
            vehicles.append(
                VehicleScript(
                    vehicle_id=vid,
                    lane_id=lane,
                    start_x=float(rng.uniform(-20.0, 20.0)),
                    speed=float(rng.uniform(16.0, 24.0)),
                )
            )
            vid += 1
        if rng.random() < 0.5:  # and sometimes one further downstream
            vehicles.append(
                VehicleScript(
                    vehicle_id=vid,
                    lane_id=lane,
                    start_x=float(rng.uniform(70.0, 120.0)),
                    speed=float(rng.uniform(20.0, 28.0)),
                )
            )
            vid += 1
    return ScenarioSpec(
        lane_count=LANE_COUNT,
        lane_width=LANE_WIDTH,
        duration=duration,
        vehicles=tuple(vehicles),
        seed=seed,
        y_min=Y_MIN,
        recording_id=f"slow_leader_{seed}",
    )


def dense_matrix_spec(seed: int, duration: int = 260) -> ScenarioSpec:
    """Denser sweep scenario: closer and slower leader, tighter adjacent traffic."""
    rng = np.random.default_rng(10_000 + seed)
    vehicles = [
        VehicleScript(
            vehicle_id=1,
            lane_id=EGO_LANE,
            start_x=float(rng.uniform(28.0, 45.0)),
            speed=float(rng.uniform(9.0, 13.0)),
        )
    ]
    vid = 2
    for lane in (EGO_LANE - 1, EGO_LANE + 1):
        # near-ego vehicle with a small gap, alongside or slightly behind
        if rng.random() < 0.85:
            vehicles.append(
                VehicleScript(
                    vehicle_id=vid,
                    lane_id=lane,
                    start_x=float(rng.uniform(-14.0, 10.0)),
                    speed=float(rng.uniform(14.0, 26.0)),
                )
            )
            vid += 1
        # slow blocker ahead in the adjacent lane
        if rng.random() < 0.6:
            vehicles.append(
                VehicleScript(
                    vehicle_id=vid,
                    lane_id=lane,
                    start_x=float(rng.uniform(25.0, 60.0)),
                    speed=float(rng.uniform(10.0, 16.0)),
                )
            )
            vid += 1
    return ScenarioSpec(
        lane_count=LANE_COUNT,
        lane_width=LANE_WIDTH,
        duration=duration,
        vehicles=tuple(vehicles),
        seed=seed,
        y_min=Y_MIN,
        recording_id=f"dense_{seed}",
    )


def empty_road_spec(seed: int = 0, duration: int = 260) -> ScenarioSpec:
    """No traffic at all; useful for free-road and lane-keep baselines."""
    return ScenarioSpec(
        lane_count=LANE_COUNT,
        lane_width=LANE_WIDTH,
        duration=duration,
        vehicles=(),
        seed=seed,
        y_min=Y_MIN,
        recording_id=f"empty_{seed}",
    )


def default_episode_spec() -> EpisodeSpec:
    return EpisodeSpec(start_frame=0, ego_lane=EGO_LANE, ego_x=0.0, ego_v=EGO_SPEED)


GENERATORS = {
    "slow_leader": slow_leader_spec,
    "dense": dense_matrix_spec,
}
