import numpy as np
import pytest

from highwaysim.config import ExperimentConfig
from highwaysim.controllers import IdmParams
from highwaysim.dataset_io import RecordingMeta, ScenarioSpec, TrackTable, VehicleScript, synth_scenario
from highwaysim.environment import EpisodeSpec, HighwayEnv, SimConfig
from highwaysim.kinematics import LaneGeometry


@pytest.fixture
def geometry():
    # 3 lanes of 4 m on [92, 104]; centers 94, 98, 102
    return LaneGeometry.evenly_spaced(92.0, 104.0, 3)


@pytest.fixture
def meta(geometry):
    return RecordingMeta(25.0, geometry, "testrec")


@pytest.fixture
def cfg():
    return ExperimentConfig()


def make_scenario(vehicles, duration=120, seed=0):
    return ScenarioSpec(
        lane_count=3,
        lane_width=4.0,
        duration=duration,
        vehicles=tuple(vehicles),
        seed=seed,
        y_min=92.0,
        recording_id="testrec",
    )


@pytest.fixture
def leader_scenario():
    # one slow leader 50 m ahead of the default ego spawn, in the ego lane
    return make_scenario([VehicleScript(1, 2, 50.0, 20.0)])


@pytest.fixture
def leader_env(leader_scenario, cfg):
    env = HighwayEnv(synth_scenario(leader_scenario), SimConfig(episode_frames=100), cfg.idm, cfg.lateral_gains)
    env.reset(EpisodeSpec(start_frame=0, ego_lane=2, ego_x=0.0, ego_v=25.0))
    return env
