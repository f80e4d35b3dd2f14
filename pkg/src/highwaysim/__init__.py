"""Highway driving simulation and planning stack.

A DQN policy proposes meta-level lane actions, a planner (live endpoint or
deterministic mock) predicts short waypoint trajectories with a textual
rationale, exact L2 retrieval supplies similar historical trajectories for
the prompt, PID/IDM controllers execute motion, and a consensus safety layer
gates lane changes.
"""

from .controllers import IdmParams, PidGains, PidState, idm_accel, pid_step
from .dataset_io import (
    ScenarioSpec,
    TrackRow,
    TrackTable,
    VehicleScript,
    frame_snapshot,
    load_tracks,
    synth_scenario,
    write_tracks,
)
from .environment import (
    EpisodeSpec,
    HighwayEnv,
    MetaAction,
    Observation,
    SimConfig,
    compute_reward,
    normalize,
)
from .experiments import (
    EpisodeLog,
    MetricsReport,
    RunMode,
    aggregate_metrics,
    compare_trajectories,
    evaluate,
    replay_episode,
    run_episode,
)
from .kinematics import BodyRect, LaneGeometry, VehicleState, rect_overlap, step_unicycle
from .llm_planner import (
    PlannerEndpoint,
    PromptBundle,
    TrajectoryPrediction,
    build_prompt,
    function_schema,
    mock_predict,
    parse_prediction,
    request_prediction,
    validate_waypoints,
)
from .neural import AdamState, Mlp, adam_update
from .retrieval import KnnIndex, KnowledgeRecord, build_index, query_knn, vectorize
from .safety_arbiter import ArbiterDecision, consensus, llm_action_query, mock_safety_action

__version__ = "0.1.0"
