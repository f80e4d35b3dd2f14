"""Low-level motion control: lateral PID, longitudinal IDM, and waypoint tracking.

The PID discretization uses a rectangle-rule integral with anti-windup clamp
and a backward-difference derivative (zero on the first step). The IDM output
is clamped to [-b_max, a_max].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .kinematics import VehicleState


@dataclass(frozen=True)
class PidGains:
    k_p: float
    k_i: float
    k_d: float
    integral_clamp: float = 10.0
    output_clamp: float = 4.0

    def __post_init__(self):
        if self.k_p < 0 or self.k_i < 0 or self.k_d < 0:
            raise ValueError("gains must be non-negative")
        if self.integral_clamp <= 0 or self.output_clamp <= 0:
            raise ValueError("clamps must be positive")


@dataclass(frozen=True)
class PidState:
    integral: float = 0.0
    prev_error: float | None = None


# Retuned so a 4 m lane change settles within 0.1 m in ~3.2 s at dt=0.04
# (soft defaults; overridable through the experiment config).
DEFAULT_LATERAL_GAINS = PidGains(k_p=2.5, k_i=0.02, k_d=3.0)
# Waypoint spacing already encodes the speed plan; the longitudinal loop only
# trims drift, so anything beyond a weak proportional term causes runaway.
DEFAULT_WAYPOINT_X_GAINS = PidGains(k_p=0.02, k_i=0.0, k_d=0.0)


def pid_step(gains: PidGains, st: PidState, error: float, dt: float) -> tuple[float, PidState]:
    """One discrete PID update; returns (acceleration command, next state)."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    integral = _clip(st.integral + error * dt, gains.integral_clamp)
    prev = error if st.prev_error is None else st.prev_error
    u = gains.k_p * error + gains.k_i * integral + gains.k_d * (error - prev) / dt
    return _clip(u, gains.output_clamp), PidState(integral=integral, prev_error=error)


def _clip(v: float, bound: float) -> float:
    return max(-bound, min(bound, v))


@dataclass(frozen=True)
class IdmParams:
    """Car-following parameters; defaults follow the standard highway set."""

    s_0: float = 10.0
    v_desired: float = 130.0 / 3.6
    a_max: float = 3.0
    b_max: float = 5.0
    b_safe: float = 4.0
    time_headway: float = 1.5

    def __post_init__(self):
        for name in ("s_0", "v_desired", "a_max", "b_max", "b_safe", "time_headway"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")


class GapClosedError(ValueError):
    """Gap to the leader is non-positive; caller should emergency-brake at -b_max."""


def desired_gap(p: IdmParams, v: float, v_lead: float) -> float:
    """Speed-dependent safe following distance s*."""
    dynamic = v * p.time_headway + v * (v - v_lead) / (2.0 * math.sqrt(p.a_max * p.b_safe))
    return p.s_0 + max(0.0, dynamic)


def idm_accel(p: IdmParams, v: float, v_lead: float, s: float) -> float:
    """Longitudinal acceleration toward v_desired while keeping the desired gap.

    ``s`` is the bumper gap to the leader; pass a large value (no leader) for
    free-road behavior.
    """
    if v < 0:
        raise ValueError(f"speed must be non-negative, got {v}")
    if s <= 0:
        raise GapClosedError(f"gap {s} <= 0: already overlapping the leader")
    a = p.a_max * (1.0 - (v / p.v_desired) ** 4 - (desired_gap(p, v, v_lead) / s) ** 2)
    return _clip_range(a, -p.b_max, p.a_max)


def _clip_range(v: float, lo: float, hi: float) -> float:
    return max(lo, min(hi, v))


class EmptyPlanError(ValueError):
    """Waypoint tracker asked to follow an empty waypoint list."""


class WaypointTracker:
    """Steers toward a short waypoint sequence with two independent PID loops.

    A waypoint is consumed once the vehicle comes within ``capture_radius`` of
    it; the final waypoint stays active as a holding target until a new plan
    replaces it.
    """

    def __init__(
        self,
        gains_x: PidGains = DEFAULT_WAYPOINT_X_GAINS,
        gains_y: PidGains = DEFAULT_LATERAL_GAINS,
        capture_radius: float = 0.5,
    ):
        self.gains_x = gains_x
        self.gains_y = gains_y
        self.capture_radius = capture_radius
        self._waypoints: list[tuple[float, float]] = []
        self._index = 0
        self._st_x = PidState()
        self._st_y = PidState()

    def set_plan(self, waypoints: list[tuple[float, float]]):
        if not waypoints:
            raise EmptyPlanError("waypoint list is empty")
        self._waypoints = list(waypoints)
        self._index = 0

    @property
    def active_waypoint(self) -> tuple[float, float]:
        if not self._waypoints:
            raise EmptyPlanError("no plan set")
        return self._waypoints[self._index]

    @property
    def remaining(self) -> int:
        return len(self._waypoints) - self._index

    def step(self, state: VehicleState, dt: float) -> tuple[float, float]:
        """Advance capture logic and return (a_x, a_y) toward the active waypoint."""
        wx, wy = self.active_waypoint
        while (
            self._index < len(self._waypoints) - 1
            and math.hypot(wx - state.x, wy - state.y) < self.capture_radius
        ):
            self._index += 1
            wx, wy = self._waypoints[self._index]
        a_x, self._st_x = pid_step(self.gains_x, self._st_x, wx - state.x, dt)
        a_y, self._st_y = pid_step(self.gains_y, self._st_y, wy - state.y, dt)
        return a_x, a_y


def track_waypoints(
    state: VehicleState,
    waypoints: list[tuple[float, float]],
    gains_x: PidGains,
    gains_y: PidGains,
    st_x: PidState,
    st_y: PidState,
    dt: float,
    capture_radius: float = 0.5,
) -> tuple[float, float, list[tuple[float, float]], PidState, PidState]:
    """Functional single step of waypoint tracking.

    Consumes captured waypoints (except the last, which holds) and returns
    (a_x, a_y, remaining waypoints, next PID states).
    """
    if not waypoints:
        raise EmptyPlanError("waypoint list is empty")
    remaining = list(waypoints)
    while len(remaining) > 1 and math.hypot(
        remaining[0][0] - state.x, remaining[0][1] - state.y
    ) < capture_radius:
        remaining.pop(0)
    wx, wy = remaining[0]
    a_x, st_x = pid_step(gains_x, st_x, wx - state.x, dt)
    a_y, st_y = pid_step(gains_y, st_y, wy - state.y, dt)
    return a_x, a_y, remaining, st_x, st_y
