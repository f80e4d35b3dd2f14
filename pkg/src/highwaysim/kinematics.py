"""Point-mass vehicle kinematics, lane geometry, and rectangle collision tests.

Coordinate convention: x grows along the road (longitudinal), y is lateral.
Lane ids ascend from 1 left to right, so a left lane change decreases y.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class VehicleState:
    """Kinematic state of one vehicle: positions, velocities, accelerations."""

    x: float
    y: float
    v_x: float
    v_y: float
    a_x: float = 0.0
    a_y: float = 0.0

    def is_finite(self) -> bool:
        return all(
            math.isfinite(v)
            for v in (self.x, self.y, self.v_x, self.v_y, self.a_x, self.a_y)
        )


@dataclass(frozen=True)
class BodyRect:
    """Axis-aligned vehicle footprint: center position plus length (x) and width (y)."""

    x: float
    y: float
    length: float
    width: float

    def __post_init__(self):
        if self.length <= 0 or self.width <= 0:
            raise ValueError(f"rect dimensions must be positive, got {self.length}x{self.width}")


def step_unicycle(state: VehicleState, a_x: float, a_y: float, dt: float) -> VehicleState:
    """Advance a vehicle state one time step under the given accelerations.

    Position integrates the pre-step velocity and velocity integrates the
    acceleration (forward Euler per axis); the returned state carries the
    applied accelerations.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if not state.is_finite() or not (math.isfinite(a_x) and math.isfinite(a_y) and math.isfinite(dt)):
        raise ValueError("non-finite input to step_unicycle")
    return VehicleState(
        x=state.x + dt * state.v_x,
        y=state.y + dt * state.v_y,
        v_x=state.v_x + dt * a_x,
        v_y=state.v_y + dt * a_y,
        a_x=a_x,
        a_y=a_y,
    )


def rect_overlap(a: BodyRect, b: BodyRect) -> bool:
    """True iff the two rectangles intersect with positive area (edge contact is not overlap)."""
    return (
        abs(a.x - b.x) < (a.length + b.length) / 2.0
        and abs(a.y - b.y) < (a.width + b.width) / 2.0
    )


class UnknownLaneError(KeyError):
    """Lane id not declared in the geometry."""


class OffRoadError(ValueError):
    """A lateral position outside the declared road bounds."""


@dataclass(frozen=True)
class LaneGeometry:
    """Lane bands on a straight road segment.

    ``boundaries`` holds lane_count+1 ascending y values; ``centers`` holds one
    center per lane. Lane ids are 1-based; lane 1 is the leftmost (lowest y).
    """

    boundaries: tuple[float, ...]
    centers: tuple[float, ...]

    def __post_init__(self):
        if len(self.boundaries) < 3:
            raise ValueError("need at least 2 lanes (3 boundaries)")
        if len(self.centers) != len(self.boundaries) - 1:
            raise ValueError("centers must have one entry per lane band")
        if any(b2 <= b1 for b1, b2 in zip(self.boundaries, self.boundaries[1:])):
            raise ValueError("boundaries must be strictly ascending")
        for k, c in enumerate(self.centers):
            if not (self.boundaries[k] < c < self.boundaries[k + 1]):
                raise ValueError(f"center {c} of lane {k + 1} lies outside its band")

    @classmethod
    def evenly_spaced(cls, y_min: float, y_max: float, lane_count: int) -> "LaneGeometry":
        if lane_count < 2:
            raise ValueError("lane_count must be >= 2")
        width = (y_max - y_min) / lane_count
        boundaries = tuple(y_min + k * width for k in range(lane_count + 1))
        centers = tuple(y_min + (k + 0.5) * width for k in range(lane_count))
        return cls(boundaries, centers)

    @property
    def lane_count(self) -> int:
        return len(self.centers)

    @property
    def y_min(self) -> float:
        return self.boundaries[0]

    @property
    def y_max(self) -> float:
        return self.boundaries[-1]

    def lane_width(self, lane_id: int) -> float:
        self._check_lane(lane_id)
        return self.boundaries[lane_id] - self.boundaries[lane_id - 1]

    def lane_center(self, lane_id: int) -> float:
        self._check_lane(lane_id)
        return self.centers[lane_id - 1]

    def lane_of(self, y: float) -> int:
        """Lane whose band contains y; interior-boundary ties go to the lower-indexed lane."""
        if y < self.y_min or y > self.y_max:
            raise OffRoadError(f"y={y} outside road bounds [{self.y_min}, {self.y_max}]")
        for lane_id in range(1, self.lane_count):
            if y <= self.boundaries[lane_id]:
                return lane_id
        return self.lane_count

    def contains(self, y: float) -> bool:
        return self.y_min <= y <= self.y_max

    def _check_lane(self, lane_id: int):
        if not 1 <= lane_id <= self.lane_count:
            raise UnknownLaneError(f"lane_id {lane_id} not in 1..{self.lane_count}")


def constant_accel_position(x0: float, v0: float, a: float, t: float) -> float:
    """Closed-form position after time t under constant acceleration (test oracle helper)."""
    return x0 + v0 * t + 0.5 * a * t * t


def body_rect(state: VehicleState, length: float, width: float) -> BodyRect:
    return BodyRect(state.x, state.y, length, width)
