"""Trajectory table ingestion, validation, and synthetic scenario generation.

Tables follow the highD tracks-file column subset below, one row per vehicle
per frame at a fixed frame rate (default 25 Hz). A JSON sidecar next to each
CSV declares the frame rate and lane geometry. Sight distances are
center-to-center; the sentinel 1000.0 m means "no vehicle in sight".
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

from .kinematics import BodyRect, LaneGeometry, rect_overlap

COLUMNS = (
    "frame",
    "id",
    "x",
    "y",
    "width",
    "height",
    "xVelocity",
    "yVelocity",
    "xAcceleration",
    "yAcceleration",
    "frontSightDistance",
    "backSightDistance",
    "precedingXVelocity",
    "laneId",
)

SIGHT_SENTINEL = 1000.0
DEFAULT_FRAME_RATE = 25.0


class DatasetError(ValueError):
    """Malformed trajectory data; the message names the offending row/column."""


@dataclass(frozen=True)
class TrackRow:
    """One vehicle at one frame.

    ``width`` is the body extent along x (highD convention: width=length along
    road, height=lateral extent). Velocities m/s, accelerations m/s².
    """

    frame: int
    vehicle_id: int
    x: float
    y: float
    width: float
    height: float
    v_x: float
    v_y: float
    a_x: float
    a_y: float
    front_sight_distance: float
    back_sight_distance: float
    preceding_x_velocity: float
    lane_id: int

    def validate(self):
        if self.frame < 0:
            raise DatasetError(f"vehicle {self.vehicle_id}: frame {self.frame} < 0")
        if self.width <= 0 or self.height <= 0:
            raise DatasetError(
                f"vehicle {self.vehicle_id} frame {self.frame}: non-positive body dims"
            )
        if self.lane_id < 1:
            raise DatasetError(
                f"vehicle {self.vehicle_id} frame {self.frame}: laneId {self.lane_id} < 1"
            )
        if self.front_sight_distance < 0 or self.back_sight_distance < 0:
            raise DatasetError(
                f"vehicle {self.vehicle_id} frame {self.frame}: negative sight distance"
            )

    def body(self) -> BodyRect:
        return BodyRect(self.x, self.y, self.width, self.height)


@dataclass(frozen=True)
class RecordingMeta:
    """Recording-level metadata carried by the JSON sidecar."""

    frame_rate_hz: float
    geometry: LaneGeometry
    recording_id: str = "synthetic"

    @property
    def dt(self) -> float:
        return 1.0 / self.frame_rate_hz

    def to_dict(self) -> dict:
        return {
            "frame_rate_hz": self.frame_rate_hz,
            "lane_boundaries": list(self.geometry.boundaries),
            "lane_centers": list(self.geometry.centers),
            "recording_id": self.recording_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RecordingMeta":
        return cls(
            frame_rate_hz=float(d["frame_rate_hz"]),
            geometry=LaneGeometry(
                tuple(float(b) for b in d["lane_boundaries"]),
                tuple(float(c) for c in d["lane_centers"]),
            ),
            recording_id=str(d.get("recording_id", "synthetic")),
        )


class TrackTable:
    """Immutable-by-convention trajectory table indexed by vehicle and by frame.

    ``n_frames`` pins the recording length explicitly (needed for empty-traffic
    tables); otherwise the length derives from the rows.
    """

    def __init__(self, rows: list[TrackRow], meta: RecordingMeta, n_frames: int | None = None):
        self.meta = meta
        self._n_frames = n_frames
        self._by_vehicle: dict[int, list[TrackRow]] = {}
        self._by_frame: dict[int, list[TrackRow]] = {}
        for row in rows:
            self._by_vehicle.setdefault(row.vehicle_id, []).append(row)
            self._by_frame.setdefault(row.frame, []).append(row)
        for vid in self._by_vehicle:
            self._by_vehicle[vid].sort(key=lambda r: r.frame)
        for f in self._by_frame:
            self._by_frame[f].sort(key=lambda r: r.vehicle_id)
        self._validate()

    def _validate(self):
        for vid, rows in self._by_vehicle.items():
            for prev, cur in zip(rows, rows[1:]):
                if cur.frame == prev.frame:
                    raise DatasetError(f"vehicle {vid}: duplicate frame {cur.frame}")
                if cur.frame != prev.frame + 1:
                    raise DatasetError(
                        f"vehicle {vid}: frame gap between {prev.frame} and {cur.frame}"
                    )
            for row in rows:
                row.validate()
                if row.lane_id > self.meta.geometry.lane_count:
                    raise DatasetError(
                        f"vehicle {vid} frame {row.frame}: laneId {row.lane_id} "
                        f"not declared in metadata ({self.meta.geometry.lane_count} lanes)"
                    )

    @property
    def vehicle_ids(self) -> list[int]:
        return sorted(self._by_vehicle)

    @property
    def min_frame(self) -> int:
        return min(self._by_frame) if self._by_frame else 0

    @property
    def max_frame(self) -> int:
        if self._n_frames is not None:
            return self._n_frames - 1
        return max(self._by_frame) if self._by_frame else -1

    def vehicle_rows(self, vehicle_id: int) -> list[TrackRow]:
        return self._by_vehicle[vehicle_id]

    def rows_at(self, frame: int) -> list[TrackRow]:
        return self._by_frame.get(frame, [])

    def all_rows(self) -> list[TrackRow]:
        out = []
        for f in sorted(self._by_frame):
            out.extend(self._by_frame[f])
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, TrackTable):
            return NotImplemented
        return self.all_rows() == other.all_rows() and self.meta == other.meta


def frame_snapshot(table: TrackTable, frame: int) -> list[TrackRow]:
    """Rows present at one frame, sorted by vehicle id."""
    if frame < table.min_frame or frame > table.max_frame:
        raise DatasetError(
            f"frame {frame} outside recording range [{table.min_frame}, {table.max_frame}]"
        )
    return list(table.rows_at(frame))


def _sidecar_path(path: Path) -> Path:
    return path.with_suffix(path.suffix + ".meta.json")


def load_tracks(path: str | Path, meta: RecordingMeta | None = None) -> TrackTable:
    """Load and validate a tracks CSV; metadata comes from the sidecar unless given."""
    path = Path(path)
    n_frames = None
    if meta is None:
        sidecar = _sidecar_path(path)
        if not sidecar.exists():
            raise DatasetError(f"no metadata sidecar at {sidecar} and none supplied")
        meta_dict = json.loads(sidecar.read_text())
        n_frames = meta_dict.pop("n_frames", None)
        meta = RecordingMeta.from_dict(meta_dict)

    rows: list[TrackRow] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        if tuple(header) != COLUMNS:
            missing = [c for c in COLUMNS if c not in header]
            raise DatasetError(
                f"{path}: header mismatch; missing/renamed columns: {missing or header}"
            )
        for line_no, rec in enumerate(reader, start=2):
            if len(rec) != len(COLUMNS):
                raise DatasetError(f"{path} line {line_no}: expected {len(COLUMNS)} cells")
            vals = {}
            for col, cell in zip(COLUMNS, rec):
                try:
                    vals[col] = int(cell) if col in ("frame", "id", "laneId") else float(cell)
                except ValueError:
                    raise DatasetError(
                        f"{path} line {line_no}: non-numeric value {cell!r} in column {col}"
                    ) from None
                if col not in ("frame", "id", "laneId") and not math.isfinite(vals[col]):
                    raise DatasetError(
                        f"{path} line {line_no}: non-finite value in column {col}"
                    )
            rows.append(
                TrackRow(
                    frame=vals["frame"],
                    vehicle_id=vals["id"],
                    x=vals["x"],
                    y=vals["y"],
                    width=vals["width"],
                    height=vals["height"],
                    v_x=vals["xVelocity"],
                    v_y=vals["yVelocity"],
                    a_x=vals["xAcceleration"],
                    a_y=vals["yAcceleration"],
                    front_sight_distance=vals["frontSightDistance"],
                    back_sight_distance=vals["backSightDistance"],
                    preceding_x_velocity=vals["precedingXVelocity"],
                    lane_id=vals["laneId"],
                )
            )
    return TrackTable(rows, meta, n_frames=n_frames)


def write_tracks(table: TrackTable, path: str | Path):
    """Write a table and its metadata sidecar; floats use repr for exact round-trips."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(COLUMNS)
        for r in table.all_rows():
            writer.writerow(
                [
                    r.frame,
                    r.vehicle_id,
                    repr(r.x),
                    repr(r.y),
                    repr(r.width),
                    repr(r.height),
                    repr(r.v_x),
                    repr(r.v_y),
                    repr(r.a_x),
                    repr(r.a_y),
                    repr(r.front_sight_distance),
                    repr(r.back_sight_distance),
                    repr(r.preceding_x_velocity),
                    r.lane_id,
                ]
            )
    sidecar = table.meta.to_dict()
    sidecar["n_frames"] = table.max_frame + 1
    _sidecar_path(path).write_text(json.dumps(sidecar, indent=2) + "\n")


@dataclass(frozen=True)
class VehicleScript:
    """Scripted behavior of one synthetic vehicle.

    ``accel_segments`` maps start frames to longitudinal accelerations; each
    value holds from its frame until the next breakpoint. Vehicles stay in
    their lane at its center.
    """

    vehicle_id: int
    lane_id: int
    start_x: float
    speed: float
    length: float = 5.0
    width: float = 2.0
    accel_segments: tuple[tuple[int, float], ...] = ()


@dataclass(frozen=True)
class ScenarioSpec:
    """Deterministic synthetic scenario: geometry, duration, and vehicle scripts."""

    lane_count: int
    lane_width: float
    duration: int
    vehicles: tuple[VehicleScript, ...]
    seed: int = 0
    frame_rate_hz: float = DEFAULT_FRAME_RATE
    y_min: float = 72.0
    recording_id: str = "synthetic"

    def __post_init__(self):
        if self.lane_count < 2:
            raise ValueError("lane_count must be >= 2")
        if self.duration < 1:
            raise ValueError("duration must be >= 1")

    def geometry(self) -> LaneGeometry:
        return LaneGeometry.evenly_spaced(
            self.y_min, self.y_min + self.lane_count * self.lane_width, self.lane_count
        )

    def to_dict(self) -> dict:
        return {
            "lane_count": self.lane_count,
            "lane_width": self.lane_width,
            "duration": self.duration,
            "seed": self.seed,
            "frame_rate_hz": self.frame_rate_hz,
            "y_min": self.y_min,
            "recording_id": self.recording_id,
            "vehicles": [
                {
                    "vehicle_id": v.vehicle_id,
                    "lane_id": v.lane_id,
                    "start_x": v.start_x,
                    "speed": v.speed,
                    "length": v.length,
                    "width": v.width,
                    "accel_segments": [list(seg) for seg in v.accel_segments],
                }
                for v in self.vehicles
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        return cls(
            lane_count=int(d["lane_count"]),
            lane_width=float(d["lane_width"]),
            duration=int(d["duration"]),
            vehicles=tuple(
                VehicleScript(
                    vehicle_id=int(v["vehicle_id"]),
                    lane_id=int(v["lane_id"]),
                    start_x=float(v["start_x"]),
                    speed=float(v["speed"]),
                    length=float(v["length"]),
                    width=float(v["width"]),
                    accel_segments=tuple(
                        (int(f), float(a)) for f, a in v.get("accel_segments", [])
                    ),
                )
                for v in d["vehicles"]
            ),
            seed=int(d.get("seed", 0)),
            frame_rate_hz=float(d.get("frame_rate_hz", DEFAULT_FRAME_RATE)),
            y_min=float(d.get("y_min", 72.0)),
            recording_id=str(d.get("recording_id", "synthetic")),
        )


def _accel_at(script: VehicleScript, frame: int) -> float:
    a = 0.0
    for start, value in script.accel_segments:
        if frame >= start:
            a = value
        else:
            break
    return a


def synth_scenario(spec: ScenarioSpec) -> TrackTable:
    """Generate a trajectory table from a scenario spec.

    Vehicles follow exact constant-acceleration kinematics between frames and
    hold their lane center. Raises on overlapping initial placements.
    """
    geometry = spec.geometry()
    meta = RecordingMeta(spec.frame_rate_hz, geometry, spec.recording_id)
    dt = meta.dt

    ids = [v.vehicle_id for v in spec.vehicles]
    if len(ids) != len(set(ids)):
        raise DatasetError("duplicate vehicle ids in scenario spec")

    bodies = []
    for v in spec.vehicles:
        bodies.append((v.vehicle_id, BodyRect(v.start_x, geometry.lane_center(v.lane_id), v.length, v.width)))
    for i, (id_a, a) in enumerate(bodies):
        for id_b, b in bodies[i + 1 :]:
            if rect_overlap(a, b):
                raise DatasetError(
                    f"initial placements of vehicles {id_a} and {id_b} overlap at frame 0"
                )

    # integrate each script, then fill per-frame sight columns lane by lane
    states: dict[int, tuple[float, float]] = {
        v.vehicle_id: (v.start_x, v.speed) for v in spec.vehicles
    }
    partial: list[dict] = []
    for frame in range(spec.duration):
        for v in spec.vehicles:
            x, speed = states[v.vehicle_id]
            a = _accel_at(v, frame)
            partial.append(
                {
                    "frame": frame,
                    "vehicle": v,
                    "x": x,
                    "v": speed,
                    "a": a,
                    "y": geometry.lane_center(v.lane_id),
                }
            )
            states[v.vehicle_id] = (x + speed * dt + 0.5 * a * dt * dt, max(0.0, speed + a * dt))

    rows: list[TrackRow] = []
    by_frame_lane: dict[tuple[int, int], list[dict]] = {}
    for p in partial:
        by_frame_lane.setdefault((p["frame"], p["vehicle"].lane_id), []).append(p)
    for group in by_frame_lane.values():
        group.sort(key=lambda q: q["x"])
        for idx, p in enumerate(group):
            front = group[idx + 1] if idx + 1 < len(group) else None
            back = group[idx - 1] if idx > 0 else None
            rows.append(
                TrackRow(
                    frame=p["frame"],
                    vehicle_id=p["vehicle"].vehicle_id,
                    x=p["x"],
                    y=p["y"],
                    width=p["vehicle"].length,
                    height=p["vehicle"].width,
                    v_x=p["v"],
                    v_y=0.0,
                    a_x=p["a"],
                    a_y=0.0,
                    front_sight_distance=(front["x"] - p["x"]) if front else SIGHT_SENTINEL,
                    back_sight_distance=(p["x"] - back["x"]) if back else SIGHT_SENTINEL,
                    preceding_x_velocity=front["v"] if front else 0.0,
                    lane_id=p["vehicle"].lane_id,
                )
            )
    return TrackTable(rows, meta, n_frames=spec.duration)
