"""Knowledge base of historical driving states: vectorization, exact
brute-force L2 top-k retrieval, and binary snapshot persistence.

Key-vector contract (fixed order and scaling; absolute x is deliberately
excluded so retrieval is translation-invariant along the road):

    [v_x/40, v_y/40, a_x/10, a_y/10,
     front_sight/1000, back_sight/1000, preceding_v_x/40,
     (y - own lane center) / lane width]

Payloads hold the following H=3 (x, y, v_x, v_y) tuples of the source
vehicle, sampled ``step_frames`` apart to match the planner waypoint spacing.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset_io import TrackTable
from .kinematics import LaneGeometry
from . import tensorio

KEY_WIDTH = 8
PAYLOAD_HORIZON = 3
SPEED_SCALE = 40.0
DISTANCE_SCALE = 1000.0
ACCEL_SCALE = 10.0
INDEX_VERSION = 1


@dataclass(frozen=True)
class RecordSource:
    recording_id: str
    vehicle_id: int
    frame: int


@dataclass(frozen=True)
class KnowledgeRecord:
    """Vectorized historical state plus its subsequent trajectory snippet."""

    key: np.ndarray          # shape (KEY_WIDTH,)
    payload: np.ndarray      # shape (PAYLOAD_HORIZON, 4): x, y, v_x, v_y
    source: RecordSource

    def __post_init__(self):
        if self.key.shape != (KEY_WIDTH,):
            raise ValueError(f"key width {self.key.shape} != ({KEY_WIDTH},)")
        if self.payload.shape != (PAYLOAD_HORIZON, 4):
            raise ValueError(f"payload shape {self.payload.shape} != ({PAYLOAD_HORIZON}, 4)")


def vectorize(
    v_x: float,
    v_y: float,
    a_x: float,
    a_y: float,
    front_sight_distance: float,
    back_sight_distance: float,
    preceding_x_velocity: float,
    y: float,
    lane_id: int,
    geometry: LaneGeometry,
) -> np.ndarray:
    """Scale an ego-like state into the fixed key-vector layout."""
    lane_width = geometry.lane_width(lane_id)
    return np.array(
        [
            v_x / SPEED_SCALE,
            v_y / SPEED_SCALE,
            a_x / ACCEL_SCALE,
            a_y / ACCEL_SCALE,
            front_sight_distance / DISTANCE_SCALE,
            back_sight_distance / DISTANCE_SCALE,
            preceding_x_velocity / SPEED_SCALE,
            (y - geometry.lane_center(lane_id)) / lane_width,
        ]
    )


def unscale_vector(vec: np.ndarray, lane_id: int, geometry: LaneGeometry) -> dict:
    """Inverse of vectorize given the source lane (round-trip oracle helper)."""
    lane_width = geometry.lane_width(lane_id)
    return {
        "v_x": vec[0] * SPEED_SCALE,
        "v_y": vec[1] * SPEED_SCALE,
        "a_x": vec[2] * ACCEL_SCALE,
        "a_y": vec[3] * ACCEL_SCALE,
        "front_sight_distance": vec[4] * DISTANCE_SCALE,
        "back_sight_distance": vec[5] * DISTANCE_SCALE,
        "preceding_x_velocity": vec[6] * SPEED_SCALE,
        "y": vec[7] * lane_width + geometry.lane_center(lane_id),
    }


class KnnIndex:
    """Immutable exact-scan index over uniform-width key vectors."""

    def __init__(self, keys: np.ndarray, payloads: np.ndarray, sources: list[RecordSource]):
        if keys.ndim != 2 or len(keys) == 0:
            raise ValueError("keys must be a non-empty 2-D array")
        if len(payloads) != len(keys) or len(sources) != len(keys):
            raise ValueError("keys, payloads and sources must align")
        self._keys = keys.astype(np.float64, copy=True)
        self._keys.setflags(write=False)
        self._payloads = payloads.astype(np.float64, copy=True)
        self._payloads.setflags(write=False)
        self._sources = list(sources)

    @property
    def dimension(self) -> int:
        return self._keys.shape[1]

    def __len__(self) -> int:
        return len(self._keys)

    def record(self, i: int) -> KnowledgeRecord:
        return KnowledgeRecord(self._keys[i].copy(), self._payloads[i].copy(), self._sources[i])


def build_index(records: list[KnowledgeRecord]) -> KnnIndex:
    if not records:
        raise ValueError("cannot build an index from zero records")
    widths = {r.key.shape for r in records}
    if len(widths) != 1:
        raise ValueError(f"inconsistent key widths: {sorted(widths)}")
    keys = np.stack([r.key for r in records])
    payloads = np.stack([r.payload for r in records])
    return KnnIndex(keys, payloads, [r.source for r in records])


def query_knn(index: KnnIndex, q: np.ndarray, k: int = 3) -> list[tuple[KnowledgeRecord, float]]:
    """Top-k nearest records by squared L2, ascending; ties keep insertion order."""
    if k < 1:
        raise ValueError("k must be >= 1")
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (index.dimension,):
        raise ValueError(f"query width {q.shape} != ({index.dimension},)")
    diffs = index._keys - q
    d2 = np.einsum("ij,ij->i", diffs, diffs)
    order = np.argsort(d2, kind="stable")[: min(k, len(index))]
    return [(index.record(int(i)), float(d2[i])) for i in order]


def records_from_table(
    table: TrackTable,
    step_frames: int = 10,
    stride: int = 5,
) -> list[KnowledgeRecord]:
    """Harvest (key, next-3-states) records from every vehicle trajectory.

    A record is emitted at every ``stride`` frames where the vehicle still has
    ``PAYLOAD_HORIZON * step_frames`` future frames recorded.
    """
    geometry = table.meta.geometry
    records = []
    horizon = PAYLOAD_HORIZON * step_frames
    for vid in table.vehicle_ids:
        rows = table.vehicle_rows(vid)
        for i in range(0, len(rows) - horizon, stride):
            row = rows[i]
            key = vectorize(
                row.v_x,
                row.v_y,
                row.a_x,
                row.a_y,
                row.front_sight_distance,
                row.back_sight_distance,
                row.preceding_x_velocity,
                row.y,
                row.lane_id,
                geometry,
            )
            payload = np.array(
                [
                    (fut.x, fut.y, fut.v_x, fut.v_y)
                    for fut in (rows[i + n * step_frames] for n in range(1, PAYLOAD_HORIZON + 1))
                ]
            )
            records.append(
                KnowledgeRecord(key, payload, RecordSource(table.meta.recording_id, vid, row.frame))
            )
    return records


def save_index(index: KnnIndex, path: str | Path):
    tensorio.save_bundle(
        path,
        {
            "keys": index._keys,
            "payloads": index._payloads,
            "source_vehicle": np.array([s.vehicle_id for s in index._sources], dtype=np.int64),
            "source_frame": np.array([s.frame for s in index._sources], dtype=np.int64),
        },
        meta={
            "index_version": INDEX_VERSION,
            "dimension": index.dimension,
            "count": len(index),
            "recording_ids": [s.recording_id for s in index._sources],
        },
    )


def load_index(path: str | Path) -> KnnIndex:
    arrays, meta = tensorio.load_bundle(path)
    if meta.get("index_version") != INDEX_VERSION:
        raise ValueError(f"{path}: unsupported index version")
    recs = meta["recording_ids"]
    sources = [
        RecordSource(recs[i], int(arrays["source_vehicle"][i]), int(arrays["source_frame"][i]))
        for i in range(int(meta["count"]))
    ]
    return KnnIndex(arrays["keys"], arrays["payloads"], sources)
