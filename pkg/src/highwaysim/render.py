"""Deterministic top-down SVG rendering of episode logs.

The SVG is generated as plain text with fixed 2-decimal coordinates, so
identical logs produce byte-identical files.
"""

from __future__ import annotations

from pathlib import Path

from .dataset_io import ScenarioSpec, TrackTable, synth_scenario
from .experiments import EpisodeLog
from .kinematics import LaneGeometry

SCALE_X = 4.0      # px per meter along the road
SCALE_Y = 6.0      # px per meter laterally
MARGIN = 20.0


def _f(v: float) -> str:
    return f"{v:.2f}"


def render_svg(log: EpisodeLog, path: str | Path, table: TrackTable | None = None) -> Path:
    """Render lanes, final-frame traffic, the ego path, and predicted waypoints.

    Traffic comes from the log's embedded scenario unless a table is supplied.
    """
    header = log.header
    geometry = LaneGeometry(
        tuple(header["geometry"]["boundaries"]), tuple(header["geometry"]["centers"])
    )
    if table is None and header.get("scenario"):
        table = synth_scenario(ScenarioSpec.from_dict(header["scenario"]))

    xs = [header["initial_ego"]["x"]] + [s["ego"]["x"] for s in log.steps]
    ys = [header["initial_ego"]["y"]] + [s["ego"]["y"] for s in log.steps]
    final_frame = log.steps[-1]["frame"] if log.steps else header["episode"]["start_frame"]
    traffic = table.rows_at(final_frame) if table is not None else []

    x_lo = min(xs + [r.x - r.width for r in traffic]) - 10.0
    x_hi = max(
        xs
        + [r.x + r.width for r in traffic]
        + [w[0] for call in log.planner_calls for w in call["waypoints"]]
    ) + 10.0

    def px(x: float) -> float:
        return MARGIN + (x - x_lo) * SCALE_X

    def py(y: float) -> float:
        return MARGIN + (y - geometry.y_min) * SCALE_Y

    width = px(x_hi) + MARGIN
    height = py(geometry.y_max) + MARGIN

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(width)}" height="{_f(height)}" '
        f'viewBox="0 0 {_f(width)} {_f(height)}">',
        f'<rect class="road" x="{_f(px(x_lo))}" y="{_f(py(geometry.y_min))}" '
        f'width="{_f((x_hi - x_lo) * SCALE_X)}" height="{_f((geometry.y_max - geometry.y_min) * SCALE_Y)}" '
        'fill="#e8e8e8"/>',
    ]
    for i, b in enumerate(geometry.boundaries):
        outer = i in (0, len(geometry.boundaries) - 1)
        dash = "" if outer else ' stroke-dasharray="8,6"'
        parts.append(
            f'<line class="lane" x1="{_f(px(x_lo))}" y1="{_f(py(b))}" '
            f'x2="{_f(px(x_hi))}" y2="{_f(py(b))}" stroke="#555555" stroke-width="1.5"{dash}/>'
        )
    for r in traffic:
        parts.append(
            f'<rect class="veh" x="{_f(px(r.x - r.width / 2))}" '
            f'y="{_f(py(r.y) - r.height / 2 * SCALE_Y)}" '
            f'width="{_f(r.width * SCALE_X)}" height="{_f(r.height * SCALE_Y)}" '
            'fill="#c0392b" stroke="#7f1d12" stroke-width="0.8"/>'
        )
    points = " ".join(f"{_f(px(x))},{_f(py(y))}" for x, y in zip(xs, ys))
    parts.append(
        f'<polyline class="ego" points="{points}" fill="none" stroke="#111111" stroke-width="2"/>'
    )
    for call in log.planner_calls:
        for wx, wy in call["waypoints"]:
            parts.append(
                f'<circle class="wp" cx="{_f(px(wx))}" cy="{_f(py(wy))}" r="3" '
                'fill="#27ae60" stroke="#145a32" stroke-width="0.8"/>'
            )
    parts.append("</svg>")

    path = Path(path)
    path.write_text("\n".join(parts) + "\n")
    return path
