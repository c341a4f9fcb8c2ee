"""Field geometry, ball-position grid and landmark map.

Frame: x runs along the field length with the opponent goal at ``x = +length/2``,
y runs along the width. Everything is in meters.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np


class PositionOutOfDomain(ValueError):
    pass


@dataclass(frozen=True)
class FieldSpec:
    length_m: float = 9.0
    width_m: float = 6.0
    goal_width_m: float = 2.6
    center_circle_radius_m: float = 0.75
    grid_resolution_m: float = 0.25
    out_margin_m: float = 1.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not value > 0:
                raise ValueError(f"{name} must be > 0, got {value}")
        res = self.grid_resolution_m
        for name in ("length_m", "width_m"):
            n = getattr(self, name) / res
            if abs(n - round(n)) > 1e-9:
                raise ValueError(f"grid_resolution_m={res} does not divide {name}")
        if self.goal_width_m >= self.width_m:
            raise ValueError("goal_width_m must be smaller than width_m")
        if self.center_circle_radius_m >= min(self.length_m, self.width_m) / 2:
            raise ValueError("center circle does not fit in the field")

    @property
    def n_cols(self) -> int:
        return int(round(self.length_m / self.grid_resolution_m))

    @property
    def n_rows(self) -> int:
        return int(round(self.width_m / self.grid_resolution_m))

    @property
    def n_cells(self) -> int:
        return self.n_cols * self.n_rows

    @property
    def half_length(self) -> float:
        return self.length_m / 2

    @property
    def half_width(self) -> float:
        return self.width_m / 2

    @property
    def opponent_goal(self) -> tuple[float, float]:
        return (self.half_length, 0.0)

    def contains(self, x: float, y: float) -> bool:
        return abs(x) <= self.half_length and abs(y) <= self.half_width

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "FieldSpec":
        expected = set(cls.__dataclass_fields__)
        if set(data) != expected:
            missing = sorted(expected - set(data))
            extra = sorted(set(data) - expected)
            raise ValueError(f"field config keys mismatch (missing={missing}, unknown={extra})")
        return cls(**{k: float(v) for k, v in data.items()})

    @classmethod
    def load(cls, path: str | Path) -> "FieldSpec":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


@dataclass(frozen=True, order=True)
class CellId:
    col: int
    row: int


class OutcomeKind(enum.Enum):
    IN_PLAY = "in_play"
    GOAL_FOR = "goal_for"
    GOAL_AGAINST = "goal_against"
    OUT_OF_FIELD = "out_of_field"


@dataclass(frozen=True)
class BallOutcome:
    """Where a ball ends up after moving. ``cell`` is the landing cell for
    IN_PLAY and the reentry cell for OUT_OF_FIELD; goals carry no cell."""

    kind: OutcomeKind
    cell: CellId | None = None

    def __post_init__(self):
        is_goal = self.kind in (OutcomeKind.GOAL_FOR, OutcomeKind.GOAL_AGAINST)
        if is_goal != (self.cell is None):
            raise ValueError(f"{self.kind.value} outcome with cell={self.cell}")

    @property
    def is_terminal_goal(self) -> bool:
        return self.kind in (OutcomeKind.GOAL_FOR, OutcomeKind.GOAL_AGAINST)

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value}
        if self.cell is not None:
            d["cell"] = [self.cell.col, self.cell.row]
        return d

    @classmethod
    def in_play(cls, cell: CellId) -> "BallOutcome":
        return cls(OutcomeKind.IN_PLAY, cell)

    @classmethod
    def out(cls, reentry: CellId) -> "BallOutcome":
        return cls(OutcomeKind.OUT_OF_FIELD, reentry)


GOAL_FOR = BallOutcome(OutcomeKind.GOAL_FOR)
GOAL_AGAINST = BallOutcome(OutcomeKind.GOAL_AGAINST)


class LandmarkClass(enum.Enum):
    GOAL_POST_BASE = "goal_post_base"
    FIELD_CORNER = "field_corner"
    T_CROSSING = "t_crossing"


@dataclass(frozen=True)
class Landmark:
    cls: LandmarkClass
    x: float
    y: float

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


# Vectorized outcome codes shared with the planner.
CODE_IN_PLAY = 0
CODE_OUT = 1
CODE_GOAL_FOR = 2
CODE_GOAL_AGAINST = 3


def _nearest_index(u, n: int):
    # Nearest integer with ties toward the lower index, clipped to the grid.
    idx = np.ceil(np.asarray(u, dtype=float) - 0.5).astype(np.int64)
    return np.clip(idx, 0, n - 1)


def cells_of(xy, field: FieldSpec) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`cell_of` without the domain check; returns (cols, rows)."""
    xy = np.asarray(xy, dtype=float)
    res = field.grid_resolution_m
    cols = _nearest_index((xy[..., 0] + field.half_length) / res - 0.5, field.n_cols)
    rows = _nearest_index((xy[..., 1] + field.half_width) / res - 0.5, field.n_rows)
    return cols, rows


def cell_of(position, field: FieldSpec) -> CellId:
    x, y = float(position[0]), float(position[1])
    margin = field.out_margin_m
    if abs(x) > field.half_length + margin or abs(y) > field.half_width + margin:
        raise PositionOutOfDomain(f"({x}, {y}) is beyond the field margin")
    cols, rows = cells_of((x, y), field)
    return CellId(int(cols), int(rows))


def center_of(cell: CellId, field: FieldSpec) -> tuple[float, float]:
    res = field.grid_resolution_m
    return (
        (cell.col + 0.5) * res - field.half_length,
        (cell.row + 0.5) * res - field.half_width,
    )


def cell_centers(field: FieldSpec) -> np.ndarray:
    """Centers of all cells as an (n_cells, 2) array, flat index ``row * n_cols + col``."""
    res = field.grid_resolution_m
    xs = (np.arange(field.n_cols) + 0.5) * res - field.half_length
    ys = (np.arange(field.n_rows) + 0.5) * res - field.half_width
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack([gx.ravel(), gy.ravel()])


def flat_index(cell: CellId, field: FieldSpec) -> int:
    return cell.row * field.n_cols + cell.col


def cell_from_flat(index: int, field: FieldSpec) -> CellId:
    row, col = divmod(int(index), field.n_cols)
    return CellId(col, row)


def all_cells(field: FieldSpec) -> list[CellId]:
    return [cell_from_flat(i, field) for i in range(field.n_cells)]


def classify_many(start, end, field: FieldSpec) -> tuple[np.ndarray, np.ndarray]:
    """Classify ball segments ``start -> end``.

    ``start`` broadcasts against ``end`` (shape (..., 2)). Returns
    ``(codes, flat_cells)``; ``flat_cells`` is -1 for goals.
    """
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    start, end = np.broadcast_arrays(start, end)
    hl, hw = field.half_length, field.half_width
    fx, fy = start[..., 0], start[..., 1]
    tx, ty = end[..., 0], end[..., 1]
    dx, dy = tx - fx, ty - fy

    inside = (np.abs(tx) <= hl) & (np.abs(ty) <= hw)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        x_bound = np.where(tx > 0, hl, -hl)
        t_x = np.where(np.abs(tx) > hl, (x_bound - fx) / dx, np.inf)
        y_bound = np.where(ty > 0, hw, -hw)
        t_y = np.where(np.abs(ty) > hw, (y_bound - fy) / dy, np.inf)
    via_goal_line = t_x <= t_y
    t_exit = np.minimum(t_x, t_y)
    t_exit = np.where(np.isfinite(t_exit), t_exit, 0.0)
    ex = np.where(via_goal_line, x_bound, fx + t_exit * dx)
    ey = np.where(via_goal_line, fy + t_exit * dy, y_bound)
    in_mouth = via_goal_line & (np.abs(ey) < field.goal_width_m / 2)

    codes = np.full(tx.shape, CODE_OUT, dtype=np.int64)
    codes[inside] = CODE_IN_PLAY
    codes[~inside & in_mouth & (ex > 0)] = CODE_GOAL_FOR
    codes[~inside & in_mouth & (ex < 0)] = CODE_GOAL_AGAINST

    px = np.where(inside, tx, np.clip(ex, -hl, hl))
    py = np.where(inside, ty, np.clip(ey, -hw, hw))
    cols, rows = cells_of(np.stack([px, py], axis=-1), field)
    flat = rows * field.n_cols + cols
    flat = np.where(codes >= CODE_GOAL_FOR, -1, flat)
    return codes, flat


def outcome_from_code(code: int, flat: int, field: FieldSpec) -> BallOutcome:
    if code == CODE_GOAL_FOR:
        return GOAL_FOR
    if code == CODE_GOAL_AGAINST:
        return GOAL_AGAINST
    cell = cell_from_flat(flat, field)
    if code == CODE_IN_PLAY:
        return BallOutcome.in_play(cell)
    return BallOutcome.out(cell)


def classify_ball_motion(start, end, field: FieldSpec) -> BallOutcome:
    """Goal, out, or in-play outcome of the ball travelling ``start -> end``.

    A goal needs the segment to cross a goal line strictly between the posts.
    Any other exit is out of field, with the ball brought back to the in-field
    cell nearest to the exit point.
    """
    codes, flat = classify_many(start, end, field)
    return outcome_from_code(int(codes), int(flat), field)


def landmarks(field: FieldSpec) -> list[Landmark]:
    hl, hw, hg = field.half_length, field.half_width, field.goal_width_m / 2
    out = []
    for sx in (1.0, -1.0):
        for sy in (1.0, -1.0):
            out.append(Landmark(LandmarkClass.GOAL_POST_BASE, sx * hl, sy * hg))
    for sx in (1.0, -1.0):
        for sy in (1.0, -1.0):
            out.append(Landmark(LandmarkClass.FIELD_CORNER, sx * hl, sy * hw))
    # Center line meets both touch lines.
    for sy in (1.0, -1.0):
        out.append(Landmark(LandmarkClass.T_CROSSING, 0.0, sy * hw))
    return out


def wrap_angle(a):
    """Wrap angles to (-pi, pi]."""
    a = np.asarray(a, dtype=float)
    w = np.mod(a + math.pi, 2 * math.pi) - math.pi
    w = np.where(w == -math.pi, math.pi, w)
    return float(w) if w.ndim == 0 else w
