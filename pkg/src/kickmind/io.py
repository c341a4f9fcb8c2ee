"""File formats: value-function dumps, planner configs, particle snapshots."""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .localization import ParticleSet
from .planner import (
    DEFAULT_N_DIRS,
    DEFAULT_QUADRATURE_POINTS,
    ApproachModel,
    KickModel,
    RewardParams,
    ValueFunction,
    default_kicks,
)

VALUE_MAGIC = b"KVF1"
_VALUE_HEADER = struct.Struct("<4sII")


class MalformedValueFile(ValueError):
    pass


def value_to_bytes(value: ValueFunction) -> bytes:
    """``KVF1``, u32 cols, u32 rows, then row-major little-endian float64 values."""
    header = _VALUE_HEADER.pack(VALUE_MAGIC, value.n_cols, value.n_rows)
    return header + np.ascontiguousarray(value.values, dtype="<f8").tobytes()


def value_from_bytes(data: bytes) -> ValueFunction:
    if len(data) < _VALUE_HEADER.size:
        raise MalformedValueFile("value file shorter than its header")
    magic, cols, rows = _VALUE_HEADER.unpack_from(data)
    if magic != VALUE_MAGIC:
        raise MalformedValueFile(f"bad magic {magic!r}")
    expected = _VALUE_HEADER.size + 8 * cols * rows
    if len(data) != expected:
        raise MalformedValueFile(f"expected {expected} bytes for a {cols}x{rows} grid, got {len(data)}")
    values = np.frombuffer(data, dtype="<f8", offset=_VALUE_HEADER.size).reshape(rows, cols)
    return ValueFunction(values.astype(float))


def save_value(value: ValueFunction, path: str | Path) -> None:
    Path(path).write_bytes(value_to_bytes(value))


def load_value(path: str | Path) -> ValueFunction:
    return value_from_bytes(Path(path).read_bytes())


def value_to_csv(value: ValueFunction) -> str:
    lines = ["col,row,value"]
    for row in range(value.n_rows):
        for col in range(value.n_cols):
            lines.append(f"{col},{row},{value.values[row, col]!r}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class PlannerConfig:
    """Kick catalog plus the cost-model knobs, as read from a kicks JSON file."""

    kicks: tuple[KickModel, ...] = dc_field(default_factory=lambda: tuple(default_kicks()))
    approach: ApproachModel = ApproachModel()
    reward: RewardParams = RewardParams()
    n_dirs: int = DEFAULT_N_DIRS
    quadrature_points: int = DEFAULT_QUADRATURE_POINTS

    def to_dict(self) -> dict:
        return {
            "kicks": [k.to_dict() for k in self.kicks],
            "approach": asdict(self.approach),
            "reward": asdict(self.reward),
            "n_dirs": self.n_dirs,
            "quadrature_points": self.quadrature_points,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PlannerConfig":
        unknown = set(d) - {"kicks", "approach", "reward", "n_dirs", "quadrature_points"}
        if unknown:
            raise ValueError(f"unknown planner config keys {sorted(unknown)}")
        kicks = tuple(KickModel.from_dict(k) for k in d["kicks"]) if "kicks" in d else tuple(default_kicks())
        return cls(
            kicks=kicks,
            approach=ApproachModel(**d.get("approach", {})),
            reward=RewardParams(**d.get("reward", {})),
            n_dirs=int(d.get("n_dirs", DEFAULT_N_DIRS)),
            quadrature_points=int(d.get("quadrature_points", DEFAULT_QUADRATURE_POINTS)),
        )

    @classmethod
    def load(cls, path: str | Path) -> "PlannerConfig":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


def load_snapshot(path: str | Path) -> ParticleSet:
    """Particle snapshot: ``{"particles": [[x, y, theta(, w)], ...]}`` or the bare list."""
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    rows = data["particles"] if isinstance(data, dict) else data
    return ParticleSet.from_array(np.asarray(rows, dtype=float))


def save_snapshot(particles: ParticleSet, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump({"particles": particles.to_array().tolist()}, f)
