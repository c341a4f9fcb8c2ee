"""Three-dimensional (x, y, theta) particle filter over the landmark map.

Odometry moves every particle in its own frame; landmark observations (bearing
and distance to a goal post base, field corner or T crossing) reweight them.
``NoiseConfig.exploration_rate`` and the odometry sigmas are the knobs that
trade trust in odometry against exploration.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .field import FieldSpec, Landmark, LandmarkClass, landmarks, wrap_angle

LOG_UNDERFLOW = math.log(np.finfo(float).tiny)
RECOVERY_EXPLORATION = 0.5


class AllWeightsZero(RuntimeError):
    """Every particle has a vanishing likelihood; the filter needs recovery."""


def as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class Particle:
    x: float
    y: float
    theta: float
    weight: float


class ParticleSet:
    """Weighted pose hypotheses backed by an ``(n, 3)`` state array."""

    def __init__(self, states, weights=None):
        states = np.array(states, dtype=float).reshape(-1, 3)
        if len(states) == 0:
            raise ValueError("a particle set needs at least one particle")
        states[:, 2] = wrap_angle(states[:, 2])
        if weights is None:
            weights = np.full(len(states), 1.0 / len(states))
        weights = np.array(weights, dtype=float).reshape(-1)
        if weights.shape != (len(states),):
            raise ValueError("one weight per particle is required")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ValueError("weights must be finite and >= 0")
        self.states = states
        self.weights = weights

    def __len__(self) -> int:
        return len(self.states)

    @property
    def count(self) -> int:
        return len(self.states)

    @property
    def xy(self) -> np.ndarray:
        return self.states[:, :2]

    @property
    def theta(self) -> np.ndarray:
        return self.states[:, 2]

    @property
    def particles(self) -> list[Particle]:
        return [Particle(float(x), float(y), float(t), float(w)) for (x, y, t), w in zip(self.states, self.weights)]

    def normalized(self) -> "ParticleSet":
        total = self.weights.sum()
        if total <= 0:
            raise AllWeightsZero("total particle weight is zero")
        return ParticleSet(self.states, self.weights / total)

    def copy(self) -> "ParticleSet":
        return ParticleSet(self.states.copy(), self.weights.copy())

    def to_array(self) -> np.ndarray:
        return np.column_stack([self.states, self.weights])

    @classmethod
    def from_array(cls, arr) -> "ParticleSet":
        arr = np.asarray(arr, dtype=float)
        if arr.ndim != 2 or arr.shape[1] not in (3, 4):
            raise ValueError("particle arrays must have rows (x, y, theta[, weight])")
        weights = arr[:, 3] if arr.shape[1] == 4 else None
        ps = cls(arr[:, :3], weights)
        return ps.normalized() if weights is not None else ps

    @classmethod
    def uniform(cls, field: FieldSpec, count: int, seed=None, x_range=None, y_range=None) -> "ParticleSet":
        rng = as_rng(seed)
        xr = x_range or (-field.half_length, field.half_length)
        yr = y_range or (-field.half_width, field.half_width)
        states = np.column_stack([
            rng.uniform(*xr, count),
            rng.uniform(*yr, count),
            rng.uniform(-math.pi, math.pi, count),
        ])
        return cls(states)

    @classmethod
    def around(cls, poses, count: int, sigma_xy: float, sigma_theta: float, seed=None) -> "ParticleSet":
        """Equal-share Gaussian clouds around one or more pose hypotheses."""
        rng = as_rng(seed)
        poses = np.asarray(poses, dtype=float).reshape(-1, 3)
        which = np.arange(count) % len(poses)
        centers = poses[which]
        noise = rng.normal(size=(count, 3)) * [sigma_xy, sigma_xy, sigma_theta]
        return cls(centers + noise)


@dataclass(frozen=True)
class OdometryDelta:
    dx: float
    dy: float
    dtheta: float


@dataclass(frozen=True)
class ObservationSample:
    landmark_class: LandmarkClass
    bearing: float
    distance: float

    def __post_init__(self):
        if not self.distance > 0:
            raise ValueError("observation distance must be > 0")

    def to_dict(self) -> dict:
        return {"class": self.landmark_class.value, "bearing": self.bearing, "distance": self.distance}

    @classmethod
    def from_dict(cls, d: dict) -> "ObservationSample":
        return cls(LandmarkClass(d["class"]), float(d["bearing"]), float(d["distance"]))


@dataclass(frozen=True)
class NoiseConfig:
    odo_sigma_trans_m: float = 0.1  # per meter walked
    odo_sigma_rot_rad: float = 0.1  # per radian turned or meter walked
    obs_sigma_bearing_rad: float = 0.08
    obs_sigma_distance_rel: float = 0.15
    exploration_rate: float = 0.02
    # Per-prediction floors keep resampled duplicates apart while the robot stands still.
    odo_floor_trans_m: float = 0.01
    odo_floor_rot_rad: float = 0.01

    def __post_init__(self):
        for name in (
            "odo_sigma_trans_m", "odo_sigma_rot_rad", "obs_sigma_bearing_rad", "obs_sigma_distance_rel",
            "odo_floor_trans_m", "odo_floor_rot_rad",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0 <= self.exploration_rate <= 1:
            raise ValueError("exploration_rate must be in [0, 1]")


def predict(particles: ParticleSet, delta: OdometryDelta, noise: NoiseConfig, seed=None) -> ParticleSet:
    """Move every particle by the robot-frame odometry ``delta`` plus motion-scaled noise."""
    rng = as_rng(seed)
    n = particles.count
    trans = math.hypot(delta.dx, delta.dy)
    sig_xy = noise.odo_sigma_trans_m * trans + noise.odo_floor_trans_m
    sig_th = noise.odo_sigma_rot_rad * (abs(delta.dtheta) + trans) + noise.odo_floor_rot_rad
    dx = delta.dx + rng.normal(0.0, 1.0, n) * sig_xy
    dy = delta.dy + rng.normal(0.0, 1.0, n) * sig_xy
    dth = delta.dtheta + rng.normal(0.0, 1.0, n) * sig_th
    th = particles.theta
    c, s = np.cos(th), np.sin(th)
    states = particles.states.copy()
    states[:, 0] += c * dx - s * dy
    states[:, 1] += s * dx + c * dy
    states[:, 2] = wrap_angle(th + dth)
    return ParticleSet(states, particles.weights.copy())


def _landmark_table(field: FieldSpec, landmark_map: Iterable[Landmark] | None) -> dict[LandmarkClass, np.ndarray]:
    table: dict[LandmarkClass, list] = {}
    for lm in landmark_map if landmark_map is not None else landmarks(field):
        table.setdefault(lm.cls, []).append((lm.x, lm.y))
    return {k: np.asarray(v, dtype=float) for k, v in table.items()}


def observation_log_likelihood(states, observations, noise: NoiseConfig, table) -> np.ndarray:
    """Per-particle log-likelihood (up to a constant) of a set of observations.

    Each observation is matched to the same-class landmark that best explains
    it from the particle's pose.
    """
    if noise.obs_sigma_bearing_rad <= 0 or noise.obs_sigma_distance_rel <= 0:
        raise ValueError("observation sigmas must be > 0 to weight particles")
    states = np.asarray(states, dtype=float).reshape(-1, 3)
    ll = np.zeros(len(states))
    for obs in observations:
        marks = table.get(obs.landmark_class)
        if marks is None or len(marks) == 0:
            raise ValueError(f"no {obs.landmark_class.value} landmark in the map")
        dx = marks[None, :, 0] - states[:, 0, None]
        dy = marks[None, :, 1] - states[:, 1, None]
        bearing = np.arctan2(dy, dx) - states[:, 2, None]
        db = wrap_angle(obs.bearing - bearing) / noise.obs_sigma_bearing_rad
        dd = (obs.distance - np.hypot(dx, dy)) / (noise.obs_sigma_distance_rel * obs.distance)
        ll -= 0.5 * np.min(db * db + dd * dd, axis=1)
    return ll


def update(
    particles: ParticleSet,
    observations,
    field: FieldSpec,
    noise: NoiseConfig,
    landmark_map: Iterable[Landmark] | None = None,
) -> ParticleSet:
    """Reweight by the observation likelihood and renormalize.

    Raises AllWeightsZero when even the best particle's weight underflows.
    """
    observations = list(observations)
    if not observations:
        return particles.copy()
    table = _landmark_table(field, landmark_map)
    ll = observation_log_likelihood(particles.states, observations, noise, table)
    with np.errstate(divide="ignore"):
        logw = np.log(particles.weights) + ll
    top = np.max(logw)
    if not np.isfinite(top) or top < LOG_UNDERFLOW:
        raise AllWeightsZero(f"best particle log-weight {top:.1f}")
    w = np.exp(logw - top)
    return ParticleSet(particles.states.copy(), w / w.sum())


def systematic_indices(weights, count: int, rng: np.random.Generator) -> np.ndarray:
    """Low-variance resampling: one uniform offset, ``count`` evenly spaced pointers."""
    cum = np.cumsum(weights)
    cum /= cum[-1]
    pointers = (rng.random() + np.arange(count)) / count
    return np.minimum(np.searchsorted(cum, pointers, side="right"), len(weights) - 1)


def resample(
    particles: ParticleSet, noise: NoiseConfig, seed=None, field: FieldSpec | None = None, exploration_rate=None
) -> ParticleSet:
    """Systematic resampling; ``floor(rate * count)`` slots are redrawn uniformly
    over the field with uniform heading. Weights come back uniform."""
    rng = as_rng(seed)
    n = particles.count
    rate = noise.exploration_rate if exploration_rate is None else exploration_rate
    n_explore = int(math.floor(rate * n + 1e-9))
    if n_explore and field is None:
        raise ValueError("exploration needs the field bounds")
    idx = systematic_indices(particles.weights, n - n_explore, rng)
    states = particles.states[idx]
    if n_explore:
        fresh = ParticleSet.uniform(field, n_explore, rng).states
        states = np.vstack([states, fresh])
    return ParticleSet(states)


def effective_sample_size(particles: ParticleSet) -> float:
    w = particles.weights
    return float(1.0 / np.sum(w * w))


# ---------------------------------------------------------------- filter driver


@dataclass(frozen=True)
class LogRecord:
    t: float
    odom: OdometryDelta | None = None
    obs: tuple[ObservationSample, ...] | None = None

    def to_dict(self) -> dict:
        if self.odom is not None:
            return {"t": self.t, "odom": [self.odom.dx, self.odom.dy, self.odom.dtheta]}
        return {"t": self.t, "obs": [o.to_dict() for o in self.obs or ()]}

    @classmethod
    def from_dict(cls, d: dict) -> "LogRecord":
        t = float(d["t"])
        if ("odom" in d) == ("obs" in d):
            raise ValueError(f"log line at t={t} needs exactly one of 'odom' or 'obs'")
        if "odom" in d:
            dx, dy, dth = (float(v) for v in d["odom"])
            return cls(t, odom=OdometryDelta(dx, dy, dth))
        return cls(t, obs=tuple(ObservationSample.from_dict(o) for o in d["obs"]))


def parse_log(lines: Iterable[str]) -> list[LogRecord]:
    records = []
    last = -math.inf
    for lineno, line in enumerate(lines, 1):
        line = line.strip()
        if not line:
            continue
        rec = LogRecord.from_dict(json.loads(line))
        if not rec.t > last:
            raise ValueError(f"line {lineno}: timestamps must strictly increase ({rec.t} after {last})")
        last = rec.t
        records.append(rec)
    return records


def read_log(path: str | Path) -> list[LogRecord]:
    with open(path, encoding="utf-8") as f:
        return parse_log(f)


def write_log(records: Iterable[LogRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(rec.to_dict()) + "\n")


class ParticleFilter:
    """Stateful filter: predict on odometry, update on observations, resample
    when the effective sample size drops below half the particle count."""

    def __init__(
        self,
        field: FieldSpec,
        particles: ParticleSet,
        noise: NoiseConfig | None = None,
        seed=0,
        landmark_map: Iterable[Landmark] | None = None,
    ):
        self.field = field
        self.particles = particles.normalized()
        self.noise = noise or NoiseConfig()
        self.rng = as_rng(seed)
        self.landmark_map = list(landmark_map) if landmark_map is not None else None
        self.recoveries = 0
        self.resamples = 0

    def predict(self, delta: OdometryDelta) -> None:
        self.particles = predict(self.particles, delta, self.noise, self.rng)

    def update(self, observations) -> None:
        try:
            self.particles = update(self.particles, observations, self.field, self.noise, self.landmark_map)
        except AllWeightsZero:
            self.recoveries += 1
            reset = ParticleSet(self.particles.states)
            self.particles = resample(
                reset, self.noise, self.rng, self.field,
                exploration_rate=max(self.noise.exploration_rate, RECOVERY_EXPLORATION),
            )
            self.resamples += 1
            return
        if effective_sample_size(self.particles) < self.particles.count / 2:
            self.particles = resample(self.particles, self.noise, self.rng, self.field)
            self.resamples += 1

    def step(self, record: LogRecord) -> None:
        if record.odom is not None:
            self.predict(record.odom)
        else:
            self.update(record.obs or ())

    def run(self, records: Iterable[LogRecord]) -> Iterator[LogRecord]:
        for rec in records:
            self.step(rec)
            yield rec
