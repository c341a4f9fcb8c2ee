"""Seeded closed-loop soccer episodes and synthetic localization logs."""

from __future__ import annotations

import enum
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .field import (
    FieldSpec,
    Landmark,
    LandmarkClass,
    OutcomeKind,
    cell_of,
    center_of,
    classify_ball_motion,
    landmarks,
    wrap_angle,
)
from .localization import LogRecord, ObservationSample, OdometryDelta
from .planner import (
    GameContext,
    KickPlanner,
    RestartState,
    ValueFunction,
    goal_aim,
    time_to_reach,
)

THREADS_ENV = "KICKMIND_THREADS"


class UnsolvedValueFunction(ValueError):
    pass


class Team(enum.Enum):
    OURS = "ours"
    OPPONENT = "opponent"


@dataclass(frozen=True)
class RobotSpec:
    team: Team
    x: float
    y: float
    theta: float = 0.0

    @property
    def pose(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.theta)


@dataclass(frozen=True)
class Scenario:
    field: FieldSpec
    ball_start: tuple[float, float]
    robots: tuple[RobotSpec, ...]
    restart_state: RestartState = RestartState.NORMAL
    rng_seed: int = 0
    max_sim_time_s: float = 600.0

    def __post_init__(self):
        if not self.field.contains(*self.ball_start):
            raise ValueError(f"ball start {self.ball_start} is outside the field")
        if not any(r.team is Team.OURS for r in self.robots):
            raise ValueError("scenario needs at least one robot on our team")

    @property
    def ours(self) -> list[RobotSpec]:
        return [r for r in self.robots if r.team is Team.OURS]

    @property
    def opponents(self) -> list[RobotSpec]:
        return [r for r in self.robots if r.team is Team.OPPONENT]

    def with_seed(self, seed: int) -> "Scenario":
        return Scenario(self.field, self.ball_start, self.robots, self.restart_state, seed, self.max_sim_time_s)

    def to_dict(self) -> dict:
        return {
            "field": self.field.to_dict(),
            "ball_start": list(self.ball_start),
            "robots": [{"team": r.team.value, "x": r.x, "y": r.y, "theta": r.theta} for r in self.robots],
            "restart_state": self.restart_state.value,
            "rng_seed": self.rng_seed,
            "max_sim_time_s": self.max_sim_time_s,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        field = FieldSpec.from_dict(d["field"]) if d.get("field") is not None else FieldSpec()
        robots = tuple(
            RobotSpec(Team(r["team"]), float(r["x"]), float(r["y"]), float(r.get("theta", 0.0))) for r in d["robots"]
        )
        return cls(
            field=field,
            ball_start=(float(d["ball_start"][0]), float(d["ball_start"][1])),
            robots=robots,
            restart_state=RestartState(d.get("restart_state", "normal")),
            rng_seed=int(d.get("rng_seed", 0)),
            max_sim_time_s=float(d.get("max_sim_time_s", 600.0)),
        )

    @classmethod
    def load(cls, path: str | Path) -> "Scenario":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


def kickoff_scenario(field: FieldSpec | None = None, rng_seed: int = 0) -> Scenario:
    """Our kick-off: robot 1 just behind the ball, robot 2 forward-left of it."""
    field = field or FieldSpec()
    return Scenario(
        field=field,
        ball_start=(0.0, 0.0),
        robots=(
            RobotSpec(Team.OURS, -0.4, 0.0, 0.0),
            RobotSpec(Team.OURS, 0.6, 0.7, 0.0),
        ),
        restart_state=RestartState.KICKOFF_OURS_BALL_NOT_IN_PLAY,
        rng_seed=rng_seed,
        max_sim_time_s=600.0,
    )


@dataclass(frozen=True)
class Event:
    t: float
    kind: str  # travel, kick, goal, out, restart
    data: dict = dc_field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"t": self.t, "kind": self.kind, **self.data}


@dataclass
class EpisodeLog:
    events: list[Event]
    total_time_s: float
    goals_for: int
    goals_against: int
    end_reason: str  # goal, timeout, kick_cap
    seed: int
    travel_time_s: float = 0.0
    kick_time_s: float = 0.0

    @property
    def scored(self) -> bool:
        return self.end_reason == "goal"

    def summary(self) -> dict:
        return {
            "kind": "summary",
            "seed": self.seed,
            "total_time_s": self.total_time_s,
            "goals_for": self.goals_for,
            "goals_against": self.goals_against,
            "end": self.end_reason,
            "kicks": sum(1 for e in self.events if e.kind == "kick"),
        }

    def to_jsonl(self) -> str:
        lines = [json.dumps(e.to_dict()) for e in self.events]
        lines.append(json.dumps(self.summary()))
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class PolicyConfig:
    mode: str = "online"  # "online": shaped depth-one policy, "offline": greedy on V alone
    max_kicks: int = 60

    def __post_init__(self):
        if self.mode not in ("online", "offline"):
            raise ValueError(f"unknown policy mode {self.mode!r}")


def _goal_line_reentry(start, end, field: FieldSpec):
    """In-field cell nearest to where a segment crosses the opponent goal line."""
    (fx, fy), (tx, ty) = start, end
    t = (field.half_length - fx) / (tx - fx)
    return cell_of((field.half_length, fy + t * (ty - fy)), field)


def run_episode(
    scenario: Scenario,
    value: ValueFunction,
    planner: KickPlanner,
    policy: PolicyConfig = PolicyConfig(),
) -> EpisodeLog:
    """Play one seeded episode until a goal, the time cap or the kick cap.

    The closest of our robots walks to the ball (teleported after its travel
    time), the policy picks a kick, and the kick outcome is drawn from the
    kick's distance/direction density. The ball is struck halfway through the
    kick execution; goal, out and restart events carry that instant.
    """
    field = scenario.field
    if field != planner.field or not value.compatible_with(field):
        raise UnsolvedValueFunction("value function / planner were not built for this scenario's field")
    approach = planner.approach
    if approach.placement_overhead_s <= 0 or any(k.execution_time_s <= 0 for k in planner.kicks):
        raise ValueError("episodes need positive placement overhead and kick execution times")
    rng = np.random.default_rng(scenario.rng_seed)
    ours = [np.array(r.pose, dtype=float) for r in scenario.ours]
    opponents = tuple((r.x, r.y) for r in scenario.opponents) or None
    ball = np.array(scenario.ball_start, dtype=float)
    state = scenario.restart_state
    t = 0.0
    travel_total = kick_total = 0.0
    events: list[Event] = []
    goals_for = goals_against = 0
    n_kicks = 0
    end_reason = "timeout"

    while True:
        if t >= scenario.max_sim_time_s:
            end_reason = "timeout"
            break
        if n_kicks >= policy.max_kicks:
            end_reason = "kick_cap"
            break
        aim = float(goal_aim(ball, field))
        reach = [time_to_reach(p, ball, aim, approach) for p in ours]
        kicker = int(np.argmin(reach))
        cell = cell_of(ball, field)
        if policy.mode == "online":
            ctx = GameContext(
                kicker_pose=tuple(ours[kicker]),
                teammate_poses=tuple(tuple(p) for i, p in enumerate(ours) if i != kicker),
                opponent_positions=opponents,
                restart_state=state,
            )
        else:
            ctx = GameContext(kicker_pose=tuple(ours[kicker]))
        action, _ = planner.choose(cell, ctx, value)
        kick = action.kick

        facings = [action.aim + off for off in kick.facing_offsets_rad]
        times = [time_to_reach(ours[kicker], ball, f, approach) for f in facings]
        best = int(np.argmin(times))
        travel = times[best]
        events.append(Event(t, "travel", {"robot": kicker, "duration": travel}))
        t += travel
        travel_total += travel
        ours[kicker] = np.array([ball[0], ball[1], float(wrap_angle(facings[best]))])

        dist = max(0.0, rng.normal(kick.mean_distance_m, kick.sigma_distance_m))
        heading = rng.normal(action.aim, kick.sigma_angle_rad)
        start = ball.copy()
        end = start + dist * np.array([math.cos(heading), math.sin(heading)])
        outcome = classify_ball_motion(start, end, field)
        events.append(Event(t, "kick", {
            "robot": kicker,
            "kick": kick.name,
            "orientation_index": action.orientation_index,
            "from": start.tolist(),
            "to": end.tolist(),
            "outcome": outcome.to_dict(),
            "restart_state": state.value,
        }))
        contact = t + kick.execution_time_s / 2
        t += kick.execution_time_s
        kick_total += kick.execution_time_s
        n_kicks += 1

        if outcome.kind is OutcomeKind.GOAL_FOR:
            if not state.forbids_direct_goal:
                goals_for += 1
                events.append(Event(contact, "goal", {"team": "ours"}))
                end_reason = "goal"
                break
            reentry = _goal_line_reentry(start, end, field)
            state = RestartState.NORMAL
            ball = np.array(center_of(reentry, field))
            events.append(Event(contact, "out", {
                "reason": "disallowed_goal", "reentry": [reentry.col, reentry.row], "restart_state": state.value,
            }))
        elif outcome.kind is OutcomeKind.GOAL_AGAINST:
            goals_against += 1
            state = RestartState.KICKOFF_OURS_BALL_NOT_IN_PLAY
            ball = np.zeros(2)
            events.append(Event(contact, "goal", {"team": "opponent", "restart_state": state.value}))
        elif outcome.kind is OutcomeKind.OUT_OF_FIELD:
            state = RestartState.THROW_IN
            ball = np.array(center_of(outcome.cell, field))
            events.append(Event(contact, "out", {
                "reason": "out_of_field", "reentry": [outcome.cell.col, outcome.cell.row], "restart_state": state.value,
            }))
        else:
            ball = end
            new_state = state
            if state is RestartState.KICKOFF_OURS_BALL_NOT_IN_PLAY:
                if math.hypot(*ball) > field.center_circle_radius_m:
                    new_state = RestartState.NORMAL
            elif state is not RestartState.NORMAL:
                new_state = RestartState.NORMAL
            if new_state is not state:
                state = new_state
                events.append(Event(contact, "restart", {"state": state.value}))

    return EpisodeLog(events, t, goals_for, goals_against, end_reason, scenario.rng_seed, travel_total, kick_total)


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def run_batch(
    scenario: Scenario, value: ValueFunction, planner: KickPlanner, seeds, policy: PolicyConfig = PolicyConfig()
) -> list[EpisodeLog]:
    """Episodes for several seeds, returned in seed order."""
    seeds = list(seeds)
    planner.tables  # build shared tables before fanning out
    job = lambda s: run_episode(scenario.with_seed(s), value, planner, policy)
    workers = min(thread_count(), len(seeds)) or 1
    if workers == 1:
        return [job(s) for s in seeds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(job, seeds))


# ---------------------------------------------------------------- synthetic localization logs


@dataclass(frozen=True)
class SensorNoise:
    """Noise of the synthetic robot's odometry and landmark detector."""

    odo_rel_trans: float = 0.05
    odo_rel_rot: float = 0.05
    bearing_sigma_rad: float = 0.03
    distance_rel_sigma: float = 0.05
    fov_half_angle_rad: float = math.radians(60)
    max_range_m: float = 8.0


@dataclass(frozen=True)
class TrajectoryScript:
    """``move_scan`` alternates walking to random targets with turning on the
    spot; ``sideline_reentry`` walks straight in from the touch line and only
    reports mirror-ambiguous landmarks for ``ambiguous_s`` seconds before
    switching to ``move_scan``."""

    kind: str = "move_scan"
    duration_s: float = 120.0
    rate_hz: float = 10.0
    walk_speed_mps: float = 0.25
    turn_speed_radps: float = 0.8
    scan_speed_radps: float = 0.6
    scan_duration_s: float = 5.0
    zone_margin_m: float = 0.5
    ambiguous_s: float = 10.0

    def __post_init__(self):
        if self.kind not in ("move_scan", "sideline_reentry"):
            raise ValueError(f"unknown trajectory script {self.kind!r}")


def sideline_reentry_hypotheses(pose) -> list[tuple[float, float, float]]:
    """A robot returning at the touch line knows its half but not which touch line."""
    x, y, th = pose
    return [(x, y, th), (x, -y, float(wrap_angle(-th)))]


def _ambiguous(lm: Landmark, pose, table: list[Landmark]) -> bool:
    # Under the touch-line mirror hypothesis the same observation would come from
    # the point reflection of the landmark about (robot x, 0).
    mx, my = 2 * pose[0] - lm.x, -lm.y
    return any(o.cls is lm.cls and abs(o.x - mx) < 1e-6 and abs(o.y - my) < 1e-6 for o in table)


def _observe(pose, table, sensor: SensorNoise, rng, ambiguous_only: bool):
    x, y, th = pose
    out = []
    for lm in table:
        dx, dy = lm.x - x, lm.y - y
        dist = math.hypot(dx, dy)
        bearing = float(wrap_angle(math.atan2(dy, dx) - th))
        if dist <= 1e-6 or dist > sensor.max_range_m or abs(bearing) > sensor.fov_half_angle_rad:
            continue
        if ambiguous_only and not _ambiguous(lm, pose, table):
            continue
        b = float(wrap_angle(bearing + rng.normal(0.0, sensor.bearing_sigma_rad)))
        d = dist * (1.0 + rng.normal(0.0, sensor.distance_rel_sigma))
        if d > 0:
            out.append(ObservationSample(lm.cls, b, d))
    return tuple(out)


def generate_localization_log(
    scenario: Scenario,
    script: TrajectoryScript = TrajectoryScript(),
    sensor: SensorNoise = SensorNoise(),
    seed: int | None = None,
    start_pose=None,
):
    """Simulate a walking robot and return ``(records, truth)``.

    Odometry lines come at ``rate_hz`` on the tick, observation lines half a
    tick later. ``truth`` holds ``(t, x, y, theta)`` after every odometry step.
    """
    field = scenario.field
    rng = np.random.default_rng(scenario.rng_seed if seed is None else seed)
    table = landmarks(field)
    pose = np.array(start_pose if start_pose is not None else scenario.ours[0].pose, dtype=float)
    dt = 1.0 / script.rate_hz
    n_steps = int(round(script.duration_s * script.rate_hz))
    m = script.zone_margin_m
    lo = np.array([-field.half_length + m, -field.half_width + m])
    hi = -lo

    records: list[LogRecord] = []
    truth = [(0.0, float(pose[0]), float(pose[1]), float(pose[2]))]
    phase = "enter" if script.kind == "sideline_reentry" else "move"
    target = rng.uniform(lo, hi)
    scan_left = 0.0
    for step in range(1, n_steps + 1):
        t = step * dt
        fwd = rot = 0.0
        if phase == "enter":
            fwd = script.walk_speed_mps * dt
            if t >= script.ambiguous_s:
                phase, scan_left = "scan", script.scan_duration_s
        elif phase == "move":
            dx, dy = target - pose[:2]
            err = float(wrap_angle(math.atan2(dy, dx) - pose[2]))
            dist = math.hypot(dx, dy)
            max_rot = script.turn_speed_radps * dt
            if dist < script.walk_speed_mps * dt:
                phase, scan_left = "scan", script.scan_duration_s
            elif abs(err) > 0.2:
                rot = max(-max_rot, min(max_rot, err))
            else:
                rot = max(-max_rot, min(max_rot, err))
                fwd = min(dist, script.walk_speed_mps * dt)
        else:
            rot = script.scan_speed_radps * dt
            scan_left -= dt
            if scan_left <= 0:
                phase = "move"
                target = rng.uniform(lo, hi)

        # Odometry is reported in the frame of the pose at the start of the step.
        pose[0] += fwd * math.cos(pose[2])
        pose[1] += fwd * math.sin(pose[2])
        pose[2] = float(wrap_angle(pose[2] + rot))
        odo = OdometryDelta(
            fwd + rng.normal(0.0, sensor.odo_rel_trans * abs(fwd) + 1e-12),
            rng.normal(0.0, sensor.odo_rel_trans * abs(fwd) + 1e-12),
            rot + rng.normal(0.0, sensor.odo_rel_rot * abs(rot) + 1e-12),
        )
        records.append(LogRecord(round(t, 9), odom=odo))
        truth.append((round(t, 9), float(pose[0]), float(pose[1]), float(pose[2])))
        obs = _observe(pose, table, sensor, rng, ambiguous_only=(phase == "enter"))
        records.append(LogRecord(round(t + dt / 2, 9), obs=obs))
    return records, truth


def sideline_scenario(field: FieldSpec | None = None, x: float = -1.5, rng_seed: int = 0) -> Scenario:
    field = field or FieldSpec()
    return Scenario(
        field=field,
        ball_start=(0.0, 0.0),
        robots=(RobotSpec(Team.OURS, x, -field.half_width, math.pi / 2),),
        rng_seed=rng_seed,
    )


def write_truth_csv(truth, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("t,x,y,theta\n")
        for t, x, y, th in truth:
            f.write(f"{t!r},{x!r},{y!r},{th!r}\n")


def read_truth_csv(path: str | Path) -> list[tuple[float, float, float, float]]:
    with open(path, encoding="utf-8") as f:
        next(f)
        return [tuple(float(v) for v in line.split(",")) for line in f if line.strip()]
