"""Kick planning: stochastic kick outcomes, offline value iteration over ball
positions, and the online depth-one policy with game-context shaping.

All values are costs in seconds and decisions take the argmin. A reward-maximizing
formulation is recovered with ``reward = -cost``.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.special import ndtr

from .field import (
    CODE_GOAL_AGAINST,
    CODE_GOAL_FOR,
    CODE_IN_PLAY,
    CODE_OUT,
    BallOutcome,
    CellId,
    FieldSpec,
    OutcomeKind,
    cell_centers,
    cell_of,
    center_of,
    classify_many,
    flat_index,
    outcome_from_code,
    wrap_angle,
)

log = logging.getLogger(__name__)

QUADRATURE_SPAN = 4.0  # kick densities are integrated over +/- this many sigmas
DEFAULT_QUADRATURE_POINTS = 2001
DEFAULT_N_DIRS = 16
SHORT_RANGE_M = 0.2  # below this distance the turn-walk-align path blends into a pure rotation
PRUNE_PROB = 1e-12


class DegenerateKick(ValueError):
    pass


class NoConvergence(RuntimeError):
    def __init__(self, residual: float, iterations: int):
        super().__init__(f"value iteration did not converge: residual {residual:.3g} s after {iterations} sweeps")
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class KickModel:
    name: str
    mean_distance_m: float
    sigma_distance_m: float
    sigma_angle_rad: float
    execution_time_s: float = 3.0
    # Robot heading relative to the kick direction when kicking (lateral kicks use +/- pi/2).
    facing_offsets_rad: tuple[float, ...] = (0.0,)

    def __post_init__(self):
        if not self.mean_distance_m > 0:
            raise ValueError(f"kick {self.name}: mean_distance_m must be > 0")
        if self.sigma_distance_m < 0 or self.sigma_angle_rad < 0:
            raise ValueError(f"kick {self.name}: sigmas must be >= 0")
        if self.execution_time_s < 0:
            raise ValueError(f"kick {self.name}: execution_time_s must be >= 0")
        if not self.facing_offsets_rad:
            raise ValueError(f"kick {self.name}: needs at least one facing offset")
        object.__setattr__(self, "facing_offsets_rad", tuple(float(o) for o in self.facing_offsets_rad))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "mean_distance_m": self.mean_distance_m,
            "sigma_distance_m": self.sigma_distance_m,
            "sigma_angle_rad": self.sigma_angle_rad,
            "execution_time_s": self.execution_time_s,
            "facing_offsets_rad": list(self.facing_offsets_rad),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KickModel":
        d = dict(d)
        if "facing_offsets_rad" in d:
            d["facing_offsets_rad"] = tuple(d["facing_offsets_rad"])
        return cls(**d)


def default_kicks() -> list[KickModel]:
    sigma_angle = math.radians(10.0)
    return [
        KickModel("powerful", 7.0, 0.15 * 7.0, sigma_angle),
        KickModel("pass", 2.0, 0.15 * 2.0, sigma_angle),
        KickModel("lateral", 1.5, 0.15 * 1.5, sigma_angle, facing_offsets_rad=(-math.pi / 2, math.pi / 2)),
    ]


@dataclass(frozen=True)
class KickAction:
    kick: KickModel
    orientation_index: int
    n_dirs: int = DEFAULT_N_DIRS

    def __post_init__(self):
        if not 0 <= self.orientation_index < self.n_dirs:
            raise ValueError(f"orientation_index {self.orientation_index} outside [0, {self.n_dirs})")

    @property
    def aim(self) -> float:
        return 2 * math.pi * self.orientation_index / self.n_dirs

    @property
    def sort_key(self) -> tuple[int, str]:
        return (self.orientation_index, self.kick.name)

    def to_dict(self) -> dict:
        return {"kick": self.kick.name, "orientation_index": self.orientation_index, "aim_rad": self.aim}


def make_actions(kicks, n_dirs: int = DEFAULT_N_DIRS) -> list[KickAction]:
    """Every kick in every direction, in tie-breaking order."""
    if not kicks:
        raise ValueError("at least one kick model is required")
    names = [k.name for k in kicks]
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate kick names in {names}")
    actions = [KickAction(k, i, n_dirs) for k in kicks for i in range(n_dirs)]
    return sorted(actions, key=lambda a: a.sort_key)


@dataclass(frozen=True)
class ApproachModel:
    walk_speed_mps: float = 0.15
    turn_speed_radps: float = 1.0
    placement_overhead_s: float = 2.0

    def __post_init__(self):
        if not (self.walk_speed_mps > 0 and self.turn_speed_radps > 0):
            raise ValueError("approach speeds must be > 0")
        if self.placement_overhead_s < 0:
            raise ValueError("placement_overhead_s must be >= 0")


@dataclass(frozen=True)
class RewardParams:
    out_penalty_s: float = 15.0
    forbidden_goal_penalty_s: float = 300.0
    opponent_corridor_width_m: float = 0.4
    opponent_penalty_s: float = 10.0
    own_goal_penalty_s: float = 300.0

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if value < 0:
                raise ValueError(f"{name} must be >= 0")


class RestartState(enum.Enum):
    NORMAL = "normal"
    KICKOFF_OURS_BALL_NOT_IN_PLAY = "kickoff_ours_ball_not_in_play"
    THROW_IN = "throw_in"
    INDIRECT_PENALTY = "indirect_penalty"

    @property
    def forbids_direct_goal(self) -> bool:
        return self is not RestartState.NORMAL


@dataclass(frozen=True)
class GameContext:
    kicker_pose: tuple[float, float, float] = (0.0, 0.0, 0.0)
    teammate_poses: tuple[tuple[float, float, float], ...] = ()
    opponent_positions: tuple[tuple[float, float], ...] | None = None
    restart_state: RestartState = RestartState.NORMAL

    def __post_init__(self):
        object.__setattr__(self, "kicker_pose", tuple(float(v) for v in self.kicker_pose))
        object.__setattr__(self, "teammate_poses", tuple(tuple(float(v) for v in p) for p in self.teammate_poses))
        if self.opponent_positions is not None:
            object.__setattr__(
                self, "opponent_positions", tuple(tuple(float(v) for v in p) for p in self.opponent_positions)
            )


@dataclass(frozen=True)
class TransitionDistribution:
    entries: tuple[tuple[BallOutcome, float], ...]

    def __post_init__(self):
        outcomes = [o for o, _ in self.entries]
        if len(set(outcomes)) != len(outcomes):
            raise ValueError("duplicate outcomes in transition distribution")
        if any(p < 0 for _, p in self.entries):
            raise ValueError("negative probability")

    @property
    def total(self) -> float:
        return math.fsum(p for _, p in self.entries)

    def as_dict(self) -> dict[BallOutcome, float]:
        return dict(self.entries)

    def probability(self, outcome: BallOutcome) -> float:
        return self.as_dict().get(outcome, 0.0)


@dataclass
class ValueFunction:
    """Expected seconds to score from each cell, shape ``(n_rows, n_cols)``."""

    values: np.ndarray
    iterations: int = 0
    residual: float = 0.0
    field: FieldSpec | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValueError("value grid must be 2-D (rows, cols)")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()

    def at(self, cell: CellId) -> float:
        return float(self.values[cell.row, cell.col])

    def compatible_with(self, field: FieldSpec) -> bool:
        if (self.n_rows, self.n_cols) != (field.n_rows, field.n_cols):
            return False
        return self.field is None or self.field == field


# ---------------------------------------------------------------- approach times


def time_to_reach(robot_pose, ball, kick_aim, model: ApproachModel):
    """Turn to the ball, walk to it, turn to the kick direction, then place.

    Broadcasts over numpy inputs (``robot_pose[..., 3]``, ``ball[..., 2]``).
    Within ``SHORT_RANGE_M`` of the ball the two rotations blend into a single
    direct rotation so the result stays continuous when the robot reaches the ball.
    """
    pose = np.asarray(robot_pose, dtype=float)
    ball = np.asarray(ball, dtype=float)
    dx = ball[..., 0] - pose[..., 0]
    dy = ball[..., 1] - pose[..., 1]
    dist = np.hypot(dx, dy)
    heading = np.arctan2(dy, dx)
    theta = pose[..., 2]
    via_ball = np.abs(wrap_angle(heading - theta)) + np.abs(wrap_angle(kick_aim - heading))
    direct = np.abs(wrap_angle(kick_aim - theta))
    blend = np.clip(dist / SHORT_RANGE_M, 0.0, 1.0)
    rotation = blend * via_ball + (1.0 - blend) * direct
    t = model.placement_overhead_s + dist / model.walk_speed_mps + rotation / model.turn_speed_radps
    return float(t) if np.ndim(t) == 0 else t


def kicker_time_to_ball(robot_pose, ball, action: KickAction, model: ApproachModel) -> float:
    """Approach time for a given action: best of the kick's allowed facings."""
    return min(time_to_reach(robot_pose, ball, action.aim + off, model) for off in action.kick.facing_offsets_rad)


def goal_aim(points, field: FieldSpec):
    """Heading from ``points`` toward the opponent goal center."""
    p = np.asarray(points, dtype=float)
    return np.arctan2(-p[..., 1], field.half_length - p[..., 0])


# ---------------------------------------------------------------- kick outcome density


def _normal_nodes(mean: float, sigma: float, n: int):
    """Midpoints and exact masses of ``n`` equal bins over +/- span sigma."""
    if sigma == 0 or n == 1:
        return np.array([mean]), np.array([1.0])
    edges = np.linspace(-QUADRATURE_SPAN, QUADRATURE_SPAN, n + 1)
    w = np.diff(ndtr(edges))
    return mean + sigma * 0.5 * (edges[1:] + edges[:-1]), w / w.sum()


class _DistanceLaw:
    """Kick distance: normal, truncated to +/- span sigma and to d >= 0."""

    def __init__(self, kick: KickModel):
        self.mean = kick.mean_distance_m
        self.sigma = kick.sigma_distance_m
        if self.sigma == 0:
            self.lo = self.hi = self.mean
        else:
            self.lo = max(0.0, self.mean - QUADRATURE_SPAN * self.sigma)
            self.hi = self.mean + QUADRATURE_SPAN * self.sigma
            self._flo = ndtr((self.lo - self.mean) / self.sigma)
            self._norm = ndtr(QUADRATURE_SPAN) - self._flo

    def cdf(self, d):
        d = np.asarray(d, dtype=float)
        if self.sigma == 0:
            return (d >= self.mean).astype(float)
        z = (np.clip(d, self.lo, self.hi) - self.mean) / self.sigma
        return np.clip((ndtr(z) - self._flo) / self._norm, 0.0, 1.0)


def _check_kick(kick: KickModel, field: FieldSpec):
    if kick.mean_distance_m + QUADRATURE_SPAN * kick.sigma_distance_m < field.grid_resolution_m:
        raise DegenerateKick(f"kick {kick.name} never leaves its cell on a {field.grid_resolution_m} m grid")


def _displacement_masses(kick: KickModel, aim: float, field: FieldSpec, n_angles: int):
    """Probability of landing ``(dcol, drow)`` cells away from a cell center.

    Angles use ``n_angles`` nodes; along each ray the distance density is
    integrated exactly between successive cell-boundary crossings.
    """
    res = field.grid_resolution_m
    law = _DistanceLaw(kick)
    phis, wphi = _normal_nodes(aim, kick.sigma_angle_rad, n_angles)
    c, s = np.cos(phis), np.sin(phis)
    k_max = int(math.ceil(law.hi / res)) + 1
    if law.sigma == 0:
        mid = np.full((len(phis), 1), law.mean)
        mass = np.ones_like(mid)
    else:
        offsets = (np.arange(-k_max, k_max + 1) + 0.5) * res
        with np.errstate(divide="ignore", invalid="ignore"):
            tx = offsets[None, :] / c[:, None]
            ty = offsets[None, :] / s[:, None]
        cuts = np.concatenate([tx, ty], axis=1)
        cuts = np.where(np.isfinite(cuts) & (cuts > law.lo) & (cuts < law.hi), cuts, law.hi)
        n = len(phis)
        cuts = np.concatenate([np.full((n, 1), law.lo), cuts, np.full((n, 1), law.hi)], axis=1)
        cuts.sort(axis=1)
        a, b = cuts[:, :-1], cuts[:, 1:]
        mass = law.cdf(b) - law.cdf(a)
        mid = 0.5 * (a + b)
    mass = mass * wphi[:, None]
    dcol = np.ceil(mid * c[:, None] / res - 0.5).astype(np.int64)
    drow = np.ceil(mid * s[:, None] / res - 0.5).astype(np.int64)
    keep = mass > 0
    span = 2 * k_max + 3
    key = (dcol[keep] + span) * (2 * span + 1) + (drow[keep] + span)
    uniq, inv = np.unique(key, return_inverse=True)
    m = np.bincount(inv, weights=mass[keep])
    return uniq // (2 * span + 1) - span, uniq % (2 * span + 1) - span, m, phis, wphi, law


def _outcome_keys(field: FieldSpec, codes, flats):
    n = field.n_cells
    return np.select(
        [codes == CODE_IN_PLAY, codes == CODE_OUT, codes == CODE_GOAL_FOR],
        [flats, n + flats, np.full_like(flats, 2 * n)],
        2 * n + 1,
    )


def _key_to_outcome(key: int, field: FieldSpec) -> BallOutcome:
    n = field.n_cells
    if key < n:
        return outcome_from_code(CODE_IN_PLAY, key, field)
    if key < 2 * n:
        return outcome_from_code(CODE_OUT, key - n, field)
    return outcome_from_code(CODE_GOAL_FOR if key == 2 * n else CODE_GOAL_AGAINST, -1, field)


def _transition_arrays(starts_flat, kick: KickModel, aim: float, field: FieldSpec, n_angles: int):
    """Aggregated transitions for several start cells of one action.

    Returns ``(start_pos, outcome_key, prob)`` where ``start_pos`` indexes
    ``starts_flat`` and outcome keys are: in-play cell ``f`` -> ``f``,
    out with reentry ``f`` -> ``n + f``, goal for -> ``2n``, goal against -> ``2n + 1``.
    """
    _check_kick(kick, field)
    starts_flat = np.asarray(starts_flat, dtype=np.int64)
    n_cells = field.n_cells
    n_keys = 2 * n_cells + 2
    dcol, drow, dmass, phis, wphi, law = _displacement_masses(kick, aim, field, n_angles)
    s_row, s_col = np.divmod(starts_flat, field.n_cols)
    ns = len(starts_flat)

    # Landing inside the field: the whole segment stays inside (convex field).
    tc = s_col[:, None] + dcol[None, :]
    tr = s_row[:, None] + drow[None, :]
    inside = (tc >= 0) & (tc < field.n_cols) & (tr >= 0) & (tr < field.n_rows)
    si, di = np.nonzero(inside)
    in_keys = si * n_keys + (tr[si, di] * field.n_cols + tc[si, di])
    in_mass = dmass[di]

    # Landing outside: the outcome is fixed by where the ray leaves the field.
    centers = cell_centers(field)[starts_flat]
    u = np.stack([np.cos(phis), np.sin(phis)], axis=-1)
    hl, hw = field.half_length, field.half_width
    with np.errstate(divide="ignore", invalid="ignore"):
        rx = np.where(u[None, :, 0] > 0, (hl - centers[:, None, 0]) / u[None, :, 0],
                      np.where(u[None, :, 0] < 0, (-hl - centers[:, None, 0]) / u[None, :, 0], np.inf))
        ry = np.where(u[None, :, 1] > 0, (hw - centers[:, None, 1]) / u[None, :, 1],
                      np.where(u[None, :, 1] < 0, (-hw - centers[:, None, 1]) / u[None, :, 1], np.inf))
    r_exit = np.minimum(rx, ry)
    out_mass = wphi[None, :] * (1.0 - law.cdf(r_exit))
    far = centers[:, None, :] + (2.0 * (field.length_m + field.width_m)) * u[None, :, :]
    codes, flats = classify_many(centers[:, None, :], far, field)
    out_keys = np.arange(ns)[:, None] * n_keys + _outcome_keys(field, codes, flats)

    keys = np.concatenate([in_keys, out_keys.ravel()])
    mass = np.concatenate([in_mass, out_mass.ravel()])
    keep = mass > 0
    uniq, inv = np.unique(keys[keep], return_inverse=True)
    prob = np.bincount(inv, weights=mass[keep])
    start_pos, okey = np.divmod(uniq, n_keys)
    big = prob > PRUNE_PROB
    start_pos, okey, prob = start_pos[big], okey[big], prob[big]
    totals = np.bincount(start_pos, weights=prob, minlength=ns)
    prob = prob / totals[start_pos]
    return start_pos, okey, prob


def transition_distribution(
    s: CellId, a: KickAction, field: FieldSpec, quadrature_points: int = DEFAULT_QUADRATURE_POINTS
) -> TransitionDistribution:
    """Outcome distribution of kick ``a`` from the center of cell ``s``.

    Distance ~ Normal(mean, sigma_distance), direction ~ Normal(aim, sigma_angle),
    both truncated to +/- 4 sigma. ``quadrature_points`` is the number of
    direction nodes.
    """
    if quadrature_points < 1:
        raise ValueError("quadrature_points must be >= 1")
    _, okey, prob = _transition_arrays([flat_index(s, field)], a.kick, a.aim, field, quadrature_points)
    return TransitionDistribution(tuple((_key_to_outcome(int(k), field), float(p)) for k, p in zip(okey, prob)))


# ---------------------------------------------------------------- costs


def _reach_from_kick(field: FieldSpec, approach: ApproachModel, start_xy, targets_xy):
    """Offline reach time: robot stands where it kicked, facing the new ball
    position, walks there and lines up toward the opponent goal."""
    start_xy = np.asarray(start_xy, dtype=float)
    targets_xy = np.asarray(targets_xy, dtype=float)
    start_xy = np.broadcast_to(start_xy, targets_xy.shape)
    heading = np.arctan2(targets_xy[..., 1] - start_xy[..., 1], targets_xy[..., 0] - start_xy[..., 0])
    pose = np.concatenate([start_xy, heading[..., None]], axis=-1)
    return time_to_reach(pose, targets_xy, goal_aim(targets_xy, field), approach)


def _next_cells(field: FieldSpec, okey: np.ndarray) -> np.ndarray:
    """Cell where play continues for each outcome key (-1 once a goal is scored)."""
    n = field.n_cells
    center = flat_index(cell_of((0.0, 0.0), field), field)
    return np.select([okey < n, okey < 2 * n, okey == 2 * n], [okey, okey - n, -1], center)


def _base_costs(field, approach, reward, kick: KickModel, start_flat, okey):
    """Offline per-outcome cost in seconds (kick time, reach time, penalties)."""
    n = field.n_cells
    centers = cell_centers(field)
    cost = np.full(len(okey), kick.execution_time_s, dtype=float)
    cont = _next_cells(field, okey)
    movable = okey < 2 * n
    if np.any(movable):
        cost[movable] += _reach_from_kick(field, approach, centers[start_flat[movable]], centers[cont[movable]])
    cost[(okey >= n) & (okey < 2 * n)] += reward.out_penalty_s
    cost[okey == 2 * n + 1] += reward.own_goal_penalty_s
    return cost


@dataclass(frozen=True)
class CostTerms:
    base: float
    forbidden_goal: float
    teammate: float
    opponent: float

    @property
    def total(self) -> float:
        return self.base + self.forbidden_goal + self.teammate + self.opponent


def _segment_distance(points, a, b):
    """Distance from each point to segment a-b."""
    points = np.asarray(points, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0:
        return np.hypot(*(points - a).T)
    t = np.clip((points - a) @ ab / denom, 0.0, 1.0)
    proj = a + t[:, None] * ab
    return np.hypot(*(points - proj).T)


def _outcome_point(outcome: BallOutcome, field: FieldSpec):
    if outcome.kind is OutcomeKind.GOAL_FOR:
        return (field.half_length, 0.0)
    if outcome.kind is OutcomeKind.GOAL_AGAINST:
        return (-field.half_length, 0.0)
    return center_of(outcome.cell, field)


def cost_terms(
    s: CellId,
    outcome: BallOutcome,
    ctx: GameContext,
    approach: ApproachModel,
    reward: RewardParams,
    field: FieldSpec,
    kick: KickModel | None = None,
) -> CostTerms:
    """Breakdown of :func:`shaped_cost`.

    ``base`` is the offline cost (kick execution when ``kick`` is given, the
    kicker's reach time, out and own-goal penalties). The teammate term is the
    closest robot's reach time minus the kicker's; the kicker's reach is measured
    from where it kicked, as offline.
    """
    n = field.n_cells
    s_flat = flat_index(s, field)
    key = _outcome_key(outcome, field)
    okey = np.array([key])
    base = float(_base_costs(field, approach, reward, kick or _NO_KICK, np.array([s_flat]), okey)[0])

    forbidden = 0.0
    if outcome.kind is OutcomeKind.GOAL_FOR and ctx.restart_state.forbids_direct_goal:
        forbidden = reward.forbidden_goal_penalty_s

    teammate = 0.0
    if key < 2 * n and ctx.teammate_poses:
        target = np.asarray(center_of(outcome.cell, field))
        t_kicker = float(_reach_from_kick(field, approach, center_of(s, field), target))
        aim = goal_aim(target, field)
        t_mates = time_to_reach(np.asarray(ctx.teammate_poses), target, aim, approach)
        teammate = min(t_kicker, float(np.min(t_mates))) - t_kicker

    opponent = 0.0
    if ctx.opponent_positions:
        dist = _segment_distance(np.asarray(ctx.opponent_positions), center_of(s, field), _outcome_point(outcome, field))
        if np.any(dist <= reward.opponent_corridor_width_m / 2):
            opponent = reward.opponent_penalty_s
    return CostTerms(base, forbidden, teammate, opponent)


_NO_KICK = KickModel("none", 1.0, 0.0, 0.0, execution_time_s=0.0)


def _outcome_key(outcome: BallOutcome, field: FieldSpec) -> int:
    n = field.n_cells
    if outcome.kind is OutcomeKind.GOAL_FOR:
        return 2 * n
    if outcome.kind is OutcomeKind.GOAL_AGAINST:
        return 2 * n + 1
    f = flat_index(outcome.cell, field)
    return f if outcome.kind is OutcomeKind.IN_PLAY else n + f


def shaped_cost(
    s: CellId,
    outcome: BallOutcome,
    ctx: GameContext,
    approach: ApproachModel,
    reward: RewardParams,
    field: FieldSpec,
    kick: KickModel | None = None,
) -> float:
    """Online cost in seconds of the ball going from ``s`` to ``outcome``."""
    return cost_terms(s, outcome, ctx, approach, reward, field, kick).total


# ---------------------------------------------------------------- planner


@dataclass
class ActionTable:
    """Sparse transitions of one action over every cell."""

    action: KickAction
    indptr: np.ndarray  # per start cell, CSR style
    okey: np.ndarray
    prob: np.ndarray
    cost: np.ndarray  # offline per-outcome cost
    next_cell: np.ndarray  # -1 for goal for

    def rows(self, s_flat: int) -> slice:
        return slice(self.indptr[s_flat], self.indptr[s_flat + 1])


@dataclass(frozen=True)
class ActionScore:
    action: KickAction
    expected_cost_s: float

    def to_dict(self) -> dict:
        return {**self.action.to_dict(), "expected_cost_s": self.expected_cost_s}


class KickPlanner:
    """Kick catalog on a field, with cached transition tables."""

    def __init__(
        self,
        field: FieldSpec,
        kicks=None,
        approach: ApproachModel | None = None,
        reward: RewardParams | None = None,
        n_dirs: int = DEFAULT_N_DIRS,
        quadrature_points: int = DEFAULT_QUADRATURE_POINTS,
    ):
        self.field = field
        self.kicks = list(kicks) if kicks is not None else default_kicks()
        self.approach = approach or ApproachModel()
        self.reward = reward or RewardParams()
        self.n_dirs = n_dirs
        self.quadrature_points = quadrature_points
        self.actions = make_actions(self.kicks, n_dirs)
        for kick in self.kicks:
            _check_kick(kick, field)

    @cached_property
    def tables(self) -> list[ActionTable]:
        field = self.field
        starts = np.arange(field.n_cells)
        out = []
        for action in self.actions:
            pos, okey, prob = _transition_arrays(starts, action.kick, action.aim, field, self.quadrature_points)
            indptr = np.concatenate([[0], np.cumsum(np.bincount(pos, minlength=field.n_cells))])
            cost = _base_costs(field, self.approach, self.reward, action.kick, pos, okey)
            out.append(ActionTable(action, indptr, okey, prob, cost, _next_cells(field, okey)))
        return out

    def with_reward(self, reward: RewardParams) -> "KickPlanner":
        """Same catalog with other reward weights.

        Tables are shared when the weights baked into offline costs (out and
        own-goal penalties) are unchanged; the other weights only enter the
        online score.
        """
        other = KickPlanner(self.field, self.kicks, self.approach, reward, self.n_dirs, self.quadrature_points)
        same_offline = (reward.out_penalty_s, reward.own_goal_penalty_s) == (
            self.reward.out_penalty_s, self.reward.own_goal_penalty_s)
        if same_offline and "tables" in self.__dict__:
            other.__dict__["tables"] = self.tables
        return other

    @cached_property
    def _matrices(self):
        n = self.field.n_cells
        mats, costs = [], []
        for t in self.tables:
            starts = np.repeat(np.arange(n), np.diff(t.indptr))
            live = t.next_cell >= 0
            mats.append(sparse.csr_matrix((t.prob[live], (starts[live], t.next_cell[live])), shape=(n, n)))
            costs.append(np.bincount(starts, weights=t.prob * t.cost, minlength=n))
        return mats, np.array(costs)

    def q_values(self, v_flat: np.ndarray) -> np.ndarray:
        """Offline expected cost of every action from every cell, shape (n_actions, n_cells)."""
        mats, costs = self._matrices
        return costs + np.array([m @ v_flat for m in mats])

    def solve(self, epsilon: float = 1e-3, max_iters: int = 10_000) -> ValueFunction:
        if not epsilon > 0:
            raise ValueError("epsilon must be > 0")
        v = np.zeros(self.field.n_cells)
        residual = math.inf
        for it in range(1, max_iters + 1):
            v_new = self.q_values(v).min(axis=0)
            residual = float(np.max(np.abs(v_new - v)))
            v = v_new
            if residual < epsilon:
                log.info("value iteration converged after %d sweeps (residual %.3g s)", it, residual)
                return ValueFunction(v.reshape(self.field.n_rows, self.field.n_cols), it, residual, self.field)
        raise NoConvergence(residual, max_iters)

    def greedy(self, value: ValueFunction, tol: float = 1e-9) -> list[KickAction]:
        """Offline greedy action for every cell (flat order)."""
        q = self.q_values(value.flat)
        return [self.actions[_first_min(q[:, s], tol)] for s in range(self.field.n_cells)]

    def transition(self, s: CellId, action: KickAction) -> TransitionDistribution:
        t = self.tables[self.actions.index(action)]
        rows = t.rows(flat_index(s, self.field))
        return TransitionDistribution(
            tuple((_key_to_outcome(int(k), self.field), float(p)) for k, p in zip(t.okey[rows], t.prob[rows]))
        )

    def online_costs(self, ball: CellId, ctx: GameContext, value: ValueFunction) -> np.ndarray:
        """Expected shaped cost plus value-to-go of each action from ``ball``."""
        if not value.compatible_with(self.field):
            raise ValueError("value function was solved for a different field")
        field = self.field
        n = field.n_cells
        s_flat = flat_index(ball, field)
        s_xy = np.asarray(center_of(ball, field))
        centers = cell_centers(field)
        v_flat = value.flat
        forbid = ctx.restart_state.forbids_direct_goal
        mates = np.asarray(ctx.teammate_poses, dtype=float).reshape(-1, 3)
        opps = np.asarray(ctx.opponent_positions or [], dtype=float).reshape(-1, 2)
        scores = np.empty(len(self.actions))
        for i, t in enumerate(self.tables):
            rows = t.rows(s_flat)
            okey, prob, cost, nxt = t.okey[rows], t.prob[rows], t.cost[rows], t.next_cell[rows]
            total = cost + np.where(nxt >= 0, v_flat[np.maximum(nxt, 0)], 0.0)
            if forbid:
                total = total + np.where(okey == 2 * n, self.reward.forbidden_goal_penalty_s, 0.0)
            movable = okey < 2 * n
            if len(mates) and np.any(movable):
                targets = centers[nxt[movable]]
                t_kicker = _reach_from_kick(field, self.approach, s_xy, targets)
                aims = goal_aim(targets, field)
                t_mates = time_to_reach(mates[:, None, :], targets[None, :, :], aims[None, :], self.approach)
                shaping = np.minimum(t_kicker, t_mates.min(axis=0)) - t_kicker
                total = total.copy()
                total[movable] += shaping
            if len(opps):
                ends = np.where(
                    (okey < 2 * n)[:, None],
                    centers[np.maximum(nxt, 0)],
                    np.where((okey == 2 * n)[:, None], [field.half_length, 0.0], [-field.half_length, 0.0]),
                )
                hit = np.zeros(len(okey), dtype=bool)
                for o in opps:
                    hit |= _segments_point_distance(s_xy, ends, o) <= self.reward.opponent_corridor_width_m / 2
                total = total + np.where(hit, self.reward.opponent_penalty_s, 0.0)
            scores[i] = float(prob @ total)
        return scores

    def choose(self, ball: CellId, ctx: GameContext, value: ValueFunction, tol: float = 1e-9):
        scores = self.online_costs(ball, ctx, value)
        best = _first_min(scores, tol)
        return self.actions[best], [ActionScore(a, float(c)) for a, c in zip(self.actions, scores)]


def _segments_point_distance(a, ends, p):
    """Distance from point ``p`` to each segment ``a -> ends[i]``."""
    a = np.asarray(a, dtype=float)
    ab = ends - a
    denom = np.einsum("ij,ij->i", ab, ab)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(denom > 0, np.clip((p - a) @ ab.T / denom, 0.0, 1.0), 0.0)
    proj = a + t[:, None] * ab
    return np.hypot(*(p - proj).T)


def _first_min(values: np.ndarray, tol: float) -> int:
    """Index of the first value within ``tol`` of the minimum (tie-breaking order)."""
    return int(np.flatnonzero(values <= values.min() + tol)[0])


def solve_value_function(
    field: FieldSpec,
    kicks,
    approach: ApproachModel,
    reward: RewardParams,
    epsilon: float = 1e-3,
    max_iters: int = 10_000,
    n_dirs: int = DEFAULT_N_DIRS,
    quadrature_points: int = DEFAULT_QUADRATURE_POINTS,
) -> ValueFunction:
    planner = KickPlanner(field, kicks, approach, reward, n_dirs, quadrature_points)
    return planner.solve(epsilon, max_iters)


def choose_action(
    ball: CellId,
    ctx: GameContext,
    value: ValueFunction,
    planner: KickPlanner,
) -> tuple[KickAction, list[ActionScore]]:
    """Depth-one online decision: argmin over actions of expected shaped cost plus V."""
    return planner.choose(ball, ctx, value)
