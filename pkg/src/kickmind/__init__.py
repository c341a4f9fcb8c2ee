"""Kick planning and belief summaries for humanoid robot soccer.

``field`` holds the field geometry and ball-outcome rules, ``planner`` the
kick models, value iteration and online policy, ``localization`` the particle
filter, ``clustering`` the mixture summaries of its belief and ``sim`` the
episode simulator and synthetic log generator.
"""

from .clustering import ClusteringResult, deserialize_belief, em_fit, select_k, serialize_belief
from .field import BallOutcome, CellId, FieldSpec, OutcomeKind, cell_of, center_of, classify_ball_motion, landmarks
from .localization import ParticleFilter, ParticleSet
from .planner import (
    GameContext,
    KickPlanner,
    RestartState,
    ValueFunction,
    choose_action,
    shaped_cost,
    solve_value_function,
    time_to_reach,
    transition_distribution,
)

__all__ = [
    "BallOutcome",
    "CellId",
    "ClusteringResult",
    "FieldSpec",
    "GameContext",
    "KickPlanner",
    "OutcomeKind",
    "ParticleFilter",
    "ParticleSet",
    "RestartState",
    "ValueFunction",
    "cell_of",
    "center_of",
    "choose_action",
    "classify_ball_motion",
    "deserialize_belief",
    "em_fit",
    "landmarks",
    "select_k",
    "serialize_belief",
    "shaped_cost",
    "solve_value_function",
    "time_to_reach",
    "transition_distribution",
]
