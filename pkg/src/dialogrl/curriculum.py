"""Offline goal-difficulty classification and four-stage training schedules.

Difficulty is the number of request slots: one is easy, two or three are
middle, four or five are difficult. A schedule names which buffer feeds
each of four stages; the last stage always draws from the full goal set.
With the canonical 300 epochs the stages span 0-69, 70-139, 140-209 and
210-299; shorter or longer runs scale the boundaries proportionally.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .domain import UserGoal
from .errors import ConfigError, SamplingError

EASY, MIDDLE, DIFFICULT, ALL = "easy", "middle", "difficult", "all"
LEVELS = (EASY, MIDDLE, DIFFICULT, ALL)

SCHEDULES: dict[str, tuple[str, str, str, str]] = {
    "EMD": (EASY, MIDDLE, DIFFICULT, ALL),
    "EDD": (EASY, DIFFICULT, DIFFICULT, ALL),
    "EED": (EASY, EASY, DIFFICULT, ALL),
    "DME": (DIFFICULT, MIDDLE, EASY, ALL),
    "DEE": (DIFFICULT, EASY, EASY, ALL),
    "DDM": (DIFFICULT, DIFFICULT, MIDDLE, ALL),
    "RANDOM": (ALL, ALL, ALL, ALL),
}

EFS_SCHEDULES = ("EMD", "EDD", "EED")
DFS_SCHEDULES = ("DME", "DEE", "DDM")

CANONICAL_EPOCHS = 300
CANONICAL_BOUNDARIES = (70, 140, 210)


def classify_goal(goal: UserGoal) -> str:
    n = len(goal.request_slots)
    if n < 1 or n > 5:
        raise ConfigError(f"goal must have 1..5 request slots, got {n}")
    if n == 1:
        return EASY
    if n in (2, 3):
        return MIDDLE
    return DIFFICULT


@dataclass
class GoalBuffers:
    """The goal set partitioned by difficulty; ``total`` keeps input order."""

    easy: list[UserGoal] = field(default_factory=list)
    middle: list[UserGoal] = field(default_factory=list)
    difficult: list[UserGoal] = field(default_factory=list)
    total: list[UserGoal] = field(default_factory=list)

    def for_level(self, level: str) -> list[UserGoal]:
        if level not in LEVELS:
            raise ConfigError(f"unknown difficulty level {level!r}")
        return getattr(self, level if level != ALL else "total")


def build_buffers(goals: list[UserGoal]) -> GoalBuffers:
    buffers = GoalBuffers(total=list(goals))
    for goal in goals:
        getattr(buffers, classify_goal(goal)).append(goal)
    return buffers


def stage_boundaries(total_epochs: int = CANONICAL_EPOCHS) -> tuple[int, int, int]:
    """First epochs of stages 2..4, scaled from the canonical 70/140/210."""
    if total_epochs < 4:
        raise ConfigError(f"need at least 4 epochs for 4 stages, got {total_epochs}")
    if total_epochs == CANONICAL_EPOCHS:
        return CANONICAL_BOUNDARIES
    return tuple(round(total_epochs * b / CANONICAL_EPOCHS) for b in CANONICAL_BOUNDARIES)


def stage_index(epoch: int, total_epochs: int = CANONICAL_EPOCHS) -> int:
    """1-based stage for an epoch."""
    if not 0 <= epoch < total_epochs:
        raise ConfigError(f"epoch {epoch} outside 0..{total_epochs - 1}")
    b1, b2, b3 = stage_boundaries(total_epochs)
    if epoch < b1:
        return 1
    if epoch < b2:
        return 2
    if epoch < b3:
        return 3
    return 4


def stage_for_epoch(schedule: str, epoch: int, total_epochs: int = CANONICAL_EPOCHS) -> str:
    """Which difficulty buffer feeds this epoch under the named schedule."""
    if schedule not in SCHEDULES:
        raise ConfigError(f"unknown schedule {schedule!r}; pick one of {sorted(SCHEDULES)}")
    return SCHEDULES[schedule][stage_index(epoch, total_epochs) - 1]


def schedule_levels(name: str, custom: dict | None = None) -> tuple[str, str, str, str]:
    """Resolve a schedule name to its four stage levels.

    ``custom`` maps extra schedule names to four-level lists, as configured
    in a run config; builtins win on collision.
    """
    if name in SCHEDULES:
        return SCHEDULES[name]
    if custom and name in custom:
        levels = tuple(custom[name])
        if len(levels) != 4 or any(lv not in LEVELS for lv in levels):
            raise ConfigError(f"custom schedule {name!r} must list 4 levels from {LEVELS}")
        return levels
    raise ConfigError(f"unknown schedule {name!r}; pick one of {sorted(SCHEDULES)} or define it")


def sample_goal(buffers: GoalBuffers, level: str, rng: np.random.Generator) -> UserGoal:
    pool = buffers.for_level(level)
    if not pool:
        raise SamplingError(f"no goals in the {level} buffer")
    return pool[int(rng.integers(len(pool)))]


def strategy_of(schedule: str) -> str:
    """EFS / DFS / Random grouping used in reports."""
    if schedule in EFS_SCHEDULES:
        return "EFS"
    if schedule in DFS_SCHEDULES:
        return "DFS"
    return "Random"
