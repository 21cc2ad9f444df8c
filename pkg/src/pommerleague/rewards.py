"""Exploration and game rewards, blended by an annealing factor."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from .engine import GameResult, StepEvents

MODES = ("adaptive", "linear", "off")


@dataclass(frozen=True)
class RewardConfig:
    item_pickup: float = 0.1
    bomb_place: float = 0.005
    per_enemy_death: float = 1.0
    own_death: float = -1.0
    tie: float = -1.0


@dataclass
class AnnealingState:
    """Performance-driven (or scheduled) weight of the exploration reward.

    ``x`` is the mean number of enemy deaths over the last ``window_size``
    episodes, clamped to ``[0, 2]``.
    """

    mode: str = "adaptive"
    k: float = 1.2
    x: float = 0.0
    linear_schedule: tuple[int, int] = (0, 5_000_000)
    window_size: int = 100
    performance_window: deque = field(default_factory=deque)

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"annealing mode must be one of {MODES}, got {self.mode!r}")
        if self.k <= 0:
            raise ValueError("k must be positive")
        start, end = self.linear_schedule
        if start >= end:
            raise ValueError("linear schedule start must precede end")
        self.performance_window = deque(self.performance_window, maxlen=self.window_size)
        self.x = min(max(self.x, 0.0), 2.0)

    def alpha(self, step: int = 0) -> float:
        if self.mode == "off":
            return 0.0
        if self.mode == "linear":
            return linear_alpha(step, self.linear_schedule)
        return annealing_alpha(self.x, self.k)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "k": self.k,
            "x": self.x,
            "linear_schedule": list(self.linear_schedule),
            "window_size": self.window_size,
            "performance_window": list(self.performance_window),
        }

    @classmethod
    def from_dict(cls, d: dict) -> AnnealingState:
        return cls(
            mode=d["mode"],
            k=d["k"],
            x=d["x"],
            linear_schedule=tuple(d["linear_schedule"]),
            window_size=d["window_size"],
            performance_window=deque(d["performance_window"]),
        )


def exploration_reward(events: StepEvents, agent_id: int, config: RewardConfig = RewardConfig()) -> float:
    return (
        config.item_pickup * len(events.items_picked[agent_id])
        + config.bomb_place * events.bombs_placed[agent_id]
    )


def game_reward(
    result: Optional[GameResult],
    agent_id: int,
    died_this_tick: bool,
    config: RewardConfig = RewardConfig(),
) -> float:
    """Sparse reward for one agent at one tick.

    The death penalty lands on the tick the agent dies; survivors are paid at
    the terminal tick.  Agents already dead are not charged the tie penalty.
    """
    if died_this_tick:
        return config.own_death
    if result is None:
        return 0.0
    if result.is_tie:
        return config.tie
    return config.per_enemy_death * result.enemy_deaths[agent_id]


def annealing_alpha(x: float, k: float = 1.2) -> float:
    return 1.0 - math.tanh(k * x)


def linear_alpha(step: int, schedule: tuple[int, int]) -> float:
    start, end = schedule
    if start >= end:
        raise ValueError("linear schedule start must precede end")
    frac = (step - start) / (end - start)
    return min(max(1.0 - frac, 0.0), 1.0)


def combined_reward(e_t: float, R: float, alpha: float) -> float:
    return alpha * e_t + (1.0 - alpha) * R


def update_performance(anneal: AnnealingState, episode_enemy_deaths: int) -> AnnealingState:
    anneal.performance_window.append(episode_enemy_deaths)
    window = anneal.performance_window
    anneal.x = min(max(sum(window) / len(window), 0.0), 2.0)
    return anneal
