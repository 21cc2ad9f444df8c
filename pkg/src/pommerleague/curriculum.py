"""Three-phase curriculum against increasingly capable scripted opponents."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum

from .agents import ScriptedKind
from .rewards import AnnealingState

WIN, TIE, LOSS = "win", "tie", "loss"
OUTCOMES = (WIN, TIE, LOSS)


class CurriculumError(RuntimeError):
    pass


class Phase(IntEnum):
    STATIC = 1
    SIMPLE_MOVING = 2
    SIMPLE_BOMB = 3
    DONE = 4


_OPPONENT = {
    Phase.STATIC: ScriptedKind.STATIC,
    Phase.SIMPLE_MOVING: ScriptedKind.SIMPLE_MOVING,
    Phase.SIMPLE_BOMB: ScriptedKind.SIMPLE_BOMB,
}


@dataclass(frozen=True)
class CurriculumConfig:
    advance_threshold: float = 0.55
    window_size: int = 100

    def __post_init__(self) -> None:
        if not 0.0 < self.advance_threshold < 1.0:
            raise ValueError("advance_threshold must lie in (0, 1)")
        if self.window_size < 1:
            raise ValueError("window_size must be positive")


@dataclass
class CurriculumState:
    phase: Phase = Phase.STATIC
    advance_threshold: float = 0.55
    window_size: int = 100
    win_window: deque = field(default_factory=deque)

    def __post_init__(self) -> None:
        self.phase = Phase(self.phase)
        self.win_window = deque(self.win_window, maxlen=self.window_size)

    @classmethod
    def from_config(cls, config: CurriculumConfig) -> CurriculumState:
        return cls(advance_threshold=config.advance_threshold, window_size=config.window_size)

    @property
    def win_rate(self) -> float:
        if not self.win_window:
            return 0.0
        return sum(1 for o in self.win_window if o == WIN) / len(self.win_window)

    def to_dict(self) -> dict:
        return {
            "phase": int(self.phase),
            "advance_threshold": self.advance_threshold,
            "window_size": self.window_size,
            "win_window": list(self.win_window),
        }

    @classmethod
    def from_dict(cls, d: dict) -> CurriculumState:
        return cls(
            phase=Phase(d["phase"]),
            advance_threshold=d["advance_threshold"],
            window_size=d["window_size"],
            win_window=deque(d["win_window"]),
        )


def current_opponent(cur: CurriculumState) -> ScriptedKind:
    if cur.phase == Phase.DONE:
        raise CurriculumError("curriculum finished; there is no scripted opponent")
    return _OPPONENT[cur.phase]


def record_episode(cur: CurriculumState, outcome: str) -> CurriculumState:
    if outcome not in OUTCOMES:
        raise ValueError(f"outcome must be one of {OUTCOMES}, got {outcome!r}")
    cur.win_window.append(outcome)
    return cur


def should_advance(cur: CurriculumState) -> bool:
    # a half-full window is not evidence enough
    return len(cur.win_window) == cur.window_size and cur.win_rate >= cur.advance_threshold


def advance(cur: CurriculumState, anneal: AnnealingState | None = None) -> CurriculumState:
    """Move to the next phase with a fresh window.

    Leaving the last phase switches reward annealing off for good: from then
    on only the game reward is used.
    """
    if cur.phase == Phase.DONE:
        raise CurriculumError("cannot advance past the end of the curriculum")
    cur.phase = Phase(cur.phase + 1)
    cur.win_window.clear()
    if cur.phase == Phase.DONE and anneal is not None:
        anneal.mode = "off"
    return cur
