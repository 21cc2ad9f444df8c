"""Run configuration: one JSON document covering every stage of a run.

Unknown keys are rejected so a typo never silently falls back to a default.
Every field has a default; an empty JSON object is a valid config.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional

from .curriculum import CurriculumConfig
from .engine import BoardConfig, InvalidConfigError
from .league import LeagueConfig
from .policy import NetworkConfig, PpoConfig
from .rewards import MODES, RewardConfig

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AnnealingConfig:
    mode: str = "adaptive"
    k: float = 1.2
    linear_schedule: tuple[int, int] = (0, 5_000_000)
    window_size: int = 100

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"annealing mode must be one of {MODES}")
        if self.k <= 0:
            raise ValueError("k must be positive")
        if self.linear_schedule[0] >= self.linear_schedule[1]:
            raise ValueError("linear schedule start must precede end")


@dataclass(frozen=True)
class MockConfig:
    """Scripted stand-ins for learning, so orchestration runs in seconds.

    ``outcomes`` is a cyclic curriculum outcome stream of tokens like
    ``"60W"``, ``"40L"`` or ``"5T"``.  ``strengths`` maps league slots to
    positive weights; a match between a and b goes to a with probability
    ``s_a / (s_a + s_b)`` (missing slots weigh 1).  ``episode_ticks`` is the
    step count charged per mocked episode.
    """

    enabled: bool = False
    outcomes: tuple[str, ...] = ("60W", "40L")
    strengths: dict[str, float] = field(default_factory=dict)
    episode_ticks: int = 100

    def __post_init__(self) -> None:
        parse_outcome_stream(self.outcomes)
        if any(not s > 0 for s in self.strengths.values()):
            raise ValueError("mock strengths must be positive")
        if self.episode_ticks < 1:
            raise ValueError("episode_ticks must be positive")


def parse_outcome_stream(tokens) -> list[tuple[int, str]]:
    """``["60W", "40L"]`` -> ``[(60, "win"), (40, "loss")]``."""
    names = {"W": "win", "T": "tie", "L": "loss"}
    out = []
    for tok in tokens:
        tok = str(tok).strip().upper()
        count, kind = tok[:-1], tok[-1:]
        if kind not in names or not count.isdigit() or int(count) < 1:
            raise ValueError(f"bad outcome token {tok!r}; expected e.g. '60W', '40L', '5T'")
        out.append((int(count), names[kind]))
    if not out:
        raise ValueError("outcome stream is empty")
    return out


@dataclass(frozen=True)
class RunConfig:
    board: BoardConfig = field(default_factory=BoardConfig)
    rewards: RewardConfig = field(default_factory=RewardConfig)
    annealing: AnnealingConfig = field(default_factory=AnnealingConfig)
    curriculum: CurriculumConfig = field(default_factory=CurriculumConfig)
    league: LeagueConfig = field(default_factory=LeagueConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    mock: MockConfig = field(default_factory=MockConfig)
    # environment steps for the curriculum stage
    curriculum_steps: int = 5_000_000
    # matches for the self-play stage
    league_matches: int = 100_000
    seed: int = 0
    output_dir: str = "runs/default"
    snapshot_interval: int = 50
    checkpoint_interval: int = 10
    # round robin settings for ``evaluate``
    games_per_pair: int = 100
    schema_version: int = SCHEMA_VERSION

    def validate(self) -> RunConfig:
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}, expected {SCHEMA_VERSION}")
        try:
            self.board.validate()
        except InvalidConfigError as exc:
            raise ConfigError(f"board: {exc}") from None
        for name in ("curriculum_steps", "league_matches", "snapshot_interval", "checkpoint_interval", "games_per_pair"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _build(cls, data: Any, where: str):
    """Recursively build a (frozen) dataclass from plain JSON data."""
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    hints = _nested_types(cls)
    kwargs = {}
    for name, value in data.items():
        if name in hints:
            kwargs[name] = _build(hints[name], value, f"{where}.{name}")
        elif isinstance(value, list):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _nested_types(cls) -> dict[str, type]:
    nested = {
        RunConfig: {
            "board": BoardConfig, "rewards": RewardConfig, "annealing": AnnealingConfig,
            "curriculum": CurriculumConfig, "league": LeagueConfig, "ppo": PpoConfig, "mock": MockConfig,
        },
        PpoConfig: {"network": NetworkConfig},
    }
    return nested.get(cls, {})


def from_dict(data: dict) -> RunConfig:
    return _build(RunConfig, data, "config").validate()


def load(path: str | Path, overrides: Optional[dict] = None) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    data.update(overrides or {})
    return from_dict(data)
