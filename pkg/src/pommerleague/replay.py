"""Line-delimited JSON replay files.

Every line is one JSON object with a ``type`` field:

``header``  ``version`` (int, currently 1), ``seed`` (int board seed) and
            ``config`` (every BoardConfig field by name).
``tick``    ``tick`` (tick number of the state produced), ``actions`` (four
            ints, agent 0..3, values of :class:`~pommerleague.engine.Action`)
            and ``hash`` (hex :func:`~pommerleague.engine.state_hash` of the
            post-tick state).
``result``  ``winner`` (team id or null for a tie), ``enemy_deaths`` (four
            ints) and ``ticks`` (episode length).

Keys are written sorted, one record per line, so two replays diff cleanly.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import IO, Optional

from . import engine
from .engine import BoardConfig, GameResult

REPLAY_VERSION = 1


class ReplayError(ValueError):
    pass


class ReplayWriter:
    def __init__(self, stream: IO[str]):
        self.stream = stream

    def _emit(self, record: dict) -> None:
        self.stream.write(json.dumps(record, sort_keys=True) + "\n")

    def write_header(self, config: BoardConfig, seed: int) -> None:
        self._emit({"type": "header", "version": REPLAY_VERSION, "seed": seed, "config": asdict(config)})

    def write_tick(self, tick: int, actions, state_hash: str) -> None:
        self._emit({"type": "tick", "tick": tick, "actions": [int(a) for a in actions], "hash": state_hash})

    def write_result(self, result: GameResult, ticks: int) -> None:
        self._emit({
            "type": "result", "winner": result.winner,
            "enemy_deaths": list(result.enemy_deaths), "ticks": ticks,
        })


@dataclass
class Replay:
    config: BoardConfig
    seed: int
    ticks: list[dict]
    result: Optional[dict] = None


def read_replay(path: str | Path) -> Replay:
    header = None
    ticks = []
    result = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ReplayError(f"{path}:{lineno}: malformed record ({exc})") from None
            kind = rec.get("type")
            if kind == "header":
                if rec.get("version") != REPLAY_VERSION:
                    raise ReplayError(f"unsupported replay version {rec.get('version')}")
                header = rec
            elif kind == "tick":
                ticks.append(rec)
            elif kind == "result":
                result = rec
            else:
                raise ReplayError(f"{path}:{lineno}: unknown record type {kind!r}")
    if header is None:
        raise ReplayError(f"{path}: missing header record")
    try:
        config = BoardConfig(**header["config"])
        seed = int(header["seed"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ReplayError(f"{path}: bad header ({exc})") from None
    return Replay(config, seed, ticks, result)


@dataclass
class Verification:
    ok: bool
    ticks_checked: int
    first_divergent_tick: Optional[int] = None
    message: str = ""
    frames: list[str] = field(default_factory=list)


def verify_replay(replay: Replay, render: bool = False) -> Verification:
    """Re-simulate from the header seed and compare every recorded state hash."""
    state = engine.new_game(replay.config, replay.seed)
    frames = [engine.render(state)] if render else []
    for i, rec in enumerate(replay.ticks):
        try:
            state, _ = engine.step(state, rec["actions"])
        except engine.EngineError as exc:
            return Verification(False, i, rec["tick"], f"tick {rec['tick']}: {exc}", frames)
        if render:
            frames.append(engine.render(state))
        got = engine.state_hash(state)
        if state.tick != rec["tick"] or got != rec["hash"]:
            return Verification(
                False, i, rec["tick"],
                f"state diverges at tick {rec['tick']}: recorded hash {rec['hash']}, re-simulated {got}",
                frames,
            )
    return Verification(True, len(replay.ticks), frames=frames)
