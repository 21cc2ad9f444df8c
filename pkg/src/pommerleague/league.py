"""Population self-play: Elo bookkeeping, softmax matchmaking, replacement and round robins."""

from __future__ import annotations

import hashlib
import itertools
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .agents import ScriptedKind

FROZEN, LEARNER = "frozen", "learner"
FROZEN_KINDS = (ScriptedKind.STATIC, ScriptedKind.SIMPLE_MOVING, ScriptedKind.SIMPLE_BOMB)


class LeagueError(ValueError):
    pass


@dataclass(frozen=True)
class LeagueConfig:
    num_learners: int = 5
    k: float = 32.0
    initial_elo: float = 1000.0
    replace_threshold: float = 0.45
    window_size: int = 200
    eval_interval: int = 100
    # only copy from learners rated above the weak one
    strict_stronger: bool = False

    def __post_init__(self) -> None:
        if self.num_learners < 2:
            raise ValueError("a league needs at least two learners")
        if not 0.0 < self.replace_threshold < 1.0:
            raise ValueError("replace_threshold must lie in (0, 1)")
        if self.window_size < 1 or self.eval_interval < 1:
            raise ValueError("window_size and eval_interval must be positive")
        if not (math.isfinite(self.k) and self.k > 0):
            raise ValueError("k must be positive")


# -- Elo ---------------------------------------------------------------------

def expected_score(r_a: float, r_b: float) -> float:
    """Probability-like expected score of A against B.

    The lower-rated side is computed as one minus the higher-rated side, so
    ``expected_score(a, b) + expected_score(b, a) == 1`` holds exactly in
    floating point.
    """
    if r_a < r_b:
        return 1.0 - expected_score(r_b, r_a)
    return 1.0 / (1.0 + 10.0 ** ((r_b - r_a) / 400.0))


@dataclass
class EloTable:
    ratings: dict[str, float] = field(default_factory=dict)
    k: float = 32.0

    def __getitem__(self, agent_id: str) -> float:
        try:
            return self.ratings[agent_id]
        except KeyError:
            raise LeagueError(f"unknown agent {agent_id!r}") from None

    def add(self, agent_id: str, rating: float = 1000.0) -> None:
        self.ratings[agent_id] = float(rating)


def update_elo(table: EloTable, a: str, b: str, s_a: float) -> EloTable:
    if s_a not in (0.0, 0.5, 1.0):
        raise LeagueError(f"score must be 0, 0.5 or 1, got {s_a}")
    r_a, r_b = table[a], table[b]
    delta = table.k * (s_a - expected_score(r_a, r_b))
    # B's change is K((1-S_A) - (1-E_A)) = -delta
    table.ratings[a] = r_a + delta
    table.ratings[b] = r_b - delta
    return table


def matchmaking_probs(table: EloTable, training_id: str, candidate_ids: Sequence[str]) -> np.ndarray:
    """Softmax over the candidates' expected scores against the training agent."""
    if not candidate_ids:
        raise LeagueError("no candidate opponents")
    if training_id in candidate_ids:
        raise LeagueError("the training agent cannot be its own opponent")
    r_train = table[training_id]
    e = np.array([expected_score(table[c], r_train) for c in candidate_ids])
    w = np.exp(e - e.max())
    return w / w.sum()


def sample_opponent(candidate_ids: Sequence[str], probs: np.ndarray, rng: np.random.Generator) -> str:
    cdf = np.cumsum(probs)
    i = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return candidate_ids[min(i, len(candidate_ids) - 1)]


# -- population ----------------------------------------------------------------

@dataclass
class PopulationSlot:
    slot_id: str
    kind: str
    scripted: Optional[ScriptedKind] = None
    snapshot: Optional[bytes] = None
    win_window: deque = field(default_factory=deque)

    @property
    def frozen(self) -> bool:
        return self.kind == FROZEN

    @property
    def win_rate(self) -> float:
        if not self.win_window:
            return 0.0
        return sum(self.win_window) / len(self.win_window)

    @property
    def snapshot_ref(self) -> Optional[str]:
        if self.snapshot is None:
            return None
        return hashlib.sha256(self.snapshot).hexdigest()[:16]


@dataclass(frozen=True)
class MatchRecord:
    a: str
    b: str
    score_a: float
    ticks: int
    seed: int

    def __post_init__(self) -> None:
        if self.score_a not in (0.0, 0.5, 1.0):
            raise LeagueError(f"score must be 0, 0.5 or 1, got {self.score_a}")

    @property
    def score_b(self) -> float:
        return 1.0 - self.score_a


@dataclass
class LeagueState:
    config: LeagueConfig
    slots: dict[str, PopulationSlot]
    elo: EloTable
    matches: int = 0

    @classmethod
    def create(cls, snapshot: Optional[bytes], config: Optional[LeagueConfig] = None) -> LeagueState:
        """Three frozen scripted slots plus learners all starting from ``snapshot``."""
        config = config or LeagueConfig()
        slots: dict[str, PopulationSlot] = {}
        for kind in FROZEN_KINDS:
            slots[kind.value] = PopulationSlot(kind.value, FROZEN, scripted=kind)
        for i in range(config.num_learners):
            sid = f"learner{i}"
            slots[sid] = PopulationSlot(sid, LEARNER, snapshot=snapshot)
        for slot in slots.values():
            slot.win_window = deque(maxlen=config.window_size)
        elo = EloTable({sid: config.initial_elo for sid in slots}, config.k)
        return cls(config, slots, elo)

    @property
    def learners(self) -> list[str]:
        return [sid for sid, s in self.slots.items() if not s.frozen]

    def slot(self, slot_id: str) -> PopulationSlot:
        try:
            return self.slots[slot_id]
        except KeyError:
            raise LeagueError(f"unknown slot {slot_id!r}") from None

    def to_dict(self) -> dict:
        """Checkpoint form; snapshot bytes are referenced by digest and stored separately."""
        return {
            "config": vars(self.config).copy(),
            "matches": self.matches,
            "elo": dict(self.elo.ratings),
            "slots": [
                {
                    "slot_id": s.slot_id,
                    "kind": s.kind,
                    "scripted": s.scripted.value if s.scripted else None,
                    "snapshot_ref": s.snapshot_ref,
                    "win_window": list(s.win_window),
                }
                for s in self.slots.values()
            ],
        }

    @classmethod
    def from_dict(cls, d: dict, snapshots: Mapping[str, bytes]) -> LeagueState:
        config = LeagueConfig(**d["config"])
        slots = {}
        for s in d["slots"]:
            ref = s["snapshot_ref"]
            if ref is not None and ref not in snapshots:
                raise LeagueError(f"checkpoint references missing snapshot {ref}")
            slots[s["slot_id"]] = PopulationSlot(
                s["slot_id"],
                s["kind"],
                ScriptedKind(s["scripted"]) if s["scripted"] else None,
                snapshots[ref] if ref is not None else None,
                deque(s["win_window"], maxlen=config.window_size),
            )
        return cls(config, slots, EloTable(dict(d["elo"]), config.k), d["matches"])


def record_match(league: LeagueState, rec: MatchRecord) -> LeagueState:
    a, b = league.slot(rec.a), league.slot(rec.b)
    update_elo(league.elo, rec.a, rec.b, rec.score_a)
    # ties count as non-wins for the replacement rule
    a.win_window.append(1 if rec.score_a == 1.0 else 0)
    b.win_window.append(1 if rec.score_b == 1.0 else 0)
    league.matches += 1
    return league


def replacement_check(league: LeagueState, rng: np.random.Generator) -> list[tuple[str, str]]:
    """Overwrite weak learners with copies of other learners.

    A learner is weak when its window is full and its win rate is below the
    threshold.  The source is drawn uniformly from the other learners (only
    the higher-rated ones with ``strict_stronger``); the copy takes the
    source's Elo and starts an empty window.  Decisions use the state before
    any replacement in this check.
    """
    cfg = league.config
    learners = league.learners
    before = {sid: (league.slots[sid].snapshot, league.elo[sid]) for sid in learners}
    out = []
    for sid in learners:
        slot = league.slots[sid]
        if len(slot.win_window) < cfg.window_size or slot.win_rate >= cfg.replace_threshold:
            continue
        pool = [o for o in learners if o != sid]
        if cfg.strict_stronger:
            pool = [o for o in pool if before[o][1] > before[sid][1]]
        if not pool:
            continue
        src = pool[int(rng.integers(len(pool)))]
        slot.snapshot, league.elo.ratings[sid] = before[src]
        slot.win_window.clear()
        out.append((sid, src))
    return out


# -- matches -----------------------------------------------------------------

# plays one game between two slots: (league, a, b, seed) -> (score of a, ticks)
MatchPlayer = Callable[[LeagueState, str, str, int], tuple[float, int]]


def run_league_match(
    league: LeagueState, training_id: str, rng: np.random.Generator, play: MatchPlayer
) -> MatchRecord:
    """Pick an opponent for ``training_id`` by matchmaking and play one game.

    The record is returned, not applied; pass it to :func:`record_match`.
    """
    if league.slot(training_id).frozen:
        raise LeagueError(f"{training_id} is frozen and does not train")
    candidates = [sid for sid in league.slots if sid != training_id]
    probs = matchmaking_probs(league.elo, training_id, candidates)
    opponent = sample_opponent(candidates, probs, rng)
    seed = int(rng.integers(2**31))
    score, ticks = play(league, training_id, opponent, seed)
    return MatchRecord(training_id, opponent, float(score), int(ticks), seed)


# -- round robin ---------------------------------------------------------------

# plays one game with ``a`` as team 0: (a, b, seed) -> score of a
GamePlayer = Callable[[str, str, int], float]


@dataclass
class RoundRobinReport:
    names: list[str]
    elo: EloTable
    # wins[i][j]: share of games i won against j over both seatings; None on the diagonal
    wins: list[list[Optional[float]]]
    games: int

    def table(self) -> list[dict]:
        rows = []
        for i, name in enumerate(self.names):
            row = {"agent": name, "elo": round(self.elo[name], 2)}
            for j, other in enumerate(self.names):
                w = self.wins[i][j]
                row[other] = None if w is None else round(w, 4)
            rows.append(row)
        return rows

    def format(self) -> str:
        width = max(8, *(len(n) for n in self.names))
        head = "agent".ljust(width) + "     elo  " + "  ".join(n.rjust(width) for n in self.names)
        lines = [head]
        for i, name in enumerate(self.names):
            cells = ["-".rjust(width) if w is None else f"{w:.3f}".rjust(width) for w in self.wins[i]]
            lines.append(f"{name.ljust(width)} {self.elo[name]:7.1f}  " + "  ".join(cells))
        return "\n".join(lines)


def round_robin(
    names: Sequence[str],
    games_per_pair: int,
    seed: int,
    play: GamePlayer,
    k: float = 32.0,
    initial_elo: float = 1000.0,
    starmap: Callable = itertools.starmap,
) -> RoundRobinReport:
    """Every ordered pair plays ``games_per_pair`` games; Elo updates after each game.

    Game seeds are drawn from ``seed`` up front, so the report is reproducible
    and games may be played in parallel (pass e.g. ``pool.starmap``); Elo is
    always applied in schedule order.
    """
    names = list(names)
    if len(names) < 2:
        raise LeagueError("a round robin needs at least two agents")
    if len(set(names)) != len(names):
        raise LeagueError("agent names must be unique")
    elo = EloTable({n: initial_elo for n in names}, k)
    n = len(names)
    won = np.zeros((n, n))
    played = np.zeros((n, n))
    rng = np.random.default_rng(seed)
    # round-major order: every ordered pair plays once per round, so sequential
    # Elo updates see the pairs interleaved
    schedule = [
        (i, j, int(rng.integers(2**31)))
        for _ in range(games_per_pair) for i in range(n) for j in range(n) if i != j
    ]
    scores = starmap(play, [(names[i], names[j], g) for i, j, g in schedule])
    for (i, j, _), s in zip(schedule, scores):
        s = float(s)
        update_elo(elo, names[i], names[j], s)
        won[i, j] += s == 1.0
        won[j, i] += s == 0.0
        played[i, j] += 1
        played[j, i] += 1
    wins = [[None if i == j else float(won[i, j] / played[i, j]) for j in range(n)] for i in range(n)]
    return RoundRobinReport(names, elo, wins, games_per_pair)
