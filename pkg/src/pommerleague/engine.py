"""Deterministic Pommerman-compatible game simulator.

Board cells are stored in a flat ``bytearray`` (row-major) so that copying a
state for each tick is cheap.  Positions are ``(row, col)`` tuples.

A tick is resolved in a fixed order:

1. bomb and flame timers count down, expired flames are removed
2. agent moves are resolved simultaneously (bounce-back on conflict)
3. moving (kicked) bombs advance one cell
4. new bombs are placed
5. bombs with no life left, or sitting in a flame, explode (chains included)
6. flames kill agents, burn wood and destroy items
7. items hidden under burnt wood are revealed
8. agents standing on items pick them up
9. ammo is returned to owners of exploded bombs
10. the tick counter advances

Tick numbers refer to the state *produced* by a step: a bomb placed by the
step that produces tick ``t`` explodes in the step that produces ``t + 10``.
"""

from __future__ import annotations

import hashlib
import random
from collections import Counter
from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Iterable, Optional, Sequence

Position = tuple[int, int]


class EngineError(Exception):
    pass


class InvalidConfigError(EngineError, ValueError):
    pass


class IllegalTransitionError(EngineError):
    pass


class Action(IntEnum):
    STAY = 0
    UP = 1
    DOWN = 2
    LEFT = 3
    RIGHT = 4
    BOMB = 5


class Terrain(IntEnum):
    PASSAGE = 0
    RIGID = 1
    WOOD = 2


class ItemKind(IntEnum):
    EXTRA_BOMB = 0
    INCREASE_RANGE = 1
    KICK = 2


PASSAGE = int(Terrain.PASSAGE)
RIGID = int(Terrain.RIGID)
WOOD = int(Terrain.WOOD)

DELTAS: dict[int, Position] = {
    Action.UP: (-1, 0),
    Action.DOWN: (1, 0),
    Action.LEFT: (0, -1),
    Action.RIGHT: (0, 1),
}
_ARMS: tuple[Position, ...] = ((-1, 0), (1, 0), (0, -1), (0, 1))

NUM_AGENTS = 4


@dataclass(frozen=True)
class BoardConfig:
    board_size: int = 11
    num_rigid: int = 36
    num_wood: int = 36
    num_items: int = 20
    max_steps: int = 800
    bomb_life: int = 10
    flame_life: int = 2
    initial_ammo: int = 1
    initial_blast_strength: int = 2
    mode: str = "team"

    def validate(self) -> None:
        n = self.board_size
        if n < 5:
            raise InvalidConfigError(f"board_size must be at least 5, got {n}")
        if self.mode not in ("team", "ffa"):
            raise InvalidConfigError(f"unknown mode {self.mode!r}")
        if min(self.num_rigid, self.num_wood, self.num_items) < 0:
            raise InvalidConfigError("wall and item counts must be non-negative")
        free = n * n - len(_reserved_cells(n))
        if self.num_rigid + self.num_wood > free:
            raise InvalidConfigError(
                f"{self.num_rigid} rigid + {self.num_wood} wood walls do not fit in "
                f"the {free} free cells of a {n}x{n} board"
            )
        if self.num_items > self.num_wood:
            raise InvalidConfigError("num_items cannot exceed num_wood")
        if self.max_steps < 1 or self.bomb_life < 1 or self.flame_life < 1:
            raise InvalidConfigError("max_steps, bomb_life and flame_life must be positive")
        if self.initial_blast_strength < 2 or self.initial_ammo < 0:
            raise InvalidConfigError("initial_blast_strength must be >= 2, initial_ammo >= 0")


@dataclass(slots=True)
class Bomb:
    position: Position
    owner: int
    life: int
    blast_strength: int
    motion: Optional[Position] = None


@dataclass(slots=True)
class AgentState:
    id: int
    team: int
    position: Position
    alive: bool = True
    ammo: int = 1
    blast_strength: int = 2
    can_kick: bool = False


@dataclass
class StepEvents:
    bombs_placed: list[int] = field(default_factory=lambda: [0] * NUM_AGENTS)
    items_picked: list[list[ItemKind]] = field(default_factory=lambda: [[] for _ in range(NUM_AGENTS)])
    died: list[bool] = field(default_factory=lambda: [False] * NUM_AGENTS)
    wood_destroyed: int = 0
    agents_killed: list[int] = field(default_factory=list)
    exploded: list[Position] = field(default_factory=list)


@dataclass(frozen=True)
class GameResult:
    """Outcome of a finished game.

    ``winner`` is the winning team (agent id in FFA mode), ``None`` for a tie.
    ``enemy_deaths[i]`` counts dead opponents from agent ``i``'s perspective.
    """

    winner: Optional[int]
    enemy_deaths: tuple[int, ...]

    @property
    def is_tie(self) -> bool:
        return self.winner is None

    def score(self, side: int) -> float:
        if self.winner is None:
            return 0.5
        return 1.0 if self.winner == side else 0.0


@dataclass
class GameState:
    tick: int
    size: int
    board: bytearray
    hidden_items: dict[Position, int]
    items: dict[Position, int]
    bombs: list[Bomb]
    flames: dict[Position, int]
    agents: list[AgentState]
    seed: int
    config: BoardConfig

    def terrain(self, row: int, col: int) -> Terrain:
        return Terrain(self.board[row * self.size + col])

    def terrain_grid(self) -> list[list[int]]:
        n = self.size
        return [list(self.board[r * n:(r + 1) * n]) for r in range(n)]

    def bomb_at(self, pos: Position) -> Optional[Bomb]:
        for b in self.bombs:
            if b.position == pos:
                return b
        return None

    def copy(self) -> GameState:
        return GameState(
            tick=self.tick,
            size=self.size,
            board=bytearray(self.board),
            hidden_items=dict(self.hidden_items),
            items=dict(self.items),
            bombs=[replace(b) for b in self.bombs],
            flames=dict(self.flames),
            agents=[replace(a) for a in self.agents],
            seed=self.seed,
            config=self.config,
        )

    def to_dict(self) -> dict:
        return {
            "tick": self.tick,
            "size": self.size,
            "board": list(self.board),
            "hidden_items": sorted([list(p), int(k)] for p, k in self.hidden_items.items()),
            "items": sorted([list(p), int(k)] for p, k in self.items.items()),
            "bombs": sorted(
                [list(b.position), b.owner, b.life, b.blast_strength,
                 list(b.motion) if b.motion else None]
                for b in self.bombs
            ),
            "flames": sorted([list(p), life] for p, life in self.flames.items()),
            "agents": [
                [a.id, a.team, list(a.position), a.alive, a.ammo, a.blast_strength, a.can_kick]
                for a in self.agents
            ],
            "seed": self.seed,
        }


def spawn_positions(n: int) -> list[Position]:
    return [(1, 1), (n - 2, 1), (n - 2, n - 2), (1, n - 2)]


def _reserved_cells(n: int) -> set[Position]:
    cells = set()
    for r0, c0 in spawn_positions(n):
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                cells.add((r0 + dr, c0 + dc))
    return cells


def _fill_symmetric(
    board: bytearray, n: int, candidates: list[Position], target: int, value: int, rng: random.Random
) -> list[Position]:
    """Mark ``target`` cells from the upper-triangle ``candidates`` plus their mirrors."""
    diag = [p for p in candidates if p[0] == p[1]]
    pairs = [p for p in candidates if p[0] != p[1]]
    options = [k for k in range(target % 2, min(len(diag), target) + 1, 2) if (target - k) // 2 <= len(pairs)]
    if not options:
        raise InvalidConfigError(f"could not place {target} symmetric cells")
    k = rng.choice(options)
    used = diag[:k] + pairs[:(target - k) // 2]
    for r, c in used:
        board[r * n + c] = value
        board[c * n + r] = value
    return used


def _connected(board: bytearray, n: int, points: Sequence[Position]) -> bool:
    start = points[0]
    seen = {start}
    frontier = [start]
    while frontier:
        r, c = frontier.pop()
        for dr, dc in _ARMS:
            rr, cc = r + dr, c + dc
            if 0 <= rr < n and 0 <= cc < n and (rr, cc) not in seen and board[rr * n + cc] != RIGID:
                seen.add((rr, cc))
                frontier.append((rr, cc))
    return all(p in seen for p in points)


def new_game(config: Optional[BoardConfig] = None, seed: int = 0) -> GameState:
    """Generate a fresh, diagonally symmetric board with four agents in the corners."""
    config = config or BoardConfig()
    config.validate()
    n = config.board_size
    rng = random.Random(seed)
    reserved = _reserved_cells(n)
    upper = [(r, c) for r in range(n) for c in range(r, n) if (r, c) not in reserved]
    spawns = spawn_positions(n)

    for _ in range(200):
        board = bytearray(n * n)
        cells = list(upper)
        rng.shuffle(cells)
        rigid = _fill_symmetric(board, n, cells, config.num_rigid, RIGID, rng)
        rigid_set = set(rigid)
        remaining = [p for p in cells if p not in rigid_set]
        wood = _fill_symmetric(board, n, remaining, config.num_wood, WOOD, rng)
        if _connected(board, n, spawns):
            break
    else:
        raise InvalidConfigError("could not generate a connected board; reduce num_rigid")

    hidden: dict[Position, int] = {}
    wood_cells = list(wood)
    rng.shuffle(wood_cells)
    left = config.num_items
    for r, c in wood_cells:
        if left == 0:
            break
        cost = 1 if r == c else 2
        if cost > left:
            continue
        kind = rng.randrange(3)
        hidden[(r, c)] = kind
        hidden[(c, r)] = kind
        left -= cost
    if left:
        # an odd remainder with no free diagonal wood; take any unused wood cell
        for r in range(n):
            for c in range(n):
                if left and board[r * n + c] == WOOD and (r, c) not in hidden:
                    hidden[(r, c)] = rng.randrange(3)
                    left -= 1

    agents = [
        AgentState(
            id=i,
            team=i % 2 if config.mode == "team" else i,
            position=spawns[i],
            ammo=config.initial_ammo,
            blast_strength=config.initial_blast_strength,
        )
        for i in range(NUM_AGENTS)
    ]
    return GameState(
        tick=0, size=n, board=board, hidden_items=hidden, items={}, bombs=[],
        flames={}, agents=agents, seed=seed, config=config,
    )


def blast_coverage(state: GameState, bomb: Bomb) -> set[Position]:
    """Cells the bomb's flames reach: a cross of radius ``blast_strength - 1``.

    Each arm stops at the first rigid wall (excluded) or at the first wood or
    item cell (included).
    """
    n = state.size
    board = state.board
    items = state.items
    r0, c0 = bomb.position
    cells = {bomb.position}
    reach = bomb.blast_strength - 1
    for dr, dc in _ARMS:
        r, c = r0, c0
        for _ in range(reach):
            r += dr
            c += dc
            if not (0 <= r < n and 0 <= c < n):
                break
            cell = board[r * n + c]
            if cell == RIGID:
                break
            cells.add((r, c))
            if cell == WOOD or (r, c) in items:
                break
    return cells


def terminal(state: GameState) -> Optional[GameResult]:
    agents = state.agents
    if state.config.mode == "ffa":
        alive = [a.id for a in agents if a.alive]
        dead = NUM_AGENTS - len(alive)
        deaths = tuple(dead - (0 if a.alive else 1) for a in agents)
        if len(alive) == 1:
            return GameResult(alive[0], deaths)
        if not alive or state.tick >= state.config.max_steps:
            return GameResult(None, deaths)
        return None

    dead_by_team = [0, 0]
    alive_by_team = [0, 0]
    for a in agents:
        if a.alive:
            alive_by_team[a.team] += 1
        else:
            dead_by_team[a.team] += 1
    deaths = tuple(dead_by_team[1 - a.team] for a in agents)
    if alive_by_team[0] and alive_by_team[1]:
        if state.tick >= state.config.max_steps:
            return GameResult(None, deaths)
        return None
    if alive_by_team[0]:
        return GameResult(0, deaths)
    if alive_by_team[1]:
        return GameResult(1, deaths)
    return GameResult(None, deaths)


def step(state: GameState, actions: Sequence[int]) -> tuple[GameState, StepEvents]:
    """Apply one tick and return the new state; ``state`` is left untouched."""
    if len(actions) != NUM_AGENTS:
        raise ValueError(f"expected {NUM_AGENTS} actions, got {len(actions)}")
    if terminal(state) is not None:
        raise IllegalTransitionError(f"game already finished at tick {state.tick}")
    nxt = state.copy()
    events = StepEvents()
    _pre_detonation(nxt, actions, events)
    _detonate_and_settle(nxt, events)
    return nxt, events


def pre_detonation(state: GameState, actions: Sequence[int]) -> GameState:
    """Copy of ``state`` advanced through timers, moves, kicks and bomb placement only."""
    nxt = state.copy()
    _pre_detonation(nxt, actions, StepEvents())
    return nxt


def _pre_detonation(s: GameState, actions: Sequence[int], events: StepEvents) -> None:
    for b in s.bombs:
        b.life -= 1
    s.flames = {p: life - 1 for p, life in s.flames.items() if life > 1}
    kicked = _resolve_moves(s, actions)
    _move_bombs(s, kicked)
    _place_bombs(s, actions, events)


def _bomb_blocked(s: GameState, pos: Position, agent_cells: set[Position], bomb_cells: set[Position]) -> bool:
    r, c = pos
    n = s.size
    if not (0 <= r < n and 0 <= c < n):
        return True
    return (
        s.board[r * n + c] != PASSAGE
        or pos in agent_cells
        or pos in bomb_cells
        or pos in s.flames
        or pos in s.items
    )


def _resolve_moves(s: GameState, actions: Sequence[int]) -> dict[int, Position]:
    """Move agents; returns ``id(bomb) -> destination`` for bombs kicked this tick."""
    n = s.size
    board = s.board
    bomb_at = {b.position: b for b in s.bombs}
    alive = [a for a in s.agents if a.alive]
    origin = {a.id: a.position for a in alive}
    desired = dict(origin)
    kick_dir: dict[int, Position] = {}

    for a in alive:
        d = DELTAS.get(int(actions[a.id]))
        if d is None:
            continue
        r, c = a.position[0] + d[0], a.position[1] + d[1]
        if not (0 <= r < n and 0 <= c < n) or board[r * n + c] != PASSAGE:
            continue
        if (r, c) in bomb_at:
            if not a.can_kick:
                continue
            kick_dir[a.id] = d
        desired[a.id] = (r, c)

    moving_targets = {
        (b.position[0] + b.motion[0], b.position[1] + b.motion[1])
        for b in s.bombs if b.motion is not None
    }
    kicks: dict[int, Position] = {}
    changed = True
    while changed:
        changed = False
        counts = Counter(desired.values())
        for aid, target in desired.items():
            if target == origin[aid]:
                continue
            blocked = counts[target] > 1
            if not blocked:
                for bid, other in desired.items():
                    if bid != aid and other == origin[aid] and origin[bid] == target:
                        blocked = True
                        break
            if blocked:
                desired[aid] = origin[aid]
                changed = True
        if changed:
            continue
        # kicks: the pushed bomb must be able to enter the next cell this tick
        agent_cells = set(desired.values())
        kicks = {}
        claimed: set[Position] = set()
        for aid, d in kick_dir.items():
            target = desired[aid]
            if target == origin[aid]:
                continue
            bomb = bomb_at[target]
            dest = (target[0] + d[0], target[1] + d[1])
            if (
                _bomb_blocked(s, dest, agent_cells, bomb_at.keys())
                or dest in claimed
                or dest in moving_targets
            ):
                desired[aid] = origin[aid]
                changed = True
                break
            claimed.add(dest)
            kicks[id(bomb)] = dest

    for a in alive:
        a.position = desired[a.id]
    for aid, d in kick_dir.items():
        if desired[aid] != origin[aid]:
            bomb_at[desired[aid]].motion = d
    return kicks


def _move_bombs(s: GameState, kicked: dict[int, Position]) -> None:
    movers = [b for b in s.bombs if b.motion is not None]
    if not movers:
        return
    agent_cells = {a.position for a in s.agents if a.alive}
    reserved = set(kicked.values())
    targets: dict[int, Position] = {}
    for b in movers:
        if id(b) in kicked:
            continue
        targets[id(b)] = (b.position[0] + b.motion[0], b.position[1] + b.motion[1])

    changed = True
    while changed:
        changed = False
        # cells held by bombs that are not moving (including stopped movers)
        static = {b.position for b in s.bombs if id(b) not in targets and id(b) not in kicked}
        counts = Counter(targets.values())
        for b in movers:
            t = targets.get(id(b))
            if t is None:
                continue
            swap = any(
                targets.get(id(o)) == b.position and o.position == t for o in movers if o is not b
            )
            if (
                counts[t] > 1
                or swap
                or t in reserved
                or _bomb_blocked(s, t, agent_cells, static)
            ):
                del targets[id(b)]
                b.motion = None
                changed = True
                break

    for b in movers:
        if id(b) in kicked:
            b.position = kicked[id(b)]
        elif id(b) in targets:
            b.position = targets[id(b)]


def _place_bombs(s: GameState, actions: Sequence[int], events: StepEvents) -> None:
    occupied = {b.position for b in s.bombs}
    for a in s.agents:
        if a.alive and int(actions[a.id]) == Action.BOMB and a.ammo > 0 and a.position not in occupied:
            s.bombs.append(Bomb(a.position, a.id, s.config.bomb_life, a.blast_strength))
            occupied.add(a.position)
            a.ammo -= 1
            events.bombs_placed[a.id] += 1


def detonation_set(state: GameState) -> list[Bomb]:
    """Bombs that explode now: timed-out or flame-touched bombs plus everything they chain into."""
    by_pos = {b.position: b for b in state.bombs}
    queue = [b for b in state.bombs if b.life <= 0 or b.position in state.flames]
    seen = {id(b) for b in queue}
    out = []
    while queue:
        b = queue.pop()
        out.append(b)
        for p in blast_coverage(state, b):
            other = by_pos.get(p)
            if other is not None and id(other) not in seen:
                seen.add(id(other))
                queue.append(other)
    return out


def _detonate_and_settle(s: GameState, events: StepEvents) -> None:
    n = s.size
    exploding = detonation_set(s)
    new_flames: set[Position] = set()
    for b in exploding:
        new_flames |= blast_coverage(s, b)
    if exploding:
        gone = {id(b) for b in exploding}
        s.bombs = [b for b in s.bombs if id(b) not in gone]
        events.exploded = sorted(b.position for b in exploding)
        life = s.config.flame_life
        for p in new_flames:
            s.flames[p] = life

    for a in s.agents:
        if a.alive and a.position in s.flames:
            a.alive = False
            events.died[a.id] = True
            events.agents_killed.append(a.id)

    burnt = []
    for p in new_flames:
        idx = p[0] * n + p[1]
        if s.board[idx] == WOOD:
            s.board[idx] = PASSAGE
            burnt.append(p)
        elif p in s.items:
            del s.items[p]
    events.wood_destroyed = len(burnt)
    for p in burnt:
        kind = s.hidden_items.pop(p, None)
        if kind is not None:
            s.items[p] = kind

    if s.items:
        for a in s.agents:
            if not a.alive:
                continue
            kind = s.items.pop(a.position, None)
            if kind is None:
                continue
            if kind == ItemKind.EXTRA_BOMB:
                a.ammo += 1
            elif kind == ItemKind.INCREASE_RANGE:
                a.blast_strength += 1
            else:
                a.can_kick = True
            events.items_picked[a.id].append(ItemKind(kind))

    for b in exploding:
        s.agents[b.owner].ammo += 1
    s.tick += 1


def state_hash(state: GameState) -> str:
    """Canonical 128-bit hex digest of everything that affects future play."""
    h = hashlib.blake2b(digest_size=16)
    h.update(state.tick.to_bytes(4, "little"))
    h.update(state.size.to_bytes(2, "little"))
    h.update(bytes(state.board))
    payload = (
        sorted(state.hidden_items.items()),
        sorted(state.items.items()),
        sorted((b.position, b.owner, b.life, b.blast_strength, b.motion or (0, 0)) for b in state.bombs),
        sorted(state.flames.items()),
        [(a.position, a.alive, a.ammo, a.blast_strength, a.can_kick) for a in state.agents],
    )
    h.update(repr(payload).encode())
    return h.hexdigest()


GLYPHS = {PASSAGE: ".", RIGID: "#", WOOD: "+"}
ITEM_GLYPHS = {ItemKind.EXTRA_BOMB: "a", ItemKind.INCREASE_RANGE: "r", ItemKind.KICK: "k"}


def render(state: GameState) -> str:
    """ASCII board: agents 0-3, bombs b, flames *, items a/r/k, wood +, rigid #."""
    n = state.size
    grid = [[GLYPHS[state.board[r * n + c]] for c in range(n)] for r in range(n)]
    for p, kind in state.items.items():
        grid[p[0]][p[1]] = ITEM_GLYPHS[ItemKind(kind)]
    for p in state.flames:
        grid[p[0]][p[1]] = "*"
    for b in state.bombs:
        grid[b.position[0]][b.position[1]] = "b"
    for a in state.agents:
        if a.alive:
            grid[a.position[0]][a.position[1]] = str(a.id)
    return "\n".join("".join(row) for row in grid)


def run_actions(state: GameState, action_stream: Iterable[Sequence[int]]) -> list[str]:
    """Replay a sequence of joint actions, returning the post-tick state hashes."""
    hashes = []
    for actions in action_stream:
        state, _ = step(state, actions)
        hashes.append(state_hash(state))
    return hashes
