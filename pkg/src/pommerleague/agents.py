"""Rule-based opponents used by the curriculum and the evaluation baseline.

All policies read only the agent's 9x9 observation.  Window cells are
``(row, col)`` pairs in ``0..8``; the acting agent is always at ``(4, 4)``.
"""

from __future__ import annotations

import heapq
import random
from collections import deque
from enum import Enum
from typing import Callable, Iterable, Optional

from .engine import Action, spawn_positions
from .observation import (
    BOMB_P, ENEMY_P, EXTRA_P, FLAME_P, HALF, KICK_P, LIFE_P, MATE_P, PASSAGE_P, RANGE_P, RIGID_P,
    STRENGTH_P, VIEW, WOOD_P, Observation,
)

Cell = tuple[int, int]
CENTER: Cell = (HALF, HALF)
MOVES: tuple[tuple[Action, Cell], ...] = (
    (Action.STAY, (0, 0)),
    (Action.UP, (-1, 0)),
    (Action.DOWN, (1, 0)),
    (Action.LEFT, (0, -1)),
    (Action.RIGHT, (0, 1)),
)
DODGE_HORIZON = 3
P_BOMB = 0.15
INF = float("inf")
# extra path cost of a wood cell, roughly the time to bomb it and wait
WOOD_COST = 4


class ScriptedKind(str, Enum):
    STATIC = "static"
    SIMPLE_MOVING = "simple_moving"
    SIMPLE_BOMB = "simple_bomb"
    DIJKSTRA = "dijkstra"


def _inside(cell: Cell) -> bool:
    return 0 <= cell[0] < VIEW and 0 <= cell[1] < VIEW


def _cells(obs: Observation, plane: int) -> list[Cell]:
    rows, cols = obs.planes[plane].nonzero()
    return list(zip(rows.tolist(), cols.tolist()))


def window_blast(obs: Observation, origin: Cell, strength: int) -> set[Cell]:
    """Blast cross of a bomb at ``origin`` as far as the window shows it."""
    p = obs.planes
    cells = {origin}
    for _, (dr, dc) in MOVES[1:]:
        r, c = origin
        for _ in range(strength - 1):
            r += dr
            c += dc
            if not _inside((r, c)) or p[RIGID_P, r, c]:
                break
            cells.add((r, c))
            if p[WOOD_P, r, c] or p[RANGE_P, r, c] or p[EXTRA_P, r, c] or p[KICK_P, r, c]:
                break
    return cells


def bomb_lives(obs: Observation, extra: Optional[dict[Cell, tuple[float, int]]] = None) -> dict[Cell, float]:
    """Ticks until each visible bomb goes off, counting chain reactions.

    ``extra`` adds hypothetical bombs as ``cell -> (life, strength)``.
    """
    p = obs.planes
    bombs = {b: (float(p[LIFE_P][b]), int(p[STRENGTH_P][b])) for b in _cells(obs, BOMB_P)}
    bombs.update(extra or {})
    life = {b: v[0] for b, v in bombs.items()}
    reach = {b: window_blast(obs, b, v[1]) for b, v in bombs.items()}
    changed = True
    while changed:
        changed = False
        for b in bombs:
            for o in bombs:
                if o != b and life[o] < life[b] and b in reach[o]:
                    life[b] = life[o]
                    changed = True
    return life


def _blast_times(obs: Observation, extra=None) -> dict[Cell, list[float]]:
    p = obs.planes
    strength = {b: int(p[STRENGTH_P][b]) for b in _cells(obs, BOMB_P)}
    strength.update({b: v[1] for b, v in (extra or {}).items()})
    times: dict[Cell, list[float]] = {}
    for b, life in bomb_lives(obs, extra).items():
        for cell in window_blast(obs, b, strength[b]):
            times.setdefault(cell, []).append(life)
    return times


def escape_route(obs: Observation, extra=None, start: int = 0, max_t: int = 14) -> Optional[Action]:
    """First action of the quickest walk to a cell no visible bomb will reach.

    Searches over (cell, tick) so a route may cross a blast line before or
    after it burns; flames last two ticks.  The walk starts from the centre at
    tick ``start``.  Returns None when every walk dies first.
    """
    times = _blast_times(obs, extra)
    flames = set(_cells(obs, FLAME_P))

    def deadly(cell: Cell, t: int) -> bool:
        if cell in flames and t <= 1:
            return True
        return any(life <= t <= life + 1 for life in times.get(cell, ()))

    def shelter(cell: Cell) -> bool:
        return cell not in times and cell not in flames

    if deadly(CENTER, start):
        return None
    if shelter(CENTER):
        return Action.STAY
    frontier: dict[Cell, Optional[Action]] = {CENTER: None}
    for t in range(start, max_t):
        nxt_frontier: dict[Cell, Optional[Action]] = {}
        for cell, first in frontier.items():
            for action, (dr, dc) in MOVES:
                nxt = (cell[0] + dr, cell[1] + dc)
                if nxt in nxt_frontier or (nxt != cell and not passable(obs, nxt)):
                    continue
                if deadly(nxt, t + 1):
                    continue
                step = action if first is None else first
                if shelter(nxt):
                    return step
                nxt_frontier[nxt] = step
        frontier = nxt_frontier
    return None


def danger_cells(obs: Observation, horizon: int = DODGE_HORIZON) -> set[Cell]:
    """Cells hit by visible bombs with ``life <= horizon``, plus burning cells.

    A bomb inside the blast of an earlier bomb is treated as going off with it.
    """
    danger = set(_cells(obs, FLAME_P))
    p = obs.planes
    for cell, life in bomb_lives(obs).items():
        if life <= horizon:
            danger |= window_blast(obs, cell, int(p[STRENGTH_P][cell]))
    return danger


def time_to_hit(obs: Observation, cell: Cell) -> float:
    """Ticks until ``cell`` is burnt by a visible bomb; 0 for flames, inf if never."""
    p = obs.planes
    if p[FLAME_P][cell]:
        return 0.0
    best = INF
    for b, life in bomb_lives(obs).items():
        if cell in window_blast(obs, b, int(p[STRENGTH_P][b])):
            best = min(best, life)
    return best


def passable(obs: Observation, cell: Cell) -> bool:
    """Whether the agent could stand on ``cell`` next tick (its own cell always counts)."""
    if cell == CENTER:
        return True
    if not _inside(cell):
        return False
    p = obs.planes
    return bool(p[PASSAGE_P][cell]) and not (p[BOMB_P][cell] or p[ENEMY_P][cell] or p[MATE_P][cell])


def _options(obs: Observation) -> list[tuple[Action, Cell]]:
    out = []
    for action, (dr, dc) in MOVES:
        cell = (CENTER[0] + dr, CENTER[1] + dc)
        if passable(obs, cell):
            out.append((action, cell))
    return out


def _least_danger(obs: Observation, options: list[tuple[Action, Cell]], rng: random.Random) -> Action:
    scored = [(time_to_hit(obs, cell), action) for action, cell in options]
    top = max(t for t, _ in scored)
    return rng.choice([a for t, a in scored if t == top])


def static_policy(obs: Optional[Observation] = None, rng: Optional[random.Random] = None) -> Action:
    return Action.STAY


def simple_moving_policy(obs: Observation, rng: random.Random, horizon: int = DODGE_HORIZON) -> Action:
    """Random safe move; never bombs."""
    options = _options(obs)
    danger = danger_cells(obs, horizon)
    safe = [a for a, cell in options if cell not in danger]
    if safe:
        return rng.choice(safe)
    return _least_danger(obs, options, rng)


def simple_bomb_policy(
    obs: Observation, rng: random.Random, p_bomb: float = P_BOMB, horizon: int = DODGE_HORIZON
) -> Action:
    """Bombs at random with probability ``p_bomb`` when not in danger; otherwise moves like
    :func:`simple_moving_policy`."""
    u = rng.random()
    if (
        u < p_bomb
        and obs.ammo > 0
        and not obs.planes[BOMB_P][CENTER]
        and CENTER not in danger_cells(obs, horizon)
    ):
        return Action.BOMB
    return simple_moving_policy(obs, rng, horizon)


def _bfs(obs: Observation, avoid: Iterable[Cell] = ()) -> tuple[dict[Cell, Action], dict[Cell, int]]:
    avoid = set(avoid)
    first: dict[Cell, Action] = {CENTER: Action.STAY}
    dist = {CENTER: 0}
    queue = deque([CENTER])
    while queue:
        cell = queue.popleft()
        for action, (dr, dc) in MOVES[1:]:
            nxt = (cell[0] + dr, cell[1] + dc)
            if nxt in dist or nxt in avoid or not passable(obs, nxt):
                continue
            first[nxt] = action if cell == CENTER else first[cell]
            dist[nxt] = dist[cell] + 1
            queue.append(nxt)
    return first, dist


def shortest_paths(obs: Observation, avoid: Iterable[Cell] = ()) -> dict[Cell, Action]:
    """Breadth-first search (Dijkstra with unit edge costs) from the agent.

    Maps every reachable cell to the first move of a shortest path toward it.
    Neighbours are expanded in the fixed order up, down, left, right.
    """
    return _bfs(obs, avoid)[0]


def _step_toward(obs: Observation, goals: set[Cell], avoid: set[Cell]) -> Optional[Action]:
    if CENTER in goals:
        return None
    first, dist = _bfs(obs, avoid)
    reachable = [(dist[g], g) for g in goals if g in dist]
    if not reachable:
        return None
    _, goal = min(reachable)
    return first[goal]


def can_escape(obs: Observation, bomb_life: int = 10) -> bool:
    """Whether a bomb dropped here leaves a safe walk to shelter before anything goes off.

    Also refuses while the teammate stands in the new blast: its way out is unknown.
    """
    cover = window_blast(obs, CENTER, obs.blast_strength)
    if any(m in cover for m in _cells(obs, MATE_P)):
        return False
    # the drop itself takes one tick, after which the new bomb has its full life
    extra = {CENTER: (float(bomb_life + 1), obs.blast_strength)}
    return escape_route(obs, extra, start=1) is not None


def dijkstra_baseline_policy(
    obs: Observation, rng: random.Random, horizon: int = 10, memory: Optional[dict] = None
) -> Action:
    """Heuristic baseline: hunt visible enemies along shortest paths, bomb them when in range.

    With no enemy in view it collects items and heads for the enemy spawn
    corners, bombing wood that is in the way.  ``memory`` is a per-agent dict
    kept across the ticks of one episode: the terrain seen so far, corners
    already found empty and the previous move.
    Every chosen move avoids cells threatened by visible bombs.
    """
    memory = memory if memory is not None else {}
    action = _hunt(obs, rng, horizon, memory)
    memory["last"] = (obs.position, action in _MOVE_ACTIONS)
    return action


def _hunt(obs: Observation, rng: random.Random, horizon: int, memory: dict) -> Action:
    threat = danger_cells(obs, horizon)
    options = _options(obs)

    if CENTER in threat:
        step = escape_route(obs)
        if step is not None:
            return step
        return _least_danger(obs, options, rng)

    safe = [a for a, cell in options if cell not in threat]
    # a move that bounced last tick (usually off the teammate): shake it loose
    if memory.get("last") == (obs.position, True) and rng.random() < 0.5:
        return rng.choice(safe) if safe else Action.STAY

    ready = obs.ammo > 0 and not obs.planes[BOMB_P][CENTER]
    enemies = _cells(obs, ENEMY_P)
    if enemies:
        strike = window_blast(obs, CENTER, obs.blast_strength)
        if ready and any(e in strike for e in enemies) and can_escape(obs):
            return Action.BOMB
        goals: set[Cell] = set()
        for e in enemies:
            goals |= window_blast(obs, e, obs.blast_strength) - {e}
        step = _step_toward(obs, goals, threat)
        if step is not None:
            return step

    items = set(_cells(obs, RANGE_P) + _cells(obs, EXTRA_P) + _cells(obs, KICK_P))
    step = _step_toward(obs, items, threat) if items else None
    if step is not None:
        return step
    return _roam(obs, rng, memory, threat, ready, safe)


_MOVE_ACTIONS = (Action.UP, Action.DOWN, Action.LEFT, Action.RIGHT)
_RIGID, _WOOD = 1, 2


def _roam(
    obs: Observation, rng: random.Random, memory: dict, threat: set[Cell], ready: bool, safe: list[Action]
) -> Action:
    step = _route_to_corner(obs, memory, threat)
    if step is not None:
        action, through_wood = step
        if not through_wood:
            if rng.random() < 0.9:
                return action
        elif ready and can_escape(obs):
            return Action.BOMB
    return rng.choice(safe) if safe else Action.STAY


def _remember_board(obs: Observation, memory: dict) -> dict[Cell, int]:
    """Accumulate rigid and wood cells seen so far, in board coordinates."""
    board = memory.setdefault("board", {})
    r0, c0 = obs.position
    n = obs.board_size
    p = obs.planes
    for r in range(VIEW):
        for c in range(VIEW):
            cell = (r0 + r - HALF, c0 + c - HALF)
            if 0 <= cell[0] < n and 0 <= cell[1] < n:
                board[cell] = _RIGID if p[RIGID_P, r, c] else _WOOD if p[WOOD_P, r, c] else 0
    return board


def _route_to_corner(obs: Observation, memory: dict, threat: set[Cell]) -> Optional[tuple[Action, bool]]:
    """Dijkstra over the remembered board toward the nearest unchecked enemy corner.

    Unseen cells count as open, wood costs extra (it has to be bombed first)
    and cells the window shows as blocked or threatened are avoided.  Returns
    the first move and whether it runs into wood; None without a route.
    """
    if obs.position is None or obs.board_size is None or obs.agent_id is None:
        return None
    targets = set(_enemy_corners(obs, memory))
    board = _remember_board(obs, memory)
    n = obs.board_size
    r0, c0 = obs.position
    start = (r0, c0)

    def blocked(cell: Cell) -> bool:
        w = (cell[0] - r0 + HALF, cell[1] - c0 + HALF)
        if not _inside(w):
            return False
        return w in threat or (cell not in targets and board.get(cell) != _WOOD and not passable(obs, w))

    cost = {start: 0}
    first: dict[Cell, tuple[Action, bool]] = {}
    heap = [(0, start)]
    while heap:
        d, cell = heapq.heappop(heap)
        if d > cost[cell]:
            continue
        if cell in targets:
            return first.get(cell)
        for action, (dr, dc) in MOVES[1:]:
            nxt = (cell[0] + dr, cell[1] + dc)
            if not (0 <= nxt[0] < n and 0 <= nxt[1] < n) or board.get(nxt) == _RIGID or blocked(nxt):
                continue
            wood = board.get(nxt) == _WOOD
            nd = d + 1 + (WOOD_COST if wood else 0)
            if nd < cost.get(nxt, INF):
                cost[nxt] = nd
                first[nxt] = (action, wood) if cell == start else first[cell]
                heapq.heappush(heap, (nd, nxt))
    return None


def _enemy_corners(obs: Observation, memory: dict) -> list[Cell]:
    """Enemy spawn corners not yet seen empty (all of them again once every one was)."""
    r0, c0 = obs.position
    spawns = spawn_positions(obs.board_size)
    corners = [s for i, s in enumerate(spawns) if i % 2 != obs.agent_id % 2]
    cleared = memory.setdefault("cleared", set())
    for s in corners:
        cell = (s[0] - r0 + HALF, s[1] - c0 + HALF)
        if _inside(cell) and not obs.planes[ENEMY_P][cell]:
            cleared.add(s)
    targets = [s for s in corners if s not in cleared]
    if not targets:
        # every corner checked; enemies have moved, start over
        cleared.clear()
        targets = corners
    return targets


Policy = Callable[[Observation, random.Random], Action]

POLICIES: dict[ScriptedKind, Policy] = {
    ScriptedKind.STATIC: static_policy,
    ScriptedKind.SIMPLE_MOVING: simple_moving_policy,
    ScriptedKind.SIMPLE_BOMB: simple_bomb_policy,
    ScriptedKind.DIJKSTRA: dijkstra_baseline_policy,
}


def policy_for(kind: ScriptedKind | str) -> Policy:
    return POLICIES[ScriptedKind(kind)]
