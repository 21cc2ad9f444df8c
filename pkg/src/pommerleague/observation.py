"""Per-agent 9x9 partial observation: 13 feature planes plus 7 scalars."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .engine import RIGID, GameState, ItemKind, Position

VIEW = 9
HALF = VIEW // 2
NUM_PLANES = 13
NUM_SCALARS = 7

PLANE_NAMES = (
    "passage",
    "rigid",
    "wood",
    "bombs",
    "flames",
    "enemies",
    "self",
    "teammate",
    "item_increase_range",
    "item_extra_bomb",
    "item_kick",
    "bomb_blast_strength",
    "bomb_life",
)
(PASSAGE_P, RIGID_P, WOOD_P, BOMB_P, FLAME_P, ENEMY_P, SELF_P, MATE_P,
 RANGE_P, EXTRA_P, KICK_P, STRENGTH_P, LIFE_P) = range(NUM_PLANES)

SCALAR_NAMES = ("row", "col", "ammo", "blast_strength", "can_kick", "teammate_alive", "alive_opponents")

_ITEM_PLANE = {
    ItemKind.INCREASE_RANGE: RANGE_P,
    ItemKind.EXTRA_BOMB: EXTRA_P,
    ItemKind.KICK: KICK_P,
}

# ammo and blast strength are divided by this to keep scalars O(1)
COUNT_SCALE = 10.0


class InvalidQueryError(ValueError):
    pass


@dataclass
class Observation:
    planes: np.ndarray   # (13, 9, 9) float32
    scalars: np.ndarray  # (7,) float32
    # not fed to the network; lets scripted agents reason about board geometry
    agent_id: Optional[int] = None
    position: Optional[Position] = None
    board_size: Optional[int] = None

    @property
    def ammo(self) -> int:
        return int(round(float(self.scalars[2]) * COUNT_SCALE))

    @property
    def blast_strength(self) -> int:
        return int(round(float(self.scalars[3]) * COUNT_SCALE))

    @property
    def can_kick(self) -> bool:
        return bool(self.scalars[4])


def visible(state: GameState, agent_id: int, pos: Position) -> bool:
    agent = state.agents[agent_id]
    if not agent.alive:
        raise InvalidQueryError(f"agent {agent_id} is dead")
    r, c = agent.position
    return max(abs(pos[0] - r), abs(pos[1] - c)) <= HALF


def encode(state: GameState, agent_id: int) -> Observation:
    agent = state.agents[agent_id]
    if not agent.alive:
        raise InvalidQueryError(f"cannot encode an observation for dead agent {agent_id}")
    n = state.size
    r0, c0 = agent.position
    top, left = r0 - HALF, c0 - HALF

    padded = np.full((n + 2 * HALF, n + 2 * HALF), RIGID, dtype=np.uint8)
    padded[HALF:HALF + n, HALF:HALF + n] = np.frombuffer(bytes(state.board), dtype=np.uint8).reshape(n, n)
    window = padded[r0:r0 + VIEW, c0:c0 + VIEW]

    planes = np.zeros((NUM_PLANES, VIEW, VIEW), dtype=np.float32)
    planes[PASSAGE_P] = window == 0
    planes[RIGID_P] = window == RIGID
    planes[WOOD_P] = window == 2

    for b in state.bombs:
        r, c = b.position[0] - top, b.position[1] - left
        if 0 <= r < VIEW and 0 <= c < VIEW:
            planes[BOMB_P, r, c] = 1.0
            planes[STRENGTH_P, r, c] = b.blast_strength
            planes[LIFE_P, r, c] = b.life
    for (pr, pc) in state.flames:
        r, c = pr - top, pc - left
        if 0 <= r < VIEW and 0 <= c < VIEW:
            planes[FLAME_P, r, c] = 1.0
    for (pr, pc), kind in state.items.items():
        r, c = pr - top, pc - left
        if 0 <= r < VIEW and 0 <= c < VIEW:
            planes[_ITEM_PLANE[kind], r, c] = 1.0

    teammate_alive = 0.0
    opponents = 0
    for other in state.agents:
        if other.id == agent_id:
            continue
        mate = state.config.mode == "team" and other.team == agent.team
        if other.alive:
            if mate:
                teammate_alive = 1.0
            else:
                opponents += 1
            r, c = other.position[0] - top, other.position[1] - left
            if 0 <= r < VIEW and 0 <= c < VIEW:
                planes[MATE_P if mate else ENEMY_P, r, c] = 1.0
    planes[SELF_P, HALF, HALF] = 1.0

    scale = n - 1
    scalars = np.array(
        [
            r0 / scale,
            c0 / scale,
            agent.ammo / COUNT_SCALE,
            agent.blast_strength / COUNT_SCALE,
            float(agent.can_kick),
            teammate_alive,
            float(opponents),
        ],
        dtype=np.float32,
    )
    return Observation(planes, scalars, agent_id, agent.position, n)


def dump(obs: Observation) -> str:
    """Labeled text matrices of every plane followed by the scalar vector."""
    out = []
    for name, plane in zip(PLANE_NAMES, obs.planes):
        out.append(f"[{name}]")
        for row in plane:
            out.append(" ".join(f"{v:g}" for v in row))
    out.append("[scalars]")
    out.extend(f"{name} = {v:g}" for name, v in zip(SCALAR_NAMES, obs.scalars))
    return "\n".join(out)
