from __future__ import annotations

import pytest
import torch

from pommerleague import engine


def open_state(n: int = 11, positions=None, **overrides) -> engine.GameState:
    """A board with no walls or items and agents placed where requested."""
    cfg = engine.BoardConfig(board_size=n, num_rigid=0, num_wood=0, num_items=0, **overrides)
    state = engine.new_game(cfg, 0)
    for aid, pos in (positions or {}).items():
        state.agents[aid].position = pos
    return state


def set_cell(state: engine.GameState, pos, terrain: int) -> None:
    state.board[pos[0] * state.size + pos[1]] = terrain


STAY = [0, 0, 0, 0]


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(1)
