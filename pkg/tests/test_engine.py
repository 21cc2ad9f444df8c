from __future__ import annotations

import pytest
from conftest import STAY, open_state, set_cell
from oracles import RandomGame, fixed_point_exploding, ray_cover

from pommerleague import engine
from pommerleague.engine import Action, Bomb, BoardConfig, ItemKind


def test_default_board_shape():
    s = engine.new_game(BoardConfig(), 42)
    assert s.size == 11 and s.tick == 0
    assert all(a.alive for a in s.agents)
    assert [a.position for a in s.agents] == [(1, 1), (9, 1), (9, 9), (1, 9)]
    assert [a.team for a in s.agents] == [0, 1, 0, 1]


def test_same_seed_same_board():
    a, b = engine.new_game(BoardConfig(), 5), engine.new_game(BoardConfig(), 5)
    assert engine.state_hash(a) == engine.state_hash(b)
    assert a.to_dict() == b.to_dict()


@pytest.mark.parametrize("seed", [7, 8, 123])
def test_board_symmetric(seed):
    s = engine.new_game(BoardConfig(), seed)
    n = s.size
    grid = s.terrain_grid()
    assert all(grid[r][c] == grid[c][r] for r in range(n) for c in range(n))
    assert sum(v == engine.RIGID for row in grid for v in row) == 36
    assert sum(v == engine.WOOD for row in grid for v in row) == 36
    assert len(s.hidden_items) == 20
    assert all(grid[r][c] == engine.WOOD for r, c in s.hidden_items)


def test_spawns_connected():
    for seed in range(30):
        s = engine.new_game(BoardConfig(), seed)
        n = s.size
        start = s.agents[0].position
        seen, stack = {start}, [start]
        while stack:
            r, c = stack.pop()
            for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                q = (r + dr, c + dc)
                if 0 <= q[0] < n and 0 <= q[1] < n and q not in seen and s.board[q[0] * n + q[1]] != engine.RIGID:
                    seen.add(q)
                    stack.append(q)
        assert all(a.position in seen for a in s.agents)


@pytest.mark.parametrize("cfg", [
    BoardConfig(board_size=4),
    BoardConfig(board_size=5, num_rigid=20, num_wood=20),
    BoardConfig(num_items=40),
    BoardConfig(mode="solo"),
])
def test_invalid_config(cfg):
    with pytest.raises(engine.InvalidConfigError):
        engine.new_game(cfg, 0)


def test_bomb_explodes_after_ten_ticks():
    s = open_state(positions={0: (5, 5)})
    s, ev = engine.step(s, [Action.BOMB, 0, 0, 0])
    assert ev.bombs_placed[0] == 1
    placed = s.tick
    s.agents[0].position = (3, 3)  # step away without relying on move rules
    while not s.flames:
        assert s.bombs and s.bombs[0].life == 10 - (s.tick - placed)
        s, _ = engine.step(s, STAY)
    assert s.tick == placed + 10
    assert set(s.flames) == {(5, 5), (4, 5), (6, 5), (5, 4), (5, 6)}
    assert s.agents[0].ammo == 1


def test_flames_last_two_ticks():
    s = open_state(positions={0: (5, 5)})
    s.bombs.append(Bomb((2, 2), 0, 1, 2))
    s.agents[0].ammo = 0
    s, _ = engine.step(s, STAY)
    assert (2, 2) in s.flames
    s, _ = engine.step(s, STAY)
    assert (2, 2) in s.flames
    s, _ = engine.step(s, STAY)
    assert not s.flames


def test_swap_bounces():
    s = open_state(positions={0: (5, 5), 2: (5, 6)})
    s, _ = engine.step(s, [Action.RIGHT, 0, Action.LEFT, 0])
    assert s.agents[0].position == (5, 5) and s.agents[2].position == (5, 6)


def test_same_target_bounces():
    s = open_state(positions={0: (5, 4), 2: (5, 6)})
    s, _ = engine.step(s, [Action.RIGHT, 0, Action.LEFT, 0])
    assert s.agents[0].position == (5, 4) and s.agents[2].position == (5, 6)


def test_follow_the_leader_moves():
    s = open_state(positions={0: (5, 4), 2: (5, 5)})
    s, _ = engine.step(s, [Action.RIGHT, 0, Action.RIGHT, 0])
    assert s.agents[0].position == (5, 5) and s.agents[2].position == (5, 6)


def test_bounce_into_blocked_chain():
    # 2 is blocked by a wall, so 0 (following it) bounces too
    s = open_state(positions={0: (5, 4), 2: (5, 5)})
    set_cell(s, (5, 6), engine.RIGID)
    s, _ = engine.step(s, [Action.RIGHT, 0, Action.RIGHT, 0])
    assert s.agents[0].position == (5, 4) and s.agents[2].position == (5, 5)


def test_walls_and_bombs_block_movement():
    s = open_state(positions={0: (5, 5)})
    set_cell(s, (4, 5), engine.WOOD)
    s.bombs.append(Bomb((5, 6), 1, 5, 2))
    s, _ = engine.step(s, [Action.UP, 0, 0, 0])
    assert s.agents[0].position == (5, 5)
    s, _ = engine.step(s, [Action.RIGHT, 0, 0, 0])
    assert s.agents[0].position == (5, 5)
    edge = open_state(positions={0: (0, 0)})
    edge, _ = engine.step(edge, [Action.UP, 0, 0, 0])
    assert edge.agents[0].position == (0, 0)


def test_kick_moves_bomb_until_obstacle():
    s = open_state(positions={0: (5, 2)})
    s.agents[0].can_kick = True
    s.bombs.append(Bomb((5, 3), 1, 9, 2))
    set_cell(s, (5, 7), engine.RIGID)
    s, _ = engine.step(s, [Action.RIGHT, 0, 0, 0])
    assert s.agents[0].position == (5, 3)
    assert s.bombs[0].position == (5, 4)
    for _ in range(4):
        s, _ = engine.step(s, STAY)
    assert s.bombs[0].position == (5, 6)
    assert s.bombs[0].motion is None


def test_one_bomb_per_cell_and_ammo():
    s = open_state(positions={0: (5, 5)})
    s.agents[0].ammo = 3
    s, ev = engine.step(s, [Action.BOMB, 0, 0, 0])
    s, ev2 = engine.step(s, [Action.BOMB, 0, 0, 0])
    assert len(s.bombs) == 1 and ev2.bombs_placed[0] == 0
    assert s.agents[0].ammo == 2
    s.agents[0].ammo = 0
    s.agents[0].position = (2, 2)
    s, ev3 = engine.step(s, [Action.BOMB, 0, 0, 0])
    assert ev3.bombs_placed[0] == 0 and len(s.bombs) == 1


def test_chain_explosion_same_tick():
    s = open_state(positions={0: (0, 0), 1: (10, 0), 2: (10, 10), 3: (0, 10)})
    s.bombs = [Bomb((5, 5), 0, 1, 2), Bomb((5, 6), 1, 4, 2), Bomb((5, 7), 2, 8, 2)]
    for a in s.agents:
        a.ammo = 0
    pre = engine.pre_detonation(s, STAY)
    assert fixed_point_exploding(pre) == {(5, 5), (5, 6), (5, 7)}
    s, ev = engine.step(s, STAY)
    assert not s.bombs
    assert sorted(ev.exploded) == [(5, 5), (5, 6), (5, 7)]
    assert {(5, 8), (4, 7)} <= set(s.flames)
    assert [a.ammo for a in s.agents] == [1, 1, 1, 0]


def test_blast_coverage_open_and_walls():
    s = open_state()
    assert len(engine.blast_coverage(s, Bomb((5, 5), 0, 10, 2))) == 5
    set_cell(s, (5, 4), engine.RIGID)
    cov = engine.blast_coverage(s, Bomb((5, 5), 0, 10, 2))
    assert (5, 4) not in cov and len(cov) == 4
    set_cell(s, (4, 5), engine.WOOD)
    cov = engine.blast_coverage(s, Bomb((5, 5), 0, 10, 3))
    assert {c for c in cov if c[1] == 5 and c[0] < 5} == {(4, 5)}
    assert cov == ray_cover(s, (5, 5), 3)


def test_blast_coverage_matches_ray_oracle():
    for seed in range(20):
        s = engine.new_game(BoardConfig(), seed)
        n = s.size
        for r in range(n):
            for c in range(n):
                if s.board[r * n + c] == 0:
                    for strength in (2, 3, 5):
                        assert engine.blast_coverage(s, Bomb((r, c), 0, 5, strength)) == ray_cover(s, (r, c), strength)


def test_flames_kill_destroy_wood_reveal_items():
    s = open_state(positions={0: (5, 5), 1: (5, 6)})
    set_cell(s, (4, 5), engine.WOOD)
    s.hidden_items[(4, 5)] = ItemKind.KICK
    s.items[(6, 5)] = ItemKind.EXTRA_BOMB
    s.bombs.append(Bomb((5, 5), 0, 1, 2))
    s.agents[0].ammo = 0
    s, ev = engine.step(s, STAY)
    assert ev.died == [True, True, False, False]
    assert sorted(ev.agents_killed) == [0, 1]
    assert ev.wood_destroyed == 1
    assert s.items == {(4, 5): ItemKind.KICK}
    assert s.terrain(4, 5) == engine.Terrain.PASSAGE


def test_item_pickup():
    s = open_state(positions={0: (5, 5)})
    s.items[(5, 6)] = ItemKind.INCREASE_RANGE
    s.items[(5, 7)] = ItemKind.EXTRA_BOMB
    s.items[(5, 8)] = ItemKind.KICK
    for _ in range(3):
        s, ev = engine.step(s, [Action.RIGHT, 0, 0, 0])
        assert len(ev.items_picked[0]) == 1
    a = s.agents[0]
    assert (a.blast_strength, a.ammo, a.can_kick) == (3, 2, True)
    assert not s.items


def test_terminal_rules():
    s = open_state(max_steps=3)
    for _ in range(3):
        assert engine.terminal(s) is None
        s, _ = engine.step(s, STAY)
    res = engine.terminal(s)
    assert res.is_tie and res.enemy_deaths == (0, 0, 0, 0)
    with pytest.raises(engine.IllegalTransitionError):
        engine.step(s, STAY)

    s = open_state()
    s.agents[0].alive = s.agents[2].alive = False
    s.agents[1].alive = False
    res = engine.terminal(s)
    assert res.winner == 1
    assert res.enemy_deaths == (1, 2, 1, 2)
    assert res.score(1) == 1.0 and res.score(0) == 0.0


def test_all_die_same_tick_is_tie():
    s = open_state(positions={0: (5, 4), 1: (5, 6), 2: (4, 5), 3: (6, 5)})
    s.bombs.append(Bomb((5, 5), 0, 1, 2))
    s, ev = engine.step(s, STAY)
    assert all(ev.died)
    res = engine.terminal(s)
    assert res.is_tie and res.enemy_deaths == (2, 2, 2, 2)


def test_step_is_pure():
    s = engine.new_game(BoardConfig(), 3)
    before = engine.state_hash(s)
    engine.step(s, [Action.BOMB, Action.DOWN, Action.UP, Action.LEFT])
    assert engine.state_hash(s) == before


def test_wrong_action_count():
    with pytest.raises(ValueError):
        engine.step(engine.new_game(BoardConfig(), 0), [0, 0, 0])


def test_replay_determinism():
    g = RandomGame(BoardConfig(), 11)
    g.play()
    assert engine.run_actions(engine.new_game(BoardConfig(), 11), g.actions) == g.hashes


@pytest.mark.parametrize("size,rigid,wood,items", [(7, 4, 6, 2), (9, 16, 16, 8), (11, 36, 36, 20)])
def test_random_games_invariants(size, rigid, wood, items):
    cfg = BoardConfig(board_size=size, num_rigid=rigid, num_wood=wood, num_items=items, max_steps=150)
    for seed in range(60):
        g = RandomGame(cfg, seed, bomb_weight=0.3)
        res = g.play()
        assert res is not None
        assert g.violations == []


def test_render_and_dict():
    s = open_state(positions={0: (0, 0)})
    s.bombs.append(Bomb((3, 3), 0, 5, 2))
    lines = engine.render(s).splitlines()
    assert len(lines) == 11 and lines[0][0] == "0" and lines[3][3] == "b"
    d = s.to_dict()
    assert d["tick"] == 0 and len(d["agents"]) == 4
