from __future__ import annotations

import json
from collections import deque

import pytest

from pommerleague.agents import ScriptedKind
from pommerleague.config import from_dict, parse_outcome_stream
from pommerleague.curriculum import (
    LOSS, TIE, WIN, CurriculumConfig, CurriculumError, CurriculumState, Phase, advance, current_opponent,
    record_episode, should_advance,
)
from pommerleague.rewards import AnnealingState
from pommerleague.training import CurriculumTrainer, EpisodeInfo


def reference_advances(tokens, episodes, window=100, percent=55):
    """Episode numbers (1-based) at which a plain counter sees the threshold crossed."""
    stream = [kind for count, kind in parse_outcome_stream(tokens) for _ in range(count)]
    out, recent = [], deque(maxlen=window)
    for i in range(episodes):
        recent.append(stream[i % len(stream)])
        if len(recent) == window and sum(o == "win" for o in recent) * 100 >= percent * window:
            out.append(i + 1)
            recent.clear()
            if len(out) == 3:
                break
    return out


def test_opponents_by_phase():
    cur = CurriculumState()
    assert current_opponent(cur) == ScriptedKind.STATIC
    cur.phase = Phase.SIMPLE_MOVING
    assert current_opponent(cur) == ScriptedKind.SIMPLE_MOVING
    cur.phase = Phase.SIMPLE_BOMB
    assert current_opponent(cur) == ScriptedKind.SIMPLE_BOMB
    cur.phase = Phase.DONE
    with pytest.raises(CurriculumError):
        current_opponent(cur)


def test_win_rate_counting():
    cur = record_episode(CurriculumState(), WIN)
    assert cur.win_rate == 1.0
    cur = CurriculumState()
    for o in [WIN] * 55 + [LOSS] * 45:
        record_episode(cur, o)
    assert cur.win_rate == 0.55 and should_advance(cur)
    cur = CurriculumState()
    for o in [WIN] * 54 + [TIE] * 46:
        record_episode(cur, o)
    assert cur.win_rate == 0.54 and not should_advance(cur)
    with pytest.raises(ValueError):
        record_episode(cur, "draw")


def test_window_rules():
    cur = CurriculumState()
    for o in [WIN] * 56 + [LOSS] * 44:
        record_episode(cur, o)
    assert should_advance(cur)
    half = CurriculumState()
    for o in [WIN] * 45 + [LOSS] * 5:
        record_episode(half, o)
    assert half.win_rate == 0.9 and not should_advance(half)
    # the window slides
    for _ in range(100):
        record_episode(cur, LOSS)
    assert len(cur.win_window) == 100 and cur.win_rate == 0.0


def test_should_advance_monotone_in_wins():
    results = []
    for wins in range(101):
        cur = CurriculumState()
        for o in [WIN] * wins + [LOSS] * (100 - wins):
            record_episode(cur, o)
        results.append(should_advance(cur))
    assert results == sorted(results)
    assert results.index(True) == 55


def test_advance_state_machine():
    anneal = AnnealingState()
    cur = CurriculumState()
    record_episode(cur, WIN)
    advance(cur, anneal)
    assert cur.phase == Phase.SIMPLE_MOVING and not cur.win_window
    advance(cur, anneal)
    assert anneal.mode == "adaptive"
    advance(cur, anneal)
    assert cur.phase == Phase.DONE and anneal.mode == "off" and anneal.alpha() == 0.0
    with pytest.raises(CurriculumError):
        advance(cur, anneal)


def test_config_validation_and_roundtrip():
    with pytest.raises(ValueError):
        CurriculumConfig(advance_threshold=1.0)
    cur = CurriculumState.from_config(CurriculumConfig(window_size=10))
    record_episode(cur, TIE)
    back = CurriculumState.from_dict(json.loads(json.dumps(cur.to_dict())))
    assert back.to_dict() == cur.to_dict() and back.win_window.maxlen == 10


@pytest.mark.parametrize("tokens", [("60W", "40L"), ("40L", "60W"), ("70L", "30W", "50W", "10T"), ("54W", "46L", "56W", "44L")])
def test_mock_trainer_matches_reference_counter(tmp_path, tokens):
    cfg = from_dict({"mock": {"enabled": True, "outcomes": list(tokens), "episode_ticks": 10}, "curriculum_steps": 10_000})
    result = CurriculumTrainer(cfg, tmp_path).run()
    expect = reference_advances(tokens, 1000)
    assert [t["episode"] for t in result.transitions] == expect
    assert [t["to"] for t in result.transitions] == [2, 3, 4][:len(expect)]
    lines = [json.loads(x) for x in (tmp_path / "metrics.jsonl").read_text().splitlines()]
    assert [r["transition"]["episode"] for r in lines if r.get("event") == "advance"] == expect
    steps = [r["timestep"] for r in lines]
    assert steps == sorted(steps)
    assert (tmp_path / "curriculum_policy.plsn").exists()


def test_stale_episodes_are_discarded(tmp_path):
    cfg = from_dict({"mock": {"enabled": True}, "curriculum_steps": 100})
    tr = CurriculumTrainer(cfg, tmp_path)
    for _ in range(100):
        tr._intake(EpisodeInfo(WIN, 2, 10, 1.0, 0, 0, Phase.STATIC))
    assert tr.curriculum.phase == Phase.SIMPLE_MOVING
    # in-flight episodes started against the old opponent do not count
    for _ in range(30):
        tr._intake(EpisodeInfo(WIN, 2, 10, 1.0, 0, 0, Phase.STATIC))
    assert len(tr.curriculum.win_window) == 0
    assert tr.episodes == 130 and tr.anneal.x == 2.0
