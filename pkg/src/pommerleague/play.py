"""Controllers that drive a team, and the loop that plays one game."""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Optional, Protocol, Sequence

import numpy as np
import torch

from . import engine
from .agents import ScriptedKind, policy_for
from .engine import BoardConfig, GameResult, GameState
from .observation import encode
from .policy import PolicyNetwork, sample_actions
from .replay import ReplayWriter


class Controller(Protocol):
    def reset(self, agent_ids: Sequence[int], seed: int) -> None: ...

    def act(self, state: GameState, agent_ids: Sequence[int]) -> list[int]: ...


class ScriptedController:
    def __init__(self, kind: ScriptedKind | str):
        self.kind = ScriptedKind(kind)
        self._policy = policy_for(self.kind)
        self.rng = random.Random(0)
        self.memory: dict[int, dict] = {}

    def reset(self, agent_ids: Sequence[int], seed: int) -> None:
        self.rng = random.Random(seed)
        self.memory = {aid: {} for aid in agent_ids}

    def act(self, state: GameState, agent_ids: Sequence[int]) -> list[int]:
        if self.kind == ScriptedKind.STATIC:
            return [0] * len(agent_ids)
        out = []
        for aid in agent_ids:
            if state.agents[aid].alive:
                obs = encode(state, aid)
                if self.kind == ScriptedKind.DIJKSTRA:
                    a = self._policy(obs, self.rng, memory=self.memory.setdefault(aid, {}))
                else:
                    a = self._policy(obs, self.rng)
                out.append(int(a))
            else:
                out.append(0)
        return out


class PolicyController:
    """Both teammates share one network; each keeps its own recurrent state."""

    def __init__(self, model: PolicyNetwork, greedy: bool = False):
        self.model = model
        self.greedy = greedy
        self.rng = np.random.default_rng(0)
        self.state: dict[int, tuple[torch.Tensor, torch.Tensor]] = {}

    def reset(self, agent_ids: Sequence[int], seed: int) -> None:
        self.rng = np.random.default_rng(seed)
        h, c = self.model.initial_state(len(agent_ids))
        self.state = {aid: (h[i:i + 1], c[i:i + 1]) for i, aid in enumerate(agent_ids)}

    @torch.no_grad()
    def act(self, state: GameState, agent_ids: Sequence[int]) -> list[int]:
        live = [aid for aid in agent_ids if state.agents[aid].alive]
        actions = {aid: 0 for aid in agent_ids}
        if not live:
            return [0] * len(agent_ids)
        obs = [encode(state, aid) for aid in live]
        dtype = next(self.model.parameters()).dtype
        planes = torch.as_tensor(np.stack([o.planes for o in obs]), dtype=dtype)[None]
        scalars = torch.as_tensor(np.stack([o.scalars for o in obs]), dtype=dtype)[None]
        h = torch.cat([self.state[aid][0] for aid in live])
        c = torch.cat([self.state[aid][1] for aid in live])
        logits, _, (h, c) = self.model(planes, scalars, (h, c))
        logits = logits[0].double().numpy()
        if self.greedy:
            chosen = logits.argmax(axis=1)
        else:
            chosen, _ = sample_actions(logits, self.rng)
        for i, aid in enumerate(live):
            self.state[aid] = (h[i:i + 1], c[i:i + 1])
            actions[aid] = int(chosen[i])
        return [actions[aid] for aid in agent_ids]


def team_agents(team: int) -> tuple[int, int]:
    return (0, 2) if team == 0 else (1, 3)


@dataclass
class GameRecord:
    result: GameResult
    ticks: int
    final_state: GameState


def play_game(
    controllers: Sequence[Controller],
    config: Optional[BoardConfig] = None,
    seed: int = 0,
    replay: Optional[ReplayWriter] = None,
) -> GameRecord:
    """Play one team game; ``controllers[t]`` drives team ``t``."""
    state = engine.new_game(config, seed)
    teams = [team_agents(0), team_agents(1)]
    for t, ctrl in enumerate(controllers):
        ctrl.reset(teams[t], seed * 2 + t)
    if replay is not None:
        replay.write_header(state.config, seed)
    result = None
    while result is None:
        actions = [0] * engine.NUM_AGENTS
        for t, ctrl in enumerate(controllers):
            for aid, a in zip(teams[t], ctrl.act(state, teams[t])):
                actions[aid] = a
        state, _ = engine.step(state, actions)
        if replay is not None:
            replay.write_tick(state.tick, actions, engine.state_hash(state))
        result = engine.terminal(state)
    if replay is not None:
        replay.write_result(result, state.tick)
    return GameRecord(result, state.tick, state)
