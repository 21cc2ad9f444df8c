"""Rollout collection and the two training stages (curriculum, then league self-play).

Every iteration plays a fixed number of whole episodes in lockstep, so
iteration boundaries never cut through a game.  That keeps checkpoints
small (no in-flight game state) and makes resume exact.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np
import torch

from . import engine
from .config import RunConfig, parse_outcome_stream
from .curriculum import LOSS, TIE, WIN, CurriculumState, Phase, advance, current_opponent, record_episode, should_advance
from .engine import BoardConfig, GameState
from .league import (
    LeagueError, LeagueState, MatchRecord, matchmaking_probs, record_match, replacement_check, run_league_match, sample_opponent,
)
from .observation import NUM_PLANES, NUM_SCALARS, VIEW, encode
from .play import Controller, PolicyController, ScriptedController, team_agents
from .policy import (
    PolicyNetwork, PpoConfig, SequenceBatch, compute_advantages, load_optimizer_state, make_optimizer,
    optimizer_state_bytes, ppo_update, restore, snapshot,
)
from .rewards import AnnealingState, RewardConfig, combined_reward, exploration_reward, game_reward, update_performance

log = logging.getLogger(__name__)


# -- rollouts ----------------------------------------------------------------

@dataclass
class EpisodeSpec:
    opponent: Controller
    alpha: float
    seed: int
    learner_team: int
    tag: Any = None


@dataclass
class EpisodeInfo:
    outcome: str
    enemy_deaths: int
    ticks: int
    alpha: float
    seed: int
    learner_team: int
    tag: Any = None

    @property
    def score(self) -> float:
        return {WIN: 1.0, TIE: 0.5, LOSS: 0.0}[self.outcome]


@dataclass
class _Stream:
    """One learner agent's steps in one episode."""

    planes: list = field(default_factory=list)
    scalars: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    logp: list = field(default_factory=list)
    values: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    h: list = field(default_factory=list)
    c: list = field(default_factory=list)


def episode_outcome(result: engine.GameResult, team: int) -> str:
    if result.winner is None:
        return TIE
    return WIN if result.winner == team else LOSS


def play_episodes(
    model: PolicyNetwork,
    specs: Sequence[EpisodeSpec],
    board: BoardConfig,
    rewards: RewardConfig,
    rng: np.random.Generator,
) -> tuple[list[_Stream], list[EpisodeInfo], int]:
    """Play every EpisodeSpec to the end in lockstep with one batched forward per tick.

    Both learner teammates share ``model`` with separate recurrent states.
    Returns the per-agent step streams, one info per episode (in input order)
    and the number of environment steps taken.
    """
    dtype = next(model.parameters()).dtype
    hidden = model.config.lstm_hidden
    games: list[Optional[GameState]] = []
    agent_ids, streams, state_hc = [], [], []
    for spec in specs:
        state = engine.new_game(board, spec.seed)
        games.append(state)
        mine, theirs = team_agents(spec.learner_team), team_agents(1 - spec.learner_team)
        spec.opponent.reset(theirs, spec.seed * 2 + 1 - spec.learner_team)
        agent_ids.append(mine)
        streams.append({aid: _Stream() for aid in mine})
        state_hc.append({aid: (torch.zeros(hidden, dtype=dtype), torch.zeros(hidden, dtype=dtype)) for aid in mine})
    infos: list[Optional[EpisodeInfo]] = [None] * len(specs)
    steps = 0

    while any(g is not None for g in games):
        batch = []
        for i, state in enumerate(games):
            if state is None:
                continue
            for aid in agent_ids[i]:
                if state.agents[aid].alive:
                    batch.append((i, aid, encode(state, aid)))
        chosen = {}
        if batch:
            planes = torch.as_tensor(np.stack([o.planes for _, _, o in batch]), dtype=dtype)[None]
            scalars = torch.as_tensor(np.stack([o.scalars for _, _, o in batch]), dtype=dtype)[None]
            h = torch.stack([state_hc[i][aid][0] for i, aid, _ in batch])
            c = torch.stack([state_hc[i][aid][1] for i, aid, _ in batch])
            with torch.no_grad():
                logits, values, (h2, c2) = model(planes, scalars, (h, c))
            logits = logits[0].double().numpy()
            values = values[0].double().numpy()
            shifted = logits - logits.max(axis=1, keepdims=True)
            logp_all = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
            cdf = np.cumsum(np.exp(logp_all), axis=1)
            u = rng.random(len(batch)) * cdf[:, -1]
            actions = np.minimum((cdf <= u[:, None]).sum(axis=1), 5)
            for k, (i, aid, obs) in enumerate(batch):
                s = streams[i][aid]
                s.planes.append(obs.planes)
                s.scalars.append(obs.scalars)
                s.actions.append(int(actions[k]))
                s.logp.append(float(logp_all[k, actions[k]]))
                s.values.append(float(values[k]))
                s.h.append(h[k])
                s.c.append(c[k])
                state_hc[i][aid] = (h2[k], c2[k])
                chosen[(i, aid)] = int(actions[k])

        for i, state in enumerate(games):
            if state is None:
                continue
            spec = specs[i]
            theirs = team_agents(1 - spec.learner_team)
            acts = [0] * engine.NUM_AGENTS
            for aid, a in zip(theirs, spec.opponent.act(state, theirs)):
                acts[aid] = a
            for aid in agent_ids[i]:
                acts[aid] = chosen.get((i, aid), 0)
            was_alive = {aid: state.agents[aid].alive for aid in agent_ids[i]}
            state, events = engine.step(state, acts)
            steps += 1
            result = engine.terminal(state)
            for aid in agent_ids[i]:
                if not was_alive[aid]:
                    continue
                died = events.died[aid]
                e = exploration_reward(events, aid, rewards)
                R = game_reward(result, aid, died, rewards)
                streams[i][aid].rewards.append(combined_reward(e, R, spec.alpha))
            if result is None:
                games[i] = state
                continue
            games[i] = None
            infos[i] = EpisodeInfo(
                episode_outcome(result, spec.learner_team),
                result.enemy_deaths[agent_ids[i][0]],
                state.tick, spec.alpha, spec.seed, spec.learner_team, spec.tag,
            )

    flat = [s for per_env in streams for s in per_env.values() if s.actions]
    return flat, infos, steps


def build_batch(streams: Sequence[_Stream], config: PpoConfig, dtype=torch.float32) -> SequenceBatch:
    """Cut each agent episode into fixed-length sequences with GAE targets.

    Every stream is one agent's complete episode, so it ends done; the last
    sequence of a stream is padded and masked.
    """
    L = config.sequence_length
    cols: dict[str, list] = {k: [] for k in ("planes", "scalars", "actions", "logp", "adv", "ret", "starts", "mask", "h0", "c0")}
    for s in streams:
        n = len(s.actions)
        dones = np.zeros(n)
        dones[-1] = 1.0
        adv, ret = compute_advantages(s.rewards, s.values, dones, 0.0, config.gamma, config.lam)
        for lo in range(0, n, L):
            hi = min(lo + L, n)
            pad = L - (hi - lo)
            cols["planes"].append(np.concatenate([np.stack(s.planes[lo:hi]), np.zeros((pad, NUM_PLANES, VIEW, VIEW), np.float32)]))
            cols["scalars"].append(np.concatenate([np.stack(s.scalars[lo:hi]), np.zeros((pad, NUM_SCALARS), np.float32)]))
            cols["actions"].append(np.array(s.actions[lo:hi] + [0] * pad))
            cols["logp"].append(np.array(s.logp[lo:hi] + [0.0] * pad))
            cols["adv"].append(np.concatenate([adv[lo:hi], np.zeros(pad)]))
            cols["ret"].append(np.concatenate([ret[lo:hi], np.zeros(pad)]))
            starts = np.zeros(L)
            starts[0] = 1.0 if lo == 0 else 0.0
            cols["starts"].append(starts)
            cols["mask"].append(np.concatenate([np.ones(hi - lo), np.zeros(pad)]))
            cols["h0"].append(s.h[lo])
            cols["c0"].append(s.c[lo])

    def stack(key, dt=dtype):
        return torch.as_tensor(np.stack(cols[key], axis=1), dtype=dt)

    return SequenceBatch(
        planes=stack("planes"),
        scalars=stack("scalars"),
        actions=stack("actions", torch.long),
        old_logp=stack("logp"),
        advantages=stack("adv"),
        returns=stack("ret"),
        starts=stack("starts"),
        mask=stack("mask"),
        h0=torch.stack(cols["h0"]).to(dtype),
        c0=torch.stack(cols["c0"]).to(dtype),
    )


# -- persistence helpers -------------------------------------------------------

class MetricsWriter:
    """Append-only line-delimited JSON metrics."""

    def __init__(self, path: Path):
        self.path = path
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.last_timestep = -1

    def write(self, record: dict) -> None:
        if record["timestep"] < self.last_timestep:
            raise ValueError("metrics timesteps must not go backwards")
        self.last_timestep = record["timestep"]
        with open(self.path, "a") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")

    def count(self) -> int:
        if not self.path.exists():
            return 0
        with open(self.path) as fh:
            return sum(1 for _ in fh)

    def truncate(self, lines: int) -> None:
        """Drop records written after a checkpoint (only used when resuming an interrupted run)."""
        if not self.path.exists():
            return
        with open(self.path) as fh:
            kept = [line for _, line in zip(range(lines), fh)]
        _atomic_write(self.path, "".join(kept).encode())
        if kept:
            self.last_timestep = json.loads(kept[-1])["timestep"]


def metrics_record(timestep: int, stage: str, **fields) -> dict:
    rec = {
        "timestep": int(timestep), "stage": stage, "phase": None, "win_rate": None,
        "x": None, "alpha": None, "elo": None, "losses": None,
    }
    rec.update(fields)
    return rec


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def rng_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def rng_from_state(state: dict) -> np.random.Generator:
    rng = np.random.default_rng()
    rng.bit_generator.state = state
    return rng


def new_network(config: RunConfig, seed: int) -> PolicyNetwork:
    torch.manual_seed(seed)
    return PolicyNetwork(config.ppo.network)


# -- curriculum stage ------------------------------------------------------------

@dataclass
class CurriculumResult:
    phase: Phase
    steps: int
    episodes: int
    transitions: list[dict]
    policy: bytes


class CurriculumTrainer:
    """Phases 1 to 3 against scripted opponents with annealed reward shaping."""

    def __init__(self, config: RunConfig, out_dir: str | Path, model: Optional[PolicyNetwork] = None):
        self.config = config
        self.out = Path(out_dir)
        self.rng = np.random.default_rng(config.seed)
        self.model = model if model is not None else new_network(config, config.seed)
        self.optimizer = make_optimizer(self.model, config.ppo)
        self.curriculum = CurriculumState.from_config(config.curriculum)
        a = config.annealing
        self.anneal = AnnealingState(mode=a.mode, k=a.k, linear_schedule=a.linear_schedule, window_size=a.window_size)
        self.metrics = MetricsWriter(self.out / "metrics.jsonl")
        self.steps = 0
        self.episodes = 0
        self.transitions: list[dict] = []
        self.stop_phase = Phase.DONE

    def _log(self, **fields) -> None:
        self.metrics.write(metrics_record(
            self.steps, "curriculum", phase=int(self.curriculum.phase), win_rate=self.curriculum.win_rate,
            x=self.anneal.x, alpha=self.anneal.alpha(self.steps), **fields,
        ))

    def _intake(self, info: EpisodeInfo) -> None:
        """Serialized intake of one finished episode."""
        self.episodes += 1
        update_performance(self.anneal, info.enemy_deaths)
        if self.curriculum.phase == Phase.DONE or info.tag != self.curriculum.phase:
            # started against an earlier opponent; not evidence about this phase
            return
        record_episode(self.curriculum, info.outcome)
        if should_advance(self.curriculum):
            old = self.curriculum.phase
            rate = self.curriculum.win_rate
            advance(self.curriculum, self.anneal)
            event = {"episode": self.episodes, "timestep": self.steps, "from": int(old), "to": int(self.curriculum.phase), "win_rate": rate}
            self.transitions.append(event)
            log.info("curriculum advanced %s -> %s after %d episodes", old.name, self.curriculum.phase.name, self.episodes)
            self._log(event="advance", transition=event)

    def _save_policy(self, name: str) -> bytes:
        data = snapshot(self.model)
        (self.out / "snapshots").mkdir(parents=True, exist_ok=True)
        _atomic_write(self.out / "snapshots" / name, data)
        return data

    def run(self, max_steps: Optional[int] = None, stop_phase: Phase = Phase.DONE) -> CurriculumResult:
        """Train until the step budget is spent or the curriculum reaches ``stop_phase``."""
        budget = max_steps if max_steps is not None else self.config.curriculum_steps
        self.stop_phase = stop_phase
        self.out.mkdir(parents=True, exist_ok=True)
        self._log(event="start")
        if self.config.mock.enabled:
            self._run_mock(budget)
        else:
            self._run_ppo(budget)
        self._log(event="end")
        data = self._save_policy("curriculum_final.plsn")
        _atomic_write(self.out / "curriculum_policy.plsn", data)
        return CurriculumResult(self.curriculum.phase, self.steps, self.episodes, self.transitions, data)

    def _run_mock(self, budget: int) -> None:
        stream = parse_outcome_stream(self.config.mock.outcomes)
        deaths = {WIN: 2, TIE: 0, LOSS: 0}
        while self.steps < budget and self.curriculum.phase < self.stop_phase:
            for count, outcome in stream:
                for _ in range(count):
                    if self.steps >= budget or self.curriculum.phase >= self.stop_phase:
                        return
                    alpha = self.anneal.alpha(self.steps)
                    self.steps += self.config.mock.episode_ticks
                    self._intake(EpisodeInfo(outcome, deaths[outcome], self.config.mock.episode_ticks, alpha, 0, 0, self.curriculum.phase))
                    if self.episodes % 100 == 0:
                        self._log()

    def _run_ppo(self, budget: int) -> None:
        cfg = self.config
        iteration = 0
        while self.steps < budget and self.curriculum.phase < self.stop_phase:
            specs = []
            for _ in range(cfg.ppo.num_envs):
                seed = int(self.rng.integers(2**31))
                specs.append(EpisodeSpec(
                    ScriptedController(current_opponent(self.curriculum)), self.anneal.alpha(self.steps),
                    seed, int(self.rng.integers(2)), self.curriculum.phase,
                ))
            streams, infos, steps = play_episodes(self.model, specs, cfg.board, cfg.rewards, self.rng)
            self.steps += steps
            for info in infos:
                self._intake(info)
            stats = ppo_update(self.model, self.optimizer, build_batch(streams, cfg.ppo), cfg.ppo, self.rng)
            iteration += 1
            self._log(losses=stats, episodes=self.episodes)
            if iteration % cfg.snapshot_interval == 0:
                self._save_policy(f"curriculum_{self.steps:010d}.plsn")


# -- league stage ----------------------------------------------------------------

def mock_match_player(strengths: dict[str, float]):
    """Match outcomes drawn from slot strengths; the draw is a pure function of the seed."""

    def play(league: LeagueState, a: str, b: str, seed: int) -> tuple[float, int]:
        sa, sb = strengths.get(a, 1.0), strengths.get(b, 1.0)
        u = np.random.default_rng(seed).random()
        return (1.0 if u < sa / (sa + sb) else 0.0), 0

    return play


class LeagueTrainer:
    """Five learners and three frozen scripted agents; learners train in turn.

    One iteration trains one learner on ``num_envs`` matches against
    opponents picked by matchmaking.  Results are applied to the league in
    completion order, with a replacement check every ``eval_interval``
    matches.
    """

    CHECKPOINT = "checkpoint"

    def __init__(self, config: RunConfig, out_dir: str | Path, initial_policy: Optional[bytes]):
        self.config = config
        self.out = Path(out_dir)
        self.rng = np.random.default_rng(config.seed + 1)
        if initial_policy is None and not config.mock.enabled:
            raise FileNotFoundError("league training needs the curriculum-stage policy snapshot")
        self.league = LeagueState.create(initial_policy, config.league)
        self.metrics = MetricsWriter(self.out / "league_metrics.jsonl")
        self.iteration = 0
        self.steps = 0
        self.models: dict[str, PolicyNetwork] = {}
        self.optimizers: dict[str, torch.optim.Optimizer] = {}
        self._cache: dict[str, PolicyNetwork] = {}
        self.replacements: list[dict] = []
        if not config.mock.enabled:
            for sid in self.league.learners:
                self._load_learner(sid)

    def _load_learner(self, sid: str, optimizer_state: Optional[bytes] = None) -> None:
        model = restore(self.league.slots[sid].snapshot, self.config.ppo.network)
        opt = make_optimizer(model, self.config.ppo)
        if optimizer_state is not None:
            load_optimizer_state(opt, optimizer_state)
        self.models[sid], self.optimizers[sid] = model, opt

    def _opponent(self, sid: str) -> Controller:
        slot = self.league.slots[sid]
        if slot.frozen:
            return ScriptedController(slot.scripted)
        ref = slot.snapshot_ref
        if ref not in self._cache:
            if len(self._cache) > 16:
                self._cache.clear()
            self._cache[ref] = restore(slot.snapshot, self.config.ppo.network)
        return PolicyController(self._cache[ref])

    def _apply(self, rec: MatchRecord) -> None:
        record_match(self.league, rec)
        if self.league.matches % self.config.league.eval_interval == 0:
            for weak, src in replacement_check(self.league, self.rng):
                event = {"match": self.league.matches, "replaced": weak, "source": src, "elo": self.league.elo[weak]}
                self.replacements.append(event)
                log.info("replaced %s with a copy of %s", weak, src)
                if not self.config.mock.enabled:
                    self._load_learner(weak)

    def _log(self, **fields) -> None:
        self.metrics.write(metrics_record(
            self.steps, "league", phase=int(Phase.DONE), x=None, alpha=0.0,
            elo=dict(self.league.elo.ratings), matches=self.league.matches, **fields,
        ))

    def run(self, max_matches: Optional[int] = None, stop_after: Optional[int] = None) -> LeagueState:
        """Train until the match budget is spent.

        ``stop_after`` ends the call after that many iterations without
        finishing the run, which is how interruption is simulated in tests.
        """
        budget = max_matches if max_matches is not None else self.config.league_matches
        self.out.mkdir(parents=True, exist_ok=True)
        if self.iteration == 0:
            self._log(event="start")
        done_here = 0
        while self.league.matches < budget:
            if stop_after is not None and done_here >= stop_after:
                return self.league
            self._iterate(budget)
            done_here += 1
            if self.iteration % self.config.checkpoint_interval == 0:
                self.save_checkpoint()
        self._log(event="end")
        self.save_checkpoint()
        (self.out / "league_complete").write_text(json.dumps({"matches": self.league.matches}))
        return self.league

    def _iterate(self, budget: int) -> None:
        cfg = self.config
        learners = self.league.learners
        training_id = learners[self.iteration % len(learners)]
        n = min(cfg.ppo.num_envs, budget - self.league.matches)
        stats = None
        if cfg.mock.enabled:
            play = mock_match_player(cfg.mock.strengths)
            for _ in range(n):
                rec = run_league_match(self.league, training_id, self.rng, play)
                self.steps += cfg.mock.episode_ticks
                self._apply(rec)
        else:
            candidates = [sid for sid in self.league.slots if sid != training_id]
            probs = matchmaking_probs(self.league.elo, training_id, candidates)
            specs = []
            for _ in range(n):
                opp = sample_opponent(candidates, probs, self.rng)
                specs.append(EpisodeSpec(self._opponent(opp), 0.0, int(self.rng.integers(2**31)), int(self.rng.integers(2)), opp))
            model = self.models[training_id]
            streams, infos, steps = play_episodes(model, specs, cfg.board, cfg.rewards, self.rng)
            self.steps += steps
            stats = ppo_update(model, self.optimizers[training_id], build_batch(streams, cfg.ppo), cfg.ppo, self.rng)
            # publish before applying results, so a replacement copying this learner gets the update
            self.league.slots[training_id].snapshot = snapshot(model)
            for info in infos:
                self._apply(MatchRecord(training_id, info.tag, info.score, info.ticks, info.seed))
        self.iteration += 1
        self._log(training=training_id, losses=stats)

    # checkpoints hold everything the next iteration reads, so resume equals an uninterrupted run
    def save_checkpoint(self) -> None:
        ck = self.out / self.CHECKPOINT
        (ck / "snapshots").mkdir(parents=True, exist_ok=True)
        for slot in self.league.slots.values():
            if slot.snapshot is not None:
                path = ck / "snapshots" / f"{slot.snapshot_ref}.plsn"
                if not path.exists():
                    _atomic_write(path, slot.snapshot)
        optim = {}
        for sid, opt in self.optimizers.items():
            name = f"optim_{sid}.pt"
            _atomic_write(ck / name, optimizer_state_bytes(opt))
            optim[sid] = name
        state = {
            "league": self.league.to_dict(),
            "rng": rng_state(self.rng),
            "iteration": self.iteration,
            "steps": self.steps,
            "metrics_lines": self.metrics.count(),
            "optimizers": optim,
            "replacements": self.replacements,
        }
        _atomic_write(ck / "state.json", json.dumps(state, sort_keys=True).encode())

    @classmethod
    def resume(cls, config: RunConfig, out_dir: str | Path) -> LeagueTrainer:
        out = Path(out_dir)
        if (out / "league_complete").exists():
            raise LeagueError(f"{out} holds a completed league run; start a new output directory")
        ck = out / cls.CHECKPOINT
        try:
            state = json.loads((ck / "state.json").read_text())
        except FileNotFoundError:
            raise FileNotFoundError(f"no league checkpoint in {out}") from None
        snaps = {p.stem: p.read_bytes() for p in (ck / "snapshots").glob("*.plsn")}
        self = cls.__new__(cls)
        self.config = config
        self.out = out
        self.rng = rng_from_state(state["rng"])
        self.league = LeagueState.from_dict(state["league"], snaps)
        self.metrics = MetricsWriter(out / "league_metrics.jsonl")
        self.metrics.truncate(state["metrics_lines"])
        self.iteration = state["iteration"]
        self.steps = state["steps"]
        self.models, self.optimizers, self._cache = {}, {}, {}
        self.replacements = state["replacements"]
        if not config.mock.enabled:
            for sid in self.league.learners:
                self._load_learner(sid, (ck / state["optimizers"][sid]).read_bytes())
        return self
