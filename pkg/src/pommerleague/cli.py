"""Train and evaluate team Pommerman agents from the command line.

Exit codes: 0 success, 1 user error (bad config, missing or corrupt input,
failed replay verification), 2 internal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from functools import partial
from pathlib import Path
from typing import Optional, Sequence

from . import config as config_mod
from . import engine
from .agents import ScriptedKind
from .config import ConfigError, RunConfig
from .engine import BoardConfig
from .league import LeagueError, round_robin
from .play import PolicyController, ScriptedController, play_game
from .policy import SnapshotError, restore
from .replay import ReplayError, ReplayWriter, read_replay, verify_replay
from .training import CurriculumTrainer, LeagueTrainer

log = logging.getLogger("pommerleague")

EXIT_OK, EXIT_USER, EXIT_INTERNAL = 0, 1, 2


class UserError(Exception):
    pass


def _load_config(args) -> RunConfig:
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "out", None) is not None:
        overrides["output_dir"] = args.out
    if args.config is None:
        return config_mod.from_dict(overrides)
    return config_mod.load(args.config, overrides)


def _fresh_run_dir(path: Path, marker: str) -> None:
    if (path / marker).exists():
        raise UserError(f"{path} already holds a run ({marker}); choose a new --out directory")
    path.mkdir(parents=True, exist_ok=True)


def _write_config(cfg: RunConfig, path: Path, name: str) -> None:
    target = path / name
    if not target.exists():
        target.write_text(cfg.to_json() + "\n")


def cmd_train_curriculum(args) -> int:
    cfg = _load_config(args)
    out = Path(cfg.output_dir)
    _fresh_run_dir(out, "metrics.jsonl")
    _write_config(cfg, out, "config.json")
    result = CurriculumTrainer(cfg, out).run(args.steps)
    print(json.dumps({
        "phase": result.phase.name, "steps": result.steps, "episodes": result.episodes,
        "transitions": result.transitions, "policy": str(out / "curriculum_policy.plsn"),
    }, indent=2))
    return EXIT_OK


def cmd_train_league(args) -> int:
    cfg = _load_config(args)
    out = Path(cfg.output_dir)
    if args.resume:
        trainer = LeagueTrainer.resume(cfg, out)
    else:
        _fresh_run_dir(out, "league_metrics.jsonl")
        policy = None
        path = Path(args.policy) if args.policy else out / "curriculum_policy.plsn"
        if path.exists():
            policy = path.read_bytes()
            restore(policy, cfg.ppo.network)
        elif not cfg.mock.enabled:
            raise UserError(f"curriculum policy snapshot not found: {path}")
        trainer = LeagueTrainer(cfg, out, policy)
    _write_config(cfg, out, "league_config.json")
    league = trainer.run(args.matches)
    print(json.dumps({
        "matches": league.matches,
        "elo": {k: round(v, 2) for k, v in league.elo.ratings.items()},
        "replacements": len(trainer.replacements),
    }, indent=2))
    return EXIT_OK


def _resolve(spec: str) -> tuple[str, object]:
    """An agent is a scripted kind name or a path to a policy snapshot."""
    try:
        return ScriptedKind(spec).value, ScriptedKind(spec)
    except ValueError:
        pass
    path = Path(spec)
    if not path.is_file():
        raise UserError(f"cannot resolve agent {spec!r}: not a scripted kind ({', '.join(k.value for k in ScriptedKind)}) or a snapshot file")
    try:
        restore(path.read_bytes())
    except (SnapshotError, ValueError) as exc:
        raise UserError(f"{path}: {exc}") from None
    return path.stem, path


def _controller(source, cache: dict):
    if isinstance(source, ScriptedKind):
        return ScriptedController(source)
    if source not in cache:
        cache[source] = restore(Path(source).read_bytes())
    return PolicyController(cache[source])


_CACHE: dict = {}


def _eval_game(sources: dict, board: dict, a: str, b: str, seed: int) -> float:
    rec = play_game([_controller(sources[a], _CACHE), _controller(sources[b], _CACHE)], BoardConfig(**board), seed)
    if rec.result.winner is None:
        return 0.5
    return 1.0 if rec.result.winner == 0 else 0.0


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    sources = {}
    for spec in args.agents:
        name, src = _resolve(spec)
        if name in sources:
            raise UserError(f"duplicate agent name {name!r}")
        sources[name] = src
    if len(sources) < 2:
        raise UserError("evaluate needs at least two agents")
    games = args.games if args.games is not None else cfg.games_per_pair
    play = partial(_eval_game, sources, vars(cfg.board).copy())
    if args.workers > 1:
        import multiprocessing as mp

        with mp.get_context("fork").Pool(args.workers) as pool:
            report = round_robin(list(sources), games, cfg.seed, play, k=cfg.league.k,
                                 initial_elo=cfg.league.initial_elo, starmap=partial(pool.starmap, chunksize=8))
    else:
        report = round_robin(list(sources), games, cfg.seed, play, k=cfg.league.k, initial_elo=cfg.league.initial_elo)
    print(report.format())
    if args.json:
        doc = {"games_per_pair": games, "seed": cfg.seed, "agents": report.names, "table": report.table()}
        Path(args.json).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_play(args) -> int:
    cfg = _load_config(args)
    sources = [_resolve(args.team0)[1], _resolve(args.team1)[1]]
    cache: dict = {}
    with open(args.replay, "w") as fh:
        rec = play_game([_controller(s, cache) for s in sources], cfg.board, cfg.seed, ReplayWriter(fh))
    winner = "tie" if rec.result.winner is None else f"team {rec.result.winner}"
    print(f"{winner} after {rec.ticks} ticks; replay written to {args.replay}")
    return EXIT_OK


def cmd_replay(args) -> int:
    replay = read_replay(args.file)
    result = verify_replay(replay, render=args.render)
    if args.render:
        for tick, frame in enumerate(result.frames):
            print(f"tick {tick}")
            print(frame)
            print()
    if not result.ok:
        print(f"replay verification FAILED: {result.message}", file=sys.stderr)
        return EXIT_USER
    print(f"replay verified: {result.ticks_checked} ticks, all state hashes match")
    return EXIT_OK


def _read_metrics(path: Path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def cmd_export_metrics(args) -> int:
    run = Path(args.run_dir)
    streams = [p for p in (run / "metrics.jsonl", run / "league_metrics.jsonl") if p.exists()]
    records = [r for p in streams for r in _read_metrics(p)]
    if not records:
        raise UserError(f"no metrics stream in {run}")
    out = Path(args.out) if args.out else run / "tables"
    out.mkdir(parents=True, exist_ok=True)
    written = []
    cur = [r for r in records if r["stage"] == "curriculum"]
    if cur:
        _write_csv(out / "performance.csv", ["timestep", "x", "alpha"], [(r["timestep"], r["x"], r["alpha"]) for r in cur])
        _write_csv(out / "win_rate.csv", ["timestep", "phase", "win_rate"], [(r["timestep"], r["phase"], r["win_rate"]) for r in cur])
        written += ["performance.csv", "win_rate.csv"]
    lg = [r for r in records if r["stage"] == "league"]
    if lg:
        slots = sorted(lg[0]["elo"])
        _write_csv(out / "elo.csv", ["timestep", "matches", *slots],
                   [(r["timestep"], r.get("matches"), *(r["elo"][s] for s in slots)) for r in lg])
        written.append("elo.csv")
    print("\n".join(str(out / name) for name in written))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pommerleague", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("--config", help="run config JSON (defaults for every missing field)")
        p.add_argument("--seed", type=int, help="override the config seed")
        if out:
            p.add_argument("--out", help="override the output directory")
        p.add_argument("--workers", type=int, default=1, help="worker processes (evaluate only; training is single-process)")

    p = sub.add_parser("train-curriculum", help="curriculum stage against scripted opponents")
    common(p)
    p.add_argument("--steps", type=int, help="override the environment step budget")
    p.set_defaults(func=cmd_train_curriculum)

    p = sub.add_parser("train-league", help="population self-play stage")
    common(p)
    p.add_argument("--policy", help="curriculum policy snapshot (default: <out>/curriculum_policy.plsn)")
    p.add_argument("--matches", type=int, help="override the match budget")
    p.add_argument("--resume", action="store_true", help="continue an interrupted run from its checkpoint")
    p.set_defaults(func=cmd_train_league)

    p = sub.add_parser("evaluate", help="round robin between scripted agents and/or snapshots")
    common(p, out=False)
    p.add_argument("agents", nargs="+", help="scripted kind names or snapshot paths")
    p.add_argument("--games", type=int, help="games per ordered pair (default from config)")
    p.add_argument("--json", help="also write the report as JSON to this path")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("play", help="play one game and record a replay")
    common(p, out=False)
    p.add_argument("team0")
    p.add_argument("team1")
    p.add_argument("--replay", required=True, help="replay file to write")
    p.set_defaults(func=cmd_play)

    p = sub.add_parser("replay", help="verify (and optionally render) a replay file")
    p.add_argument("file")
    p.add_argument("--render", action="store_true", help="print the board after every tick")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("export-metrics", help="write CSV tables from a run's metrics")
    p.add_argument("run_dir")
    p.add_argument("--out", help="table directory (default: <run_dir>/tables)")
    p.set_defaults(func=cmd_export_metrics)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UserError, ConfigError, ReplayError, LeagueError, SnapshotError, engine.InvalidConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
