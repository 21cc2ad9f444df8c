"""Team-mode Pommerman: deterministic engine, scripted opponents, recurrent PPO,
curriculum training and population self-play with Elo matchmaking."""

from .engine import Action, BoardConfig, GameResult, GameState, new_game, step, terminal
from .observation import Observation, encode

__all__ = [
    "Action", "BoardConfig", "GameResult", "GameState", "Observation", "encode", "new_game", "step", "terminal",
]
__version__ = "0.1.0"
