"""Recurrent actor-critic network and clipped-objective PPO.

Network: four valid 3x3 convolutions (9 -> 7 -> 5 -> 3 -> 1), flatten,
concatenate the scalar features, an LSTM cell, a 128-unit fully connected
layer, then a 6-way policy head and a scalar value head.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .observation import NUM_PLANES, NUM_SCALARS, VIEW

NUM_ACTIONS = 6

SNAPSHOT_MAGIC = b"PLSN"
SNAPSHOT_VERSION = 1


class InvalidInputError(ValueError):
    pass


class SnapshotError(ValueError):
    pass


class DivergenceError(FloatingPointError):
    pass


@dataclass(frozen=True)
class NetworkConfig:
    conv_channels: tuple[int, ...] = (32, 64, 128, 256)
    lstm_hidden: int = 128
    fc_hidden: int = 128

    def __post_init__(self) -> None:
        if len(self.conv_channels) != 4:
            raise ValueError("the network uses exactly four convolution layers")


@dataclass(frozen=True)
class PpoConfig:
    gamma: float = 0.99
    lam: float = 0.95
    clip: float = 0.2
    epochs: int = 4
    minibatch_sequences: int = 64
    learning_rate: float = 2.5e-4
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    max_grad_norm: float = 0.5
    sequence_length: int = 10
    num_envs: int = 16
    network: NetworkConfig = field(default_factory=NetworkConfig)

    def __post_init__(self) -> None:
        if not (0.0 < self.gamma <= 1.0 and 0.0 < self.lam <= 1.0):
            raise ValueError("gamma and lam must lie in (0, 1]")
        if self.clip <= 0:
            raise ValueError("clip must be positive")


RecurrentState = tuple[torch.Tensor, torch.Tensor]


class PolicyNetwork(nn.Module):
    def __init__(self, config: NetworkConfig = NetworkConfig()):
        super().__init__()
        self.config = config
        widths = (NUM_PLANES, *config.conv_channels)
        self.convs = nn.ModuleList(
            nn.Conv2d(widths[i], widths[i + 1], kernel_size=3, stride=1, padding=0) for i in range(4)
        )
        self.flat_size = config.conv_channels[-1]
        self.lstm = nn.LSTMCell(self.flat_size + NUM_SCALARS, config.lstm_hidden)
        self.fc = nn.Linear(config.lstm_hidden, config.fc_hidden)
        self.policy_head = nn.Linear(config.fc_hidden, NUM_ACTIONS)
        self.value_head = nn.Linear(config.fc_hidden, 1)

    def initial_state(self, batch: int) -> RecurrentState:
        p = next(self.parameters())
        zeros = torch.zeros(batch, self.config.lstm_hidden, dtype=p.dtype, device=p.device)
        return zeros, zeros.clone()

    def conv_trace(self, planes: torch.Tensor) -> list[torch.Tensor]:
        """Activations after each convolution, for shape inspection."""
        out = []
        x = planes
        for conv in self.convs:
            x = F.relu(conv(x))
            out.append(x)
        return out

    def forward(
        self,
        planes: torch.Tensor,
        scalars: torch.Tensor,
        state: Optional[RecurrentState] = None,
        starts: Optional[torch.Tensor] = None,
    ) -> tuple[torch.Tensor, torch.Tensor, RecurrentState]:
        """Run a ``(T, B)`` sequence.

        ``starts[t, b]`` marks the first step of an episode; the recurrent
        state is zeroed before that step.
        """
        if planes.dim() != 5 or tuple(planes.shape[2:]) != (NUM_PLANES, VIEW, VIEW):
            raise InvalidInputError(f"planes must be (T, B, {NUM_PLANES}, {VIEW}, {VIEW}), got {tuple(planes.shape)}")
        T, B = planes.shape[:2]
        if tuple(scalars.shape) != (T, B, NUM_SCALARS):
            raise InvalidInputError(f"scalars must be ({T}, {B}, {NUM_SCALARS}), got {tuple(scalars.shape)}")
        h, c = state if state is not None else self.initial_state(B)

        x = planes.reshape(T * B, NUM_PLANES, VIEW, VIEW)
        for conv in self.convs:
            x = F.relu(conv(x))
        x = torch.cat([x.reshape(T, B, self.flat_size), scalars], dim=-1)

        outs = []
        for t in range(T):
            if starts is not None:
                keep = (1.0 - starts[t].to(h.dtype)).unsqueeze(-1)
                h, c = h * keep, c * keep
            h, c = self.lstm(x[t], (h, c))
            outs.append(h)
        y = F.relu(self.fc(torch.stack(outs)))
        return self.policy_head(y), self.value_head(y).squeeze(-1), (h, c)


def sample_action(logits, rng: np.random.Generator) -> tuple[int, float]:
    logits = np.asarray(logits, dtype=np.float64)
    if logits.shape != (NUM_ACTIONS,) or not np.all(np.isfinite(logits)):
        raise FloatingPointError(f"expected {NUM_ACTIONS} finite logits, got {logits}")
    actions, logps = sample_actions(logits[None, :], rng)
    return int(actions[0]), float(logps[0])


def sample_actions(logits: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Categorical draws for a ``(B, 6)`` batch via inverse CDF on one uniform per row."""
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise FloatingPointError("non-finite logits")
    shifted = logits - logits.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    cdf = np.cumsum(np.exp(logp), axis=1)
    u = rng.random(len(logits)) * cdf[:, -1]
    actions = np.minimum((cdf <= u[:, None]).sum(axis=1), NUM_ACTIONS - 1)
    return actions, logp[np.arange(len(logits)), actions]


def compute_advantages(
    rewards: np.ndarray,
    values: np.ndarray,
    dones: np.ndarray,
    last_value: float = 0.0,
    gamma: float = 0.99,
    lam: float = 0.95,
) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimates for one agent's step stream.

    ``dones[t]`` means the episode ended after step ``t``; ``last_value`` is the
    bootstrap value of the state after the final step (ignored if it is done).
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    adv = np.zeros_like(rewards)
    running = 0.0
    next_value = last_value
    for t in range(len(rewards) - 1, -1, -1):
        live = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * live - values[t]
        running = delta + gamma * lam * live * running
        adv[t] = running
        next_value = values[t]
    return adv, adv + values


@dataclass
class SequenceBatch:
    """Training sequences laid out ``(T, N, ...)`` with ``T`` = sequence length."""

    planes: torch.Tensor
    scalars: torch.Tensor
    actions: torch.Tensor
    old_logp: torch.Tensor
    advantages: torch.Tensor
    returns: torch.Tensor
    starts: torch.Tensor
    mask: torch.Tensor
    h0: torch.Tensor
    c0: torch.Tensor

    def select(self, idx) -> SequenceBatch:
        return SequenceBatch(
            self.planes[:, idx], self.scalars[:, idx], self.actions[:, idx], self.old_logp[:, idx],
            self.advantages[:, idx], self.returns[:, idx], self.starts[:, idx], self.mask[:, idx],
            self.h0[idx], self.c0[idx],
        )

    @property
    def num_sequences(self) -> int:
        return self.actions.shape[1]


def ppo_loss(model: PolicyNetwork, batch: SequenceBatch, config: PpoConfig) -> tuple[torch.Tensor, dict]:
    logits, values, _ = model(batch.planes, batch.scalars, (batch.h0, batch.c0), batch.starts)
    logp_all = F.log_softmax(logits, dim=-1)
    logp = logp_all.gather(-1, batch.actions.unsqueeze(-1)).squeeze(-1)
    entropy = -(logp_all.exp() * logp_all).sum(-1)
    mask = batch.mask
    denom = mask.sum().clamp(min=1.0)

    ratio = torch.exp(logp - batch.old_logp)
    adv = batch.advantages
    surrogate = torch.min(ratio * adv, ratio.clamp(1.0 - config.clip, 1.0 + config.clip) * adv)
    policy_loss = -(surrogate * mask).sum() / denom
    value_loss = (((values - batch.returns) ** 2) * mask).sum() / denom
    mean_entropy = (entropy * mask).sum() / denom
    loss = policy_loss + config.value_coef * value_loss - config.entropy_coef * mean_entropy

    with torch.no_grad():
        clipped = ((ratio - 1.0).abs() > config.clip).to(mask.dtype)
        stats = {
            "policy_loss": float(policy_loss),
            "value_loss": float(value_loss),
            "entropy": float(mean_entropy),
            "clip_fraction": float((clipped * mask).sum() / denom),
            "approx_kl": float(((batch.old_logp - logp) * mask).sum() / denom),
        }
    return loss, stats


def normalize_advantages(batch: SequenceBatch) -> SequenceBatch:
    m = batch.mask.bool()
    valid = batch.advantages[m]
    if valid.numel() > 1:
        std = valid.std()
        batch.advantages = torch.where(m, (batch.advantages - valid.mean()) / (std + 1e-8), torch.zeros_like(batch.advantages))
    return batch


def ppo_update(
    model: PolicyNetwork,
    optimizer: torch.optim.Optimizer,
    batch: SequenceBatch,
    config: PpoConfig,
    rng: np.random.Generator,
) -> dict:
    """Several epochs of minibatch PPO on one batch; returns mean loss statistics."""
    batch = normalize_advantages(batch)
    n = batch.num_sequences
    totals: dict[str, float] = {}
    count = 0
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for lo in range(0, n, config.minibatch_sequences):
            idx = torch.as_tensor(order[lo:lo + config.minibatch_sequences])
            loss, stats = ppo_loss(model, batch.select(idx), config)
            if not torch.isfinite(loss):
                raise DivergenceError(f"non-finite PPO loss; last stats {stats}")
            optimizer.zero_grad()
            loss.backward()
            nn.utils.clip_grad_norm_(model.parameters(), config.max_grad_norm)
            optimizer.step()
            for k, v in stats.items():
                totals[k] = totals.get(k, 0.0) + v
            count += 1
    return {k: v / max(count, 1) for k, v in totals.items()}


def make_optimizer(model: PolicyNetwork, config: PpoConfig) -> torch.optim.Adam:
    return torch.optim.Adam(model.parameters(), lr=config.learning_rate, eps=1e-5)


# Snapshot layout (all integers little-endian):
#   4 bytes  magic b"PLSN"
#   u16      format version
#   u32      header length L
#   L bytes  UTF-8 JSON header: {"network": {...}, "dtype": "float32"|"float64",
#            "tensors": [[name, shape], ...]}
#   payload  every tensor of the state dict, in header order, flattened in
#            C order as little-endian IEEE floats of the header dtype
_DTYPES = {torch.float32: "<f4", torch.float64: "<f8"}


def snapshot(model: PolicyNetwork) -> bytes:
    state = model.state_dict()
    dtype = next(iter(state.values())).dtype
    header = {
        "network": asdict(model.config),
        "dtype": str(dtype).replace("torch.", ""),
        "tensors": [[name, list(t.shape)] for name, t in state.items()],
    }
    head = json.dumps(header, sort_keys=True).encode()
    parts = [SNAPSHOT_MAGIC, struct.pack("<HI", SNAPSHOT_VERSION, len(head)), head]
    for t in state.values():
        parts.append(t.detach().cpu().contiguous().numpy().astype(_DTYPES[dtype], copy=False).tobytes())
    return b"".join(parts)


def restore(data: bytes, expected: Optional[NetworkConfig] = None) -> PolicyNetwork:
    if data[:4] != SNAPSHOT_MAGIC:
        raise SnapshotError("not a policy snapshot")
    version, head_len = struct.unpack_from("<HI", data, 4)
    if version != SNAPSHOT_VERSION:
        raise SnapshotError(f"unsupported snapshot version {version}")
    header = json.loads(data[10:10 + head_len])
    net = header["network"]
    config = NetworkConfig(**{**net, "conv_channels": tuple(net["conv_channels"])})
    if expected is not None and config != expected:
        raise SnapshotError(f"snapshot architecture {config} does not match expected {expected}")
    torch_dtype = getattr(torch, header["dtype"])
    model = PolicyNetwork(config).to(torch_dtype)
    state = model.state_dict()
    names = [name for name, _ in header["tensors"]]
    if names != list(state.keys()):
        raise SnapshotError("snapshot tensor layout does not match the network")
    offset = 10 + head_len
    np_dtype = np.dtype(_DTYPES[torch_dtype])
    loaded = {}
    for name, shape in header["tensors"]:
        if list(state[name].shape) != shape:
            raise SnapshotError(f"tensor {name} has shape {shape}, expected {list(state[name].shape)}")
        count = int(np.prod(shape)) if shape else 1
        end = offset + count * np_dtype.itemsize
        if end > len(data):
            raise SnapshotError("truncated snapshot payload")
        arr = np.frombuffer(data, dtype=np_dtype, count=count, offset=offset).reshape(shape)
        loaded[name] = torch.from_numpy(arr.astype(np_dtype.newbyteorder("="), copy=True))
        offset = end
    if offset != len(data):
        raise SnapshotError("trailing bytes after snapshot payload")
    model.load_state_dict(loaded)
    return model


def optimizer_state_bytes(optimizer: torch.optim.Optimizer) -> bytes:
    buf = io.BytesIO()
    torch.save(optimizer.state_dict(), buf)
    return buf.getvalue()


def load_optimizer_state(optimizer: torch.optim.Optimizer, data: bytes) -> None:
    optimizer.load_state_dict(torch.load(io.BytesIO(data), weights_only=True))
