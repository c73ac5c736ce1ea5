"""DQN dialog policy: dual FIFO replay buffers, epsilon-greedy action
selection with an optional additive exploration bonus, and Q-learning
updates against a periodically synced target network."""

from __future__ import annotations

import json
import logging
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ShapeError
from .nets import MlpModel, TrainBatch, mlp_new, single_head_spec

log = logging.getLogger(__name__)

REPLAY_CAPACITY = 5000
BATCH_SIZE = 16


@dataclass
class Experience:
    """One transition: state, agent action, reward, observed user action,
    next state, terminal flag."""

    s: np.ndarray
    a: int
    r: float
    a_user: int
    s_next: np.ndarray
    done: bool


class ReplayBuffer:
    """Bounded FIFO store; evicts strictly oldest-first at capacity."""

    def __init__(self, capacity: int = REPLAY_CAPACITY, kind: str = "real"):
        if kind not in ("real", "simulated"):
            raise ValueError(f"buffer kind must be real or simulated, got {kind!r}")
        self.capacity = capacity
        self.kind = kind
        self._items: deque[Experience] = deque(maxlen=capacity)

    def append(self, exp: Experience) -> None:
        self._items.append(exp)

    def extend(self, exps) -> None:
        for exp in exps:
            self.append(exp)

    def __len__(self) -> int:
        return len(self._items)

    def __getitem__(self, i: int) -> Experience:
        return self._items[i]

    def sample(self, n: int, rng: np.random.Generator) -> list[Experience]:
        if not self._items:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, len(self._items), size=n)
        return [self._items[int(i)] for i in idx]

    def snapshot(self) -> list[Experience]:
        return list(self._items)


def q_network_spec(state_dim: int = 129, n_actions: int = 29, hidden: int = 80):
    return single_head_spec(state_dim, [hidden], n_actions, output_activation="linear",
                            loss="mse", name="q")


class DqnAgent:
    """Q-network plus frozen target twin over a discrete action roster."""

    def __init__(self, state_dim: int = 129, n_actions: int = 29, hidden: int = 80,
                 gamma: float = 0.9, epsilon: float = 0.05, learning_rate: float = 0.001,
                 seed: int = 0):
        self.state_dim = state_dim
        self.n_actions = n_actions
        self.gamma = gamma
        self.epsilon = epsilon
        self.learning_rate = learning_rate
        self.step_count = 0
        self.q_net = mlp_new(q_network_spec(state_dim, n_actions, hidden), seed=seed)
        self.target_net = self.q_net.clone()

    # ---- acting -------------------------------------------------------------

    def q_values(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=np.float64)
        if s.shape != (self.state_dim,):
            raise ShapeError(f"expected state of length {self.state_dim}, got {s.shape}")
        return self.q_net.forward(s)["q"][0]

    def q_values_batch(self, states: np.ndarray, net: MlpModel | None = None) -> np.ndarray:
        net = net if net is not None else self.q_net
        return net.forward(states)["q"]

    def select_action(self, s, rng: np.random.Generator, bonus: np.ndarray | None = None,
                      epsilon: float | None = None) -> int:
        """Epsilon-greedy over Q, or over Q + bonus when a bonus is given.

        The epsilon draw happens before the argmax either way, so with a
        zero bonus the action trace is identical to plain epsilon-greedy
        under a shared rng stream. Ties break to the lowest index.
        """
        eps = self.epsilon if epsilon is None else epsilon
        if eps > 0.0 and rng.random() < eps:
            return int(rng.integers(self.n_actions))
        scores = self.q_values(s)
        if bonus is not None:
            bonus = np.asarray(bonus, dtype=np.float64)
            if bonus.shape != (self.n_actions,):
                raise ShapeError(f"bonus must have length {self.n_actions}, got {bonus.shape}")
            scores = scores + bonus
        return int(np.argmax(scores))

    # ---- learning -------------------------------------------------------------

    def batch_targets(self, exps: list[Experience]):
        """Q-learning targets for a batch: r, or r + gamma * max target-Q."""
        states = np.stack([e.s for e in exps])
        next_states = np.stack([e.s_next for e in exps])
        next_q = self.q_values_batch(next_states, net=self.target_net)
        best_next = next_q.max(axis=1)
        targets = np.zeros((len(exps), self.n_actions))
        mask = np.zeros_like(targets)
        for i, e in enumerate(exps):
            y = e.r if e.done else e.r + self.gamma * best_next[i]
            targets[i, e.a] = y
            mask[i, e.a] = 1.0
        return states, targets, mask

    def update(self, buffer: ReplayBuffer, n_batches: int, rng: np.random.Generator) -> float | None:
        """n_batches RMSProp steps of masked MSE on the taken actions only."""
        if len(buffer) == 0:
            log.warning("dqn update skipped: %s buffer is empty", buffer.kind)
            return None
        losses = []
        for _ in range(n_batches):
            exps = buffer.sample(BATCH_SIZE, rng)
            states, targets, mask = self.batch_targets(exps)
            batch = TrainBatch(states, {"q": targets}, {"q": mask})
            losses.append(self.q_net.train_minibatch(batch, self.learning_rate))
            self.step_count += 1
        return float(np.mean(losses)) if losses else None

    def sync_target(self) -> None:
        self.target_net.copy_parameters_from(self.q_net)

    # ---- persistence -------------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "format_version": 1,
            "state_dim": self.state_dim,
            "n_actions": self.n_actions,
            "gamma": self.gamma,
            "epsilon": self.epsilon,
            "learning_rate": self.learning_rate,
            "step_count": self.step_count,
            "q_net": self.q_net.to_json(),
            "target_net": self.target_net.to_json(),
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()), encoding="utf-8")

    @classmethod
    def from_json(cls, obj: dict) -> "DqnAgent":
        try:
            agent = cls(
                state_dim=int(obj["state_dim"]),
                n_actions=int(obj["n_actions"]),
                gamma=float(obj["gamma"]),
                epsilon=float(obj["epsilon"]),
                learning_rate=float(obj["learning_rate"]),
            )
            agent.step_count = int(obj["step_count"])
            agent.q_net = MlpModel.from_json(obj["q_net"])
            agent.target_net = MlpModel.from_json(obj["target_net"])
        except (KeyError, TypeError) as exc:
            raise FormatError(f"malformed agent checkpoint: {exc}") from exc
        return agent

    @classmethod
    def load(cls, path) -> "DqnAgent":
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise FormatError(f"agent checkpoint {path} is not valid JSON") from exc
        return cls.from_json(obj)


def select_action_eps_greedy(agent: DqnAgent, s, rng: np.random.Generator) -> int:
    return agent.select_action(s, rng)


def select_action_curiosity(agent: DqnAgent, curiosity_model, s, rng: np.random.Generator) -> int:
    """Pick the action maximizing Q plus the per-action curiosity value."""
    bonus, _ = curiosity_model.scores(s)
    return agent.select_action(s, rng, bonus=bonus)
