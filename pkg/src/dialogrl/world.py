"""Learned environment model and the planning loop it drives.

The model maps (encoded state, one-hot agent action) to a distribution over
user action templates, a scalar reward, and a termination probability.
Planning replays the real dialog tracker but takes the user's move, the
reward, and the episode end from the model instead of the simulator.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from .agent import BATCH_SIZE, DqnAgent, Experience, ReplayBuffer
from .domain import ActionRoster, KnowledgeBase
from .env import DialogEnv, RewardConfig, encode_state
from .errors import ContractViolation, FormatError, ShapeError
from .nets import HeadSpec, LayerSpec, MlpModel, MlpSpec, TrainBatch, mlp_new

log = logging.getLogger(__name__)

TERMINATION_THRESHOLD = 0.5


def world_model_spec(state_dim: int = 129, n_agent_actions: int = 29,
                     n_user_actions: int = 35, hidden: int = 80) -> MlpSpec:
    """Two shared tanh layers, then one task-specific hidden layer per head."""
    d = state_dim + n_agent_actions
    return MlpSpec(
        shared=[LayerSpec(d, hidden, "tanh"), LayerSpec(hidden, hidden, "tanh")],
        heads=[
            HeadSpec("user_action", [LayerSpec(hidden, hidden, "tanh"),
                                     LayerSpec(hidden, n_user_actions, "softmax")], "cross_entropy"),
            HeadSpec("reward", [LayerSpec(hidden, hidden, "tanh"),
                                LayerSpec(hidden, 1, "linear")], "mse"),
            HeadSpec("termination", [LayerSpec(hidden, hidden, "tanh"),
                                     LayerSpec(hidden, 1, "sigmoid")], "binary_cross_entropy"),
        ],
    ).validate()


def encode_inputs(states: np.ndarray, actions, n_actions: int) -> np.ndarray:
    """Concatenate encoded states with one-hot agent actions."""
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    actions = np.atleast_1d(np.asarray(actions, dtype=np.int64))
    if len(actions) != states.shape[0]:
        raise ShapeError("state/action batch sizes differ")
    onehot = np.zeros((len(actions), n_actions))
    onehot[np.arange(len(actions)), actions] = 1.0
    return np.concatenate([states, onehot], axis=1)


class WorldModel:
    """M(s, a): predicts the user's reply, the reward, and episode end."""

    def __init__(self, state_dim: int = 129, n_agent_actions: int = 29,
                 n_user_actions: int = 35, hidden: int = 80,
                 learning_rate: float = 0.001, seed: int = 0):
        self.state_dim = state_dim
        self.n_agent_actions = n_agent_actions
        self.n_user_actions = n_user_actions
        self.learning_rate = learning_rate
        self.net = mlp_new(world_model_spec(state_dim, n_agent_actions, n_user_actions, hidden), seed=seed)

    def predict(self, s, a: int):
        """(user action distribution, reward, termination probability)."""
        x = encode_inputs(s, [a], self.n_agent_actions)
        out = self.net.forward(x)
        probs = out["user_action"][0]
        return probs, float(out["reward"][0, 0]), float(out["termination"][0, 0])

    def train(self, real_buffer: ReplayBuffer, n_batches: int, rng: np.random.Generator) -> float | None:
        """Joint CE + MSE + BCE step per minibatch, real experiences only."""
        if real_buffer.kind != "real":
            raise ContractViolation("world model trains on the real buffer only")
        if len(real_buffer) == 0:
            log.warning("world model update skipped: real buffer is empty")
            return None
        losses = []
        for _ in range(n_batches):
            exps = real_buffer.sample(BATCH_SIZE, rng)
            x = encode_inputs(np.stack([e.s for e in exps]), [e.a for e in exps], self.n_agent_actions)
            user_targets = np.zeros((len(exps), self.n_user_actions))
            for i, e in enumerate(exps):
                user_targets[i, e.a_user] = 1.0
            rewards = np.array([[e.r] for e in exps])
            dones = np.array([[1.0 if e.done else 0.0] for e in exps])
            batch = TrainBatch(x, {"user_action": user_targets, "reward": rewards, "termination": dones})
            losses.append(self.net.train_minibatch(batch, self.learning_rate))
        return float(np.mean(losses))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.net.to_json()), encoding="utf-8")

    def load_net(self, path) -> None:
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise FormatError(f"world model checkpoint {path} is not valid JSON") from exc
        self.net = MlpModel.from_json(obj)


def plan(agent: DqnAgent, curiosity, world_model: WorldModel, goal_sampler,
         rounds: int, dialogs_per_round: int, sim_buffer: ReplayBuffer,
         kb: KnowledgeBase, roster: ActionRoster, rng: np.random.Generator,
         rewards: RewardConfig | None = None) -> int:
    """Generate simulated experiences by rolling the agent against the model.

    The user's move is the argmax of the model's user-action head; episodes
    end when the termination head crosses 0.5 or the turn cap is reached.
    Returns the number of experiences stored (always into sim_buffer).
    """
    if sim_buffer.kind != "simulated":
        raise ContractViolation("planning writes to the simulated buffer only")
    rewards = rewards if rewards is not None else RewardConfig()
    stored = 0
    for _ in range(rounds):
        for _ in range(dialogs_per_round):
            goal = goal_sampler(rng)
            env = DialogEnv(kb, roster, rewards, rng=rng)
            state, _ = env.reset(goal)
            done = False
            while not done:
                s = encode_state(state)
                bonus = curiosity.scores(s)[0] if curiosity is not None else None
                a = agent.select_action(s, rng, bonus=bonus)
                env.apply_agent_act(env.realize_agent_action(a))
                probs, reward, p_done = world_model.predict(s, a)
                user_idx = int(np.argmax(probs))
                env.apply_simulated_user_act(roster.user_actions[user_idx])
                s_next = encode_state(state)
                done = p_done > TERMINATION_THRESHOLD or state.turn >= rewards.max_turns
                sim_buffer.append(Experience(s, a, reward, user_idx, s_next, done))
                stored += 1
    return stored
