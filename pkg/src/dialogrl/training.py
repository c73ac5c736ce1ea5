"""End-to-end training orchestration.

One experiment = warm start with the scripted agent, then per epoch: collect
real dialogs (curiosity-guided when enabled), Q-updates on real experiences,
world-model learning, planning into the simulated buffer, Q-updates on
simulated experiences, curiosity training on both buffers, target sync.
Evaluations run greedily at the four stage boundaries on the stage's own
goal buffer.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .agent import DqnAgent, Experience, ReplayBuffer
from .curiosity import CuriosityModel
from .curriculum import (
    ALL,
    GoalBuffers,
    build_buffers,
    sample_goal,
    schedule_levels,
    stage_boundaries,
    stage_index,
)
from .domain import (
    DEFAULT_GOAL_COUNTS,
    ActionRoster,
    KnowledgeBase,
    UserGoal,
    default_roster,
    generate_goal_set,
    generate_kb,
    load_goals,
    load_kb,
)
from .env import DialogEnv, RewardConfig, RuleAgent, encode_state
from .errors import ConfigError
from .seeding import spawn_rng
from .world import WorldModel, plan

log = logging.getLogger(__name__)

# method name -> (uses planning/world model, uses curiosity)
METHODS = {
    "DQN": (False, False),
    "DDQ": (True, False),
    "C-DDQ": (True, True),
    "S-DDQ": (True, False),
    "SC-DDQ": (True, True),
}
SCHEDULED_METHODS = ("S-DDQ", "SC-DDQ")
UNSCHEDULED_METHODS = ("DQN", "DDQ", "C-DDQ")


@dataclass
class RunConfig:
    method: str = "DDQ"
    schedule: str = "RANDOM"
    seed: int = 0
    epochs: int = 300
    real_dialogs_per_epoch: int = 30
    planning_rounds: int = 5
    planning_dialogs_per_round: int | None = None
    warm_start_dialogs: int = 100
    warm_start_updates: int = 50
    epsilon: float = 0.05
    eval_epsilon: float = 0.0
    eval_with_curiosity: bool = False
    learning_rate: float = 0.001
    buffer_capacity: int = 5000
    max_turns: int = 40
    eval_episodes: int = 50
    kb_path: str = ""
    goals_path: str = ""
    out_dir: str = "runs"
    kb_size: int = 991
    goal_counts: dict = field(default_factory=lambda: dict(DEFAULT_GOAL_COUNTS))
    data_seed: int = 7
    custom_schedules: dict = field(default_factory=dict)

    @property
    def run_id(self) -> str:
        return f"{self.method}_{self.schedule}_{self.seed}"

    def validate(self) -> "RunConfig":
        if self.method not in METHODS:
            raise ConfigError(f"method: unknown method {self.method!r}; pick one of {sorted(METHODS)}")
        schedule_levels(self.schedule, self.custom_schedules)  # raises on unknown names
        if self.method in SCHEDULED_METHODS and self.schedule == "RANDOM":
            raise ConfigError(f"schedule: {self.method} requires a named non-RANDOM schedule")
        if self.method in UNSCHEDULED_METHODS and self.schedule != "RANDOM":
            raise ConfigError(f"schedule: {self.method} ignores schedules; use RANDOM")
        for name in ("epochs", "real_dialogs_per_epoch", "warm_start_dialogs",
                     "buffer_capacity", "max_turns", "eval_episodes"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name}: must be >= 1")
        if self.epochs < 4:
            raise ConfigError("epochs: need at least 4 for the four stages")
        if self.planning_rounds < 0:
            raise ConfigError("planning_rounds: must be >= 0")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError("epsilon: must be in [0, 1]")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate: must be positive")
        return self

    def to_json(self) -> dict:
        obj = asdict(self)
        obj["goal_counts"] = {str(k): v for k, v in self.goal_counts.items()}
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "RunConfig":
        if not isinstance(obj, dict):
            raise ConfigError("config: expected a JSON object")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"config: unknown fields {sorted(unknown)}")
        data = dict(obj)
        if "goal_counts" in data and data["goal_counts"] is not None:
            data["goal_counts"] = {int(k): int(v) for k, v in data["goal_counts"].items()}
        return cls(**data)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config: file not found: {path}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: invalid JSON in {path}: {exc.msg}")
        return cls.from_json(obj)

    @property
    def uses_planning(self) -> bool:
        return METHODS[self.method][0]

    @property
    def uses_curiosity(self) -> bool:
        return METHODS[self.method][1]


@dataclass
class EpochReport:
    epoch: int
    stage: int
    level: str
    train_success: float
    mean_reward: float
    action_counts: np.ndarray
    dqn_loss: float | None
    world_loss: float | None
    curiosity_loss: float | None
    real_buffer_size: int
    sim_buffer_size: int


@dataclass
class EvalReport:
    checkpoint_epoch: int
    success_rate: float
    avg_turns: float
    level: str
    n_episodes: int


def evaluate_policy(select_action, kb: KnowledgeBase, roster: ActionRoster,
                    goals: list[UserGoal], n_episodes: int, rng: np.random.Generator,
                    rewards: RewardConfig, checkpoint_epoch: int = 0,
                    level: str = ALL) -> EvalReport:
    """Run n greedy episodes; reports success rate and mean speaker turns.

    ``select_action(state_vector, rng) -> action index``. Turns count both
    sides of the conversation (two per agent action).
    """
    env = DialogEnv(kb, roster, rewards, rng=rng)
    wins = 0
    turns = []
    for _ in range(n_episodes):
        goal = goals[int(rng.integers(len(goals)))]
        state, _ = env.reset(goal)
        agent_turns = 0
        while not env.done:
            a = select_action(encode_state(state), rng)
            env.step(a)
            agent_turns += 1
        wins += 1 if env.success else 0
        turns.append(2 * agent_turns)
    return EvalReport(
        checkpoint_epoch=checkpoint_epoch,
        success_rate=wins / n_episodes,
        avg_turns=float(np.mean(turns)),
        level=level,
        n_episodes=n_episodes,
    )


class Trainer:
    """Owns every mutable piece of one experiment; fully seeded."""

    def __init__(self, config: RunConfig, kb: KnowledgeBase, goals: list[UserGoal],
                 roster: ActionRoster | None = None):
        config.validate()
        self.config = config
        self.kb = kb
        self.roster = roster if roster is not None else default_roster()
        self.buffers: GoalBuffers = build_buffers(goals)
        self._levels = schedule_levels(config.schedule, config.custom_schedules)
        self._check_buffers()
        self.rewards = RewardConfig(max_turns=config.max_turns)

        seed = config.seed
        self.rngs = {
            name: spawn_rng(seed, name)
            for name in ("warm", "warm-train", "goals", "env", "explore",
                         "dqn-real", "dqn-sim", "world", "plan", "curiosity")
        }
        self.agent = DqnAgent(
            state_dim=129,
            n_actions=self.roster.n_agent_actions,
            gamma=0.9,
            epsilon=config.epsilon,
            learning_rate=config.learning_rate,
            seed=spawn_rng(seed, "qnet").integers(1 << 31),
        )
        self.world_model = (
            WorldModel(n_agent_actions=self.roster.n_agent_actions,
                       n_user_actions=self.roster.n_user_actions,
                       learning_rate=config.learning_rate,
                       seed=spawn_rng(seed, "world-net").integers(1 << 31))
            if config.uses_planning else None
        )
        self.curiosity = (
            CuriosityModel(n_agent_actions=self.roster.n_agent_actions,
                           learning_rate=config.learning_rate,
                           seed=spawn_rng(seed, "curiosity-net").integers(1 << 31))
            if config.uses_curiosity else None
        )
        self.real_buffer = ReplayBuffer(config.buffer_capacity, kind="real")
        self.sim_buffer = ReplayBuffer(config.buffer_capacity, kind="simulated")
        self.env = DialogEnv(self.kb, self.roster, self.rewards, rng=self.rngs["env"])
        self.rule_agent = RuleAgent(self.roster)

        self.stage_action_counts = {k: np.zeros(self.roster.n_agent_actions, dtype=np.int64)
                                    for k in (1, 2, 3, 4)}
        self.epoch_ops: list[list[str]] = []  # per-epoch call order, for auditing
        self.epoch_reports: list[EpochReport] = []
        self.eval_reports: list[EvalReport] = []
        self._warm_started = False

    def level_for_epoch(self, epoch: int) -> str:
        return self._levels[stage_index(epoch, self.config.epochs) - 1]

    def _check_buffers(self):
        cfg = self.config
        needed = sorted({self.level_for_epoch(e) for e in range(cfg.epochs)})
        for level in needed:
            if not self.buffers.for_level(level):
                raise ConfigError(f"goals_path: schedule {cfg.schedule} needs {level} goals "
                                  f"but the goal set has none")

    # ---- warm start -----------------------------------------------------------

    def warm_start(self) -> int:
        """Scripted dialogs into the real buffer, then Q-net pretraining."""
        cfg = self.config
        level = self.level_for_epoch(0)
        env = DialogEnv(self.kb, self.roster, self.rewards, rng=self.rngs["warm"])
        stored = 0
        for _ in range(cfg.warm_start_dialogs):
            goal = sample_goal(self.buffers, level, self.rngs["warm"])
            state, _ = env.reset(goal)
            while not env.done:
                s = encode_state(state)
                a = self.rule_agent.act(state)
                outcome = env.step(a)
                exp = Experience(s, a, outcome.reward,
                                 self.roster.user_index(outcome.user_act),
                                 encode_state(state), outcome.done)
                self.real_buffer.append(exp)
                stored += 1
        for _ in range(cfg.warm_start_updates):
            self.agent.update(self.real_buffer, n_batches=1, rng=self.rngs["warm-train"])
        self.agent.sync_target()
        self._warm_started = True
        return stored

    # ---- one epoch ----------------------------------------------------------

    def _select(self, s, rng) -> int:
        bonus = self.curiosity.scores(s)[0] if self.curiosity is not None else None
        return self.agent.select_action(s, rng, bonus=bonus)

    def run_epoch(self, epoch: int) -> EpochReport:
        if not self._warm_started:
            raise ConfigError("run_epoch called before warm_start")
        cfg = self.config
        ops = []
        level = self.level_for_epoch(epoch)
        stage = stage_index(epoch, cfg.epochs)
        counts = np.zeros(self.roster.n_agent_actions, dtype=np.int64)

        ops.append("collect")
        episode_rewards = []
        wins = 0
        new_real = 0
        for _ in range(cfg.real_dialogs_per_epoch):
            goal = sample_goal(self.buffers, level, self.rngs["goals"])
            state, _ = self.env.reset(goal)
            total = 0.0
            while not self.env.done:
                s = encode_state(state)
                a = self._select(s, self.rngs["explore"])
                outcome = self.env.step(a)
                counts[a] += 1
                self.real_buffer.append(
                    Experience(s, a, outcome.reward,
                               self.roster.user_index(outcome.user_act),
                               encode_state(state), outcome.done)
                )
                new_real += 1
                total += outcome.reward
            wins += 1 if self.env.success else 0
            episode_rewards.append(total)

        n_batches = max(1, math.ceil(new_real / 16))
        ops.append("dqn_real")
        dqn_loss = self.agent.update(self.real_buffer, n_batches, self.rngs["dqn-real"])

        world_loss = None
        new_sim = 0
        if self.world_model is not None:
            ops.append("world")
            world_loss = self.world_model.train(self.real_buffer, n_batches, self.rngs["world"])
            ops.append("plan")
            dialogs = cfg.planning_dialogs_per_round or cfg.real_dialogs_per_epoch
            new_sim = plan(
                self.agent, self.curiosity, self.world_model,
                lambda rng: sample_goal(self.buffers, level, rng),
                cfg.planning_rounds, dialogs, self.sim_buffer,
                self.kb, self.roster, self.rngs["plan"], self.rewards,
            )
            if new_sim:
                ops.append("dqn_sim")
                sim_batches = max(1, math.ceil(new_sim / 16))
                self.agent.update(self.sim_buffer, sim_batches, self.rngs["dqn-sim"])

        curiosity_loss = None
        if self.curiosity is not None:
            ops.append("curiosity")
            cur_batches = max(1, math.ceil((new_real + new_sim) / 16))
            curiosity_loss = self.curiosity.train(
                self.real_buffer, self.sim_buffer, cur_batches, self.rngs["curiosity"]
            )
            mean_c = float(np.mean(self.curiosity.scores(encode_state(self.env.state))[0]))
            log.debug("epoch %d: mean curiosity %.4f", epoch, mean_c)

        ops.append("sync")
        self.agent.sync_target()

        self.stage_action_counts[stage] += counts
        self.epoch_ops.append(ops)
        report = EpochReport(
            epoch=epoch,
            stage=stage,
            level=level,
            train_success=wins / cfg.real_dialogs_per_epoch,
            mean_reward=float(np.mean(episode_rewards)),
            action_counts=counts,
            dqn_loss=dqn_loss,
            world_loss=world_loss,
            curiosity_loss=curiosity_loss,
            real_buffer_size=len(self.real_buffer),
            sim_buffer_size=len(self.sim_buffer),
        )
        self.epoch_reports.append(report)
        return report

    # ---- evaluation -------------------------------------------------------------

    def evaluate(self, checkpoint_epoch: int, stage: int) -> EvalReport:
        """Greedy evaluation on the just-finished stage's goal buffer."""
        cfg = self.config
        level = self._levels[stage - 1]
        goals = self.buffers.for_level(level)
        rng = spawn_rng(cfg.seed, "eval", checkpoint_epoch)
        if cfg.eval_with_curiosity and self.curiosity is not None:
            select = lambda s, r: self.agent.select_action(
                s, r, bonus=self.curiosity.scores(s)[0], epsilon=cfg.eval_epsilon)
        else:
            select = lambda s, r: self.agent.select_action(s, r, epsilon=cfg.eval_epsilon)
        report = evaluate_policy(select, self.kb, self.roster, goals, cfg.eval_episodes,
                                 rng, self.rewards, checkpoint_epoch, level)
        self.eval_reports.append(report)
        return report

    # ---- full run -----------------------------------------------------------------

    def run(self, on_checkpoint=None):
        cfg = self.config
        self.warm_start()
        b1, b2, b3 = stage_boundaries(cfg.epochs)
        ends = {b1: 1, b2: 2, b3: 3, cfg.epochs: 4}
        for epoch in range(cfg.epochs):
            self.run_epoch(epoch)
            if epoch + 1 in ends:
                stage = ends[epoch + 1]
                report = self.evaluate(epoch + 1, stage)
                log.info("%s: eval after epoch %d (%s): success=%.2f turns=%.1f",
                         cfg.run_id, epoch + 1, report.level, report.success_rate,
                         report.avg_turns)
                if on_checkpoint is not None:
                    on_checkpoint(epoch + 1, self)
        return self.epoch_reports, self.eval_reports


# ---- run directory output ------------------------------------------------------


def _fmt(x, digits):
    return "" if x is None else f"{x:.{digits}f}"


def write_metrics_csv(path, run_id, config: RunConfig, reports: list[EpochReport]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["run_id", "method", "schedule", "seed", "epoch", "stage",
                    "train_success", "mean_reward", "dqn_loss", "world_loss", "curiosity_loss"])
        for r in reports:
            w.writerow([run_id, config.method, config.schedule, config.seed, r.epoch, r.stage,
                        _fmt(r.train_success, 4), _fmt(r.mean_reward, 4),
                        _fmt(r.dqn_loss, 6), _fmt(r.world_loss, 6), _fmt(r.curiosity_loss, 6)])


def write_eval_csv(path, run_id, reports: list[EvalReport]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["run_id", "checkpoint_epoch", "success_rate", "avg_turns"])
        for r in reports:
            w.writerow([run_id, r.checkpoint_epoch, _fmt(r.success_rate, 4), _fmt(r.avg_turns, 2)])


def write_actions_csv(path, run_id, stage_counts: dict[int, np.ndarray]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["run_id", "stage", "action_index", "count"])
        for stage in sorted(stage_counts):
            for idx, count in enumerate(stage_counts[stage]):
                w.writerow([run_id, stage, idx, int(count)])


def load_run_data(config: RunConfig):
    """KB and goals from the configured paths, or generated on the fly."""
    if config.kb_path:
        kb = load_kb(config.kb_path)
    else:
        kb = generate_kb(seed=config.data_seed, n_movies=config.kb_size)
    if config.goals_path:
        goals = load_goals(config.goals_path)
    else:
        goals = generate_goal_set(kb, config.goal_counts, seed=config.data_seed)
    return kb, goals


def run_experiment(config: RunConfig, kb: KnowledgeBase | None = None,
                   goals: list[UserGoal] | None = None) -> Path:
    """Run one configuration end to end and write its run directory."""
    config.validate()
    if kb is None or goals is None:
        kb, goals = load_run_data(config)
    run_dir = Path(config.out_dir) / config.run_id
    run_dir.mkdir(parents=True, exist_ok=True)

    trainer = Trainer(config, kb, goals)

    def on_checkpoint(epoch, tr: Trainer):
        tr.agent.save(run_dir / f"checkpoint_ep{epoch}.json")

    epoch_reports, eval_reports = trainer.run(on_checkpoint=on_checkpoint)

    (run_dir / "config.json").write_text(json.dumps(config.to_json(), indent=1) + "\n",
                                         encoding="utf-8")
    write_metrics_csv(run_dir / "metrics.csv", config.run_id, config, epoch_reports)
    write_eval_csv(run_dir / "eval.csv", config.run_id, eval_reports)
    write_actions_csv(run_dir / "actions.csv", config.run_id, trainer.stage_action_counts)
    return run_dir
