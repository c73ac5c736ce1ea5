"""Command-line entry point.

Subcommands: gen-data (KB + goal files), train (one configured run),
eval (re-evaluate a saved checkpoint), matrix (a method x schedule x seed
grid of runs), report (paper-style tables from finished runs).

Exit codes: 0 success, 2 usage or configuration problems, 3 runtime
numeric failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .agent import DqnAgent
from .analysis import build_report
from .curriculum import ALL, LEVELS, build_buffers
from .domain import (
    DEFAULT_GOAL_COUNTS,
    default_roster,
    generate_goal_set,
    generate_kb,
    load_goals,
    load_kb,
    save_goals,
    save_kb,
)
from .env import DialogEnv, RewardConfig, encode_state, render_act
from .errors import AnalysisError, ConfigError, DialogRlError, NumericError, ParseError
from .seeding import derive_seed, spawn_rng
from .training import (
    METHODS,
    SCHEDULED_METHODS,
    RunConfig,
    evaluate_policy,
    run_experiment,
)

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3


def _parse_goal_counts(text: str) -> dict[int, int]:
    counts = {}
    try:
        for part in text.split(","):
            k, v = part.split(":")
            counts[int(k)] = int(v)
    except ValueError:
        raise ConfigError(f"goals-spec: expected 'k:n,k:n,...', got {text!r}")
    return counts


def cmd_gen_data(args) -> int:
    if args.movies < 1:
        print("error: --movies must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    counts = _parse_goal_counts(args.goals_spec)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    kb = generate_kb(seed=args.seed, n_movies=args.movies)
    goals = generate_goal_set(kb, counts, seed=args.seed)
    save_kb(kb, out / "kb.json")
    save_goals(goals, out / "goals.json")
    buffers = build_buffers(goals)
    print(f"wrote {out / 'kb.json'} ({len(kb)} records) and {out / 'goals.json'} ({len(goals)} goals)")
    print(f"easy={len(buffers.easy)} middle={len(buffers.middle)} difficult={len(buffers.difficult)}")
    return EXIT_OK


def cmd_train(args) -> int:
    config = RunConfig.load(args.config)
    config.validate()
    for field in ("kb_path", "goals_path"):
        value = getattr(config, field)
        if not value:
            raise ConfigError(f"{field}: required for training runs")
        if not Path(value).exists():
            raise ConfigError(f"{field}: file not found: {value}")
    run_dir = run_experiment(config)
    print(f"run complete: {run_dir}")
    return EXIT_OK


def cmd_eval(args) -> int:
    run_dir = Path(args.run_dir)
    config = RunConfig.load(run_dir / "config.json")
    checkpoints = sorted(run_dir.glob("checkpoint_ep*.json"),
                         key=lambda p: int(p.stem.split("ep")[-1]))
    if not checkpoints:
        raise ConfigError(f"run_dir: no checkpoints under {run_dir}")
    path = checkpoints[-1] if args.checkpoint is None else run_dir / args.checkpoint
    if not path.exists():
        raise ConfigError(f"checkpoint: file not found: {path}")
    agent = DqnAgent.load(path)
    from .training import load_run_data

    kb, goals = load_run_data(config)  # honors paths or regenerates from config
    buffers = build_buffers(goals)
    pool = buffers.for_level(args.level)
    if not pool:
        raise ConfigError(f"level: no {args.level} goals in {config.goals_path}")
    rewards = RewardConfig(max_turns=config.max_turns)
    rng = spawn_rng(args.seed, "cli-eval")
    if args.show:
        _show_dialogs(agent, kb, pool, rewards, rng, args.episodes)
        return EXIT_OK
    report = evaluate_policy(
        lambda s, r: agent.select_action(s, r, epsilon=0.0),
        kb, default_roster(), pool, args.episodes, rng, rewards, level=args.level,
    )
    print(f"{path.name} on {args.level}: success_rate={report.success_rate:.4f} "
          f"avg_turns={report.avg_turns:.2f} episodes={report.n_episodes}")
    return EXIT_OK


def _show_dialogs(agent, kb, goals, rewards, rng, episodes) -> None:
    env = DialogEnv(kb, rewards=rewards, rng=rng)
    for _ in range(episodes):
        goal = goals[int(rng.integers(len(goals)))]
        state, first = env.reset(goal)
        print(f"--- goal: requests={[s.label for s in goal.request_slots]} "
              f"informs={{{', '.join(f'{s.label}: {v}' for s, v in goal.inform_slots.items())}}}")
        print(f"usr: {render_act(first)}")
        while not env.done:
            a = agent.select_action(encode_state(state), rng, epsilon=0.0)
            act = env.realize_agent_action(a)
            outcome = env.step(a)
            print(f"sys: {render_act(act)}")
            if not outcome.done:
                print(f"usr: {render_act(outcome.user_act)}")
        print(f"=== {'SUCCESS' if env.success else 'FAILURE'}\n")


def expand_matrix(spec: dict) -> list[tuple[RunConfig, int]]:
    """Grid of (config, seed index) pairs from a matrix config.

    Unscheduled methods run under RANDOM, scheduled methods cross with every
    schedule. The rng seed of each run derives from the master seed plus the
    cell coordinates, so results do not depend on scheduling order; the
    human-readable seed index names the run directory.
    """
    if not isinstance(spec, dict):
        raise ConfigError("matrix: expected a JSON object")
    base = dict(spec.get("base", {}))
    methods = spec.get("methods", [])
    schedules = spec.get("schedules", [])
    seeds = spec.get("seeds", [0])
    master = int(spec.get("master_seed", 0))
    jobs = []
    for method in methods:
        if method not in METHODS:
            raise ConfigError(f"matrix: unknown method {method!r}")
        pairs = [(method, s) for s in schedules] if method in SCHEDULED_METHODS else [(method, "RANDOM")]
        for method_name, schedule in pairs:
            for seed_index in seeds:
                cfg = RunConfig.from_json({**base, "method": method_name, "schedule": schedule})
                cfg.seed = derive_seed(master, method_name, schedule, seed_index) % (1 << 31)
                jobs.append((cfg, int(seed_index)))
    return jobs


def _matrix_worker(payload):
    obj, display_seed = payload
    config = RunConfig.from_json(obj)
    try:
        run_dir = _run_with_display_seed(config, display_seed)
        return (config.method, config.schedule, display_seed, str(run_dir), None)
    except Exception as exc:  # record the failure, let the driver aggregate
        return (config.method, config.schedule, display_seed, None, repr(exc))


def _run_with_display_seed(config: RunConfig, display_seed: int):
    from .training import Trainer, load_run_data, write_actions_csv, write_eval_csv, write_metrics_csv

    config.validate()
    kb, goals = load_run_data(config)
    run_id = f"{config.method}_{config.schedule}_{display_seed}"
    run_dir = Path(config.out_dir) / run_id
    run_dir.mkdir(parents=True, exist_ok=True)
    trainer = Trainer(config, kb, goals)
    epoch_reports, eval_reports = trainer.run(
        on_checkpoint=lambda epoch, tr: tr.agent.save(run_dir / f"checkpoint_ep{epoch}.json")
    )
    # the echoed config is the exact one used (derived seed included); only
    # the directory and the run_id column carry the human-readable index
    (run_dir / "config.json").write_text(json.dumps(config.to_json(), indent=1) + "\n",
                                         encoding="utf-8")
    write_metrics_csv(run_dir / "metrics.csv", run_id, config, epoch_reports)
    write_eval_csv(run_dir / "eval.csv", run_id, eval_reports)
    write_actions_csv(run_dir / "actions.csv", run_id, trainer.stage_action_counts)
    return run_dir


def cmd_matrix(args) -> int:
    try:
        spec = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config: file not found: {args.config}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON: {exc.msg}")
    jobs = expand_matrix(spec)
    if not jobs:
        print("matrix is empty: nothing to run")
        return EXIT_OK
    payloads = [(cfg.to_json(), display_seed) for cfg, display_seed in jobs]
    failures = 0
    if args.jobs <= 1:
        results = [_matrix_worker(p) for p in payloads]
    else:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_matrix_worker, payloads))
    for method, schedule, seed, run_dir, error in results:
        if error is None:
            print(f"ok   {method}_{schedule}_{seed} -> {run_dir}")
        else:
            failures += 1
            print(f"FAIL {method}_{schedule}_{seed}: {error}")
    print(f"{len(results) - failures}/{len(results)} runs completed")
    return EXIT_OK if failures == 0 else 1


def cmd_report(args) -> int:
    runs_dir = Path(args.runs)
    if not runs_dir.is_dir():
        print(f"error: runs directory not found: {runs_dir}", file=sys.stderr)
        return EXIT_USAGE
    try:
        paths = build_report(runs_dir, args.out)
    except AnalysisError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for name in sorted(paths):
        print(f"{name}: {paths[name]}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dialogrl",
        description="Train and analyze movie-ticket dialog policies "
                    "(DQN / DDQ variants with curiosity and curricula).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="generate the KB and goal files")
    gen.add_argument("--seed", type=int, default=7)
    gen.add_argument("--movies", type=int, default=991)
    gen.add_argument("--goals-spec", default=",".join(f"{k}:{v}" for k, v in DEFAULT_GOAL_COUNTS.items()),
                     help="request-slot-count:goal-count pairs, e.g. '1:61,2:16'")
    gen.add_argument("--out-dir", default="data")
    gen.set_defaults(fn=cmd_gen_data)

    train = sub.add_parser("train", help="run one training configuration")
    train.add_argument("--config", required=True, help="path to a RunConfig JSON file")
    train.set_defaults(fn=cmd_train)

    ev = sub.add_parser("eval", help="evaluate a saved checkpoint")
    ev.add_argument("--run-dir", required=True)
    ev.add_argument("--checkpoint", default=None, help="checkpoint file name (default: latest)")
    ev.add_argument("--level", default=ALL, choices=LEVELS)
    ev.add_argument("--episodes", type=int, default=50)
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--show", action="store_true", help="print rendered dialogs instead of metrics")
    ev.set_defaults(fn=cmd_eval)

    matrix = sub.add_parser("matrix", help="run a methods x schedules x seeds grid")
    matrix.add_argument("--config", required=True, help="path to a matrix JSON file")
    matrix.add_argument("--jobs", type=int, default=1)
    matrix.set_defaults(fn=cmd_matrix)

    report = sub.add_parser("report", help="build tables and figure data from runs")
    report.add_argument("--runs", required=True)
    report.add_argument("--out", required=True)
    report.set_defaults(fn=cmd_report)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.fn(args)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DialogRlError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
