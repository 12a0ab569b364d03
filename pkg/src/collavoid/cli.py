"""``collavoid`` command line: dataset, pretraining, RL training, suites, evaluation, rollouts."""

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from . import net
from .config import ConfigError, RunConfig
from .evaluation import (
    TestSuite, compare, evaluate, format_report, generate_suite, write_report_csv,
)
from .estimator import LSTMActorCritic
from .policy import NetworkPolicy
from .sim import (
    ACTION_COUNT, PolicyTag, RewardParams, ScenarioError, domain_for, generate_random_scenario,
    generate_structured_scenario, run_episode,
)
from .sim.policies import NonCooperativePolicy, ZeroVelocityPolicy
from .trainer import (
    TrainingConfig, TrainingDiverged, dataset_arrays, generate_supervised_dataset,
    run_training, single_agent_success,
)

log = logging.getLogger("collavoid")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_DIVERGED = 0, 1, 2, 3

BASELINES = {
    PolicyTag.NON_COOPERATIVE.value: NonCooperativePolicy,
    PolicyTag.ZERO_VELOCITY.value: ZeroVelocityPolicy,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def reward_params(cfg):
    s = cfg["sim"]
    return RewardParams(s["goal_reward"], s["collision_penalty"], s["proximity_threshold"],
                        s["proximity_offset"], s["proximity_slope"])


def training_config(cfg):
    t = dict(cfg["trainer"])
    return TrainingConfig(**t, dt=cfg["sim"]["dt"], sensing_radius=cfg["obs"]["sensing_radius"],
                          max_others=cfg["obs"]["max_others"], seed=cfg["run"]["seed"])


def mode_of(args, default):
    return args.mode or default


def load_policy(source, mode, cfg):
    """A checkpoint path or a baseline tag."""
    if source in BASELINES:
        return source, BASELINES[source]()
    if not os.path.exists(source):
        raise UsageError(f"{source}: no such checkpoint (baselines: {', '.join(BASELINES)})")
    ckpt = net.load_checkpoint(source, expected_action_count=ACTION_COUNT)
    name = os.path.splitext(os.path.basename(source))[0]
    return name, NetworkPolicy.from_params(ckpt.params, mode, sensing_radius=cfg["obs"]["sensing_radius"],
                                           max_others=cfg["obs"]["max_others"])


def cmd_gen_dataset(args, cfg):
    p = cfg["pretrain"]
    data = generate_supervised_dataset(
        p["n_examples"], cfg["run"]["seed"], tuple(p["n_agents"]), p["domain_size"], cfg["sim"]["dt"],
        cfg["trainer"]["gamma"], p["veto_margin"], p["veto_horizon"], p["random_heading"], reward_params(cfg))
    others, mask, ego, actions, values = dataset_arrays(data, cfg["obs"]["max_others"])
    path = os.path.join(args.out, "dataset.npz")
    np.savez_compressed(path, others=others, mask=mask, ego=ego, actions=actions, values=values)
    print(f"wrote {len(actions)} examples to {path}")
    return EXIT_OK


def cmd_pretrain(args, cfg):
    p = cfg["pretrain"]
    seed = cfg["run"]["seed"]
    if args.dataset:
        with np.load(args.dataset) as d:
            arrays = tuple(d[k] for k in ("others", "mask", "ego", "actions", "values"))
    else:
        data = generate_supervised_dataset(
            p["n_examples"], seed, tuple(p["n_agents"]), p["domain_size"], cfg["sim"]["dt"],
            cfg["trainer"]["gamma"], p["veto_margin"], p["veto_horizon"], p["random_heading"],
            reward_params(cfg))
        arrays = dataset_arrays(data, cfg["obs"]["max_others"])
    others, mask, ego, actions, values = arrays
    est = LSTMActorCritic(lstm_hidden=cfg["net"]["lstm_hidden"], fc_widths=cfg["net"]["fc_widths"],
                          max_sequence=cfg["obs"]["max_others"], epochs=p["epochs"],
                          learning_rate=p["lr"], batch_size=p["batch_size"], random_state=seed)
    est.fit((others, mask, ego), actions, values)
    ckpt = os.path.join(args.out, "pretrain.bin")
    est.save(ckpt)
    with open(os.path.join(args.out, "pretrain_loss.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("epoch", "value_loss", "cross_entropy"))
        w.writerows(est.history_)
    summary = {"checkpoint": ckpt, "examples": int(len(actions))}
    if p["check_scenarios"]:
        summary["single_agent_success"] = single_agent_success(est.params_, p["check_scenarios"], seed + 1,
                                                               dt=cfg["sim"]["dt"])
    with open(os.path.join(args.out, "pretrain_summary.json"), "w") as fh:
        json.dump(summary, fh, indent=1)
    print(json.dumps(summary))
    return EXIT_OK


def cmd_train(args, cfg):
    source = args.resume or args.init
    if not source:
        raise UsageError("train needs --init CHECKPOINT or --resume CHECKPOINT")
    ckpt = net.load_checkpoint(source, expected_action_count=ACTION_COUNT)
    tc = training_config(cfg)
    kwargs = {}
    if args.resume:
        kwargs = dict(adam=ckpt.adam, start_episode=ckpt.episodes, start_phase=ckpt.phase)
    try:
        result = run_training(tc, ckpt.params, out_dir=args.out,
                              log_path=os.path.join(args.out, "training_log.csv"),
                              reward_params=reward_params(cfg), **kwargs)
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}; last good checkpoint: {exc.checkpoint}", file=sys.stderr)
        return EXIT_DIVERGED
    state = "interrupted" if result.interrupted else "finished"
    print(f"{state} after {result.episodes} episodes ({result.updates} updates), phase {result.phase}; "
          f"final checkpoint {os.path.join(args.out, 'final.bin')}")
    return EXIT_OK


def cmd_gen_suite(args, cfg):
    e = cfg["eval"]
    suite = generate_suite(e["n_agents"], e["count"], cfg["run"]["seed"], e["domain_size"] or None,
                           dt=cfg["sim"]["dt"])
    path = os.path.join(args.out, "suite.json")
    suite.save(path)
    print(f"wrote {len(suite.scenarios)} scenarios ({suite.suite_id}) to {path}")
    return EXIT_OK


def cmd_eval(args, cfg):
    if not args.suite or not os.path.exists(args.suite):
        raise UsageError(f"suite file {args.suite!r} does not exist")
    if not args.policies:
        raise UsageError("eval needs at least one checkpoint or baseline tag")
    suite = TestSuite.load(args.suite)
    mode = mode_of(args, cfg["eval"]["mode"])
    sets = []
    for source in args.policies:
        name, policy = load_policy(source, mode, cfg)
        outcomes = evaluate(policy, suite, name, jobs=cfg["eval"]["jobs"])
        outcomes.save(os.path.join(args.out, f"outcomes_{name}.json"))
        sets.append(outcomes)
    metrics = compare(sets)
    write_report_csv(os.path.join(args.out, "report.csv"), metrics, suite.suite_id)
    text = format_report(metrics, suite.suite_id)
    with open(os.path.join(args.out, "report.txt"), "w") as fh:
        fh.write(text + "\n")
    print(text)
    return EXIT_OK


def cmd_rollout(args, cfg):
    r = cfg["rollout"]
    mode = mode_of(args, r["mode"])
    if not args.policy:
        raise UsageError("rollout needs --policy CHECKPOINT|TAG")
    name, policy = load_policy(args.policy, mode, cfg)
    if args.suite:
        suite = TestSuite.load(args.suite)
        scenario = suite.scenarios[r["case"]]
    elif r["kind"] == "random":
        scenario = generate_random_scenario(r["n_agents"], cfg["eval"]["domain_size"] or domain_for(r["n_agents"]),
                                            cfg["run"]["seed"], dt=cfg["sim"]["dt"])
    else:
        scenario = generate_structured_scenario(r["kind"], r["n_agents"], dt=cfg["sim"]["dt"])
    scenario = scenario.with_tags(PolicyTag.LEARNED)
    log_ = run_episode(scenario, {PolicyTag.LEARNED: policy}, reward_params(cfg),
                       record_probs=r["record_probs"] or args.probs)
    log_.write_json(os.path.join(args.out, "episode.json"))
    log_.write_csv(os.path.join(args.out, "episode.csv"))
    counts = {}
    for o in log_.outcomes.values():
        counts[o.status.value] = counts.get(o.status.value, 0) + 1
    print(f"{name}: {scenario.n_agents} agents, {len(log_.snapshots) - 1} steps, outcomes {counts}")
    return EXIT_OK


COMMANDS = {
    "gen-dataset": cmd_gen_dataset,
    "pretrain": cmd_pretrain,
    "train": cmd_train,
    "gen-suite": cmd_gen_suite,
    "eval": cmd_eval,
    "rollout": cmd_rollout,
}


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI config file")
    common.add_argument("--seed", type=int, help="overrides run.seed")
    common.add_argument("--out", metavar="DIR", default=".", help="output directory (created)")
    common.add_argument("--set", metavar="KEY=VALUE", action="append", default=[], dest="overrides",
                        help="config override, e.g. trainer.lr=1e-4 (repeatable)")
    g = common.add_mutually_exclusive_group()
    g.add_argument("--greedy", dest="mode", action="store_const", const="greedy")
    g.add_argument("--sample", dest="mode", action="store_const", const="sample")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="collavoid", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("gen-dataset", parents=[common], help="write the scripted-expert dataset")
    p = sub.add_parser("pretrain", parents=[common], help="supervised initialization")
    p.add_argument("--dataset", metavar="NPZ", help="use a dataset from gen-dataset")
    p = sub.add_parser("train", parents=[common], help="actor-critic training")
    p.add_argument("--init", metavar="CHECKPOINT")
    p.add_argument("--resume", metavar="CHECKPOINT")
    sub.add_parser("gen-suite", parents=[common], help="write a random test suite")
    p = sub.add_parser("eval", parents=[common], help="evaluate policies on a suite")
    p.add_argument("--suite", metavar="PATH", required=True)
    p.add_argument("policies", nargs="*", metavar="CHECKPOINT|TAG")
    p = sub.add_parser("rollout", parents=[common], help="export one episode for plotting")
    p.add_argument("--policy", metavar="CHECKPOINT|TAG")
    p.add_argument("--suite", metavar="PATH", help="take rollout.case from this suite")
    p.add_argument("--probs", action="store_true", help="record per-step policy distributions")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        overrides = list(args.overrides)
        if args.seed is not None:
            overrides.append(f"run.seed={args.seed}")
        cfg = RunConfig.load(args.config, overrides)
        os.makedirs(args.out, exist_ok=True)
        cfg.write(os.path.join(args.out, "effective_config.ini"))
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, UsageError) as exc:
        print(f"collavoid: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except net.DivergenceError as exc:
        print(f"collavoid: diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, ValueError, ScenarioError, RuntimeError) as exc:
        print(f"collavoid: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
