"""Command-line interface: train, eval, compile-dfa, tasks."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import dfa as dfamod
from . import harness, lpopl, ltl


def _add_train_args(p):
    p.add_argument("--algo", default="i-tabular",
                   choices=["dqn-l", "i-dqn-l", "lpopl", "i-lpopl",
                            "tabular", "i-tabular"])
    p.add_argument("--map", default="two7",
                   help="builtin map name (micro, two7, single7) or a file path")
    p.add_argument("--specs", default="sequential",
                   help="builtin set (sequential, interleaving) or a spec file")
    p.add_argument("--agents", type=int, default=2, choices=[1, 2])
    p.add_argument("--steps-per-spec", type=int, default=None)
    p.add_argument("--eval-every", type=int, default=1000)
    p.add_argument("--eval-cap", type=int, default=300)
    p.add_argument("--seeds", default="0,1,2",
                   help="comma-separated list of run seeds")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--preset", choices=["desk", "paper"], default=None)
    p.add_argument("--learner", choices=["tabular", "dqn"], default=None)
    p.add_argument("--lr", type=float, default=5e-4)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--buffer-capacity", type=int, default=25000)
    p.add_argument("--target-sync", type=int, default=100)
    p.add_argument("--eps-start", type=float, default=1.0)
    p.add_argument("--eps-end", type=float, default=0.1)
    p.add_argument("--eps-decay-frac", type=float, default=0.1)
    p.add_argument("--learn-start", type=int, default=1000)
    p.add_argument("--step-limit", type=int, default=300)
    p.add_argument("--r-satisfy", type=float, default=1.0)
    p.add_argument("--r-progress", type=float, default=0.0)
    p.add_argument("--r-stall", type=float, default=-1.0)
    p.add_argument("--r-violate", type=float, default=-1.0)
    p.add_argument("--no-terminate-on-violation", action="store_true")


def _config_from_args(args) -> harness.ExperimentConfig:
    seeds = tuple(int(s) for s in args.seeds.split(",") if s.strip() != "")
    return harness.ExperimentConfig(
        algo=args.algo, agents=args.agents, map=args.map, specs=args.specs,
        steps_per_spec=args.steps_per_spec, eval_every=args.eval_every,
        eval_cap=args.eval_cap, seeds=seeds, out_dir=args.out,
        preset=args.preset, learner=args.learner, lr=args.lr,
        gamma=args.gamma, alpha=args.alpha, batch_size=args.batch_size,
        buffer_capacity=args.buffer_capacity, target_sync=args.target_sync,
        eps_start=args.eps_start, eps_end=args.eps_end,
        eps_decay_frac=args.eps_decay_frac, learn_start=args.learn_start,
        step_limit=args.step_limit, r_satisfy=args.r_satisfy,
        r_progress=args.r_progress, r_stall=args.r_stall,
        r_violate=args.r_violate,
        terminate_on_violation=not args.no_terminate_on_violation)


def cmd_train(args):
    result = harness.run(_config_from_args(args))
    for path in result.per_seed_paths:
        print(f"wrote {path}")
    print(f"wrote {result.aggregate_path}")
    print(f"wrote {result.svg_path}")
    return 0


def cmd_eval(args):
    grid = harness.load_grid(args.map)
    specs = harness.load_specs(args.specs) if args.specs else None
    policy_dir = Path(args.policy)
    paths = sorted(policy_dir.glob("policy_seed*.pkl"))
    if not paths:
        print(f"no policies found under {policy_dir}", file=sys.stderr)
        return 1
    for path in paths:
        payload = harness.load_policy(path)
        records = harness.evaluate_policy_payload(
            payload, grid, specs, eval_cap=args.eval_cap)
        mean_ret = sum(r["return"] for r in records) / len(records)
        print(f"{path.name}: mean return {mean_ret:.4f}")
        for rec in records:
            print(f"  spec {rec['spec_index']}: return {rec['return']:.4f} "
                  f"steps {rec['steps']} satisfied {rec['satisfied']}")
    return 0


def cmd_compile_dfa(args):
    f = ltl.parse(args.spec)
    d = dfamod.compile(f)
    dot = dfamod.export_dot(d)
    if args.out:
        Path(args.out).write_text(dot)
        print(f"wrote {args.out} ({len(d)} states)")
    else:
        print(dot, end="")
    return 0


def cmd_tasks(args):
    specs = harness.load_specs(args.specs)
    taskset = lpopl.extract_tasks(specs)
    for task in taskset.tasks:
        print(ltl.render(task))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="tg",
        description="Multi-agent RL on co-safe LTL specifications")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train and evaluate per curriculum")
    _add_train_args(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate saved greedy policies")
    p_eval.add_argument("--policy", required=True, help="run output directory")
    p_eval.add_argument("--specs", default=None)
    p_eval.add_argument("--map", required=True)
    p_eval.add_argument("--eval-cap", type=int, default=300)
    p_eval.set_defaults(func=cmd_eval)

    p_dfa = sub.add_parser("compile-dfa", help="compile a formula to DOT")
    p_dfa.add_argument("--spec", required=True, help="formula text")
    p_dfa.add_argument("--out", default=None, help="output .dot path")
    p_dfa.set_defaults(func=cmd_compile_dfa)

    p_tasks = sub.add_parser("tasks", help="print the extracted task set")
    p_tasks.add_argument("--specs", required=True)
    p_tasks.set_defaults(func=cmd_tasks)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
