"""``datascope`` command line.

Exit codes: 0 success, 2 malformed input, 3 numerical-validation failure,
4 sweep finished with failed runs.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

from ._validation import DataFormatError
from .core import PolicyTable, average_trajectory_return, evaluate_policy_exact, finite_horizon_q
from .datagen import (
    SCHEMES,
    GenerationScheme,
    OnlineTrainerConfig,
    generate,
    online_steps,
    train_online,
)
from .envs import make_env
from .io import read_dataset, write_dataset
from .measures import REPORT_FIELDS, NumericalValidationError, References, characterize
from .offline import ALGORITHMS, OfflineConfig, run_offline
from .shift import DEFAULT_THRESHOLD, IncomparableError, compare, estimate_factors
from .sweep import SweepSpec, correlations, read_results, run_sweep

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_PARTIAL = 0, 2, 3, 4


def _emit(records, fmt, fields=None, out=None):
    """Write a list of flat dicts as JSON or CSV."""
    stream = out or sys.stdout
    if fmt == "json":
        stream.write(json.dumps(records if len(records) != 1 else records[0], indent=2,
                                default=_json_default) + "\n")
        return
    fields = fields or list(records[0])
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(fields)
    for rec in records:
        w.writerow(["" if rec.get(f) is None else rec.get(f) for f in fields])


def _json_default(obj):
    if hasattr(obj, "item"):
        return obj.item()
    raise TypeError(type(obj).__name__)


def _clean(d):
    return {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in d.items()}


def _reference_returns(env):
    """Exact undiscounted returns of the uniform and the optimal finite-horizon policy."""
    mdp = make_env(env)
    uniform = PolicyTable.uniform(mdp.n_states, mdp.n_actions)
    best = PolicyTable.greedy(finite_horizon_q(mdp))
    return evaluate_policy_exact(mdp, uniform, 1.0), evaluate_policy_exact(mdp, best, 1.0)


# ---------------------------------------------------------------------------
# subcommands


def cmd_characterize(args):
    ref = read_dataset(args.ref)
    d_min = args.min_return
    if d_min is None and args.min_data:
        d_min = average_trajectory_return(read_dataset(args.min_data), args.gamma)
    d_exp = args.expert_return
    if d_exp is None and args.expert_data:
        d_exp = average_trajectory_return(read_dataset(args.expert_data), args.gamma)
    if d_min is None or d_exp is None:
        raise SystemExit("characterize: give --min-return/--min-data and "
                         "--expert-return/--expert-data")
    refs = References(ref, d_min, d_exp, ref_name=Path(args.ref).name,
                      min_name=args.min_data or "given", expert_name=args.expert_data or "given")
    reports = [
        _clean(characterize(read_dataset(p), refs, args.counter, args.gamma, Path(p).name).to_dict())
        for p in args.data
    ]
    _emit(reports, args.format, list(REPORT_FIELDS))
    return EXIT_OK


def cmd_generate(args):
    mdp = make_env(args.env)
    scheme = GenerationScheme(args.scheme, args.n, args.epsilon, args.mix_fraction)
    expert = log = None
    if scheme.kind != "random":
        steps = online_steps(args.n, args.online_steps)
        expert, log, _ = train_online(mdp, OnlineTrainerConfig(steps=steps, seed=args.seed))
    ds = generate(mdp, scheme, expert, log, args.seed)
    write_dataset(ds, args.out)
    _emit([{"out": str(args.out), **ds.manifest.to_dict()}], args.format)
    return EXIT_OK


def cmd_train(args):
    ds = read_dataset(args.data)
    env = args.env or ds.manifest.env
    mdp = make_env(env)
    cfg = OfflineConfig(args.algo, iterations=args.iters, alpha_lr=args.lr,
                        eval_every=args.eval_every, eval_episodes=args.eval_episodes,
                        seed=args.seed, tau=args.tau, alpha=args.alpha)
    d_min, d_exp = args.min_return, args.expert_return
    if d_min is None or d_exp is None:
        exact_min, exact_exp = _reference_returns(env)
        d_min = exact_min if d_min is None else d_min
        d_exp = exact_exp if d_exp is None else d_exp
    res = run_offline(ds, mdp, cfg, d_min, d_exp)
    record = {"algo": args.algo, "env": env, "data": str(args.data), "d_min_return": d_min,
              "d_expert_return": d_exp, **res.to_dict()}
    if args.out:
        Path(args.out).write_text(json.dumps(record, indent=2) + "\n", encoding="utf-8")
    if args.format == "csv":
        record.pop("eval_history")
    _emit([record], args.format)
    return EXIT_OK


def cmd_sweep(args):
    spec = SweepSpec(
        envs=tuple(args.envs), schemes=tuple(args.schemes), dataset_seeds=args.dataset_seeds,
        run_seeds=args.run_seeds, algorithms=tuple(args.algos), n_samples=args.n,
        output_dir=args.out_dir, iterations=args.iters, counter=args.counter,
        seed=args.seed, workers=args.workers,
    )
    result = run_sweep(spec)
    if args.out_dir is None:
        sys.stdout.write(result.to_csv())
    table = result.table.to_json() if args.format == "json" else result.table.to_csv()
    sys.stderr.write(table if table.endswith("\n") else table + "\n")
    if result.n_failed:
        sys.stderr.write(f"{result.n_failed} of {len(result.rows)} runs failed\n")
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_shift(args):
    a, b = read_dataset(args.a), read_dataset(args.b)
    S = max(a.manifest.n_states, b.manifest.n_states) or None
    A = max(a.manifest.n_actions, b.manifest.n_actions) or None
    try:
        report = compare(estimate_factors(a, S, A), estimate_factors(b, S, A), args.threshold)
    except IncomparableError as exc:
        sys.stderr.write(f"incomparable: {exc}\n")
        return EXIT_INPUT
    d = _clean(report.to_dict())
    if args.format == "csv":
        flags = d.pop("flags")
        d.update({f"flag_{k}": v for k, v in flags.items()})
    _emit([d], args.format)
    return EXIT_OK


def cmd_correlate(args):
    try:
        rows = read_results(Path(args.results))
    except (ValueError, KeyError) as exc:
        raise DataFormatError(str(exc)) from exc
    table = correlations(rows, seed=args.seed)
    text = table.to_json() + "\n" if args.format == "json" else table.to_csv()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def cmd_verify_theory(args):
    from .verify import run_all

    results = run_all(args.n, args.seed)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERIC


# ---------------------------------------------------------------------------
# parser


def build_parser():
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--seed", type=int, help="random seed (default 0)")
    common.add_argument("--gamma", type=float,
                        help="discount for reported dataset returns (default 1.0)")
    common.add_argument("--format", choices=("json", "csv"), help="output format (default json)")

    parser = argparse.ArgumentParser(
        prog="datascope", parents=[common],
        description="Characterize offline RL datasets and run tabular offline RL sweeps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("characterize", parents=[common], help="TQ/SACo report per dataset")
    p.add_argument("data", nargs="+", help="dataset .jsonl files")
    p.add_argument("--ref", required=True, help="reference (replay) dataset for coverage")
    p.add_argument("--min-return", type=float)
    p.add_argument("--expert-return", type=float)
    p.add_argument("--min-data", help="dataset whose average return is the minimum reference")
    p.add_argument("--expert-data", help="dataset whose average return is the expert reference")
    p.add_argument("--counter", default="exact", help="'exact' or 'hll:<p>'")
    p.set_defaults(func=cmd_characterize)

    p = sub.add_parser("generate", parents=[common], help="sample a dataset with one scheme")
    p.add_argument("--env", required=True)
    p.add_argument("--scheme", required=True, choices=SCHEMES)
    p.add_argument("--n", type=int, required=True, help="number of transitions")
    p.add_argument("--out", required=True)
    p.add_argument("--epsilon", type=float, default=0.2)
    p.add_argument("--mix-fraction", type=float, default=0.8)
    p.add_argument("--online-steps", type=int, help="online training steps (default max(--n, 5000))")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", parents=[common], help="train one offline agent")
    p.add_argument("--data", required=True)
    p.add_argument("--env", help="environment (default: dataset manifest)")
    p.add_argument("--algo", required=True, choices=ALGORITHMS)
    p.add_argument("--tau", type=float, default=0.3)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--iters", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--eval-every", type=int, default=20)
    p.add_argument("--eval-episodes", type=int, default=10)
    p.add_argument("--min-return", type=float)
    p.add_argument("--expert-return", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_train)

    d = SweepSpec()
    p = sub.add_parser("sweep", parents=[common], help="dataset x algorithm grid")
    p.add_argument("--envs", nargs="+", default=list(d.envs))
    p.add_argument("--schemes", nargs="+", default=list(d.schemes), choices=SCHEMES)
    p.add_argument("--algos", nargs="+", default=list(d.algorithms), choices=ALGORITHMS)
    p.add_argument("--dataset-seeds", type=int, default=d.dataset_seeds)
    p.add_argument("--run-seeds", type=int, default=d.run_seeds)
    p.add_argument("--n", type=int, default=d.n_samples)
    p.add_argument("--iters", type=int, default=d.iterations)
    p.add_argument("--counter", default=d.counter)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("shift", parents=[common], help="factor-wise domain shift report")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    p.set_defaults(func=cmd_shift)

    p = sub.add_parser("correlate", parents=[common], help="correlation table of a results CSV")
    p.add_argument("results")
    p.add_argument("--out")
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("verify-theory", parents=[common],
                       help="entropy and homomorphism invariants on random MDPs")
    p.add_argument("--n", type=int, default=100, help="random instances per check")
    p.set_defaults(func=cmd_verify_theory)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    for name, default in (("seed", 0), ("gamma", 1.0), ("format", "json")):
        if not hasattr(args, name):
            setattr(args, name, default)
    try:
        return args.func(args)
    except DataFormatError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT
    except (FileNotFoundError, IsADirectoryError, KeyError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT
    except NumericalValidationError as exc:
        sys.stderr.write(f"numerical validation failed: {exc}\n")
        return EXIT_NUMERIC
    except ValueError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
