#!/usr/bin/env python3
"""
daverpg command-line client
Runs experiments from a config file and inspects the epochs of recorded traces
"""

import argparse
import json
import sys

import numpy as np
from pydantic import ValidationError

from daverpg import __version__
from daverpg.algorithm import BUDGETED, FIXED
from daverpg.config import setup_logging
from daverpg.data.export import read_trace_csv, recorded_workers, workers_from_rows
from daverpg.errors import DaveError
from daverpg.experiment import run_experiment
from daverpg.schemas import RUN, SIMULATE
from daverpg.simulator import DELAY_KINDS, brute_force_epochs, delays_from_workers, epoch_sequence
from daverpg.simulator import verify_epoch_bounds

from .config import resolve_config

# epoch boundaries printed before eliding the rest
MAX_BOUNDARIES_SHOWN = 20


def output_json(data, exit_code=0):
    """Output data as JSON and exit on failure"""
    print(json.dumps(data, indent=2))
    if exit_code != 0:
        sys.exit(exit_code)


def fail(message, json_output=False):
    """Report a failure the way the chosen output mode expects and exit 1"""
    if json_output:
        output_json({'success': False, 'error': message}, exit_code=1)
    print(f"✗ {message}")
    sys.exit(1)


def _validation_message(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        key = '.'.join(str(loc) for loc in item.get('loc', ())) or 'config'
        parts.append(f"{key}: {item.get('msg')}")
    return 'invalid config: ' + '; '.join(parts)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='daverpg',
        description='Asynchronous distributed proximal gradient experiments',
    )
    parser.add_argument('--version', action='version', version=f'daverpg {__version__}')
    sub = parser.add_subparsers(dest='command')

    run = sub.add_parser('run', help='Run the experiment a config describes')
    run.add_argument('--config', help='key = value config file (a run manifest works too)')
    run.add_argument('--algo', help='dave-rpg, piag, sync-pg or a comma-separated list')
    run.add_argument('--mode', choices=[SIMULATE, RUN])
    run.add_argument('--workers', type=int)
    run.add_argument('--reps', help='repetition count, or a comma-separated sweep such as 1,4,7,10')
    run.add_argument('--rep-kind', dest='rep_kind', choices=[FIXED, BUDGETED])
    run.add_argument('--rep-budget', dest='rep_budget', type=float)
    run.add_argument('--delay-model', dest='delay_model', choices=list(DELAY_KINDS))
    run.add_argument('--problem')
    run.add_argument('--dataset')
    run.add_argument('--dim', type=int)
    run.add_argument('--n-features', dest='n_features', type=int)
    run.add_argument('--init', help='scalar or comma-separated starting point')
    run.add_argument('--lambda1', type=float)
    run.add_argument('--lambda2', type=float)
    run.add_argument('--seed', type=int)
    run.add_argument('--budget-iters', dest='budget_iters', type=int)
    run.add_argument('--budget-time', dest='budget_time', type=float)
    run.add_argument('--out')
    run.add_argument('--log-level', dest='log_level')
    run.add_argument('--json', action='store_true', help='Output results in JSON format')

    epochs = sub.add_parser('epochs', help='Delay statistics and epoch boundaries of a trace CSV')
    epochs.add_argument('trace', help='trace or report CSV written by a run')
    epochs.add_argument('--workers', type=int, help='worker count, if some worker never exchanged')
    epochs.add_argument('--log-level', dest='log_level')
    epochs.add_argument('--json', action='store_true', help='Output results in JSON format')
    return parser


# dests of `run` that are not config keys
RUN_ONLY_FLAGS = ('command', 'config', 'json', 'log_level')


def cmd_run(args):
    """Resolve the config, run every requested run and summarize the manifests"""
    flags = {key: value for key, value in vars(args).items() if key not in RUN_ONLY_FLAGS}
    try:
        cfg = resolve_config(args.config, flags)
        manifests = run_experiment(cfg)
    except ValidationError as e:
        fail(_validation_message(e), args.json)
    except (DaveError, OSError) as e:
        fail(str(e), args.json)

    if args.json:
        output_json({'success': True, 'out': cfg.out, 'runs': [m.model_dump() for m in manifests]})
        return

    print(f"✓ {len(manifests)} run(s) written to {cfg.out}")
    for m in manifests:
        line = f"  {m.run_id}: {m.iterations} exchanges, {m.epochs} epochs"
        if m.max_delay is not None:
            line += f", max delay {m.max_delay}"
        if m.final_suboptimality is not None:
            line += f", F - F* = {m.final_suboptimality:.3e}"
        print(line)
    print(f"  problem {manifests[0].problem_digest[:12]}")


def cmd_epochs(args):
    """Recompute delays and epochs from the update order recorded in a trace CSV"""
    try:
        rows = read_trace_csv(args.trace)
        workers, seen = workers_from_rows(rows)
        if args.workers is not None:
            if args.workers < seen:
                fail(f"trace names worker {seen - 1} but --workers is {args.workers}", args.json)
            M = args.workers
        else:
            # the manifest knows workers that never exchanged
            M = recorded_workers(args.trace) or seen
            if M < seen:
                fail(f"trace names worker {seen - 1} but its manifest records {M} workers", args.json)
        delays = delays_from_workers(workers, M)
        epochs = epoch_sequence(delays)
        bounds = verify_epoch_bounds(delays, epochs)
        scan_agrees = bool(np.array_equal(brute_force_epochs(workers, M).boundaries, epochs.boundaries))
    except (DaveError, OSError, ValueError, KeyError) as e:
        fail(f"cannot read trace {args.trace}: {e}", args.json)

    result = {
        'success': bounds.ok and scan_agrees,
        'trace': args.trace,
        'workers': M,
        'exchanges': delays.K,
        'boundaries': [int(b) for b in epochs.boundaries],
        'scan_agrees': scan_agrees,
        **bounds.to_dict(),
    }
    exit_code = 0 if result['success'] else 1
    if args.json:
        output_json(result, exit_code=exit_code)
        return

    print(f"{'✓' if result['success'] else '✗'} {args.trace}: {delays.K} exchanges, M={M}, {len(epochs)} complete epochs")
    print(f"  max delay {bounds.max_delay}, average delay bound {bounds.average_delay_bound:.3f}, "
          f"mean delay {bounds.mean_delay:.3f}")
    shown = result['boundaries'][:MAX_BOUNDARIES_SHOWN]
    more = len(result['boundaries']) - len(shown)
    print(f"  epoch boundaries: {', '.join(str(b) for b in shown)}{f' ... (+{more})' if more > 0 else ''}")
    max_gap = result['max_gap']
    print(f"  {'✓' if not bounds.uniform_violations else '✗'} largest gap {max_gap} <= 2d+1 = {bounds.uniform_gap_bound}")
    print(f"  {'✓' if not bounds.average_violations else '✗'} largest gap {max_gap} <= "
          f"2M(2d_bar-M+3)-3 = {bounds.average_gap_bound:.3f}")
    if not scan_agrees:
        print("  ✗ epoch recursion disagrees with the two-updates scan")
    if exit_code:
        sys.exit(exit_code)


def main(argv=None):
    """Main entry point for the daverpg client"""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return

    setup_logging(args.log_level)
    if args.command == 'run':
        cmd_run(args)
    elif args.command == 'epochs':
        cmd_epochs(args)


if __name__ == '__main__':
    main()
