#!/usr/bin/env python3
"""
Command-line entry point.

    python cli.py validate scenarios/diamond.scn
    python cli.py run scenarios/diamond.scn --seed 3 --out results/diamond --trace
    python cli.py compare scenarios/diamond.scn --protocols aodv,aomdv,trust_aomdv --seeds 1..20
    python cli.py sweep scenarios/diamond.scn --param batch --values 5,10,20,40
    python cli.py serve --port 5000
"""

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import pandas as pd

import config
from models import Protocol
from scenario_io import ScenarioError, load_scenario, save_report, write_report
from simulator import SimulationError, Simulator

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = ['protocol', 'seed', 'offered', 'delivered', 'dropped', 'mean_delay',
                   'p95_delay', 'mean_service_delay', 'retransmissions', 'rreq', 'rrep', 'rerr']


def parse_seeds(text):
    """'7' -> [7]; '1,4,9' -> [1, 4, 9]; '1..5' -> [1, 2, 3, 4, 5]"""
    seeds = []
    for part in str(text).split(','):
        part = part.strip()
        if not part:
            continue
        if '..' in part:
            low, high = part.split('..', 1)
            low, high = int(low), int(high)
            if high < low:
                raise ValueError(f"empty seed range '{part}'")
            seeds.extend(range(low, high + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise ValueError('no seeds given')
    return seeds


def parse_protocols(text):
    return [Protocol.parse(name) for name in str(text).split(',') if name.strip()]


def summarize_run(scenario):
    """Run once and reduce the report to one row of headline numbers"""
    report = Simulator(scenario).run()
    delays = [record.delivered - record.created for record in report.deliveries]
    service = [flow.mean_service_delay for flow in report.flows if flow.delivered]
    return {
        'protocol': report.protocol,
        'seed': report.seed,
        'offered': report.offered,
        'delivered': report.delivered,
        'dropped': sum(flow.dropped for flow in report.flows),
        'mean_delay': report.mean_delay(),
        'p95_delay': float(pd.Series(delays).quantile(0.95)) if delays else float('nan'),
        'mean_service_delay': float(pd.Series(service).mean()) if service else float('nan'),
        'retransmissions': sum(flow.retransmissions for flow in report.flows),
        'rreq': report.control.rreq,
        'rrep': report.control.rrep,
        'rerr': report.control.rerr,
    }


def _run_members(members, jobs):
    if jobs > 1 and len(members) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(summarize_run, members))
    return [summarize_run(member) for member in members]


def compare_protocols(scenario, protocols, seeds, jobs=1) -> pd.DataFrame:
    """Same topology and traffic under each protocol and seed; one row per run"""
    members = [scenario.with_params(protocol=protocol.value, seed=seed)
               for protocol in protocols for seed in seeds]
    return pd.DataFrame(_run_members(members, jobs), columns=SUMMARY_COLUMNS)


def sweep_parameter(scenario, name, values, seeds, jobs=1) -> pd.DataFrame:
    members = []
    labels = []
    for value in values:
        for seed in seeds:
            members.append(scenario.with_params(**{name: value, 'seed': seed}))
            labels.append(value)
    frame = pd.DataFrame(_run_members(members, jobs), columns=SUMMARY_COLUMNS)
    frame.insert(0, name, labels)
    return frame


def protocol_table(runs: pd.DataFrame) -> pd.DataFrame:
    """Side-by-side means per protocol"""
    table = runs.groupby('protocol', sort=False).agg(
        runs=('seed', 'count'),
        delivered=('delivered', 'mean'),
        offered=('offered', 'mean'),
        mean_delay=('mean_delay', 'mean'),
        p95_delay=('p95_delay', 'mean'),
        mean_service_delay=('mean_service_delay', 'mean'),
        rreq=('rreq', 'mean'),
    )
    return table.reset_index()


def _print_frame(frame):
    print(frame.to_string(index=False, float_format=lambda v: f"{v:.6g}", na_rep='nan'))


def _write_frame(frame, directory, name):
    try:
        os.makedirs(directory, exist_ok=True)
        path = os.path.join(directory, name)
        frame.to_csv(path, index=False, float_format='%.6g', lineterminator='\n')
    except OSError as e:
        raise OSError(f"cannot write {name} to {directory}: {e}") from e
    print(f"✅ Wrote {path}")


def cmd_validate(args):
    load_scenario(args.scenario)
    print(f"✅ {args.scenario}: OK")
    return 0


def cmd_run(args):
    scenario = load_scenario(args.scenario)
    changes = {}
    if args.seed is not None:
        changes['seed'] = args.seed
    if args.protocol:
        changes['protocol'] = args.protocol
    if changes:
        scenario = scenario.with_params(**changes)

    simulator = Simulator(scenario, trace=args.trace)
    report = simulator.run()
    out = args.out or os.path.join(config.default_output_dir(),
                                   os.path.splitext(os.path.basename(args.scenario))[0])
    save_report(report, out, trace=simulator.trace_records if args.trace else None)
    print(write_report(report, 'table'), end='')
    print(f"✅ Results written to {out}")
    return 0


def cmd_compare(args):
    scenario = load_scenario(args.scenario)
    seeds = parse_seeds(args.seeds) if args.seeds else [scenario.seed]
    runs = compare_protocols(scenario, parse_protocols(args.protocols), seeds, jobs=args.jobs)
    _print_frame(protocol_table(runs))
    if args.out:
        _write_frame(runs, args.out, 'compare.csv')
    return 0


def cmd_sweep(args):
    scenario = load_scenario(args.scenario)
    seeds = parse_seeds(args.seeds) if args.seeds else [scenario.seed]
    values = [value.strip() for value in args.values.split(',') if value.strip()]
    if not values:
        raise ValueError('--values needs at least one value')
    runs = sweep_parameter(scenario, args.param, values, seeds, jobs=args.jobs)
    summary = runs.groupby(args.param, sort=False)[['delivered', 'mean_delay', 'mean_service_delay']].mean()
    _print_frame(summary.reset_index())
    if args.out:
        _write_frame(runs, args.out, f"sweep_{args.param}.csv")
    return 0


def cmd_serve(args):
    from app import app
    app.run(host=args.host, port=args.port, debug=args.debug)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog='manet-sim', description='Trust-aware multipath MANET simulator')
    parser.add_argument('--log-level', default=None, help='DEBUG, INFO, WARNING (default WARNING)')
    sub = parser.add_subparsers(dest='command', required=True)

    validate = sub.add_parser('validate', help='check a scenario file')
    validate.add_argument('scenario')
    validate.set_defaults(func=cmd_validate)

    run = sub.add_parser('run', help='run one scenario')
    run.add_argument('scenario')
    run.add_argument('--seed', type=int)
    run.add_argument('--protocol', choices=[p.value for p in Protocol])
    run.add_argument('--out', help='output directory (default $MANET_OUTPUT_DIR/<scenario>)')
    run.add_argument('--trace', action='store_true', help='also write trace.tsv')
    run.set_defaults(func=cmd_run)

    compare = sub.add_parser('compare', help='run each protocol on the same scenario and seeds')
    compare.add_argument('scenario')
    compare.add_argument('--protocols', default=','.join(p.value for p in Protocol))
    compare.add_argument('--seeds', help="e.g. '1,2,3' or '1..20'")
    compare.add_argument('--out')
    compare.add_argument('--jobs', type=int, default=1)
    compare.set_defaults(func=cmd_compare)

    sweep = sub.add_parser('sweep', help='vary one parameter')
    sweep.add_argument('scenario')
    sweep.add_argument('--param', required=True)
    sweep.add_argument('--values', required=True)
    sweep.add_argument('--seeds')
    sweep.add_argument('--out')
    sweep.add_argument('--jobs', type=int, default=1)
    sweep.set_defaults(func=cmd_sweep)

    serve = sub.add_parser('serve', help='start the JSON service')
    serve.add_argument('--host', default='127.0.0.1')
    serve.add_argument('--port', type=int, default=5000)
    serve.add_argument('--debug', action='store_true')
    serve.set_defaults(func=cmd_serve)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    config.setup_logging(args.log_level)
    try:
        return args.func(args)
    except ScenarioError as e:
        for diagnostic in e.diagnostics:
            prefix = f"{e.source}: " if e.source else ''
            print(f"❌ {prefix}{diagnostic}", file=sys.stderr)
        return 1
    except (SimulationError, ValueError, OSError) as e:
        print(f"❌ {e}", file=sys.stderr)
        return 1


if __name__ == '__main__':
    sys.exit(main())
