# SPDX-FileCopyrightText: Copyright (c) 2024 NVIDIA CORPORATION & AFFILIATES. All rights reserved.
# SPDX-License-Identifier: Apache-2.0
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
# http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""
Command-line surface: `gen`, `solve`, `simulate` and `bench`.

Every file output is accompanied by a run manifest that echoes the fully materialized config and every parsed
argument, so a run can be reproduced from the manifest alone. Exit codes: 0 ok, 1 error, 2 SOM did not converge.
"""

import argparse
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from tqdm import tqdm

from . import __version__, oracle, sim, som
from .errors import DegenerateDemandError, SearchSpaceTooLargeError, SomDsaError
from .model import fingerprint, load_instance, save_instance
from .scenario import generate_instance, load_events
from .utils import configure_logging, get_logger, load_config, sha256_fingerprint, write_json

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_CONVERGED = 2

BENCH_COLUMNS = ['instance', 'density', 'seed', 'method', 'cost', 'optimal_gap', 'converged', 'elapsed_ms']
SUMMARY_COLUMNS = [
    'method',
    'instances',
    'mean_cost',
    'mean_gap',
    'optimum_match_rate',
    'zero_cost_match_rate',
    'mean_elapsed_ms',
]


@dataclass
class RunManifest:
    command: str
    config: Dict[str, Any]
    seed: int
    version: str
    fingerprint: Optional[str]
    args: Dict[str, Any] = field(default_factory=dict)

    def write(self, output_path: str) -> str:
        path = manifest_path(output_path)
        write_json(asdict(self), path)
        return path


def run_arguments(args: argparse.Namespace) -> Dict[str, Any]:
    """Every parsed command-line argument, paths included."""
    return {key: value for key, value in vars(args).items() if key != 'func'}


def manifest_path(output_path: str) -> str:
    """`<dir>/manifest.json` for a directory output, `<stem>.manifest.json` for a file output."""
    if os.path.isdir(output_path):
        return os.path.join(output_path, 'manifest.json')
    return os.path.splitext(output_path)[0] + '.manifest.json'


def density_type(value: str) -> float:
    try:
        density = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f'density must be a number, got {value}')
    if not 0.0 <= density <= 1.0:
        raise argparse.ArgumentTypeError(f'density must lie in [0, 1], got {value}')
    return density


def _ensure_parent(path: str):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def resolve_config(args: argparse.Namespace) -> Dict[str, Dict[str, Any]]:
    """Load the YAML defaults (or `--config`) and overlay the flags that were given."""
    config = load_config(getattr(args, 'config', None))
    overrides = {
        ('solver', 'seed'): getattr(args, 'seed', None),
        ('solver', 'n_epochs'): getattr(args, 'n_epochs', None),
        ('solver', 'delta_w_tol'): getattr(args, 'tol', None),
        ('solver', 'max_outer_steps'): getattr(args, 'max_outer', None),
        ('solver', 'presentation_order'): getattr(args, 'presentation_order', None),
        ('scenario', 'rmin'): getattr(args, 'rmin', None),
        ('scenario', 'rmax'): getattr(args, 'rmax', None),
        ('oracle', 'max_search_space'): getattr(args, 'max_search_space', None),
        ('bench', 'densities'): getattr(args, 'densities', None),
        ('bench', 'seeds'): getattr(args, 'seeds', None),
        ('bench', 'workers'): getattr(args, 'workers', None),
    }
    for (section, key), value in overrides.items():
        if value is not None:
            config[section][key] = value
    if getattr(args, 'warm_start', False):
        config['simulation']['warm_start'] = True
    if getattr(args, 'density', None) is not None:
        config['scenario']['density'] = args.density
    if getattr(args, 'rmax', None) is None and getattr(args, 'c', None) is not None:
        config['scenario']['rmax'] = min(config['scenario']['rmax'], args.c)
    return config


# Commands
# ========


def cmd_gen(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    scenario = config['scenario']
    instance = generate_instance(
        args.s, args.c, scenario['density'], (scenario['rmin'], scenario['rmax']), seed=args.seed
    )

    _ensure_parent(args.output)
    save_instance(instance, args.output)
    instance_fingerprint = fingerprint(instance)
    RunManifest('gen', config, args.seed, __version__, instance_fingerprint, run_arguments(args)).write(args.output)

    print(f'[cli.gen] Instance written to {args.output}')
    print(instance_fingerprint)
    return EXIT_OK


def cmd_solve(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    solver_config = som.SolverConfig.from_dict(config['solver'])
    instance = load_instance(args.input)

    os.makedirs(args.output, exist_ok=True)
    if args.method == 'som':
        result = som.solve(instance, solver_config)
        instance_fingerprint, converged, cost = fingerprint(instance), result.converged, result.cost
        # timing is left out of the som result
        write_json(
            {**result.to_dict(), 'method': 'som', 'fingerprint': instance_fingerprint},
            os.path.join(args.output, 'result.json'),
        )
        result.trace_frame().to_csv(os.path.join(args.output, 'trace.csv'), index=False)
    else:
        report = oracle.run_method(args.method, instance, solver_config, config['oracle']['max_search_space'])
        instance_fingerprint, converged, cost = report.fingerprint, report.converged, report.cost
        write_json(report.to_dict(), os.path.join(args.output, 'result.json'))

    manifest_config = {**config, 'method': args.method}
    RunManifest(
        'solve', manifest_config, solver_config.seed, __version__, instance_fingerprint, run_arguments(args)
    ).write(args.output)
    print(f'[cli.solve] {args.method}: cost {cost}, results written to {args.output}')

    if not converged:
        logger.warning(f'{args.method} did not converge within {solver_config.max_outer_steps} schedule steps')
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    simulation_config = sim.SimulationConfig.from_dict(config)
    instance = load_instance(args.input)
    events = load_events(args.events)

    metrics, state = sim.run_simulation(instance, events, simulation_config)

    os.makedirs(args.output, exist_ok=True)
    sim.metrics_frame(metrics).to_csv(os.path.join(args.output, 'metrics.csv'), index=False)
    write_json(state.to_dict(), os.path.join(args.output, 'final.json'))
    RunManifest(
        'simulate', config, simulation_config.solver.seed, __version__, fingerprint(instance), run_arguments(args)
    ).write(args.output)
    print(f'[cli.simulate] {len(metrics)} solves over {len(events)} events, results written to {args.output}')

    return EXIT_OK if state.converged else EXIT_NOT_CONVERGED


def bench_instance(task: Dict[str, Any]) -> List[Dict[str, Any]]:
    """Generate one instance and run every method on it. Returns no rows for instances the bench skips."""
    instance = generate_instance(
        task['num_controllers'], task['num_channels'], task['density'], task['demand_range'], task['seed']
    )
    solver_config = som.SolverConfig.from_dict({**task['solver'], 'seed': task['seed']})
    try:
        reports = oracle.run_methods(instance, oracle.METHODS, solver_config, task['max_search_space'])
    except (SearchSpaceTooLargeError, DegenerateDemandError) as e:
        logger.info(f'Skipping instance {task["instance"]} (density {task["density"]}, seed {task["seed"]}): {e}')
        return []

    optimum = reports[0].cost
    return [
        {
            'instance': task['instance'],
            'density': task['density'],
            'seed': task['seed'],
            'method': report.method,
            'cost': report.cost,
            'optimal_gap': report.cost - optimum,
            'converged': report.converged,
            'elapsed_ms': report.elapsed_ms,
        }
        for report in reports
    ]


def summarize_bench(rows: pd.DataFrame) -> pd.DataFrame:
    """Per-method mean cost and gap, optimum-match rate, and match rate on instances whose optimum is 0."""
    optimum = rows[rows['method'] == 'exact'].set_index('instance')['cost']
    rows = rows.assign(optimum=rows['instance'].map(optimum))

    summary = []
    for method in oracle.METHODS:
        method_rows = rows[rows['method'] == method]
        if method_rows.empty:
            continue
        zero_optimum = method_rows[method_rows['optimum'] == 0]
        summary.append(
            [
                method,
                len(method_rows),
                method_rows['cost'].mean(),
                method_rows['optimal_gap'].mean(),
                np.mean(method_rows['optimal_gap'] == 0),
                np.mean(zero_optimum['cost'] == 0) if not zero_optimum.empty else float('nan'),
                method_rows['elapsed_ms'].mean(),
            ]
        )
    return pd.DataFrame(summary, columns=SUMMARY_COLUMNS)


def cmd_bench(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    bench, scenario = config['bench'], config['scenario']

    tasks = []
    for density in bench['densities']:
        for offset in range(bench['seeds']):
            tasks.append(
                {
                    'instance': len(tasks),
                    'density': density,
                    'seed': args.seed + offset,
                    'num_controllers': args.s,
                    'num_channels': args.c,
                    'demand_range': (scenario['rmin'], scenario['rmax']),
                    'solver': config['solver'],
                    'max_search_space': config['oracle']['max_search_space'],
                }
            )

    if bench['workers'] > 1:
        with ProcessPoolExecutor(max_workers=bench['workers']) as executor:
            results = list(tqdm(executor.map(bench_instance, tasks), total=len(tasks)))
    else:
        results = [bench_instance(task) for task in tqdm(tasks)]

    rows = pd.DataFrame([row for result in results for row in result], columns=BENCH_COLUMNS)
    summary = summarize_bench(rows)

    os.makedirs(args.output, exist_ok=True)
    rows.to_csv(os.path.join(args.output, 'bench.csv'), index=False)
    summary.to_csv(os.path.join(args.output, 'summary.csv'), index=False)
    family_fingerprint = sha256_fingerprint([task['seed'] for task in tasks] + list(bench['densities']))
    RunManifest('bench', config, args.seed, __version__, family_fingerprint, run_arguments(args)).write(
        args.output
    )

    print(f'[cli.bench] {len(rows)} rows over {rows["instance"].nunique()} instances, results in {args.output}')
    print(summary.to_string(index=False))
    return EXIT_OK


# Parser
# ======


def _add_solver_arguments(parser: argparse.ArgumentParser):
    parser.add_argument('--seed', type=int, default=None, help='solver seed (default: from config)')
    parser.add_argument('--n-epochs', dest='n_epochs', type=int, default=None, help='inner epochs per schedule step')
    parser.add_argument('--tol', type=float, default=None, help='convergence threshold on max |dW|')
    parser.add_argument('--max-outer', dest='max_outer', type=int, default=None, help='maximum schedule steps')
    parser.add_argument(
        '--presentation-order',
        dest='presentation_order',
        choices=som.PRESENTATION_ORDERS,
        default=None,
        help='order in which SCs are presented within an epoch',
    )
    parser.add_argument('--config', default=None, help='YAML file overriding configs/default.yaml')


def _add_family_arguments(parser: argparse.ArgumentParser):
    parser.add_argument('--s', type=int, required=True, help='number of SCs')
    parser.add_argument('--c', type=int, required=True, help='number of channels')
    parser.add_argument('--rmin', type=int, default=None, help='minimum demand per SC')
    parser.add_argument('--rmax', type=int, default=None, help='maximum demand per SC')
    parser.add_argument('--config', default=None, help='YAML file overriding configs/default.yaml')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='som_dsa', description='SOM-based dynamic spectrum allocation')
    subparsers = parser.add_subparsers(dest='command', required=True)

    gen = subparsers.add_parser('gen', help='generate a random geometric instance')
    _add_family_arguments(gen)
    gen.add_argument('--density', type=density_type, default=None, help='expected fraction of interfering pairs')
    gen.add_argument('--seed', type=int, default=0, help='generator seed')
    gen.add_argument('-o', '--output', required=True, help='path to the instance JSON')
    gen.set_defaults(func=cmd_gen)

    solve = subparsers.add_parser('solve', help='solve an instance')
    solve.add_argument('-i', '--input', required=True, help='path to the instance JSON')
    solve.add_argument('--method', choices=oracle.METHODS, default='som', help='solver to run')
    solve.add_argument('--max-search-space', dest='max_search_space', type=int, default=None, help='exact guard')
    solve.add_argument('-o', '--output', required=True, help='output directory')
    _add_solver_arguments(solve)
    solve.set_defaults(func=cmd_solve)

    simulate = subparsers.add_parser('simulate', help='run the dynamic re-allocation loop')
    simulate.add_argument('-i', '--input', required=True, help='path to the instance JSON')
    simulate.add_argument('-e', '--events', required=True, help='path to the events JSONL')
    simulate.add_argument('--warm-start', dest='warm_start', action='store_true', help='reuse weights across solves')
    simulate.add_argument('-o', '--output', required=True, help='output directory')
    _add_solver_arguments(simulate)
    simulate.set_defaults(func=cmd_simulate)

    bench = subparsers.add_parser('bench', help='compare all methods on a generated instance family')
    _add_family_arguments(bench)
    bench.add_argument(
        '--density', dest='densities', type=density_type, nargs='+', default=None, help='density grid'
    )
    bench.add_argument('--seeds', type=int, default=None, help='instances per density')
    bench.add_argument('--seed', type=int, default=0, help='seed of the first instance')
    bench.add_argument('--workers', type=int, default=None, help='worker processes')
    bench.add_argument('-o', '--output', required=True, help='output directory')
    bench.set_defaults(func=cmd_bench)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging()

    try:
        return args.func(args)
    except (SomDsaError, OSError, json.JSONDecodeError) as e:
        logger.error(str(e))
        print(f'[cli.{args.command}] Error: {e}')
        return EXIT_ERROR
