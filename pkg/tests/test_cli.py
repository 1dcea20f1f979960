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

import json

import pandas as pd
import pytest

from som_dsa import cli
from som_dsa.model import save_instance
from som_dsa.scenario import PuArrival, PuDeparture, save_events


@pytest.fixture
def instance_file(tmp_path):
    path = tmp_path / 'inst.json'
    assert cli.main(['gen', '--s', '5', '--c', '4', '--density', '0.3', '--seed', '7', '-o', str(path)]) == 0
    return path


def test_gen(capsys, instance_file):
    data = json.loads(instance_file.read_text())
    manifest = json.loads(instance_file.with_name('inst.manifest.json').read_text())

    assert data['S'] == 5
    assert data['C'] == 4
    assert manifest['command'] == 'gen'
    assert manifest['fingerprint'] in capsys.readouterr().out
    assert manifest['config']['scenario']['density'] == 0.3


def test_gen_is_deterministic(instance_file, tmp_path):
    again = tmp_path / 'again.json'
    cli.main(['gen', '--s', '5', '--c', '4', '--density', '0.3', '--seed', '7', '-o', str(again)])
    assert again.read_bytes() == instance_file.read_bytes()


def test_gen_rejects_density_out_of_range(tmp_path):
    with pytest.raises(SystemExit) as excinfo:
        cli.main(['gen', '--s', '5', '--c', '4', '--density', '1.5', '-o', str(tmp_path / 'x.json')])
    assert excinfo.value.code != 0


def test_gen_clamps_default_rmax_to_channels(tmp_path):
    path = tmp_path / 'narrow.json'
    assert cli.main(['gen', '--s', '5', '--c', '1', '-o', str(path)]) == 0

    assert json.loads(path.read_text())['R'] == [1] * 5
    manifest = json.loads((tmp_path / 'narrow.manifest.json').read_text())
    assert manifest['config']['scenario']['rmax'] == 1


def test_gen_keeps_explicit_rmax(tmp_path):
    assert cli.main(['gen', '--s', '5', '--c', '1', '--rmax', '2', '-o', str(tmp_path / 'x.json')]) == 1


def test_solve_som(instance_file, tmp_path):
    output = tmp_path / 'som'
    code = cli.main(['solve', '-i', str(instance_file), '--method', 'som', '--seed', '0', '-o', str(output)])
    result = json.loads((output / 'result.json').read_text())
    trace = pd.read_csv(output / 'trace.csv')

    assert code == (0 if result['converged'] else 2)
    assert result['method'] == 'som'
    assert len(trace) >= 1
    assert json.loads((output / 'manifest.json').read_text())['seed'] == 0


def test_solve_som_is_deterministic(instance_file, tmp_path):
    for name in ('first', 'second'):
        cli.main(['solve', '-i', str(instance_file), '--seed', '3', '-o', str(tmp_path / name)])

    for filename in ('result.json', 'trace.csv'):
        assert (tmp_path / 'first' / filename).read_bytes() == (tmp_path / 'second' / filename).read_bytes()


def test_solve_exact_matches_som_schema(instance_file, tmp_path):
    cli.main(['solve', '-i', str(instance_file), '--method', 'som', '-o', str(tmp_path / 'som')])
    assert cli.main(['solve', '-i', str(instance_file), '--method', 'exact', '-o', str(tmp_path / 'exact')]) == 0

    som_cost = json.loads((tmp_path / 'som' / 'result.json').read_text())['cost']
    exact_cost = json.loads((tmp_path / 'exact' / 'result.json').read_text())['cost']
    assert exact_cost <= som_cost


def test_solve_exact_over_guard(instance_file, tmp_path, capsys):
    code = cli.main(
        ['solve', '-i', str(instance_file), '--method', 'exact', '--max-search-space', '2', '-o', str(tmp_path / 'x')]
    )
    assert code == 1
    assert 'bound of 2' in capsys.readouterr().out


def test_solve_reports_non_convergence(tmp_path, clique_instance):
    path = tmp_path / 'clique.json'
    save_instance(clique_instance, str(path))
    code = cli.main(['solve', '-i', str(path), '--max-outer', '1', '--tol', '1e-12', '-o', str(tmp_path / 'out')])
    assert code == 2


def test_solve_malformed_instance(tmp_path):
    path = tmp_path / 'bad.json'
    path.write_text('{"S": 1, "C": 3, "R": [5], "I": [[[0, 0, 0]]]}')
    assert cli.main(['solve', '-i', str(path), '-o', str(tmp_path / 'out')]) == 1


def test_solve_missing_instance(tmp_path):
    assert cli.main(['solve', '-i', str(tmp_path / 'missing.json'), '-o', str(tmp_path / 'out')]) == 1


@pytest.mark.parametrize(
    'instance',
    [
        '{"S": 2, "C": 2, "R": [1, 1], "geometry": {"positions": [[0, 0], [0.1, 0]]}}',
        '{"S": 2, "C": 2, "R": [1, 1], "geometry": {"radius": 0.5}}',
        '{"S": 2, "C": 2, "R": [1.5, 1], "I": [[[0, 0], [1, 1]], [[1, 1], [0, 0]]]}',
    ],
)
def test_solve_rejects_incomplete_instance(tmp_path, capsys, instance):
    path = tmp_path / 'bad.json'
    path.write_text(instance)
    assert cli.main(['solve', '-i', str(path), '-o', str(tmp_path / 'out')]) == 1
    assert '[cli.solve] Error:' in capsys.readouterr().out


def test_simulate(instance_file, tmp_path):
    events = tmp_path / 'events.jsonl'
    save_events([PuArrival(t=5, pu_id='p', channel=2), PuDeparture(t=9, ref='p')], str(events))
    output = tmp_path / 'sim'
    code = cli.main(['simulate', '-i', str(instance_file), '-e', str(events), '--seed', '0', '-o', str(output)])

    metrics = pd.read_csv(output / 'metrics.csv')
    final = json.loads((output / 'final.json').read_text())
    assert code in (0, 2)
    assert list(metrics.columns) == ['tick', 'cost', 'satisfaction', 'churn']
    assert metrics['tick'].tolist() == [0, 5, 9]
    assert final['tick'] == 9
    assert (output / 'manifest.json').exists()


def test_simulate_empty_events(instance_file, tmp_path):
    events = tmp_path / 'events.jsonl'
    events.write_text('')
    cli.main(['simulate', '-i', str(instance_file), '-e', str(events), '--warm-start', '-o', str(tmp_path / 'sim')])

    assert len(pd.read_csv(tmp_path / 'sim' / 'metrics.csv')) == 1
    manifest = json.loads((tmp_path / 'sim' / 'manifest.json').read_text())
    assert manifest['config']['simulation']['warm_start'] is True


def test_simulate_unordered_events(instance_file, tmp_path):
    events = tmp_path / 'events.jsonl'
    events.write_text('{"t": 5, "kind": "pu_departure", "ref": "a"}\n{"t": 2, "kind": "pu_departure", "ref": "b"}\n')
    assert cli.main(['simulate', '-i', str(instance_file), '-e', str(events), '-o', str(tmp_path / 'sim')]) == 1


def test_simulate_rejects_non_numeric_event_field(instance_file, tmp_path, capsys):
    events = tmp_path / 'events.jsonl'
    events.write_text('{"t": 1, "kind": "demand_change", "sc": 0, "demand": "many"}\n')
    assert cli.main(['simulate', '-i', str(instance_file), '-e', str(events), '-o', str(tmp_path / 'sim')]) == 1
    assert '[cli.simulate] Error:' in capsys.readouterr().out


def test_bench(tmp_path):
    output = tmp_path / 'bench'
    code = cli.main(['bench', '--s', '3', '--c', '4', '--rmax', '2', '--seeds', '100', '-o', str(output)])
    rows = pd.read_csv(output / 'bench.csv')
    summary = pd.read_csv(output / 'summary.csv')

    assert code == 0
    assert len(rows) == 400
    assert list(rows.columns) == cli.BENCH_COLUMNS
    assert (rows[rows['method'] == 'exact']['optimal_gap'] == 0).all()
    assert (rows['optimal_gap'] >= 0).all()
    assert list(summary.columns) == cli.SUMMARY_COLUMNS
    assert summary['optimum_match_rate'].between(0, 1).all()


def test_bench_workers_preserve_order(tmp_path):
    args = ['bench', '--s', '3', '--c', '3', '--rmax', '2', '--seeds', '4', '--density', '0.3', '0.7']
    cli.main(args + ['-o', str(tmp_path / 'serial')])
    cli.main(args + ['--workers', '2', '-o', str(tmp_path / 'parallel')])

    serial = pd.read_csv(tmp_path / 'serial' / 'bench.csv').drop(columns='elapsed_ms')
    parallel = pd.read_csv(tmp_path / 'parallel' / 'bench.csv').drop(columns='elapsed_ms')
    assert serial.equals(parallel)
    assert sorted(serial['density'].unique().tolist()) == [0.3, 0.7]


def test_manifest_path(tmp_path):
    assert cli.manifest_path(str(tmp_path)) == str(tmp_path / 'manifest.json')
    assert cli.manifest_path(str(tmp_path / 'inst.json')) == str(tmp_path / 'inst.manifest.json')


def _command_from_manifest(manifest, output):
    """Rebuild the argv of a recorded run, writing to `output` instead."""
    flags = {'densities': '--density'}
    arguments = {**manifest['args'], 'output': str(output)}
    argv = [arguments.pop('command')]
    for key, value in arguments.items():
        if value is None or value is False:
            continue
        flag = flags.get(key, '--' + key.replace('_', '-'))
        if value is True:
            argv.append(flag)
        elif isinstance(value, list):
            argv += [flag] + [str(item) for item in value]
        else:
            argv += [flag, str(value)]
    return argv


def test_gen_manifest_reproduces_instance(instance_file, tmp_path):
    manifest = json.loads(instance_file.with_name('inst.manifest.json').read_text())
    assert {'s', 'c', 'density', 'seed', 'rmin', 'rmax', 'config', 'output'} <= set(manifest['args'])

    rebuilt = tmp_path / 'rebuilt.json'
    assert cli.main(_command_from_manifest(manifest, rebuilt)) == 0
    assert rebuilt.read_bytes() == instance_file.read_bytes()


def test_simulate_manifest_reproduces_run(instance_file, tmp_path):
    events = tmp_path / 'events.jsonl'
    save_events([PuArrival(t=2, pu_id='p', channel=1), PuDeparture(t=6, ref='p')], str(events))
    first = tmp_path / 'first'
    cli.main(['simulate', '-i', str(instance_file), '-e', str(events), '--warm-start', '--seed', '4', '-o', str(first)])

    manifest = json.loads((first / 'manifest.json').read_text())
    assert manifest['args']['input'] == str(instance_file)
    assert manifest['args']['events'] == str(events)
    assert manifest['args']['warm_start'] is True

    second = tmp_path / 'second'
    cli.main(_command_from_manifest(manifest, second))
    for filename in ('metrics.csv', 'final.json'):
        assert (first / filename).read_bytes() == (second / filename).read_bytes()


def test_bench_manifest_records_family(tmp_path):
    output = tmp_path / 'bench'
    cli.main(['bench', '--s', '2', '--c', '3', '--seeds', '2', '--density', '0.3', '0.7', '-o', str(output)])

    manifest = json.loads((output / 'manifest.json').read_text())
    assert manifest['args']['s'] == 2
    assert manifest['args']['c'] == 3
    assert manifest['args']['densities'] == [0.3, 0.7]
    assert 'func' not in manifest['args']
