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

import argparse
import os
import sys
from collections import defaultdict
from typing import List

import pandas as pd

BASE_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.append(BASE_DIR)

from som_dsa.cli import BENCH_COLUMNS  # noqa: E402


def read_bench_dir(bench_dir):
    rows = pd.read_csv(os.path.join(bench_dir, 'bench.csv'))
    missing = sorted(set(BENCH_COLUMNS) - set(rows.columns))
    if missing:
        raise ValueError(f'{bench_dir}/bench.csv is missing column(s): {", ".join(missing)}')
    return rows.assign(run=os.path.basename(os.path.normpath(bench_dir)))


def display_unfinished_runs(run_list, message):
    if run_list:
        print(f'\n{message}:')
        for reason, runs in run_list.items():
            print(f'{reason}: {" ".join(runs)}')


def gather_bench_results(bench_dirs: List[str]) -> pd.DataFrame:
    """Mean gap and optimum-match rate per run, density and method over several bench output directories."""
    unfinished = defaultdict(list)
    frames = []
    for bench_dir in bench_dirs:
        results_file = os.path.join(bench_dir, 'bench.csv')
        if not os.path.isfile(results_file) or os.path.getsize(results_file) == 0:
            unfinished['missing bench.csv' if not os.path.isfile(results_file) else 'empty bench.csv'].append(bench_dir)
            continue
        frames.append(read_bench_dir(bench_dir))

    display_unfinished_runs(unfinished, 'Unfinished Runs')
    if not frames:
        return pd.DataFrame(columns=['run', 'density', 'method', 'instances', 'mean_gap', 'optimum_match_rate'])

    rows = pd.concat(frames, ignore_index=True)
    rows['optimum_match'] = rows['optimal_gap'] == 0
    table = (
        rows.groupby(['run', 'density', 'method'], sort=True)
        .agg(
            instances=('instance', 'nunique'),
            mean_gap=('optimal_gap', 'mean'),
            optimum_match_rate=('optimum_match', 'mean'),
        )
        .reset_index()
    )
    return table


if __name__ == '__main__':
    parser = argparse.ArgumentParser()
    parser.add_argument('bench_dirs', nargs='+', help='output directories of `run_som_dsa.py bench`')
    parser.add_argument('-o', '--output', default=None, help='optional CSV path for the combined table')
    args = parser.parse_args()

    for bench_dir in args.bench_dirs:
        if not os.path.isdir(bench_dir):
            raise NotADirectoryError(f'Invalid bench path: {bench_dir}')

    table = gather_bench_results(args.bench_dirs)
    print(table.to_string(index=False))
    if args.output is not None:
        table.to_csv(args.output, index=False)
        print(f'[gather_bench_results] Table written to {args.output}')
