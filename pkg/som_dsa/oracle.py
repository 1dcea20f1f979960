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

"""Exact, greedy and random baselines used to score the SOM heuristic."""

import itertools
import time
from dataclasses import dataclass
from typing import Any, Dict, List, Optional

import numpy as np
from scipy.special import comb

from . import som
from .errors import SearchSpaceTooLargeError
from .model import NetworkInstance, build_proximity, channel_separation, cost, fingerprint, is_feasible
from .utils import get_logger

logger = get_logger(__name__)

METHODS = ['exact', 'greedy', 'random', 'som']
DEFAULT_MAX_SEARCH_SPACE = 10**7


@dataclass
class SolveReport:
    assignment: np.ndarray
    cost: float
    method: str
    elapsed_ms: float
    fingerprint: str
    converged: bool = True
    outer_steps: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            'assignment': self.assignment.tolist(),
            'cost': float(self.cost),
            'converged': bool(self.converged),
            'outer_steps': int(self.outer_steps),
            'method': self.method,
            'elapsed_ms': float(self.elapsed_ms),
            'fingerprint': self.fingerprint,
        }


def _report(
    instance: NetworkInstance,
    assignment: np.ndarray,
    method: str,
    start_time: float,
    converged: bool = True,
    outer_steps: int = 0,
) -> SolveReport:
    elapsed_ms = (time.perf_counter() - start_time) * 1000
    if not is_feasible(assignment, instance.demand):
        raise RuntimeError(f'{method} solver returned an infeasible assignment')

    # cost is recomputed independently of the solver
    return SolveReport(
        assignment=assignment,
        cost=float(cost(assignment, build_proximity(instance))),
        method=method,
        elapsed_ms=elapsed_ms,
        fingerprint=fingerprint(instance),
        converged=converged,
        outer_steps=outer_steps,
    )


def search_space_size(instance: NetworkInstance) -> int:
    """Number of feasible assignments: prod_n binom(C, R[n])."""
    size = 1
    for demand in instance.demand:
        size *= int(comb(instance.num_channels, int(demand), exact=True))
    return size


def _subset_indicators(num_channels: int, demand: int) -> np.ndarray:
    """Rows are the indicator vectors of every `demand`-subset of channels, in lexicographic order."""
    subsets = list(itertools.combinations(range(num_channels), demand))
    indicators = np.zeros((len(subsets), num_channels), dtype=np.int64)
    for row, subset in enumerate(subsets):
        indicators[row, list(subset)] = 1
    return indicators


def _expand_pair_table(table: np.ndarray, n: int, k: int, axis_of: Dict[int, int], ndim: int) -> np.ndarray:
    shape = [1] * ndim
    if n in axis_of:
        shape[axis_of[n]] = table.shape[0]
    if k in axis_of:
        shape[axis_of[k]] = table.shape[1]
    if n in axis_of and k in axis_of and axis_of[n] > axis_of[k]:
        table = table.T
    return table.reshape(shape)


def exact_solve(instance: NetworkInstance, max_search_space: int = DEFAULT_MAX_SEARCH_SPACE) -> SolveReport:
    """Global optimum by enumerating every feasible assignment.

    The cost of the whole grid of per-SC subset choices is assembled from pairwise subset-cost tables and
    the first minimum in enumeration order (per-SC subsets in lexicographic order) is kept.
    """
    size = search_space_size(instance)
    if size > max_search_space:
        raise SearchSpaceTooLargeError(size, max_search_space)

    start_time = time.perf_counter()
    S, C = instance.shape
    proximity = build_proximity(instance)
    separation = channel_separation(C)
    indicators = [_subset_indicators(C, int(demand)) for demand in instance.demand]

    # SCs with a single option (R = 0 or R = C) do not span a grid axis
    free = [n for n in range(S) if len(indicators[n]) > 1]
    axis_of = {n: axis for axis, n in enumerate(free)}
    grid_shape = tuple(len(indicators[n]) for n in free)

    total = np.zeros(grid_shape, dtype=proximity.dtype)
    for n, k in itertools.permutations(range(S), 2):
        pair_cost = proximity[n, k][separation]
        if not pair_cost.any():
            continue
        table = indicators[n] @ pair_cost @ indicators[k].T
        total += _expand_pair_table(table, n, k, axis_of, len(free))

    choice = np.unravel_index(int(np.argmin(total)), grid_shape)
    assignment = np.stack([indicators[n][choice[axis_of[n]] if n in axis_of else 0] for n in range(S)])
    logger.debug(f'Exact search over {size} assignments, optimum {total[choice]}')

    return _report(instance, assignment, 'exact', start_time)


def greedy_solve(instance: NetworkInstance) -> SolveReport:
    """SCs in descending difficulty pick the channels with the lowest marginal cost against earlier picks."""
    start_time = time.perf_counter()
    S, C = instance.shape
    proximity = build_proximity(instance)
    rho = som.difficulty_rho(instance)

    assignment = np.zeros((S, C), dtype=np.int64)
    for n in sorted(range(S), key=lambda n: (-rho[n], n)):
        marginal = som.objective_row(assignment, proximity, n)
        assignment[n, np.argsort(marginal, kind='stable')[: int(instance.demand[n])]] = 1

    return _report(instance, assignment, 'greedy', start_time)


def random_solve(instance: NetworkInstance, seed: int = 0) -> SolveReport:
    start_time = time.perf_counter()
    rng = np.random.default_rng(seed)
    assignment = np.zeros(instance.shape, dtype=np.int64)
    for n, demand in enumerate(instance.demand):
        assignment[n, rng.choice(instance.num_channels, size=int(demand), replace=False)] = 1

    return _report(instance, assignment, 'random', start_time)


def som_solve(instance: NetworkInstance, config: Optional[som.SolverConfig] = None) -> SolveReport:
    start_time = time.perf_counter()
    result = som.solve(instance, config)
    return _report(instance, result.assignment, 'som', start_time, result.converged, result.outer_steps)


def run_method(
    method: str,
    instance: NetworkInstance,
    config: Optional[som.SolverConfig] = None,
    max_search_space: int = DEFAULT_MAX_SEARCH_SPACE,
) -> SolveReport:
    """Dispatch to one of `METHODS`. The random baseline and the SOM take their seed from `config`."""
    config = config or som.SolverConfig()
    if method == 'exact':
        return exact_solve(instance, max_search_space)
    elif method == 'greedy':
        return greedy_solve(instance)
    elif method == 'random':
        return random_solve(instance, config.seed)
    elif method == 'som':
        return som_solve(instance, config)
    else:
        raise ValueError(f'Unsupported method: {method}')


def run_methods(
    instance: NetworkInstance,
    methods: List[str],
    config: Optional[som.SolverConfig] = None,
    max_search_space: int = DEFAULT_MAX_SEARCH_SPACE,
) -> List[SolveReport]:
    return [run_method(method, instance, config, max_search_space) for method in methods]
