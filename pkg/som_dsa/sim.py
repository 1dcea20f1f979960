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
Dynamic re-allocation: events change PU activity and demand, the SOM re-solves on the channels that stay
available, and every re-solve is scored.
"""

import itertools
from dataclasses import dataclass, field, replace
from typing import Any, Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from . import som
from .errors import EventStreamError, UnknownPrimaryUserError
from .model import NetworkInstance, build_proximity, cost
from .scenario import DemandChange, Event, PuArrival, PuDeparture, SensingReport, check_event_order, fuse_sensing
from .utils import check_keys, get_logger

logger = get_logger(__name__)

METRICS_COLUMNS = ['tick', 'cost', 'satisfaction', 'churn']


@dataclass(frozen=True)
class SimulationConfig:
    solver: som.SolverConfig = field(default_factory=som.SolverConfig)
    warm_start: bool = False

    @classmethod
    def from_dict(cls, config: Dict[str, Dict[str, Any]]) -> 'SimulationConfig':
        """Build from the `solver` and `simulation` sections of a loaded config."""
        simulation = config.get('simulation', {})
        check_keys(simulation, ['warm_start'], 'simulation config')
        return cls(
            solver=som.SolverConfig.from_dict(config.get('solver', {})),
            warm_start=bool(simulation.get('warm_start', False)),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {'solver': self.solver.to_dict(), 'warm_start': self.warm_start}


@dataclass(frozen=True)
class Metrics:
    tick: int
    cost: float
    satisfaction: float
    churn: int
    reallocations: int


@dataclass(frozen=True)
class SimulationState:
    instance: NetworkInstance
    tick: int = 0
    active_pus: Tuple[PuArrival, ...] = ()
    sensed_busy: Optional[np.ndarray] = None  # (C,) channels reported busy by the fused sensing
    assignment: Optional[np.ndarray] = None  # (S, C)
    weights: Optional[np.ndarray] = None  # (S, C) SOM weights of the last solve, zero on removed channels
    flagged: FrozenSet[int] = frozenset()  # SCs holding a channel that became blocked
    converged: bool = True
    outer_steps: int = 0
    solved_allowed: Optional[np.ndarray] = None  # (S, C) availability the last solve saw
    solved_demand: Optional[np.ndarray] = None  # (S,) effective demand the last solve saw
    metrics: Tuple[Metrics, ...] = ()

    def to_dict(self) -> Dict[str, Any]:
        S, C = self.instance.shape
        assignment = self.assignment if self.assignment is not None else np.zeros((S, C), dtype=np.int64)
        return {
            'assignment': assignment.tolist(),
            'cost': float(cost(assignment, build_proximity(self.instance))),
            'converged': bool(self.converged),
            'outer_steps': int(self.outer_steps),
            'tick': int(self.tick),
            'demand': self.instance.demand.tolist(),
            'blocked': blocked_mask(self).astype(int).tolist(),
            'reallocations': int(sum(m.reallocations for m in self.metrics)),
        }


def metrics_frame(metrics: Sequence[Metrics]) -> pd.DataFrame:
    return pd.DataFrame([[getattr(m, column) for column in METRICS_COLUMNS] for m in metrics], columns=METRICS_COLUMNS)


def blocked_mask(state: SimulationState) -> np.ndarray:
    """(S, C) mask of channels an SC must not use.

    A PU with a position and radius blocks its channel for the SCs within the radius when the instance
    has geometry; otherwise it blocks the channel for every SC. Channels in the fused sensing report are
    blocked for every SC.
    """
    S, C = state.instance.shape
    geometry = state.instance.geometry
    blocked = np.zeros((S, C), dtype=bool)
    for pu in state.active_pus:
        if geometry is not None and pu.position is not None and pu.radius is not None:
            near = np.linalg.norm(geometry.positions - np.asarray(pu.position), axis=1) <= pu.radius
            blocked[near, pu.channel] = True
        else:
            blocked[:, pu.channel] = True

    if state.sensed_busy is not None:
        blocked[:, state.sensed_busy] = True
    return blocked


def apply_event(state: SimulationState, event: Event) -> SimulationState:
    """Apply one event without re-solving."""
    if event.t < state.tick:
        raise EventStreamError(f'Event at t={event.t} arrives after tick {state.tick}')

    S, C = state.instance.shape
    if isinstance(event, PuArrival):
        if not 0 <= event.channel < C:
            raise EventStreamError(f'PU {event.pu_id} arrives on channel {event.channel}, outside [0, {C})')
        if any(pu.pu_id == event.pu_id for pu in state.active_pus):
            raise EventStreamError(f'PU {event.pu_id} is already active')
        state = replace(state, active_pus=state.active_pus + (event,))
    elif isinstance(event, PuDeparture):
        remaining = tuple(pu for pu in state.active_pus if pu.pu_id != event.ref)
        if len(remaining) == len(state.active_pus):
            raise UnknownPrimaryUserError(f'Departure of unknown PU {event.ref} at t={event.t}')
        state = replace(state, active_pus=remaining)
    elif isinstance(event, DemandChange):
        if not 0 <= event.sc < S:
            raise EventStreamError(f'Demand change for unknown SC {event.sc}')
        if not 0 <= event.demand <= C:
            raise EventStreamError(f'Demand {event.demand} for SC {event.sc} outside [0, {C}]')
        demand = state.instance.demand.copy()
        demand[event.sc] = event.demand
        state = replace(state, instance=state.instance.with_demand(demand))
    elif isinstance(event, SensingReport):
        state = replace(state, sensed_busy=~fuse_sensing(event.busy, C))
    else:
        raise EventStreamError(f'Unsupported event: {event}')

    flagged = state.flagged
    if state.assignment is not None:
        holding = np.any(state.assignment.astype(bool) & blocked_mask(state), axis=1)
        flagged = flagged | frozenset(np.flatnonzero(holding).tolist())

    logger.debug(f'[t={event.t}] applied {event.KIND}, SCs flagged for reallocation: {sorted(flagged)}')
    return replace(state, tick=event.t, flagged=flagged)


def resolve(state: SimulationState, config: Optional[SimulationConfig] = None) -> SimulationState:
    """Re-solve on the available channels and record a metrics row.

    Globally blocked channels are removed from the instance, per-SC blocks are passed to the SOM as an
    availability mask, and every demand is capped at the number of channels the SC can still use. When
    availability and effective demand match the last solve, the current grant is kept as is.
    """
    config = config or SimulationConfig()
    instance = state.instance
    S, C = instance.shape

    allowed = ~blocked_mask(state)
    effective_demand = np.minimum(instance.demand, allowed.sum(axis=1))
    channels = np.flatnonzero(allowed.any(axis=0))

    unchanged = (
        state.assignment is not None
        and state.solved_allowed is not None
        and np.array_equal(state.solved_allowed, allowed)
        and np.array_equal(state.solved_demand, effective_demand)
    )

    assignment = np.zeros((S, C), dtype=np.int64)
    weights = np.zeros((S, C))
    converged, outer_steps = True, 0
    if unchanged:
        logger.debug(f'[t={state.tick}] availability and demand unchanged, keeping the current grant')
        assignment, weights = state.assignment, state.weights
        converged, outer_steps = state.converged, state.outer_steps
    elif effective_demand.sum() > 0:
        sub_instance = instance.select_channels(channels).with_demand(effective_demand)
        sub_allowed = allowed[:, channels]
        initial_weights, preferred = None, None
        if config.warm_start and state.weights is not None:
            initial_weights = state.weights[:, channels]
            preferred = state.assignment[:, channels]

        result = som.solve(
            sub_instance,
            config.solver,
            initial_weights=initial_weights,
            allowed=None if sub_allowed.all() else sub_allowed,
            preferred=preferred,
        )
        assignment[:, channels] = result.assignment
        weights[:, channels] = result.state.weights
        converged, outer_steps = result.converged, result.outer_steps

    total_demand = int(instance.demand.sum())
    satisfaction = float(effective_demand.sum() / total_demand) if total_demand > 0 else 1.0
    if state.assignment is None:
        churn, reallocations = 0, 0
    else:
        changed = assignment != state.assignment
        churn, reallocations = int(changed.sum()), int(changed.any(axis=1).sum())

    metrics = Metrics(
        tick=state.tick,
        cost=float(cost(assignment, build_proximity(instance))),
        satisfaction=satisfaction,
        churn=churn,
        reallocations=reallocations,
    )
    logger.info(
        f'[t={state.tick}] cost {metrics.cost}, satisfaction {metrics.satisfaction:.3f}, churn {metrics.churn}'
    )

    return replace(
        state,
        assignment=assignment,
        weights=weights,
        flagged=frozenset(),
        converged=converged,
        outer_steps=outer_steps,
        solved_allowed=allowed,
        solved_demand=effective_demand,
        metrics=state.metrics + (metrics,),
    )


def run_simulation(
    instance: NetworkInstance, events: Sequence[Event], config: Optional[SimulationConfig] = None
) -> Tuple[List[Metrics], SimulationState]:
    """Solve at t=0, then re-solve once per tick that carries events (simultaneous events are batched).

    Returns:
        metrics timeline (one row per solve), final state
    """
    check_event_order(events)
    config = config or SimulationConfig()

    batches = [(t, list(batch)) for t, batch in itertools.groupby(events, key=lambda event: event.t)]
    state = SimulationState(instance=instance)
    if batches and batches[0][0] == 0:
        for event in batches.pop(0)[1]:
            state = apply_event(state, event)
    state = resolve(state, config)

    for _, batch in batches:
        for event in batch:
            state = apply_event(state, event)
        state = resolve(state, config)

    return list(state.metrics), state
