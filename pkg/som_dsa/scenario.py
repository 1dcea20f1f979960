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

"""Instance generation, PU opportunity geometry, cooperative sensing and the event streams driving the simulator."""

import math
import os
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, ClassVar, Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import bisect

from .errors import ConfigError, EventStreamError, ShapeError
from .model import Geometry, NetworkInstance, interference_from_geometry
from .utils import get_logger, read_jsonl, write_jsonl

logger = get_logger(__name__)

PU_ROLES = ('transmitter', 'receiver')
UNIT_SQUARE_DIAMETER = math.sqrt(2.0)


@dataclass(frozen=True)
class PrimaryUser:
    pu_id: str
    position: Tuple[float, float]
    role: str
    active_channel: Optional[int]
    r_tx: float
    r_rx: float

    def __post_init__(self):
        if self.role not in PU_ROLES:
            raise ValueError(f'PU role must be one of {PU_ROLES}, got {self.role}')
        if not (self.r_tx > 0 and self.r_rx > 0):
            raise ValueError(f'PU protection radii must be positive, got r_tx={self.r_tx}, r_rx={self.r_rx}')


# Instance generation
# ===================


def pair_distance_cdf(r: float) -> float:
    """P(|X - Y| <= r) for X, Y independent and uniform in the unit square."""
    if r <= 0:
        return 0.0
    if r <= 1:
        return math.pi * r**2 - 8 * r**3 / 3 + r**4 / 2
    if r < UNIT_SQUARE_DIAMETER:
        return (
            1 / 3
            - 2 * r**2
            - r**4 / 2
            + 4 / 3 * (2 * r**2 + 1) * math.sqrt(r**2 - 1)
            + 2 * r**2 * (math.asin(1 / r) - math.acos(1 / r))
        )
    return 1.0


def radius_for_density(density: float) -> float:
    """Interference radius at which the expected fraction of interfering SC pairs equals `density`."""
    if not 0 <= density <= 1:
        raise ConfigError(f'density must lie in [0, 1], got {density}')
    if density == 0:
        return 0.0
    if density == 1:
        return UNIT_SQUARE_DIAMETER
    return float(bisect(lambda r: pair_distance_cdf(r) - density, 0.0, UNIT_SQUARE_DIAMETER, xtol=1e-12))


def generate_instance(
    num_controllers: int,
    num_channels: int,
    density: float,
    demand_range: Tuple[int, int],
    seed: int,
) -> NetworkInstance:
    """Random geometric instance: SCs uniform in the unit square, demand uniform in `demand_range`.

    Args:
        num_controllers: number of SCs (S)
        num_channels: number of channels (C)
        density: expected fraction of interfering SC pairs
        demand_range: inclusive (min, max) demand per SC, within [0, C]
        seed: RNG seed

    Returns:
        instance with geometry and the binary interference tensor derived from it
    """
    if num_controllers < 1 or num_channels < 1:
        raise ConfigError(f'Need at least one SC and one channel (S={num_controllers}, C={num_channels})')
    rmin, rmax = demand_range
    if rmin > rmax:
        raise ConfigError(f'Empty demand range [{rmin}, {rmax}]')
    if rmin < 0 or rmax > num_channels:
        raise ConfigError(f'Demand range [{rmin}, {rmax}] must lie within [0, {num_channels}]')
    radius = radius_for_density(density)

    rng = np.random.default_rng(seed)
    positions = rng.uniform(0.0, 1.0, size=(num_controllers, 2))
    demand = rng.integers(rmin, rmax + 1, size=num_controllers)
    interference = interference_from_geometry(positions, radius, num_channels)
    logger.debug(f'Generated S={num_controllers}, C={num_channels} with radius {radius:.4f} for density {density}')

    return NetworkInstance(num_controllers, num_channels, demand, interference, Geometry(positions, radius))


# Spectrum opportunities and sensing
# ==================================


def identify_opportunities(
    tx_position: Sequence[float],
    rx_position: Sequence[float],
    primary_users: Sequence[PrimaryUser],
    num_channels: int,
) -> FrozenSet[int]:
    """Channels an SU link can use without harming active PUs.

    Channel m is lost if an active PU receiver on m lies within its r_tx of the transmitting SC, or an
    active PU transmitter on m lies within its r_rx of the receiving SC.
    """
    active = [pu for pu in primary_users if pu.active_channel is not None]
    if not active:
        return frozenset(range(num_channels))

    channels = np.array([pu.active_channel for pu in active])
    if channels.min() < 0 or channels.max() >= num_channels:
        raise ValueError(f'PU active channels must lie in [0, {num_channels})')

    positions = np.array([pu.position for pu in active], dtype=np.float64)
    is_receiver = np.array([pu.role == 'receiver' for pu in active])
    r_tx = np.array([pu.r_tx for pu in active])
    r_rx = np.array([pu.r_rx for pu in active])

    to_tx = np.linalg.norm(positions - np.asarray(tx_position, dtype=np.float64), axis=1)
    to_rx = np.linalg.norm(positions - np.asarray(rx_position, dtype=np.float64), axis=1)
    lost = (is_receiver & (to_tx <= r_tx)) | (~is_receiver & (to_rx <= r_rx))

    return frozenset(range(num_channels)) - frozenset(channels[lost].tolist())


def fuse_sensing(observations: Sequence[Sequence[bool]], num_channels: int) -> np.ndarray:
    """OR-fusion of per-SC busy bitmaps: a channel is available only if no SC observed it busy."""
    if len(observations) == 0:
        return np.ones(num_channels, dtype=bool)

    lengths = {len(busy) for busy in observations}
    if lengths != {num_channels}:
        raise ShapeError(f'Sensing bitmaps must all have length {num_channels}, got lengths {sorted(lengths)}')
    return ~np.any(np.asarray(observations, dtype=bool), axis=0)


# Events
# ======


@dataclass(frozen=True)
class Event(ABC):
    t: int

    KIND: ClassVar[str] = ''

    @abstractmethod
    def to_dict(self) -> Dict[str, Any]:
        pass


@dataclass(frozen=True)
class PuArrival(Event):
    pu_id: str = ''
    channel: int = 0
    position: Optional[Tuple[float, float]] = None
    radius: Optional[float] = None

    KIND: ClassVar[str] = 'pu_arrival'

    def to_dict(self):
        return {
            't': self.t,
            'kind': self.KIND,
            'id': self.pu_id,
            'channel': self.channel,
            'position': list(self.position) if self.position is not None else None,
            'radius': self.radius,
        }


@dataclass(frozen=True)
class PuDeparture(Event):
    ref: str = ''

    KIND: ClassVar[str] = 'pu_departure'

    def to_dict(self):
        return {'t': self.t, 'kind': self.KIND, 'ref': self.ref}


@dataclass(frozen=True)
class DemandChange(Event):
    sc: int = 0
    demand: int = 0

    KIND: ClassVar[str] = 'demand_change'

    def to_dict(self):
        return {'t': self.t, 'kind': self.KIND, 'sc': self.sc, 'demand': self.demand}


@dataclass(frozen=True)
class SensingReport(Event):
    busy: Tuple[Tuple[bool, ...], ...] = field(default_factory=tuple)

    KIND: ClassVar[str] = 'sensing'

    def to_dict(self):
        return {'t': self.t, 'kind': self.KIND, 'busy': [[int(x) for x in row] for row in self.busy]}


EVENT_TYPES = {cls.KIND: cls for cls in (PuArrival, PuDeparture, DemandChange, SensingReport)}


def _whole(value: Any, name: str) -> int:
    number = float(value)
    if not number.is_integer():
        raise ValueError(f'`{name}` must be an integer, got {value}')
    return int(number)


def event_from_dict(data: Dict[str, Any]) -> Event:
    kind = data.get('kind')
    if kind not in EVENT_TYPES:
        raise EventStreamError(f'Unsupported event kind: {kind}')
    if not isinstance(data.get('t'), int) or data['t'] < 0:
        raise EventStreamError(f'Event time must be a nonnegative integer, got {data.get("t")}')

    try:
        if kind == 'pu_arrival':
            position = data.get('position')
            radius = data.get('radius')
            return PuArrival(
                t=data['t'],
                pu_id=str(data['id']),
                channel=_whole(data['channel'], 'channel'),
                position=tuple(float(x) for x in position) if position is not None else None,
                radius=float(radius) if radius is not None else None,
            )
        elif kind == 'pu_departure':
            return PuDeparture(t=data['t'], ref=str(data['ref']))
        elif kind == 'demand_change':
            return DemandChange(t=data['t'], sc=_whole(data['sc'], 'sc'), demand=_whole(data['demand'], 'demand'))
        else:
            return SensingReport(t=data['t'], busy=tuple(tuple(bool(x) for x in row) for row in data['busy']))
    except KeyError as e:
        raise EventStreamError(f'Event `{kind}` at t={data["t"]} is missing field {e}') from e
    except (TypeError, ValueError) as e:
        raise EventStreamError(f'Event `{kind}` at t={data["t"]} has a malformed field: {e}') from e


def check_event_order(events: Sequence[Event]):
    for previous, current in zip(events, events[1:]):
        if current.t < previous.t:
            raise EventStreamError(f'Event stream is not time-ordered: t={current.t} follows t={previous.t}')


def load_events(path: str) -> List[Event]:
    if not os.path.exists(path):
        raise FileNotFoundError(f'Invalid events path: {path}')
    events = [event_from_dict(line) for line in read_jsonl(path)]
    check_event_order(events)
    return events


def save_events(events: Sequence[Event], path: str):
    check_event_order(events)
    write_jsonl([event.to_dict() for event in events], path)
