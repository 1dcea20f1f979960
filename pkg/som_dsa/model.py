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
Problem instance, proximity-cost recursion and the interference cost function.

Shapes:
    demand R          (S,)
    interference I    (S, S, C)   I[n, k, m] > 0 if SC n and SC k conflict on channel m
    proximity P       (S, S, C)   P[n, k, d] is the cost of SC n and SC k using channels d apart
    assignment A      (S, C)      A[n, m] = 1 if SC n holds channel m
"""

import json
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .errors import EmptyInstanceError, InstanceError, InstanceShapeError
from .utils import get_logger, sha256_fingerprint

logger = get_logger(__name__)

INSTANCE_FIELDS = ('S', 'C', 'R', 'I', 'geometry')
GEOMETRY_FIELDS = ('positions', 'radius')


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


def _integral(values: Any, name: str) -> np.ndarray:
    """`values` as an int64 array, rejecting anything that is not made of whole numbers."""
    try:
        array = np.asarray(values, dtype=np.float64)
    except (TypeError, ValueError) as e:
        raise InstanceError(f'Field `{name}` must hold numbers: {e}') from e
    if not np.all(np.isfinite(array)) or not np.all(np.mod(array, 1) == 0):
        raise InstanceError(f'Field `{name}` must hold integers, got {values}')
    return array.astype(np.int64)


def _integral_scalar(value: Any, name: str) -> int:
    array = _integral(value, name)
    if array.ndim != 0:
        raise InstanceError(f'Field `{name}` must be a single integer, got {value}')
    return int(array)


def _geometry_from_dict(data: Any) -> 'Geometry':
    if not isinstance(data, dict):
        raise InstanceError(f'Field `geometry` must be an object, got {data}')
    unknown = sorted(set(data) - set(GEOMETRY_FIELDS))
    if unknown:
        raise InstanceError(f'Unknown geometry field(s): {", ".join(unknown)}')
    missing = [key for key in GEOMETRY_FIELDS if key not in data]
    if missing:
        raise InstanceError(f'Missing geometry field(s): {", ".join(missing)}')
    try:
        return Geometry(positions=data['positions'], radius=data['radius'])
    except (TypeError, ValueError) as e:
        raise InstanceError(f'Invalid geometry: {e}') from e


@dataclass(frozen=True)
class Geometry:
    """Planar SC placement used to synthesize the interference tensor."""

    positions: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, 'positions', _frozen(np.asarray(self.positions, dtype=np.float64).reshape(-1, 2)))
        object.__setattr__(self, 'radius', float(self.radius))

    def to_dict(self) -> Dict[str, Any]:
        return {'positions': self.positions.tolist(), 'radius': self.radius}


@dataclass(frozen=True)
class NetworkInstance:
    num_controllers: int
    num_channels: int
    demand: np.ndarray
    interference: np.ndarray
    geometry: Optional[Geometry] = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, 'num_controllers', int(self.num_controllers))
        object.__setattr__(self, 'num_channels', int(self.num_channels))
        object.__setattr__(self, 'demand', _frozen(np.asarray(self.demand, dtype=np.int64)))
        object.__setattr__(self, 'interference', _frozen(np.asarray(self.interference, dtype=np.int64)))

        S, C = self.num_controllers, self.num_channels
        if S < 1 or C < 1:
            raise EmptyInstanceError(f'Instance needs at least one SC and one channel (S={S}, C={C})')
        if self.demand.shape != (S,):
            raise InstanceShapeError(f'Demand vector has shape {self.demand.shape}, expected ({S},)')
        if self.interference.shape != (S, S, C):
            raise InstanceShapeError(f'Interference tensor has shape {self.interference.shape}, expected {(S, S, C)}')
        if self.geometry is not None and self.geometry.positions.shape[0] != S:
            raise InstanceShapeError(f'Geometry has {self.geometry.positions.shape[0]} positions, expected {S}')

    @property
    def shape(self):
        return self.num_controllers, self.num_channels

    def with_demand(self, demand: Sequence[int]) -> 'NetworkInstance':
        return NetworkInstance(self.num_controllers, self.num_channels, demand, self.interference, self.geometry)

    def select_channels(self, channels: Sequence[int]) -> 'NetworkInstance':
        """Sub-instance restricted to `channels` with demands capped at the remaining channel count."""
        channels = np.asarray(channels, dtype=np.int64)
        demand = np.minimum(self.demand, len(channels))
        return NetworkInstance(
            self.num_controllers, len(channels), demand, self.interference[:, :, channels], self.geometry
        )

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'NetworkInstance':
        """Build an instance from the JSON schema. Rejects unknown fields, non-integer values and invariant
        violations."""
        unknown = sorted(set(data) - set(INSTANCE_FIELDS))
        if unknown:
            raise InstanceError(f'Unknown instance field(s): {", ".join(unknown)}')
        for key in ('S', 'C', 'R'):
            if key not in data:
                raise InstanceError(f'Missing instance field: {key}')

        geometry = None
        if data.get('geometry') is not None:
            geometry = _geometry_from_dict(data['geometry'])

        S, C = _integral_scalar(data['S'], 'S'), _integral_scalar(data['C'], 'C')
        demand = _integral(data['R'], 'R')
        if data.get('I') is not None:
            interference = _integral(data['I'], 'I')
        elif geometry is not None:
            interference = interference_from_geometry(geometry.positions, geometry.radius, C)
            logger.debug(f'Derived interference from {S} positions with radius {geometry.radius}')
        else:
            raise InstanceError('Instance needs either `I` or `geometry`')

        instance = cls(S, C, demand, interference, geometry)
        violations = validate(instance)
        if violations:
            raise InstanceError('Invalid instance', violations)
        return instance

    def to_dict(self) -> Dict[str, Any]:
        return {
            'S': self.num_controllers,
            'C': self.num_channels,
            'R': self.demand.tolist(),
            'I': self.interference.tolist(),
            'geometry': self.geometry.to_dict() if self.geometry is not None else None,
        }


def load_instance(path: str) -> NetworkInstance:
    if not os.path.exists(path):
        raise FileNotFoundError(f'Invalid instance path: {path}')
    with open(path) as f:
        return NetworkInstance.from_dict(json.load(f))


def save_instance(instance: NetworkInstance, path: str):
    with open(path, 'w') as f:
        f.write(json.dumps(instance.to_dict()) + '\n')


def fingerprint(instance: NetworkInstance) -> str:
    return sha256_fingerprint(instance.to_dict())


def validate(instance: NetworkInstance) -> List[str]:
    """Collect every invariant violation of the instance (empty list if valid).

    Coordinates in the messages are 1-based.
    """
    violations = []
    I = instance.interference
    R = instance.demand
    C = instance.num_channels

    for n, k, m in np.argwhere(I < 0):
        violations.append(f'negative interference at ({n + 1},{k + 1},{m + 1})')
    for n in np.flatnonzero(R < 0):
        violations.append(f'negative demand {R[n]} at SC {n + 1}')
    for n, m in np.argwhere(np.diagonal(I, axis1=0, axis2=1).T != 0):
        violations.append(f'nonzero diagonal at ({n + 1},{n + 1},{m + 1})')
    for n, k, m in np.argwhere(I != I.transpose(1, 0, 2)):
        if n < k:
            violations.append(f'asymmetric interference at ({n + 1},{k + 1},{m + 1})')
    for n in np.flatnonzero(R > C):
        violations.append(f'demand {R[n]} exceeds channels {C} at SC {n + 1}')

    return violations


def interference_from_geometry(positions: Union[np.ndarray, Sequence], radius: float, num_channels: int) -> np.ndarray:
    """Binary, channel-uniform interference between SCs closer than `radius`.

    Args:
        positions: SC positions of shape (S, 2)
        radius: interference radius (a radius of 0 yields no interference)
        num_channels: number of channels C

    Returns:
        interference tensor of shape (S, S, C)
    """
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
    if positions.shape[0] < 1:
        raise EmptyInstanceError('Cannot build interference for an empty set of positions')
    if radius < 0:
        raise ValueError(f'Interference radius must be nonnegative, got {radius}')

    S = positions.shape[0]
    distances = squareform(pdist(positions)) if S > 1 else np.zeros((1, 1))
    conflict = (distances <= radius) & ~np.eye(S, dtype=bool)
    return np.repeat(conflict[:, :, None], num_channels, axis=2).astype(np.int64)


def channel_separation(num_channels: int) -> np.ndarray:
    channels = np.arange(num_channels)
    return np.abs(channels[:, None] - channels[None, :])


def build_proximity(instance: NetworkInstance) -> np.ndarray:
    """Proximity tensor P of shape (S, S, C).

    P[n, k, 0] is the co-channel severity max_m I[n, k, m] and every further channel of separation
    lowers the cost by one: P[n, k, d] = max(0, P[n, k, d - 1] - 1).
    """
    I = instance.interference
    co_channel = I.max(axis=2)
    np.fill_diagonal(co_channel, 0)

    proximity = np.zeros_like(I)
    proximity[:, :, 0] = co_channel
    for d in range(1, instance.num_channels):
        proximity[:, :, d] = np.maximum(0, proximity[:, :, d - 1] - 1)
    proximity.setflags(write=False)
    return proximity


def cost(assignment: np.ndarray, proximity: np.ndarray) -> Union[int, float]:
    """Interference cost f(A) over ordered pairs of active assignments.

    Both directions of a conflicting pair are counted. Integer inputs give an exact integer result.
    """
    assignment = np.asarray(assignment)
    if not np.issubdtype(assignment.dtype, np.floating):
        assignment = assignment.astype(np.int64)
    S, C = assignment.shape
    if proximity.shape != (S, S, C):
        raise InstanceShapeError(f'Assignment of shape {assignment.shape} does not match proximity {proximity.shape}')

    pair_cost = proximity[:, :, channel_separation(C)]  # (S, S, C, C) indexed [n, k, m, j]
    return np.einsum('nm,nkmj,kj->', assignment, pair_cost, assignment).item()


def is_feasible(assignment: np.ndarray, demand: np.ndarray) -> bool:
    assignment = np.asarray(assignment)
    return bool(np.isin(assignment, (0, 1)).all() and np.array_equal(assignment.sum(axis=1), np.asarray(demand)))
