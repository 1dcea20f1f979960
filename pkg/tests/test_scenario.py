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

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_array_equal

from som_dsa.errors import ConfigError, EventStreamError, ShapeError
from som_dsa.model import save_instance, validate
from som_dsa.scenario import (
    DemandChange,
    Event,
    PrimaryUser,
    PuArrival,
    PuDeparture,
    SensingReport,
    event_from_dict,
    fuse_sensing,
    generate_instance,
    identify_opportunities,
    load_events,
    pair_distance_cdf,
    radius_for_density,
    save_events,
)


def distance(a, b):
    return math.sqrt((a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2)


def reference_opportunities(tx_position, rx_position, primary_users, num_channels):
    channels = set(range(num_channels))
    for pu in primary_users:
        if pu.active_channel is None:
            continue
        if pu.role == 'receiver' and distance(pu.position, tx_position) <= pu.r_tx:
            channels.discard(pu.active_channel)
        if pu.role == 'transmitter' and distance(pu.position, rx_position) <= pu.r_rx:
            channels.discard(pu.active_channel)
    return channels


primary_users = st.lists(
    st.builds(
        PrimaryUser,
        pu_id=st.text(min_size=1, max_size=4),
        position=st.tuples(st.floats(0, 1), st.floats(0, 1)),
        role=st.sampled_from(['transmitter', 'receiver']),
        active_channel=st.one_of(st.none(), st.integers(0, 3)),
        r_tx=st.floats(0.01, 1.0),
        r_rx=st.floats(0.01, 1.0),
    ),
    max_size=6,
)


# Instance generation
# ===================


def test_pair_distance_cdf_bounds():
    assert pair_distance_cdf(0.0) == 0.0
    assert pair_distance_cdf(math.sqrt(2.0)) == 1.0
    assert pair_distance_cdf(1.0) == pytest.approx(math.pi - 8 / 3 + 1 / 2)


def test_pair_distance_cdf_monotone():
    values = [pair_distance_cdf(r) for r in np.linspace(0.0, 1.5, 200)]
    assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))


def test_radius_for_density():
    assert radius_for_density(0.0) == 0.0
    assert radius_for_density(1.0) == pytest.approx(math.sqrt(2.0))
    assert pair_distance_cdf(radius_for_density(0.3)) == pytest.approx(0.3, abs=1e-9)
    with pytest.raises(ConfigError):
        radius_for_density(1.5)


def test_generate_extreme_densities():
    empty = generate_instance(6, 3, 0.0, (1, 2), seed=1)
    full = generate_instance(6, 3, 1.0, (1, 2), seed=1)

    assert not empty.interference.any()
    assert_array_equal(full.interference[:, :, 0], 1 - np.eye(6, dtype=int))


def test_generate_is_deterministic(tmp_path):
    first, second = tmp_path / 'a.json', tmp_path / 'b.json'
    save_instance(generate_instance(5, 4, 0.3, (1, 2), seed=7), str(first))
    save_instance(generate_instance(5, 4, 0.3, (1, 2), seed=7), str(second))
    assert first.read_bytes() == second.read_bytes()


def test_generate_rejects_bad_ranges():
    with pytest.raises(ConfigError):
        generate_instance(3, 4, 0.3, (3, 2), seed=0)
    with pytest.raises(ConfigError):
        generate_instance(3, 4, 0.3, (1, 5), seed=0)
    with pytest.raises(ConfigError):
        generate_instance(0, 4, 0.3, (1, 2), seed=0)


@settings(max_examples=50, deadline=None)
@given(
    S=st.integers(1, 8),
    C=st.integers(1, 6),
    density=st.floats(0.0, 1.0),
    seed=st.integers(0, 2**16),
)
def test_generated_instances_are_valid(S, C, density, seed):
    instance = generate_instance(S, C, density, (0, C), seed)
    assert validate(instance) == []
    assert instance.demand.min() >= 0
    assert instance.demand.max() <= C


# Opportunities and sensing
# =========================


def test_no_primary_users():
    assert identify_opportunities((0, 0), (0.1, 0), [], 4) == frozenset(range(4))


def test_transmitter_near_receiver():
    pu = PrimaryUser('a', (0.2, 0.0), 'transmitter', 2, r_tx=0.5, r_rx=0.3)
    assert identify_opportunities((5, 5), (0.1, 0.0), [pu], 4) == frozenset({0, 1, 3})


def test_receiver_near_transmitter():
    pu = PrimaryUser('b', (0.0, 0.1), 'receiver', 1, r_tx=0.3, r_rx=0.5)
    assert identify_opportunities((0.0, 0.0), (5, 5), [pu], 4) == frozenset({0, 2, 3})


def test_inactive_primary_user_is_ignored():
    pu = PrimaryUser('c', (0.0, 0.0), 'receiver', None, r_tx=1.0, r_rx=1.0)
    assert identify_opportunities((0.0, 0.0), (0.0, 0.0), [pu], 2) == frozenset({0, 1})


def test_primary_user_validation():
    with pytest.raises(ValueError):
        PrimaryUser('d', (0.0, 0.0), 'relay', 0, r_tx=1.0, r_rx=1.0)
    with pytest.raises(ValueError):
        PrimaryUser('d', (0.0, 0.0), 'receiver', 0, r_tx=0.0, r_rx=1.0)


@settings(max_examples=100, deadline=None)
@given(
    pus=primary_users,
    tx=st.tuples(st.floats(0, 1), st.floats(0, 1)),
    rx=st.tuples(st.floats(0, 1), st.floats(0, 1)),
)
def test_opportunities_match_reference(pus, tx, rx):
    expected = reference_opportunities(tx, rx, pus, 4)
    assert identify_opportunities(tx, rx, pus, 4) == expected
    if pus:
        assert identify_opportunities(tx, rx, pus[1:], 4) >= identify_opportunities(tx, rx, pus, 4)


def test_fuse_sensing():
    assert fuse_sensing([[False] * 3, [False] * 3], 3).tolist() == [True, True, True]
    assert fuse_sensing([[False, False, True], [False, False, False]], 3).tolist() == [True, True, False]
    assert fuse_sensing([], 3).tolist() == [True, True, True]
    with pytest.raises(ShapeError):
        fuse_sensing([[False, False], [False, False, False]], 3)


@settings(max_examples=50, deadline=None)
@given(observations=st.lists(st.lists(st.booleans(), min_size=4, max_size=4), max_size=5))
def test_fuse_sensing_is_conservative(observations):
    available = fuse_sensing(observations, 4)
    for busy in observations:
        assert not np.any(available & np.array(busy))


# Events
# ======


def test_events_round_trip(tmp_path):
    events = [
        PuArrival(t=1, pu_id='p', channel=2, position=(0.5, 0.5), radius=0.2),
        DemandChange(t=3, sc=0, demand=0),
        SensingReport(t=3, busy=((False, True), (False, False))),
        PuDeparture(t=4, ref='p'),
    ]
    path = tmp_path / 'events.jsonl'
    save_events(events, str(path))
    assert load_events(str(path)) == events


def test_event_from_dict_errors():
    with pytest.raises(EventStreamError):
        event_from_dict({'t': 0, 'kind': 'teleport'})
    with pytest.raises(EventStreamError):
        event_from_dict({'t': -1, 'kind': 'pu_departure', 'ref': 'p'})
    with pytest.raises(EventStreamError, match='channel'):
        event_from_dict({'t': 0, 'kind': 'pu_arrival', 'id': 'p'})


@pytest.mark.parametrize(
    'data',
    [
        {'t': 0, 'kind': 'pu_arrival', 'id': 'p', 'channel': 'x'},
        {'t': 0, 'kind': 'pu_arrival', 'id': 'p', 'channel': 1, 'position': [0.5, 'north'], 'radius': 0.1},
        {'t': 0, 'kind': 'pu_arrival', 'id': 'p', 'channel': 1, 'position': 3, 'radius': 0.1},
        {'t': 0, 'kind': 'demand_change', 'sc': 0, 'demand': 'lots'},
        {'t': 0, 'kind': 'demand_change', 'sc': 0, 'demand': 1.5},
        {'t': 0, 'kind': 'demand_change', 'sc': None, 'demand': 1},
        {'t': 0, 'kind': 'sensing', 'busy': 7},
    ],
)
def test_event_from_dict_rejects_malformed_fields(data):
    with pytest.raises(EventStreamError, match='malformed'):
        event_from_dict(data)


def test_base_event_is_abstract():
    with pytest.raises(TypeError):
        Event(t=0)


def test_load_events_rejects_unordered_stream(tmp_path):
    path = tmp_path / 'events.jsonl'
    path.write_text('{"t": 5, "kind": "pu_departure", "ref": "a"}\n{"t": 2, "kind": "pu_departure", "ref": "b"}\n')
    with pytest.raises(EventStreamError):
        load_events(str(path))


def test_load_empty_events(tmp_path):
    path = tmp_path / 'events.jsonl'
    path.write_text('')
    assert load_events(str(path)) == []
