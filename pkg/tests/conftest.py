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

import numpy as np
import pytest

from som_dsa.model import NetworkInstance


def binary_instance(demand, num_channels, edges):
    """Instance with channel-uniform binary interference on the given SC pairs."""
    S = len(demand)
    interference = np.zeros((S, S, num_channels), dtype=np.int64)
    for n, k in edges:
        interference[n, k, :] = 1
        interference[k, n, :] = 1
    return NetworkInstance(S, num_channels, demand, interference)


@pytest.fixture
def pair_instance():
    """Two mutually interfering SCs, two channels, one channel each."""
    return binary_instance([1, 1], 2, [(0, 1)])


@pytest.fixture
def clique_instance():
    """Three mutually interfering SCs sharing two channels."""
    return binary_instance([1, 1, 1], 2, [(0, 1), (0, 2), (1, 2)])


@pytest.fixture
def quiet_instance():
    """No interference at all."""
    return binary_instance([2, 1, 0], 3, [])
